//! Analytic problem corpus: composite problems with known minimizers,
//! known optimal values, and exact gradient Lipschitz constants.
//!
//! Every constructor documents why its claimed solution is exact, and the
//! tests re-verify those claims through independent routes (fixed-point
//! residuals, grid scans, finite differences) rather than trusting the
//! construction.

use std::cell::Cell;

use ndarray::{array, Array1, Array2};
use ndarray_linalg::{Solve, QR, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use zerofpr::problem::{
    compose_least_squares, ExtReal, FnSmooth, NonsmoothOracle, Problem, SmoothOracle,
    ZeroOracle,
};
use zerofpr::prox::L1Oracle;
use zerofpr::{MatrixF64, ProblemF64, VectorF64};

use crate::SeedSplitter;

/// A composite problem together with whatever ground truth is available.
pub struct AnalyticProblem {
    pub problem: ProblemF64,
    /// A global minimizer, when one is known exactly. When present it must
    /// be a fixed point of the prox-gradient map at `gamma = 0.5 / known_l_f`
    /// to ten digits; the tests enforce this for every fixture.
    pub known_minimizer: Option<VectorF64>,
    pub known_min_value: Option<f64>,
    /// Exact Lipschitz constant of the smooth gradient.
    pub known_l_f: f64,
    pub description: String,
}

/// A quadratic fixture keeps its matrix and right-hand side alongside the
/// oracle form so tests can check second-order claims against `Q` directly.
pub struct QuadraticInstance {
    pub analytic: AnalyticProblem,
    pub q: MatrixF64,
    pub b: VectorF64,
}

/// Dense quadratic `f(x) = x^T Q x / 2 - b^T x`, gradient `Q x - b`.
/// One matvec per eval; the value reuses the gradient's product.
pub struct QuadraticOracle {
    q: MatrixF64,
    b: VectorF64,
    evals: Cell<u64>,
    matvecs: Cell<u64>,
}

impl QuadraticOracle {
    pub fn new(q: MatrixF64, b: VectorF64) -> Self {
        assert_eq!(q.nrows(), q.ncols());
        assert_eq!(q.nrows(), b.len());
        QuadraticOracle {
            q,
            b,
            evals: Cell::new(0),
            matvecs: Cell::new(0),
        }
    }
}

impl SmoothOracle<f64> for QuadraticOracle {
    fn eval(&self, x: &VectorF64) -> (f64, VectorF64) {
        self.evals.set(self.evals.get() + 1);
        self.matvecs.set(self.matvecs.get() + 1);
        let qx = self.q.dot(x);
        let value = 0.5 * x.dot(&qx) - self.b.dot(x);
        (value, qx - &self.b)
    }

    fn eval_count(&self) -> u64 {
        self.evals.get()
    }

    fn matvec_count(&self) -> u64 {
        self.matvecs.get()
    }
}

/// Smooth quadratic with prescribed condition number and `g == 0`.
///
/// `Q = V diag(eigs) V^T` with `V` the orthogonal factor of a Gaussian
/// matrix and eigenvalues log-spaced in `[1/condition, 1]`, so the gradient
/// Lipschitz constant is exactly 1 and the minimizer solves `Q x = b`.
pub fn make_quadratic(n: usize, condition: f64, seed: u64) -> QuadraticInstance {
    assert!(n >= 1, "dimension must be positive");
    assert!(condition >= 1.0, "condition number must be at least 1");
    let split = SeedSplitter::new(seed);

    let mut rng = split.stream(0);
    let raw: Vec<f64> = (0..n * n).map(|_| rng.sample(StandardNormal)).collect();
    let gauss = Array2::from_shape_vec((n, n), raw).expect("n*n entries");
    let (v, _) = gauss.qr().expect("QR of a square Gaussian matrix");

    let eigs: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                condition.powf(-(1.0 - i as f64 / (n - 1) as f64))
            }
        })
        .collect();
    let mut vd = v.clone();
    for (j, mut col) in vd.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|t| t * eigs[j]);
    }
    let q = vd.dot(&v.t());
    // symmetrize against factorization roundoff so eigensolvers downstream
    // see an exactly symmetric matrix
    let q = (&q + &q.t()).mapv(|t| 0.5 * t);

    let mut rng_b = split.stream(1);
    let b = Array1::from((0..n).map(|_| rng_b.sample(StandardNormal)).collect::<Vec<f64>>());
    let xstar = q.solve(&b).expect("Q is positive definite");
    let min_value = 0.5 * xstar.dot(&q.dot(&xstar)) - b.dot(&xstar);

    let problem = Problem::new(
        Box::new(QuadraticOracle::new(q.clone(), b.clone())),
        Box::new(ZeroOracle::new()),
        n,
        Some(1.0),
    );
    let analytic = AnalyticProblem {
        problem,
        known_minimizer: Some(xstar),
        known_min_value: Some(min_value),
        known_l_f: 1.0,
        description: format!("quadratic n={n} condition={condition} seed={seed}"),
    };
    QuadraticInstance { analytic, q, b }
}

/// Random lasso `(1/2)||A x - b||^2 + lambda ||x||_1` with a planted
/// strictly complementary solution.
///
/// Requires `m >= n` so `A^T A` is invertible. The construction plants a
/// sparse `x*`, picks a subgradient `v` with `v_i = sign(x*_i)` on the
/// support and `|v_i| <= 0.8` off it, and solves for the residual `rho`
/// with `A^T rho = -lambda v`; then `b = A x* - rho` makes `x*` stationary.
/// Convexity upgrades stationarity to global optimality, and the strict
/// 0.8 margin keeps the solution's support identifiable in finitely many
/// prox-gradient steps.
pub fn make_lasso(m: usize, n: usize, lambda: f64, seed: u64) -> AnalyticProblem {
    assert!(n >= 1 && m >= n, "need m >= n >= 1 for a planted solution");
    assert!(lambda > 0.0, "lambda must be positive");
    let split = SeedSplitter::new(seed);

    let mut rng_a = split.stream(0);
    let raw: Vec<f64> = (0..m * n).map(|_| rng_a.sample(StandardNormal)).collect();
    let a = Array2::from_shape_vec((m, n), raw).expect("m*n entries");

    let mut rng_sup = split.stream(1);
    let s = (n / 4).clamp(1, 10);
    let support = rand::seq::index::sample(&mut rng_sup, n, s);
    let mut xstar: VectorF64 = Array1::zeros(n);
    for idx in support.iter() {
        let magnitude = 1.0 + rng_sup.random::<f64>();
        let sign = if rng_sup.random::<bool>() { 1.0 } else { -1.0 };
        xstar[idx] = sign * magnitude;
    }
    let mut v: VectorF64 = Array1::zeros(n);
    for j in 0..n {
        v[j] = if xstar[j] != 0.0 {
            xstar[j].signum()
        } else {
            0.8 * (2.0 * rng_sup.random::<f64>() - 1.0)
        };
    }

    let ata = a.t().dot(&a);
    let w = ata.solve(&v).expect("A^T A invertible when m >= n");
    let rho = a.dot(&w).mapv(|t| -lambda * t);
    let b = &a.dot(&xstar) - &rho;

    let (_, sigma, _) = a.svd(false, false).expect("SVD of A");
    let l = sigma[0] * sigma[0];
    let min_value = 0.5 * rho.dot(&rho) + lambda * xstar.iter().map(|t| t.abs()).sum::<f64>();

    let ls = compose_least_squares(a, b).expect("shapes agree by construction");
    let problem = Problem::new(Box::new(ls), Box::new(L1Oracle::new(lambda)), n, Some(l));
    AnalyticProblem {
        problem,
        known_minimizer: Some(xstar),
        known_min_value: Some(min_value),
        known_l_f: l,
        description: format!("lasso m={m} n={n} lambda={lambda} seed={seed}"),
    }
}

/// Indicator of the two-point set `{-1, +1}` on the line. The prox snaps to
/// the nearest point and breaks the tie at zero toward `+1`, making the
/// origin's prox single valued by selection even though the underlying map
/// is set valued there.
pub struct TwoPointOracle {
    count: Cell<u64>,
}

impl TwoPointOracle {
    pub fn new() -> Self {
        TwoPointOracle {
            count: Cell::new(0),
        }
    }
}

impl Default for TwoPointOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl NonsmoothOracle<f64> for TwoPointOracle {
    fn prox(&self, x: &VectorF64, _gamma: f64) -> (VectorF64, f64) {
        debug_assert_eq!(x.len(), 1);
        self.count.set(self.count.get() + 1);
        let z = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        (array![z], 0.0)
    }

    fn value(&self, x: &VectorF64) -> ExtReal<f64> {
        debug_assert_eq!(x.len(), 1);
        let t = x[0];
        let tol = f64::EPSILON.sqrt() * (1.0 + t.abs());
        if (t - 1.0).abs() <= tol || (t + 1.0).abs() <= tol {
            ExtReal::Finite(0.0)
        } else {
            ExtReal::PosInf
        }
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// `(1/2) x^2` plus the indicator of `{-1, +1}`.
///
/// Both points are global minimizers with value 1/2. The fixture exercises
/// genuinely set-valued prox behavior: at the origin the indicator's prox
/// holds both points, and the envelope is nonsmooth across the tie line.
pub fn make_two_point_indicator() -> AnalyticProblem {
    let smooth = FnSmooth::new(|x: &VectorF64| (0.5 * x[0] * x[0], array![x[0]]));
    let problem = Problem::new(
        Box::new(smooth),
        Box::new(TwoPointOracle::new()),
        1,
        Some(1.0),
    );
    AnalyticProblem {
        problem,
        known_minimizer: Some(array![1.0]),
        known_min_value: Some(0.5),
        known_l_f: 1.0,
        description: "half square plus two-point indicator".to_string(),
    }
}

/// `|z|^{2/3}` computed as `cbrt(z^2)`, which is exact for negatives and
/// avoids `powf` domain issues.
fn abs_pow_two_thirds(z: f64) -> f64 {
    (z * z).cbrt()
}

/// `sign(z) |z|^{5/3} = z * |z|^{2/3}`.
fn signed_pow_five_thirds(z: f64) -> f64 {
    z * abs_pow_two_thirds(z)
}

/// Bisection for a root of `f` on `[lo, hi]`; the endpoint signs must
/// differ (an exact zero counts as a root). Resolves to ulp adjacency.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    debug_assert!(flo * f(hi) < 0.0, "bracket must straddle a root");
    let sign_lo = flo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if fm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One point of `prox_{gamma g}(u)` for `g(z) = sign(z)|z|^{5/3}`.
///
/// `g` is C^1, so prox candidates are exactly the roots of
/// `F(z) = z + (5 gamma / 3)|z|^{2/3} - u`. On `z > 0` the map is strictly
/// increasing with one root iff `u > 0`; on `z < 0` it rises from minus
/// infinity to a local maximum `t0/2 - u` at `z = -t0`, `t0 = (10 gamma/9)^3`,
/// then falls to `-u`, giving up to two negative roots when `u <= t0/2`.
/// The prox point is the candidate with the smallest objective; ties break
/// toward the first candidate in (positive, inner, outer) order. At `u = 0`
/// the winner is known in closed form: `-(5 gamma / 3)^3`, strictly better
/// than the stationary origin.
fn prox_power_five_thirds(u: f64, gamma: f64) -> f64 {
    let c = 5.0 * gamma / 3.0;
    if u == 0.0 {
        return -(c * c * c);
    }
    let t0 = {
        let s = 10.0 * gamma / 9.0;
        s * s * s
    };
    let foc = |z: f64| z + c * abs_pow_two_thirds(z) - u;
    let objective =
        |z: f64| signed_pow_five_thirds(z) + (z - u) * (z - u) / (2.0 * gamma);

    let mut candidates: Vec<f64> = Vec::with_capacity(3);
    if u > 0.0 {
        candidates.push(bisect(&foc, 0.0, u));
    }
    if u <= 0.5 * t0 {
        if u > 0.0 {
            candidates.push(bisect(&foc, -t0, 0.0));
        }
        let mut lo = -2.0 * t0.max(1.0);
        for _ in 0..200 {
            if foc(lo) <= 0.0 {
                break;
            }
            lo *= 2.0;
        }
        candidates.push(bisect(&foc, lo, -t0));
    }

    let mut best = candidates[0];
    let mut best_val = objective(best);
    for &z in &candidates[1..] {
        let val = objective(z);
        if val < best_val {
            best = z;
            best_val = val;
        }
    }
    best
}

/// Signed power `g(z) = sign(z) |z|^{5/3}` on the line: nonconvex, C^1,
/// prox-bounded for every step size, with a genuinely multivalued prox
/// region. Prox points are computed by safeguarded bisection on the
/// first-order condition followed by objective comparison.
pub struct PowerFiveThirdsOracle {
    count: Cell<u64>,
}

impl PowerFiveThirdsOracle {
    pub fn new() -> Self {
        PowerFiveThirdsOracle {
            count: Cell::new(0),
        }
    }
}

impl Default for PowerFiveThirdsOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl NonsmoothOracle<f64> for PowerFiveThirdsOracle {
    fn prox(&self, x: &VectorF64, gamma: f64) -> (VectorF64, f64) {
        debug_assert_eq!(x.len(), 1);
        self.count.set(self.count.get() + 1);
        let z = prox_power_five_thirds(x[0], gamma);
        (array![z], signed_pow_five_thirds(z))
    }

    fn value(&self, x: &VectorF64) -> ExtReal<f64> {
        debug_assert_eq!(x.len(), 1);
        ExtReal::Finite(signed_pow_five_thirds(x[0]))
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// `(1/2) x^2 + sign(x) |x|^{5/3}`: a smooth-plus-nonconvex scalar problem
/// whose unique global minimizer is `x* = -125/27` with value `-3125/1458`.
///
/// On the negative axis the objective is `t^2/2 - t^{5/3}` in `t = |x|`,
/// stationary at `t^{1/3} = 5/3` with positive curvature there; the
/// positive axis and origin are strictly worse.
pub fn make_power_five_thirds() -> AnalyticProblem {
    let smooth = FnSmooth::new(|x: &VectorF64| (0.5 * x[0] * x[0], array![x[0]]));
    let problem = Problem::new(
        Box::new(smooth),
        Box::new(PowerFiveThirdsOracle::new()),
        1,
        Some(1.0),
    );
    AnalyticProblem {
        problem,
        known_minimizer: Some(array![-125.0 / 27.0]),
        known_min_value: Some(-3125.0 / 1458.0),
        known_l_f: 1.0,
        description: "half square plus signed five-thirds power".to_string(),
    }
}
