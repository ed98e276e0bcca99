//! Problem abstraction: smooth and nonsmooth oracles with evaluation
//! counters, extended-real values, and the composite problem record.
//!
//! A composite problem is `phi(x) = f(x) + g(x)` with `f` smooth (Lipschitz
//! gradient, constant possibly unknown) and `g` proper, closed, prox-bounded.
//! Oracles are counted: solvers report per-run evaluation totals by
//! differencing the cumulative counters, so implementations must increment
//! them on every call.

use std::cell::Cell;
use std::cmp::Ordering;
use std::marker::PhantomData;

use crate::{real, Error, Matrix, Real, Result, Vector};

/// Extended-real value: finite or plus infinity.
///
/// Nonconvex `g` routinely takes the value plus infinity (indicators, domain
/// constraints). No arithmetic is implemented on purpose; call sites match on
/// the variants so every infinity is handled explicitly rather than smuggled
/// through IEEE semantics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtReal<T> {
    Finite(T),
    PosInf,
}

impl<T: Real> ExtReal<T> {
    /// The finite payload, if any.
    pub fn finite(self) -> Option<T> {
        match self {
            ExtReal::Finite(v) => Some(v),
            ExtReal::PosInf => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// Unwrap a value the caller has proven finite; `what` names it in the
    /// panic message.
    pub fn expect_finite(self, what: &str) -> T {
        match self {
            ExtReal::Finite(v) => v,
            ExtReal::PosInf => panic!("{what} must be finite"),
        }
    }
}

impl<T: Real> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => a.partial_cmp(b),
            (ExtReal::Finite(_), ExtReal::PosInf) => Some(Ordering::Less),
            (ExtReal::PosInf, ExtReal::Finite(_)) => Some(Ordering::Greater),
            (ExtReal::PosInf, ExtReal::PosInf) => Some(Ordering::Equal),
        }
    }
}

/// Smooth term oracle: value and gradient in one call.
///
/// The pairing is deliberate; every consumer in the crate needs both, and a
/// split interface would double the evaluation count for matrix-backed
/// oracles.
pub trait SmoothOracle<T: Real> {
    /// `(f(x), grad f(x))`.
    fn eval(&self, x: &Vector<T>) -> (T, Vector<T>);

    /// Cumulative number of `eval` calls.
    fn eval_count(&self) -> u64;

    /// Cumulative matrix-vector products, for oracles built from an explicit
    /// matrix. Oracles without a natural matvec notion report zero.
    fn matvec_count(&self) -> u64 {
        0
    }
}

/// Nonsmooth term oracle.
///
/// `prox` returns one deterministic selection from the (possibly set-valued)
/// proximal map together with `g` evaluated at that point; the `g` value
/// comes for free from the prox computation and spares an extended-real
/// evaluation at a point known to be feasible.
pub trait NonsmoothOracle<T: Real> {
    /// One point of `prox_{gamma g}(x)` and `g` at that point.
    ///
    /// Callers must keep `gamma` strictly below [`gamma_bound`]; the entry
    /// points in [`crate::fbe`] validate this and return an error, so a
    /// violation here is a crate bug and implementations may panic.
    ///
    /// [`gamma_bound`]: NonsmoothOracle::gamma_bound
    fn prox(&self, x: &Vector<T>, gamma: T) -> (Vector<T>, T);

    /// `g(x)`, possibly plus infinity.
    fn value(&self, x: &Vector<T>) -> ExtReal<T>;

    /// Prox-boundedness threshold `gamma_g`: prox is well defined for every
    /// `gamma` strictly below it.
    fn gamma_bound(&self) -> ExtReal<T> {
        ExtReal::PosInf
    }

    /// Cumulative number of `prox` calls.
    fn prox_count(&self) -> u64;
}

/// Composite minimization problem `min_x f(x) + g(x)`.
pub struct Problem<T: Real> {
    pub smooth: Box<dyn SmoothOracle<T>>,
    pub nonsmooth: Box<dyn NonsmoothOracle<T>>,
    pub dim: usize,
    /// Known Lipschitz constant of `grad f`, if any; solvers estimate one
    /// otherwise.
    pub lipschitz: Option<T>,
}

impl<T: Real> Problem<T> {
    pub fn new(
        smooth: Box<dyn SmoothOracle<T>>,
        nonsmooth: Box<dyn NonsmoothOracle<T>>,
        dim: usize,
        lipschitz: Option<T>,
    ) -> Self {
        Problem {
            smooth,
            nonsmooth,
            dim,
            lipschitz,
        }
    }

    /// `phi(x) = f(x) + g(x)` as an extended real. Costs one smooth eval and
    /// one nonsmooth value query.
    pub fn phi(&self, x: &Vector<T>) -> ExtReal<T> {
        let (fx, _) = self.smooth.eval(x);
        match self.nonsmooth.value(x) {
            ExtReal::Finite(gx) => ExtReal::Finite(fx + gx),
            ExtReal::PosInf => ExtReal::PosInf,
        }
    }
}

/// Least-squares smooth term `f(x) = (1/2) ||A x - b||^2`.
///
/// Gradient `A^T (A x - b)`; each eval performs exactly two matrix-vector
/// products and bumps the matvec counter accordingly.
pub struct LeastSquares<T: Real> {
    a: Matrix<T>,
    b: Vector<T>,
    evals: Cell<u64>,
    matvecs: Cell<u64>,
}

/// Build the least-squares oracle, checking that `A` and `b` agree on the
/// number of rows.
pub fn compose_least_squares<T: Real>(a: Matrix<T>, b: Vector<T>) -> Result<LeastSquares<T>> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "A has {} rows but b has {} entries",
            a.nrows(),
            b.len()
        )));
    }
    Ok(LeastSquares {
        a,
        b,
        evals: Cell::new(0),
        matvecs: Cell::new(0),
    })
}

impl<T: Real> LeastSquares<T> {
    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn rhs(&self) -> &Vector<T> {
        &self.b
    }
}

impl<T: Real> SmoothOracle<T> for LeastSquares<T> {
    fn eval(&self, x: &Vector<T>) -> (T, Vector<T>) {
        debug_assert_eq!(x.len(), self.a.ncols());
        let r = self.a.dot(x) - &self.b;
        let grad = self.a.t().dot(&r);
        self.evals.set(self.evals.get() + 1);
        self.matvecs.set(self.matvecs.get() + 2);
        let half: T = real(0.5);
        (half * r.dot(&r), grad)
    }

    fn eval_count(&self) -> u64 {
        self.evals.get()
    }

    fn matvec_count(&self) -> u64 {
        self.matvecs.get()
    }
}

/// Smooth oracle wrapping a closure that returns `(value, gradient)`.
///
/// The workhorse for analytic test problems; counts evaluations like any
/// other oracle and reports no matvecs.
pub struct FnSmooth<T, F>
where
    F: Fn(&Vector<T>) -> (T, Vector<T>),
{
    f: F,
    evals: Cell<u64>,
    _scalar: PhantomData<T>,
}

impl<T: Real, F: Fn(&Vector<T>) -> (T, Vector<T>)> FnSmooth<T, F> {
    pub fn new(f: F) -> Self {
        FnSmooth {
            f,
            evals: Cell::new(0),
            _scalar: PhantomData,
        }
    }
}

impl<T: Real, F: Fn(&Vector<T>) -> (T, Vector<T>)> SmoothOracle<T> for FnSmooth<T, F> {
    fn eval(&self, x: &Vector<T>) -> (T, Vector<T>) {
        self.evals.set(self.evals.get() + 1);
        (self.f)(x)
    }

    fn eval_count(&self) -> u64 {
        self.evals.get()
    }
}

/// The zero function `g == 0`: prox is the identity for every step size.
/// Reduces the composite problem to smooth minimization.
pub struct ZeroOracle {
    count: Cell<u64>,
}

impl ZeroOracle {
    pub fn new() -> Self {
        ZeroOracle {
            count: Cell::new(0),
        }
    }
}

impl Default for ZeroOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> NonsmoothOracle<T> for ZeroOracle {
    fn prox(&self, x: &Vector<T>, _gamma: T) -> (Vector<T>, T) {
        self.count.set(self.count.get() + 1);
        (x.clone(), T::zero())
    }

    fn value(&self, _x: &Vector<T>) -> ExtReal<T> {
        ExtReal::Finite(T::zero())
    }

    fn prox_count(&self) -> u64 {
        self.count.get()
    }
}

/// Moreau envelope `g^gamma(x) = min_z { g(z) + ||z - x||^2 / (2 gamma) }`,
/// computed through the prox oracle: with `z* = prox_{gamma g}(x)`,
/// `g^gamma(x) = g(z*) + ||z* - x||^2 / (2 gamma)`.
pub fn moreau_envelope<T: Real>(
    g: &dyn NonsmoothOracle<T>,
    x: &Vector<T>,
    gamma: T,
) -> Result<T> {
    validate_gamma(gamma, g.gamma_bound())?;
    let (z, g_z) = g.prox(x, gamma);
    let diff = &z - x;
    let two: T = real(2.0);
    Ok(g_z + diff.dot(&diff) / (two * gamma))
}

/// Shared step-size precondition: `0 < gamma < gamma_g`.
pub(crate) fn validate_gamma<T: Real>(gamma: T, bound: ExtReal<T>) -> Result<()> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::GammaOutOfRange(format!(
            "gamma = {gamma} must be positive and finite"
        )));
    }
    if let ExtReal::Finite(b) = bound {
        if gamma >= b {
            return Err(Error::GammaOutOfRange(format!(
                "gamma = {gamma} must stay below the prox-boundedness threshold {b}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    /// Indicator of the two-point set {-1, +1}; prox snaps to the nearest
    /// point, ties at zero break toward +1.
    struct TwoPoint {
        count: Cell<u64>,
    }

    impl NonsmoothOracle<f64> for TwoPoint {
        fn prox(&self, x: &Vector<f64>, _gamma: f64) -> (Vector<f64>, f64) {
            self.count.set(self.count.get() + 1);
            let z = x.mapv(|v| if v >= 0.0 { 1.0 } else { -1.0 });
            (z, 0.0)
        }

        fn value(&self, x: &Vector<f64>) -> ExtReal<f64> {
            if x.iter().all(|&v| v == 1.0 || v == -1.0) {
                ExtReal::Finite(0.0)
            } else {
                ExtReal::PosInf
            }
        }

        fn prox_count(&self) -> u64 {
            self.count.get()
        }
    }

    #[test]
    fn ext_real_orders_finite_below_infinity() {
        let a = ExtReal::Finite(3.0);
        let b = ExtReal::Finite(5.0);
        assert!(a < b);
        assert!(a < ExtReal::PosInf);
        assert!(ExtReal::<f64>::PosInf <= ExtReal::PosInf);
        assert_eq!(ExtReal::<f64>::PosInf, ExtReal::PosInf);
        assert_eq!(a.finite(), Some(3.0));
        assert_eq!(ExtReal::<f64>::PosInf.finite(), None);
    }

    #[test]
    fn least_squares_identity_at_ones() {
        // A = I, b = 0: f(x) = ||x||^2 / 2, grad f(x) = x.
        let ls = compose_least_squares(Matrix::eye(2), array![0.0, 0.0]).unwrap();
        let (v, g) = ls.eval(&array![1.0, 1.0]);
        assert_eq!(v, 1.0);
        assert_eq!(g, array![1.0, 1.0]);
        assert_eq!(ls.eval_count(), 1);
        // Two matvecs per eval: A x and A^T r.
        assert_eq!(ls.matvec_count(), 2);
    }

    #[test]
    fn least_squares_rejects_shape_mismatch() {
        let err = compose_least_squares::<f64>(Matrix::eye(2), array![0.0, 0.0, 0.0]);
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn least_squares_gradient_matches_central_differences() {
        let a = array![[1.0, -2.0], [0.5, 3.0], [-1.5, 0.25]];
        let b = array![0.3, -0.7, 1.1];
        let ls = compose_least_squares(a, b).unwrap();
        let x = array![0.4, -0.9];
        let (_, grad) = ls.eval(&x);
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let (fp, _) = ls.eval(&xp);
            let (fm, _) = ls.eval(&xm);
            let fd = (fp - fm) / (2.0 * h);
            assert_relative_eq!(grad[i], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn moreau_envelope_of_two_point_indicator() {
        // At x = 0 with gamma = 1 the nearest point of {-1, +1} is one unit
        // away, so the envelope value is 1 / (2 * 1) = 1/2.
        let g = TwoPoint {
            count: Cell::new(0),
        };
        let v = moreau_envelope(&g as &dyn NonsmoothOracle<f64>, &array![0.0], 1.0).unwrap();
        assert_eq!(v, 0.5);
        assert_eq!(NonsmoothOracle::<f64>::prox_count(&g), 1);
    }

    #[test]
    fn moreau_envelope_rejects_bad_gamma() {
        let g = ZeroOracle::new();
        let x = array![1.0];
        assert!(matches!(
            moreau_envelope(&g as &dyn NonsmoothOracle<f64>, &x, 0.0),
            Err(Error::GammaOutOfRange(_))
        ));
        assert!(matches!(
            moreau_envelope(&g as &dyn NonsmoothOracle<f64>, &x, -1.0),
            Err(Error::GammaOutOfRange(_))
        ));
    }

    #[test]
    fn zero_oracle_prox_is_identity() {
        let g = ZeroOracle::new();
        let x = array![1.0, -2.0, 3.0];
        let (z, gz) = NonsmoothOracle::<f64>::prox(&g, &x, 0.7);
        assert_eq!(z, x);
        assert_eq!(gz, 0.0);
        assert_eq!(
            NonsmoothOracle::<f64>::value(&g, &x),
            ExtReal::Finite(0.0)
        );
    }

    #[test]
    fn problem_phi_adds_terms_and_propagates_infinity() {
        let smooth = FnSmooth::new(|x: &Vector<f64>| (x[0] * x[0] / 2.0, array![x[0]]));
        let p = Problem::new(
            Box::new(smooth),
            Box::new(TwoPoint {
                count: Cell::new(0),
            }),
            1,
            Some(1.0),
        );
        assert_eq!(p.phi(&array![1.0]), ExtReal::Finite(0.5));
        assert_eq!(p.phi(&array![0.3]), ExtReal::PosInf);
    }
}
