//! Numerical verification of the envelope theory at computed solutions:
//! criticality-threshold estimation, finite-difference first- and
//! second-order checks of the envelope and the fixed-point residual,
//! Dennis-More ratio tracking, and convergence-rate classification.
//!
//! Everything here is measurement, not optimization: the routines take a
//! problem and a point and report how well the identities that the solver
//! relies on hold numerically at that point.

use ndarray_linalg::{Eigh, Lapack, Scalar, UPLO};

use crate::fbe::{prox_grad_step, ProxGradStep};
use crate::problem::{ExtReal, Problem};
use crate::{norm2, real, Error, Matrix, Real, Result, Vector};

/// Frobenius norm, spelled out to sidestep the `Scalar`/`Float` method
/// ambiguity under the lapack bounds.
fn frobenius<T: Real>(m: &Matrix<T>) -> T {
    num_traits::Float::sqrt(m.iter().fold(T::zero(), |a, v| a + *v * *v))
}

/// Asymptotic behavior of a residual-norm sequence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateClass<T> {
    Sublinear,
    /// Geometric decay with the given contraction factor.
    Linear(T),
    Superlinear,
}

/// Q-factor analysis of a residual-norm sequence.
#[derive(Clone, Debug)]
pub struct RateReport<T> {
    /// Consecutive ratios `e_{k+1} / e_k` over the whole sequence.
    pub q_factors: Vec<T>,
    pub class: RateClass<T>,
    /// Number of trailing Q-factors the classification looked at.
    pub window: usize,
}

/// Classify with the default trailing window of 5 Q-factors.
pub fn classify_rate<T: Real>(residual_norms: &[T]) -> Result<RateReport<T>> {
    classify_rate_with(residual_norms, 5)
}

/// Classify the tail behavior of a residual-norm sequence.
///
/// Requires at least 10 entries below a tenth of the initial norm, so that
/// the tail is actually in the asymptotic regime; errors otherwise.
/// Superlinear means the trailing Q-factors strictly decrease and the last
/// one is below 0.1; a final Q-factor at or above 0.95 (or a rising tail
/// above 0.9) is sublinear; everything else is linear with the geometric
/// mean of the trailing window as the factor.
pub fn classify_rate_with<T: Real>(residual_norms: &[T], window: usize) -> Result<RateReport<T>> {
    if residual_norms.is_empty() || window == 0 {
        return Err(Error::ShortSequence(
            "need a nonempty residual sequence and window".into(),
        ));
    }
    // An exact zero ends the informative part of the sequence.
    let mut seq: Vec<T> = Vec::with_capacity(residual_norms.len());
    for &e in residual_norms {
        if e == T::zero() {
            break;
        }
        if !e.is_finite() || e < T::zero() {
            return Err(Error::ShortSequence(
                "residual norms must be finite and nonnegative".into(),
            ));
        }
        seq.push(e);
    }
    let tenth = seq.first().copied().unwrap_or_else(T::zero) / real(10.0);
    let settled = seq.iter().filter(|&&e| e < tenth).count();
    if settled < 10 {
        return Err(Error::ShortSequence(format!(
            "only {settled} entries fell below a tenth of the initial residual; need 10"
        )));
    }
    let q_factors: Vec<T> = seq.windows(2).map(|w| w[1] / w[0]).collect();
    let w = window.min(q_factors.len());
    let tail = &q_factors[q_factors.len() - w..];
    let last = *tail.last().expect("window is nonempty");
    let decreasing = tail.windows(2).all(|p| p[1] < p[0]);
    let increasing = tail.windows(2).all(|p| p[1] > p[0]);
    let class = if decreasing && last < real(0.1) {
        RateClass::Superlinear
    } else if last >= real(0.95) || (increasing && last > real(0.9)) {
        RateClass::Sublinear
    } else {
        let geomean = tail
            .iter()
            .fold(T::one(), |acc, &q| acc * q)
            .powf(T::one() / real(w as f64));
        RateClass::Linear(geomean)
    };
    Ok(RateReport {
        q_factors,
        class,
        window: w,
    })
}

/// Central-difference probes at `x +- h e_i`, shared by the first- and
/// second-order checks. Each probe is a full prox-grad step, so gradients,
/// residuals, prox points, and envelope values all come along.
struct FdProbes<T: Real> {
    plus: Vec<ProxGradStep<T>>,
    minus: Vec<ProxGradStep<T>>,
    h: T,
}

fn fd_probes<T: Real>(p: &Problem<T>, x: &Vector<T>, gamma: T) -> Result<FdProbes<T>> {
    let h = T::epsilon().cbrt() * (T::one() + norm2(x));
    let n = x.len();
    let mut plus = Vec::with_capacity(n);
    let mut minus = Vec::with_capacity(n);
    for i in 0..n {
        let mut xp = x.clone();
        xp[i] = xp[i] + h;
        plus.push(prox_grad_step(p, &xp, gamma)?);
        let mut xm = x.clone();
        xm[i] = xm[i] - h;
        minus.push(prox_grad_step(p, &xm, gamma)?);
    }
    Ok(FdProbes { plus, minus, h })
}

impl<T: Real> FdProbes<T> {
    /// Symmetrized finite-difference Hessian of f from the probe gradients.
    fn hessian(&self) -> Matrix<T> {
        let n = self.plus.len();
        let two_h = real::<T>(2.0) * self.h;
        let mut m = Matrix::zeros((n, n));
        for (j, (sp, sm)) in self.plus.iter().zip(self.minus.iter()).enumerate() {
            for i in 0..n {
                m[[i, j]] = (sp.grad_f_x[i] - sm.grad_f_x[i]) / two_h;
            }
        }
        let mt = m.t().to_owned();
        (&m + &mt).mapv(|v| v / real(2.0))
    }

    /// Finite-difference Jacobian of the residual map.
    fn jacobian_r(&self) -> Matrix<T> {
        let n = self.plus.len();
        let two_h = real::<T>(2.0) * self.h;
        let mut m = Matrix::zeros((n, n));
        for (j, (sp, sm)) in self.plus.iter().zip(self.minus.iter()).enumerate() {
            for i in 0..n {
                m[[i, j]] = (sp.r[i] - sm.r[i]) / two_h;
            }
        }
        m
    }

    /// Finite-difference gradient of the envelope.
    fn fbe_gradient(&self) -> Vector<T> {
        let two_h = real::<T>(2.0) * self.h;
        Vector::from_iter(
            self.plus
                .iter()
                .zip(self.minus.iter())
                .map(|(sp, sm)| (sp.fbe - sm.fbe) / two_h),
        )
    }

    /// Largest prox-point jump across any probe pair, when it exceeds the
    /// continuity heuristic `10 h lip` with `lip = 2 (1 + gamma L)` and
    /// `gamma L < 1`, i.e. a threshold of `40 h`. A jump marks the probes
    /// straddling a prox discontinuity: the map is multi-valued nearby and
    /// derivative reports there measure the wrong object.
    fn prox_jump(&self) -> Option<T> {
        let threshold = real::<T>(40.0) * self.h;
        let mut worst: Option<T> = None;
        for (sp, sm) in self.plus.iter().zip(self.minus.iter()) {
            let jump = norm2(&(&sp.x_bar - &sm.x_bar));
            if jump > threshold && worst.map_or(true, |w| jump > w) {
                worst = Some(jump);
            }
        }
        worst
    }
}

/// Result of the first-order envelope check.
#[derive(Clone, Debug)]
pub struct GradCheckReport<T: Real> {
    /// `max_i |fd_i - analytic_i| / (1 + max_i |analytic_i|)`.
    pub max_rel_err: T,
    /// Prox discontinuity seen by the probes, if any; the error metric is
    /// unreliable when this is set.
    pub prox_jump: Option<T>,
    pub fd_grad: Vector<T>,
    /// `Q_gamma(x) R_gamma(x)` with `Q_gamma = I - gamma H_f` from the
    /// finite-difference Hessian.
    pub analytic_grad: Vector<T>,
}

/// Check the envelope gradient identity `grad fbe = Q_gamma R_gamma` at `x`
/// by comparing a central-difference gradient of the envelope against the
/// matrix formula. A detected prox discontinuity is reported, not raised.
pub fn fd_gradient_check_fbe<T: Real>(
    p: &Problem<T>,
    x: &Vector<T>,
    gamma: T,
) -> Result<GradCheckReport<T>> {
    let base = prox_grad_step(p, x, gamma)?;
    let probes = fd_probes(p, x, gamma)?;
    let hess = probes.hessian();
    let q_gamma = Matrix::eye(x.len()) - hess.mapv(|v| v * gamma);
    let analytic_grad = q_gamma.dot(&base.r);
    let fd_grad = probes.fbe_gradient();
    let scale = T::one()
        + analytic_grad
            .iter()
            .fold(T::zero(), |acc, v| acc.max(v.abs()));
    let max_rel_err = fd_grad
        .iter()
        .zip(analytic_grad.iter())
        .fold(T::zero(), |acc, (f, a)| acc.max((*f - *a).abs()))
        / scale;
    Ok(GradCheckReport {
        max_rel_err,
        prox_jump: probes.prox_jump(),
        fd_grad,
        analytic_grad,
    })
}

/// Finite-difference second-order data at a critical point.
#[derive(Clone, Debug)]
pub struct SecondOrderReport<T: Real> {
    /// FD Jacobian of the residual map at the point.
    pub j_r: Matrix<T>,
    /// `I - gamma H_f` from the FD Hessian of f.
    pub q_gamma: Matrix<T>,
    /// Envelope Hessian `Q_gamma J_R`.
    pub h_fbe: Matrix<T>,
    /// `||H - H^T||_F / ||H||_F` of the envelope Hessian.
    pub symmetry_defect: T,
    /// Smallest eigenvalue of the symmetrized envelope Hessian; positive at
    /// strong local minima.
    pub min_eig: T,
    /// Prox discontinuity seen by the probes, if any.
    pub prox_jump: Option<T>,
}

/// Build the second-order report at `x_star`, which must be critical:
/// `||R_gamma(x_star)|| <= 1e-8 (1 + ||x_star||)`.
pub fn second_order_report<T>(
    p: &Problem<T>,
    x_star: &Vector<T>,
    gamma: T,
) -> Result<SecondOrderReport<T>>
where
    T: Real + Lapack + Scalar<Real = T>,
{
    let base = prox_grad_step(p, x_star, gamma)?;
    let res = norm2(&base.r);
    let lim = real::<T>(1e-8) * (T::one() + norm2(x_star));
    if res > lim {
        return Err(Error::Precondition(format!(
            "point is not critical: ||R|| = {res} exceeds {lim}"
        )));
    }
    let probes = fd_probes(p, x_star, gamma)?;
    let hess = probes.hessian();
    let q_gamma = Matrix::eye(x_star.len()) - hess.mapv(|v| v * gamma);
    let j_r = probes.jacobian_r();
    let h_fbe = q_gamma.dot(&j_r);
    let ht = h_fbe.t().to_owned();
    let diff_norm = frobenius(&(&h_fbe - &ht));
    let h_norm = frobenius(&h_fbe);
    let symmetry_defect = if h_norm > T::zero() {
        diff_norm / h_norm
    } else {
        T::zero()
    };
    let sym = (&h_fbe + &ht).mapv(|v| v / real(2.0));
    let (eigs, _) = sym
        .eigh(UPLO::Lower)
        .map_err(|e| Error::Linalg(format!("eigendecomposition failed: {e}")))?;
    let min_eig = eigs[0];
    Ok(SecondOrderReport {
        j_r,
        q_gamma,
        h_fbe,
        symmetry_defect,
        min_eig,
        prox_jump: probes.prox_jump(),
    })
}

/// Dennis-More surrogate `||rbar^k + J d^k|| / ||d^k||` per iteration, with
/// `J` the residual Jacobian at the solution. Superlinearly convergent
/// quasi-Newton runs drive it to zero. Zero directions give `None`.
pub fn dennis_more_ratio<T: Real>(
    residuals_bar: &[Vector<T>],
    directions: &[Vector<T>],
    j_r_star: &Matrix<T>,
) -> Vec<Option<T>> {
    residuals_bar
        .iter()
        .zip(directions.iter())
        .map(|(rbar, d)| {
            let dn = norm2(d);
            if dn == T::zero() {
                return None;
            }
            let lin = rbar + &j_r_star.dot(d);
            Some(norm2(&lin) / dn)
        })
        .collect()
}

/// Estimate the criticality threshold `sup { gamma : x in T_gamma(x) }` by
/// bisection over `(0, gamma_max]`, at resolution `gamma_max 2^-40`.
///
/// The membership predicate is `||R_gamma(x)|| <= tol (1 + ||x||)` through
/// the prox oracle's deterministic selection. Normalizing by gamma matters:
/// the raw distance `||x - T_gamma(x)||` vanishes as gamma shrinks at every
/// point, critical or not, while the residual tends to the gradient norm
/// and keeps noncritical points out. Returns 0 when no probe passes;
/// `gamma_max` must stay below the prox-boundedness threshold.
pub fn estimate_criticality_threshold<T: Real>(
    p: &Problem<T>,
    x: &Vector<T>,
    gamma_max: T,
    tol: T,
) -> Result<T> {
    if !(gamma_max > T::zero()) || !gamma_max.is_finite() {
        return Err(Error::GammaOutOfRange(format!(
            "gamma_max must be positive and finite, got {gamma_max}"
        )));
    }
    if let ExtReal::Finite(b) = p.nonsmooth.gamma_bound() {
        if gamma_max >= b {
            return Err(Error::GammaOutOfRange(format!(
                "gamma_max = {gamma_max} must stay below the prox-boundedness threshold {b}"
            )));
        }
    }
    let scale = tol * (T::one() + norm2(x));
    let fixed = |gamma: T| -> Result<bool> {
        match prox_grad_step(p, x, gamma) {
            Ok(step) => Ok(norm2(&step.r) <= scale),
            Err(Error::Nonfinite(_)) => Ok(false),
            Err(e) => Err(e),
        }
    };
    if fixed(gamma_max)? {
        return Ok(gamma_max);
    }
    // The passing set is an interval at zero, so scan down for a bracket,
    // then bisect.
    let half: T = real(0.5);
    let resolution = gamma_max * half.powi(40);
    let mut hi = gamma_max;
    let mut lo = gamma_max * half;
    let mut found = false;
    while lo >= resolution {
        if fixed(lo)? {
            found = true;
            break;
        }
        hi = lo;
        lo = lo * half;
    }
    if !found {
        return Ok(T::zero());
    }
    while hi - lo > resolution {
        let mid = (hi + lo) * half;
        if fixed(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
