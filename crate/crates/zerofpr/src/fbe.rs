//! Forward-backward step machinery: the prox-gradient map, its residual, the
//! forward-backward envelope, and the adaptive Lipschitz/step-size manager.
//!
//! The envelope is evaluated through the Moreau-envelope identity
//! `g^gamma(u) = g(x_bar) + ||u - x_bar||^2 / (2 gamma)` at `u = x - gamma
//! grad f(x)`, so one smooth eval plus one prox eval yields the step point,
//! the residual, and the envelope value together.

use crate::problem::{validate_gamma, ExtReal, Problem};
use crate::{norm2, norm2_sq, real, Error, Real, Result, Vector};

/// One forward-backward step at `x` with every derived quantity cached.
#[derive(Clone, Debug)]
pub struct ProxGradStep<T: Real> {
    /// Base point.
    pub x: Vector<T>,
    /// `f(x)`.
    pub f_x: T,
    /// `grad f(x)`.
    pub grad_f_x: Vector<T>,
    /// The selected point of `T_gamma(x) = prox_{gamma g}(x - gamma grad f(x))`.
    pub x_bar: Vector<T>,
    /// `g(x_bar)`, finite by construction.
    pub g_xbar: T,
    /// Forward-backward residual `(x - x_bar) / gamma`.
    pub r: Vector<T>,
    /// Envelope value `phi_gamma(x)`.
    pub fbe: T,
    /// Step size the record was computed at.
    pub gamma: T,
}

/// Evaluate one forward-backward step at `x`.
///
/// Costs exactly one smooth eval and one prox eval. Requires `0 < gamma <
/// gamma_g`; note this is weaker than the solver requirement `gamma < 1/L`,
/// so the map stays probe-able at large steps for criticality diagnostics.
pub fn prox_grad_step<T: Real>(
    p: &Problem<T>,
    x: &Vector<T>,
    gamma: T,
) -> Result<ProxGradStep<T>> {
    validate_gamma(gamma, p.nonsmooth.gamma_bound())?;
    if x.len() != p.dim {
        return Err(Error::Dimension(format!(
            "point has {} entries, problem dimension is {}",
            x.len(),
            p.dim
        )));
    }
    let (f_x, grad_f_x) = p.smooth.eval(x);
    if !f_x.is_finite() || grad_f_x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Nonfinite(format!(
            "smooth oracle returned a nonfinite value or gradient at x (f = {f_x})"
        )));
    }
    let u = x - &(&grad_f_x * gamma);
    let (x_bar, g_xbar) = p.nonsmooth.prox(&u, gamma);
    let diff = &u - &x_bar;
    let two: T = real(2.0);
    // phi_gamma(x) = f(x) - (gamma/2)||grad||^2 + g(x_bar) + ||u - x_bar||^2/(2 gamma)
    let fbe =
        f_x - gamma / two * norm2_sq(&grad_f_x) + g_xbar + norm2_sq(&diff) / (two * gamma);
    if !fbe.is_finite() {
        return Err(Error::Nonfinite(format!(
            "envelope value is nonfinite (g at prox point = {g_xbar})"
        )));
    }
    let r = (x - &x_bar).mapv(|v| v / gamma);
    Ok(ProxGradStep {
        x: x.clone(),
        f_x,
        grad_f_x,
        x_bar,
        g_xbar,
        r,
        fbe,
        gamma,
    })
}

/// Check the descent-lemma bound at the latest step:
/// `f(x_bar) <= f(x) - <grad f(x), x - x_bar> + (L/2) ||x - x_bar||^2`.
///
/// Returns true iff the bound holds (no backtrack needed). Costs one smooth
/// eval, gradient discarded. The comparison carries a small scale-aware slack
/// so the exact-quadratic equality case does not flap on rounding.
pub fn check_quadratic_bound<T: Real>(step: &ProxGradStep<T>, p: &Problem<T>, l: T) -> bool {
    let (f_xbar, _) = p.smooth.eval(&step.x_bar);
    let dx = &step.x - &step.x_bar;
    let two: T = real(2.0);
    let rhs = step.f_x - step.grad_f_x.dot(&dx) + l / two * norm2_sq(&dx);
    let slack = real::<T>(32.0)
        * T::epsilon().powf(real(0.75))
        * (T::one() + step.f_x.abs() + rhs.abs());
    f_xbar <= rhs + slack
}

/// Joint Lipschitz/step-size state for one solver run.
///
/// Maintains `gamma < min(1/L, gamma_g)` and `sigma < gamma (1 - gamma L)/2`
/// at all times; `backtrack` rescales the triple so that `gamma * L` is
/// invariant, which preserves the sigma headroom symbolically.
#[derive(Clone, Debug)]
pub struct GammaManager<T: Real> {
    pub l: T,
    pub gamma: T,
    pub sigma: T,
    pub alpha: T,
    pub gamma_fraction: T,
    pub adjustments: usize,
    pub max_adjustments: usize,
}

impl<T: Real> GammaManager<T> {
    /// Build from a curvature estimate: `gamma = fraction * min(1/L,
    /// gamma_g)` and `sigma` at the midpoint of its allowed interval,
    /// `0.5 * gamma (1 - gamma L) / 2`.
    pub fn from_fraction(
        l: T,
        gamma_bound: ExtReal<T>,
        fraction: T,
        alpha: T,
        max_adjustments: usize,
    ) -> Result<Self> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz estimate must be positive and finite, got {l}"
            )));
        }
        if !(fraction > T::zero() && fraction < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "gamma fraction must lie in (0,1), got {fraction}"
            )));
        }
        let cap = match gamma_bound {
            ExtReal::Finite(b) => (T::one() / l).min(b),
            ExtReal::PosInf => T::one() / l,
        };
        let gamma = fraction * cap;
        Self::from_gamma(gamma, l, gamma_bound, alpha, max_adjustments)
    }

    /// Build from an explicit step size, validating the solver requirement
    /// `gamma < min(1/L, gamma_g)`.
    pub fn from_gamma(
        gamma: T,
        l: T,
        gamma_bound: ExtReal<T>,
        alpha: T,
        max_adjustments: usize,
    ) -> Result<Self> {
        if !(l > T::zero()) || !l.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "Lipschitz estimate must be positive and finite, got {l}"
            )));
        }
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "backtrack ratio must lie in (0,1), got {alpha}"
            )));
        }
        validate_gamma(gamma, gamma_bound)?;
        if gamma >= T::one() / l {
            return Err(Error::GammaOutOfRange(format!(
                "gamma = {gamma} must stay below 1/L = {}",
                T::one() / l
            )));
        }
        let sigma = default_sigma(gamma, l);
        Ok(GammaManager {
            l,
            gamma,
            sigma,
            alpha,
            gamma_fraction: gamma * l,
            adjustments: 0,
            max_adjustments,
        })
    }

    /// Replace sigma, keeping it inside `(0, gamma (1 - gamma L)/2)`.
    pub fn set_sigma(&mut self, sigma: T) -> Result<()> {
        let two: T = real(2.0);
        let upper = self.gamma * (T::one() - self.gamma * self.l) / two;
        if !(sigma > T::zero() && sigma < upper) {
            return Err(Error::InvalidConfig(format!(
                "sigma = {sigma} must lie in (0, {upper})"
            )));
        }
        self.sigma = sigma;
        Ok(())
    }

    /// One backtrack: `L <- L/alpha`, `gamma <- alpha gamma`,
    /// `sigma <- alpha sigma`. Errors once the adjustment cap is exceeded,
    /// which signals a non-Lipschitz or inconsistent smooth oracle.
    pub fn backtrack(&mut self) -> Result<()> {
        if self.adjustments >= self.max_adjustments {
            return Err(Error::GammaAdjustmentCap(self.max_adjustments));
        }
        self.l = self.l / self.alpha;
        self.gamma = self.gamma * self.alpha;
        self.sigma = self.sigma * self.alpha;
        self.adjustments += 1;
        Ok(())
    }
}

/// Midpoint of the allowed sigma interval `(0, gamma (1 - gamma L)/2)`.
pub fn default_sigma<T: Real>(gamma: T, l: T) -> T {
    let two: T = real(2.0);
    real::<T>(0.5) * gamma * (T::one() - gamma * l) / two
}

/// Pure-style backtrack mirroring [`GammaManager::backtrack`].
pub fn gamma_backtrack<T: Real>(mgr: &GammaManager<T>) -> Result<GammaManager<T>> {
    let mut next = mgr.clone();
    next.backtrack()?;
    Ok(next)
}

/// Directional curvature estimate for `grad f` at `x0`:
/// `||grad f(x0 + delta e) - grad f(x0)|| / delta` with
/// `delta = 1e-6 (1 + ||x0||)`, floored at 1e-12.
///
/// The unit probe direction comes from the golden-ratio low-discrepancy
/// sequence rather than an RNG: the estimate is bit-reproducible for a given
/// dimension and the core crate stays free of randomness.
pub fn estimate_initial_l<T: Real>(p: &Problem<T>, x0: &Vector<T>) -> T {
    let n = x0.len();
    let mut e = Vector::zeros(n);
    let phi = 0.618_033_988_749_894_9_f64;
    for i in 0..n {
        let v = ((i + 1) as f64 * phi).fract() - 0.5;
        e[i] = real(v);
    }
    let en = norm2(&e);
    if en == T::zero() {
        e[0] = T::one();
    } else {
        e.mapv_inplace(|v| v / en);
    }
    let delta = real::<T>(1e-6) * (T::one() + norm2(x0));
    let probe = x0 + &(&e * delta);
    let (_, g1) = p.smooth.eval(&probe);
    let (_, g0) = p.smooth.eval(x0);
    let l = norm2(&(&g1 - &g0)) / delta;
    l.max(real(1e-12))
}
