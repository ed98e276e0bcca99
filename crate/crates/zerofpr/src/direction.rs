//! Direction engines producing `d = -H rbar` with quasi-Newton memory: full
//! Broyden with Powell's theta safeguard, full BFGS, symmetrized BFGS,
//! limited-memory BFGS, and the null engine that recovers plain
//! forward-backward splitting.
//!
//! Engines consume secant pairs `s = x^{k+1} - x_bar^k`,
//! `y = r^{k+1} - rbar^k` (residual differences, not gradient differences;
//! the fixed-point map being solved is `R_gamma = 0`).

use std::collections::VecDeque;

use crate::fbe::ProxGradStep;
use crate::problem::Problem;
use crate::{norm2_sq, real, Matrix, Real, Vector};

/// Which residual the solver should feed to `apply`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMode {
    /// The plain forward-backward residual `rbar`.
    Plain,
    /// The symmetrized residual `rbar + grad f(x_bar - gamma rbar) - grad
    /// f(x_bar)`, which makes the underlying Jacobian symmetric and suits
    /// BFGS-type updates.
    Symmetrized,
}

/// Quasi-Newton direction state. One engine instance per solver run.
pub trait DirectionEngine<T: Real> {
    /// `d = -H rbar` for the current memory.
    fn apply(&self, rbar: &Vector<T>) -> Vector<T>;

    /// Absorb one secant pair. Pairs with `||s|| = 0` are dropped: they
    /// occur at exact convergence and carry no information.
    fn push(&mut self, s: Vector<T>, y: Vector<T>);

    /// Forget all memory; afterwards `apply(rbar) = -rbar`.
    fn reset(&mut self);

    /// Residual flavor this engine expects.
    fn residual_mode(&self) -> ResidualMode {
        ResidualMode::Plain
    }

    fn name(&self) -> &'static str;
}

/// The zero direction: reduces the solver to forward-backward splitting.
pub struct NullEngine;

/// Direction of the null engine, always the zero vector.
pub fn null_apply<T: Real>(rbar: &Vector<T>) -> Vector<T> {
    Vector::zeros(rbar.len())
}

impl<T: Real> DirectionEngine<T> for NullEngine {
    fn apply(&self, rbar: &Vector<T>) -> Vector<T> {
        null_apply(rbar)
    }

    fn push(&mut self, _s: Vector<T>, _y: Vector<T>) {}

    fn reset(&mut self) {}

    fn name(&self) -> &'static str {
        "null"
    }
}

/// Rank-one Broyden update with Powell's theta safeguard:
///
/// ```text
/// H+ = H + (s - H y) (s^T H) / <s, (1/theta - 1) s + H y>
/// ```
///
/// where, with `gamma_k = <H y, s> / ||s||^2`, `theta = 1` if `|gamma_k| >=
/// theta_bar`, else `(1 - sign(gamma_k) theta_bar) / (1 - gamma_k)` (sign of
/// zero taken as +1). The denominator then has magnitude at least
/// `theta_bar ||s||^2 / (1 + theta_bar)`, so H+ stays finite and invertible.
pub fn broyden_push<T: Real>(h: &mut Matrix<T>, s: &Vector<T>, y: &Vector<T>, theta_bar: T) {
    let ss = norm2_sq(s);
    if ss == T::zero() {
        return;
    }
    debug_assert_eq!(h.nrows(), s.len());
    debug_assert_eq!(h.ncols(), y.len());
    let hy = h.dot(y);
    let gamma_k = hy.dot(s) / ss;
    let theta = if gamma_k.abs() >= theta_bar {
        T::one()
    } else {
        let sign = if gamma_k >= T::zero() {
            T::one()
        } else {
            -T::one()
        };
        (T::one() - sign * theta_bar) / (T::one() - gamma_k)
    };
    let denom = (T::one() / theta - T::one()) * ss + hy.dot(s);
    let sth = h.t().dot(s);
    let u = (s - &hy).mapv(|v| v / denom);
    for (mut row, &ui) in h.rows_mut().into_iter().zip(u.iter()) {
        row.scaled_add(ui, &sth);
    }
}

/// Inverse-Hessian BFGS update:
///
/// ```text
/// H+ = (I - rho s y^T) H (I - rho y s^T) + rho s s^T,  rho = 1 / <s, y>
/// ```
///
/// skipped entirely (H+ = H) when `<s, y> <= 0`, the rho = 0 convention.
/// Preserves symmetry and positive definiteness.
pub fn bfgs_push<T: Real>(h: &mut Matrix<T>, s: &Vector<T>, y: &Vector<T>) {
    if norm2_sq(s) == T::zero() {
        return;
    }
    let sy = s.dot(y);
    if sy <= T::zero() {
        return;
    }
    let rho = T::one() / sy;
    let hy = h.dot(y);
    let yhy = y.dot(&hy);
    // Expanded: H - rho (s hy^T + hy s^T) + (rho^2 yhy + rho) s s^T.
    let c = rho * rho * yhy + rho;
    let hyv = hy.clone();
    for (i, mut row) in h.rows_mut().into_iter().enumerate() {
        row.scaled_add(-rho * s[i], &hyv);
        row.scaled_add(-rho * hyv[i] + c * s[i], s);
    }
}

/// Full-memory Broyden engine, H0 = I.
pub struct Broyden<T: Real> {
    h: Matrix<T>,
    theta_bar: T,
}

impl<T: Real> Broyden<T> {
    pub fn new(dim: usize) -> Self {
        Self::with_theta_bar(dim, real(1e-4))
    }

    pub fn with_theta_bar(dim: usize, theta_bar: T) -> Self {
        Broyden {
            h: Matrix::eye(dim),
            theta_bar,
        }
    }
}

impl<T: Real> DirectionEngine<T> for Broyden<T> {
    fn apply(&self, rbar: &Vector<T>) -> Vector<T> {
        self.h.dot(rbar).mapv(|v| -v)
    }

    fn push(&mut self, s: Vector<T>, y: Vector<T>) {
        broyden_push(&mut self.h, &s, &y, self.theta_bar);
    }

    fn reset(&mut self) {
        self.h = Matrix::eye(self.h.nrows());
    }

    fn name(&self) -> &'static str {
        "broyden"
    }
}

/// Full-memory BFGS engine, H0 = I.
pub struct Bfgs<T: Real> {
    h: Matrix<T>,
}

impl<T: Real> Bfgs<T> {
    pub fn new(dim: usize) -> Self {
        Bfgs {
            h: Matrix::eye(dim),
        }
    }
}

impl<T: Real> DirectionEngine<T> for Bfgs<T> {
    fn apply(&self, rbar: &Vector<T>) -> Vector<T> {
        self.h.dot(rbar).mapv(|v| -v)
    }

    fn push(&mut self, s: Vector<T>, y: Vector<T>) {
        bfgs_push(&mut self.h, &s, &y);
    }

    fn reset(&mut self) {
        self.h = Matrix::eye(self.h.nrows());
    }

    fn name(&self) -> &'static str {
        "bfgs"
    }
}

/// BFGS on the symmetrized residual: same update rule, but the solver feeds
/// `apply` the symmetrized residual and builds `y` from symmetrized residual
/// differences (one extra gradient evaluation per iteration).
pub struct SymBfgs<T: Real> {
    inner: Bfgs<T>,
}

impl<T: Real> SymBfgs<T> {
    pub fn new(dim: usize) -> Self {
        SymBfgs {
            inner: Bfgs::new(dim),
        }
    }
}

impl<T: Real> DirectionEngine<T> for SymBfgs<T> {
    fn apply(&self, rbar: &Vector<T>) -> Vector<T> {
        self.inner.apply(rbar)
    }

    fn push(&mut self, s: Vector<T>, y: Vector<T>) {
        self.inner.push(s, y);
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn residual_mode(&self) -> ResidualMode {
        ResidualMode::Symmetrized
    }

    fn name(&self) -> &'static str {
        "sbfgs"
    }
}

/// Two-loop recursion over the stored `(s, y, rho)` pairs with `H0 = scaling
/// * I`; returns the direction `-H rbar`.
pub fn lbfgs_apply<T: Real>(
    memory: &VecDeque<(Vector<T>, Vector<T>, T)>,
    rbar: &Vector<T>,
    scaling: T,
) -> Vector<T> {
    let mut q = rbar.clone();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let alpha = *rho * s.dot(&q);
        q.scaled_add(-alpha, y);
        alphas.push(alpha);
    }
    let mut z = q.mapv(|v| v * scaling);
    for ((s, y, rho), alpha) in memory.iter().zip(alphas.iter().rev()) {
        let beta = *rho * y.dot(&z);
        z.scaled_add(*alpha - beta, s);
    }
    z.mapv(|v| -v)
}

/// Limited-memory BFGS engine with ring memory.
pub struct Lbfgs<T: Real> {
    memory: VecDeque<(Vector<T>, Vector<T>, T)>,
    m: usize,
}

impl<T: Real> Lbfgs<T> {
    pub fn new(m: usize) -> Self {
        Lbfgs {
            memory: VecDeque::with_capacity(m + 1),
            m: m.max(1),
        }
    }

    /// Scaling for H0: `<s, y> / <y, y>` of the newest pair, 1 when empty.
    fn scaling(&self) -> T {
        match self.memory.back() {
            Some((s, y, _)) => {
                let yy = norm2_sq(y);
                if yy > T::zero() {
                    s.dot(y) / yy
                } else {
                    T::one()
                }
            }
            None => T::one(),
        }
    }
}

impl<T: Real> DirectionEngine<T> for Lbfgs<T> {
    fn apply(&self, rbar: &Vector<T>) -> Vector<T> {
        lbfgs_apply(&self.memory, rbar, self.scaling())
    }

    fn push(&mut self, s: Vector<T>, y: Vector<T>) {
        let ss = norm2_sq(&s);
        if ss == T::zero() {
            return;
        }
        let sy = s.dot(&y);
        // The rho = 0 convention lifted to the buffer: near-singular
        // curvature pairs are never stored.
        if sy <= real::<T>(1e-12) * ss.sqrt() * norm2_sq(&y).sqrt() {
            return;
        }
        self.memory.push_back((s, y, T::one() / sy));
        if self.memory.len() > self.m {
            self.memory.pop_front();
        }
    }

    fn reset(&mut self) {
        self.memory.clear();
    }

    fn name(&self) -> &'static str {
        "lbfgs"
    }
}

/// Symmetrized forward-backward residual at a step taken at `x_bar`:
/// `rbar + grad f(x_bar - gamma rbar) - grad f(x_bar)`, where the first
/// argument equals the step's prox point. Costs one gradient evaluation.
pub fn symmetrized_bfgs_residual<T: Real>(step: &ProxGradStep<T>, p: &Problem<T>) -> Vector<T> {
    let (_, grad_at_prox) = p.smooth.eval(&step.x_bar);
    &step.r + &(&grad_at_prox - &step.grad_f_x)
}

/// Engine registry: `broyden`, `bfgs`, `sbfgs`, `lbfgs` (memory 10),
/// `lbfgs:M` for explicit memory, `null`.
pub fn engine_by_name<T: Real>(name: &str, dim: usize) -> Option<Box<dyn DirectionEngine<T>>> {
    match name {
        "broyden" => Some(Box::new(Broyden::new(dim))),
        "bfgs" => Some(Box::new(Bfgs::new(dim))),
        "sbfgs" => Some(Box::new(SymBfgs::new(dim))),
        "lbfgs" => Some(Box::new(Lbfgs::new(10))),
        "null" => Some(Box::new(NullEngine)),
        other => {
            let mem = other.strip_prefix("lbfgs:")?.parse::<usize>().ok()?;
            Some(Box::new(Lbfgs::new(mem)))
        }
    }
}
