//! The quasi-Newton forward-backward solver and its baselines.
//!
//! `zerofpr_solve` runs the nonmonotone linesearch scheme: at each iterate
//! take a prox-grad step, take a second one at the prox point to obtain the
//! fixed-point residual there, ask a direction engine for `d = -H rbar`, and
//! backtrack `tau` until the forward-backward envelope at `x_bar + tau d`
//! drops below the merit average `Phibar - sigma ||r||^2`. The accepted trial
//! step doubles as the next iteration's base step, so each iteration costs
//! exactly two prox-grad steps when the first trial is accepted.
//!
//! `fbs_solve`, `ifbs_solve`, and `afbs_solve` are the classical baselines
//! (plain, inertial, and monitored accelerated forward-backward splitting)
//! sharing the same trace format.

use std::time::Instant;

use crate::direction::{symmetrized_bfgs_residual, DirectionEngine, ResidualMode};
use crate::fbe::{
    check_quadratic_bound, estimate_initial_l, prox_grad_step, GammaManager, ProxGradStep,
};
use crate::problem::Problem;
use crate::{norm2, real, Error, Real, Result, Vector};

/// Terminal state of a run. Failure states are reported here, not as `Err`:
/// a failed run still carries a meaningful trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    /// `||r|| <= tol` reached.
    Converged,
    /// Iteration budget exhausted.
    MaxIters,
    /// Backtracking exhausted and even the pure forward-backward fallback
    /// violated the descent test: the oracles are inconsistent with the
    /// configured sigma and gamma.
    LinesearchFailure,
    /// The adaptive step-size shrank past its adjustment cap, which signals
    /// a non-Lipschitz gradient or a broken smooth oracle.
    GammaFailure,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::LinesearchFailure => "linesearch_failure",
            Status::GammaFailure => "gamma_failure",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One completed iteration. Counters are cumulative deltas since the run
/// started, so a fresh and a reused `Problem` produce identical traces.
#[derive(Clone, Debug)]
pub struct IterationRecord<T: Real> {
    pub k: usize,
    /// `||r^k||` at the iterate.
    pub res_norm: T,
    /// Envelope value at the iterate.
    pub fbe: T,
    /// Merit average the linesearch tested against, before its update.
    pub phibar: T,
    /// Accepted step length; 0 marks the pure forward-backward fallback.
    pub tau: T,
    /// Failed linesearch trials before acceptance.
    pub backtracks: usize,
    pub gamma: T,
    pub smooth_evals: u64,
    pub prox_evals: u64,
    pub matvecs: u64,
    pub elapsed_ms: f64,
    /// Envelope at the prox point, when the algorithm computed it anyway.
    pub fbe_at_xbar: Option<T>,
    /// Raw objective `f + g` at the prox point, when available.
    pub phi_at_xbar: Option<T>,
    pub sigma: T,
    /// Curvature estimate in force (the true constant when one was given).
    pub l_estimate: T,
}

/// Full record of a run: per-iteration rows plus terminal state.
///
/// Rows exist only for completed iterations; the iteration that hits the
/// stopping test or a failure records nothing. `monitored` marks traces
/// whose rows are guaranteed to satisfy the descent-test inequalities
/// (inertial steps are not, so audits skip their loop checks).
pub struct RunTrace<T: Real> {
    pub rows: Vec<IterationRecord<T>>,
    pub status: Status,
    /// The prox point of the last base step: always prox-feasible.
    pub final_point: Vector<T>,
    pub final_res: T,
    pub final_fbe: T,
    pub monitored: bool,
    /// `d^k` per iteration when `record_vectors` is on.
    pub directions: Vec<Vector<T>>,
    /// The residual fed to the engine per iteration (plain or symmetrized),
    /// when `record_vectors` is on.
    pub residuals_bar: Vec<Vector<T>>,
    pub wall_ms: f64,
    pub solver: String,
}

/// Solver knobs shared by all entry points. `Default` gives the values used
/// throughout the benchmark suite.
#[derive(Clone, Debug)]
pub struct SolverConfig<T: Real> {
    /// Explicit step size; `None` derives `gamma_fraction * min(1/L,
    /// gamma_g)`.
    pub gamma: Option<T>,
    /// Explicit sigma; `None` takes the midpoint of `(0, gamma(1 - gamma
    /// L)/2)`.
    pub sigma: Option<T>,
    /// Linesearch backtracking ratio in (0,1).
    pub beta: T,
    /// Floor for the merit averaging weight, in (0,1).
    pub p_min: T,
    /// Averaging constant of the merit recursion, in [0,1); 0 is monotone.
    pub eta: T,
    /// Residual tolerance on `||r||`.
    pub tol: T,
    /// Scale the tolerance by `1 + ||x0||` instead of using it verbatim.
    pub relative_tol: bool,
    pub max_iters: usize,
    /// Trial budget per linesearch before the tau = 0 fallback.
    pub max_linesearch: usize,
    /// Re-check the descent-lemma bound each iteration and shrink gamma on
    /// violation. Forced on when the problem carries no Lipschitz constant.
    pub adaptive_gamma: bool,
    /// Fraction of `min(1/L, gamma_g)` used when `gamma` is `None`.
    pub gamma_fraction: T,
    /// Shrink ratio for adaptive gamma, in (0,1).
    pub alpha: T,
    pub max_gamma_backtracks: usize,
    /// Keep `d^k` and the fed residuals in the trace (off by default: they
    /// hold full vectors per iteration).
    pub record_vectors: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            gamma: None,
            sigma: None,
            beta: real(0.5),
            p_min: real(0.1),
            eta: real(0.85),
            tol: real(1e-6),
            relative_tol: false,
            max_iters: 10_000,
            max_linesearch: 40,
            adaptive_gamma: false,
            gamma_fraction: real(0.95),
            alpha: real(0.5),
            max_gamma_backtracks: 60,
            record_vectors: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: T| v > T::zero() && v < T::one();
        if !in_unit(self.beta) {
            return Err(Error::InvalidConfig(format!(
                "beta must lie in (0,1), got {}",
                self.beta
            )));
        }
        if !in_unit(self.p_min) {
            return Err(Error::InvalidConfig(format!(
                "p_min must lie in (0,1), got {}",
                self.p_min
            )));
        }
        if !(self.eta >= T::zero() && self.eta < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "eta must lie in [0,1), got {}",
                self.eta
            )));
        }
        if !(self.tol > T::zero()) || !self.tol.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive and finite, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        if self.max_linesearch == 0 {
            return Err(Error::InvalidConfig(
                "max_linesearch must be positive".into(),
            ));
        }
        if !in_unit(self.gamma_fraction) {
            return Err(Error::InvalidConfig(format!(
                "gamma_fraction must lie in (0,1), got {}",
                self.gamma_fraction
            )));
        }
        if !in_unit(self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if let Some(g) = self.gamma {
            if !(g > T::zero()) || !g.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "gamma override must be positive and finite, got {g}"
                )));
            }
        }
        if let Some(s) = self.sigma {
            if !(s > T::zero()) || !s.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "sigma override must be positive and finite, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Merit-average state of the nonmonotone linesearch.
///
/// Invariants while a solver runs: `phibar >= fbe(x^k)` at every iterate,
/// and `phibar` strictly decreases while the residual is nonzero.
#[derive(Clone, Copy, Debug)]
pub struct NonmonotoneState<T: Real> {
    /// Merit average tested by the linesearch.
    pub phibar: T,
    /// Averaging accumulator, starts at 1.
    pub q: T,
    /// Weight used by the most recent update; 1 before any update.
    pub p: T,
}

impl<T: Real> NonmonotoneState<T> {
    pub fn new(phibar0: T) -> Self {
        NonmonotoneState {
            phibar: phibar0,
            q: T::one(),
            p: T::one(),
        }
    }
}

/// One merit update: `p = max(p_min, 1/(eta q + 1))`, `phibar <- (1-p)
/// phibar + p phi_new`, `q <- eta q + 1`.
pub fn update_nonmonotone<T: Real>(
    state: &NonmonotoneState<T>,
    phi_new: T,
    p_min: T,
    eta: T,
) -> NonmonotoneState<T> {
    let p = p_min.max(T::one() / (eta * state.q + T::one()));
    NonmonotoneState {
        phibar: (T::one() - p) * state.phibar + p * phi_new,
        q: eta * state.q + T::one(),
        p,
    }
}

/// Shared per-run setup: validation, curvature estimate, step-size manager,
/// effective tolerance, and whether adaptive gamma is in force.
struct RunSetup<T: Real> {
    mgr: GammaManager<T>,
    adaptive: bool,
    tol: T,
    smooth0: u64,
    prox0: u64,
    matvec0: u64,
}

fn setup_run<T: Real>(p: &Problem<T>, x0: &Vector<T>, cfg: &SolverConfig<T>) -> Result<RunSetup<T>> {
    cfg.validate()?;
    if x0.len() != p.dim {
        return Err(Error::Dimension(format!(
            "x0 has length {}, problem dimension is {}",
            x0.len(),
            p.dim
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Nonfinite("x0 has nonfinite entries".into()));
    }
    let (l, l_known) = match p.lipschitz {
        Some(l) => {
            if !(l > T::zero()) || !l.is_finite() {
                return Err(Error::Precondition(format!(
                    "declared Lipschitz constant must be positive and finite, got {l}"
                )));
            }
            (l, true)
        }
        None => (estimate_initial_l(p, x0), false),
    };
    // A mere estimate must be allowed to grow, so adaptivity is forced.
    let adaptive = cfg.adaptive_gamma || !l_known;
    let bound = p.nonsmooth.gamma_bound();
    let mut mgr = match cfg.gamma {
        Some(g) => GammaManager::from_gamma(g, l, bound, cfg.alpha, cfg.max_gamma_backtracks)?,
        None => GammaManager::from_fraction(
            l,
            bound,
            cfg.gamma_fraction,
            cfg.alpha,
            cfg.max_gamma_backtracks,
        )?,
    };
    if let Some(s) = cfg.sigma {
        mgr.set_sigma(s)?;
    }
    let tol = if cfg.relative_tol {
        cfg.tol * (T::one() + norm2(x0))
    } else {
        cfg.tol
    };
    Ok(RunSetup {
        mgr,
        adaptive,
        tol,
        smooth0: p.smooth.eval_count(),
        prox0: p.nonsmooth.prox_count(),
        matvec0: p.smooth.matvec_count(),
    })
}

struct Recorder<'a, T: Real> {
    p: &'a Problem<T>,
    start: Instant,
    smooth0: u64,
    prox0: u64,
    matvec0: u64,
    rows: Vec<IterationRecord<T>>,
}

impl<'a, T: Real> Recorder<'a, T> {
    fn new(p: &'a Problem<T>, setup: &RunSetup<T>) -> Self {
        Recorder {
            p,
            start: Instant::now(),
            smooth0: setup.smooth0,
            prox0: setup.prox0,
            matvec0: setup.matvec0,
            rows: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        k: usize,
        res_norm: T,
        fbe: T,
        phibar: T,
        tau: T,
        backtracks: usize,
        mgr: &GammaManager<T>,
        fbe_at_xbar: Option<T>,
        phi_at_xbar: Option<T>,
    ) {
        self.rows.push(IterationRecord {
            k,
            res_norm,
            fbe,
            phibar,
            tau,
            backtracks,
            gamma: mgr.gamma,
            smooth_evals: self.p.smooth.eval_count() - self.smooth0,
            prox_evals: self.p.nonsmooth.prox_count() - self.prox0,
            matvecs: self.p.smooth.matvec_count() - self.matvec0,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
            fbe_at_xbar,
            phi_at_xbar,
            sigma: mgr.sigma,
            l_estimate: mgr.l,
        });
    }

    fn finish(
        self,
        status: Status,
        last: &ProxGradStep<T>,
        monitored: bool,
        directions: Vec<Vector<T>>,
        residuals_bar: Vec<Vector<T>>,
        solver: String,
    ) -> RunTrace<T> {
        RunTrace {
            rows: self.rows,
            status,
            final_point: last.x_bar.clone(),
            final_res: norm2(&last.r),
            final_fbe: last.fbe,
            monitored,
            directions,
            residuals_bar,
            wall_ms: self.start.elapsed().as_secs_f64() * 1e3,
            solver,
        }
    }
}

/// Outcome of the shared stop-or-adapt preamble run at each iterate.
enum Gate<T> {
    Proceed { res: T },
    Stop(Status),
}

type GateResult<T> = Result<(Gate<T>, ProxGradStep<T>)>;
use Gate::{Proceed, Stop};

/// Stopping test followed by the adaptive descent-lemma check, repeated
/// until the bound holds at the current gamma. On every shrink the base
/// step is recomputed and `on_shrink` runs (solvers reset engines, merit
/// state, or momentum there).
fn gate_step<T: Real>(
    p: &Problem<T>,
    mut cur: ProxGradStep<T>,
    mgr: &mut GammaManager<T>,
    adaptive: bool,
    tol: T,
    mut on_shrink: impl FnMut(&ProxGradStep<T>),
) -> GateResult<T> {
    loop {
        let res = norm2(&cur.r);
        if res <= tol {
            return Ok((Stop(Status::Converged), cur));
        }
        if !adaptive || check_quadratic_bound(&cur, p, mgr.l) {
            return Ok((Proceed { res }, cur));
        }
        match mgr.backtrack() {
            Ok(()) => {}
            Err(Error::GammaAdjustmentCap(_)) => return Ok((Stop(Status::GammaFailure), cur)),
            Err(e) => return Err(e),
        }
        cur = prox_grad_step(p, &cur.x, mgr.gamma)?;
        on_shrink(&cur);
    }
}

/// Run the full quasi-Newton forward-backward scheme.
///
/// Returns the prox-feasible solution point together with the trace. Failure
/// modes that occur while iterating (linesearch exhaustion, step-size
/// collapse) are reported in `trace.status`; `Err` is reserved for broken
/// inputs: dimension mismatches, invalid configuration, nonfinite data.
pub fn zerofpr_solve<T: Real>(
    p: &Problem<T>,
    x0: &Vector<T>,
    cfg: &SolverConfig<T>,
    engine: &mut dyn DirectionEngine<T>,
) -> Result<(Vector<T>, RunTrace<T>)> {
    let mut setup = setup_run(p, x0, cfg)?;
    let mut recorder = Recorder::new(p, &setup);
    let solver_name = format!("zerofpr-{}", engine.name());
    let mut directions = Vec::new();
    let mut residuals_bar = Vec::new();

    let mut cur = prox_grad_step(p, x0, setup.mgr.gamma)?;
    let mut state = NonmonotoneState::new(cur.fbe);
    // Deferred secant pair for symmetrized engines: y needs the gradient at
    // the next iteration's prox point.
    let mut pending: Option<(Vector<T>, Vector<T>)> = None;
    // True when `cur` already passed the descent-lemma check at the current
    // (gamma, L), so the gate need not evaluate f at the prox point again.
    let mut certified = false;
    let mut status = Status::MaxIters;

    let mut k = 0;
    while k < cfg.max_iters {
        let check = setup.adaptive && !certified;
        let (gate, gated) = gate_step(p, cur, &mut setup.mgr, check, setup.tol, |fresh| {
            // Stored pairs and the merit average reference a stale gamma.
            engine.reset();
            pending = None;
            state.phibar = fresh.fbe;
        })?;
        cur = gated;
        let res = match gate {
            Proceed { res } => res,
            Stop(s) => {
                status = s;
                break;
            }
        };

        // Second prox-grad evaluation, at the prox point.
        let bar = prox_grad_step(p, &cur.x_bar, setup.mgr.gamma)?;
        if let Some((s, partial)) = pending.take() {
            engine.push(s, &partial + &bar.grad_f_x);
        }
        let feed = match engine.residual_mode() {
            ResidualMode::Plain => bar.r.clone(),
            ResidualMode::Symmetrized => symmetrized_bfgs_residual(&bar, p),
        };
        let d = engine.apply(&feed);

        let target = state.phibar - setup.mgr.sigma * res * res;
        let next;
        let tau;
        let mut backtracks = 0;
        if d.iter().all(|v| *v == T::zero()) {
            // Zero direction: the trial point is the prox point itself and
            // the bar step already evaluated it.
            next = bar.clone();
            tau = T::one();
            certified = false;
        } else {
            let mut t = T::one();
            let mut accepted = None;
            for m in 0..=cfg.max_linesearch {
                let trial_x = &cur.x_bar + &d.mapv(|v| v * t);
                match prox_grad_step(p, &trial_x, setup.mgr.gamma) {
                    // While L is only an estimate the envelope is trusted
                    // solely where the descent lemma certifies it: a trial
                    // outside that region can report arbitrarily low values
                    // (the gradient-norm term dominates), so it fails the
                    // tau like a nonfinite one instead of being accepted.
                    Ok(trial)
                        if trial.fbe <= target
                            && (!setup.adaptive
                                || check_quadratic_bound(&trial, p, setup.mgr.l)) =>
                    {
                        accepted = Some((trial, t, m));
                        break;
                    }
                    // A trial with nonfinite envelope counts as a failed tau.
                    Ok(_) | Err(Error::Nonfinite(_)) => {}
                    Err(e) => return Err(e),
                }
                t = t * cfg.beta;
            }
            match accepted {
                Some((trial, t, m)) => {
                    next = trial;
                    tau = t;
                    backtracks = m;
                    certified = setup.adaptive;
                }
                None => {
                    // tau = 0 fallback: the pure forward-backward point
                    // satisfies the descent test up to roundoff whenever the
                    // oracles are consistent.
                    let slack = real::<T>(1e-8) * (T::one() + bar.fbe.abs());
                    if bar.fbe <= target + slack {
                        next = bar.clone();
                        tau = T::zero();
                        backtracks = cfg.max_linesearch + 1;
                        certified = false;
                    } else {
                        status = Status::LinesearchFailure;
                        break;
                    }
                }
            }
        }

        recorder.push(
            k,
            res,
            cur.fbe,
            state.phibar,
            tau,
            backtracks,
            &setup.mgr,
            Some(bar.fbe),
            Some(bar.f_x + cur.g_xbar),
        );
        if cfg.record_vectors {
            directions.push(d);
            residuals_bar.push(feed.clone());
        }

        state = update_nonmonotone(&state, next.fbe, cfg.p_min, cfg.eta);
        let s = &next.x - &cur.x_bar;
        match engine.residual_mode() {
            ResidualMode::Plain => engine.push(s, &next.r - &bar.r),
            ResidualMode::Symmetrized => {
                // Completed at the next iteration by adding grad f at its
                // prox point.
                let partial = &(&next.r - &next.grad_f_x) - &feed;
                pending = Some((s, partial));
            }
        }
        cur = next;
        k += 1;
    }

    let trace = recorder.finish(status, &cur, true, directions, residuals_bar, solver_name);
    Ok((cur.x_bar.clone(), trace))
}

/// Plain forward-backward splitting: `x^{k+1} = x_bar^k`. One prox-grad
/// step per iteration; rows record `tau = 1` with no backtracks.
pub fn fbs_solve<T: Real>(
    p: &Problem<T>,
    x0: &Vector<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Vector<T>, RunTrace<T>)> {
    let mut setup = setup_run(p, x0, cfg)?;
    let mut recorder = Recorder::new(p, &setup);
    let mut cur = prox_grad_step(p, x0, setup.mgr.gamma)?;
    let mut status = Status::MaxIters;
    let mut k = 0;
    while k < cfg.max_iters {
        let (gate, gated) = gate_step(p, cur, &mut setup.mgr, setup.adaptive, setup.tol, |_| {})?;
        cur = gated;
        let res = match gate {
            Proceed { res } => res,
            Stop(s) => {
                status = s;
                break;
            }
        };
        // The step at the prox point is both this row's diagnostics and the
        // next iteration's base step.
        let next = prox_grad_step(p, &cur.x_bar, setup.mgr.gamma)?;
        recorder.push(
            k,
            res,
            cur.fbe,
            cur.fbe,
            T::one(),
            0,
            &setup.mgr,
            Some(next.fbe),
            Some(next.f_x + cur.g_xbar),
        );
        cur = next;
        k += 1;
    }
    let trace = recorder.finish(status, &cur, true, Vec::new(), Vec::new(), "fbs".into());
    Ok((cur.x_bar.clone(), trace))
}

/// Inertial forward-backward splitting with default inertia 0.2.
pub fn ifbs_solve<T: Real>(
    p: &Problem<T>,
    x0: &Vector<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Vector<T>, RunTrace<T>)> {
    ifbs_solve_with(p, x0, cfg, real(0.2))
}

/// Inertial forward-backward splitting: apply the forward-backward map at
/// the extrapolated point `w^k = x^k + inertia (x^k - x^{k-1})`.
///
/// Rows are recorded at `w^k`. Inertial steps do not obey the descent-test
/// inequalities, so the trace is not `monitored`.
pub fn ifbs_solve_with<T: Real>(
    p: &Problem<T>,
    x0: &Vector<T>,
    cfg: &SolverConfig<T>,
    inertia: T,
) -> Result<(Vector<T>, RunTrace<T>)> {
    if !(inertia >= T::zero()) || !(inertia < T::one()) {
        return Err(Error::InvalidConfig(format!(
            "inertia must lie in [0,1), got {inertia}"
        )));
    }
    let mut setup = setup_run(p, x0, cfg)?;
    let mut recorder = Recorder::new(p, &setup);
    // cur is the step at w^k; for k = 0, w^0 = x^0.
    let mut cur = prox_grad_step(p, x0, setup.mgr.gamma)?;
    let mut x_cur = x0.clone();
    let mut status = Status::MaxIters;
    let mut k = 0;
    while k < cfg.max_iters {
        let (gate, gated) = gate_step(p, cur, &mut setup.mgr, setup.adaptive, setup.tol, |_| {})?;
        cur = gated;
        let res = match gate {
            Proceed { res } => res,
            Stop(s) => {
                status = s;
                break;
            }
        };
        recorder.push(k, res, cur.fbe, cur.fbe, T::one(), 0, &setup.mgr, None, None);
        let x_new = cur.x_bar.clone();
        let w = &x_new + &(&x_new - &x_cur).mapv(|v| v * inertia);
        x_cur = x_new;
        cur = prox_grad_step(p, &w, setup.mgr.gamma)?;
        k += 1;
    }
    let trace = recorder.finish(status, &cur, false, Vec::new(), Vec::new(), "ifbs".into());
    Ok((cur.x_bar.clone(), trace))
}

/// Monitored accelerated forward-backward splitting.
///
/// Momentum extrapolates the prox-point sequence with the classical
/// `t`-sequence weights; every extrapolated candidate must pass the same
/// merit descent test as the quasi-Newton linesearch, otherwise the plain
/// forward-backward point replaces it (recorded as `tau = 0`). Momentum and
/// merit state restart whenever gamma shrinks.
pub fn afbs_solve<T: Real>(
    p: &Problem<T>,
    x0: &Vector<T>,
    cfg: &SolverConfig<T>,
) -> Result<(Vector<T>, RunTrace<T>)> {
    let mut setup = setup_run(p, x0, cfg)?;
    let mut recorder = Recorder::new(p, &setup);
    let mut cur = prox_grad_step(p, x0, setup.mgr.gamma)?;
    let mut state = NonmonotoneState::new(cur.fbe);
    let mut u_prev: Option<Vector<T>> = None;
    let mut t_prev = T::one();
    let mut t_cur = T::one();
    let mut status = Status::MaxIters;
    let mut k = 0;
    while k < cfg.max_iters {
        let mut restarted = false;
        let (gate, gated) = gate_step(p, cur, &mut setup.mgr, setup.adaptive, setup.tol, |fresh| {
            state.phibar = fresh.fbe;
            restarted = true;
        })?;
        cur = gated;
        if restarted {
            u_prev = None;
            t_prev = T::one();
            t_cur = T::one();
        }
        let res = match gate {
            Proceed { res } => res,
            Stop(s) => {
                status = s;
                break;
            }
        };

        let u_new = cur.x_bar.clone();
        let omega = (t_prev - T::one()) / t_cur;
        let z = match &u_prev {
            Some(up) => &u_new + &(&u_new - up).mapv(|v| v * omega),
            None => u_new.clone(),
        };
        let target = state.phibar - setup.mgr.sigma * res * res;
        let trial = match prox_grad_step(p, &z, setup.mgr.gamma) {
            Ok(t) => Some(t),
            Err(Error::Nonfinite(_)) => None,
            Err(e) => return Err(e),
        };
        let (next, tau, fbe_at_xbar, phi_at_xbar) = match trial {
            Some(t) if t.fbe <= target => (t, T::one(), None, None),
            _ => {
                // Safeguard: fall back to the plain forward-backward point.
                let fb = prox_grad_step(p, &u_new, setup.mgr.gamma)?;
                let slack = real::<T>(1e-8) * (T::one() + fb.fbe.abs());
                if fb.fbe > target + slack {
                    status = Status::LinesearchFailure;
                    break;
                }
                let phi = fb.f_x + cur.g_xbar;
                let fbe = fb.fbe;
                (fb, T::zero(), Some(fbe), Some(phi))
            }
        };
        let backtracks = usize::from(tau == T::zero());
        recorder.push(
            k,
            res,
            cur.fbe,
            state.phibar,
            tau,
            backtracks,
            &setup.mgr,
            fbe_at_xbar,
            phi_at_xbar,
        );

        state = update_nonmonotone(&state, next.fbe, cfg.p_min, cfg.eta);
        u_prev = Some(u_new);
        t_prev = t_cur;
        let four: T = real(4.0);
        let two: T = real(2.0);
        t_cur = (T::one() + (T::one() + four * t_cur * t_cur).sqrt()) / two;
        cur = next;
        k += 1;
    }
    let trace = recorder.finish(status, &cur, true, Vec::new(), Vec::new(), "afbs".into());
    Ok((cur.x_bar.clone(), trace))
}
