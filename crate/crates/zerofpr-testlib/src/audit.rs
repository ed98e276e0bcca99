//! Trace auditors: replay the envelope inequalities that a monitored run
//! must satisfy, row by row, against recorded values only.
//!
//! The auditor never re-evaluates oracles; everything it needs is in the
//! trace. That makes it an independent check on the solver's bookkeeping:
//! a solver bug that fabricates descent cannot also fabricate consistent
//! rows without reproducing the inequalities themselves.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use zerofpr::norm2;
use zerofpr::solver::RunTrace;
use zerofpr::{ProblemF64, VectorF64};

use crate::SeedSplitter;

/// One failed inequality, localized to the iteration that broke it.
#[derive(Clone, Debug)]
pub struct AuditFailure {
    pub k: usize,
    pub what: String,
    /// How far past the slack the inequality was violated.
    pub violation: f64,
}

/// Outcome of an audit: per-check counts and localized failures.
#[derive(Clone, Debug)]
pub struct AuditReport {
    pub checks: usize,
    pub passes: usize,
    pub failures: Vec<AuditFailure>,
    /// Smallest margin seen over all checks (negative means a failure);
    /// infinite when nothing was checked.
    pub worst_margin: f64,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

struct Checker {
    report: AuditReport,
}

impl Checker {
    fn new() -> Self {
        Checker {
            report: AuditReport {
                checks: 0,
                passes: 0,
                failures: Vec::new(),
                worst_margin: f64::INFINITY,
            },
        }
    }

    /// Record one inequality check; `margin >= 0` is a pass.
    fn check(&mut self, k: usize, what: &str, margin: f64) {
        self.report.checks += 1;
        self.report.worst_margin = self.report.worst_margin.min(margin);
        if margin >= 0.0 {
            self.report.passes += 1;
        } else {
            self.report.failures.push(AuditFailure {
                k,
                what: what.to_string(),
                violation: -margin,
            });
        }
    }
}

fn slack(phi: f64) -> f64 {
    1e-8 * (1.0 + phi.abs())
}

/// Audit every envelope inequality a trace exposes.
///
/// Pointwise (any trace, wherever the row carries the values):
/// - the envelope at the prox point never exceeds the objective there;
/// - the objective at the prox point sits at least `sigma ||r||^2` below
///   the envelope at the iterate;
/// - the envelope never exceeds the merit it was tested against.
///
/// Loop checks (monitored traces only, within one gamma epoch):
/// - each accepted iterate passed the merit descent test;
/// - the merit average decreases;
/// - per epoch, the sum of squared residuals respects the telescoped
///   merit-decrease budget `(phibar_start - inf phi) / (sigma p_min)`.
///
/// All comparisons carry slack `1e-8 (1 + |phi|)`; the summability budget
/// additionally absorbs one slack per row, matching the solver's fallback
/// acceptance slack.
pub fn audit_inequalities(trace: &RunTrace<f64>, p_min: f64) -> AuditReport {
    assert!(p_min > 0.0 && p_min < 1.0, "p_min must lie in (0,1)");
    let mut c = Checker::new();
    let rows = &trace.rows;

    for row in rows {
        if let (Some(fbe_bar), Some(phi_bar)) = (row.fbe_at_xbar, row.phi_at_xbar) {
            c.check(
                row.k,
                "envelope minorizes objective at prox point",
                phi_bar + slack(phi_bar) - fbe_bar,
            );
            let drop = row.fbe - row.sigma * row.res_norm * row.res_norm;
            c.check(
                row.k,
                "prox point improves by sigma r^2",
                drop + slack(row.fbe) - phi_bar,
            );
        }
        c.check(
            row.k,
            "envelope below merit",
            row.phibar + slack(row.phibar) - row.fbe,
        );
    }

    if trace.monitored && !rows.is_empty() {
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.gamma != b.gamma {
                // gamma changed between the rows: the merit was restarted,
                // so cross-row inequalities do not apply
                continue;
            }
            let target = a.phibar - a.sigma * a.res_norm * a.res_norm;
            c.check(b.k, "merit descent test", target + slack(a.phibar) - b.fbe);
            c.check(b.k, "merit decrease", a.phibar + slack(a.phibar) - b.phibar);
        }

        // The tightest observed lower bound on the envelope along the run.
        let mut inf_phi = trace.final_fbe;
        for row in rows {
            inf_phi = inf_phi.min(row.fbe);
            if let Some(v) = row.fbe_at_xbar {
                inf_phi = inf_phi.min(v);
            }
        }
        let mut start = 0;
        while start < rows.len() {
            let mut end = start;
            while end + 1 < rows.len() && rows[end + 1].gamma == rows[start].gamma {
                end += 1;
            }
            let epoch = &rows[start..=end];
            let sum: f64 = epoch.iter().map(|r| r.res_norm * r.res_norm).sum();
            let sigma = epoch[0].sigma;
            let budget = (epoch[0].phibar - inf_phi) / (sigma * p_min);
            let fudge = epoch.len() as f64 * slack(epoch[0].phibar) / (sigma * p_min);
            c.check(
                epoch[0].k,
                "residual summability budget",
                budget * (1.0 + 1e-8) + fudge - sum,
            );
            start = end + 1;
        }
    }

    c.report
}

/// Sample 100 gradient-difference quotients on pairs drawn from a Gaussian
/// ball around `center` and check each against `l (1 + 1e-8)`.
///
/// Not a proof of the Lipschitz claim, but a fixture whose declared
/// constant is wrong will fail this for any reasonable sample.
pub fn verify_lipschitz(
    p: &ProblemF64,
    center: &VectorF64,
    radius: f64,
    l: f64,
    seed: u64,
) -> bool {
    assert!(radius > 0.0 && l > 0.0);
    let mut rng = SeedSplitter::new(seed).stream(0);
    let n = p.dim;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> VectorF64 {
        let noise =
            Array1::from((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
        center + &noise.mapv(|t| t * radius)
    };
    for _ in 0..100 {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        let diff = &x - &y;
        let denom = norm2(&diff);
        if denom == 0.0 {
            continue;
        }
        let (_, gx) = p.smooth.eval(&x);
        let (_, gy) = p.smooth.eval(&y);
        let quotient = norm2(&(&gx - &gy)) / denom;
        if quotient > l * (1.0 + 1e-8) {
            return false;
        }
    }
    true
}
