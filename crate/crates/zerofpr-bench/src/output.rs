//! Result rows and CSV writers.
//!
//! Both formats are append-only tables with fixed headers; floats are
//! written with Rust's shortest round-trip formatting so reruns of the same
//! spec produce byte-identical files (wall-clock milliseconds are the one
//! intentionally nondeterministic column).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use zerofpr::solver::{RunTrace, Status};

pub const RESULTS_HEADER: &str =
    "experiment,solver,seed,iters,matvecs,prox_evals,final_res,final_obj,wall_ms,status";

pub const TRACE_HEADER: &str =
    "k,res_norm,fbe,phibar,tau,backtracks,gamma,smooth_evals,prox_evals";

/// One solver run on one seeded instance.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub experiment: String,
    pub solver: String,
    pub seed: u64,
    /// Completed iterations (trace rows).
    pub iters: usize,
    /// Total matrix-vector products over the whole run.
    pub matvecs: u64,
    /// Total prox evaluations over the whole run.
    pub prox_evals: u64,
    /// Forward-backward residual norm at the returned point.
    pub final_res: f64,
    /// Objective `f + g` at the returned point.
    pub final_obj: f64,
    pub wall_ms: f64,
    pub status: Status,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:.3},{}",
            self.experiment,
            self.solver,
            self.seed,
            self.iters,
            self.matvecs,
            self.prox_evals,
            self.final_res,
            self.final_obj,
            self.wall_ms,
            self.status.as_str()
        )
    }
}

/// Render rows as a results CSV (header included).
pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv_line());
        out.push('\n');
    }
    out
}

/// Render a per-iteration trace CSV (header included).
pub fn trace_csv(trace: &RunTrace<f64>) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for row in &trace.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.k,
            row.res_norm,
            row.fbe,
            row.phibar,
            row.tau,
            row.backtracks,
            row.gamma,
            row.smooth_evals,
            row.prox_evals
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    fs::write(path, results_csv(rows))
        .with_context(|| format!("writing results to {}", path.display()))
}

pub fn write_trace_csv(path: &Path, trace: &RunTrace<f64>) -> Result<()> {
    fs::write(path, trace_csv(trace))
        .with_context(|| format!("writing trace to {}", path.display()))
}

/// File name for one run's trace. Solver names may contain `:` (engine
/// memory), which is not filename-safe everywhere; it maps to `-`.
pub fn trace_file_name(experiment: &str, solver: &str, seed: u64) -> String {
    format!("trace_{experiment}_{}_{seed}.csv", solver.replace(':', "-"))
}
