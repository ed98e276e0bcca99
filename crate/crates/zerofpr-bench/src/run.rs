//! Solver registry and experiment orchestration: one cell is one (seed,
//! solver) pair, cells run in parallel on a local pool, and output files are
//! written under a lock so concurrent cells never interleave.

use std::path::Path;
use std::sync::Mutex;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use zerofpr::direction::{Bfgs, Broyden, DirectionEngine, Lbfgs, NullEngine, SymBfgs};
use zerofpr::solver::{afbs_solve, fbs_solve, ifbs_solve, zerofpr_solve, RunTrace, SolverConfig};
use zerofpr::{ProblemF64, VectorF64};

use crate::config::{ExperimentKind, ExperimentSpec};
use crate::experiments::{gen_dict_learning, gen_mat_decomp, gen_sparse_approx};
use crate::output::{trace_file_name, write_trace_csv, ResultRow};

/// Default limited-memory depth when `zerofpr-lbfgs` carries no `:M` suffix.
pub const DEFAULT_LBFGS_MEMORY: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Fbs,
    Ifbs,
    Afbs,
    ZeroFpr(EngineChoice),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineChoice {
    Null,
    Broyden,
    Bfgs,
    SymBfgs,
    Lbfgs(usize),
}

/// Parse a solver name: `fbs`, `ifbs`, `afbs`, `zerofpr-null`,
/// `zerofpr-broyden`, `zerofpr-bfgs`, `zerofpr-sbfgs`, `zerofpr-lbfgs`, or
/// `zerofpr-lbfgs:M` for an explicit memory depth.
pub fn parse_solver(name: &str) -> Result<SolverChoice> {
    let choice = match name {
        "fbs" => SolverChoice::Fbs,
        "ifbs" => SolverChoice::Ifbs,
        "afbs" => SolverChoice::Afbs,
        "zerofpr-null" => SolverChoice::ZeroFpr(EngineChoice::Null),
        "zerofpr-broyden" => SolverChoice::ZeroFpr(EngineChoice::Broyden),
        "zerofpr-bfgs" => SolverChoice::ZeroFpr(EngineChoice::Bfgs),
        "zerofpr-sbfgs" => SolverChoice::ZeroFpr(EngineChoice::SymBfgs),
        "zerofpr-lbfgs" => SolverChoice::ZeroFpr(EngineChoice::Lbfgs(DEFAULT_LBFGS_MEMORY)),
        other => {
            let Some(mem) = other.strip_prefix("zerofpr-lbfgs:") else {
                bail!(
                    "unknown solver {other:?}; expected fbs, ifbs, afbs, zerofpr-null, \
                     zerofpr-broyden, zerofpr-bfgs, zerofpr-sbfgs, or zerofpr-lbfgs[:M]"
                );
            };
            let mem: usize = mem
                .parse()
                .with_context(|| format!("invalid memory depth in {other:?}"))?;
            if mem == 0 {
                bail!("memory depth must be at least 1 in {other:?}");
            }
            SolverChoice::ZeroFpr(EngineChoice::Lbfgs(mem))
        }
    };
    Ok(choice)
}

pub fn make_engine(choice: EngineChoice, dim: usize) -> Box<dyn DirectionEngine<f64>> {
    match choice {
        EngineChoice::Null => Box::new(NullEngine),
        EngineChoice::Broyden => Box::new(Broyden::new(dim)),
        EngineChoice::Bfgs => Box::new(Bfgs::new(dim)),
        EngineChoice::SymBfgs => Box::new(SymBfgs::new(dim)),
        EngineChoice::Lbfgs(mem) => Box::new(Lbfgs::new(mem)),
    }
}

/// Instantiate the seeded problem a spec describes.
pub fn build_problem(spec: &ExperimentSpec, seed: u64) -> (ProblemF64, VectorF64) {
    match spec.kind {
        ExperimentKind::SparseApprox => {
            let inst = gen_sparse_approx(spec.n, spec.lambda, seed);
            (inst.problem, inst.x0)
        }
        ExperimentKind::DictLearning => {
            let inst =
                gen_dict_learning(spec.n, spec.m, spec.k, spec.n_keep, spec.t_bound, seed);
            (inst.problem, inst.x0)
        }
        ExperimentKind::MatDecomp => {
            let inst = gen_mat_decomp(spec.m, spec.n, spec.r, spec.lambda, seed);
            (inst.problem, inst.x0)
        }
    }
}

/// Run one named solver on one problem.
pub fn run_solver(
    problem: &ProblemF64,
    x0: &VectorF64,
    name: &str,
    cfg: &SolverConfig<f64>,
) -> Result<(VectorF64, RunTrace<f64>)> {
    let choice = parse_solver(name)?;
    let solved = match choice {
        SolverChoice::Fbs => fbs_solve(problem, x0, cfg),
        SolverChoice::Ifbs => ifbs_solve(problem, x0, cfg),
        SolverChoice::Afbs => afbs_solve(problem, x0, cfg),
        SolverChoice::ZeroFpr(engine) => {
            let mut engine = make_engine(engine, problem.dim);
            zerofpr_solve(problem, x0, cfg, engine.as_mut())
        }
    };
    solved.with_context(|| format!("solver {name} failed"))
}

fn solver_config(spec: &ExperimentSpec) -> SolverConfig<f64> {
    SolverConfig {
        tol: spec.tol,
        max_iters: spec.max_iters,
        ..SolverConfig::default()
    }
}

/// Run one (seed, solver) cell and summarize it as a result row.
pub fn run_one(
    spec: &ExperimentSpec,
    seed: u64,
    solver: &str,
) -> Result<(ResultRow, RunTrace<f64>)> {
    let (problem, x0) = build_problem(spec, seed);
    let cfg = solver_config(spec);
    let (point, trace) = run_solver(&problem, &x0, solver, &cfg)?;
    // Read the counters before the objective evaluation below, so the row
    // reports solver work only. The problem instance was fresh, so the
    // counters are run totals.
    let matvecs = problem.smooth.matvec_count();
    let prox_evals = problem.nonsmooth.prox_count();
    let final_obj = problem
        .phi(&point)
        .finite()
        .unwrap_or(f64::INFINITY);
    let row = ResultRow {
        experiment: spec.experiment_id(),
        solver: solver.to_string(),
        seed,
        iters: trace.rows.len(),
        matvecs,
        prox_evals,
        final_res: trace.final_res,
        final_obj,
        wall_ms: trace.wall_ms,
        status: trace.status,
    };
    Ok((row, trace))
}

/// Run every (seed, solver) cell of a spec. Cells execute on a pool of
/// `spec.threads` workers; the returned rows keep the deterministic
/// seed-major, solver-minor order regardless of scheduling. When `out_dir`
/// is given, each cell's trace lands there as its own CSV file.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    for name in &spec.solvers {
        parse_solver(name)?;
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
    }
    let cells: Vec<(u64, &str)> = spec
        .seeds()
        .flat_map(|seed| spec.solvers.iter().map(move |s| (seed, s.as_str())))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .context("building the worker pool")?;
    let write_gate = Mutex::new(());
    pool.install(|| {
        cells
            .par_iter()
            .map(|(seed, solver)| {
                let (row, trace) = run_one(spec, *seed, solver)?;
                if let Some(dir) = out_dir {
                    let name = trace_file_name(&row.experiment, solver, *seed);
                    let _guard = write_gate.lock().unwrap_or_else(|e| e.into_inner());
                    write_trace_csv(&dir.join(name), &trace)?;
                }
                Ok(row)
            })
            .collect::<Result<Vec<ResultRow>>>()
    })
}
