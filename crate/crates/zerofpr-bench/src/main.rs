//! Command-line front end: `bench` sweeps (seed, solver) cells of one
//! experiment into CSV files, `solve` runs a single instance and prints a
//! summary, `diagnose` inspects the envelope at a given point.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use zerofpr::diagnostics::{fd_gradient_check_fbe, second_order_report};
use zerofpr::fbe::prox_grad_step;
use zerofpr::{norm2, VectorF64};
use zerofpr_bench::{
    build_spec, parse_kv, results_csv, run_experiment, run_one, spec_from_problem_file,
    trace_csv, ExperimentKind, ExperimentSpec,
};

#[derive(Parser)]
#[command(
    name = "zerofpr-bench",
    about = "Benchmark harness for the zerofpr solvers",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (seed, solver) cell of one experiment and write CSVs.
    Bench(BenchArgs),
    /// Solve one instance with one solver and print a summary.
    Solve(SolveArgs),
    /// Probe the envelope at a point of an instance.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment kind: sparse_approx, dict_learning, or mat_decomp.
    kind: String,
    /// Optional key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long = "n-keep")]
    n_keep: Option<usize>,
    #[arg(long = "t-bound")]
    t_bound: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Base seed; repetition i runs at seed + i.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeded repetitions.
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated solver names.
    #[arg(long)]
    solvers: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Output directory for results.csv and per-run trace files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SolveArgs {
    /// Problem file (key=value; must set kind).
    #[arg(long)]
    problem: PathBuf,
    /// Solver name from the registry.
    #[arg(long)]
    solver: String,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<usize>,
    /// Write the per-iteration trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Problem file (key=value; must set kind).
    #[arg(long)]
    problem: PathBuf,
    /// Point file: whitespace-separated numbers, problem dimension of them.
    #[arg(long)]
    point: PathBuf,
    /// Step size for the probes; defaults to 0.95/L when the instance
    /// declares a Lipschitz constant.
    #[arg(long)]
    gamma: Option<f64>,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Bench(args) => bench(args),
        Cmd::Solve(args) => solve(args),
        Cmd::Diagnose(args) => diagnose(args),
    }
}

fn bench(args: BenchArgs) -> Result<()> {
    let kind = ExperimentKind::parse(&args.kind)?;
    let file_pairs = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            parse_kv(&text)?
        }
        None => Vec::new(),
    };
    let mut cli_pairs: Vec<(String, String)> = Vec::new();
    let mut push = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            cli_pairs.push((key.to_string(), v));
        }
    };
    push("n", args.n.map(|v| v.to_string()));
    push("m", args.m.map(|v| v.to_string()));
    push("k", args.k.map(|v| v.to_string()));
    push("r", args.r.map(|v| v.to_string()));
    push("n_keep", args.n_keep.map(|v| v.to_string()));
    push("t_bound", args.t_bound.map(|v| v.to_string()));
    push("lambda", args.lambda.map(|v| v.to_string()));
    push("seed", args.seed.map(|v| v.to_string()));
    push("seeds", args.seeds.map(|v| v.to_string()));
    push("solvers", args.solvers.clone());
    push("tol", args.tol.map(|v| v.to_string()));
    push("max_iters", args.max_iters.map(|v| v.to_string()));
    push("threads", args.threads.map(|v| v.to_string()));
    let spec = build_spec(kind, &file_pairs, &cli_pairs)?;

    let rows = run_experiment(&spec, Some(&args.out))?;
    let results_path = args.out.join("results.csv");
    fs::write(&results_path, results_csv(&rows))
        .with_context(|| format!("writing {}", results_path.display()))?;

    let converged = rows
        .iter()
        .filter(|r| r.status == zerofpr::solver::Status::Converged)
        .count();
    println!(
        "{}: {} runs ({} converged) -> {}",
        spec.experiment_id(),
        rows.len(),
        converged,
        results_path.display()
    );
    Ok(())
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading problem file {}", path.display()))?;
    spec_from_problem_file(&text)
}

fn solve(args: SolveArgs) -> Result<()> {
    let mut spec = load_spec(&args.problem)?;
    if let Some(tol) = args.tol {
        spec.tol = tol;
    }
    if let Some(max_iters) = args.max_iters {
        spec.max_iters = max_iters;
    }
    spec.solvers = vec![args.solver.clone()];
    spec.validate()?;

    let (row, trace) = run_one(&spec, spec.seed, &args.solver)?;
    if let Some(path) = &args.trace {
        fs::write(path, trace_csv(&trace))
            .with_context(|| format!("writing trace to {}", path.display()))?;
    }
    println!("experiment: {}", row.experiment);
    println!("solver:     {}", row.solver);
    println!("seed:       {}", row.seed);
    println!("status:     {}", row.status.as_str());
    println!("iters:      {}", row.iters);
    println!("matvecs:    {}", row.matvecs);
    println!("prox_evals: {}", row.prox_evals);
    println!("final_res:  {:e}", row.final_res);
    println!("final_obj:  {}", row.final_obj);
    println!("wall_ms:    {:.3}", row.wall_ms);
    Ok(())
}

fn read_point(path: &Path, dim: usize) -> Result<VectorF64> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading point file {}", path.display()))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .with_context(|| format!("invalid number {tok:?} in {}", path.display()))
        })
        .collect::<Result<_>>()?;
    if values.len() != dim {
        bail!(
            "point file {} has {} entries, problem dimension is {}",
            path.display(),
            values.len(),
            dim
        );
    }
    Ok(VectorF64::from(values))
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let spec = load_spec(&args.problem)?;
    let (problem, _) = zerofpr_bench::build_problem(&spec, spec.seed);
    let x = read_point(&args.point, problem.dim)?;
    let gamma = match (args.gamma, problem.lipschitz) {
        (Some(g), _) => g,
        (None, Some(l)) => {
            let cap = match problem.nonsmooth.gamma_bound() {
                zerofpr::problem::ExtReal::Finite(b) => (1.0 / l).min(0.5 * b),
                zerofpr::problem::ExtReal::PosInf => 1.0 / l,
            };
            0.95 * cap
        }
        (None, None) => bail!(
            "the instance declares no Lipschitz constant; pass an explicit --gamma"
        ),
    };

    let step = prox_grad_step(&problem, &x, gamma)?;
    println!("gamma:           {gamma:e}");
    println!("residual norm:   {:e}", norm2(&step.r));
    println!("envelope value:  {}", step.fbe);

    let grad = fd_gradient_check_fbe(&problem, &x, gamma)?;
    println!("grad check err:  {:e}", grad.max_rel_err);
    if let Some(jump) = grad.prox_jump {
        println!("prox jump:       {jump:e} (gradient check unreliable)");
    }

    match second_order_report(&problem, &x, gamma) {
        Ok(report) => {
            println!("symmetry defect: {:e}", report.symmetry_defect);
            println!("min eigenvalue:  {:e}", report.min_eig);
            if let Some(jump) = report.prox_jump {
                println!("prox jump:       {jump:e}");
            }
        }
        Err(err) => println!("second order:    skipped ({err})"),
    }
    Ok(())
}

// The run loop is exercised end to end by the integration tests; `main`
// itself only maps flags onto the library. A smoke test for the argument
// plumbing lives in tests/cli.rs.
#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
