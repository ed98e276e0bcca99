use std::time::Instant;

use ndarray::Array1;
use zerofpr::diagnostics::{classify_rate, fd_gradient_check_fbe, second_order_report};
use zerofpr::direction::Broyden;
use zerofpr::solver::{zerofpr_solve, SolverConfig};
use zerofpr_bench::{build_problem, run_solver, ExperimentKind, ExperimentSpec};
use zerofpr_testlib::{make_lasso, make_quadratic};

fn probe_broyden(p: &zerofpr::ProblemF64, label: &str) {
    let x0 = Array1::zeros(p.dim);
    let cfg = SolverConfig {
        tol: 1e-9,
        max_iters: 500,
        ..Default::default()
    };
    let mut eng = Broyden::new(p.dim);
    let (point, trace) = zerofpr_solve(p, &x0, &cfg, &mut eng).unwrap();
    let res: Vec<f64> = trace.rows.iter().map(|r| r.res_norm).collect();
    let class = classify_rate(&res)
        .map(|r| format!("{:?}", r.class))
        .unwrap_or_else(|e| format!("ERR {e}"));
    let r0 = res[0];
    let k0 = res.iter().position(|&r| r <= 1e-3 * r0);
    let tau_bad = match k0 {
        Some(i) => trace.rows[i + 1..]
            .iter()
            .filter(|row| row.tau != 1.0)
            .count(),
        None => usize::MAX,
    };
    let gamma = trace.rows.last().unwrap().gamma;
    let so = second_order_report(p, &point, gamma)
        .map(|r| format!("sym={:.2e} mineig={:.3e}", r.symmetry_defect, r.min_eig))
        .unwrap_or_else(|e| format!("SO-ERR {e}"));
    let gc = fd_gradient_check_fbe(p, &point, gamma)
        .map(|r| format!("gerr={:.2e}", r.max_rel_err))
        .unwrap_or_else(|e| format!("GC-ERR {e}"));
    println!(
        "{label}: status={:?} iters={} k0={:?} tau_bad={tau_bad} class={class} {so} {gc}",
        trace.status,
        res.len(),
        k0
    );
}

#[test]
fn probe_a4_a6() {
    for cond in [10.0, 30.0, 50.0, 100.0] {
        for seed in 0..10 {
            let inst = make_quadratic(20, cond, seed);
            probe_broyden(
                &inst.analytic.problem,
                &format!("quad cond={cond} seed={seed}"),
            );
        }
    }
    for lambda in [0.5, 1.0] {
        for seed in 0..10 {
            let ap = make_lasso(40, 20, lambda, seed);
            probe_broyden(&ap.problem, &format!("lasso lam={lambda} seed={seed}"));
        }
    }
}

#[test]
fn probe_a3_timing() {
    for (n, lambda) in [(500usize, 0.1), (500, 0.01), (1000, 0.1), (1000, 0.01)] {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::SparseApprox);
        spec.n = n;
        spec.lambda = lambda;
        spec.tol = 1e-6;
        spec.max_iters = 200_000;
        for solver in ["fbs", "zerofpr-lbfgs"] {
            let (p, x0) = build_problem(&spec, 0);
            let t0 = Instant::now();
            let cfg = SolverConfig {
                tol: spec.tol,
                max_iters: spec.max_iters,
                ..Default::default()
            };
            let (_, trace) = run_solver(&p, &x0, solver, &cfg).unwrap();
            println!(
                "a3 n={n} lam={lambda} {solver}: status={:?} iters={} matvecs={} wall={:.2}s",
                trace.status,
                trace.rows.len(),
                p.smooth.matvec_count(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}

#[test]
fn probe_a8_timing() {
    for seed in 0..5u64 {
        let mut spec = ExperimentSpec::defaults(ExperimentKind::DictLearning);
        spec.n = 20;
        spec.m = 200;
        spec.k = 30;
        spec.n_keep = 3;
        spec.t_bound = 1e6;
        spec.tol = 1e-4;
        spec.max_iters = 50_000;
        for solver in ["fbs", "zerofpr-lbfgs"] {
            let (p, x0) = build_problem(&spec, seed);
            let t0 = Instant::now();
            let cfg = SolverConfig {
                tol: spec.tol,
                max_iters: spec.max_iters,
                ..Default::default()
            };
            let (_, trace) = run_solver(&p, &x0, solver, &cfg).unwrap();
            println!(
                "a8 seed={seed} {solver}: status={:?} iters={} fevals={} wall={:.2}s",
                trace.status,
                trace.rows.len(),
                p.smooth.eval_count(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
