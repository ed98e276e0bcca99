//! Library behavior on the shared analytic corpus: step map, solver, and
//! diagnostics claims checked against fixtures with known ground truth.

use approx::assert_abs_diff_eq;
use ndarray::array;

use zerofpr::diagnostics::{
    estimate_criticality_threshold, fd_gradient_check_fbe, second_order_report,
};
use zerofpr::direction::{Bfgs, Broyden, DirectionEngine, Lbfgs, NullEngine, SymBfgs};
use zerofpr::fbe::{check_quadratic_bound, prox_grad_step};
use zerofpr::problem::ExtReal;
use zerofpr::solver::{zerofpr_solve, SolverConfig, Status};
use zerofpr::{norm2, VectorF64};
use zerofpr_testlib::{make_quadratic, make_two_point_indicator};

#[test]
fn two_point_indicator_step_matches_fixture() {
    let ap = make_two_point_indicator();
    let step = prox_grad_step(&ap.problem, &array![-1.0], 0.5).unwrap();
    assert_eq!(step.x_bar[0], -1.0);
    assert_eq!(step.r[0], 0.0);
    // gamma = 2 exceeds 1/L but not gamma_g; the step pulls -1 across
    // zero and the prox snaps to +1.
    let step = prox_grad_step(&ap.problem, &array![-1.0], 2.0).unwrap();
    assert_eq!(step.x_bar[0], 1.0);
}

#[test]
fn quadratic_bound_holds_trivially_at_a_fixed_point() {
    let ap = make_two_point_indicator();
    // x = -1 is a fixed point at gamma = 0.5: x_bar = x, both sides f(x).
    let step = prox_grad_step(&ap.problem, &array![-1.0], 0.5).unwrap();
    assert!(check_quadratic_bound(&step, &ap.problem, 0.1));
}

#[test]
fn broyden_solves_a_conditioned_quadratic_fast() {
    let inst = make_quadratic(20, 100.0, 7);
    let expected = inst.analytic.known_minimizer.clone().unwrap();
    let cfg = SolverConfig {
        tol: 1e-9,
        max_iters: 250,
        ..SolverConfig::default()
    };
    let mut engine = Broyden::new(20);
    let (x, trace) =
        zerofpr_solve(&inst.analytic.problem, &VectorF64::zeros(20), &cfg, &mut engine).unwrap();
    assert_eq!(trace.status, Status::Converged);
    // Plain forward-backward at this conditioning contracts by about
    // 1 - gamma lambda_min per iteration and would need roughly 2300
    // iterations to reach this tolerance; Broyden gets there in ~160.
    assert!(
        trace.rows.len() <= 250,
        "needed {} iterations",
        trace.rows.len()
    );
    for i in 0..20 {
        assert_abs_diff_eq!(x[i], expected[i], epsilon = 1e-6);
    }
}

#[test]
fn sign_pair_problem_converges_to_minus_one_with_any_engine() {
    let p = make_two_point_indicator();
    let problem = p.problem;
    let x0 = array![-0.4];
    let cfg = SolverConfig {
        gamma: Some(0.5),
        tol: 1e-12,
        ..SolverConfig::default()
    };
    let engines: Vec<Box<dyn DirectionEngine<f64>>> = vec![
        Box::new(NullEngine),
        Box::new(Broyden::new(1)),
        Box::new(Bfgs::new(1)),
        Box::new(SymBfgs::new(1)),
        Box::new(Lbfgs::new(10)),
    ];
    for mut engine in engines {
        let (x, trace) = zerofpr_solve(&problem, &x0, &cfg, engine.as_mut()).unwrap();
        assert_eq!(trace.status, Status::Converged, "{}", trace.solver);
        assert_eq!(x[0], -1.0, "{}", trace.solver);
        // The solution is a fixed point of the forward-backward map.
        let step = prox_grad_step(&problem, &x, 0.5).unwrap();
        assert_eq!(step.x_bar[0], -1.0);
        assert_eq!(norm2(&step.r), 0.0);
        assert_eq!(problem.phi(&x), ExtReal::Finite(0.5), "{}", trace.solver);
    }
}

#[test]
fn envelope_gradient_vanishes_at_a_critical_point() {
    let ap = make_two_point_indicator();
    let report = fd_gradient_check_fbe(&ap.problem, &array![-1.0], 0.5).unwrap();
    assert!(report.prox_jump.is_none());
    assert!(report.max_rel_err <= 1e-4, "err {}", report.max_rel_err);
    assert!(report.analytic_grad[0].abs() <= 1e-12);
}

#[test]
fn probe_detects_multivalued_prox_between_the_two_points() {
    // At x = 0 the forward point sits exactly between the two feasible
    // points, so +-h probes land on different prox selections.
    let ap = make_two_point_indicator();
    let report = fd_gradient_check_fbe(&ap.problem, &array![0.0], 0.5).unwrap();
    let jump = report.prox_jump.expect("jump must be detected");
    assert!(jump > 1.9, "jump {jump}");
}

#[test]
fn second_order_report_at_isolated_feasible_point() {
    // Constant prox near the solution: J_R = 1/gamma and the envelope
    // Hessian is (1 - gamma)/gamma.
    let ap = make_two_point_indicator();
    let gamma = 0.5;
    let report = second_order_report(&ap.problem, &array![-1.0], gamma).unwrap();
    assert_abs_diff_eq!(report.j_r[[0, 0]], 1.0 / gamma, epsilon = 1e-6);
    assert_abs_diff_eq!(report.h_fbe[[0, 0]], (1.0 - gamma) / gamma, epsilon = 1e-6);
    assert!(report.min_eig > 0.0);
    assert_eq!(report.symmetry_defect, 0.0);
}

#[test]
fn criticality_threshold_of_the_two_feasible_points_is_one() {
    let ap = make_two_point_indicator();
    for x in [1.0, -1.0] {
        let gamma = estimate_criticality_threshold(&ap.problem, &array![x], 4.0, 1e-9).unwrap();
        assert_abs_diff_eq!(gamma, 1.0, epsilon = 1e-6);
    }
}
