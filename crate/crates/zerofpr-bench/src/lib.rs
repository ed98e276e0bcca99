//! Benchmark harness for the `zerofpr` solvers: seeded problem generators
//! for sparse approximation, dictionary learning, and low-rank plus sparse
//! decomposition, a solver registry, parallel experiment execution, and CSV
//! reporting. The `zerofpr-bench` binary exposes all of it on the command
//! line; this library carries the logic so tests can drive it directly.

pub mod config;
pub mod experiments;
pub mod output;
pub mod run;

pub use config::{build_spec, parse_kv, spec_from_problem_file, ExperimentKind, ExperimentSpec};
pub use experiments::{
    gen_dict_learning, gen_mat_decomp, gen_mat_decomp_with, gen_sparse_approx,
    DictLearningInstance, DictSmooth, MatDecompInstance, SparseApproxInstance,
};
pub use output::{
    results_csv, trace_csv, trace_file_name, write_results_csv, write_trace_csv, ResultRow,
    RESULTS_HEADER, TRACE_HEADER,
};
pub use run::{
    build_problem, make_engine, parse_solver, run_experiment, run_one, run_solver, EngineChoice,
    SolverChoice, DEFAULT_LBFGS_MEMORY,
};
