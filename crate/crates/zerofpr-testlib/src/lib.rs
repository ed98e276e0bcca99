//! Shared test assets for the solver workspace: analytic problems with
//! known solutions, seeded data generation, and per-iteration inequality
//! auditors for solver traces.
//!
//! Everything is concrete `f64`: test corpora want bitwise reproducibility,
//! not genericity.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod audit;
pub mod problems;

pub use audit::{audit_inequalities, verify_lipschitz, AuditFailure, AuditReport};
pub use problems::{
    make_lasso, make_power_five_thirds, make_quadratic, make_two_point_indicator,
    AnalyticProblem, QuadraticInstance,
};

/// Splittable seeded randomness: one master seed, independent numbered
/// streams. Every generator in the workspace flows from here so that any
/// corpus is reproducible from a single 64-bit seed.
#[derive(Clone, Copy, Debug)]
pub struct SeedSplitter {
    master: u64,
}

impl SeedSplitter {
    pub fn new(master: u64) -> Self {
        SeedSplitter { master }
    }

    /// Independent stream `i` of the master seed.
    pub fn stream(&self, i: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(i);
        rng
    }
}
