//! Forward-backward envelope toolkit for nonconvex composite minimization.
//!
//! The crate minimizes `phi(x) = f(x) + g(x)` where `f` is smooth with an
//! L-Lipschitz gradient and `g` is proper, closed, and prox-bounded; neither
//! term needs to be convex. Everything is organized around the forward-backward
//! envelope
//!
//! ```text
//! phi_gamma(x) = f(x) - (gamma/2) ||grad f(x)||^2 + g^gamma(x - gamma grad f(x))
//! ```
//!
//! a real-valued, continuous merit function that agrees with `phi` on the
//! fixed points of the prox-gradient map and upper-bounds it elsewhere.
//!
//! Module layout:
//! - [`problem`]: oracle traits, extended reals, composite problem records.
//! - [`prox`]: catalog of proximal operators and set projections.
//! - [`fbe`]: prox-gradient steps, envelope values, step-size management.
//! - [`direction`]: quasi-Newton direction engines (Broyden, BFGS, L-BFGS).
//! - [`solver`]: the ZeroFPR solver plus forward-backward baselines.
//! - [`diagnostics`]: rate classification, derivative checks, second-order
//!   envelope reports, criticality thresholds.

pub mod diagnostics;
pub mod direction;
pub mod fbe;
pub mod problem;
pub mod prox;
pub mod solver;

use std::fmt;
use std::iter::Sum;

use ndarray::{Array1, Array2, ScalarOperand};
use num_traits::{Float, FromPrimitive};

/// Scalar type every numerical routine is generic over.
///
/// Implemented for `f32` and `f64` only; the bound set is what the solver
/// loops actually need (IEEE float ops, conversion from literal constants,
/// ndarray scalar broadcasting).
pub trait Real:
    Float + FromPrimitive + ScalarOperand + Sum + fmt::Debug + fmt::Display + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Dense column vector.
pub type Vector<T> = Array1<T>;
/// Dense matrix, row-major by default; flattening conventions are documented
/// where matrix-valued variables are packed into vectors.
pub type Matrix<T> = Array2<T>;

/// Concrete aliases for the common double-precision instantiation.
pub type VectorF64 = Vector<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type ProblemF64 = problem::Problem<f64>;
pub type SolverConfigF64 = solver::SolverConfig<f64>;
pub type RunTraceF64 = solver::RunTrace<f64>;

/// Single-precision counterparts.
pub type VectorF32 = Vector<f32>;
pub type MatrixF32 = Matrix<f32>;
pub type ProblemF32 = problem::Problem<f32>;
pub type SolverConfigF32 = solver::SolverConfig<f32>;
pub type RunTraceF32 = solver::RunTrace<f32>;

/// Crate-wide error type. Numeric payloads are formatted into the message at
/// construction; errors are cold paths and generics in variants buy nothing.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("step size out of range: {0}")]
    GammaOutOfRange(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("nonfinite value: {0}")]
    Nonfinite(String),
    #[error("step-size backtracking exceeded {0} adjustments")]
    GammaAdjustmentCap(usize),
    #[error("invalid block partition: {0}")]
    Partition(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("sequence too short: {0}")]
    ShortSequence(String),
    #[error("linear algebra backend: {0}")]
    Linalg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Euclidean norm.
pub fn norm2<T: Real>(v: &Vector<T>) -> T {
    v.dot(v).sqrt()
}

/// Squared Euclidean norm.
pub fn norm2_sq<T: Real>(v: &Vector<T>) -> T {
    v.dot(v)
}

/// Convert an f64 constant into the working scalar type.
///
/// Panics only if `T` cannot represent any f64, which the `Real` impls rule
/// out (overflow saturates to infinity rather than failing for f32).
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert into the scalar type")
}
