//! Almost-sure stabilizability toolkit for controlled degenerate diffusions.
//!
//! The crate is split the same way the workflow is:
//!
//! - [`model`]: controlled diffusions `dX = f(X, α) dt + σ(X, α) dB`, finite control grids,
//!   Lyapunov candidates with first/second order jets, comparison envelopes and target sets.
//! - [`verifier`]: pointwise constrained decrease conditions (plain, strict, exponential,
//!   radial, viability, set-valued) aggregated into [`verifier::VerificationReport`]s.
//! - [`feedback`]: universal-formula feedback synthesis for control-affine systems and the
//!   resulting closed loop.
//! - [`simulator`]: Euler–Maruyama paths driven by a counter-based noise source, a Monte Carlo
//!   harness and empirical stability certificates.
//! - [`scenario`]: scenario files, the built-in catalog and the `verify → synthesize →
//!   simulate → certify` pipeline used by the `stochstab` binary.

// negated float comparisons are used on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expr;
pub mod feedback;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod simulator;
pub mod verifier;

pub use error::{Error, Result};
pub use model::{
    ComparisonPair, ControlSet, ControlSetSpec, ControlSystem, LyapunovCandidate, SubjetElement,
    TargetSet,
};

use std::sync::Arc;

/// Point of the state space `R^N`.
pub type State = nalgebra::DVector<f64>;
/// Point of the control grid (length `P`, possibly zero for uncontrolled systems).
pub type Control = nalgebra::DVector<f64>;
/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

/// `(x, α) ↦ f(x, α)`.
pub type VectorField = Arc<dyn Fn(&State, &Control) -> State + Send + Sync>;
/// `(x, α) ↦ σ(x, α)`, an `N × M` matrix.
pub type DispersionField = Arc<dyn Fn(&State, &Control) -> Matrix + Send + Sync>;
/// `x ↦ v(x)`.
pub type ScalarField = Arc<dyn Fn(&State) -> f64 + Send + Sync>;
/// `x ↦ F(x)` for uncontrolled vector fields.
pub type StateField = Arc<dyn Fn(&State) -> State + Send + Sync>;
/// `x ↦ M(x)` for matrix-valued maps such as Hessians.
pub type MatrixField = Arc<dyn Fn(&State) -> Matrix + Send + Sync>;

/// Builds a [`State`] from a slice.
pub fn state(values: &[f64]) -> State {
    State::from_column_slice(values)
}
