//! Simulator and theorem checks for the two-dimensional three-wave kinetic
//! equation restricted to measures on a Ξ-adic circular lattice.
//!
//! The modules build on each other bottom-up:
//!
//! - [`lattice`]: exact radii `m·Ξ^(−η)`, closure and resonance enumeration.
//! - [`state`]: per-direction shell amplitudes, the lattice norm, initial data.
//! - [`collision`]: the discrete collision operator and its weak-form oracle.
//! - [`integrator`]: RK4, Patankar and Picard time stepping, full runs.
//! - [`diagnostics`]: recorded functionals and the checks run on them.
//! - [`io`]: configuration documents, presets, CSV/JSON output and manifests.

// negated comparisons reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod config;
pub mod diagnostics;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod lattice;
pub mod state;

pub use collision::{rhs, weak_eval, CollisionOptions, ShellDerivative};
pub use config::{AngularProfile, ConfigError, IntegratorKind, ModelConfig};
pub use diagnostics::{DiagnosticsRecord, DirectionFunctionals};
pub use integrator::{run, RunOutput, StepControl};
pub use lattice::{LatticeError, LatticeRadius, ResonanceTriple, TripleKind};
pub use state::{build_initial, snorm, FullState, ShellState};
