//! Tensor power iteration on random overcomplete symmetric tensors.
//!
//! The tensor `T = Σ_i a_i^{⊗2m}` is never materialized: every contraction goes
//! through the component matrix `A` (rows `a_i`), so one iteration costs `O(kd)`.
//!
//! - [`model`] draws the random instance and the initial iterate.
//! - [`tensor`] holds the implicit/explicit contractions, the objective
//!   `S(x) = ‖Ax‖_{2m}^{2m}` and its gradient.
//! - [`power_iter`] runs the normalized fixed-point map and records trajectories.
//! - [`conditioning`] turns a recorded trajectory into the Gram–Schmidt
//!   quantities of the Gaussian conditioning expansion (`g_t`, `v_t`, `α_{i,t}`, `P`, `Q`).
//! - [`experiments`] is the deterministic Monte-Carlo harness.
//! - [`io`] and [`cli`] handle configuration, CSV/JSON emission and the `tpi` binary.

pub mod cli;
pub mod conditioning;
pub mod error;
pub mod experiments;
pub mod io;
pub mod model;
pub mod numeric;
pub mod power_iter;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use model::{sample_components, sample_sphere_init, ComponentMatrix, InitialVector};
pub use power_iter::{recovery_metric, run, step, RunOptions, StepRecord, Termination, Trajectory};
