//! Extremum-seeking output regulation with an adaptive nonlinear internal model.
//!
//! Building blocks, bottom up:
//!
//! - [`linalg`]: small dense matrices, Routh-Hurwitz, Lyapunov.
//! - [`internal_model`]: the compensator `(M, N)`, the map `T(a)` and the
//!   saturated feedforward `χ_s`.
//! - [`oracle`]: harmonic-balance steady states used as ground truth.
//! - [`plant`]: exosystem, plant trait and the benchmark plant.
//! - [`control`]: dither laws A and B and the compensator dynamics.
//! - [`averaging`]: Lie brackets and averaged vector fields.
//! - [`closed_loop`]: state layout and the dithered, averaged and split loop fields.
//! - [`sim`]: RK4 integration, trajectories and error views.
//! - [`scenario`]: JSON scenarios for the `escreg` binary.
//! - [`report`], [`sweep`]: CSV output and dither-frequency sweeps.

pub mod control;
pub mod internal_model;
pub mod linalg;
pub mod oracle;
pub mod plant;
pub mod averaging;
pub mod closed_loop;
pub mod sim;
pub mod scenario;
pub mod report;
pub mod sweep;
