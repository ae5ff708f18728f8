//! Synthesis and closed-loop simulation of postprocessing internal-model
//! regulators for multivariable nonlinear plants in partial normal form.
//!
//! The crate is organized around the design pipeline:
//!
//! - [`normal_form`]: the structural matrices determined by a chain
//!   signature (F, H, C, the internal-model shift/injection family, and the
//!   high-gain scaling matrices).
//! - [`plant`]: the plant/exosystem contract as a bundle of callable maps,
//!   the built-in three-state example plant and linear benchmark plants,
//!   and a finite-difference validator for the chain structure.
//! - [`gain_synthesis`]: the EMU factorization, the four stabilizer-matrix
//!   routes, the cascade gain, and the assembled [`gain_synthesis::GainSet`].
//! - [`regulator`]: the internal-model unit, the control law, the ideal
//!   steady state η₁*, and the internal-model mismatch estimate.
//! - [`assumption_checks`]: sampled certification of the controllability
//!   conditions with margin reports.
//! - [`sim_engine`]: RK4/RK45 integration of the closed loop, tail
//!   statistics, ω-limit sampling and parameter sweeps.
//! - [`config`] / [`cli`]: the JSON run-configuration schema and the
//!   command front end used by the `postreg` binary.
//!
//! Run `cargo run --example reproduce_fig1` for an end-to-end tour.

pub mod assumption_checks;
pub mod cli;
pub mod config;
pub mod error;
pub mod gain_synthesis;
pub mod linalg;
pub mod normal_form;
pub mod plant;
pub mod regulator;
pub mod sim_engine;

pub use error::{Error, Result};
