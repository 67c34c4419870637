//! Config-driven experiment runner for the torus Monge–Ampère toolkit.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod error;
pub mod mat1;
pub mod run;

pub use config::{ExperimentConfig, Kind};
pub use error::CliError;
pub use run::{plot_data, run, Outcome};
