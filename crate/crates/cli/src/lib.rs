//! Command-line driver for the HJM Monte Carlo pricer: configuration,
//! convergence studies and CSV output.

pub mod config;
pub mod error;
pub mod study;

pub use config::{ContractSpec, ModelSpec, RunConfig};
pub use error::{CliError, CliResult};
pub use study::{
    emit_csv, fitted_slope, read_csv, run_convergence_study, run_price, run_reference, StudyRow,
};
