//! Three-lake reservoir case study on top of `cfcc-smpc`: TOML case files,
//! closed-loop runs written as data files, Monte-Carlo validation of the
//! chance levels, and a CDF/PDF inversion helper.

pub mod config;
pub mod data;
pub mod error;
pub mod invert;
pub mod run;
pub mod validate;

pub use config::{load_config, parse_config, CaseConfig, Feedback};
pub use data::DataFile;
pub use error::{CliError, ConfigError};
pub use run::{data_file, run_case, summary, write_run};
pub use validate::{validate_monte_carlo, Bound, ValidationReport};

/// The bundled default case.
pub const THREE_LAKES: &str = include_str!("../configs/three_lakes.toml");
