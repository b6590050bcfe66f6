//! Command implementations of the `ipi` binary.

pub mod config;
pub mod error;
pub mod output;
pub mod verify;

use std::path::Path;

use ipi_core::driver::run_problem;
use ipi_core::IpiError;

pub use config::{load_config, parse_config, ExperimentConfig, OutputConfig, OUTPUT_DIR_ENV};
pub use error::CliError;

/// `ipi run <config>`: runs the experiment and writes its artifacts.
pub fn cmd_run(config_path: &Path) -> Result<std::path::PathBuf, CliError> {
    let cfg = load_config(config_path)?;
    let problem = cfg.ipi().build().map_err(|e| match e {
        IpiError::Configuration(message) => CliError::Schema {
            path: ".".into(),
            message,
        },
        other => CliError::Runtime(other),
    })?;
    let log = run_problem(&problem)?;
    let dir = cfg.output_dir();
    output::write_run(&problem, &log, &cfg.output, &dir)?;
    Ok(dir)
}

/// `ipi compare <a> <b>`: returns the comparison and whether at least
/// `min_fraction` of the points are within `rel_tol`.
pub fn cmd_compare(
    a: &Path,
    b: &Path,
    rel_tol: f64,
    min_fraction: f64,
) -> Result<(ipi_core::driver::GridComparison, bool), CliError> {
    let ga = output::read_value_grid(a)?;
    let gb = output::read_value_grid(b)?;
    let c = output::compare_grids(&ga, &gb, rel_tol)?;
    Ok((c, c.within >= min_fraction))
}
