//! Experiment runner for the homogenization toolkit: configuration,
//! coefficient generators, the study commands and their CSV/SVG output.

pub mod coefficient;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::Report;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

/// Writes `<stem>.csv`, and `<stem>.svg` when requested and available.
/// Returns the paths written.
pub fn write_report(report: &Report, out: &Path, svg: bool) -> CliResult<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let csv = out.join(format!("{}.csv", report.stem));
    report.table.write_csv(&csv)?;
    let mut written = vec![csv];
    if svg {
        if let Some(content) = &report.svg {
            let path = out.join(format!("{}.svg", report.stem));
            output::write_svg(&path, content)?;
            written.push(path);
        }
    }
    Ok(written)
}
