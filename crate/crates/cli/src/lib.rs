//! Front end for the `pcwqed` library: TOML run configs, one function per
//! subcommand, CSV tables and static SVG charts.
//!
//! Thread count follows `RAYON_NUM_THREADS`; results do not depend on it.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

pub use commands::Output;
pub use config::RunConfig;
pub use error::CliError;

/// Which artifacts to write. Text reports are always written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    Both,
}

/// Writes `out` below `dir` and returns the paths in write order.
pub fn write_output(out: &Output, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<(String, String)> = Vec::new();
    if format != Format::Svg {
        files.extend(out.tables.iter().map(|t| (format!("{}.csv", t.name), t.to_csv())));
    }
    if format != Format::Csv {
        files.extend(out.plots.iter().map(|p| (format!("{}.svg", p.name), output::render_svg(p))));
    }
    files.extend(out.reports.iter().cloned());
    files
        .into_iter()
        .map(|(name, body)| {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(path)
        })
        .collect()
}
