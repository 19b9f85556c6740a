//! Library side of the `midlink` command-line tool: run configuration,
//! distance sweeps and table output.

pub mod commands;
pub mod config;
pub mod error;
pub mod sweep;

pub use config::{parse_config, OutputFormat, RunConfig, SweepSpec, KEYS};
pub use error::{CliError, Location};
pub use sweep::{emit, sweep_rates};

use std::path::Path;

/// Defaults, overlaid by the file at `path` if one is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::File {
                path: p.to_path_buf(),
                source,
            })?;
            parse_config(&text)
        }
    }
}

/// Applies command-line settings on top of `config`.
pub fn apply_overrides<'a, I>(config: &mut RunConfig, overrides: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    for (key, value) in overrides {
        config.set(key, value).map_err(|message| CliError::Config {
            location: Location::Flag,
            key: format!("--{}", key.replace('_', "-")),
            message,
        })?;
    }
    config.validate().map_err(|(key, message)| CliError::Config {
        location: Location::Flag,
        key: key.to_string(),
        message,
    })
}
