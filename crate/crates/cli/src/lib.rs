//! Command-line experiments: exact solving of Dec-Tiger, seeded training
//! runs with CSV metrics and run manifests, φ/K robustness sweeps and a PCA
//! dispersion diagnostic of initial observations.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime error,
//! 3 search or enumeration budget exceeded.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod metrics;
pub mod pca;
pub mod sweep;

use clap::Parser;

pub use cli::{Cli, Command, Flags};
pub use config::{load_config, EnvKind, RunConfig, SolveMethod};
pub use error::CliError;
pub use manifest::RunManifest;

/// Runs one command line and returns the stdout report.
pub fn run<I, T>(args: I) -> Result<String, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    dispatch(cli.command)
}

pub fn dispatch(command: Command) -> Result<String, CliError> {
    match command {
        Command::Solve(f) => commands::cmd_solve(&f.into_config(false)?),
        Command::Train(f) => commands::cmd_train(&f.into_config(false)?),
        Command::Eval(f) => commands::cmd_eval(&f.into_config(false)?),
        Command::Sweep(f) => commands::cmd_sweep(&f.into_config(false)?),
        Command::DiagPca(f) => commands::cmd_diag_pca(&f.into_config(true)?),
    }
}
