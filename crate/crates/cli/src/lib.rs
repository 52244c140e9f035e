//! Command-line front end for the ellipsoidal shell library.
//!
//! Subcommands: `sample` (draw points from a model file), `fit` and
//! `fit-mixture` (estimate models from point files), `density` (evaluate
//! shell distances and log-densities), and `experiment` (run a named
//! simulation study). All randomness is seeded; identical invocations
//! produce byte-identical data outputs.

pub mod args;
pub mod commands;
pub mod error;
pub mod experiments;
pub mod model_file;
pub mod points_io;
pub mod report;

use args::{Cli, Command};
use error::CliError;
use experiments::ExperimentRequest;
use model_file::Provenance;

/// Dispatches one parsed invocation. `command_line` is the full textual
/// command, recorded in output provenance blocks.
pub fn run(cli: Cli, command_line: String) -> Result<(), CliError> {
    let provenance = Provenance {
        seed: cli.seed,
        command: command_line.clone(),
        timestamp: model_file::timestamp_now(),
    };
    match cli.command {
        Command::Sample { model, n } => commands::cmd_sample(
            &model,
            n,
            cli.seed,
            commands::require_out(&cli.out)?,
            cli.format,
        ),
        Command::Fit {
            points,
            method,
            report,
        } => commands::cmd_fit(
            &points,
            method,
            commands::require_out(&cli.out)?,
            report.as_deref(),
            provenance,
        ),
        Command::FitMixture {
            points,
            k,
            report,
            max_iters,
            ll_rel_tol,
            min_mass,
            kmeans_restarts,
            literal_xi_bar,
        } => commands::cmd_fit_mixture(
            &points,
            k,
            cli.seed,
            commands::require_out(&cli.out)?,
            report.as_deref(),
            max_iters,
            ll_rel_tol,
            min_mass,
            kmeans_restarts,
            literal_xi_bar,
            provenance,
        ),
        Command::Density {
            model,
            points,
            mode,
        } => commands::cmd_density(&model, &points, mode, commands::require_out(&cli.out)?),
        Command::Experiment {
            name,
            replicates,
            n_grid,
        } => experiments::run_experiment(&ExperimentRequest {
            name,
            replicates,
            n_grid,
            seed: cli.seed,
            out_dir: commands::require_out(&cli.out)?.to_path_buf(),
            command_line,
        }),
    }
}
