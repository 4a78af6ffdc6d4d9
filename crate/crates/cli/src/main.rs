use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use strain_cascade::error::EXIT_OK;
use strain_cascade::{
    cmd_simulate, cmd_sweep, cmd_thresholds, cmd_validate, cmd_verify, parse_config, Axis, CliError,
    InitialSource, Summary,
};

#[derive(Parser)]
#[command(name = "strain-cascade", version, about = "Multi-strain, multi-patch SIS threshold cascade")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and list schema violations.
    Validate(Common),
    /// Run the cascade and write the threshold report.
    Thresholds(Common),
    /// Integrate the full system and write the trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Seed for a random positive initial state.
        #[arg(long, conflicts_with = "initial")]
        seed: Option<u64>,
        /// JSON array with the initial state `S_1, T_1_1, …, T_p_n`.
        #[arg(long)]
        initial: Option<PathBuf>,
    },
    /// Check convergence to the cascade equilibrium from one random state per seed.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Verify this single seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run the cascade over a one-parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// `param=start:stop:steps`, e.g. `beta_diag[1][2]=0.5:4:50`.
        #[arg(long)]
        axis: Axis,
    },
}

fn run(cli: Cli) -> Result<Summary, CliError> {
    let common = match &cli.command {
        Command::Validate(c) | Command::Thresholds(c) => c,
        Command::Simulate { common, .. } | Command::Verify { common, .. } | Command::Sweep { common, .. } => {
            common
        }
    };
    let mut config = parse_config(&common.config)?;
    let out = common.out.clone().unwrap_or_else(|| config.outputs.dir.clone());
    match &cli.command {
        Command::Validate(_) => cmd_validate(&config),
        Command::Thresholds(_) => cmd_thresholds(&config, &out),
        Command::Simulate { seed, initial, .. } => {
            let source = match (initial, seed) {
                (Some(path), _) => InitialSource::File(path.clone()),
                (None, Some(seed)) => InitialSource::Seed(*seed),
                (None, None) => InitialSource::Seed(config.seeds.first().copied().unwrap_or(0)),
            };
            cmd_simulate(&config, &out, &source)
        }
        Command::Verify { seed, .. } => {
            if let Some(seed) = seed {
                config.seeds = vec![*seed];
            }
            cmd_verify(&config, &out)
        }
        Command::Sweep { axis, .. } => cmd_sweep(&config, &out, axis),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            for f in &summary.files {
                eprintln!("wrote {}", f.display());
            }
            ExitCode::from(EXIT_OK)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
