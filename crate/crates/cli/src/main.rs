use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spde_cli::{exit, replay, run, sweep, CommonOptions};
use tracing_subscriber::EnvFilter;

/// Pathwise uniqueness experiments for stochastic Fokker-Planck and porous-media equations.
#[derive(Debug, Parser)]
#[command(name = "spde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed; overrides the config file and SPDE_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: the config's `output`, else ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Skip the SVG figures.
    #[arg(long, global = true)]
    no_figures: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run one experiment per value of a scalar config key.
    Sweep {
        config: PathBuf,
        /// Dotted key, e.g. `time.dt` or `experiment.delta`.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Re-run member 0 on a dumped noise path.
    Replay {
        increments: PathBuf,
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: could not start {n} worker threads: {e}");
            return ExitCode::from(exit::CONFIG);
        }
    }
    let opts = CommonOptions {
        seed: cli.seed,
        out: cli.out,
        figures: !cli.no_figures,
    };
    let result = match &cli.command {
        Command::Run { config } => run(config, &opts),
        Command::Sweep {
            config,
            axis,
            values,
        } => sweep(config, axis, values, &opts),
        Command::Replay { increments, config } => replay(increments, config, &opts),
    };
    match result {
        Ok(code) => {
            if code == exit::VERDICT_FAILURE {
                eprintln!("verdict: FAIL (see report.json)");
            }
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
