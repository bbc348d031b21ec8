use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adabo_cli::{cmd_benchmark, cmd_optimize, cmd_report, cmd_sensitivity, parse_config, with_workers, CliError, Outcome};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adabo", version, about = "Adaptive Bayesian optimization, benchmarking and sensitivity analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long, value_name = "DIR", env = "ADABO_OUT")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", env = "ADABO_WORKERS")]
    workers: Option<usize>,
    /// Added to every seed in the config.
    #[arg(long, value_name = "K", default_value_t = 0)]
    seed_offset: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run every optimizer configuration at every seed.
    Optimize(Common),
    /// Compare challengers against a reference set and emit the WCRI table.
    Benchmark(Common),
    /// Sobol' sensitivity indices with bootstrap intervals.
    Sensitivity(Common),
    /// Recompute WCRI table and plot data from a benchmark directory.
    Report {
        /// Directory written by `benchmark`.
        #[arg(long, value_name = "DIR")]
        from: PathBuf,
        /// Output directory (default: the input directory).
        #[arg(long, value_name = "DIR", env = "ADABO_OUT")]
        out: Option<PathBuf>,
    },
}

type Cmd = fn(&adabo_cli::ExperimentSpec, &Path) -> Result<Outcome, CliError>;

fn run_configured(common: &Common, cmd: Cmd) -> Result<Outcome, CliError> {
    let spec = parse_config(&common.config)?.with_seed_offset(common.seed_offset)?;
    let out = common.out.clone().or_else(|| spec.out.clone()).unwrap_or_else(|| PathBuf::from("adabo-out"));
    log::info!("writing to {}", out.display());
    with_workers(common.workers, || cmd(&spec, &out))?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Optimize(c) => run_configured(c, cmd_optimize),
        Command::Benchmark(c) => run_configured(c, cmd_benchmark),
        Command::Sensitivity(c) => run_configured(c, cmd_sensitivity),
        Command::Report { from, out } => cmd_report(from, out.as_deref().unwrap_or(from)),
    };
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.failed_runs > 0 {
                eprintln!("{} run(s) aborted", outcome.failed_runs);
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("adabo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
