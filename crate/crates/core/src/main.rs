//! Command-line entry point.

use clap::{Parser, Subcommand};
use georecover::harness::{self, evaluate, read_recovered_csv, ExperimentConfig, RunStatus, SelftestConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "georecover", version, about = "Distance recovery from noisy comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file and print its report.
    Run {
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo check of the inner-product concentration bound.
    Selftest {
        #[arg(long, default_value_t = 5000)]
        trials: usize,
        /// Overrides the pinned constant.
        #[arg(long)]
        c: Option<f64>,
    },
    /// Print `(f, d′, m)` for one pair of the configured sample.
    DumpPair { config: PathBuf, i: usize, j: usize },
    /// Score a recovered CSV against the configured sample.
    Evaluate { recovered: PathBuf, config: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let failure = harness::report::FailureInfo::from(&e);
            eprintln!("{}", serde_json::to_string(&failure).expect("failure serializes"));
            ExitCode::from(RunStatus::Failure.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> georecover::Result<ExitCode> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if out.is_some() {
                cfg.output.dir = out;
            }
            let report = harness::run_experiment(&cfg);
            println!("{}", report.to_json());
            Ok(ExitCode::from(report.status.exit_code() as u8))
        }
        Command::Selftest { trials, c } => {
            let mut cfg = SelftestConfig { trials, ..Default::default() };
            if let Some(c) = c {
                cfg.c = c;
            }
            let report = harness::concentration_selftest(&cfg);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            let status = if report.all_pass { RunStatus::Ok } else { RunStatus::ContractViolation };
            Ok(ExitCode::from(status.exit_code() as u8))
        }
        Command::DumpPair { config, i, j } => {
            let oracle = harness::build_oracle(&ExperimentConfig::load(&config)?)?;
            let (f, d, m) = oracle.dump_pair(i, j)?;
            let line = serde_json::json!({ "i": i, "j": j, "f": f, "d_noisy": d, "mask": m });
            println!("{line}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { recovered, config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let oracle = harness::build_oracle(&cfg)?;
            let (indices, metric) = read_recovered_csv(&recovered)?;
            let report = evaluate(&metric, &cfg.space, &oracle.sample, &indices)?;
            println!("{}", report.to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}
