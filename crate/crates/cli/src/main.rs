use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safestep::harness::{self, Mode, ScenarioConfig};
use safestep::Error;

#[derive(Parser)]
#[command(name = "safestep", version, about = "Hierarchical CBF walking simulator among pushable boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its logs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario mode: baseline, cbf or cbf_dob.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write trajectory.svg and barriers.svg.
        #[arg(long)]
        plots: bool,
    },
    /// Run every config matching a glob pattern.
    Sweep {
        #[arg(long)]
        configs: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Run each config with seeds 0..N instead of its own seed.
        #[arg(long)]
        seeds: Option<u64>,
    },
    /// Recompute summaries from steps.csv and compare.
    Verify {
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parameter(_) => 2,
        Error::SimulationFault { .. } | Error::Numerical(_) => 3,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            out,
            mode,
            seed,
            plots,
        } => {
            let mut cfg = ScenarioConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.scenario.mode = m.parse::<Mode>()?;
            }
            if let Some(s) = seed {
                cfg.scenario.seed = s;
            }
            let s = harness::run_scenario(&cfg, &out, plots)?;
            println!(
                "{} mode={} seed={} goal_reached={} fell={} min_h1={} min_h2={} steps={}",
                s.inputs.name,
                s.inputs.mode,
                s.inputs.seed,
                s.goal_reached,
                s.failure,
                fmt_opt(s.min_h1),
                fmt_opt(s.min_h2),
                s.steps
            );
        }
        Command::Sweep {
            configs,
            out,
            jobs,
            seeds,
        } => {
            let paths = harness::expand_glob(&configs)?;
            if paths.is_empty() {
                return Err(Error::Config(format!("no config matches `{configs}`")));
            }
            let report = harness::run_sweep(&harness::sweep_jobs(&paths, seeds)?, &out, jobs)?;
            println!(
                "runs={} failed={} goal_reached_rate={:.3} ordering_success_rate={}",
                report.completed,
                report.failed,
                report.goal_reached_rate,
                fmt_opt(report.ordering_success_rate)
            );
        }
        Command::Verify { out } => {
            let n = harness::verify(&out)?;
            println!("verified {n} run(s)");
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |x| format!("{x:.4}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}
