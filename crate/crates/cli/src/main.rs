use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use catenary_core::scenario::{read_log, resolve_scenario, run_scenario, Metrics, BUILTIN_SCENARIOS};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "catenary", version, about = "Two-quadrotor cable robot box manipulation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its CSV log.
    Simulate {
        /// Builtin scenario name or path to a JSON config.
        #[arg(long)]
        scenario: String,
        /// Control and integration period (s).
        #[arg(long)]
        dt: Option<f64>,
        /// Simulated time (s).
        #[arg(long)]
        duration: Option<f64>,
        /// Log destination; defaults to the config's output or stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print tracking statistics of a CSV log.
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        /// Append the report to this file as well.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// List the builtin scenarios.
    ListScenarios,
}

fn simulate(scenario: &str, dt: Option<f64>, duration: Option<f64>, out: Option<PathBuf>) -> Result<()> {
    let mut config = resolve_scenario(scenario).with_context(|| format!("loading scenario {scenario:?}"))?;
    if let Some(dt) = dt {
        config.sim.dt = dt;
    }
    if let Some(duration) = duration {
        config.sim.duration = duration;
    }
    config.validate().context("checking scenario")?;
    let summary = match out.or_else(|| config.sim.output.clone()) {
        Some(path) => {
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            let mut writer = BufWriter::new(file);
            let summary = run_scenario(&config, &mut writer)?;
            writer.flush()?;
            summary
        }
        None => {
            let mut writer = BufWriter::new(io::stdout().lock());
            let summary = run_scenario(&config, &mut writer)?;
            writer.flush()?;
            summary
        }
    };
    eprintln!("{}: {} steps", config.name, summary.steps);
    for (t, from, to) in &summary.transitions {
        eprintln!("  t={t:.3} {} -> {}", from.label(), to.label());
    }
    Ok(())
}

fn analyze(input: &PathBuf, metrics_out: Option<PathBuf>) -> Result<()> {
    let file = File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let records = read_log(BufReader::new(file)).with_context(|| format!("reading {}", input.display()))?;
    let report = Metrics::compute(&records, f64::NEG_INFINITY).report();
    print!("{report}");
    if let Some(path) = metrics_out {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with_context(|| format!("opening {}", path.display()))?;
        f.write_all(report.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { scenario, dt, duration, out } => simulate(&scenario, dt, duration, out),
        Command::Analyze { input, metrics_out } => analyze(&input, metrics_out),
        Command::ListScenarios => {
            for (name, about) in BUILTIN_SCENARIOS {
                println!("{name:<22}{about}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
