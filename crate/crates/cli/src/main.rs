use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;

use levy_lmm_cli::{parse_scenario_in, run, Command, Overrides};

/// Jump-diffusion LIBOR market model toolkit.
#[derive(Debug, Parser)]
#[command(name = "levy-lmm", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// Scenario document (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory for report.json, model.json and paths.csv.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    /// Simulation step in years.
    #[arg(long)]
    step: Option<f64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = (|| {
        let text = std::fs::read_to_string(&args.scenario)
            .with_context(|| format!("reading {}", args.scenario.display()))?;
        let base = args.scenario.parent().map(PathBuf::from).unwrap_or_default();
        let overrides = Overrides {
            seed: args.seed,
            paths: args.paths,
            step: args.step,
        };
        let scenario = parse_scenario_in(&text, &base, overrides)?;
        run(args.command, &scenario, &args.out)
    })();
    match result {
        Ok(outcome) if outcome.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("validation failed; see {}", args.out.join("report.json").display());
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
