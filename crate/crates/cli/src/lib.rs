//! Batch driver: reads a scenario, runs one command, writes artifacts.

pub mod scenario;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use levy_lmm::interpolation::interpolate_term_structure;
use levy_lmm::lmm_dynamics::extend_tenor_many;
use levy_lmm::measure_engine::MeasureLabel;
use levy_lmm::simulator::{caplet_price_mc, mean_and_se, simulate, RatePathSet};
use levy_lmm::stochastic_driver::check_conditions;
use levy_lmm::termstructure::discount;
use levy_lmm::validation::{black_caplet_reference, consistency_suite, product_integral};

pub use scenario::{parse_scenario, parse_scenario_in, Overrides, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Build,
    Extend,
    Interpolate,
    Simulate,
    Validate,
    Price,
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    /// False when a validation check failed.
    pub passed: bool,
}

fn write_json(dir: &Path, name: &str, value: &impl serde::Serialize) -> Result<()> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)?;
    fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_paths_csv(dir: &Path, paths: &RatePathSet) -> Result<()> {
    let path = dir.join("paths.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "path,time,maturity,rate")?;
    for (p, t, m, r) in paths.rows() {
        writeln!(out, "{p},{t},{m},{r}")?;
    }
    out.flush().with_context(|| format!("writing {}", path.display()))
}

fn fixing_summary(paths: &RatePathSet) -> Result<Vec<Value>> {
    paths
        .maturities()
        .iter()
        .enumerate()
        .map(|(c, &m)| {
            let fixings: Vec<f64> = (0..paths.n_paths())
                .map(|p| paths.fixing(p, c))
                .collect::<levy_lmm::Result<_>>()?;
            let (mean, se) = mean_and_se(&fixings);
            Ok(json!({
                "maturity": m,
                "initial": paths.initial_rate(c),
                "fixing_mean": mean,
                "standard_error": se,
            }))
        })
        .collect()
}

/// Runs `command` and writes its artifacts into `out`.
pub fn run(command: Command, scenario: &Scenario, out: &Path) -> Result<Outcome> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let model = &scenario.model;
    let mut passed = true;
    let report = match command {
        Command::Build => {
            let conditions = check_conditions(&model.chars, &model.vols, model.horizon(), None)?;
            write_json(out, "model.json", model)?;
            json!({
                "command": "build",
                "maturities": model.grid.maturities(),
                "initial_rates": model.initial_rates,
                "conditions": conditions,
            })
        }
        Command::Extend => {
            let extended = extend_tenor_many(model, &scenario.extensions)?;
            write_json(out, "model.json", &extended)?;
            json!({
                "command": "extend",
                "added": scenario.extensions.len(),
                "maturities": extended.grid.maturities(),
                "initial_rates": extended.initial_rates,
                "loading_sum": extended.vols.loading_sum(),
            })
        }
        Command::Interpolate => {
            let spot = model.with_measure(MeasureLabel::SpotLibor)?;
            let paths = simulate(&spot, &scenario.sim, &[])?;
            let it = interpolate_term_structure(&paths, &spot.grid, &spot.curve, &scenario.interpolate, 1e-10)?;
            write_json(out, "model.json", &spot)?;
            json!({
                "command": "interpolate",
                "paths": paths.n_paths(),
                "seed": paths.seed(),
                "gamma": it.solutions().collect::<Vec<_>>(),
            })
        }
        Command::Simulate => {
            let maturities: Vec<f64> = scenario
                .interpolate
                .iter()
                .cloned()
                .filter(|&t| t <= model.horizon())
                .collect();
            let paths = simulate(model, &scenario.sim, &maturities)?;
            write_paths_csv(out, &paths)?;
            write_json(out, "model.json", model)?;
            json!({
                "command": "simulate",
                "measure": model.measure,
                "paths": paths.n_paths(),
                "seed": paths.seed(),
                "step": paths.step(),
                "rates": fixing_summary(&paths)?,
            })
        }
        Command::Validate => {
            let report = consistency_suite(model, &scenario.sim);
            passed = report.passed;
            write_json(out, "model.json", model)?;
            serde_json::to_value(&report)?
        }
        Command::Price => {
            let maturities: Vec<f64> = scenario
                .caplets
                .iter()
                .map(|c| c.fixing)
                .filter(|t| model.grid.index_of(*t).is_none())
                .collect();
            let mut sorted = maturities.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            let paths = simulate(model, &scenario.sim, &sorted)?;
            let delta = model.delta();
            let mut rows = Vec::new();
            for c in &scenario.caplets {
                let (price, se) = caplet_price_mc(&paths, c.strike, c.fixing, delta, &model.curve)?;
                let mut row = json!({
                    "fixing": c.fixing,
                    "strike": c.strike,
                    "price": price,
                    "standard_error": se,
                });
                if !model.chars.has_jumps() {
                    if let Some(j) = model.grid.index_of(c.fixing) {
                        let lambda = &model.vols.grid_loadings()[j - 1];
                        let sq = levy_lmm::piecewise::PiecewiseConstant::new(
                            lambda.breakpoints().to_vec(),
                            lambda.values().iter().map(|v| v * v).collect(),
                        )?;
                        let vol = product_integral(&sq, &model.chars.diffusion, 0.0, c.fixing).sqrt();
                        let l0 = model.initial_rates[j - 1];
                        let df = discount(&model.curve, c.fixing + delta)?;
                        row["black"] = json!(black_caplet_reference(l0, c.strike, vol, df, delta)?);
                    }
                }
                rows.push(row);
            }
            write_json(out, "model.json", model)?;
            json!({
                "command": "price",
                "measure": model.measure,
                "paths": paths.n_paths(),
                "seed": paths.seed(),
                "caplets": rows,
            })
        }
    };
    write_json(out, "report.json", &report)?;
    Ok(Outcome { report, passed })
}
