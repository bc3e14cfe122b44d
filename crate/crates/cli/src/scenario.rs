//! Scenario documents: the JSON input of every command.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use levy_lmm::lmm_dynamics::{ModelSpec, VolatilitySpec};
use levy_lmm::measure_engine::{MeasureLabel, RateRef};
use levy_lmm::piecewise::PiecewiseConstant;
use levy_lmm::simulator::{Recording, SimConfig};
use levy_lmm::stochastic_driver::{JumpDensity, LevyCharacteristics};
use levy_lmm::termstructure::{build_equidistant_grid, DiscountCurve, TenorGrid};

pub const DEFAULT_PATHS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 42;
/// Default step is `delta / DEFAULT_STEPS_PER_PERIOD`.
pub const DEFAULT_STEPS_PER_PERIOD: usize = 8;

/// A number or an explicit step function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepInput {
    Constant(f64),
    Steps { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl StepInput {
    fn resolve(&self, field: &str) -> Result<PiecewiseConstant> {
        match self {
            StepInput::Constant(v) => Ok(PiecewiseConstant::constant(*v)),
            StepInput::Steps { breakpoints, values } => {
                PiecewiseConstant::new(breakpoints.clone(), values.clone()).with_context(|| format!("field `{field}`"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveSource {
    Pillars { pillars: Vec<(f64, f64)> },
    Csv { csv: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInput {
    pub first: f64,
    pub spacing: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturityLoading {
    pub maturity: f64,
    pub lambda: StepInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VolatilityInput {
    /// One loading for every rate, grid or interpolated.
    Flat(f64),
    Table {
        /// One entry per grid rate.
        grid: Vec<StepInput>,
        #[serde(default)]
        maturities: Vec<MaturityLoading>,
        #[serde(default)]
        fallback: Option<StepInput>,
        #[serde(default)]
        cap: Option<f64>,
        #[serde(default)]
        sum_bound: Option<f64>,
    },
}

fn zero() -> StepInput {
    StepInput::Constant(0.0)
}

fn one() -> StepInput {
    StepInput::Constant(1.0)
}

fn no_jumps() -> JumpDensity {
    JumpDensity::Gaussian { mean: 0.0, sd: 0.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacteristicsInput {
    #[serde(default = "one")]
    pub c: StepInput,
    #[serde(default = "zero")]
    pub eta: StepInput,
    #[serde(default = "zero")]
    pub b: StepInput,
    #[serde(default = "no_jumps")]
    pub jumps: JumpDensity,
}

impl Default for CharacteristicsInput {
    fn default() -> Self {
        Self {
            c: one(),
            eta: zero(),
            b: zero(),
            jumps: no_jumps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationInput {
    pub step: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub every_step: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtensionInput {
    pub lambda: StepInput,
    /// Defaults to the last existing initial rate.
    pub initial_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrikeInput {
    Rate(f64),
    /// `"atm"`: strike at the initial forward rate.
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapletInput {
    pub fixing: f64,
    pub strike: StrikeInput,
}

/// The document as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub curve: CurveSource,
    #[serde(default)]
    pub grid: Option<GridInput>,
    pub volatility: VolatilityInput,
    #[serde(default)]
    pub characteristics: CharacteristicsInput,
    #[serde(default)]
    pub measure: Option<MeasureLabel>,
    #[serde(default)]
    pub simulation: SimulationInput,
    #[serde(default)]
    pub interpolate: Vec<f64>,
    #[serde(default)]
    pub extensions: Vec<ExtensionInput>,
    #[serde(default)]
    pub caplets: Vec<CapletInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Caplet {
    pub fixing: f64,
    pub strike: f64,
}

/// A validated scenario with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub model: ModelSpec,
    pub sim: SimConfig,
    pub interpolate: Vec<f64>,
    pub extensions: Vec<(PiecewiseConstant, f64)>,
    pub caplets: Vec<Caplet>,
}

/// Command-line overrides of the simulation block.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub step: Option<f64>,
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_in(text, Path::new("."), Overrides::default())
}

/// Parses a scenario; relative CSV paths resolve against `base`.
pub fn parse_scenario_in(text: &str, base: &Path, overrides: Overrides) -> Result<Scenario> {
    let doc: ScenarioDoc = serde_json::from_str(text).context("scenario is not a valid document")?;
    resolve(&doc, base, overrides)
}

fn derive_grid(curve: &DiscountCurve) -> Result<TenorGrid> {
    let pillars: Vec<f64> = curve.pillars().iter().map(|p| p.0).filter(|&t| t > 0.0).collect();
    if pillars.len() < 2 {
        bail!("field `grid`: at least two positive pillars are needed to derive a grid");
    }
    let first = pillars[0];
    let spacing = pillars[1] - pillars[0];
    let count = ((curve.last_maturity() - first) / spacing + 1e-9).floor() as usize + 1;
    Ok(build_equidistant_grid(first, spacing, count)?)
}

fn resolve(doc: &ScenarioDoc, base: &Path, overrides: Overrides) -> Result<Scenario> {
    let curve = match &doc.curve {
        CurveSource::Pillars { pillars } => DiscountCurve::new(pillars.clone()).context("field `curve`")?,
        CurveSource::Csv { csv } => {
            let path = base.join(csv);
            DiscountCurve::from_csv_path(&path)
                .with_context(|| format!("field `curve`: reading {}", path.display()))?
        }
    };
    let grid = match &doc.grid {
        Some(g) => build_equidistant_grid(g.first, g.spacing, g.count).context("field `grid`")?,
        None => derive_grid(&curve)?,
    };
    let n = grid.rate_count();
    let vols = match &doc.volatility {
        VolatilityInput::Flat(l) => VolatilitySpec::flat(n, *l).context("field `volatility`")?,
        VolatilityInput::Table {
            grid: rows,
            maturities,
            fallback,
            cap,
            sum_bound,
        } => {
            if rows.len() != n {
                bail!("field `volatility.grid`: {} loadings given for {n} grid rates", rows.len());
            }
            let grid_fns = rows
                .iter()
                .enumerate()
                .map(|(k, r)| r.resolve(&format!("volatility.grid[{k}]")))
                .collect::<Result<Vec<_>>>()?;
            let overrides = maturities
                .iter()
                .enumerate()
                .map(|(k, m)| Ok((m.maturity, m.lambda.resolve(&format!("volatility.maturities[{k}]"))?)))
                .collect::<Result<Vec<_>>>()?;
            let fallback = fallback.as_ref().map(|f| f.resolve("volatility.fallback")).transpose()?;
            let sup = grid_fns
                .iter()
                .chain(overrides.iter().map(|(_, f)| f))
                .chain(fallback.iter())
                .map(|f| f.sup())
                .fold(0.0, f64::max);
            VolatilitySpec::new(grid_fns, overrides, fallback, cap.unwrap_or(sup.max(1.0)), *sum_bound)
                .context("field `volatility`")?
        }
    };
    let ch = &doc.characteristics;
    let chars = LevyCharacteristics::new(
        ch.b.resolve("characteristics.b")?,
        ch.c.resolve("characteristics.c")?,
        ch.eta.resolve("characteristics.eta")?,
        ch.jumps.clone(),
    )
    .context("field `characteristics`")?;
    let measure = doc.measure.unwrap_or(MeasureLabel::SpotLibor);
    let model = ModelSpec::new(grid.clone(), curve, vols, chars, measure).context("model")?;

    for &t in &doc.interpolate {
        if !(t > 0.0 && t <= grid.last()) {
            bail!("field `interpolate`: date {t} lies outside (0, {}]", grid.last());
        }
        if grid.index_of(t).is_none() {
            model
                .vols
                .function_for(&grid, RateRef::OffGrid(t))
                .map_err(|e| anyhow!("field `interpolate`: no volatility for maturity {t}: {e}"))?;
        }
    }

    let sim = &doc.simulation;
    let step = overrides
        .step
        .or(sim.step)
        .unwrap_or(grid.spacing() / DEFAULT_STEPS_PER_PERIOD as f64);
    let mut config = SimConfig::new(
        step,
        overrides.paths.or(sim.paths).unwrap_or(DEFAULT_PATHS),
        overrides.seed.or(sim.seed).unwrap_or(DEFAULT_SEED),
    );
    if sim.every_step {
        config = config.with_recording(Recording::EveryStep);
    }
    if !(config.step > 0.0) || config.n_paths == 0 {
        bail!("field `simulation`: step and paths must be positive");
    }

    let mut last = *model.initial_rates.last().expect("grid has rates");
    let extensions = doc
        .extensions
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let l0 = e.initial_rate.unwrap_or(last);
            last = l0;
            Ok((e.lambda.resolve(&format!("extensions[{k}].lambda"))?, l0))
        })
        .collect::<Result<Vec<_>>>()?;

    let caplets = doc
        .caplets
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let strike = match &c.strike {
                StrikeInput::Rate(r) => *r,
                StrikeInput::Keyword(w) if w == "atm" => model
                    .initial_rate(match grid.index_of(c.fixing) {
                        Some(j) => RateRef::Grid(j),
                        None => RateRef::OffGrid(c.fixing),
                    })
                    .with_context(|| format!("field `caplets[{k}]`"))?,
                StrikeInput::Keyword(w) => bail!("field `caplets[{k}].strike`: unknown keyword `{w}`"),
            };
            Ok(Caplet {
                fixing: c.fixing,
                strike,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Scenario {
        model,
        sim: config,
        interpolate: doc.interpolate.clone(),
        extensions,
        caplets,
    })
}
