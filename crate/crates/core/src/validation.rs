//! Martingale tests, the Black oracle, and the consistency suite.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::interpolation::{interpolate_term_structure, BondReconstruction};
use crate::lmm_dynamics::{
    extend_tenor, interpolated_sde_coefficients, spot_sde_coefficients, ModelSpec, RateState,
};
use crate::measure_engine::{density_path, MeasureLabel, MeasurePair};
use crate::piecewise::PiecewiseConstant;
use crate::simulator::{caplet_price_mc, grid_of, mean_and_se, simulate, RatePathSet, SimConfig};
use crate::termstructure::discount;

/// Statistical checks pass within this many standard errors.
pub const Z_THRESHOLD: f64 = 3.0;
const GRID_REDUCTION_TOL: f64 = 1e-14;
const GAMMA_TOL: f64 = 1e-10;
const COMPOSITION_TOL: f64 = 1e-12;
const TELESCOPING_TOL: f64 = 1e-14;
const GRID_REDUCTION_PROBES: usize = 100;
const GAMMA_DATES_PER_INTERVAL: usize = 5;
const DETERMINISM_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleOutcome {
    pub mean: f64,
    pub initial: f64,
    pub standard_error: f64,
    pub z: f64,
}

impl MartingaleOutcome {
    pub fn passed(&self) -> bool {
        self.z.abs() <= Z_THRESHOLD
    }
}

fn z_score(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Tests `E^measure[L(T, T)] = L(0, T)`, reweighting by the density when the
/// paths live under another measure.
pub fn martingale_test(paths: &RatePathSet, measure: MeasureLabel, maturity: f64) -> Result<MartingaleOutcome> {
    let col = paths
        .column_of(maturity)
        .ok_or_else(|| Error::Dependency(format!("rate L(., {maturity}) was not simulated")))?;
    let node = paths
        .node_of(maturity)
        .ok_or_else(|| Error::Dependency(format!("fixing date {maturity} was not recorded")))?;
    let samples: Vec<f64> = if paths.measure().same_as(&measure) {
        (0..paths.n_paths()).map(|p| paths.value(p, node, col)).collect()
    } else {
        let grid = grid_of(paths)?;
        let density = density_path(
            paths,
            &grid,
            &MeasurePair {
                source: paths.measure(),
                target: measure,
            },
        )?;
        (0..paths.n_paths())
            .map(|p| paths.value(p, node, col) * density.value(p, node))
            .collect()
    };
    let (mean, se) = mean_and_se(&samples);
    let initial = paths.initial_rate(col);
    Ok(MartingaleOutcome {
        mean,
        initial,
        standard_error: se,
        z: z_score(mean - initial, se),
    })
}

/// Black caplet value `DF delta (L0 Phi(d1) - K Phi(d2))`.
pub fn black_caplet_reference(l0: f64, strike: f64, total_vol: f64, df: f64, delta: f64) -> Result<f64> {
    if !(total_vol >= 0.0) || !total_vol.is_finite() {
        return Err(Error::Validation(format!("total volatility must be >= 0, got {total_vol}")));
    }
    if !(l0 > 0.0) {
        return Err(Error::Validation(format!("Black formula needs L0 > 0, got {l0}")));
    }
    if total_vol == 0.0 || strike <= 0.0 {
        return Ok(df * delta * (l0 - strike).max(0.0));
    }
    let n = Normal::standard();
    let d1 = ((l0 / strike).ln() + 0.5 * total_vol * total_vol) / total_vol;
    let d2 = d1 - total_vol;
    Ok(df * delta * (l0 * n.cdf(d1) - strike * n.cdf(d2)))
}

/// `int_a^b f(t) g(t) dt` for two step functions.
pub fn product_integral(f: &PiecewiseConstant, g: &PiecewiseConstant, a: f64, b: f64) -> f64 {
    let mut knots: Vec<f64> = f
        .breakpoints()
        .iter()
        .chain(g.breakpoints())
        .cloned()
        .filter(|&t| t > a && t < b)
        .collect();
    knots.push(a);
    knots.push(b);
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots
        .windows(2)
        .map(|w| f.value(w[0]) * g.value(w[0]) * (w[1] - w[0]))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckGroup {
    /// (a) interpolated coefficients at grid dates against spot coefficients.
    GridReduction,
    /// (b) residuals, endpoints and monotonicity of the blend weights.
    Gamma,
    /// (c) density composition, unit mean and the telescoping identity.
    Density,
    /// (d) zero-jump caplet under the spot measure against Black.
    BlackReduction,
    /// (e) tenor extension leaves earlier rates untouched.
    Extension,
    /// (f) identical seeds give identical paths.
    Determinism,
}

impl CheckGroup {
    pub const ALL: [CheckGroup; 6] = [
        CheckGroup::GridReduction,
        CheckGroup::Gamma,
        CheckGroup::Density,
        CheckGroup::BlackReduction,
        CheckGroup::Extension,
        CheckGroup::Determinism,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub group: CheckGroup,
    pub statistic: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub runtime_seconds: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn from_checks(checks: Vec<CheckResult>) -> Self {
        let passed = checks.iter().all(|c| c.passed);
        Self { checks, passed }
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn group_passed(&self, group: CheckGroup) -> bool {
        self.checks.iter().filter(|c| c.group == group).all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Entry {
    name: &'static str,
    statistic: f64,
    tolerance: f64,
    passed: bool,
    detail: String,
}

fn entry(name: &'static str, statistic: f64, tolerance: f64) -> Entry {
    Entry {
        name,
        statistic,
        tolerance,
        passed: statistic <= tolerance,
        detail: String::new(),
    }
}

/// Spot-measure paths shared by the gamma and density checks.
struct Shared {
    spot: ModelSpec,
    paths: Option<Result<RatePathSet>>,
}

impl Shared {
    fn paths(&mut self, config: &SimConfig) -> Result<&RatePathSet> {
        if self.paths.is_none() {
            let cfg = config.clone();
            self.paths = Some(simulate(&self.spot, &cfg, &[]));
        }
        match self.paths.as_ref().unwrap() {
            Ok(p) => Ok(p),
            Err(e) => Err(e.clone()),
        }
    }
}

/// Runs every check group.
pub fn consistency_suite(model: &ModelSpec, config: &SimConfig) -> ValidationReport {
    consistency_suite_groups(model, config, &CheckGroup::ALL)
}

/// Runs the selected check groups. Failures, including errors raised while
/// evaluating a check, are reported rather than returned.
pub fn consistency_suite_groups(model: &ModelSpec, config: &SimConfig, groups: &[CheckGroup]) -> ValidationReport {
    let mut shared = Shared {
        spot: model.with_measure(MeasureLabel::SpotLibor).expect("spot measure always exists"),
        paths: None,
    };
    let mut checks = Vec::new();
    for &group in groups {
        let start = Instant::now();
        let outcome = match group {
            CheckGroup::GridReduction => grid_reduction(model, config.seed),
            CheckGroup::Gamma => gamma_checks(&mut shared, config),
            CheckGroup::Density => density_checks(&mut shared, config),
            CheckGroup::BlackReduction => black_reduction(model, config),
            CheckGroup::Extension => extension_checks(model, config),
            CheckGroup::Determinism => determinism(model, config),
        };
        let runtime = start.elapsed().as_secs_f64();
        match outcome {
            Ok(entries) => {
                let share = runtime / entries.len().max(1) as f64;
                for e in entries {
                    checks.push(CheckResult {
                        name: e.name.to_string(),
                        group,
                        statistic: e.statistic,
                        tolerance: e.tolerance,
                        passed: e.passed,
                        runtime_seconds: share,
                        detail: e.detail,
                    });
                }
            }
            Err(err) => checks.push(CheckResult {
                name: format!("{group:?}"),
                group,
                statistic: f64::NAN,
                tolerance: f64::NAN,
                passed: false,
                runtime_seconds: runtime,
                detail: err.to_string(),
            }),
        }
    }
    ValidationReport::from_checks(checks)
}

fn grid_reduction(model: &ModelSpec, seed: u64) -> Result<Vec<Entry>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.rate_count();
    let mut worst = 0.0f64;
    for _ in 0..GRID_REDUCTION_PROBES {
        let s = rng.random_range(1..=n);
        let ts = model.grid.maturity(s);
        let t = rng.random_range(0.0..=ts);
        let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.2)).collect();
        let state = RateState::new(rates.clone()).with_off_grid(ts, rates[s - 1]);
        let a = interpolated_sde_coefficients(model, ts, t, &state)?;
        let b = spot_sde_coefficients(model, s, t, &state)?;
        worst = worst
            .max((a.drift - b.drift).abs())
            .max((a.diffusion - b.diffusion).abs())
            .max((a.correction_rate - b.correction_rate).abs());
    }
    Ok(vec![entry("grid-reduction", worst, GRID_REDUCTION_TOL)])
}

fn gamma_dates(model: &ModelSpec) -> Vec<f64> {
    let grid = &model.grid;
    let mut dates = Vec::new();
    let mut prev = 0.0;
    for k in 1..=grid.count() {
        let end = grid.maturity(k);
        for j in 1..=GAMMA_DATES_PER_INTERVAL {
            dates.push(prev + (end - prev) * j as f64 / (GAMMA_DATES_PER_INTERVAL + 1) as f64);
        }
        prev = end;
    }
    dates
}

fn gamma_checks(shared: &mut Shared, config: &SimConfig) -> Result<Vec<Entry>> {
    let grid = shared.spot.grid.clone();
    let curve = shared.spot.curve.clone();
    let dates = gamma_dates(&shared.spot);
    let paths = shared.paths(config)?;
    let it = interpolate_term_structure(paths, &grid, &curve, &dates, GAMMA_TOL)?;
    let residual = it.solutions().map(|s| s.residual).fold(0.0, f64::max);
    let mut endpoint_error = 0.0f64;
    let mut monotone_violation = 0.0f64;
    for interval in &it.intervals {
        endpoint_error = endpoint_error
            .max(interval.gamma(interval.start).map_or(1.0, |g| g.abs()))
            .max(interval.gamma(interval.end).map_or(1.0, |g| (g - 1.0).abs()));
        let mut pts = interval.points.clone();
        pts.sort_by(|a, b| a.maturity.partial_cmp(&b.maturity).unwrap());
        for w in pts.windows(2) {
            monotone_violation = monotone_violation.max(w[0].gamma - w[1].gamma);
        }
    }
    Ok(vec![
        entry("gamma-residual", residual, GAMMA_TOL),
        entry("gamma-endpoints", endpoint_error, 0.0),
        entry("gamma-monotone", monotone_violation.max(0.0), 0.0),
    ])
}

fn density_checks(shared: &mut Shared, config: &SimConfig) -> Result<Vec<Entry>> {
    let grid = shared.spot.grid.clone();
    let curve = shared.spot.curve.clone();
    let paths = shared.paths(config)?;
    let a = MeasureLabel::SpotLibor;
    let b = MeasureLabel::Forward(grid.maturity(2));
    let c = MeasureLabel::Forward(grid.last());
    let d_ab = density_path(paths, &grid, &MeasurePair { source: a, target: b })?;
    let d_bc = density_path(&paths.relabeled(b), &grid, &MeasurePair { source: b, target: c })?;
    let d_ac = density_path(paths, &grid, &MeasurePair { source: a, target: c })?;
    let composition = d_ac
        .values
        .iter()
        .zip(d_ab.values.iter().zip(&d_bc.values))
        .map(|(ac, (ab, bc))| (ac - ab * bc).abs() / ac.abs())
        .fold(0.0, f64::max);

    let mut worst_z = 0.0f64;
    for t in grid.maturities() {
        if let Some(node) = paths.node_of(t) {
            let (mean, se) = mean_and_se(&d_ac.column(node));
            worst_z = worst_z.max(z_score(mean - 1.0, se).abs());
        }
    }

    let it = interpolate_term_structure(paths, &grid, &curve, &[], GAMMA_TOL)?;
    let bonds = BondReconstruction::new(&it, paths);
    let delta = grid.spacing();
    let mut telescoping = 0.0f64;
    for (node, &t) in paths.times().iter().enumerate() {
        for j in 1..=grid.rate_count() {
            let tj = grid.maturity(j);
            if t > tj + 1e-12 || t == 0.0 {
                continue;
            }
            let col = paths.grid_column(j).expect("grid rate");
            for p in 0..paths.n_paths() {
                let f = bonds.forward_process(p, tj, grid.maturity(j + 1), t)?;
                let direct = 1.0 + delta * paths.value(p, node, col);
                telescoping = telescoping.max((f - direct).abs());
            }
        }
    }
    Ok(vec![
        entry("density-composition", composition, COMPOSITION_TOL),
        entry("density-mean", worst_z, Z_THRESHOLD),
        entry("telescoping", telescoping, TELESCOPING_TOL),
    ])
}

fn black_reduction(model: &ModelSpec, config: &SimConfig) -> Result<Vec<Entry>> {
    let spot = model
        .with_characteristics(model.chars.without_jumps())
        .with_measure(MeasureLabel::SpotLibor)?;
    let paths = simulate(&spot, config, &[])?;
    let n = spot.rate_count();
    let t_fix = spot.grid.maturity(n);
    let delta = spot.delta();
    let l0 = spot.initial_rates[n - 1];
    let (mc, se) = caplet_price_mc(&paths, l0, t_fix, delta, &spot.curve)?;
    let lambda = &spot.vols.grid_loadings()[n - 1];
    let total_vol = product_integral(&product(lambda, lambda), &spot.chars.diffusion, 0.0, t_fix).sqrt();
    let df = discount(&spot.curve, t_fix + delta)?;
    let black = black_caplet_reference(l0, l0, total_vol, df, delta)?;
    let mut e = if se > 0.0 {
        entry("black-reduction", ((mc - black) / se).abs(), Z_THRESHOLD)
    } else {
        entry("black-reduction", (mc - black).abs(), COMPOSITION_TOL)
    };
    e.detail = format!("caplet on L(., {t_fix}): MC {mc} (SE {se}), Black {black}");
    Ok(vec![e])
}

fn product(f: &PiecewiseConstant, g: &PiecewiseConstant) -> PiecewiseConstant {
    let mut knots: Vec<f64> = f.breakpoints().iter().chain(g.breakpoints()).cloned().collect();
    knots.sort_by(|x, y| x.partial_cmp(y).unwrap());
    knots.dedup();
    let mut values = Vec::with_capacity(knots.len() + 1);
    let first = knots.first().map_or(0.0, |k| k - 1.0);
    values.push(f.value(first) * g.value(first));
    for &k in &knots {
        values.push(f.value(k) * g.value(k));
    }
    PiecewiseConstant::new(knots, values).expect("merged knots are increasing")
}

fn extension_checks(model: &ModelSpec, config: &SimConfig) -> Result<Vec<Entry>> {
    let base = model.with_measure(MeasureLabel::SpotLibor)?;
    let l0_new = *base.initial_rates.last().expect("at least one rate");
    let extended = extend_tenor(&base, PiecewiseConstant::constant(0.0), l0_new)?;
    let a = simulate(&base, config, &[])?;
    let b = simulate(&extended, config, &[])?;
    let n = base.rate_count();
    let new_col = extended.rate_count() - 1;
    let mut moved = 0usize;
    for p in 0..b.n_paths() {
        for k in 0..b.times().len() {
            if b.value(p, k, new_col) != l0_new {
                moved += 1;
            }
        }
    }
    let mut differing = 0usize;
    for (k, &t) in a.times().iter().enumerate() {
        let kb = b
            .node_of(t)
            .ok_or_else(|| Error::InvalidState(format!("extended run lacks node {t}")))?;
        for p in 0..a.n_paths() {
            for c in 0..n {
                if a.value(p, k, c).to_bits() != b.value(p, kb, c).to_bits() {
                    differing += 1;
                }
            }
        }
    }
    Ok(vec![
        entry("extension-constant-rate", moved as f64, 0.0),
        entry("extension-no-feedback", differing as f64, 0.0),
    ])
}

fn determinism(model: &ModelSpec, config: &SimConfig) -> Result<Vec<Entry>> {
    let mut cfg = config.clone();
    cfg.n_paths = cfg.n_paths.min(DETERMINISM_PATHS);
    let a = simulate(model, &cfg, &[])?;
    let b = simulate(model, &cfg, &[])?;
    let differing = a
        .rows()
        .zip(b.rows())
        .filter(|(x, y)| x.3.to_bits() != y.3.to_bits())
        .count();
    Ok(vec![entry("seed-determinism", differing as f64, 0.0)])
}
