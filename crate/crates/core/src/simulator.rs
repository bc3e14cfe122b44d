//! Log-Euler Monte Carlo for the forward-rate system and caplet pricing.
//!
//! All grid rates are simulated under one reference measure together with
//! any requested off-grid maturities. Coefficients are frozen at the left
//! node of each step and applied multiplicatively, `L <- L exp(dlog L)`,
//! which keeps every rate with `1 + delta L > 0` positive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmm_dynamics::ModelSpec;
use crate::measure_engine::{density_path, MeasureLabel, MeasurePair, RateRef};
use crate::stochastic_driver::{check_conditions, JumpEvent, NoiseStream, StepGrid};
use crate::termstructure::{discount, locate_index, DiscountCurve};

const ALIGN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    LogEuler,
}

/// Which step nodes are kept in the path set. Tenor dates and requested
/// maturities are always kept.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recording {
    #[default]
    TenorDates,
    EveryStep,
    /// Tenor dates plus these times, each a step node.
    Times(Vec<f64>),
}

/// Deliberate faults for positive-control runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    /// Negates the Girsanov drift of every rate.
    FlipDriftSign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub recording: Recording,
    #[serde(default)]
    pub corruption: Option<Corruption>,
}

impl SimConfig {
    pub fn new(step: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            step,
            n_paths,
            seed,
            scheme: Scheme::LogEuler,
            recording: Recording::TenorDates,
            corruption: None,
        }
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    pub fn with_corruption(mut self, corruption: Corruption) -> Self {
        self.corruption = Some(corruption);
        self
    }
}

/// Simulated trajectories. Columns are the grid rates `T_1..T_n` followed by
/// off-grid maturities in increasing order; a rate is frozen at its fixing.
#[derive(Debug, Clone, PartialEq)]
pub struct RatePathSet {
    measure: MeasureLabel,
    seed: u64,
    step: f64,
    delta: f64,
    step_count: usize,
    times: Vec<f64>,
    node_steps: Vec<usize>,
    maturities: Vec<f64>,
    n_grid: usize,
    initial: Vec<f64>,
    n_paths: usize,
    /// `[path][node][column]`.
    values: Vec<f64>,
    jump_counts: Vec<usize>,
}

impl RatePathSet {
    pub fn measure(&self) -> MeasureLabel {
        self.measure
    }

    /// The same trajectories declared to live under another measure. Only
    /// useful for deliberately mis-specified controls.
    pub fn relabeled(&self, measure: MeasureLabel) -> Self {
        Self {
            measure,
            ..self.clone()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Recorded node times.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn grid_rate_count(&self) -> usize {
        self.n_grid
    }

    /// Column of the grid rate `L(., T_j)`.
    pub fn grid_column(&self, j: usize) -> Option<usize> {
        (j >= 1 && j <= self.n_grid).then(|| j - 1)
    }

    pub fn column_of(&self, maturity: f64) -> Option<usize> {
        self.maturities.iter().position(|m| (m - maturity).abs() <= ALIGN_TOL)
    }

    pub fn node_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= ALIGN_TOL)
    }

    pub fn initial_rate(&self, column: usize) -> f64 {
        self.initial[column]
    }

    pub fn value(&self, path: usize, node: usize, column: usize) -> f64 {
        let cols = self.maturities.len();
        self.values[(path * self.times.len() + node) * cols + column]
    }

    /// `L(T, T)` on one path.
    pub fn fixing(&self, path: usize, column: usize) -> Result<f64> {
        let node = self.node_of(self.maturities[column]).ok_or_else(|| {
            Error::Dependency(format!(
                "fixing of L(., {}) lies beyond the simulated horizon",
                self.maturities[column]
            ))
        })?;
        Ok(self.value(path, node, column))
    }

    /// Jump events consumed by each path.
    pub fn jump_counts(&self) -> &[usize] {
        &self.jump_counts
    }

    /// Rows `(path, time, maturity, rate)` in path-major order.
    pub fn rows(&self) -> impl Iterator<Item = (usize, f64, f64, f64)> + '_ {
        (0..self.n_paths).flat_map(move |p| {
            (0..self.times.len()).flat_map(move |k| {
                (0..self.maturities.len())
                    .map(move |c| (p, self.times[k], self.maturities[c], self.value(p, k, c)))
            })
        })
    }
}

/// Mean and standard error with a fixed-order reduction.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    // Welford: constant samples give exactly zero variance
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (k, &x) in samples.iter().enumerate() {
        let d = x - mean;
        mean += d / (k + 1) as f64;
        m2 += d * (x - mean);
    }
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (m2 / (n - 1.0) / n).sqrt())
}

/// `sum_{p < n} f(p)` in fixed-size chunks, so the result does not depend on
/// the thread count.
pub fn ordered_sum<F: Fn(usize) -> f64 + Sync>(n: usize, f: F) -> f64 {
    const CHUNK: usize = 4096;
    let chunks: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
        .collect();
    chunks.iter().sum()
}

fn ratio_steps(x: f64, h: f64, what: &str) -> Result<usize> {
    let r = x / h;
    let n = r.round();
    if n < 1.0 || (r - n).abs() > ALIGN_TOL {
        return Err(Error::Configuration(format!(
            "step {h} does not divide {what} {x}"
        )));
    }
    Ok(n as usize)
}

/// Per-step data shared by all paths.
struct StepPlan {
    interval: usize,
    /// Effective reference index `r`: the reference chain covers grid rates
    /// `interval..=r`, empty when `r < interval`.
    reference_top: usize,
    /// Loadings at the left node, zero for rates not evolving in the step.
    lambda: Vec<f64>,
    alive: Vec<bool>,
    kappa: Vec<f64>,
    variance: f64,
    intensity: f64,
    /// `expm1(lambda_c x_q)` per column, only when jumps are active.
    transform: Vec<Vec<f64>>,
}

struct Kernel<'a> {
    model: &'a ModelSpec,
    plans: Vec<StepPlan>,
    rule: Vec<(f64, f64)>,
    maturities: Vec<f64>,
    /// For an off-grid column, `i(T) - 1`; unused for grid columns.
    off_grid_anchor: Vec<usize>,
    n_grid: usize,
    drift_sign: f64,
}

/// Simulates all grid rates plus `maturities` under `model.measure`.
pub fn simulate(model: &ModelSpec, config: &SimConfig, maturities: &[f64]) -> Result<RatePathSet> {
    if config.n_paths == 0 {
        return Err(Error::Configuration("need at least one path".into()));
    }
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::Configuration(format!("step must be positive, got {}", config.step)));
    }
    if maturities.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("requested maturities must be strictly increasing".into()));
    }
    let grid = &model.grid;
    let h = config.step;
    let delta = grid.spacing();
    let n1 = ratio_steps(grid.first(), h, "the first maturity")?;
    let nd = ratio_steps(delta, h, "the tenor spacing")?;
    let n_grid = model.rate_count();
    model.measure.numeraire_index(grid)?;

    let mut cols: Vec<f64> = (1..=n_grid).map(|j| grid.maturity(j)).collect();
    let mut fix_steps: Vec<usize> = (1..=n_grid).map(|j| n1 + (j - 1) * nd).collect();
    let mut initial = model.initial_rates.clone();
    let mut off_grid_anchor = vec![0; n_grid];
    for &t in maturities {
        if grid.index_of(t).is_some_and(|j| j <= n_grid) {
            continue;
        }
        let steps = ratio_steps(t, h, "the requested maturity")?;
        let anchor = locate_index(grid, t)?;
        model.vols.function_for(grid, RateRef::OffGrid(t))?;
        initial.push(model.initial_rate(RateRef::OffGrid(t))?);
        cols.push(t);
        fix_steps.push(steps);
        off_grid_anchor.push(anchor - 1);
    }
    let total_steps = *fix_steps.iter().max().expect("at least one grid rate");
    let horizon = total_steps as f64 * h;

    let report = check_conditions(&model.chars, &model.vols, horizon, None)?;
    if !report.all_pass() {
        return Err(Error::ConditionViolation(format!(
            "integrability conditions fail: {}",
            report.diagnostics.join("; ")
        )));
    }

    let step_times: Vec<f64> = (0..=total_steps).map(|k| k as f64 * h).collect();
    let steps = StepGrid::new(step_times.clone(), &model.chars)?;
    let jumps_on = model.chars.has_jumps();
    let rule = if jumps_on {
        model.chars.jumps.quadrature_rule()
    } else {
        Vec::new()
    };
    let a = model.measure.numeraire_index(grid)?;

    let mut plans = Vec::with_capacity(total_steps);
    for k in 0..total_steps {
        let interval = if k < n1 { 1 } else { 1 + (k + 1 - n1).div_ceil(nd) };
        let t = step_times[k];
        let alive: Vec<bool> = fix_steps.iter().map(|&s| k < s).collect();
        let mut lambda = vec![0.0; cols.len()];
        for (c, l) in lambda.iter_mut().enumerate() {
            if alive[c] {
                let r = if c < n_grid { RateRef::Grid(c + 1) } else { RateRef::OffGrid(cols[c]) };
                *l = model.vols.loading(grid, r, t)?;
            }
        }
        let intensity = steps.intensity(k);
        let kappa = lambda
            .iter()
            .map(|&l| {
                if intensity > 0.0 {
                    model.chars.jumps.mgf_minus_one(l).ok_or_else(|| {
                        Error::ConditionViolation(format!("jump density has no exponential moment at {l}"))
                    })
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let transform = if intensity > 0.0 {
            lambda
                .iter()
                .map(|&l| rule.iter().map(|&(x, _)| (l * x).exp_m1()).collect())
                .collect()
        } else {
            Vec::new()
        };
        plans.push(StepPlan {
            interval,
            reference_top: a.max(interval) - 1,
            lambda,
            alive,
            kappa,
            variance: steps.variance(k),
            intensity,
            transform,
        });
    }

    let kernel = Kernel {
        model,
        plans,
        rule,
        maturities: cols.clone(),
        off_grid_anchor,
        n_grid,
        drift_sign: match config.corruption {
            Some(Corruption::FlipDriftSign) => -1.0,
            None => 1.0,
        },
    };

    let mut record = vec![false; total_steps + 1];
    record[0] = true;
    for &s in &fix_steps {
        record[s] = true;
    }
    for j in 1..=grid.count() {
        let s = n1 + (j - 1) * nd;
        if s <= total_steps {
            record[s] = true;
        }
    }
    match &config.recording {
        Recording::TenorDates => {}
        Recording::EveryStep => record.iter_mut().for_each(|r| *r = true),
        Recording::Times(ts) => {
            for &t in ts {
                let s = ratio_steps(t, h, "the recording time").or_else(|e| if t == 0.0 { Ok(0) } else { Err(e) })?;
                if s > total_steps {
                    return Err(Error::Configuration(format!(
                        "recording time {t} lies beyond the horizon {horizon}"
                    )));
                }
                record[s] = true;
            }
        }
    }
    let node_steps: Vec<usize> = (0..=total_steps).filter(|&s| record[s]).collect();
    let times: Vec<f64> = node_steps.iter().map(|&s| step_times[s]).collect();

    let per_path: Vec<(Vec<f64>, usize)> = (0..config.n_paths)
        .into_par_iter()
        .map(|p| kernel.run_path(&steps, &initial, &record, config.seed, p))
        .collect();
    let mut values = Vec::with_capacity(config.n_paths * times.len() * cols.len());
    let mut jump_counts = Vec::with_capacity(config.n_paths);
    for (v, j) in per_path {
        values.extend_from_slice(&v);
        jump_counts.push(j);
    }
    Ok(RatePathSet {
        measure: model.measure,
        seed: config.seed,
        step: h,
        delta,
        step_count: total_steps,
        times,
        node_steps,
        maturities: cols,
        n_grid,
        initial,
        n_paths: config.n_paths,
        values,
        jump_counts,
    })
}

impl Kernel<'_> {
    fn run_path(
        &self,
        steps: &StepGrid,
        initial: &[f64],
        record: &[bool],
        seed: u64,
        path: usize,
    ) -> (Vec<f64>, usize) {
        let delta = self.model.delta();
        let n_cols = self.maturities.len();
        let q = self.rule.len();
        let mut noise = NoiseStream::new(&self.model.chars, steps, seed, path);
        let mut rates = initial.to_vec();
        let mut out = Vec::with_capacity(record.iter().filter(|r| **r).count() * n_cols);
        out.extend_from_slice(&rates);
        let mut jumps: Vec<JumpEvent> = Vec::new();
        let mut n_jumps = 0;
        let mut ell = vec![0.0; n_cols];
        // prefix sums / products over grid rates indexed 0..=n_grid
        let mut shift = vec![0.0; self.n_grid + 1];
        let mut prod = vec![1.0; (self.n_grid + 1) * q.max(1)];
        let mut dlog = vec![0.0; n_cols];
        for (k, plan) in self.plans.iter().enumerate() {
            jumps.clear();
            let dw = noise.step(k, &mut jumps);
            n_jumps += jumps.len();
            let jump_sum: f64 = jumps.iter().map(|j| j.size).sum();
            let with_jumps = plan.intensity > 0.0;
            for c in 0..n_cols {
                if plan.alive[c] {
                    let dl = delta * rates[c];
                    ell[c] = dl / (1.0 + dl);
                }
            }
            let i = plan.interval;
            let lo = i - 1;
            shift[lo] = 0.0;
            if with_jumps {
                prod[lo * q..(lo + 1) * q].iter_mut().for_each(|v| *v = 1.0);
            }
            for j in i..=self.n_grid {
                let c = j - 1;
                shift[j] = shift[j - 1] + ell[c] * plan.lambda[c];
                if with_jumps {
                    let e = &plan.transform[c];
                    for m in 0..q {
                        prod[j * q + m] = prod[(j - 1) * q + m] / (1.0 + ell[c] * e[m]);
                    }
                }
            }
            let r = plan.reference_top.min(self.n_grid);
            for c in 0..n_cols {
                if !plan.alive[c] {
                    dlog[c] = 0.0;
                    continue;
                }
                let lam = plan.lambda[c];
                let (pos, own) = if c < self.n_grid {
                    (c + 1, None)
                } else {
                    (self.off_grid_anchor[c], Some(c))
                };
                let mut s = shift[pos] - shift[r];
                if let Some(o) = own {
                    s += ell[o] * lam;
                }
                let mut correction = 0.0;
                if with_jumps && lam != 0.0 {
                    let e = &plan.transform[c];
                    for m in 0..q {
                        let mut factor = prod[pos * q + m] / prod[r * q + m];
                        if let Some(o) = own {
                            factor /= 1.0 + ell[o] * e[m];
                        }
                        correction += self.rule[m].1 * e[m] * (1.0 - factor);
                    }
                }
                dlog[c] = lam * dw + self.drift_sign * lam * s * plan.variance
                    - 0.5 * lam * lam * plan.variance
                    + (correction - plan.kappa[c]) * plan.intensity
                    + lam * jump_sum;
            }
            for c in 0..n_cols {
                if plan.alive[c] {
                    rates[c] *= dlog[c].exp();
                }
            }
            if record[k + 1] {
                out.extend_from_slice(&rates);
            }
        }
        (out, n_jumps)
    }
}

/// Caplet paying `delta (L(T_fix, T_fix) - K)^+` at `T_fix + delta`, with
/// its Monte Carlo standard error.
pub fn caplet_price_mc(
    paths: &RatePathSet,
    strike: f64,
    t_fix: f64,
    delta: f64,
    curve: &DiscountCurve,
) -> Result<(f64, f64)> {
    if (delta - paths.delta()).abs() > ALIGN_TOL {
        return Err(Error::Validation(format!(
            "caplet accrual {delta} differs from the tenor spacing {}",
            paths.delta()
        )));
    }
    let col = paths.column_of(t_fix).ok_or_else(|| {
        Error::Dependency(format!("rate L(., {t_fix}) was not simulated"))
    })?;
    let node = paths.node_of(t_fix).ok_or_else(|| {
        Error::Dependency(format!("fixing date {t_fix} was not recorded"))
    })?;
    let settle = t_fix + delta;
    let df = discount(curve, settle)?;
    let payoffs: Vec<f64> = (0..paths.n_paths())
        .map(|p| (paths.value(p, node, col) - strike).max(0.0))
        .collect();
    let weighted = match paths.measure() {
        MeasureLabel::Forward(t) if (t - settle).abs() <= ALIGN_TOL => payoffs,
        MeasureLabel::SpotLibor => {
            let grid = grid_of(paths)?;
            if grid.index_of(settle).is_none() {
                return Err(Error::MeasureMismatch(format!(
                    "spot-LIBOR pricing needs the settlement {settle} on the tenor grid"
                )));
            }
            let density = density_path(
                paths,
                &grid,
                &MeasurePair {
                    source: MeasureLabel::SpotLibor,
                    target: MeasureLabel::Forward(settle),
                },
            )?;
            payoffs
                .iter()
                .enumerate()
                .map(|(p, x)| x * density.value(p, node))
                .collect()
        }
        other => {
            return Err(Error::MeasureMismatch(format!(
                "caplet settling at {settle} cannot be priced from paths under {other}"
            )))
        }
    };
    let (mean, se) = mean_and_se(&weighted);
    Ok((df * delta * mean, df * delta * se))
}

/// Tenor grid implied by the grid columns of a path set.
pub fn grid_of(paths: &RatePathSet) -> Result<crate::termstructure::TenorGrid> {
    let first = paths.maturities[0];
    crate::termstructure::build_equidistant_grid(first, paths.delta, paths.n_grid + 1)
}
