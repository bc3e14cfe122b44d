//! Driving process: Levy characteristics, the integrability-condition
//! checker, and seeded noise generation.
//!
//! The jump part is compound Poisson: compensator `nu_s(dx) = eta_s f(dx)`
//! with a time-dependent intensity `eta` and a fixed size density `f`.
//! The continuous part is `c_s^{1/2} dW_s` with a scalar variance rate `c`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmm_dynamics::VolatilitySpec;
use crate::piecewise::PiecewiseConstant;
use crate::quadrature;

/// Standard-normal quantile such that `P(|Z| > z) = 1e-10`.
const GAUSSIAN_TAIL_Z: f64 = 6.466_951_087_240_516;
/// `-ln(1e-20)`: the two-sided exponential tail beyond `K` has mass
/// `exp(-a K)`. Deeper than the `1e-10` used for the Gaussian because the
/// integrands carry the exponential tilt `e^{lambda x}`.
const LAPLACE_TAIL_LOG: f64 = 46.051_701_859_880_914;

/// Jump-size distribution of the compound-Poisson part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum JumpDensity {
    Gaussian { mean: f64, sd: f64 },
    /// Symmetric density `(rate / 2) exp(-rate |x|)`.
    TwoSidedExponential { rate: f64 },
    Discrete { atoms: Vec<(f64, f64)> },
}

impl JumpDensity {
    pub fn validate(&self) -> Result<()> {
        match self {
            JumpDensity::Gaussian { mean, sd } => {
                if !mean.is_finite() || !(*sd >= 0.0 && sd.is_finite()) {
                    return Err(Error::Validation(format!(
                        "gaussian jump density needs finite mean and sd >= 0, got ({mean}, {sd})"
                    )));
                }
            }
            JumpDensity::TwoSidedExponential { rate } => {
                if !(*rate > 0.0 && rate.is_finite()) {
                    return Err(Error::Validation(format!(
                        "two-sided-exponential rate must be positive, got {rate}"
                    )));
                }
            }
            JumpDensity::Discrete { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::Validation("discrete jump density has no atoms".into()));
                }
                if atoms.iter().any(|&(x, p)| !x.is_finite() || !(p >= 0.0)) {
                    return Err(Error::Validation(
                        "discrete atoms need finite sizes and non-negative probabilities".into(),
                    ));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "discrete jump probabilities sum to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Moment generating function `E[exp(u X)]`, `None` where it diverges.
    pub fn mgf(&self, u: f64) -> Option<f64> {
        match self {
            JumpDensity::Gaussian { mean, sd } => Some((mean * u + 0.5 * sd * sd * u * u).exp()),
            JumpDensity::TwoSidedExponential { rate } => {
                (u.abs() < *rate).then(|| rate * rate / (rate * rate - u * u))
            }
            JumpDensity::Discrete { atoms } => {
                Some(atoms.iter().map(|&(x, p)| p * (u * x).exp()).sum())
            }
        }
    }

    /// `E[exp(u X) - 1]`, accurate for small `u`.
    pub fn mgf_minus_one(&self, u: f64) -> Option<f64> {
        match self {
            JumpDensity::Gaussian { mean, sd } => Some((mean * u + 0.5 * sd * sd * u * u).exp_m1()),
            JumpDensity::TwoSidedExponential { rate } => {
                (u.abs() < *rate).then(|| u * u / (rate * rate - u * u))
            }
            JumpDensity::Discrete { atoms } => {
                Some(atoms.iter().map(|&(x, p)| p * (u * x).exp_m1()).sum())
            }
        }
    }

    /// Largest `M` with `E[exp(u X)] < inf` for all `|u| <= M` (exclusive for
    /// the two-sided exponential, where the supremum is not attained).
    pub fn exponential_moment_limit(&self) -> f64 {
        match self {
            JumpDensity::TwoSidedExponential { rate } => *rate,
            _ => f64::INFINITY,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            JumpDensity::Gaussian { mean, sd } => mean * mean + sd * sd,
            JumpDensity::TwoSidedExponential { rate } => 2.0 / (rate * rate),
            JumpDensity::Discrete { atoms } => atoms.iter().map(|&(x, p)| p * x * x).sum(),
        }
    }

    /// Quadrature rule `(x, w)` for `E[g(X)] ~ sum w g(x)`: atoms for the
    /// discrete family, 64-point Gauss-Legendre on a domain holding all but
    /// `1e-10` of the mass otherwise.
    pub fn quadrature_rule(&self) -> Vec<(f64, f64)> {
        match self {
            JumpDensity::Gaussian { mean, sd } => {
                if *sd == 0.0 {
                    return vec![(*mean, 1.0)];
                }
                let half = GAUSSIAN_TAIL_Z * sd;
                let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
                quadrature::mapped(mean - half, mean + half)
                    .map(|(x, w)| {
                        let z = (x - mean) / sd;
                        (x, w * norm * (-0.5 * z * z).exp())
                    })
                    .collect()
            }
            JumpDensity::TwoSidedExponential { rate } => {
                let k = LAPLACE_TAIL_LOG / rate;
                let dens = |x: f64| 0.5 * rate * (-rate * x.abs()).exp();
                quadrature::mapped(-k, 0.0)
                    .chain(quadrature::mapped(0.0, k))
                    .map(|(x, w)| (x, w * dens(x)))
                    .collect()
            }
            JumpDensity::Discrete { atoms } => atoms.clone(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            JumpDensity::Gaussian { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            JumpDensity::TwoSidedExponential { rate } => {
                let u: f64 = 1.0 - rng.random::<f64>();
                let magnitude = -u.ln() / rate;
                if rng.random::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            JumpDensity::Discrete { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(x, p) in atoms {
                    acc += p;
                    if u < acc {
                        return x;
                    }
                }
                atoms.last().unwrap().0
            }
        }
    }
}

/// Characteristics of the driving process `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevyCharacteristics {
    /// Drift `b(s, T_1)`; only enters the integrability check.
    pub drift: PiecewiseConstant,
    /// Variance rate `c_s >= 0`.
    pub diffusion: PiecewiseConstant,
    /// Jump intensity `eta_s >= 0`.
    pub intensity: PiecewiseConstant,
    pub jumps: JumpDensity,
}

impl LevyCharacteristics {
    pub fn new(
        drift: PiecewiseConstant,
        diffusion: PiecewiseConstant,
        intensity: PiecewiseConstant,
        jumps: JumpDensity,
    ) -> Result<Self> {
        let chars = Self {
            drift,
            diffusion,
            intensity,
            jumps,
        };
        chars.validate()?;
        Ok(chars)
    }

    /// Pure diffusion with constant variance rate `c`.
    pub fn brownian(c: f64) -> Self {
        Self {
            drift: PiecewiseConstant::constant(0.0),
            diffusion: PiecewiseConstant::constant(c),
            intensity: PiecewiseConstant::constant(0.0),
            jumps: JumpDensity::Gaussian { mean: 0.0, sd: 0.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.diffusion.inf() < 0.0 {
            return Err(Error::Validation("diffusion variance rate must be >= 0".into()));
        }
        if self.intensity.inf() < 0.0 {
            return Err(Error::Validation("jump intensity must be >= 0".into()));
        }
        self.jumps.validate()
    }

    pub fn has_jumps(&self) -> bool {
        !self.intensity.is_identically_zero()
    }

    pub fn without_jumps(&self) -> Self {
        Self {
            intensity: PiecewiseConstant::constant(0.0),
            ..self.clone()
        }
    }
}

/// Outcome of the integrability checks on a horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub cond1_pass: bool,
    pub cond2_pass: bool,
    pub cond3_pass: bool,
    /// Exponential-moment bound `M` the jump density was tested against.
    pub bound_m: f64,
    /// Set when `M` came from a caller-supplied cap rather than the loadings.
    pub cap_warning: bool,
    pub diagnostics: Vec<String>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.cond1_pass && self.cond2_pass && self.cond3_pass
    }
}

/// Checks the three integrability conditions on `[0, horizon]`.
///
/// `M` is the sum over configured maturities of `sup_t lambda(t, T)`, or the
/// declared bound of `vols` when larger, or `cap` when given.
pub fn check_conditions(
    chars: &LevyCharacteristics,
    vols: &VolatilitySpec,
    horizon: f64,
    cap: Option<f64>,
) -> Result<ConditionReport> {
    if !(horizon > 0.0) {
        return Err(Error::Validation(format!("horizon must be positive, got {horizon}")));
    }
    let mut diagnostics = Vec::new();

    let drift_int = integral_abs(&chars.drift, horizon);
    let var_int = chars.diffusion.integral(0.0, horizon);
    let cond1_pass = drift_int.is_finite() && var_int.is_finite() && chars.diffusion.inf() >= 0.0;
    diagnostics.push(format!(
        "cond1: int(|b| + c) ds over [0, {horizon}] = {}",
        drift_int + var_int
    ));

    let loading_sum = vols.loading_sum();
    let mut cap_warning = false;
    let bound_m = match cap {
        Some(m) => {
            if !loading_sum.is_finite() || m < loading_sum {
                cap_warning = true;
                diagnostics.push(format!(
                    "cond2: loading sum {loading_sum} replaced by caller cap {m}"
                ));
            }
            m
        }
        None => {
            if !loading_sum.is_finite() {
                return Err(Error::ConditionViolation(
                    "volatility loadings are unbounded and no cap was supplied".into(),
                ));
            }
            vols.sum_bound().map_or(loading_sum, |d| d.max(loading_sum))
        }
    };
    let jump_mass = chars.intensity.integral(0.0, horizon);
    let limit = chars.jumps.exponential_moment_limit();
    let cond2_pass = if jump_mass == 0.0 {
        diagnostics.push("cond2: empty jump measure".into());
        true
    } else {
        let ok = bound_m < limit;
        diagnostics.push(format!(
            "cond2: exponential moments finite for |u| < {limit}; required up to M = {bound_m}"
        ));
        ok && jump_mass.is_finite()
    };

    let small_jump = chars.jumps.second_moment().min(1.0);
    let cond3_value = jump_mass * small_jump;
    let cond3_pass = cond3_value.is_finite();
    diagnostics.push(format!(
        "cond3: int int (x^2 ^ 1) F ds <= {cond3_value}"
    ));

    Ok(ConditionReport {
        cond1_pass,
        cond2_pass,
        cond3_pass,
        bound_m,
        cap_warning,
        diagnostics,
    })
}

fn integral_abs(f: &PiecewiseConstant, horizon: f64) -> f64 {
    let abs = PiecewiseConstant::new(
        f.breakpoints().to_vec(),
        f.values().iter().map(|v| v.abs()).collect(),
    )
    .expect("same shape");
    abs.integral(0.0, horizon)
}

/// Simulation time nodes with the per-step integrated characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGrid {
    times: Vec<f64>,
    variance: Vec<f64>,
    intensity: Vec<f64>,
}

impl StepGrid {
    pub fn new(times: Vec<f64>, chars: &LevyCharacteristics) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::Validation(
                "step grid needs at least two nodes starting at 0".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("step grid must be strictly increasing".into()));
        }
        let variance = times
            .windows(2)
            .map(|w| chars.diffusion.integral(w[0], w[1]))
            .collect();
        let intensity = times
            .windows(2)
            .map(|w| chars.intensity.integral(w[0], w[1]))
            .collect();
        Ok(Self {
            times,
            variance,
            intensity,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// `int c ds` over step `k`.
    pub fn variance(&self, k: usize) -> f64 {
        self.variance[k]
    }

    /// `int eta ds` over step `k`.
    pub fn intensity(&self, k: usize) -> f64 {
        self.intensity[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub step: usize,
    pub time: f64,
    pub size: f64,
}

/// Per-path noise source. Each path draws from its own ChaCha stream keyed
/// by `(seed, path)`, so output does not depend on evaluation order.
pub struct NoiseStream<'a> {
    chars: &'a LevyCharacteristics,
    steps: &'a StepGrid,
    rng: ChaCha8Rng,
}

impl<'a> NoiseStream<'a> {
    pub fn new(chars: &'a LevyCharacteristics, steps: &'a StepGrid, seed: u64, path: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        Self { chars, steps, rng }
    }

    /// Draws step `k`: returns the continuous increment `int c^{1/2} dW` and
    /// appends the step's jumps (sorted by time) to `jumps`.
    pub fn step(&mut self, k: usize, jumps: &mut Vec<JumpEvent>) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let dx = z * self.steps.variance(k).sqrt();
        let mass = self.steps.intensity(k);
        if mass > 0.0 {
            let count = Poisson::new(mass)
                .expect("positive finite intensity")
                .sample(&mut self.rng) as usize;
            let start = jumps.len();
            let t0 = self.steps.times[k];
            let h = self.steps.times[k + 1] - t0;
            for _ in 0..count {
                let u: f64 = self.rng.random();
                let size = self.chars.jumps.sample(&mut self.rng);
                jumps.push(JumpEvent {
                    step: k,
                    time: t0 + u * h,
                    size,
                });
            }
            jumps[start..].sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
        }
        dx
    }
}

/// Sampled driver noise for a batch of paths.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverIncrements {
    pub steps: StepGrid,
    pub seed: u64,
    /// `[path][step]` continuous increments.
    pub brownian: Vec<Vec<f64>>,
    pub jumps: Vec<Vec<JumpEvent>>,
}

impl DriverIncrements {
    pub fn n_paths(&self) -> usize {
        self.brownian.len()
    }
}

pub fn sample_increments(
    chars: &LevyCharacteristics,
    step_grid: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<DriverIncrements> {
    if n_paths == 0 {
        return Err(Error::Validation("need at least one path".into()));
    }
    chars.validate()?;
    let steps = StepGrid::new(step_grid.to_vec(), chars)?;
    let per_path: Vec<(Vec<f64>, Vec<JumpEvent>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = NoiseStream::new(chars, &steps, seed, p);
            let mut jumps = Vec::new();
            let bm = (0..steps.steps()).map(|k| stream.step(k, &mut jumps)).collect();
            (bm, jumps)
        })
        .collect();
    let (brownian, jumps) = per_path.into_iter().unzip();
    Ok(DriverIncrements {
        steps,
        seed,
        brownian,
        jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmm_dynamics::VolatilitySpec;

    fn gaussian_chars(eta: f64) -> LevyCharacteristics {
        LevyCharacteristics::new(
            PiecewiseConstant::constant(0.01),
            PiecewiseConstant::constant(1.0),
            PiecewiseConstant::constant(eta),
            JumpDensity::Gaussian { mean: 0.0, sd: 0.1 },
        )
        .unwrap()
    }

    fn flat_vols(n: usize, lambda: f64) -> VolatilitySpec {
        VolatilitySpec::new(
            vec![PiecewiseConstant::constant(lambda); n],
            Vec::new(),
            None,
            1.0,
            None,
        )
        .unwrap()
    }

    #[test]
    fn zero_jumps_pass_all_conditions() {
        let r = check_conditions(&gaussian_chars(0.0), &flat_vols(3, 0.2), 2.0, None).unwrap();
        assert!(r.all_pass(), "{r:?}");
    }

    #[test]
    fn gaussian_jumps_pass_any_bound() {
        let r = check_conditions(&gaussian_chars(1.0), &flat_vols(3, 0.2), 2.0, Some(1e6)).unwrap();
        assert!(r.cond2_pass);
        assert!(r.all_pass());
    }

    #[test]
    fn two_sided_exponential_fails_above_rate() {
        let chars = LevyCharacteristics::new(
            PiecewiseConstant::constant(0.0),
            PiecewiseConstant::constant(1.0),
            PiecewiseConstant::constant(1.0),
            JumpDensity::TwoSidedExponential { rate: 3.0 },
        )
        .unwrap();
        let r = check_conditions(&chars, &flat_vols(5, 1.0), 2.0, None).unwrap();
        assert_eq!(r.bound_m, 5.0);
        assert!(!r.cond2_pass);
        assert!(r.cond1_pass && r.cond3_pass);
        let r = check_conditions(&chars, &flat_vols(5, 0.5), 2.0, None).unwrap();
        assert!(r.cond2_pass, "M = 2.5 < 3 must pass");
    }

    #[test]
    fn enlarging_bound_never_restores_cond2() {
        let chars = LevyCharacteristics::new(
            PiecewiseConstant::constant(0.0),
            PiecewiseConstant::constant(1.0),
            PiecewiseConstant::constant(1.0),
            JumpDensity::TwoSidedExponential { rate: 3.0 },
        )
        .unwrap();
        let vols = flat_vols(2, 0.1);
        let mut failed = false;
        for m in [0.5, 1.0, 2.0, 2.9, 3.0, 3.5, 10.0] {
            let pass = check_conditions(&chars, &vols, 1.0, Some(m)).unwrap().cond2_pass;
            assert!(!(failed && pass), "cond2 passed again at M = {m}");
            failed |= !pass;
        }
        assert!(failed);
    }

    #[test]
    fn cap_below_loading_sum_is_flagged() {
        let r = check_conditions(&gaussian_chars(1.0), &flat_vols(3, 0.2), 1.0, Some(0.1)).unwrap();
        assert!(r.cap_warning);
    }

    #[test]
    fn mgf_matches_quadrature() {
        for d in [
            JumpDensity::Gaussian { mean: 0.05, sd: 0.1 },
            JumpDensity::TwoSidedExponential { rate: 3.0 },
            JumpDensity::Discrete {
                atoms: vec![(-0.1, 0.3), (0.2, 0.7)],
            },
        ] {
            for u in [0.1, 0.5, 1.5] {
                let q: f64 = d.quadrature_rule().iter().map(|&(x, w)| w * (u * x).exp_m1()).sum();
                let exact = d.mgf_minus_one(u).unwrap();
                assert!((q - exact).abs() < 1e-9, "{d:?} u={u}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn discrete_probabilities_must_sum_to_one() {
        let d = JumpDensity::Discrete {
            atoms: vec![(0.1, 0.5), (0.2, 0.4)],
        };
        assert!(d.validate().is_err());
    }

    #[test]
    fn zero_intensity_draws_no_jumps() {
        let times: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
        let inc = sample_increments(&gaussian_chars(0.0), &times, 200, 1).unwrap();
        assert!(inc.jumps.iter().all(|j| j.is_empty()));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let a = sample_increments(&gaussian_chars(2.0), &times, 50, 9).unwrap();
        let b = sample_increments(&gaussian_chars(2.0), &times, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_increments(&gaussian_chars(2.0), &times, 50, 10).unwrap();
        assert_ne!(a.brownian, c.brownian);
    }

    #[test]
    fn increment_moments_within_three_standard_errors() {
        let n = 100_000;
        let times = vec![0.0, 0.01, 0.02];
        let inc = sample_increments(&gaussian_chars(1.0), &times, n, 42).unwrap();
        let xs: Vec<f64> = inc.brownian.iter().map(|b| b[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let m2: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let var = m2.iter().sum::<f64>() / n as f64;
        let var_se = (m2.iter().map(|v| (v - var).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
            / (n as f64).sqrt();
        assert!((var - 0.01).abs() <= 3.0 * var_se, "var {var} se {var_se}");
        assert!(mean.abs() <= 3.0 * (0.01f64 / n as f64).sqrt());
    }

    #[test]
    fn jump_counts_match_intensity() {
        let n = 100_000;
        let chars = LevyCharacteristics::new(
            PiecewiseConstant::constant(0.0),
            PiecewiseConstant::constant(1.0),
            PiecewiseConstant::new(vec![0.5], vec![1.0, 3.0]).unwrap(),
            JumpDensity::Gaussian { mean: 0.0, sd: 0.1 },
        )
        .unwrap();
        let times: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let inc = sample_increments(&chars, &times, n, 5).unwrap();
        let counts: Vec<f64> = inc.jumps.iter().map(|j| j.len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let expected = 0.5 * 1.0 + 0.5 * 3.0;
        // Poisson: variance equals the mean
        let se = (expected / n as f64).sqrt();
        assert!((mean - expected).abs() <= 3.0 * se, "mean {mean}");
        for path in &inc.jumps {
            for j in path {
                assert!(j.time >= times[j.step] && j.time <= times[j.step + 1]);
            }
        }
    }
}
