//! SDE coefficients of each forward rate under each supported measure.
//!
//! Under a reference measure `R`, a rate with maturity `T` and loading
//! `lambda = lambda(t, T)` solves
//!
//! ```text
//! dL / L_- = drift dt + lambda c^{1/2} dW^R
//!          + int (e^{lambda x} - 1) (1 - factor(x)) nu^R(dx) dt
//!          + int (e^{lambda x} - 1) (mu - nu^R)(dt, dx)
//! ```
//!
//! where `drift` and `factor` come from the measure chain between `R` and
//! the rate's own forward measure `P_{T + delta}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure_engine::{
    accrual_weight, signed_chain, BetaTerm, MeasureLabel, RateRef, SignedChain,
};
use crate::piecewise::PiecewiseConstant;
use crate::stochastic_driver::{JumpDensity, LevyCharacteristics};
use crate::termstructure::{initial_forward_libor, locate_index, DiscountCurve, TenorGrid, GRID_EPS};

/// Deterministic loadings `lambda(., T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySpec {
    /// One function per grid rate `L(., T_k)`, `k = 1..=n`.
    grid: Vec<PiecewiseConstant>,
    /// Explicit loadings for off-grid maturities.
    #[serde(default)]
    overrides: Vec<(f64, PiecewiseConstant)>,
    /// Used for maturities with neither an explicit entry nor two
    /// bracketing grid loadings.
    #[serde(default)]
    fallback: Option<PiecewiseConstant>,
    /// Sup-norm cap `Lambda_max`.
    cap: f64,
    /// Declared bound `M` on the sum of sup-norms.
    #[serde(default)]
    sum_bound: Option<f64>,
}

impl VolatilitySpec {
    pub fn new(
        grid: Vec<PiecewiseConstant>,
        overrides: Vec<(f64, PiecewiseConstant)>,
        fallback: Option<PiecewiseConstant>,
        cap: f64,
        sum_bound: Option<f64>,
    ) -> Result<Self> {
        let spec = Self {
            grid,
            overrides,
            fallback,
            cap,
            sum_bound,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same constant loading for every grid rate and as fallback.
    pub fn flat(n_rates: usize, lambda: f64) -> Result<Self> {
        Self::new(
            vec![PiecewiseConstant::constant(lambda); n_rates],
            Vec::new(),
            Some(PiecewiseConstant::constant(lambda)),
            lambda.max(1.0),
            None,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.cap >= 0.0 && self.cap.is_finite()) {
            return Err(Error::Validation(format!(
                "volatility cap must be finite and >= 0, got {}",
                self.cap
            )));
        }
        let check = |what: String, f: &PiecewiseConstant| -> Result<()> {
            if !f.is_finite() || f.inf() < 0.0 || f.sup() > self.cap {
                return Err(Error::Validation(format!(
                    "{what}: loadings must lie in [0, {}], got {:?}",
                    self.cap,
                    f.values()
                )));
            }
            Ok(())
        };
        for (k, f) in self.grid.iter().enumerate() {
            check(format!("lambda(., T_{})", k + 1), f)?;
        }
        for (t, f) in &self.overrides {
            check(format!("lambda(., {t})"), f)?;
        }
        if let Some(f) = &self.fallback {
            check("fallback lambda".into(), f)?;
        }
        if let Some(m) = self.sum_bound {
            let s = self.loading_sum();
            if s > m {
                return Err(Error::ConditionViolation(format!(
                    "sum of loadings {s} exceeds the declared bound M = {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn grid_loadings(&self) -> &[PiecewiseConstant] {
        &self.grid
    }

    pub fn overrides(&self) -> &[(f64, PiecewiseConstant)] {
        &self.overrides
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn sum_bound(&self) -> Option<f64> {
        self.sum_bound
    }

    /// `sum_i sup_t lambda(t, T_i)` over configured maturities.
    pub fn loading_sum(&self) -> f64 {
        self.grid.iter().map(|f| f.sup()).sum::<f64>()
            + self.overrides.iter().map(|(_, f)| f.sup()).sum::<f64>()
    }

    /// The loading function of a rate. Off-grid maturities use an explicit
    /// override, else linear interpolation in `T` between the bracketing
    /// grid loadings, else the fallback.
    pub fn function_for(&self, grid: &TenorGrid, rate: RateRef) -> Result<PiecewiseConstant> {
        match rate {
            RateRef::Grid(j) => self.grid.get(j.wrapping_sub(1)).cloned().ok_or_else(|| {
                Error::Configuration(format!("no loading configured for grid rate T_{j}"))
            }),
            RateRef::OffGrid(t) => {
                if let Some((_, f)) = self.overrides.iter().find(|(m, _)| (m - t).abs() <= 1e-9) {
                    return Ok(f.clone());
                }
                if let Some(j) = grid.index_of(t) {
                    if j <= self.grid.len() {
                        return Ok(self.grid[j - 1].clone());
                    }
                }
                let k = ((t - grid.first()) / grid.spacing()).floor();
                if k >= 0.0 && (k as usize) + 2 <= self.grid.len() {
                    let lo = k as usize + 1;
                    let w = (t - grid.maturity(lo)) / grid.spacing();
                    return Ok(self.grid[lo - 1].blend(&self.grid[lo], w));
                }
                self.fallback.clone().ok_or_else(|| {
                    Error::Configuration(format!("no loading configured for maturity {t}"))
                })
            }
        }
    }

    pub fn loading(&self, grid: &TenorGrid, rate: RateRef, t: f64) -> Result<f64> {
        match rate {
            RateRef::Grid(j) => self
                .grid
                .get(j.wrapping_sub(1))
                .map(|f| f.value(t))
                .ok_or_else(|| {
                    Error::Configuration(format!("no loading configured for grid rate T_{j}"))
                }),
            RateRef::OffGrid(_) => self.function_for(grid, rate).map(|f| f.value(t)),
        }
    }

    fn push_grid(&mut self, f: PiecewiseConstant) {
        self.grid.push(f);
    }
}

/// Everything needed to simulate a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub grid: TenorGrid,
    pub curve: DiscountCurve,
    pub vols: VolatilitySpec,
    pub chars: LevyCharacteristics,
    pub measure: MeasureLabel,
    /// `L(0, T_k)` for each grid rate.
    pub initial_rates: Vec<f64>,
}

impl ModelSpec {
    pub fn new(
        grid: TenorGrid,
        curve: DiscountCurve,
        vols: VolatilitySpec,
        chars: LevyCharacteristics,
        measure: MeasureLabel,
    ) -> Result<Self> {
        grid.check_invariants()?;
        chars.validate()?;
        if vols.grid.len() != grid.rate_count() {
            return Err(Error::Configuration(format!(
                "{} grid loadings configured for {} grid rates",
                vols.grid.len(),
                grid.rate_count()
            )));
        }
        let delta = grid.spacing();
        let initial_rates = (2..=grid.count())
            .map(|i| initial_forward_libor(&curve, grid.maturity(i), delta))
            .collect::<Result<Vec<_>>>()?;
        measure.numeraire_index(&grid)?;
        Ok(Self {
            grid,
            curve,
            vols,
            chars,
            measure,
            initial_rates,
        })
    }

    pub fn delta(&self) -> f64 {
        self.grid.spacing()
    }

    pub fn rate_count(&self) -> usize {
        self.initial_rates.len()
    }

    /// Last fixing date `T_n`.
    pub fn horizon(&self) -> f64 {
        self.grid.maturity(self.grid.rate_count())
    }

    pub fn initial_rate(&self, rate: RateRef) -> Result<f64> {
        match rate {
            RateRef::Grid(j) => self.initial_rates.get(j.wrapping_sub(1)).cloned().ok_or_else(|| {
                Error::Configuration(format!("grid rate T_{j} is not part of the model"))
            }),
            RateRef::OffGrid(t) => initial_forward_libor(&self.curve, t + self.delta(), self.delta()),
        }
    }

    pub fn with_measure(&self, measure: MeasureLabel) -> Result<Self> {
        measure.numeraire_index(&self.grid)?;
        Ok(Self {
            measure,
            ..self.clone()
        })
    }

    pub fn with_characteristics(&self, chars: LevyCharacteristics) -> Self {
        Self {
            chars,
            ..self.clone()
        }
    }
}

/// Left-limit rates `L(t_-, .)` available to a coefficient evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateState {
    /// `L(t_-, T_1), L(t_-, T_2), ..`; may stop short of the full grid.
    pub grid: Vec<f64>,
    pub off_grid: Vec<(f64, f64)>,
}

impl RateState {
    pub fn new(grid: Vec<f64>) -> Self {
        Self {
            grid,
            off_grid: Vec::new(),
        }
    }

    pub fn with_off_grid(mut self, maturity: f64, rate: f64) -> Self {
        self.off_grid.push((maturity, rate));
        self
    }

    pub fn get(&self, rate: RateRef) -> Result<f64> {
        match rate {
            RateRef::Grid(j) => self.grid.get(j.wrapping_sub(1)).cloned().ok_or_else(|| {
                Error::Dependency(format!(
                    "state holds {} grid rates but L(t-, T_{j}) is required",
                    self.grid.len()
                ))
            }),
            RateRef::OffGrid(t) => self
                .off_grid
                .iter()
                .find(|(m, _)| (m - t).abs() <= 1e-9)
                .map(|&(_, r)| r)
                .ok_or_else(|| Error::Dependency(format!("state lacks L(t-, {t})"))),
        }
    }
}

/// One compensator-correction integrand:
/// `(e^{lambda x} - 1) (1 - prod_inverse 1/beta prod_direct beta) prod_against 1/beta`,
/// integrated against the reference compensator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrectionPiece {
    pub inverse: Vec<BetaTerm>,
    pub direct: Vec<BetaTerm>,
    /// Expresses the compensator this piece is taken against relative to the
    /// reference one.
    pub against: Vec<BetaTerm>,
}

impl CorrectionPiece {
    pub fn factor(&self, x: f64) -> f64 {
        let mut f = 1.0;
        for t in &self.inverse {
            f /= t.beta(x);
        }
        for t in &self.direct {
            f *= t.beta(x);
        }
        f
    }

    pub fn weight(&self, x: f64) -> f64 {
        let mut w = 1.0;
        for t in &self.against {
            w /= t.beta(x);
        }
        w
    }

    pub fn is_trivial(&self) -> bool {
        self.inverse.is_empty() && self.direct.is_empty()
    }
}

/// Coefficients of one rate's SDE under one measure at one `(t, state)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeCoefficients {
    pub reference: MeasureLabel,
    /// Girsanov drift per year.
    pub drift: f64,
    /// `lambda c^{1/2}`.
    pub diffusion: f64,
    /// `lambda`; the jump transform is `x -> e^{lambda x} - 1`.
    pub jump_loading: f64,
    pub corrections: Vec<CorrectionPiece>,
    /// `sum_pieces int integrand nu^R(dx)` per year.
    pub correction_rate: f64,
}

impl SdeCoefficients {
    pub fn jump_transform(&self, x: f64) -> f64 {
        (self.jump_loading * x).exp_m1()
    }

    /// Full deterministic rate of `d log L` per year (drift, Ito and jump
    /// compensator terms), given the variance rate `c` and intensity `eta`.
    pub fn log_drift(&self, c: f64, eta: f64, jumps: &JumpDensity) -> Result<f64> {
        let kappa = if eta > 0.0 {
            eta * jumps.mgf_minus_one(self.jump_loading).ok_or_else(|| {
                Error::ConditionViolation(format!(
                    "jump density has no exponential moment at {}",
                    self.jump_loading
                ))
            })?
        } else {
            0.0
        };
        Ok(self.drift + self.correction_rate - 0.5 * self.jump_loading * self.jump_loading * c - kappa)
    }
}

fn correction_rate(
    pieces: &[CorrectionPiece],
    lambda: f64,
    eta: f64,
    jumps: &JumpDensity,
) -> f64 {
    if eta == 0.0 || lambda == 0.0 || pieces.iter().all(|p| p.is_trivial()) {
        return 0.0;
    }
    let rule = jumps.quadrature_rule();
    let mut total = 0.0;
    for piece in pieces.iter().filter(|p| !p.is_trivial()) {
        let integral: f64 = rule
            .iter()
            .map(|&(x, w)| w * (lambda * x).exp_m1() * (1.0 - piece.factor(x)) * piece.weight(x))
            .sum();
        total += integral;
    }
    eta * total
}

fn terms(
    model: &ModelSpec,
    refs: &[RateRef],
    t: f64,
    state: &RateState,
) -> Result<Vec<BetaTerm>> {
    refs.iter()
        .map(|&r| {
            let ell = accrual_weight(model.delta(), state.get(r)?)?;
            let lambda = model.vols.loading(&model.grid, r, t)?;
            Ok(BetaTerm { ell, lambda })
        })
        .collect()
}

/// Maturity of the rate's own forward-measure numeraire, `T + delta`.
fn settlement(model: &ModelSpec, rate: RateRef) -> f64 {
    match rate {
        RateRef::Grid(j) => model.grid.maturity(j + 1),
        RateRef::OffGrid(t) => t + model.delta(),
    }
}

fn maturity(model: &ModelSpec, rate: RateRef) -> f64 {
    match rate {
        RateRef::Grid(j) => model.grid.maturity(j),
        RateRef::OffGrid(t) => t,
    }
}

/// Coefficients of `rate` under `reference`, with the tenor interval given
/// explicitly. The simulator passes the interval of the step it advances.
pub fn coefficients_in_interval(
    model: &ModelSpec,
    rate: RateRef,
    reference: MeasureLabel,
    interval: usize,
    t: f64,
    state: &RateState,
) -> Result<SdeCoefficients> {
    let chain: SignedChain = signed_chain(&model.grid, &reference, interval, t, settlement(model, rate))?;
    let up = terms(model, &chain.up, t, state)?;
    let down = terms(model, &chain.down, t, state)?;
    let c = model.chars.diffusion.value(t);
    let eta = model.chars.intensity.value(t);
    let lambda = model.vols.loading(&model.grid, rate, t)?;
    let shift: f64 = up.iter().map(|b| b.shift()).sum::<f64>() - down.iter().map(|b| b.shift()).sum::<f64>();
    let pieces = vec![CorrectionPiece {
        inverse: up,
        direct: down,
        against: Vec::new(),
    }];
    let correction_rate = correction_rate(&pieces, lambda, eta, &model.chars.jumps);
    Ok(SdeCoefficients {
        reference,
        drift: lambda * c * shift,
        diffusion: lambda * c.sqrt(),
        jump_loading: lambda,
        corrections: pieces,
        correction_rate,
    })
}

fn check_grid_rate(model: &ModelSpec, s: usize) -> Result<()> {
    if s == 0 || s > model.rate_count() {
        return Err(Error::Configuration(format!(
            "rate index {s} outside the grid rates 1..={}",
            model.rate_count()
        )));
    }
    Ok(())
}

fn check_alive(t: f64, fixing: f64) -> Result<()> {
    if t < 0.0 || t > fixing + GRID_EPS {
        return Err(Error::Validation(format!(
            "time {t} is outside the life [0, {fixing}] of the rate"
        )));
    }
    Ok(())
}

/// Dynamics of `L(., T_s)` under its own forward measure `P_{T_{s+1}}`.
pub fn forward_sde_coefficients(
    model: &ModelSpec,
    s: usize,
    t: f64,
    state: &RateState,
) -> Result<SdeCoefficients> {
    check_grid_rate(model, s)?;
    check_alive(t, model.grid.maturity(s))?;
    let reference = MeasureLabel::Forward(model.grid.maturity(s + 1));
    coefficients_in_interval(model, RateRef::Grid(s), reference, locate_index(&model.grid, t)?, t, state)
}

/// Dynamics of `L(., T_s)` under the spot-LIBOR measure.
pub fn spot_sde_coefficients(
    model: &ModelSpec,
    s: usize,
    t: f64,
    state: &RateState,
) -> Result<SdeCoefficients> {
    check_grid_rate(model, s)?;
    check_alive(t, model.grid.maturity(s))?;
    coefficients_in_interval(
        model,
        RateRef::Grid(s),
        MeasureLabel::SpotLibor,
        locate_index(&model.grid, t)?,
        t,
        state,
    )
}

/// Dynamics of an off-grid rate `L(., T)` under the spot-LIBOR measure: the
/// grid links `T_{i(t)} .. T_{i(T)-1}` against `nu^{i(t)}` plus the
/// fractional link from `T_{i(T)}` to `T + delta`, carried by `L(., T)`
/// itself, against `nu^{i(T)}`.
pub fn interpolated_sde_coefficients(
    model: &ModelSpec,
    maturity: f64,
    t: f64,
    state: &RateState,
) -> Result<SdeCoefficients> {
    check_alive(t, maturity)?;
    let grid = &model.grid;
    let it = locate_index(grid, t)?;
    let i_mat = locate_index(grid, maturity)?;
    let lambda = model.vols.loading(grid, RateRef::OffGrid(maturity), t)?;
    let own = BetaTerm {
        ell: accrual_weight(model.delta(), state.get(RateRef::OffGrid(maturity))?)?,
        lambda,
    };
    let grid_refs: Vec<RateRef> = (it..i_mat).map(RateRef::Grid).collect();
    let grid_terms = terms(model, &grid_refs, t, state)?;
    let c = model.chars.diffusion.value(t);
    let eta = model.chars.intensity.value(t);
    let grid_sum: f64 = grid_terms.iter().map(|b| b.lambda * c * b.ell.value()).sum();
    let drift = lambda * (grid_sum + own.ell.value() * lambda * c);
    let pieces = vec![
        CorrectionPiece {
            inverse: grid_terms.clone(),
            direct: Vec::new(),
            against: Vec::new(),
        },
        CorrectionPiece {
            inverse: vec![own],
            direct: Vec::new(),
            against: grid_terms,
        },
    ];
    let correction_rate = correction_rate(&pieces, lambda, eta, &model.chars.jumps);
    Ok(SdeCoefficients {
        reference: MeasureLabel::SpotLibor,
        drift,
        diffusion: lambda * c.sqrt(),
        jump_loading: lambda,
        corrections: pieces,
        correction_rate,
    })
}

/// Appends `T_{n+2} = T_{n+1} + delta` with a new rate `L(., T_{n+1})`.
/// Existing loadings and initial rates are untouched.
pub fn extend_tenor(model: &ModelSpec, lambda_new: PiecewiseConstant, l0_new: f64) -> Result<ModelSpec> {
    if !lambda_new.is_finite() || lambda_new.inf() < 0.0 {
        return Err(Error::Validation(
            "new loading must be finite and non-negative".into(),
        ));
    }
    if lambda_new.sup() > model.vols.cap {
        return Err(Error::Validation(format!(
            "new loading {} exceeds the cap {}",
            lambda_new.sup(),
            model.vols.cap
        )));
    }
    if !(1.0 + model.delta() * l0_new > 0.0) {
        return Err(Error::DegenerateRate {
            delta: model.delta(),
            rate: l0_new,
        });
    }
    if let Some(m) = model.vols.sum_bound {
        let total = model.vols.loading_sum() + lambda_new.sup();
        if total > m {
            return Err(Error::ConditionViolation(format!(
                "extension raises the loading sum to {total}, above M = {m}"
            )));
        }
    }
    let mut out = model.clone();
    out.grid = model.grid.extended(1);
    out.vols.push_grid(lambda_new);
    out.initial_rates.push(l0_new);
    Ok(out)
}

/// Successive single-date extensions.
pub fn extend_tenor_many(model: &ModelSpec, additions: &[(PiecewiseConstant, f64)]) -> Result<ModelSpec> {
    additions
        .iter()
        .try_fold(model.clone(), |m, (lambda, l0)| extend_tenor(&m, lambda.clone(), *l0))
}

/// Rate maturity helper for callers holding a `RateRef`.
pub fn rate_maturity(model: &ModelSpec, rate: RateRef) -> f64 {
    maturity(model, rate)
}
