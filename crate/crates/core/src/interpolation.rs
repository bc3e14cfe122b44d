//! Term structure between tenor dates: the spot-LIBOR numeraire, the
//! log-linear numeraire blend `gamma`, forward processes and reconstructed
//! bond prices.
//!
//! Writing `A_1 = 1 / B(0, T_1)` and `A_k(t) = 1 + delta L(t ^ T_{k-1}, T_{k-1})`,
//! the numeraire at a tenor date is `B*(T_k) = A_1 ... A_k` and at an
//! interpolated date `T` in `(T_{k-1}, T_k]`
//! `log B*(T) = (1 - gamma(T)) log B*(T_{k-1}) + gamma(T) log B*(T_k)`,
//! with `gamma(T)` chosen so that `E[1 / B*(T)] = B(0, T)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmm_dynamics::{ModelSpec, RateState};
use crate::measure_engine::{accrual_weight, measure_chain, BetaTerm, MeasureLabel, RateRef};
use crate::simulator::{ordered_sum, RatePathSet};
use crate::termstructure::{discount, locate_index, DiscountCurve, TenorGrid, GRID_EPS};

const BISECTION_STEPS: usize = 60;

/// `B*(T_k)` for `k = 0..=n+1` on every path, with `T_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpotNumerairePath {
    /// `0, T_1, .., T_{n+1}`.
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// `[path][k]`.
    values: Vec<f64>,
    /// Blended values at interpolated dates, `(T, [path])`.
    pub interpolated: Vec<(f64, Vec<f64>)>,
}

impl SpotNumerairePath {
    pub fn value(&self, path: usize, k: usize) -> f64 {
        self.values[path * self.times.len() + k]
    }

    /// `B*(T_k)` across paths.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, k)).collect()
    }

    pub fn at_date(&self, t: f64) -> Option<Vec<f64>> {
        if let Some(k) = self.times.iter().position(|s| (s - t).abs() <= 1e-9) {
            return Some(self.column(k));
        }
        self.interpolated
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9)
            .map(|(_, v)| v.clone())
    }
}

/// Rolled-over numeraire `B*(T_k) = prod_{j<k} (1 + delta L(T_j, T_j)) / B(0, T_1)`.
pub fn spot_numeraire_path(
    paths: &RatePathSet,
    grid: &TenorGrid,
    curve: &DiscountCurve,
) -> Result<SpotNumerairePath> {
    let n = grid.rate_count();
    let delta = grid.spacing();
    let b1 = discount(curve, grid.first())?;
    let mut fixings = Vec::with_capacity(n);
    for j in 1..=n {
        let col = paths.grid_column(j).ok_or_else(|| {
            Error::Dependency(format!("path set lacks the grid rate L(., T_{j})"))
        })?;
        if (paths.maturities()[col] - grid.maturity(j)).abs() > 1e-9 {
            return Err(Error::Dependency(format!(
                "path column {col} holds maturity {} instead of T_{j} = {}",
                paths.maturities()[col],
                grid.maturity(j)
            )));
        }
        let node = paths.node_of(grid.maturity(j)).ok_or_else(|| {
            Error::Dependency(format!("fixing L(T_{j}, T_{j}) was not simulated"))
        })?;
        fixings.push((col, node));
    }
    let mut times = vec![0.0];
    times.extend(grid.maturities());
    let width = times.len();
    let mut values = Vec::with_capacity(paths.n_paths() * width);
    for p in 0..paths.n_paths() {
        let mut b = 1.0 / b1;
        values.push(1.0);
        values.push(b);
        for &(col, node) in &fixings {
            b *= 1.0 + delta * paths.value(p, node, col);
            values.push(b);
        }
    }
    Ok(SpotNumerairePath {
        times,
        n_paths: paths.n_paths(),
        values,
        interpolated: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub maturity: f64,
    pub gamma: f64,
    /// `|mean of 1/B*(T) - B(0, T)|` on the sample set.
    pub residual: f64,
}

/// Blend weights on one interval `(start, end]` of the numeraire grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaInterpolation {
    pub start: f64,
    pub end: f64,
    pub points: Vec<GammaSolution>,
}

impl GammaInterpolation {
    pub fn gamma(&self, t: f64) -> Option<f64> {
        if (t - self.start).abs() <= GRID_EPS {
            return Some(0.0);
        }
        if (t - self.end).abs() <= GRID_EPS {
            return Some(1.0);
        }
        self.points
            .iter()
            .find(|s| (s.maturity - t).abs() <= 1e-9)
            .map(|s| s.gamma)
    }
}

fn blend_mean(log_n: &[f64], log_n1: &[f64], gamma: f64) -> f64 {
    let n = log_n.len();
    ordered_sum(n, |p| (-((1.0 - gamma) * log_n[p] + gamma * log_n1[p])).exp()) / n as f64
}

/// Solves `mean_p B*_n^{-(1-gamma)} B*_{n+1}^{-gamma} = B(0, T)` by bisection.
pub fn solve_gamma(
    samples_n: &[f64],
    samples_n1: &[f64],
    curve: &DiscountCurve,
    maturity: f64,
    interval: (f64, f64),
    tol: f64,
) -> Result<GammaSolution> {
    let (start, end) = interval;
    if samples_n.is_empty() || samples_n.len() != samples_n1.len() {
        return Err(Error::Validation(format!(
            "need paired numeraire samples, got {} and {}",
            samples_n.len(),
            samples_n1.len()
        )));
    }
    if !(maturity >= start - GRID_EPS && maturity <= end + GRID_EPS) {
        return Err(Error::Validation(format!(
            "maturity {maturity} lies outside the interval [{start}, {end}]"
        )));
    }
    if samples_n.iter().chain(samples_n1).any(|&b| !(b > 0.0)) {
        return Err(Error::Validation("numeraire samples must be positive".into()));
    }
    let log_n: Vec<f64> = samples_n.iter().map(|b| b.ln()).collect();
    let log_n1: Vec<f64> = samples_n1.iter().map(|b| b.ln()).collect();
    let target = if maturity <= GRID_EPS { 1.0 } else { discount(curve, maturity)? };
    let solution = |gamma: f64| GammaSolution {
        maturity,
        gamma,
        residual: (blend_mean(&log_n, &log_n1, gamma) - target).abs(),
    };
    if (maturity - start).abs() <= GRID_EPS {
        return Ok(solution(0.0));
    }
    if (maturity - end).abs() <= GRID_EPS {
        return Ok(solution(1.0));
    }
    let f0 = blend_mean(&log_n, &log_n1, 0.0) - target;
    let f1 = blend_mean(&log_n, &log_n1, 1.0) - target;
    if f0 < -tol || f1 > tol {
        return Err(Error::Infeasible(format!(
            "B(0, {maturity}) = {target} lies outside the attainable range [{}, {}] of the sample set",
            f1 + target,
            f0 + target
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if blend_mean(&log_n, &log_n1, mid) - target > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let candidates = [solution(lo), solution(hi)];
    let best = if candidates[0].residual <= candidates[1].residual {
        candidates[0]
    } else {
        candidates[1]
    };
    if best.residual > tol {
        return Err(Error::Infeasible(format!(
            "bisection residual {} at {maturity} exceeds the tolerance {tol}",
            best.residual
        )));
    }
    Ok(best)
}

/// Numeraire paths and solved blend weights for one construction pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TermStructureInterpolation {
    pub grid: TenorGrid,
    pub curve: DiscountCurve,
    pub numeraire: SpotNumerairePath,
    /// One entry per interval `k = 1..=n+1`, covering `(T_{k-1}, T_k]`.
    pub intervals: Vec<GammaInterpolation>,
}

impl TermStructureInterpolation {
    /// `gamma(u)` with the interval index `i(u)`.
    pub fn gamma(&self, u: f64) -> Result<(usize, f64)> {
        let k = locate_index(&self.grid, u)?;
        let g = self.intervals[k - 1].gamma(u).ok_or_else(|| {
            Error::Dependency(format!("no interpolation weight was solved for {u}"))
        })?;
        Ok((k, g))
    }

    pub fn solutions(&self) -> impl Iterator<Item = &GammaSolution> {
        self.intervals.iter().flat_map(|i| i.points.iter())
    }
}

/// Solves `gamma` at every requested date on one fixed sample set, walking
/// the intervals from the last to the first.
pub fn interpolate_term_structure(
    paths: &RatePathSet,
    grid: &TenorGrid,
    curve: &DiscountCurve,
    dates: &[f64],
    tol: f64,
) -> Result<TermStructureInterpolation> {
    if !paths.measure().same_as(&MeasureLabel::SpotLibor) {
        return Err(Error::MeasureMismatch(format!(
            "interpolation needs spot-LIBOR paths, got {}",
            paths.measure()
        )));
    }
    let mut numeraire = spot_numeraire_path(paths, grid, curve)?;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); grid.count()];
    for &t in dates {
        if !(t > 0.0) {
            return Err(Error::Validation(format!("interpolation date must be positive, got {t}")));
        }
        let k = locate_index(grid, t)?;
        buckets[k - 1].push(t);
    }
    let mut intervals: Vec<GammaInterpolation> = (1..=grid.count())
        .map(|k| GammaInterpolation {
            start: numeraire.times[k - 1],
            end: numeraire.times[k],
            points: Vec::new(),
        })
        .collect();
    for k in (1..=grid.count()).rev() {
        let mut ts = buckets[k - 1].clone();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
        if ts.is_empty() {
            continue;
        }
        let lo = numeraire.column(k - 1);
        let hi = numeraire.column(k);
        let interval = &mut intervals[k - 1];
        for &t in &ts {
            let sol = solve_gamma(&lo, &hi, curve, t, (interval.start, interval.end), tol)?;
            interval.points.push(sol);
            if grid.index_of(t).is_none() {
                let blended = lo
                    .iter()
                    .zip(&hi)
                    .map(|(a, b)| ((1.0 - sol.gamma) * a.ln() + sol.gamma * b.ln()).exp())
                    .collect();
                numeraire.interpolated.push((t, blended));
            }
        }
    }
    numeraire
        .interpolated
        .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(TermStructureInterpolation {
        grid: grid.clone(),
        curve: curve.clone(),
        numeraire,
        intervals,
    })
}

/// Loadings of the forward process `F(t, U, S) = B(t, U) / B(t, S)`:
/// `dF / F_- = alpha c^{1/2} dW + int (beta(x) - 1) (mu - nu)(dt, dx)`
/// under `P_S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardProcessCoefficients {
    pub alpha: f64,
    /// Links of `P_S` beyond `P_U`: their betas multiply.
    pub numerator: Vec<BetaTerm>,
    /// Links of `P_U` beyond `P_S`: their betas divide.
    pub denominator: Vec<BetaTerm>,
}

impl ForwardProcessCoefficients {
    pub fn beta(&self, x: f64) -> f64 {
        let mut b = 1.0;
        for t in &self.numerator {
            b *= t.beta(x);
        }
        for t in &self.denominator {
            b /= t.beta(x);
        }
        b
    }
}

pub fn forward_process_coefficients(
    model: &ModelSpec,
    u: f64,
    s: f64,
    t: f64,
    state: &RateState,
) -> Result<ForwardProcessCoefficients> {
    if !(u < s) {
        return Err(Error::Validation(format!("need U < S, got U = {u}, S = {s}")));
    }
    let grid = &model.grid;
    if s > grid.last() + GRID_EPS {
        return Err(Error::OutOfRange { t: s, last: grid.last() });
    }
    if t > u + GRID_EPS {
        return Err(Error::Matured { t, maturity: u });
    }
    let interval = locate_index(grid, t)?;
    let chain_u = measure_chain(grid, interval, t, u)?;
    let chain_s = measure_chain(grid, interval, t, s)?;
    let term = |r: RateRef| -> Result<BetaTerm> {
        Ok(BetaTerm {
            ell: accrual_weight(model.delta(), state.get(r)?)?,
            lambda: model.vols.loading(grid, r, t)?,
        })
    };
    let numerator = chain_s
        .iter()
        .filter(|r| !chain_u.contains(r))
        .map(|&r| term(r))
        .collect::<Result<Vec<_>>>()?;
    let denominator = chain_u
        .iter()
        .filter(|r| !chain_s.contains(r))
        .map(|&r| term(r))
        .collect::<Result<Vec<_>>>()?;
    let alpha = numerator.iter().map(|b| b.shift()).sum::<f64>()
        - denominator.iter().map(|b| b.shift()).sum::<f64>();
    Ok(ForwardProcessCoefficients {
        alpha,
        numerator,
        denominator,
    })
}

/// Bond prices `B(t, T) = F(t, T, t)` rebuilt from simulated rates and the
/// solved blend weights.
#[derive(Debug, Clone, Copy)]
pub struct BondReconstruction<'a> {
    pub interpolation: &'a TermStructureInterpolation,
    pub paths: &'a RatePathSet,
}

impl<'a> BondReconstruction<'a> {
    pub fn new(interpolation: &'a TermStructureInterpolation, paths: &'a RatePathSet) -> Self {
        Self { interpolation, paths }
    }

    /// `log A_k(t)`.
    fn log_factor(&self, path: usize, node: usize, k: usize) -> Result<f64> {
        let it = self.interpolation;
        if k == 1 {
            return Ok(-discount(&it.curve, it.grid.first())?.ln());
        }
        let col = self.paths.grid_column(k - 1).ok_or_else(|| {
            Error::Dependency(format!("path set lacks the grid rate L(., T_{})", k - 1))
        })?;
        Ok((it.grid.spacing() * self.paths.value(path, node, col)).ln_1p())
    }

    /// `Phi(t, u) = sum_{k < i(u)} log A_k(t) + gamma(u) log A_{i(u)}(t)`.
    fn phi(&self, path: usize, node: usize, u: f64) -> Result<f64> {
        if u <= GRID_EPS {
            return Ok(0.0);
        }
        let (k, g) = self.interpolation.gamma(u)?;
        let mut sum = 0.0;
        for j in 1..k {
            sum += self.log_factor(path, node, j)?;
        }
        if g != 0.0 {
            sum += g * self.log_factor(path, node, k)?;
        }
        Ok(sum)
    }

    fn node(&self, t: f64) -> Result<usize> {
        self.paths
            .node_of(t)
            .ok_or_else(|| Error::Dependency(format!("time {t} was not recorded in the path set")))
    }

    /// `F(t, U, S) = B(t, U) / B(t, S)` on one path.
    pub fn forward_process(&self, path: usize, u: f64, s: f64, t: f64) -> Result<f64> {
        let node = self.node(t)?;
        Ok((self.phi(path, node, s)? - self.phi(path, node, u)?).exp())
    }

    pub fn bond_price(&self, path: usize, maturity: f64, t: f64) -> Result<f64> {
        if t > maturity + GRID_EPS {
            return Err(Error::Matured { t, maturity });
        }
        if t <= 0.0 {
            return discount(&self.interpolation.curve, maturity);
        }
        if (t - maturity).abs() <= GRID_EPS {
            return Ok(1.0);
        }
        let node = self.node(t)?;
        Ok((self.phi(path, node, t)? - self.phi(path, node, maturity)?).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmm_dynamics::VolatilitySpec;
    use crate::simulator::{simulate, SimConfig};
    use crate::stochastic_driver::LevyCharacteristics;
    use crate::termstructure::build_equidistant_grid;

    fn flat_model(lambda: f64) -> ModelSpec {
        let grid = build_equidistant_grid(0.5, 0.5, 2).unwrap();
        let curve = DiscountCurve::new(vec![(0.5, 0.98), (1.0, 0.955)]).unwrap();
        ModelSpec::new(
            grid,
            curve,
            VolatilitySpec::flat(1, lambda).unwrap(),
            LevyCharacteristics::brownian(1.0),
            MeasureLabel::SpotLibor,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_roll_over_inverts_discount() {
        let m = flat_model(0.0);
        let p = simulate(&m, &SimConfig::new(0.125, 3, 1), &[]).unwrap();
        let b = spot_numeraire_path(&p, &m.grid, &m.curve).unwrap();
        assert_eq!(b.value(0, 0), 1.0);
        assert!((b.value(1, 1) - 1.0 / 0.98).abs() < 1e-15);
        assert!((b.value(2, 2) - 1.0 / 0.955).abs() < 1e-14);
        assert!((b.value(2, 2) - 1.047_120).abs() < 1e-6);
    }

    #[test]
    fn gamma_endpoints_are_exact() {
        let curve = DiscountCurve::new(vec![(0.5, 0.98), (1.0, 0.955)]).unwrap();
        let lo = vec![1.0 / 0.98; 4];
        let hi = vec![1.0 / 0.955, 1.04, 1.05, 1.06];
        assert_eq!(solve_gamma(&lo, &hi, &curve, 0.5, (0.5, 1.0), 1e-10).unwrap().gamma, 0.0);
        assert_eq!(solve_gamma(&lo, &hi, &curve, 1.0, (0.5, 1.0), 1e-10).unwrap().gamma, 1.0);
    }

    #[test]
    fn deterministic_gamma_matches_closed_form() {
        let curve = DiscountCurve::new(vec![(0.5, 0.98), (1.0, 0.955)]).unwrap();
        let lo = vec![1.0 / 0.98];
        let hi = vec![1.0 / 0.955];
        let g = solve_gamma(&lo, &hi, &curve, 0.75, (0.5, 1.0), 1e-12).unwrap();
        assert!((g.gamma - 0.5).abs() < 1e-10);
        let t = 0.6;
        let closed = (0.98 / discount(&curve, t).unwrap()).ln() / (0.98f64 / 0.955).ln();
        let g = solve_gamma(&lo, &hi, &curve, t, (0.5, 1.0), 1e-12).unwrap();
        assert!((g.gamma - closed).abs() < 1e-10);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let curve = DiscountCurve::new(vec![(0.5, 0.98), (1.0, 0.955)]).unwrap();
        // sample set too flat to reach B(0, 0.75)
        let lo = vec![1.0 / 0.98; 3];
        let hi = vec![1.0 / 0.98 + 1e-4; 3];
        assert!(matches!(
            solve_gamma(&lo, &hi, &curve, 0.75, (0.5, 1.0), 1e-10),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn forward_process_examples() {
        let grid = build_equidistant_grid(0.5, 0.5, 3).unwrap();
        let curve = DiscountCurve::new(vec![(0.5, 0.98), (1.0, 0.955), (1.5, 0.93)]).unwrap();
        let m = ModelSpec::new(
            grid,
            curve,
            VolatilitySpec::flat(2, 0.2).unwrap(),
            LevyCharacteristics::brownian(1.0),
            MeasureLabel::SpotLibor,
        )
        .unwrap();
        let st = RateState::new(vec![0.04, 0.04]);
        let one = forward_process_coefficients(&m, 0.5, 1.0, 0.1, &st).unwrap();
        assert!((one.alpha - 0.2 * 0.02 / 1.02).abs() < 1e-17);
        assert!((one.alpha - 0.003_921_569).abs() < 1e-9);
        let beta = one.beta(1.0);
        assert!((beta - 1.004_341_230_552_160_2).abs() < 1e-15);
        let two = forward_process_coefficients(&m, 0.5, 1.5, 0.1, &st).unwrap();
        assert!((two.beta(1.0) - beta * beta).abs() < 1e-15);
        assert!((two.beta(1.0) - 1.008_701_307_387).abs() < 1e-12);
        assert!((two.alpha - 2.0 * one.alpha).abs() < 1e-17);
        let zero = ModelSpec {
            vols: VolatilitySpec::flat(2, 0.0).unwrap(),
            ..m.clone()
        };
        let z = forward_process_coefficients(&zero, 0.5, 1.5, 0.1, &st).unwrap();
        assert_eq!(z.alpha, 0.0);
        assert_eq!(z.beta(0.7), 1.0);
        assert!(forward_process_coefficients(&m, 1.0, 2.0, 0.1, &st).is_err());
    }

    #[test]
    fn deterministic_bonds_follow_the_curve() {
        let m = flat_model(0.0);
        let cfg = SimConfig::new(0.125, 2, 1).with_recording(crate::simulator::Recording::EveryStep);
        let p = simulate(&m, &cfg, &[]).unwrap();
        let dates = [0.25, 0.375, 0.75, 0.875];
        let it = interpolate_term_structure(&p, &m.grid, &m.curve, &dates, 1e-12).unwrap();
        let bonds = BondReconstruction::new(&it, &p);
        for &(t, big_t) in &[(0.25, 0.75), (0.375, 0.875), (0.25, 1.0), (0.0, 0.875)] {
            let exact = discount(&m.curve, big_t).unwrap() / discount(&m.curve, t).unwrap();
            let got = bonds.bond_price(1, big_t, t).unwrap();
            assert!((got - exact).abs() < 1e-12, "B({t}, {big_t}) = {got} vs {exact}");
        }
        assert_eq!(bonds.bond_price(0, 0.75, 0.75).unwrap(), 1.0);
        assert!(matches!(bonds.bond_price(0, 0.5, 0.75), Err(Error::Matured { .. })));
    }
}
