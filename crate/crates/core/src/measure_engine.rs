//! Change-of-measure algebra between forward measures and the spot-LIBOR
//! measure.
//!
//! Every supported measure is, on a tenor interval `(T_{i-1}, T_i]`, tied to
//! the local reference measure `P_{T_i}` by a chain of forward rates. Moving
//! along one link with rate `L` shifts the Brownian motion by
//! `ell * lambda * c^{1/2}` and rescales the jump compensator by `1 / beta(x)`,
//! where `ell = delta L / (1 + delta L)` and `beta(x) = ell (e^{lambda x} - 1) + 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::RatePathSet;
use crate::termstructure::{locate_index, TenorGrid, GRID_EPS};

/// `ell = delta L / (1 + delta L)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct AccrualWeight(f64);

impl AccrualWeight {
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn accrual_weight(delta: f64, rate: f64) -> Result<AccrualWeight> {
    let growth = 1.0 + delta * rate;
    if !(growth > 0.0) {
        return Err(Error::DegenerateRate { delta, rate });
    }
    Ok(AccrualWeight(delta * rate / growth))
}

/// `beta = ell (e^{lambda x} - 1) + 1`.
pub fn jump_beta(ell: AccrualWeight, lambda: f64, x: f64) -> f64 {
    ell.0 * (lambda * x).exp_m1() + 1.0
}

/// Girsanov drift per unit time, `sum_j ell_j lambda_j c^{1/2}`.
pub fn brownian_drift_adjustment(terms: &[(f64, AccrualWeight)], c: f64) -> f64 {
    let root = c.sqrt();
    terms.iter().map(|&(lambda, ell)| ell.0 * lambda * root).sum()
}

/// `prod_j 1 / beta_j`.
pub fn compensator_factor(betas: &[f64]) -> Result<f64> {
    let mut factor = 1.0;
    for &b in betas {
        if !(b > 0.0) {
            return Err(Error::InvalidState(format!("jump factor beta = {b} is not positive")));
        }
        factor /= b;
    }
    Ok(factor)
}

/// One link of a measure chain: a rate with its accrual weight and loading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTerm {
    pub ell: AccrualWeight,
    pub lambda: f64,
}

impl BetaTerm {
    pub fn beta(&self, x: f64) -> f64 {
        jump_beta(self.ell, self.lambda, x)
    }

    pub fn shift(&self) -> f64 {
        self.ell.0 * self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "maturity", rename_all = "kebab-case")]
pub enum MeasureLabel {
    /// Forward measure with numeraire `B(., T)`.
    Forward(f64),
    SpotLibor,
}

impl MeasureLabel {
    /// Grid index `a` of the numeraire bond `T_a`; the spot-LIBOR measure
    /// behaves as `a = 1` with the bond rolled over at each tenor date.
    pub fn numeraire_index(&self, grid: &TenorGrid) -> Result<usize> {
        match *self {
            MeasureLabel::SpotLibor => Ok(1),
            MeasureLabel::Forward(t) => grid.index_of(t).ok_or_else(|| {
                Error::MeasureMismatch(format!(
                    "forward measure for {t} is not on the tenor grid {:?}",
                    grid.maturities()
                ))
            }),
        }
    }

    pub fn same_as(&self, other: &MeasureLabel) -> bool {
        match (self, other) {
            (MeasureLabel::SpotLibor, MeasureLabel::SpotLibor) => true,
            (MeasureLabel::Forward(a), MeasureLabel::Forward(b)) => (a - b).abs() <= 1e-9,
            _ => false,
        }
    }
}

impl std::fmt::Display for MeasureLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeasureLabel::SpotLibor => write!(f, "spot-LIBOR"),
            MeasureLabel::Forward(t) => write!(f, "forward({t})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurePair {
    pub source: MeasureLabel,
    pub target: MeasureLabel,
}

/// A forward rate in a chain: a grid rate `L(., T_j)` (1-based) or an
/// interpolated rate `L(., T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateRef {
    Grid(usize),
    OffGrid(f64),
}

/// Rates linking `P_V` to the local reference `P_{T_interval}`, where
/// `interval = i(t)` is the tenor interval containing `t`.
///
/// `P_V` hangs off the grid measure below `V - delta` through the single
/// rate `L(., V - delta)`; for grid `V = T_k` this gives the grid rates
/// `T_interval .. T_{k-1}`. Rates already fixed at `t` carry no loading and
/// are dropped.
pub fn measure_chain(grid: &TenorGrid, interval: usize, t: f64, v: f64) -> Result<Vec<RateRef>> {
    let anchor = grid.maturity(interval);
    if v <= anchor + GRID_EPS {
        return Ok(Vec::new());
    }
    let u = v - grid.spacing();
    if let Some(m) = grid.index_of(u) {
        return Ok((interval..=m).map(RateRef::Grid).collect());
    }
    let m = locate_index(grid, u)?;
    let mut chain: Vec<RateRef> = (interval..m).map(RateRef::Grid).collect();
    if u >= t - GRID_EPS {
        chain.push(RateRef::OffGrid(u));
    }
    Ok(chain)
}

/// Chain of the reference measure itself relative to `P_{T_interval}`.
pub fn reference_chain(
    grid: &TenorGrid,
    reference: &MeasureLabel,
    interval: usize,
    t: f64,
) -> Result<Vec<RateRef>> {
    match reference {
        MeasureLabel::SpotLibor => Ok(Vec::new()),
        MeasureLabel::Forward(ta) => {
            let a = reference.numeraire_index(grid)?;
            if a <= interval {
                Ok(Vec::new())
            } else {
                measure_chain(grid, interval, t, *ta)
            }
        }
    }
}

/// Links of `P_V` relative to a reference measure, split by orientation:
/// `up` links push the compensator by `1 / beta`, `down` links by `beta`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SignedChain {
    pub up: Vec<RateRef>,
    pub down: Vec<RateRef>,
}

pub fn signed_chain(
    grid: &TenorGrid,
    reference: &MeasureLabel,
    interval: usize,
    t: f64,
    v: f64,
) -> Result<SignedChain> {
    let own = measure_chain(grid, interval, t, v)?;
    let reference = reference_chain(grid, reference, interval, t)?;
    let up = own.iter().filter(|r| !reference.contains(r)).cloned().collect();
    let down = reference.iter().filter(|r| !own.contains(r)).cloned().collect();
    Ok(SignedChain { up, down })
}

/// Radon-Nikodym density process `(dP_target / dP_source)_t` on each path.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPath {
    pub times: Vec<f64>,
    pub n_paths: usize,
    /// `[path][node]`.
    pub values: Vec<f64>,
}

impl DensityPath {
    pub fn value(&self, path: usize, node: usize) -> f64 {
        self.values[path * self.times.len() + node]
    }

    pub fn column(&self, node: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.value(p, node)).collect()
    }
}

/// Bond-ratio form of the density: with `G_a(t) = prod_{j<a} (1 + delta
/// L(t, T_j)) / (1 + delta L(0, T_j))`, `dP_target / dP_source = G_source / G_target`.
/// Rates are frozen after fixing, which realizes the rolled-over bonds.
pub fn density_path(paths: &RatePathSet, grid: &TenorGrid, pair: &MeasurePair) -> Result<DensityPath> {
    if !paths.measure().same_as(&pair.source) {
        return Err(Error::MeasureMismatch(format!(
            "paths were simulated under {} but the density source is {}",
            paths.measure(),
            pair.source
        )));
    }
    let a_src = pair.source.numeraire_index(grid)?;
    let a_tgt = pair.target.numeraire_index(grid)?;
    let (lo, hi, invert) = if a_src >= a_tgt {
        (a_tgt, a_src, false)
    } else {
        (a_src, a_tgt, true)
    };
    let columns: Vec<usize> = (lo..hi)
        .map(|j| {
            paths.grid_column(j).ok_or_else(|| {
                Error::MeasureMismatch(format!(
                    "density between {} and {} needs the grid rate L(., T_{j}) in the path set",
                    pair.source, pair.target
                ))
            })
        })
        .collect::<Result<_>>()?;
    let delta = grid.spacing();
    let n_nodes = paths.times().len();
    let base: Vec<f64> = columns
        .iter()
        .map(|&c| 1.0 + delta * paths.initial_rate(c))
        .collect();
    let values: Vec<f64> = (0..paths.n_paths())
        .into_par_iter()
        .flat_map_iter(|p| {
            let columns = &columns;
            let base = &base;
            (0..n_nodes).map(move |k| {
                let mut g = 1.0;
                for (&c, &b0) in columns.iter().zip(base) {
                    g *= (1.0 + delta * paths.value(p, k, c)) / b0;
                }
                if invert {
                    1.0 / g
                } else {
                    g
                }
            })
        })
        .collect();
    Ok(DensityPath {
        times: paths.times().to_vec(),
        n_paths: paths.n_paths(),
        values,
    })
}
