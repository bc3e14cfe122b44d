//! Tenor grids, initial discount curves and initial forward LIBOR rates.
//!
//! Grid dates and rates use 1-based indices: the grid holds maturities
//! `T_1 < ... < T_{n+1}` and the rate `L(., T_k)` accrues over
//! `[T_k, T_{k+1}]` for `k = 1..=n`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EQUIDISTANCE_TOL: f64 = 1e-12;
/// Slack used when comparing a time against a grid date.
pub const GRID_EPS: f64 = 1e-12;

/// Equidistant maturity grid `T_i = first + (i - 1) * spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TenorGrid {
    first: f64,
    spacing: f64,
    count: usize,
}

impl TenorGrid {
    pub fn first(&self) -> f64 {
        self.first
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Number of grid dates `n + 1`.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Number of forward rates `n` carried by the grid.
    pub fn rate_count(&self) -> usize {
        self.count - 1
    }

    /// `T_i`, 1-based.
    pub fn maturity(&self, i: usize) -> f64 {
        debug_assert!(i >= 1);
        self.first + (i - 1) as f64 * self.spacing
    }

    pub fn maturities(&self) -> Vec<f64> {
        (1..=self.count).map(|i| self.maturity(i)).collect()
    }

    pub fn last(&self) -> f64 {
        self.maturity(self.count)
    }

    /// Grid with one more date `T_{n+2} = T_{n+1} + spacing`.
    pub fn extended(&self, extra: usize) -> Self {
        Self {
            count: self.count + extra,
            ..self.clone()
        }
    }

    /// 1-based index of `t` if it coincides with a grid date.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.first) / self.spacing).round();
        if k < 0.0 || k as usize >= self.count {
            return None;
        }
        let i = k as usize + 1;
        ((self.maturity(i) - t).abs() <= 1e-9).then_some(i)
    }

    pub fn check_invariants(&self) -> Result<()> {
        let m = self.maturities();
        if m[0] <= 0.0 {
            return Err(Error::Validation("first maturity must be positive".into()));
        }
        for w in m.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation("grid must be strictly increasing".into()));
            }
            if (w[1] - w[0] - self.spacing).abs() > EQUIDISTANCE_TOL {
                return Err(Error::Validation("grid is not equidistant".into()));
            }
        }
        Ok(())
    }
}

/// Builds `{first, first + spacing, ..}` with `count` dates.
pub fn build_equidistant_grid(first_maturity: f64, spacing: f64, count: usize) -> Result<TenorGrid> {
    if !(first_maturity > 0.0 && first_maturity.is_finite()) {
        return Err(Error::Validation(format!(
            "first maturity must be positive, got {first_maturity}"
        )));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::Validation(format!(
            "tenor spacing must be positive, got {spacing}"
        )));
    }
    if count < 2 {
        return Err(Error::Validation(format!(
            "a tenor grid needs at least 2 dates, got {count}"
        )));
    }
    let grid = TenorGrid {
        first: first_maturity,
        spacing,
        count,
    };
    grid.check_invariants()?;
    Ok(grid)
}

/// `i(t) = min { i : t <= T_i }`, inclusive at grid dates.
pub fn locate_index(grid: &TenorGrid, t: f64) -> Result<usize> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Validation(format!("time must be non-negative, got {t}")));
    }
    if t > grid.last() + GRID_EPS {
        return Err(Error::OutOfRange {
            t,
            last: grid.last(),
        });
    }
    if t <= grid.first() + GRID_EPS {
        return Ok(1);
    }
    let k = ((t - grid.first()) / grid.spacing()).ceil() as usize + 1;
    // guard the ceil against representation error on either side of a date
    let mut i = k.clamp(1, grid.count());
    while i > 1 && t <= grid.maturity(i - 1) + GRID_EPS {
        i -= 1;
    }
    while t > grid.maturity(i) + GRID_EPS {
        i += 1;
    }
    Ok(i)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CurveInterpolation {
    #[default]
    LogLinear,
}

/// Initial zero-coupon bond prices `B(0, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountCurve {
    pillars: Vec<(f64, f64)>,
    #[serde(default)]
    interpolation: CurveInterpolation,
}

impl DiscountCurve {
    /// Pillars must be ascending in maturity with strictly decreasing prices
    /// in `(0, 1]`. A pillar at maturity 0 is added (or checked) with price 1.
    pub fn new(pillars: Vec<(f64, f64)>) -> Result<Self> {
        if pillars.is_empty() {
            return Err(Error::Validation("discount curve has no pillars".into()));
        }
        let mut pts = Vec::with_capacity(pillars.len() + 1);
        for (idx, &(t, p)) in pillars.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(Error::Validation(format!(
                    "pillar {idx}: maturity {t} must be finite and non-negative"
                )));
            }
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Validation(format!(
                    "pillar {idx}: discount {p} must lie in (0, 1]"
                )));
            }
            if t == 0.0 && p != 1.0 {
                return Err(Error::Validation(format!(
                    "pillar {idx}: discount at maturity 0 must be 1, got {p}"
                )));
            }
            if idx > 0 {
                let (pt, pp) = pillars[idx - 1];
                if t <= pt {
                    return Err(Error::Validation(format!(
                        "pillar {idx}: maturity {t} is not greater than previous maturity {pt}"
                    )));
                }
                if p >= pp {
                    return Err(Error::Validation(format!(
                        "pillar {idx}: discount {p} at maturity {t} is not below previous discount {pp}; \
                         the curve must be strictly decreasing"
                    )));
                }
            }
            pts.push((t, p));
        }
        if pts[0].0 > 0.0 {
            if pts[0].1 >= 1.0 {
                return Err(Error::Validation(format!(
                    "pillar 0: discount {} at positive maturity must be below 1",
                    pts[0].1
                )));
            }
            pts.insert(0, (0.0, 1.0));
        }
        Ok(Self {
            pillars: pts,
            interpolation: CurveInterpolation::LogLinear,
        })
    }

    /// Reads a CSV with header `maturity,discount`.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "maturity" || &headers[1] != "discount" {
            return Err(Error::Validation(format!(
                "curve csv header must be `maturity,discount`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pillars = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| {
                    Error::Validation(format!("curve csv row {}: {e}", row + 1))
                })
            };
            pillars.push((parse(0)?, parse(1)?));
        }
        Self::new(pillars)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    /// Pillars including the implicit `(0, 1)` point.
    pub fn pillars(&self) -> &[(f64, f64)] {
        &self.pillars
    }

    pub fn last_maturity(&self) -> f64 {
        self.pillars.last().unwrap().0
    }

    pub fn interpolation(&self) -> CurveInterpolation {
        self.interpolation
    }
}

/// `B(0, T)`: exact at pillars, log-linear in between, no extrapolation.
pub fn discount(curve: &DiscountCurve, t: f64) -> Result<f64> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::Validation(format!("maturity must be non-negative, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    let pts = curve.pillars();
    let last = curve.last_maturity();
    if t > last {
        return Err(Error::Extrapolation { t, last });
    }
    let j = pts.partition_point(|&(m, _)| m < t);
    let (t1, p1) = pts[j];
    if t1 == t {
        return Ok(p1);
    }
    let (t0, p0) = pts[j - 1];
    let w = (t - t0) / (t1 - t0);
    Ok((p0.ln() * (1.0 - w) + p1.ln() * w).exp())
}

/// `L(0, T - delta) = (B(0, T - delta) / B(0, T) - 1) / delta`; `settlement` is `T`.
pub fn initial_forward_libor(curve: &DiscountCurve, settlement: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Validation(format!("accrual period must be positive, got {delta}")));
    }
    let start = settlement - delta;
    if start < -GRID_EPS {
        return Err(Error::Validation(format!(
            "settlement {settlement} is before the accrual period {delta}"
        )));
    }
    let b_start = discount(curve, start.max(0.0))?;
    let b_end = discount(curve, settlement)?;
    Ok((b_start / b_end - 1.0) / delta)
}
