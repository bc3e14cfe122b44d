//! Piecewise-constant functions of time.
//!
//! Used for every time-dependent model input: volatility loadings, the
//! diffusion variance rate, the jump intensity and the drift of the driver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A right-continuous step function: `values[0]` on `(-inf, breakpoints[0])`,
/// `values[i]` on `[breakpoints[i-1], breakpoints[i])`, and the last value
/// from the last breakpoint on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::Validation(format!(
                "piecewise-constant function needs {} values for {} breakpoints, got {}",
                breakpoints.len() + 1,
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= t);
        self.values[idx]
    }

    /// Exact integral over `[a, b]` (`a <= b`).
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut total = 0.0;
        let mut left = a;
        let start = self.breakpoints.partition_point(|&bp| bp <= a);
        for (i, &bp) in self.breakpoints.iter().enumerate().skip(start) {
            if bp >= b {
                break;
            }
            total += self.values[i] * (bp - left);
            left = bp;
        }
        total + self.value(left) * (b - left)
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn inf(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Pointwise `(1 - w) * self + w * other`, on the union of breakpoints.
    pub fn blend(&self, other: &Self, w: f64) -> Self {
        let mut bps: Vec<f64> = self
            .breakpoints
            .iter()
            .chain(other.breakpoints.iter())
            .cloned()
            .collect();
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bps.dedup();
        let mut values = Vec::with_capacity(bps.len() + 1);
        let first = bps.first().map(|b| b - 1.0).unwrap_or(0.0);
        values.push((1.0 - w) * self.value(first) + w * other.value(first));
        for &b in &bps {
            values.push((1.0 - w) * self.value(b) + w * other.value(b));
        }
        Self {
            breakpoints: bps,
            values,
        }
    }
}
