#![allow(dead_code)]

use levy_lmm::lmm_dynamics::{ModelSpec, VolatilitySpec};
use levy_lmm::measure_engine::MeasureLabel;
use levy_lmm::piecewise::PiecewiseConstant;
use levy_lmm::stochastic_driver::{JumpDensity, LevyCharacteristics};
use levy_lmm::termstructure::{build_equidistant_grid, DiscountCurve};

/// Flat 5 % continuously compounded curve on `0.5, 1.0, ..`.
pub fn flat_curve(count: usize) -> DiscountCurve {
    DiscountCurve::new((1..=count).map(|i| (0.5 * i as f64, (-0.025 * i as f64).exp())).collect()).unwrap()
}

pub fn gaussian_chars(eta: f64, sd: f64) -> LevyCharacteristics {
    LevyCharacteristics::new(
        PiecewiseConstant::constant(0.0),
        PiecewiseConstant::constant(1.0),
        PiecewiseConstant::constant(eta),
        JumpDensity::Gaussian { mean: 0.0, sd },
    )
    .unwrap()
}

/// `count - 1` rates on a half-year grid.
pub fn model(count: usize, lambda: f64, chars: LevyCharacteristics, measure: MeasureLabel) -> ModelSpec {
    ModelSpec::new(
        build_equidistant_grid(0.5, 0.5, count).unwrap(),
        flat_curve(count),
        VolatilitySpec::flat(count - 1, lambda).unwrap(),
        chars,
        measure,
    )
    .unwrap()
}

/// Four rates, lambda = 0.2, Gaussian jumps sd 0.1 at unit intensity.
pub fn reference_model(measure: MeasureLabel) -> ModelSpec {
    model(5, 0.2, gaussian_chars(1.0, 0.1), measure)
}
