mod common;

use levy_lmm::measure_engine::{density_path, MeasureLabel, MeasurePair};
use levy_lmm::simulator::{grid_of, mean_and_se, simulate, SimConfig};
use levy_lmm::validation::martingale_test;
use levy_lmm::Error;

#[test]
fn densities_compose_and_have_unit_mean() {
    let m = common::reference_model(MeasureLabel::SpotLibor);
    let paths = simulate(&m, &SimConfig::new(0.0625, 100_000, 42), &[]).unwrap();
    let grid = grid_of(&paths).unwrap();
    let spot = MeasureLabel::SpotLibor;
    let mid = MeasureLabel::Forward(1.5);
    let last = MeasureLabel::Forward(2.5);
    let ab = density_path(&paths, &grid, &MeasurePair { source: spot, target: mid }).unwrap();
    let bc = density_path(&paths.relabeled(mid), &grid, &MeasurePair { source: mid, target: last }).unwrap();
    let ac = density_path(&paths, &grid, &MeasurePair { source: spot, target: last }).unwrap();
    for i in 0..ac.values.len() {
        assert!((ac.values[i] - ab.values[i] * bc.values[i]).abs() <= 1e-12 * ac.values[i]);
    }
    // T_5 lies past the last fixing and is not simulated
    for t in grid.maturities().into_iter().take(4) {
        let node = paths.node_of(t).unwrap();
        let (mean, se) = mean_and_se(&ac.column(node));
        assert!(((mean - 1.0) / se).abs() <= 3.0 || (se == 0.0 && mean == 1.0), "t = {t}: {mean} +- {se}");
    }
    // round trip is the identity
    let back = density_path(&paths.relabeled(last), &grid, &MeasurePair { source: last, target: spot }).unwrap();
    for i in 0..ac.values.len() {
        assert!((ac.values[i] * back.values[i] - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn density_source_must_match_paths() {
    let m = common::reference_model(MeasureLabel::SpotLibor);
    let paths = simulate(&m, &SimConfig::new(0.125, 10, 5), &[]).unwrap();
    let grid = grid_of(&paths).unwrap();
    let pair = MeasurePair {
        source: MeasureLabel::Forward(1.0),
        target: MeasureLabel::SpotLibor,
    };
    assert!(matches!(density_path(&paths, &grid, &pair), Err(Error::MeasureMismatch(_))));
    assert!(martingale_test(&paths, MeasureLabel::Forward(1.25), 0.5).is_err());
}

#[test]
fn reweighted_spot_paths_pass_martingale_tests() {
    let m = common::reference_model(MeasureLabel::SpotLibor);
    let paths = simulate(&m, &SimConfig::new(0.0625, 50_000, 8), &[]).unwrap();
    for s in 1..=4 {
        let t = m.grid.maturity(s);
        let o = martingale_test(&paths, MeasureLabel::Forward(t + 0.5), t).unwrap();
        assert!(o.passed(), "rate {s}: {o:?}");
    }
}

#[test]
fn mislabeled_spot_paths_fail_the_forward_martingale_test() {
    let mut m = common::reference_model(MeasureLabel::SpotLibor);
    m.vols = levy_lmm::lmm_dynamics::VolatilitySpec::flat(4, 0.3).unwrap();
    let paths = simulate(&m, &SimConfig::new(0.0625, 100_000, 42), &[]).unwrap();
    let wrong = paths.relabeled(MeasureLabel::Forward(2.5));
    let o = martingale_test(&wrong, MeasureLabel::Forward(2.5), 2.0).unwrap();
    assert!(o.z > 3.0, "{o:?}");
}

#[test]
fn deterministic_model_has_zero_z() {
    let m = common::model(5, 0.0, common::gaussian_chars(0.0, 0.1), MeasureLabel::SpotLibor);
    let paths = simulate(&m, &SimConfig::new(0.125, 100, 5), &[]).unwrap();
    for s in 1..=4 {
        let t = m.grid.maturity(s);
        assert_eq!(martingale_test(&paths, MeasureLabel::Forward(t + 0.5), t).unwrap().z, 0.0);
        assert_eq!(martingale_test(&paths, MeasureLabel::SpotLibor, t).unwrap().z, 0.0);
    }
}
