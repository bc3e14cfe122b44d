//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use levy_lmm::interpolation::interpolate_term_structure;
use levy_lmm::lmm_dynamics::{ModelSpec, VolatilitySpec};
use levy_lmm::measure_engine::MeasureLabel;
use levy_lmm::piecewise::PiecewiseConstant;
use levy_lmm::simulator::{caplet_price_mc, simulate, Corruption, SimConfig};
use levy_lmm::stochastic_driver::{check_conditions, JumpDensity, LevyCharacteristics};
use levy_lmm::termstructure::{build_equidistant_grid, DiscountCurve};
use levy_lmm::validation::{consistency_suite_groups, martingale_test, CheckGroup, ValidationReport};

const PATHS: usize = 100_000;
const SEED: u64 = 42;
const BLACK_ORACLE: f64 = 0.00185203;

type Verdict = Result<String, String>;

fn flat_curve(count: usize) -> DiscountCurve {
    DiscountCurve::new((1..=count).map(|i| (0.5 * i as f64, (-0.025 * i as f64).exp())).collect()).unwrap()
}

fn chars(eta: f64, jumps: JumpDensity) -> LevyCharacteristics {
    LevyCharacteristics::new(
        PiecewiseConstant::constant(0.0),
        PiecewiseConstant::constant(1.0),
        PiecewiseConstant::constant(eta),
        jumps,
    )
    .unwrap()
}

fn gaussian() -> LevyCharacteristics {
    chars(1.0, JumpDensity::Gaussian { mean: 0.0, sd: 0.1 })
}

/// Four rates on a half-year grid with a flat 5 % curve.
fn model(lambda: f64, c: LevyCharacteristics, measure: MeasureLabel) -> ModelSpec {
    ModelSpec::new(
        build_equidistant_grid(0.5, 0.5, 5).unwrap(),
        flat_curve(5),
        VolatilitySpec::flat(4, lambda).unwrap(),
        c,
        measure,
    )
    .unwrap()
}

fn group_verdict(report: &ValidationReport, group: CheckGroup) -> Verdict {
    let lines: Vec<String> = report
        .checks
        .iter()
        .filter(|c| c.group == group)
        .map(|c| format!("{} {:.3e} (tol {:.0e})", c.name, c.statistic, c.tolerance))
        .collect();
    if report.group_passed(group) {
        Ok(lines.join(", "))
    } else {
        Err(lines.join(", "))
    }
}

fn criterion_1() -> Verdict {
    // B(0, 1.0) chosen so that L(0, 1.0) = 0.05 and B(0, 1.5) = 0.93, the oracle's inputs
    let curve = DiscountCurve::new(vec![(0.5, 0.98), (1.0, 0.95325), (1.5, 0.93)]).unwrap();
    let m = ModelSpec::new(
        build_equidistant_grid(0.5, 0.5, 3).unwrap(),
        curve,
        VolatilitySpec::flat(2, 0.2).unwrap(),
        LevyCharacteristics::brownian(1.0),
        MeasureLabel::Forward(1.5),
    )
    .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let paths = simulate(&m, &SimConfig::new(1.0 / 16.0, PATHS, SEED), &[]).map_err(|e| e.to_string())?;
    let strike = m.initial_rates[1];
    let (price, se) = caplet_price_mc(&paths, strike, 1.0, 0.5, &m.curve).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let z = (price - BLACK_ORACLE) / se;
    let msg = format!("price {price:.8} se {se:.2e} z {z:.2} in {secs:.2}s");
    if z.abs() <= 3.0 && secs < 60.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_2() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for s in 1..=4 {
        let t = 0.5 * s as f64;
        let measure = MeasureLabel::Forward(t + 0.5);
        let m = model(0.2, gaussian(), measure);
        let paths = simulate(&m, &SimConfig::new(0.0625, PATHS, SEED + s as u64), &[]).map_err(|e| e.to_string())?;
        let o = martingale_test(&paths, measure, t).map_err(|e| e.to_string())?;
        ok &= o.passed();
        parts.push(format!("L({t}) z {:.2}", o.z));
    }
    if ok {
        Ok(parts.join(", "))
    } else {
        Err(parts.join(", "))
    }
}

fn criterion_4() -> Verdict {
    let m = model(0.0, chars(0.0, JumpDensity::Gaussian { mean: 0.0, sd: 0.0 }), MeasureLabel::SpotLibor);
    let paths = simulate(&m, &SimConfig::new(0.125, 10, SEED), &[]).map_err(|e| e.to_string())?;
    let mids: Vec<f64> = (1..=4).map(|k| 0.5 * k as f64 - 0.25).collect();
    let it = interpolate_term_structure(&paths, &m.grid, &m.curve, &mids, 1e-12).map_err(|e| e.to_string())?;
    let worst = mids
        .iter()
        .map(|&u| it.gamma(u).map(|(_, g)| (g - 0.5).abs()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(0.0, f64::max);
    let msg = format!("max |gamma(mid) - 0.5| = {worst:.2e} over {} intervals", mids.len());
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Verdict {
    let horizon = 2.5;
    let gauss = gaussian();
    let gauss_vols = VolatilitySpec::flat(4, 0.2).unwrap();
    let two_sided = chars(1.0, JumpDensity::TwoSidedExponential { rate: 3.0 });
    let heavy_vols = VolatilitySpec::flat(5, 1.0).unwrap();
    let brownian = LevyCharacteristics::brownian(1.0);
    let a = check_conditions(&gauss, &gauss_vols, horizon, None).map_err(|e| e.to_string())?;
    let b = check_conditions(&two_sided, &heavy_vols, horizon, None).map_err(|e| e.to_string())?;
    let c = check_conditions(&brownian, &gauss_vols, horizon, None).map_err(|e| e.to_string())?;
    let msg = format!(
        "gaussian all_pass={}, two-sided rate 3 with M={} cond2={}, zero-jump all_pass={}",
        a.all_pass(),
        b.bound_m,
        b.cond2_pass,
        c.all_pass()
    );
    if a.all_pass() && !b.cond2_pass && b.bound_m == 5.0 && c.all_pass() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_9() -> Verdict {
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference.json");
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let status = Command::new(env!("CARGO_BIN_EXE_levy-lmm"))
            .args(["simulate", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        outputs.push(std::fs::read(dir.path().join("paths.csv")).map_err(|e| e.to_string())?);
    }
    let msg = format!("two runs, {} bytes each", outputs[0].len());
    if outputs[0] == outputs[1] && !outputs[0].is_empty() {
        Ok(msg)
    } else {
        Err(format!("outputs differ: {} vs {} bytes", outputs[0].len(), outputs[1].len()))
    }
}

fn criterion_10() -> Verdict {
    let spot = model(0.3, gaussian(), MeasureLabel::SpotLibor);
    let paths = simulate(&spot, &SimConfig::new(0.0625, PATHS, SEED), &[]).map_err(|e| e.to_string())?;
    let wrong = MeasureLabel::Forward(2.5);
    let mislabeled = martingale_test(&paths.relabeled(wrong), wrong, 2.0).map_err(|e| e.to_string())?;

    let cfg = SimConfig::new(0.0625, PATHS, SEED).with_corruption(Corruption::FlipDriftSign);
    let corrupted = consistency_suite_groups(&model(0.2, gaussian(), MeasureLabel::SpotLibor), &cfg, &[CheckGroup::BlackReduction]);
    let check = corrupted.check("black-reduction").ok_or("black-reduction check missing")?;
    let msg = format!(
        "mislabeled z {:.2}, corrupted drift black-reduction z {:.2} passed={}",
        mislabeled.z, check.statistic, check.passed
    );
    if mislabeled.z.abs() > 3.0 && check.statistic.abs() > 3.0 && !check.passed {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let suite_start = Instant::now();
    let reference = model(0.2, gaussian(), MeasureLabel::SpotLibor);
    let suite = consistency_suite_groups(
        &reference,
        &SimConfig::new(0.0625, PATHS, SEED),
        &[CheckGroup::GridReduction, CheckGroup::Gamma, CheckGroup::Density, CheckGroup::Extension],
    );

    let results: Vec<(usize, &str, Verdict)> = vec![
        (1, "zero-jump Black reduction", criterion_1()),
        (2, "forward-measure martingales", criterion_2()),
        (3, "gamma defining equation", group_verdict(&suite, CheckGroup::Gamma)),
        (4, "deterministic gamma closed form", criterion_4()),
        (5, "grid reduction", group_verdict(&suite, CheckGroup::GridReduction)),
        (6, "measure algebra", group_verdict(&suite, CheckGroup::Density)),
        (7, "tenor extension", group_verdict(&suite, CheckGroup::Extension)),
        (8, "condition checker", criterion_8()),
        (9, "CLI determinism", criterion_9()),
        (10, "positive controls", criterion_10()),
    ];

    let mut failed = 0;
    for (n, name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("criterion {n} PASS: {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} FAIL: {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        results.len() - failed,
        results.len(),
        suite_start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
