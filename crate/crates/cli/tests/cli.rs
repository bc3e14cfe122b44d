use std::path::{Path, PathBuf};
use std::process::Command;

use levy_lmm::measure_engine::MeasureLabel;
use levy_lmm_cli::{parse_scenario, parse_scenario_in, Overrides};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_levy-lmm")).args(args).output().unwrap()
}

#[test]
fn minimal_scenario_gets_defaults() {
    let s = parse_scenario(&read("minimal.json")).unwrap();
    assert_eq!(s.sim.n_paths, 100_000);
    assert_eq!(s.sim.seed, 42);
    assert_eq!(s.sim.step, 0.0625);
    assert_eq!(s.model.measure, MeasureLabel::SpotLibor);
    assert_eq!(s.model.grid.maturities(), vec![0.5, 1.0, 1.5]);
    assert!(!s.model.chars.has_jumps());
    assert_eq!(s.model.chars.diffusion.value(0.3), 1.0);
}

#[test]
fn increasing_curve_is_rejected_with_pillar_index() {
    let err = parse_scenario(&read("increasing_curve.json")).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("pillar 1"), "{msg}");
}

#[test]
fn missing_loading_for_requested_maturity_is_rejected() {
    let err = parse_scenario(&read("missing_lambda.json")).unwrap_err();
    assert!(format!("{err:#}").contains("1.25"));
}

#[test]
fn overrides_win_over_the_document() {
    let s = parse_scenario_in(
        &read("reference.json"),
        &fixture(""),
        Overrides {
            seed: Some(9),
            paths: Some(10),
            step: Some(0.125),
        },
    )
    .unwrap();
    assert_eq!((s.sim.seed, s.sim.n_paths, s.sim.step), (9, 10, 0.125));
    assert_eq!(s.extensions.len(), 2);
    assert_eq!(s.extensions[0].1, *s.model.initial_rates.last().unwrap());
    assert_eq!(s.caplets[1].strike, s.model.initial_rates[2]);
}

#[test]
fn reference_scenario_matches_golden_model() {
    let s = parse_scenario_in(&read("reference.json"), &fixture(""), Overrides::default()).unwrap();
    let got = serde_json::to_value(&s.model).unwrap();
    let golden: serde_json::Value = serde_json::from_str(&read("reference_model.golden.json")).unwrap();
    assert_eq!(got, golden);
}

#[test]
fn validate_zero_vol_scenario_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&["validate", "--scenario", fixture("zero_vol.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert!(dir.path().join("model.json").exists());
}

#[test]
fn validate_with_failing_check_exits_nonzero() {
    // too few paths for the gamma bracket: the solver reports infeasibility
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(
        &scenario,
        r#"{ "curve": { "pillars": [[0.5, 0.98], [1.0, 0.955], [1.5, 0.93]] },
             "volatility": 0.9,
             "characteristics": { "eta": 2.0, "jumps": { "family": "gaussian", "mean": 0.0, "sd": 0.5 } },
             "simulation": { "paths": 2, "step": 0.125 } }"#,
    )
    .unwrap();
    let out = run_cli(&["validate", "--scenario", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(out.status.code(), Some(if report["passed"] == true { 0 } else { 1 }));
    assert_eq!(report["passed"], false, "{report}");
}

#[test]
fn invalid_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&["build", "--scenario", fixture("increasing_curve.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let out = run_cli(&["build", "--scenario", "/nonexistent/s.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/s.json"));
}

#[test]
fn simulate_is_byte_identical_for_one_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let s = fixture("reference.json");
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let out = run_cli(&["simulate", "--scenario", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", seed, "--paths", "300"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = |d: &tempfile::TempDir| std::fs::read(d.path().join("paths.csv")).unwrap();
    assert_eq!(csv(&a), csv(&b));
    assert_ne!(csv(&a), csv(&c));
    let text = String::from_utf8(csv(&a)).unwrap();
    assert!(text.starts_with("path,time,maturity,rate\n"));
    // interpolated maturities inside the horizon are simulated too
    assert!(text.lines().any(|l| l.split(',').nth(2) == Some("0.75")));
}

#[test]
fn price_atm_caplet_matches_black() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&["price", "--scenario", fixture("atm_caplet.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let row = &report["caplets"][0];
    let price = row["price"].as_f64().unwrap();
    let se = row["standard_error"].as_f64().unwrap();
    assert!(((price - 0.00185203) / se).abs() <= 3.0, "{row}");
    assert!((row["black"].as_f64().unwrap() - 0.001_851_994_4).abs() < 1e-9);
}

#[test]
fn build_extend_interpolate_write_reports() {
    let s = fixture("reference.json");
    for cmd in ["build", "extend", "interpolate"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_cli(&[cmd, "--scenario", s.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--paths", "500"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report["command"], cmd);
        match cmd {
            "extend" => assert_eq!(report["maturities"].as_array().unwrap().len(), 7),
            "interpolate" => {
                for g in report["gamma"].as_array().unwrap() {
                    assert!(g["residual"].as_f64().unwrap() <= 1e-10);
                }
            }
            _ => assert_eq!(report["conditions"]["cond2_pass"], true),
        }
    }
}
