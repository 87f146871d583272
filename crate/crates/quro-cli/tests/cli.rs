//! End-to-end tests of the `quro` binary: artifact contents, the
//! exit-code contract, and byte determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

use quro_core::claim::Claim;
use quro_core::grid::{pair_reversed, Grid, QuantileFunction};
use quro_core::market::MarketSpec;
use quro_core::preference::robust_objective;
use quro_core::utility::UtilityModel;

const REFERENCE: &str = r#"{
  "market": {
    "horizon": 1.0,
    "rate": [{"end": 1.0, "value": 0.03}],
    "risk_premium": [{"end": 1.0, "value": [0.25]}],
    "volatility": [{"end": 1.0, "value": [[0.2]]}]
  },
  "utility": {"kind": "exponential", "alpha": 1.0},
  "claim": {"kind": "discrete", "atoms": [0.0, 1.0], "weights": [0.5, 0.5]},
  "wealth": 1.0,
  "grid_n": 512,
  "seed": 7,
  "simulation": {"n_paths": 5, "n_steps": 32}
}"#;

const KERNEL_ONLY: &str = r#"{
  "kernel": {"log_mean": -0.06125, "log_sd": 0.25},
  "utility": {"kind": "exponential", "alpha": 1.0},
  "claim": {"kind": "constant", "value": 0.0},
  "wealth": 1.0,
  "grid_n": 256
}"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).expect("write config");
    path
}

fn quro(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quro"))
        .args(args)
        .output()
        .expect("binary spawns")
}

fn run_ok(args: &[&str]) -> Output {
    let out = quro(args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Data rows of a CSV artifact, split into fields.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).expect("read csv");
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn json_value(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).expect("read json")).expect("parse json")
}

#[test]
fn solve_round_trips_the_value_decomposition() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    run_ok(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);

    let rows = csv_rows(&out.join("solution.csv"));
    assert_eq!(rows.len(), 512);
    let qv: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();

    let summary = json_value(&out.join("summary.json"));
    let lambda = summary["lambda"].as_f64().unwrap();
    let v0 = summary["V0"].as_f64().unwrap();
    let resid = summary["budget_residual"].as_f64().unwrap();
    assert!(resid.abs() <= 1e-8);

    // Rebuild the problem and check V0 = J(Qbar) - lambda * budget + lambda * x
    // from the serialized quantile alone.
    let grid = Grid::new(512).unwrap();
    let market = MarketSpec::constant(1.0, 0.03, 0.25, 0.2).unwrap();
    let law = market.kernel_law();
    let kernel_q = law.sample_quantile(grid).unwrap();
    let claim_q = Claim::discrete(&[0.0, 1.0], &[0.5, 0.5])
        .unwrap()
        .sample(grid)
        .unwrap();
    let u = UtilityModel::exponential(1.0).unwrap();
    let (lo, hi) = (qv[0], qv[511]);
    let qbar = QuantileFunction::from_values(grid, qv, lo, hi).unwrap();

    let objective = robust_objective(&qbar, &claim_q, &u).unwrap();
    let budget = pair_reversed(&qbar, &kernel_q).unwrap();
    let rebuilt = objective - lambda * budget + lambda * 1.0;
    assert!(
        (rebuilt - v0).abs() <= 1e-10,
        "decomposition drifted: {rebuilt} vs {v0}"
    );
}

#[test]
fn identical_runs_write_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        run_ok(&["solve", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
        run_ok(&["price", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    }
    for name in ["solution.csv", "summary.json", "price.json"] {
        let lhs = fs::read(a.join(name)).unwrap();
        let rhs = fs::read(b.join(name)).unwrap();
        assert!(lhs == rhs, "{name} differs between identical runs");
    }
}

#[test]
fn unknown_fields_are_schema_violations() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"kernel": {"log_mean": -0.06, "log_sd": 0.25}, "utility": {"kind": "exponential", "alpha": 1.0},
            "claim": {"kind": "constant", "value": 0.0}, "wealth": 1.0, "grid": 64}"#,
    );
    let out = quro(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unknown field"), "unexpected stderr: {err}");
}

#[test]
fn market_and_kernel_are_mutually_exclusive() {
    let tmp = TempDir::new().unwrap();
    let both = REFERENCE.replacen(
        "\"market\": {",
        "\"kernel\": {\"log_mean\": -0.06125, \"log_sd\": 0.25},\n  \"market\": {",
        1,
    );
    let cfg = write_config(tmp.path(), &both);
    let out = quro(&["solve", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn missing_config_flag_is_a_usage_error() {
    let out = quro(&["solve"]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn zero_claim_prices_at_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), KERNEL_ONLY);
    let out = tmp.path().join("out");
    run_ok(&["price", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let price = json_value(&out.join("price.json"));
    assert_eq!(price["p"].as_f64(), Some(0.0));
    assert_eq!(price["exists"].as_bool(), Some(true));
}

#[test]
fn impossible_claim_exits_3_with_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &KERNEL_ONLY.replace("\"value\": 0.0", "\"value\": 10.0"),
    );
    let out = tmp.path().join("out");
    let res = quro(&["price", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(exit_code(&res), 3);
    let price = json_value(&out.join("price.json"));
    assert_eq!(price["exists"].as_bool(), Some(false));
    assert!(price["p"].is_null());
}

#[test]
fn simulate_requires_a_market_block() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), KERNEL_ONLY);
    let out = quro(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn simulate_writes_path_major_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("paths.csv"));
    assert_eq!(rows.len(), 5 * 33);
    for p in 0..5 {
        let first = &rows[p * 33];
        assert_eq!(first[0], p.to_string());
        assert_eq!(first[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(first[2].parse::<f64>().unwrap(), 1.0);
    }
    for row in &rows {
        assert!(row[3].parse::<f64>().unwrap().is_finite());
    }
}

#[test]
fn seed_override_changes_the_paths() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--seed", "9"]);
    let lhs = fs::read(a.join("paths.csv")).unwrap();
    let rhs = fs::read(b.join("paths.csv")).unwrap();
    assert!(lhs != rhs, "different seeds produced identical paths");
}

#[test]
fn grid_override_applies() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    run_ok(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--grid", "256"]);
    assert_eq!(csv_rows(&out.join("solution.csv")).len(), 256);
}

#[test]
fn check_passes_on_the_reference_problem() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    run_ok(&["check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report = json_value(&out.join("check.json"));
    for key in ["well_posed", "tail_dominance", "calibrated"] {
        assert_eq!(report[key].as_bool(), Some(true), "{key} should hold");
    }
}

#[test]
fn envelope_exports_a_concave_hull() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("out");
    run_ok(&["envelope", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let rows = csv_rows(&out.join("envelope.csv"));
    assert_eq!(rows.len(), 513);
    assert!(rows[512][4].is_empty(), "last row has no cell to its right");
    let slopes: Vec<f64> = rows[..512].iter().map(|r| r[4].parse().unwrap()).collect();
    for w in slopes.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "envelope slopes must not increase");
    }
    // The envelope never lies below the input polyline.
    for row in &rows {
        let f: f64 = row[2].parse().unwrap();
        let env: f64 = row[3].parse().unwrap();
        assert!(env >= f - 1e-12);
    }
}

#[test]
fn solve_exp_matches_solve_on_the_reference_problem() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let (a, b) = (tmp.path().join("vi"), tmp.path().join("env"));
    run_ok(&["solve", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["solve-exp", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    let vi = csv_rows(&a.join("solution.csv"));
    let env = csv_rows(&b.join("solution.csv"));
    let mut sup: f64 = 0.0;
    for (l, r) in vi.iter().zip(&env) {
        let d = (l[1].parse::<f64>().unwrap() - r[1].parse::<f64>().unwrap()).abs();
        sup = sup.max(d);
    }
    assert!(sup <= 5.0 / 512.0, "routes disagree by {sup}");
}

#[test]
fn solve_exp_rejects_other_utilities() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &KERNEL_ONLY.replace(
            r#"{"kind": "exponential", "alpha": 1.0}"#,
            r#"{"kind": "log", "shift": 0.5}"#,
        ),
    );
    let out = quro(&["solve-exp", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2);
}
