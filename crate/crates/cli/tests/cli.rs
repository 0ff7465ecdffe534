use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use regime_rkf_cli::config::{parse_config, ConfigError};
use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_regime-rkf"));
    c.env_remove("REGIME_RKF_THREADS");
    c
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn small_two_regime() -> Value {
    json!({
        "strike": 9.0,
        "maturity": 1.0,
        "regimes": [{"rate": 0.10, "sigma": 0.80}, {"rate": 0.05, "sigma": 0.30}],
        "generator": [[-6, 6], [9, -9]],
        "grid": {"x_max": 3.0, "m": 60},
        "outputs": {"spots": [4.0, 9.0, 12.0], "gamma": true, "digits": 6}
    })
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn price_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_regime());
    let out = run(bin().arg("price").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let prices = csv_rows(&dir.path().join("prices.csv"));
    assert_eq!(
        prices[0],
        ["S", "regime_1", "regime_2", "delta_1", "delta_2", "gamma_1", "gamma_2"]
    );
    assert_eq!(prices[1][0], "4.0");
    assert_eq!(prices[2][0], "9.0");
    assert!(prices[2][1].split('.').nth(1).unwrap().len() == 6);
    let v: f64 = prices[2][1].parse().unwrap();
    assert!((v - 1.972).abs() < 2e-2);

    let boundary = fs::read_to_string(dir.path().join("boundary.csv")).unwrap();
    let mut lines = boundary.lines();
    assert_eq!(lines.next(), Some("tau,sf_1,sf_2"));
    assert_eq!(lines.next(), Some("0,9,9"));
    assert!(lines.last().unwrap().starts_with("1,"));

    let steps = csv_rows(&dir.path().join("steps.csv"));
    assert_eq!(steps[0], ["t", "k", "e_u", "accepted"]);
    let h = 3.0 / 60.0;
    // first attempt starts at h^2, possibly halved by boundary-root retries
    let ratio = (h * h / steps[1][1].parse::<f64>().unwrap()).log2();
    assert!(ratio >= 0.0 && (ratio - ratio.round()).abs() < 1e-9, "{ratio}");
    assert!(steps[1..].iter().all(|r| r[3] == "true" || r[3] == "false"));
    let total: f64 = steps[1..]
        .iter()
        .filter(|r| r[3] == "true")
        .map(|r| r[1].parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-10);

    let profile = csv_rows(&dir.path().join("profile.csv"));
    assert_eq!(profile.len(), 1 + 61);
    assert_eq!(profile[0][..5], ["x", "S_1", "U_1", "W_1", "Y_1"]);

    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "price");
    assert_eq!(meta["config"]["grid"]["m"], 60);
}

#[test]
fn bundled_two_regime_run_reproduces_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .arg("price")
        .arg(bundled("two_regime.json"))
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let prices = csv_rows(&dir.path().join("prices.csv"));
    let row = prices.iter().find(|r| r[0] == "9.0").unwrap();
    let r1: f64 = row[1].parse().unwrap();
    let r2: f64 = row[2].parse().unwrap();
    assert!((r1 - 1.9720).abs() <= 1.5e-4, "{r1}");
    assert!((r2 - 1.8825).abs() <= 1.5e-4, "{r2}");
    assert_eq!(row[1].len(), "1.9720".len());
}

#[test]
fn digits_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_regime());
    let out = run(bin()
        .args(["price", "--digits", "2"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success());
    let prices = csv_rows(&dir.path().join("prices.csv"));
    assert_eq!(prices[1][1], "5.00");
}

#[test]
fn normalize_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = bundled("four_regime.json");
    let out = run(bin().arg("normalize").arg(&cfg));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let first = parse_config(&text).unwrap();
    let again = parse_config(&first.to_string()).unwrap();
    assert_eq!(first.to_json(), again.to_json());
    assert_eq!(first.to_string(), again.to_string());
    let original = parse_config(&fs::read_to_string(&cfg).unwrap()).unwrap();
    assert_eq!(original.model(), first.model());
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["control"]["initial_dt"], "h^2");
    assert_eq!(v["control"]["standard_controller"], false);
    assert_eq!(v["generator"][0][1], "1/3");
    drop(dir);
}

#[test]
fn rational_generator_entries_are_exact() {
    let cfg = parse_config(&fs::read_to_string(bundled("four_regime.json")).unwrap()).unwrap();
    let model = cfg.model();
    assert_eq!(model.generator.get(0, 1), 1.0 / 3.0);
    assert_eq!(model.generator.get(2, 2), -1.0);
    let row: f64 = model.generator.rows()[3].iter().sum();
    assert!(row.abs() < 1e-15);
}

#[test]
fn missing_key_reports_its_path() {
    let mut v = small_two_regime();
    v["regimes"][1].as_object_mut().unwrap().remove("sigma");
    match parse_config(&v.to_string()) {
        Err(ConfigError::Schema(e)) => assert_eq!(e.path, "regimes[1].sigma"),
        other => panic!("{other:?}"),
    }

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &v);
    let out = run(bin().arg("price").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("regimes[1].sigma"));
}

#[test]
fn invalid_generator_exits_2() {
    let mut v = small_two_regime();
    v["generator"] = json!([[-6, 5], [9, -9]]);
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &v);
    let out = run(bin().arg("price").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_thread_count_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_regime());
    let out = run(bin()
        .env("REGIME_RKF_THREADS", "many")
        .arg("price")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("REGIME_RKF_THREADS"));
}

#[test]
fn numerical_failure_exits_3() {
    // a tolerance far below rounding stalls the step controller
    let mut v = small_two_regime();
    v["control"] = json!({"tol": 1e-30});
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &v);
    let out = run(bin().arg("price").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn collapse_check_passes_and_detects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = small_two_regime();
    v["grid"]["m"] = json!(120);
    let cfg = write_config(dir.path(), &v);
    let ok = run(bin().arg("collapse-check").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let meta: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert!(meta["result"]["discrepancy"].as_f64().unwrap() <= 1e-8);

    let bad = run(bin()
        .arg("collapse-check")
        .arg(&cfg)
        .arg("--inject-fault")
        .arg("--out-dir")
        .arg(dir.path()));
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn collapse_check_needs_two_regimes() {
    let v = json!({
        "strike": 9.0, "maturity": 1.0,
        "regimes": [{"rate": 0.10, "sigma": 0.80}],
        "generator": [[0]],
        "grid": {"x_max": 3.0, "m": 60}
    });
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &v);
    let out = run(bin().arg("collapse-check").arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn converge_single_grid_has_no_orders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_regime());
    let out = run(bin()
        .args(["converge", "--h", "0.05", "--k", "1e-4", "--t-short", "0.01"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("converge.csv")).unwrap();
    assert_eq!(text, "h,max_error_u,order_u,max_error_w,order_w\n0.05,,,,\n");
}

#[test]
fn converge_rejects_non_halving_spacings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_regime());
    let out = run(bin()
        .args(["converge", "--h", "0.1,0.03"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--h"));
}

#[test]
fn converge_three_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &small_two_regime());
    let out = run(bin()
        .args([
            "converge",
            "--h",
            "0.1,0.05,0.025",
            "--k",
            "2e-5",
            "--t-short",
            "0.02",
            "--regime",
            "all",
        ])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("converge.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows[1][1].parse::<f64>().unwrap() > rows[2][1].parse::<f64>().unwrap());
    assert!(!rows[2][2].is_empty());
    assert!(rows[3][1].is_empty());
}
