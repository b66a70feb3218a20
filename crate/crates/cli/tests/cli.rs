use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fwa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fwa")).args(args).output().expect("binary runs")
}

fn write_config(dir: &TempDir, text: &str) -> String {
    let path = dir.path().join("config.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

fn header(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(String::from).collect()
}

const TINY: &str = r#"
seeds = [0]
[model]
kind = "linear"
[data]
synthetic = { dim = 3, n = 40, seed = 2 }
test_fraction = 0.25
[[lr]]
kind = "constant"
alpha = 0.05
[[avg]]
kind = "sgd"
[run]
steps = 10
"#;

#[test]
fn ten_step_convergence_run_logs_ten_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, TINY);
    let out = dir.path().join("out");
    let o = fwa(&["convergence", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = out.join("convergence_constant_0-05.csv");
    assert_eq!(
        header(&path),
        ["step", "scheme", "k", "d", "seed", "suboptimality", "train_loss"]
    );
    let rows = read_csv(&path);
    assert_eq!(rows.len(), 10);
    let steps: Vec<usize> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(steps, (1..=10).collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap() >= -1e-9));
    assert!(out.join("run.json").exists());
}

#[test]
fn flags_override_the_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, TINY);
    let out = dir.path().join("o");
    let o = fwa(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "4,7", "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("trajectory_constant_0-05_seed4.csv").exists());
    assert!(out.join("trajectory_constant_0-05_seed7.csv").exists());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config"]["seeds"], serde_json::json!([4, 7]));
    assert_eq!(manifest["config"]["workers"], 2);
}

#[test]
fn bounds_audit_marks_domain_errors_per_row_and_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"
[model]
kind = "linear"
[data]
synthetic = { dim = 2, n = 50 }
[bounds]
t = 10000
ks = [1, 10, 100, 6000]
ds = [1]
c = 0.5
alpha = 0.01
constants = { lipschitz = 1.0, beta = 1.0, g = 1.0, diameter = 2.0, n = 1000 }
"#,
    );
    let out = dir.path().join("b");
    let o = fwa(&["bounds", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let path = out.join("bounds.csv");
    let cols = header(&path);
    let col = |name: &str| cols.iter().position(|c| c == name).unwrap();
    let rows = read_csv(&path);
    let convex: Vec<&csv::StringRecord> =
        rows.iter().filter(|r| &r[col("bound")] == "convex_constant").collect();
    let values: Vec<f64> = convex[..3].iter().map(|r| r[col("value")].parse().unwrap()).collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
    assert_eq!(&convex[0][col("note")], "sgd_equivalent");

    let bad = rows
        .iter()
        .find(|r| &r[col("bound")] == "convergence_fwa" && &r[col("k")] == "6000.0")
        .expect("row for k > T/2");
    assert!(bad[col("note")].starts_with("error: domain error"), "{:?}", &bad[col("note")]);
    assert!(bad[col("value")].is_empty());

    let checks = read_csv(&out.join("bounds_checks.csv"));
    assert!(checks.iter().all(|r| &r[1] == "true"), "{checks:?}");
}

#[test]
fn config_errors_point_at_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "seeds = [0]\n[model]\nkind = \"linear\"\n[data]\nsynthetic = { dim = 2, n = 10 }\nl1_normalize = \"yes\"\n");
    let o = fwa(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 6"), "{err}");

    let cfg = write_config(&dir, "[model]\nkind = \"linear\"\n[data]\nsynthetic = { dim = 2, n = 10 }\n[run]\nepoch = 3\n");
    let o = fwa(&["train", "--config", &cfg]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 6") && err.contains("epoch"), "{err}");
}

#[test]
fn window_longer_than_the_run_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, &TINY.replace("kind = \"sgd\"", "kind = \"fwa\"\nk = 50"));
    let o = fwa(&["train", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("at least 50 steps"), "{err}");
}

#[test]
fn exit_code_follows_asserted_checks() {
    let dir = TempDir::new().unwrap();
    // Opposite chains: unless the two values tie, one of them fails.
    let text = TINY.replace("steps = 10", "steps = 200").replace(
        "[[avg]]\nkind = \"sgd\"",
        "[[avg]]\nkind = \"sgd\"\n[[avg]]\nkind = \"swa\"",
    ) + "[checks]\nsuboptimality = [[\"sgd\", \"swa\"], [\"swa\", \"sgd\"]]\n";
    let cfg = write_config(&dir, &text);
    let o = fwa(&["convergence", "--config", &cfg, "--out", dir.path().join("a").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("[FAIL]"));

    let cfg = write_config(&dir, &text.replace("[checks]", "[checks]\nassert = true"));
    let o = fwa(&["convergence", "--config", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("assertion failed"));
}

#[test]
fn generated_data_round_trips() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, TINY);
    let out = dir.path().join("g");
    let o = fwa(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let data = fwa_core::Dataset::load_csv(out.join("data.csv"), "y", false).unwrap();
    let again = fwa_core::data::gen_synthetic_regression(3, 40, 0.1, 2).unwrap().dataset;
    assert_eq!(data.samples(), again.samples());
}

#[test]
fn stability_csv_has_documented_columns() {
    let dir = TempDir::new().unwrap();
    let text = TINY.replace("steps = 10", "epochs = 2");
    let cfg = write_config(&dir, &text);
    let out = dir.path().join("s");
    let o = fwa(&["stability", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let path = out.join("stability_constant_0-05.csv");
    assert_eq!(
        header(&path)[..9],
        ["epoch", "scheme", "k", "d", "param_distance", "gen_error", "train_loss", "test_loss", "seed"]
    );
    assert_eq!(read_csv(&path).len(), 2);
}
