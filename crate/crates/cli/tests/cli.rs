use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use momentfit::models::logistic;
use momentfit::surrogate::CopulaTable;
use serde_json::Value;

fn run(dir: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_momentfit"));
    cmd.args(args).arg("--out").arg(dir);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn error_of(o: &Output) -> (i32, Value) {
    let err: Value = serde_json::from_slice(&o.stderr).expect("stderr is JSON");
    (o.status.code().unwrap(), err["error"].clone())
}

#[test]
fn generate_then_fit_logistic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let cfg = write_config(
        dir.path(),
        "run.json",
        &format!(r#"{{"scenario": "logistic", "data": {:?}, "fit": {{"starts": 2}}}}"#, data),
    );
    assert_ok(&run(dir.path(), Some(&cfg), &["generate", "--seed", "3"]));
    let text = std::fs::read_to_string(&data).unwrap();
    assert!(text.starts_with("# config_hash="));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 8 * 10);

    assert_ok(&run(dir.path(), Some(&cfg), &["fit", "--seed", "3"]));
    let fit = read_json(&dir.path().join("fit.json"));
    assert_eq!(fit["xi"].as_array().unwrap().len(), 7);
    assert_eq!(fit["seed"], 3);
    assert_eq!(fit["config_hash"].as_str().unwrap().len(), 64);
    let mu_lambda = fit["natural"][1].as_f64().unwrap();
    assert!((mu_lambda - 1.0).abs() < 0.1, "{mu_lambda}");
    let resolved = read_json(&dir.path().join("resolved_config.json"));
    assert_eq!(resolved["model"], "logistic");
    assert_eq!(resolved["config_hash"], fit["config_hash"]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let cfg = write_config(
        dir.path(),
        "run.json",
        &format!(r#"{{"scenario": "linear_two_pool", "data": {:?}, "seed": 11, "fit": {{"starts": 2}}}}"#, data),
    );
    assert_ok(&run(dir.path(), Some(&cfg), &["generate"]));
    let first = std::fs::read(&data).unwrap();
    assert_ok(&run(dir.path(), Some(&cfg), &["fit"]));
    let fit = std::fs::read(dir.path().join("fit.json")).unwrap();
    assert_ok(&run(dir.path(), Some(&cfg), &["generate"]));
    assert_ok(&run(dir.path(), Some(&cfg), &["fit", "--threads", "1"]));
    assert_eq!(std::fs::read(&data).unwrap(), first);
    assert_eq!(std::fs::read(dir.path().join("fit.json")).unwrap(), fit);
}

#[test]
fn profile_linear_two_pool() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let cfg = write_config(
        dir.path(),
        "run.json",
        &format!(r#"{{"scenario": "linear_two_pool", "data": {:?}, "seed": 1, "fit": {{"starts": 4}}}}"#, data),
    );
    assert_ok(&run(dir.path(), Some(&cfg), &["generate"]));
    assert_ok(&run(dir.path(), Some(&cfg), &["profile"]));
    let out = read_json(&dir.path().join("profile.json"));
    let profiles = out["profiles"].as_array().unwrap();
    assert_eq!(profiles.len(), 5);
    let verdict = |name: &str| profiles.iter().find(|p| p["name"] == name).unwrap()["verdict"].clone();
    assert_eq!(verdict("ln_sigma"), "one_sided");
    for name in ["mu_1", "mu_21", "mu_2", "ln_sigma_21"] {
        assert_eq!(verdict(name), "identifiable", "{name}");
    }
    let csv = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("parameter,phi,value"));
    assert!(csv.lines().count() >= 2 + 5 * 40);
}

#[test]
fn degenerate_density_is_a_spike() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "run.json",
        r#"{
            "model": "logistic",
            "plan": {"times": [4.0], "outputs": [{"state": 0, "noise": {"kind": "none"}}]},
            "parameters": ["r0", "lambda", "R"],
            "truth": {"parameters": [
                {"name": "r0", "family": "degenerate", "value": 50.0},
                {"name": "lambda", "family": "degenerate", "value": 1.0},
                {"name": "R", "family": "degenerate", "value": 300.0}
            ]},
            "slots": [{"name": "mu_r0", "target": "mean", "param": "r0", "bounds": [30.0, 70.0]}],
            "surrogate": "normal"
        }"#,
    );
    assert_ok(&run(dir.path(), Some(&cfg), &["density"]));
    let text = std::fs::read_to_string(dir.path().join("density.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            (f[2], f[3])
        })
        .collect();
    let (peak, height) = rows.iter().copied().fold((0.0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let exact: f64 = logistic(4.0, 50.0, 1.0, 300.0).unwrap();
    let span = rows.last().unwrap().0 - rows[0].0;
    assert!(span < 1e-3 * exact, "{span}");
    assert!((peak - exact).abs() < 1e-4 * exact);
    assert!(height > 10.0, "{height}");
}

#[test]
fn copula_table_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("tables/small.bin");
    let cfg = write_config(
        dir.path(),
        "run.json",
        &format!(
            r#"{{"scenario": "nonlinear_two_pool_single", "copula_table": {:?},
                "copula": {{"n_skew": 5, "n_rho": 21, "rho_max": 0.99, "quad_nodes": 32, "n_forward": 101, "forward_max": 0.999}},
                "validate": {{"samples": 20000, "groups": 100, "ks_samples": 500}}}}"#,
            table
        ),
    );
    assert_ok(&run(dir.path(), Some(&cfg), &["copula-table"]));
    let t = CopulaTable::load(&table).unwrap();
    assert_eq!(t.grid().n_skew, 5);
    assert!(dir.path().join("copula_table.json").exists());

    assert_ok(&run(dir.path(), Some(&cfg), &["validate"]));
    let v = read_json(&dir.path().join("validate.json"));
    let times = v["times"].as_array().unwrap();
    assert_eq!(times.len(), 1);
    assert_eq!(times[0]["marginals"].as_array().unwrap().len(), 2);
    assert!(times[0]["max_z"].as_f64().unwrap().is_finite());
}

#[test]
fn mcmc_writes_chains() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let cfg = write_config(
        dir.path(),
        "run.json",
        &format!(
            r#"{{"scenario": "linear_two_pool", "data": {:?}, "mcmc": {{"iterations": 400, "chains": 2, "adapt_start": 100}}}}"#,
            data
        ),
    );
    assert_ok(&run(dir.path(), Some(&cfg), &["generate"]));
    assert_ok(&run(dir.path(), Some(&cfg), &["mcmc"]));
    let chains = std::fs::read_to_string(dir.path().join("chains.csv")).unwrap();
    let header = chains.lines().nth(1).unwrap();
    assert_eq!(header, "chain,iteration,log_post,mu_1,mu_21,mu_2,ln_sigma_21,ln_sigma");
    let rows = chains.lines().count() - 2;
    assert!(rows == 2 * 400 || rows == 2 * 401, "{rows}");
    let s = read_json(&dir.path().join("mcmc_summary.json"));
    assert_eq!(s["chains"].as_array().unwrap().len(), 2);
    assert_eq!(s["map"].as_array().unwrap().len(), 5);
}

#[test]
fn errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let cfg = write_config(dir.path(), "typo.json", r#"{"scenario": "logistic", "sedd": 1}"#);
    let (code, err) = error_of(&run(dir.path(), Some(&cfg), &["fit"]));
    assert_eq!((code, err["kind"].as_str().unwrap()), (2, "schema"));
    assert!(err["message"].as_str().unwrap().contains("sedd"));

    let cfg = write_config(dir.path(), "nodata.json", r#"{"scenario": "logistic", "data": "missing.csv"}"#);
    let (code, err) = error_of(&run(dir.path(), Some(&cfg), &["fit"]));
    assert_eq!((code, err["kind"].as_str().unwrap()), (3, "missing_data"));

    let cfg = write_config(dir.path(), "notable.json", r#"{"scenario": "nonlinear_two_pool"}"#);
    let (code, err) = error_of(&run(dir.path(), Some(&cfg), &["density"]));
    assert_eq!((code, err["kind"].as_str().unwrap()), (4, "missing_copula_table"));

    let (code, _) = error_of(&run(dir.path(), None, &["fit", "--bogus"]));
    assert_eq!(code, 2);

    let (code, err) = error_of(&run(dir.path(), Some(&dir.path().join("absent.json")), &["fit"]));
    assert_eq!((code, err["kind"].as_str().unwrap()), (6, "io"));
}
