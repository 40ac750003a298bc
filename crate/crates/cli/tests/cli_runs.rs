//! The `driftlab` binary: exit codes, artifacts and determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use driftlab::{find, ExperimentConfig};
use driftlab_core::environment::EnvSpec;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_driftlab"))
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, name: &str, cfg: &ExperimentConfig) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, cfg.to_toml()).unwrap();
    p
}

fn run(config: &Path, out: &Path, workers: Option<&str>) -> i32 {
    let mut cmd = bin();
    cmd.arg("run").arg(config).arg("--output-dir").arg(out).env_remove("DRIFTLAB_WORKERS");
    if let Some(w) = workers {
        cmd.env("DRIFTLAB_WORKERS", w);
    }
    cmd.output().unwrap().status.code().unwrap()
}

/// `(metric, value, se, pass)` columns of the ledger, without timestamps.
fn ledger_values(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join("ledger.csv")).unwrap();
    r.records()
        .map(|row| {
            let row = row.unwrap();
            [3, 4, 5, 6].iter().map(|i| row[*i].to_string()).collect()
        })
        .collect()
}

#[test]
fn shipped_configs_are_canonical() {
    let mut n = 0;
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg.to_toml(), text, "{}", path.display());
        let exp = find(&cfg.experiment).unwrap();
        exp.validate(&cfg).unwrap();
        if path.file_stem().unwrap() == exp.name {
            assert_eq!(cfg, (exp.default_config)(), "{}", path.display());
        }
        n += 1;
    }
    assert!(n >= 13);
}

#[test]
fn pde_einstein_passes_and_ledger_appends() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs_dir().join("pde_einstein.toml");
    assert_eq!(run(&cfg, &out, None), 0);
    let results: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["passed"], true);
    let mobility = results["metrics"][0]["value"].as_f64().unwrap();
    assert!((mobility - 3f64.sqrt()).abs() < 1e-3);
    let script = fs::read_to_string(out.join("plots/drift_curve.script")).unwrap();
    assert!(script.contains("'data/drift_curve.csv'"));
    assert!(out.join("data/drift_curve.csv").exists());

    assert_eq!(run(&cfg, &out, None), 0);
    let text = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(driftlab::report::LEDGER_HEADER));
    assert_eq!(text.lines().count(), 1 + 2 * 2);
    let rows = ledger_values(&out);
    assert_eq!(rows[0], rows[2]);
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs_dir().join("pde_einstein.toml")).unwrap().replace("lambda =", "lamda =");
    let p = tmp.path().join("bad.toml");
    fs::write(&p, text).unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&p, &out, None), 2);
    assert!(!out.exists());

    let mut cfg = find("pde_einstein").map(|e| (e.default_config)()).unwrap();
    cfg.n_cycles = Some(3);
    assert_eq!(run(&write_config(tmp.path(), "unused.toml", &cfg), &out, None), 2);
    cfg.n_cycles = None;
    cfg.experiment = "pde_nothing".into();
    assert_eq!(run(&write_config(tmp.path(), "unknown.toml", &cfg), &out, None), 2);
    assert!(!out.exists());
}

#[test]
fn failed_criterion_exits_1_and_budget_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // f = b vanishes in a constant environment, so there is no slope to fit.
    let mut flat = (find("mc_amax_scaling").unwrap().default_config)();
    flat.env = EnvSpec::Constant { dim: 1, sigma0: 1.0 };
    flat.n_paths = Some(4);
    flat.step = Some(0.05);
    let out = tmp.path().join("flat");
    assert_eq!(run(&write_config(tmp.path(), "flat.toml", &flat), &out, None), 1);
    assert!(out.join("results.json").exists());

    let mut big = (find("mc_vs_pde_drift").unwrap().default_config)();
    big.max_steps = Some(1000);
    let out = tmp.path().join("budget");
    assert_eq!(run(&write_config(tmp.path(), "budget.toml", &big), &out, None), 3);
    assert!(!out.exists());

    let mut regen = (find("mc_regen_diagnostics").unwrap().default_config)();
    regen.max_steps = Some(10_000);
    assert_eq!(run(&write_config(tmp.path(), "regen.toml", &regen), &out, None), 3);
}

#[test]
fn json_config_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = (find("pde_steady_state").unwrap().default_config)();
    let p = tmp.path().join("c.json");
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    assert_eq!(run(&p, &tmp.path().join("out"), None), 0);
}

#[test]
fn ledger_values_do_not_depend_on_worker_count() {
    let tmp = tempfile::tempdir().unwrap();
    let mut doob = (find("mc_doob_bound").unwrap().default_config)();
    doob.n_paths = Some(64);
    doob.horizon_grid = Some(vec![1.0]);
    doob.grid_n = Some(128);
    doob.step = Some(0.01);
    let mut regen = (find("mc_regen_diagnostics").unwrap().default_config)();
    regen.env = EnvSpec::Constant { dim: 1, sigma0: 1.0 };
    regen.lambda = Some(0.5);
    regen.n_cycles = Some(80);
    regen.step = Some(0.05);
    for (name, cfg, data) in [("doob", doob, "doob.csv"), ("regen", regen, "cycles.csv")] {
        let p = write_config(tmp.path(), &format!("{name}.toml"), &cfg);
        let (a, b) = (tmp.path().join(format!("{name}1")), tmp.path().join(format!("{name}3")));
        let ca = run(&p, &a, Some("1"));
        let cb = run(&p, &b, Some("3"));
        assert_eq!(ca, cb);
        assert_eq!(ledger_values(&a), ledger_values(&b), "{name}");
        let read = |d: &Path| fs::read_to_string(d.join("data").join(data)).unwrap();
        assert_eq!(read(&a), read(&b), "{name}");
    }
}

#[test]
fn list_and_describe() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 13);
    let out = bin().args(["describe", "mc_gamma_bar"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("experiment = \"mc_gamma_bar\""));
    assert_eq!(bin().args(["describe", "nope"]).output().unwrap().status.code(), Some(2));
}
