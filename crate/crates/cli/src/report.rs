//! Artifact layout of one run:
//!
//! ```text
//! <output_dir>/results.json     metrics, estimator results, details
//! <output_dir>/ledger.csv       one appended row per metric and run
//! <output_dir>/config.toml      canonical config of the last run
//! <output_dir>/data/*.csv       experiment data
//! <output_dir>/plots/*.script   gnuplot scripts reading data/*.csv
//! ```

use std::fs::{self, OpenOptions};
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::experiments::{Metric, Outcome};
use driftlab_core::estimators::ResultObject;

/// Contents of `results.json`.
#[derive(Debug, Serialize)]
pub struct Results<'a> {
    pub experiment: &'a str,
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: String,
    pub runtime_s: f64,
    pub passed: bool,
    pub metrics: &'a [Metric],
    pub estimates: &'a [ResultObject],
    pub details: &'a Value,
    pub data: Vec<String>,
    pub plots: Vec<String>,
}

/// One row of `ledger.csv`.
#[derive(Debug, Serialize)]
pub struct LedgerRow<'a> {
    pub timestamp: &'a str,
    pub experiment: &'a str,
    pub config_hash: &'a str,
    pub metric: &'a str,
    pub value: f64,
    pub se: f64,
    pub pass: bool,
}

pub const LEDGER_HEADER: &str = "timestamp,experiment,config_hash,metric,value,se,pass";

pub fn write_artifacts(cfg: &ExperimentConfig, out: &Outcome, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir.join("data"))?;
    fs::create_dir_all(dir.join("plots"))?;
    for a in &out.data {
        fs::write(dir.join("data").join(&a.name), &a.text)?;
    }
    for a in &out.plots {
        fs::write(dir.join("plots").join(&a.name), &a.text)?;
    }
    let mut canonical = cfg.clone();
    canonical.output_dir = None;
    fs::write(dir.join("config.toml"), canonical.to_toml())?;

    let timestamp = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let hash = cfg.hash();
    let results = Results {
        experiment: &cfg.experiment,
        config_hash: hash.clone(),
        seed: cfg.seed,
        timestamp: timestamp.clone(),
        runtime_s: out.runtime_s,
        passed: out.passed(),
        metrics: &out.metrics,
        estimates: &out.estimates,
        details: &out.details,
        data: out.data.iter().map(|a| format!("data/{}", a.name)).collect(),
        plots: out.plots.iter().map(|a| format!("plots/{}", a.name)).collect(),
    };
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&results)? + "\n")?;
    append_ledger(&dir.join("ledger.csv"), &timestamp, &cfg.experiment, &hash, &out.metrics)
}

fn append_ledger(path: &Path, timestamp: &str, experiment: &str, hash: &str, metrics: &[Metric]) -> io::Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let fresh = file.metadata()?.len() == 0;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for m in metrics {
        w.serialize(LedgerRow {
            timestamp,
            experiment,
            config_hash: hash,
            metric: &m.name,
            value: m.value,
            se: m.se,
            pass: m.pass,
        })?;
    }
    w.flush()
}
