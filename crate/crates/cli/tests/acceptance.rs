//! Acceptance suite: one PASS/FAIL line per criterion, run on the configs
//! shipped in `configs/`. A positional argument filters criteria by name.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use driftlab::{execute, ExperimentConfig, Outcome};

const SQRT3: f64 = 1.732_050_807_568_877_2;

struct Criterion {
    id: usize,
    name: &'static str,
    configs: &'static [&'static str],
    limit_s: f64,
    /// Pinned numbers on top of each run's own verdict.
    pinned: fn(&[Outcome]) -> Result<String, String>,
}

fn value(out: &Outcome, metric: &str) -> Result<(f64, f64), String> {
    out.metric(metric).map(|m| (m.value, m.se)).ok_or_else(|| format!("metric {metric} missing"))
}

fn near(label: &str, v: f64, target: f64, tol: f64) -> Result<String, String> {
    let msg = format!("{label} = {v:.7} (target {target:.7}, tol {tol:.1e})");
    if (v - target).abs() <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn within_3se(label: &str, (v, se): (f64, f64), target: f64) -> Result<String, String> {
    let msg = format!("{label} = {v:.5} ± {se:.5} (target {target:.5})");
    if (v - target).abs() <= 3.0 * se {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn join(parts: Vec<Result<String, String>>) -> Result<String, String> {
    let ok = parts.iter().all(|p| p.is_ok());
    let text = parts.into_iter().map(|p| p.unwrap_or_else(|e| e)).collect::<Vec<_>>().join("; ");
    if ok {
        Ok(text)
    } else {
        Err(text)
    }
}

fn summary(out: &Outcome) -> Result<String, String> {
    let text = out
        .metrics
        .iter()
        .map(|m| {
            format!("{} = {:.5}{}", m.name, m.value, if m.se > 0.0 { format!(" ± {:.5}", m.se) } else { String::new() })
        })
        .collect::<Vec<_>>()
        .join(", ");
    if out.passed() {
        Ok(text)
    } else {
        Err(text)
    }
}

const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        name: "pde_effective_sigma",
        configs: &["pde_effective_sigma.toml", "pde_effective_sigma_reciprocal.toml"],
        limit_s: 5.0,
        pinned: |o| {
            join(vec![
                near("sigma1(2+sin)", value(&o[0], "sigma1")?.0, SQRT3, 1e-5 * SQRT3),
                near("sigma1(1/(1+sin/2))", value(&o[1], "sigma1")?.0, 1.0, 1e-5),
            ])
        },
    },
    Criterion {
        id: 2,
        name: "pde_steady_state",
        configs: &["pde_steady_state.toml"],
        limit_s: 10.0,
        pinned: |o| summary(&o[0]),
    },
    Criterion {
        id: 3,
        name: "pde_fdt",
        configs: &["pde_fdt.toml"],
        limit_s: 30.0,
        pinned: |o| {
            join(vec![
                near("gamma_bar (sigma gap)", value(&o[0], "gamma_bar_sigma_gap")?.0, SQRT3 - 2.0, 1e-6),
                summary(&o[0]),
            ])
        },
    },
    Criterion {
        id: 4,
        name: "pde_einstein",
        configs: &["pde_einstein.toml"],
        limit_s: 10.0,
        pinned: |o| near("mobility", value(&o[0], "mobility")?.0, SQRT3, 1e-3),
    },
    Criterion {
        id: 5,
        name: "mc_vs_pde_drift",
        configs: &["mc_vs_pde_drift.toml"],
        limit_s: 300.0,
        pinned: |o| summary(&o[0]),
    },
    Criterion {
        id: 6,
        name: "mc_nu_consistency",
        configs: &["mc_nu_consistency.toml", "mc_nu_consistency_bumps.toml"],
        limit_s: 600.0,
        pinned: |o| join(vec![summary(&o[0]), summary(&o[1])]),
    },
    Criterion {
        id: 7,
        name: "mc_einstein_trend",
        configs: &["mc_einstein_trend.toml"],
        limit_s: 1200.0,
        pinned: |o| summary(&o[0]),
    },
    Criterion {
        id: 8,
        name: "mc_amax_scaling",
        configs: &["mc_amax_scaling.toml"],
        limit_s: 600.0,
        pinned: |o| summary(&o[0]),
    },
    Criterion {
        id: 9,
        name: "mc_doob_bound",
        configs: &["mc_doob_bound.toml"],
        limit_s: 300.0,
        pinned: |o| summary(&o[0]),
    },
    Criterion {
        id: 10,
        name: "mc_lebowitz_rost",
        configs: &["mc_lebowitz_rost.toml"],
        limit_s: 600.0,
        pinned: |o| {
            join(vec![
                within_3se("drift(alpha=1)", value(&o[0], "drift_alpha_1")?, SQRT3 - 2.0),
                within_3se("drift ratio 4:1", value(&o[0], "drift_ratio_4_1")?, 2.0),
            ])
        },
    },
    Criterion {
        id: 11,
        name: "mc_regen_diagnostics",
        configs: &["mc_regen_diagnostics.toml"],
        limit_s: 600.0,
        pinned: |o| summary(&o[0]),
    },
    Criterion {
        id: 12,
        name: "mc_gamma_bar",
        configs: &["mc_gamma_bar.toml"],
        limit_s: 600.0,
        pinned: |o| {
            join(vec![
                within_3se("gamma_bar", value(&o[0], "gamma_bar")?, -0.26795),
                within_3se("corrector_pairing", value(&o[0], "corrector_pairing")?, 0.13397),
            ])
        },
    },
];

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(c: &Criterion, scratch: &std::path::Path) -> (bool, String, f64) {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for file in c.configs {
        let cfg = match ExperimentConfig::load(&configs_dir().join(file)) {
            Ok(cfg) => cfg,
            Err(e) => return (false, format!("{file}: {e}"), 0.0),
        };
        match execute(&cfg, &scratch.join(file.trim_end_matches(".toml"))) {
            Ok(out) => outcomes.push(out),
            Err(e) => return (false, format!("{file}: {e}"), start.elapsed().as_secs_f64()),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let verdicts = outcomes.iter().all(|o| o.passed());
    let (pinned_ok, text) = match (c.pinned)(&outcomes) {
        Ok(t) => (true, t),
        Err(t) => (false, t),
    };
    let in_time = secs <= c.limit_s;
    let mut text = text;
    if !verdicts {
        text.push_str("; experiment criteria failed");
    }
    if !in_time {
        text.push_str(&format!("; over the {} s limit", c.limit_s));
    }
    (verdicts && pinned_ok && in_time, text, secs)
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let scratch = tempfile::tempdir().expect("scratch directory");
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let (ok, text, secs) = run(c, scratch.path());
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<22} {}  [{:.1} s / {} s]  {}",
            c.id,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            secs,
            c.limit_s,
            text
        );
    }
    println!("acceptance: {}/{} criteria passed", ran - failed, ran);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
