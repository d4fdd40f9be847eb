//! Replicated simulation studies: generate, fit, evaluate, tabulate.
//!
//! Each replicate is appended to `replicates.csv` and flushed as soon as it
//! finishes; `summary.csv` holds means and standard deviations per setting
//! and method once all replicates are done.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use serde::Serialize;

use super::io::write_atomic;
use crate::data::{FitConfig, VariableKind};
use crate::error::{Error, Result};
use crate::fit::fit;
use crate::metrics::{fit_lfm, trace_statistic, trace_statistic_upsilon};
use crate::selectq::{select_num_factors, DEFAULT_Q_MAX};
use crate::simulate::{generate_dataset, SimSpec, SimulatedDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Scenario {
    /// Three types, 500 x 500, overdispersion 0.3 / 0.5 / 0.7.
    #[value(name = "1")]
    #[serde(rename = "1")]
    Overdispersion,
    /// Three types, varying n with p = 500 and varying p with n = 500.
    #[value(name = "2")]
    #[serde(rename = "2")]
    Dimension,
    /// Three types with signal strengths scaled by 0.75 / 1 / 1.5 / 2.
    #[value(name = "3")]
    #[serde(rename = "3")]
    Signal,
    /// Factor-count selection with q_max = 15.
    #[value(name = "4")]
    #[serde(rename = "4")]
    Selection,
    /// Single-type Gaussian and Poisson data with overdispersion 0 / 0.5 / 1.
    #[value(name = "8")]
    #[serde(rename = "8")]
    SingleType,
    /// Running time as n or p grows.
    #[value(name = "timing")]
    #[serde(rename = "timing")]
    Timing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    Estimate,
    Select,
    Timing,
}

#[derive(Debug, Clone)]
struct Setting {
    label: String,
    spec: SimSpec,
    task: Task,
}

/// Accuracy of one fit against the generating parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub tr_h: f64,
    pub tr_gamma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seconds: f64,
}

pub fn estimate_overgfm(sim: &SimulatedDataset, config: &FitConfig) -> Result<Estimate> {
    let start = Instant::now();
    let res = fit(&sim.dataset, config)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Estimate {
        tr_h: trace_statistic(&res.params.factors, &sim.h0)?,
        tr_gamma: trace_statistic_upsilon(
            &res.params.loadings,
            &res.params.intercepts,
            &sim.b0,
            &sim.mu0,
        )?,
        iterations: res.iterations,
        converged: res.converged,
        seconds,
    })
}

pub fn estimate_lfm(sim: &SimulatedDataset, q: usize) -> Result<Estimate> {
    let start = Instant::now();
    let lfm = fit_lfm(sim.dataset.x(), q)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(Estimate {
        tr_h: trace_statistic(&lfm.factors, &sim.h0)?,
        tr_gamma: trace_statistic_upsilon(&lfm.loadings, &lfm.intercepts, &sim.b0, &sim.mu0)?,
        iterations: 0,
        converged: true,
        seconds,
    })
}

fn settings(scenario: Scenario) -> Vec<Setting> {
    let est = |label: String, spec: SimSpec| Setting {
        label,
        spec,
        task: Task::Estimate,
    };
    match scenario {
        Scenario::Overdispersion => [0.3, 0.5, 0.7]
            .iter()
            .map(|&s2| est(format!("sigma2={s2}"), SimSpec::scenario1(500, 500, s2, 0)))
            .collect(),
        Scenario::Dimension => {
            let mut v: Vec<Setting> = [300, 500, 700]
                .iter()
                .map(|&n| est(format!("n={n},p=500"), SimSpec::scenario1(n, 500, 0.7, 0)))
                .collect();
            v.extend(
                [300, 400, 500]
                    .iter()
                    .map(|&p| est(format!("n=500,p={p}"), SimSpec::scenario1(500, p, 0.7, 0))),
            );
            v
        }
        Scenario::Signal => [0.75, 1.0, 1.5, 2.0]
            .iter()
            .map(|&c| {
                let rho = [0.05 * c, 0.2 * c, 0.1 * c];
                est(
                    format!("c={c}"),
                    SimSpec::three_types(500, 500, 6, rho, 0.7, 0),
                )
            })
            .collect(),
        Scenario::Selection => {
            let mut v = Vec::new();
            for &s2 in &[0.1, 1.0, 3.0, 5.0] {
                v.push(Setting {
                    label: format!("case1,sigma2={s2}"),
                    spec: SimSpec::scenario1(300, 300, s2, 0),
                    task: Task::Select,
                });
            }
            for &s2 in &[0.1, 1.0, 3.0, 5.0] {
                let kinds = [
                    (VariableKind::Count, 0.1),
                    (VariableKind::Binomial { trials: 1 }, 0.5),
                ];
                v.push(Setting {
                    label: format!("case2,sigma2={s2}"),
                    spec: SimSpec::two_types(300, 300, 6, kinds, s2, 0),
                    task: Task::Select,
                });
            }
            v
        }
        Scenario::SingleType => {
            let mut v = Vec::new();
            for &s2 in &[0.0, 0.5, 1.0] {
                v.push(est(
                    format!("gaussian,sigma2={s2}"),
                    SimSpec::scenario8_gaussian(s2, 0),
                ));
            }
            for &s2 in &[0.0, 0.5, 1.0] {
                v.push(est(
                    format!("poisson,sigma2={s2}"),
                    SimSpec::scenario8_poisson(s2, 0),
                ));
            }
            v
        }
        Scenario::Timing => {
            let grid = [500, 1000, 2000, 4000];
            let mut v: Vec<Setting> = grid
                .iter()
                .map(|&n| Setting {
                    label: format!("n={n},p=500"),
                    spec: SimSpec::scenario1(n, 500, 0.7, 0),
                    task: Task::Timing,
                })
                .collect();
            v.extend(grid.iter().map(|&p| Setting {
                label: format!("n=500,p={p}"),
                spec: SimSpec::scenario1(500, p, 0.7, 0),
                task: Task::Timing,
            }));
            v
        }
    }
}

#[derive(Debug, Clone)]
struct Row {
    setting: String,
    replicate: usize,
    method: &'static str,
    tr_h: Option<f64>,
    tr_gamma: Option<f64>,
    q_hat: Option<usize>,
    q_true: usize,
    iterations: usize,
    converged: bool,
    seconds: f64,
}

impl Row {
    fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into());
        format!(
            "{},{},{},{},{},{},{},{},{:.6}\n",
            self.setting,
            self.replicate,
            self.method,
            opt(self.tr_h),
            opt(self.tr_gamma),
            self.q_hat
                .map(|q| q.to_string())
                .unwrap_or_else(|| "NA".into()),
            self.iterations,
            self.converged,
            self.seconds
        )
    }
}

fn from_estimate(
    setting: &str,
    replicate: usize,
    method: &'static str,
    q: usize,
    e: Estimate,
) -> Row {
    Row {
        setting: setting.to_string(),
        replicate,
        method,
        tr_h: Some(e.tr_h),
        tr_gamma: Some(e.tr_gamma),
        q_hat: None,
        q_true: q,
        iterations: e.iterations,
        converged: e.converged,
        seconds: e.seconds,
    }
}

fn run_replicate(setting: &Setting, replicate: usize, seed: u64) -> Result<Vec<Row>> {
    let spec = SimSpec {
        seed,
        ..setting.spec.clone()
    };
    let sim = generate_dataset(&spec)?;
    let q = spec.q;
    let label = setting.label.as_str();
    match setting.task {
        Task::Estimate => Ok(vec![
            from_estimate(
                label,
                replicate,
                "OverGFM",
                q,
                estimate_overgfm(&sim, &FitConfig::new(q))?,
            ),
            from_estimate(label, replicate, "LFM", q, estimate_lfm(&sim, q)?),
        ]),
        Task::Timing => Ok(vec![from_estimate(
            label,
            replicate,
            "OverGFM",
            q,
            estimate_overgfm(&sim, &FitConfig::new(q))?,
        )]),
        Task::Select => {
            let start = Instant::now();
            let report =
                select_num_factors(&sim.dataset, DEFAULT_Q_MAX, &FitConfig::new(DEFAULT_Q_MAX))?;
            Ok(vec![Row {
                setting: label.to_string(),
                replicate,
                method: "SVR",
                tr_h: None,
                tr_gamma: None,
                q_hat: Some(report.q_hat),
                q_true: q,
                iterations: 0,
                converged: true,
                seconds: start.elapsed().as_secs_f64(),
            }])
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn summarize(rows: &[Row], order: &[String]) -> String {
    let mut groups: BTreeMap<(usize, &'static str), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        let idx = order
            .iter()
            .position(|s| *s == r.setting)
            .unwrap_or(usize::MAX);
        groups.entry((idx, r.method)).or_default().push(r);
    }
    let fmt = |(m, s): (f64, f64)| format!("{m:.6},{s:.3e}");
    let mut out = String::from(
        "setting,method,replicates,tr_h_mean,tr_h_sd,tr_gamma_mean,tr_gamma_sd,q_hat_hit_rate,iterations_mean,seconds_mean,seconds_sd\n",
    );
    for ((idx, method), rs) in groups {
        let collect =
            |f: &dyn Fn(&Row) -> Option<f64>| rs.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
        let tr_h = collect(&|r| r.tr_h);
        let tr_g = collect(&|r| r.tr_gamma);
        let secs = collect(&|r| Some(r.seconds));
        let iters = collect(&|r| Some(r.iterations as f64));
        let hits: Vec<f64> = rs
            .iter()
            .filter_map(|r| r.q_hat.map(|q| (q == r.q_true) as u8 as f64))
            .collect();
        let na2 = "NA,NA".to_string();
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.4},{}\n",
            order.get(idx).map(String::as_str).unwrap_or("?"),
            method,
            rs.len(),
            if tr_h.is_empty() {
                na2.clone()
            } else {
                fmt(mean_sd(&tr_h))
            },
            if tr_g.is_empty() {
                na2.clone()
            } else {
                fmt(mean_sd(&tr_g))
            },
            if hits.is_empty() {
                "NA".to_string()
            } else {
                format!("{:.3}", mean_sd(&hits).0)
            },
            mean_sd(&iters).0,
            fmt(mean_sd(&secs)),
        ));
    }
    out
}

/// Run every setting of `scenario` for `replicates` seeds and write the
/// tables under `out`. Returns the files written.
pub fn run(scenario: Scenario, replicates: usize, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let raw_path = out.join("replicates.csv");
    let file = File::create(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let mut raw = BufWriter::new(file);
    let header = "setting,replicate,method,tr_h,tr_gamma,q_hat,iterations,converged,seconds\n";
    raw.write_all(header.as_bytes())
        .map_err(|e| Error::io(&raw_path, e))?;

    let settings = settings(scenario);
    let order: Vec<String> = settings.iter().map(|s| s.label.clone()).collect();
    let mut rows = Vec::new();
    for (k, setting) in settings.iter().enumerate() {
        for r in 0..replicates {
            let rep_seed = seed.wrapping_add(10_000 * k as u64 + r as u64);
            for row in run_replicate(setting, r, rep_seed)? {
                raw.write_all(row.csv().as_bytes())
                    .map_err(|e| Error::io(&raw_path, e))?;
                rows.push(row);
            }
            raw.flush().map_err(|e| Error::io(&raw_path, e))?;
        }
    }

    let summary_path = out.join("summary.csv");
    let summary = summarize(&rows, &order);
    write_atomic(&summary_path, summary.as_bytes())?;
    print!("{summary}");
    Ok(vec![raw_path, summary_path])
}
