use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::csv_writer;
use super::run::{train_run, RunOutcome};
use super::RunConfig;
use crate::baselines::AggregatorKind;
use crate::error::{Error, Result};
use crate::trainer::thread_pool;

pub const SUMMARY_HEADER: &str = "env,difficulty,aggregator,beta,cache_flag,metric_name,n_seeds,mean,stderr,status,note";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Skipped,
    Failed,
}

/// One line of the sweep summary: a metric across seeds, or a logged
/// skip/failure with empty statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub env: String,
    pub difficulty: String,
    pub aggregator: String,
    pub beta: f64,
    pub cache_flag: String,
    pub metric_name: String,
    pub n_seeds: usize,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub status: CellStatus,
    pub note: String,
}

/// Per-seed outcome of one cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub aggregator: String,
    pub beta: f64,
    pub cache_flag: String,
    pub seed: u64,
    pub status: CellStatus,
    pub dir: String,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub summary: Vec<SummaryRow>,
    pub cells: Vec<CellRecord>,
}

/// Mean and standard error `std / sqrt(n)` with the sample standard
/// deviation; the error is 0 for a single value.
pub fn summarise(values: &[f64]) -> Option<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Some((mean, var.sqrt() / (n as f64).sqrt()))
}

fn flag(cache: bool) -> &'static str {
    if cache {
        "on"
    } else {
        "off"
    }
}

struct Group {
    aggregator: AggregatorKind,
    beta: f64,
    cache: bool,
    cfg: RunConfig,
    infeasible: Option<String>,
}

/// Runs every (aggregator, beta, cache, seed) cell of `cfg.sweep` under
/// `out`, then writes `cells.csv` and `summary.csv` there. Infeasible
/// groups and failed cells become logged rows; the sweep continues.
pub fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<SweepReport> {
    cfg.train.validate()?;
    cfg.environment.spec()?.validate()?;
    let s = &cfg.sweep;
    if s.betas.is_empty() || s.seeds.is_empty() || s.aggregators.is_empty() || s.caches.is_empty() {
        return Err(Error::config("sweep axes must be non-empty"));
    }
    let mut groups = Vec::new();
    for &aggregator in &s.aggregators {
        for &beta in &s.betas {
            for &cache in &s.caches {
                let mut g = cfg.clone();
                g.model.aggregator = aggregator;
                g.model.beta = beta;
                g.model.cache = cache;
                let infeasible = g.validate().err().map(|e| e.to_string());
                groups.push(Group {
                    aggregator,
                    beta,
                    cache,
                    cfg: g,
                    infeasible,
                });
            }
        }
    }
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let jobs: Vec<(usize, u64, PathBuf)> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| g.infeasible.is_none())
        .flat_map(|(gi, g)| {
            s.seeds.iter().map(move |&seed| {
                let name = format!("{}_beta{}_cache{}_seed{}", g.aggregator, g.beta, flag(g.cache), seed);
                (gi, seed, out.join("cells").join(name))
            })
        })
        .collect();
    let results: Vec<Result<RunOutcome>> = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|(gi, seed, dir)| {
                let mut c = groups[*gi].cfg.clone();
                c.train.seed = *seed;
                train_run(&c, dir, |_| {})
            })
            .collect()
    });

    let env = cfg.environment.name.as_str().to_string();
    let difficulty = cfg.environment.difficulty.as_str().to_string();
    let mut cells = Vec::new();
    let mut summary = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let row = |metric_name: &str, n_seeds, stats: Option<(f64, f64)>, status, note: String| SummaryRow {
            env: env.clone(),
            difficulty: difficulty.clone(),
            aggregator: g.aggregator.as_str().into(),
            beta: g.beta,
            cache_flag: flag(g.cache).into(),
            metric_name: metric_name.into(),
            n_seeds,
            mean: stats.map(|s| s.0),
            stderr: stats.map(|s| s.1),
            status,
            note,
        };
        if let Some(reason) = &g.infeasible {
            for &seed in &s.seeds {
                cells.push(CellRecord {
                    aggregator: g.aggregator.as_str().into(),
                    beta: g.beta,
                    cache_flag: flag(g.cache).into(),
                    seed,
                    status: CellStatus::Skipped,
                    dir: String::new(),
                    note: reason.clone(),
                });
            }
            summary.push(row("", 0, None, CellStatus::Skipped, reason.clone()));
            continue;
        }
        let mut done: Vec<&RunOutcome> = Vec::new();
        for ((_, seed, dir), res) in jobs.iter().zip(&results).filter(|((j, _, _), _)| *j == gi) {
            let (status, note) = match res {
                Ok(o) => {
                    done.push(o);
                    (CellStatus::Ok, String::new())
                }
                Err(e) => (CellStatus::Failed, e.to_string()),
            };
            cells.push(CellRecord {
                aggregator: g.aggregator.as_str().into(),
                beta: g.beta,
                cache_flag: flag(g.cache).into(),
                seed: *seed,
                status,
                dir: dir.display().to_string(),
                note,
            });
        }
        if done.is_empty() {
            summary.push(row("", 0, None, CellStatus::Failed, "every seed failed".into()));
            continue;
        }
        let failed = s.seeds.len() - done.len();
        let mut note = Vec::new();
        if done.len() == 1 {
            note.push("single seed, stderr taken as 0".to_string());
        }
        if failed > 0 {
            note.push(format!("{failed} of {} seeds failed", s.seeds.len()));
        }
        let names: Vec<&str> = done[0].history.last().map_or(Vec::new(), |m| m.named().into_iter().map(|(n, _)| n).collect());
        for name in names {
            let finals: Vec<f64> = done.iter().filter_map(|o| o.final_value(name)).collect();
            summary.push(row(name, finals.len(), summarise(&finals), CellStatus::Ok, note.join("; ")));
        }
    }

    let mut w = csv_writer(&out.join("cells.csv"))?;
    for c in &cells {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| Error::io(out.join("cells.csv"), e))?;
    let mut w = csv_writer(&out.join("summary.csv"))?;
    for r in &summary {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(out.join("summary.csv"), e))?;
    Ok(SweepReport { summary, cells })
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != SUMMARY_HEADER {
        return Err(Error::config(format!("{}: unexpected summary header `{header}`", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_error_of_known_values() {
        let (m, se) = summarise(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(summarise(&[7.0]), Some((7.0, 0.0)));
        assert_eq!(summarise(&[]), None);
    }
}
