use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::metrics::{MetricsRow, MetricsWriter};
use super::RunConfig;
use crate::error::{Error, Result};
use crate::trainer::{ActionMode, EpochMetrics, EvalMetrics, Trainer};

pub const CODE_VERSION: &str = concat!("slim-core ", env!("CARGO_PKG_VERSION"));

/// Epochs averaged into a run's final value.
pub const FINAL_WINDOW: usize = 10;

/// Result of a completed training run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub history: Vec<EpochMetrics>,
}

impl RunOutcome {
    pub fn final_value(&self, metric: &str) -> Option<f64> {
        final_value(&self.history, metric)
    }
}

/// Mean of `metric` over the last [`FINAL_WINDOW`] epochs.
pub fn final_value(history: &[EpochMetrics], metric: &str) -> Option<f64> {
    let tail = &history[history.len().saturating_sub(FINAL_WINDOW)..];
    let vals: Vec<f64> = tail
        .iter()
        .filter_map(|m| m.named().into_iter().find(|(n, _)| *n == metric).map(|(_, v)| v))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Serialize)]
struct Manifest<'a> {
    code_version: &'a str,
    config_hash: &'a str,
    seed: u64,
    epochs_completed: usize,
    parameters: usize,
    files: &'a [&'a str],
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    epoch: usize,
    detail: &'a str,
    last_metrics: Option<&'a EpochMetrics>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serialises");
    s.push('\n');
    s
}

/// Trains one configuration into `dir`, which receives the config
/// snapshot, `metrics.csv`, checkpoints and `manifest.json`. Nothing is
/// written unless the config validates.
pub fn train_run(cfg: &RunConfig, dir: &Path, mut on_epoch: impl FnMut(&EpochMetrics)) -> Result<RunOutcome> {
    cfg.validate()?;
    let hash = cfg.config_hash()?;
    let mut trainer = Trainer::new(&cfg.environment, &cfg.model, &cfg.train)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("config.toml"), &cfg.to_toml()?)?;
    let mut metrics = MetricsWriter::create(&dir.join("metrics.csv"))?;

    let base = MetricsRow {
        epoch: 0,
        seed: cfg.train.seed,
        env: cfg.environment.name.as_str().into(),
        difficulty: cfg.environment.difficulty.as_str().into(),
        aggregator: cfg.model.aggregator.as_str().into(),
        beta: cfg.model.beta,
        cache_flag: if cfg.model.cache { "on" } else { "off" }.into(),
        metric_name: String::new(),
        value: 0.0,
    };
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(cfg.train.epochs);
    for epoch in 0..cfg.train.epochs {
        let m = match trainer.train_epoch() {
            Ok(m) => m,
            Err(Error::Diverged { epoch, detail }) => {
                metrics.flush()?;
                let path = dir.join("diagnostics.json");
                write(
                    &path,
                    &json(&Diagnostics {
                        epoch,
                        detail: &detail,
                        last_metrics: history.last(),
                    }),
                )?;
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("{detail}; diagnostics in {}", path.display()),
                });
            }
            Err(e) => return Err(e),
        };
        for (name, value) in m.named() {
            metrics.write(&MetricsRow {
                epoch,
                metric_name: name.into(),
                value,
                ..base.clone()
            })?;
        }
        metrics.flush()?;
        on_epoch(&m);
        history.push(m);
        let every = cfg.train.checkpoint_every;
        if every > 0 && (epoch + 1) % every == 0 && epoch + 1 < cfg.train.epochs {
            let path = dir.join(format!("checkpoint_epoch{}.bin", epoch + 1));
            save_checkpoint(&path, trainer.store(), &hash, epoch + 1)?;
        }
    }
    save_checkpoint(&dir.join("checkpoint.bin"), trainer.store(), &hash, trainer.epoch())?;
    write(
        &dir.join("manifest.json"),
        &json(&Manifest {
            code_version: CODE_VERSION,
            config_hash: &hash,
            seed: cfg.train.seed,
            epochs_completed: trainer.epoch(),
            parameters: trainer.store().scalar_count(),
            files: &["config.toml", "metrics.csv", "checkpoint.bin", "manifest.json"],
        }),
    )?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        history,
    })
}

/// Rolls out the policy stored in `checkpoint` under `cfg`, which must
/// hash to the checkpoint's config.
pub fn evaluate_checkpoint(
    cfg: &RunConfig,
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    mode: ActionMode,
) -> Result<EvalMetrics> {
    cfg.validate()?;
    let mut trainer = Trainer::new(&cfg.environment, &cfg.model, &cfg.train)?;
    load_checkpoint(checkpoint, trainer.store_mut(), &cfg.config_hash()?)?;
    trainer.evaluate(episodes, seed, mode)
}
