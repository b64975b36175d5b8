//! Experiment plumbing: run configs, metrics files, checkpoints, single
//! runs, sweeps and evaluation.

mod checkpoint;
mod metrics;
mod run;
mod sweep;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::AggregatorKind;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::slim::ModelConfig;
use crate::trainer::TrainConfig;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_HEADER};
pub use run::{evaluate_checkpoint, final_value, train_run, RunOutcome, CODE_VERSION, FINAL_WINDOW};
pub use sweep::{read_summary, run_sweep, summarise, CellStatus, SummaryRow, SweepReport, SUMMARY_HEADER};

/// `[sweep]` section: the cross-product a sweep runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub aggregators: Vec<AggregatorKind>,
    pub caches: Vec<bool>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            betas: (0..=6).map(|p| f64::from(1u32 << p)).collect(),
            seeds: vec![1, 2, 3, 4],
            aggregators: vec![AggregatorKind::Slim],
            caches: vec![true],
        }
    }
}

/// A whole config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Default output directory when `--out` is not given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub environment: EnvConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub beta: Option<f64>,
    pub cache: Option<bool>,
    pub aggregator: Option<AggregatorKind>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.environment.gamma = cfg.train.gamma;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialise config: {e}")))
    }

    /// Overrides replace both the single-run value and the sweep axis.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.train.seed = seed;
            self.sweep.seeds = vec![seed];
        }
        if let Some(beta) = o.beta {
            self.model.beta = beta;
            self.sweep.betas = vec![beta];
        }
        if let Some(cache) = o.cache {
            self.model.cache = cache;
            self.sweep.caches = vec![cache];
        }
        if let Some(agg) = o.aggregator {
            self.model.aggregator = agg;
            self.sweep.aggregators = vec![agg];
        }
    }

    /// Everything a single run checks before touching the disk,
    /// including the bandwidth budget.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        let spec = self.environment.spec()?;
        spec.validate()?;
        if self.model.aggregator == AggregatorKind::Slim && spec.n_agents < 2 {
            return Err(Error::config("the slim aggregator needs at least two agents"));
        }
        Ok(())
    }

    /// Digest of everything that determines parameter layout and meaning.
    pub fn config_hash(&self) -> Result<String> {
        let mut model = self.model.clone();
        model.message_dim = Some(model.budget()?.dim);
        let env = serde_json::to_string(&self.environment).map_err(|e| Error::config(e.to_string()))?;
        let model = serde_json::to_string(&model).map_err(|e| Error::config(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(env.as_bytes());
        h.update(b"\n");
        h.update(model.as_bytes());
        Ok(hex::encode(h.finalize()))
    }
}
