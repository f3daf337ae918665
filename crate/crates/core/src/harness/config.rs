use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interventions::{CbpConfig, FiringMode, RedoConfig, Regularizer, SnrConfig};
use crate::nn::{InitRule, OptimizerKind};
use crate::tasks::{load_idx, mnist_paths, Dataset, SyntheticSpec, TaskKind, DATA_DIR_ENV};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// IDX training files from `dir`, or from the data-directory flag or
    /// environment variable when `dir` is absent.
    Mnist {
        #[serde(default)]
        dir: Option<PathBuf>,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub data: DataSource,
    /// Examples drawn without replacement from the source; all when absent.
    #[serde(default)]
    pub subset: Option<usize>,
    /// Seed for the subset draw and synthetic data, shared by all run seeds.
    #[serde(default)]
    pub data_seed: u64,
    pub num_tasks: usize,
    #[serde(default = "one")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn one() -> usize {
    1
}

fn default_batch() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub init: InitRule,
    #[serde(default)]
    pub layer_norm: bool,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec {
            hidden: vec![100, 100],
            init: InitRule::default(),
            layer_norm: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSettings {
    #[serde(flatten)]
    pub config: SnrConfig,
    #[serde(default)]
    pub firing: FiringMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Intervention {
    None,
    Snr(SnrSettings),
    Cbp(CbpConfig),
    Redo(RedoConfig),
    L2 {
        lambda: f64,
    },
    L2Init {
        lambda: f64,
    },
    ShrinkPerturb {
        shrink: f64,
        sigma: f64,
    },
    SnrL2 {
        #[serde(flatten)]
        snr: SnrSettings,
        lambda: f64,
    },
}

impl Intervention {
    pub fn snr(&self) -> Option<SnrSettings> {
        match *self {
            Intervention::Snr(s) | Intervention::SnrL2 { snr: s, .. } => Some(s),
            _ => None,
        }
    }

    pub fn regularizer(&self) -> Option<Regularizer> {
        match *self {
            Intervention::L2 { lambda } | Intervention::SnrL2 { lambda, .. } => {
                Some(Regularizer::L2 { lambda })
            }
            Intervention::L2Init { lambda } => Some(Regularizer::L2Init { lambda }),
            Intervention::ShrinkPerturb { shrink, sigma } => {
                Some(Regularizer::ShrinkPerturb { shrink, sigma })
            }
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Intervention::None => "none",
            Intervention::Snr(_) => "snr",
            Intervention::Cbp(_) => "cbp",
            Intervention::Redo(_) => "redo",
            Intervention::L2 { .. } => "l2",
            Intervention::L2Init { .. } => "l2_init",
            Intervention::ShrinkPerturb { .. } => "shrink_perturb",
            Intervention::SnrL2 { .. } => "snr_l2",
        }
    }
}

/// Which per-task accuracy feeds the summary statistic. Both are always logged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Predictions on each batch the first time it is seen within the task.
    #[default]
    Online,
    /// Predictions made during the task's last epoch.
    FinalEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub task: TaskSpec,
    #[serde(default)]
    pub network: NetworkSpec,
    pub optimizer: OptimizerSpec,
    pub intervention: Intervention,
    #[serde(default)]
    pub seed: u64,
    /// Dead-neuron window in training examples.
    #[serde(default = "default_dead_window")]
    pub dead_window_examples: u64,
    #[serde(default)]
    pub accuracy: AccuracyMode,
    /// Append one JSONL line per neuron reset.
    #[serde(default)]
    pub log_resets: bool,
    /// Write a checkpoint after every task so a run can be resumed.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn default_name() -> String {
    "run".into()
}

fn default_dead_window() -> u64 {
    1000
}

fn yes() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.task;
        if t.num_tasks == 0 || t.epochs == 0 || t.batch_size == 0 {
            return Err(Error::Config(
                "tasks, epochs and batch size must be positive".into(),
            ));
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return Err(Error::Config(
                "network needs at least one non-empty hidden layer".into(),
            ));
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if let Some(s) = self.intervention.snr() {
            s.config.validate()?;
        }
        if let Some(r) = self.intervention.regularizer() {
            r.validate()?;
        }
        match &self.intervention {
            Intervention::Cbp(c) => c.validate()?,
            Intervention::Redo(r) => r.validate()?,
            _ => {}
        }
        Ok(())
    }
}

/// Resolves the data directory: explicit flag, then config, then environment.
fn resolve_dir(config_dir: Option<&PathBuf>, flag: Option<&Path>) -> Result<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| config_dir.cloned())
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .ok_or_else(|| {
            Error::Config(format!(
                "no MNIST directory: pass --data-dir or set {DATA_DIR_ENV}"
            ))
        })
}

/// Loads (or generates) the base dataset and draws the configured subset.
///
/// With `force_synthetic`, MNIST sources are replaced by 784-dimensional
/// 10-class Gaussian blobs of the same size.
pub fn load_base_dataset(
    task: &TaskSpec,
    data_dir: Option<&Path>,
    force_synthetic: bool,
) -> Result<Arc<Dataset>> {
    let full = match (&task.data, force_synthetic) {
        (DataSource::Synthetic(spec), _) => spec.generate(task.data_seed)?,
        (DataSource::Mnist { .. }, true) => {
            SyntheticSpec::new(task.subset.unwrap_or(10_000), 784, 10).generate(task.data_seed)?
        }
        (DataSource::Mnist { dir }, false) => {
            let dir = resolve_dir(dir.as_ref(), data_dir)?;
            let (images, labels) = mnist_paths(&dir);
            load_idx(&images, &labels)?
        }
    };
    let data = match task.subset {
        Some(n) if n < full.len() => full.subsample(n, task.data_seed)?,
        Some(n) if n > full.len() => {
            return Err(Error::Config(format!(
                "subset of {n} requested from {} examples",
                full.len()
            )))
        }
        _ => full,
    };
    Ok(Arc::new(data))
}
