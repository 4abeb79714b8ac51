//! Run settings: command-line flags over a TOML config file over task defaults.
//!
//! The config file is a flat table; every key is optional.
//!
//! ```toml
//! task = "2d"            # "2d" or "spec"
//! mode = "lp"            # "lp" or "ot"
//! lambda = 0.05          # λ for lp, σ_min for ot
//! epochs = 500
//! steps_per_epoch = 20
//! batch_size = 64
//! learning_rate = 2e-3
//! lr_decay = 0.995
//! optimizer = "adam"     # "adam" or "sgd"
//! seed = 0
//! seeds = [1, 2, 3]
//! budgets = [1, 2, 6]
//! steps = 6              # Euler steps for sample / ablate-vcs
//! hidden = [64, 64]
//! time_width = 1
//! n_eval = 1000
//! eval_seed = 12345
//! vcs_epsilon = 1e-6
//! ```

use std::path::Path;

use anyhow::{bail, Context, Result};
use lpcfm::experiment::{EvalConfig, ModelSpec, ToyTask};
use lpcfm::{Optimizer, PathMode, TrainConfig};
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub task: Option<String>,
    pub mode: Option<String>,
    pub lambda: Option<f64>,
    pub epochs: Option<usize>,
    pub steps_per_epoch: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lr_decay: Option<f64>,
    pub optimizer: Option<String>,
    pub seed: Option<u64>,
    pub seeds: Option<Vec<u64>>,
    pub budgets: Option<Vec<usize>>,
    pub steps: Option<usize>,
    pub hidden: Option<Vec<usize>>,
    pub time_width: Option<usize>,
    pub n_eval: Option<usize>,
    pub eval_seed: Option<u64>,
    pub vcs_epsilon: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Flags that every training-related command accepts. `None` means unset.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct TrainFlags {
    /// λ for LP paths, σ_min for OT paths
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    /// adam or sgd
    #[arg(long)]
    pub optimizer: Option<String>,
    /// Hidden layer widths, comma separated
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub time_width: Option<usize>,
    /// Number of evaluation draws
    #[arg(long)]
    pub n_eval: Option<usize>,
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

pub fn parse_task(name: &str) -> Result<ToyTask> {
    match ToyTask::by_name(name) {
        Some(t) => Ok(t),
        None => bail!("unknown task `{name}` (expected 2d or spec)"),
    }
}

pub fn parse_mode(name: &str) -> Result<PathMode> {
    name.parse::<PathMode>().map_err(|e| anyhow::anyhow!("{e}"))
}

fn parse_optimizer(name: &str) -> Result<Optimizer> {
    match name {
        "adam" => Ok(Optimizer::Adam),
        "sgd" => Ok(Optimizer::Sgd),
        other => bail!("unknown optimizer `{other}` (expected adam or sgd)"),
    }
}

pub struct Resolved {
    pub task: ToyTask,
    pub train: TrainConfig,
    pub spec: ModelSpec,
    pub eval: EvalConfig,
}

/// Merges flags, file and defaults for `task` in `mode`.
pub fn resolve(
    task: ToyTask,
    mode: PathMode,
    seed: Option<u64>,
    flags: &TrainFlags,
    file: &FileConfig,
) -> Result<Resolved> {
    let mut train = task.train_config(mode, flags_or(seed, file.seed).unwrap_or(0));
    if let Some(v) = flags_or(flags.lambda, file.lambda) {
        train.lambda = v;
    }
    if let Some(v) = flags_or(flags.epochs, file.epochs) {
        train.epochs = v;
    }
    if let Some(v) = flags_or(flags.steps_per_epoch, file.steps_per_epoch) {
        train.steps_per_epoch = v;
    }
    if let Some(v) = flags_or(flags.batch_size, file.batch_size) {
        train.batch_size = v;
    }
    if let Some(v) = flags_or(flags.learning_rate, file.learning_rate) {
        train.learning_rate = v;
    }
    if let Some(v) = flags_or(flags.lr_decay, file.lr_decay) {
        train.lr_decay = v;
    }
    if let Some(v) = flags.optimizer.as_deref().or(file.optimizer.as_deref()) {
        train.optimizer = parse_optimizer(v)?;
    }
    train.validate()?;

    let mut spec = ModelSpec::default();
    if let Some(v) = flags.hidden.clone().or_else(|| file.hidden.clone()) {
        spec.hidden = v;
    }
    if let Some(v) = flags_or(flags.time_width, file.time_width) {
        spec.time_width = v;
    }

    let mut eval = EvalConfig::default();
    if let Some(v) = flags_or(flags.n_eval, file.n_eval) {
        eval.n_eval = v;
    }
    if let Some(v) = flags_or(flags.eval_seed, file.eval_seed) {
        eval.seed = v;
    }
    if let Some(v) = file.vcs_epsilon {
        eval.vcs_epsilon = v;
    }
    Ok(Resolved {
        task,
        train,
        spec,
        eval,
    })
}

pub fn flags_or<T>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}
