//! Desk-scale experiments comparing LP and OT training on synthetic tasks.
//!
//! The quality metric is the distance of sampled endpoints to the known
//! equivalence line of each target; endpoint MSE to the nearest variant is
//! reported alongside (`dist² / d`).

mod exact;
mod svg;
mod tasks;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use exact::ExactField;
pub use svg::{line_plot, Series};
pub use tasks::{task_2d_line, task_spectrogram_patch, Line2dTask, SpectrogramPatchTask, ToyTask};

use crate::error::{Error, Result};
use crate::flow::{train, TargetSource, TaskDraw, TrainConfig};
use crate::geometry::{PathMode, PathParams};
use crate::net::Mlp;
use crate::sampler::{euler_sample, SamplerConfig, Trajectory};

/// Network shape used by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub hidden: Vec<usize>,
    pub time_width: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            time_width: 1,
        }
    }
}

impl ModelSpec {
    pub fn build(&self, task: &dyn TargetSource, seed: u64) -> Result<Mlp> {
        // model init uses its own stream so it does not shift training draws
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        Mlp::new(
            task.dim(),
            self.time_width,
            task.cond_dim(),
            &self.hidden,
            &mut rng,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Number of (target, x0) pairs per evaluation.
    pub n_eval: usize,
    pub seed: u64,
    pub vcs_epsilon: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_eval: 1000,
            seed: 12_345,
            vcs_epsilon: 1e-6,
        }
    }
}

/// What to integrate during evaluation.
#[derive(Debug, Clone, Copy)]
pub enum FieldSource<'a> {
    Model(&'a Mlp),
    /// The exact conditional field of each evaluation target.
    Exact(PathParams),
}

/// Metrics of one field at one step budget.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub budget: usize,
    pub vcs: bool,
    pub mean_distance: f64,
    pub endpoint_mse: f64,
    pub path_length_mean: f64,
    pub path_length_std: f64,
    pub degenerate_steps: usize,
}

/// Mean and (population) standard deviation of trajectory lengths.
pub fn path_length_stats(trajectories: &[Trajectory]) -> (f64, f64) {
    if trajectories.is_empty() {
        return (0.0, 0.0);
    }
    let lengths: Vec<f64> = trajectories.iter().map(Trajectory::length).collect();
    let n = lengths.len() as f64;
    let mean = lengths.iter().sum::<f64>() / n;
    let var = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Deterministic evaluation set: targets and matched source samples.
pub fn eval_set(task: &dyn TargetSource, eval: &EvalConfig) -> Vec<(TaskDraw, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(eval.seed);
    (0..eval.n_eval)
        .map(|_| {
            let draw = task.draw(&mut rng);
            let x0 = (0..task.dim())
                .map(|_| rng.sample(StandardNormal))
                .collect();
            (draw, x0)
        })
        .collect()
}

/// Samples every evaluation target at each budget and reports distance metrics.
pub fn evaluate(
    source: FieldSource<'_>,
    task: &dyn TargetSource,
    budgets: &[usize],
    vcs: bool,
    eval: &EvalConfig,
) -> Result<Vec<EvalRow>> {
    let set = eval_set(task, eval);
    let d = task.dim() as f64;
    budgets
        .iter()
        .map(|&budget| {
            let cfg = SamplerConfig {
                steps: budget,
                vcs_enabled: vcs,
                vcs_epsilon: eval.vcs_epsilon,
            };
            let mut trajectories = Vec::with_capacity(set.len());
            let (mut dist, mut mse, mut degenerate) = (0.0, 0.0, 0);
            for (draw, x0) in &set {
                let tr = match source {
                    FieldSource::Model(m) => {
                        euler_sample(m, x0, &draw.condition, Some(&draw.lines), &cfg)?
                    }
                    FieldSource::Exact(p) => {
                        let f = ExactField::new(draw.lines.clone(), p);
                        euler_sample(&f, x0, &draw.condition, Some(&draw.lines), &cfg)?
                    }
                };
                let dl = draw.lines.distance_to(tr.endpoint())?;
                dist += dl;
                mse += dl * dl / d;
                degenerate += tr.degenerate_steps;
                trajectories.push(tr);
            }
            let n = set.len().max(1) as f64;
            let (path_length_mean, path_length_std) = path_length_stats(&trajectories);
            Ok(EvalRow {
                budget,
                vcs,
                mean_distance: dist / n,
                endpoint_mse: mse / n,
                path_length_mean,
                path_length_std,
                degenerate_steps: degenerate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

/// One training run plus its evaluation.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub task: String,
    pub config: TrainConfig,
    pub model_spec: ModelSpec,
    pub loss_curve: Vec<f64>,
    pub metrics: Vec<EvalRow>,
    pub status: RunStatus,
    pub wall_clock_secs: f64,
    pub model: Option<Mlp>,
}

impl RunReport {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn metric(&self, budget: usize) -> Option<&EvalRow> {
        self.metrics.iter().find(|r| r.budget == budget)
    }

    /// `epoch,mean_loss`
    pub fn loss_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss\n");
        for (i, l) in self.loss_curve.iter().enumerate() {
            let _ = writeln!(s, "{},{l}", i + 1);
        }
        s
    }

    /// Budget rows, see [`metrics_csv`].
    pub fn metrics_csv(&self) -> String {
        metrics_csv(&self.metrics)
    }

    /// `key=value` summary including the non-deterministic wall-clock time.
    pub fn summary(&self) -> String {
        let c = &self.config;
        let mut s = String::new();
        let _ = writeln!(s, "task={}", self.task);
        let _ = writeln!(s, "mode={}", c.mode);
        let _ = writeln!(s, "lambda={}", c.lambda);
        let _ = writeln!(s, "seed={}", c.seed);
        let _ = writeln!(s, "epochs={}", c.epochs);
        let _ = writeln!(s, "steps_per_epoch={}", c.steps_per_epoch);
        let _ = writeln!(s, "batch_size={}", c.batch_size);
        let _ = writeln!(s, "learning_rate={}", c.learning_rate);
        let _ = writeln!(s, "lr_decay={}", c.lr_decay);
        let _ = writeln!(s, "hidden={:?}", self.model_spec.hidden);
        let _ = writeln!(s, "time_width={}", self.model_spec.time_width);
        let _ = writeln!(
            s,
            "final_loss={}",
            self.loss_curve.last().copied().unwrap_or(f64::NAN)
        );
        let _ = writeln!(
            s,
            "status={}",
            match &self.status {
                RunStatus::Ok => "ok".to_string(),
                RunStatus::Failed(e) => format!("failed: {e}"),
            }
        );
        let _ = writeln!(s, "wall_clock_secs={:.3}", self.wall_clock_secs);
        s
    }
}

/// `budget,vcs,mean_distance,endpoint_mse,path_length_mean,path_length_std,degenerate_steps`
pub fn metrics_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(METRIC_HEADER);
    s.push('\n');
    for r in rows {
        push_metric_row(&mut s, r);
    }
    s
}

const METRIC_HEADER: &str =
    "budget,vcs,mean_distance,endpoint_mse,path_length_mean,path_length_std,degenerate_steps";

fn push_metric_row(s: &mut String, r: &EvalRow) {
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{}",
        r.budget,
        r.vcs,
        r.mean_distance,
        r.endpoint_mse,
        r.path_length_mean,
        r.path_length_std,
        r.degenerate_steps
    );
}

/// Trains one model and evaluates it (without calibration) at `budgets`.
///
/// Training failures are captured in the report rather than returned.
pub fn run_experiment(
    task: &dyn TargetSource,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    budgets: &[usize],
    eval: &EvalConfig,
) -> Result<RunReport> {
    let start = Instant::now();
    let model = spec.build(task, cfg.seed)?;
    let mut report = RunReport {
        task: task.name().to_string(),
        config: cfg.clone(),
        model_spec: spec.clone(),
        loss_curve: Vec::new(),
        metrics: Vec::new(),
        status: RunStatus::Ok,
        wall_clock_secs: 0.0,
        model: None,
    };
    match train(model, task, cfg) {
        Ok(trained) => {
            report.loss_curve = trained.loss_curve;
            match evaluate(
                FieldSource::Model(&trained.model),
                task,
                budgets,
                false,
                eval,
            ) {
                Ok(rows) => report.metrics = rows,
                Err(e) => report.status = RunStatus::Failed(e.to_string()),
            }
            report.model = Some(trained.model);
        }
        Err(e @ (Error::NonFiniteLoss { .. } | Error::NonFinite { .. })) => {
            report.status = RunStatus::Failed(e.to_string());
        }
        Err(e) => return Err(e),
    }
    report.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Runs independent jobs on scoped threads; results keep job order.
fn run_parallel<T: Send, F>(jobs: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T + Sync,
{
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(jobs.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<T>> = (0..jobs).map(|_| None).collect();
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let r = f(i);
                slots.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Per-seed runs of two training configurations that differ only in mode.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub task: String,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Column labels, e.g. `["lp", "ot"]`.
    pub labels: [String; 2],
    /// `runs[slot][seed_index]`
    pub runs: [Vec<RunReport>; 2],
}

impl Comparison {
    /// Mean distance over successful seeds for `slot` at `budget`; `NaN` if none succeeded.
    pub fn mean_distance(&self, slot: usize, budget: usize) -> f64 {
        let vals: Vec<f64> = self.runs[slot]
            .iter()
            .filter(|r| r.is_ok())
            .filter_map(|r| r.metric(budget).map(|m| m.mean_distance))
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    }

    /// `slot,mode,seed,status,<metric columns>` for every run and budget.
    pub fn runs_csv(&self) -> String {
        let mut s = format!("slot,mode,seed,status,{METRIC_HEADER}\n");
        for (slot, runs) in self.runs.iter().enumerate() {
            for r in runs {
                let prefix = format!("{},{},{}", self.labels[slot], r.config.mode, r.config.seed);
                if r.is_ok() {
                    for m in &r.metrics {
                        let mut row = String::new();
                        push_metric_row(&mut row, m);
                        let _ = write!(s, "{prefix},ok,{row}");
                    }
                } else {
                    for b in &self.budgets {
                        let _ = writeln!(s, "{prefix},failed,{b},false,,,,,");
                    }
                }
            }
        }
        s
    }

    /// `budget,<label a>_mean_distance,<label b>_mean_distance,advantage`
    /// where `advantage = b − a`.
    pub fn summary_csv(&self) -> String {
        let mut s = format!(
            "budget,{}_mean_distance,{}_mean_distance,advantage\n",
            self.labels[0], self.labels[1]
        );
        for &b in &self.budgets {
            let (x, y) = (self.mean_distance(0, b), self.mean_distance(1, b));
            let _ = writeln!(s, "{b},{},{},{}", cell(x), cell(y), cell(y - x));
        }
        s
    }

    pub fn svg(&self) -> String {
        let xs: Vec<f64> = self.budgets.iter().map(|b| *b as f64).collect();
        let series: Vec<Series<'_>> = (0..2)
            .map(|slot| Series {
                name: &self.labels[slot],
                values: self
                    .budgets
                    .iter()
                    .map(|b| self.mean_distance(slot, *b))
                    .collect(),
            })
            .collect();
        line_plot(
            &format!("{}: distance to line vs sampling steps", self.task),
            "Euler steps",
            "mean distance to line",
            &xs,
            &series,
        )
    }

    /// Writes `compare_runs.csv`, `compare_summary.csv`, `compare_distance.svg`
    /// and one `loss_<label>_seed<S>.csv` per run.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("compare_runs.csv"), self.runs_csv())?;
        fs::write(dir.join("compare_summary.csv"), self.summary_csv())?;
        fs::write(dir.join("compare_distance.svg"), self.svg())?;
        for (slot, runs) in self.runs.iter().enumerate() {
            for r in runs {
                let name = format!("loss_{}_seed{}.csv", self.labels[slot], r.config.seed);
                fs::write(dir.join(name), r.loss_csv())?;
            }
        }
        Ok(())
    }
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "failed".to_string()
    }
}

fn same_except_mode(a: &TrainConfig, b: &TrainConfig) -> bool {
    let b = TrainConfig {
        mode: a.mode,
        seed: a.seed,
        ..b.clone()
    };
    *a == b
}

/// Trains both configurations for every seed and evaluates them at each budget.
///
/// The two configurations must be identical apart from `mode` (their `seed`
/// is replaced by each entry of `seeds`).
pub fn compare(
    task: &(dyn TargetSource + Sync),
    seeds: &[u64],
    cfg_a: &TrainConfig,
    cfg_b: &TrainConfig,
    budgets: &[usize],
    spec: &ModelSpec,
    eval: &EvalConfig,
) -> Result<Comparison> {
    if !same_except_mode(cfg_a, cfg_b) {
        return Err(Error::Config(
            "compared configurations must differ only in mode".into(),
        ));
    }
    if seeds.is_empty() || budgets.is_empty() {
        return Err(Error::Config(
            "need at least one seed and one step budget".into(),
        ));
    }
    let cfgs = [cfg_a, cfg_b];
    let n = seeds.len();
    let results = run_parallel(2 * n, |i| {
        let cfg = TrainConfig {
            seed: seeds[i % n],
            ..cfgs[i / n].clone()
        };
        run_experiment(task, &cfg, spec, budgets, eval)
    });
    let mut results = results.into_iter().collect::<Result<Vec<_>>>()?;
    let second = results.split_off(n);
    let labels = if cfg_a.mode == cfg_b.mode {
        [format!("{}_a", cfg_a.mode), format!("{}_b", cfg_b.mode)]
    } else {
        [cfg_a.mode.to_string(), cfg_b.mode.to_string()]
    };
    Ok(Comparison {
        task: task.name().to_string(),
        budgets: budgets.to_vec(),
        seeds: seeds.to_vec(),
        labels,
        runs: [results, second],
    })
}

/// One row of the calibration ablation, averaged over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub mode: PathMode,
    pub vcs: bool,
    pub mean_distance: f64,
    pub endpoint_mse: f64,
    pub degenerate_steps: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ablation {
    pub steps: usize,
    /// `(OT, off)`, `(OT, on)`, `(LP, off)`, `(LP, on)`
    pub rows: Vec<AblationRow>,
}

impl Ablation {
    pub fn row(&self, mode: PathMode, vcs: bool) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.mode == mode && r.vcs == vcs)
    }

    pub fn csv(&self) -> String {
        let mut s =
            String::from("mode,vcs,steps,mean_distance,endpoint_mse,degenerate_steps,seeds\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.mode,
                if r.vcs { "on" } else { "off" },
                self.steps,
                cell(r.mean_distance),
                cell(r.endpoint_mse),
                r.degenerate_steps,
                r.seeds
            );
        }
        s
    }

    /// Writes `vcs_ablation.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("vcs_ablation.csv"), self.csv())?;
        Ok(())
    }
}

/// Evaluates trained models with calibration off and on at `steps` Euler steps.
pub fn vcs_ablation(
    task: &dyn TargetSource,
    models: &[(PathMode, &Mlp)],
    steps: usize,
    eval: &EvalConfig,
) -> Result<Ablation> {
    let mut rows = Vec::with_capacity(4);
    for mode in [PathMode::Ot, PathMode::Lp] {
        for vcs in [false, true] {
            let mut acc = (0.0, 0.0, 0usize, 0usize);
            for (_, m) in models.iter().filter(|(md, _)| *md == mode) {
                let r = evaluate(FieldSource::Model(m), task, &[steps], vcs, eval)?;
                acc.0 += r[0].mean_distance;
                acc.1 += r[0].endpoint_mse;
                acc.2 += r[0].degenerate_steps;
                acc.3 += 1;
            }
            let n = acc.3 as f64;
            rows.push(AblationRow {
                mode,
                vcs,
                mean_distance: if acc.3 > 0 { acc.0 / n } else { f64::NAN },
                endpoint_mse: if acc.3 > 0 { acc.1 / n } else { f64::NAN },
                degenerate_steps: acc.2,
                seeds: acc.3,
            });
        }
    }
    Ok(Ablation { steps, rows })
}

/// Builds the ablation from the models of a finished comparison.
pub fn vcs_ablation_from(
    task: &dyn TargetSource,
    cmp: &Comparison,
    steps: usize,
    eval: &EvalConfig,
) -> Result<Ablation> {
    let models: Vec<(PathMode, &Mlp)> = cmp
        .runs
        .iter()
        .flatten()
        .filter_map(|r| r.model.as_ref().map(|m| (r.config.mode, m)))
        .collect();
    vcs_ablation(task, &models, steps, eval)
}

/// Exact-field transports of the evaluation draws under LP and OT paths with
/// matched `(target, x0)` pairs, returned as `(lp, ot)`.
pub fn oracle_trajectories(
    task: &dyn TargetSource,
    lambda: f64,
    steps: usize,
    eval: &EvalConfig,
) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    let set = eval_set(task, eval);
    let lp = PathParams::lp(lambda)?;
    let ot = PathParams::ot(lambda)?;
    let cfg = SamplerConfig::new(steps, false);
    let mut out = (Vec::with_capacity(set.len()), Vec::with_capacity(set.len()));
    for (draw, x0) in &set {
        let f = ExactField::new(draw.lines.clone(), lp);
        out.0
            .push(euler_sample(&f, x0, &draw.condition, None, &cfg)?);
        let f = ExactField::new(draw.lines.clone(), ot);
        out.1
            .push(euler_sample(&f, x0, &draw.condition, None, &cfg)?);
    }
    Ok(out)
}
