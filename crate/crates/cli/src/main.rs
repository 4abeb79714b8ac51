use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lpcfm::diagnostics::{geometry_suite, gradcheck_suite, signal_suite, Suite};
use lpcfm::experiment::{eval_set, metrics_csv, vcs_ablation_from, EvalConfig, FieldSource};
use lpcfm::signal::read_wav_mono16;
use lpcfm::{
    compare, euler_sample, evaluate, run_experiment, Checkpoint, PathMode, SamplerConfig,
    TargetSource,
};

mod settings;

use settings::{flags_or, parse_mode, parse_task, resolve, FileConfig, TrainFlags};

#[derive(Parser)]
#[command(
    name = "lpcfm",
    version,
    about = "Line-projection flow matching experiments"
)]
struct Cli {
    /// TOML file with default settings (flags take precedence)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an invariant suite
    Verify {
        #[command(subcommand)]
        what: Verify,
    },
    /// Finite-difference check of the network gradients
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        models: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train one model and evaluate it
    Train {
        #[arg(long)]
        task: Option<String>,
        /// lp or ot
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Step budgets to evaluate, comma separated
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample from a trained checkpoint
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        /// Calibrate model outputs onto the line normals
        #[arg(long)]
        vcs: bool,
        /// Number of evaluation draws
        #[arg(long)]
        n_eval: Option<usize>,
        #[arg(long)]
        eval_seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train LP and OT models per seed and compare them across step budgets
    Compare {
        #[arg(long)]
        task: Option<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        budgets: Option<Vec<usize>>,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train LP and OT models and evaluate them with calibration off and on
    AblateVcs {
        #[arg(long)]
        task: Option<String>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Euler steps used for the ablation
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        flags: TrainFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum Verify {
    /// Projector and velocity identities
    Geometry {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// DFT, STFT, scaling and shifting checks
    Signal {
        /// 16-bit PCM mono WAV to check instead of a synthetic tone
        #[arg(long)]
        wav: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

const DEFAULT_SEEDS: [u64; 3] = [1, 2, 3];
const DEFAULT_BUDGETS: [usize; 3] = [1, 2, 6];
const DEFAULT_STEPS: usize = 6;

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

/// Returns `false` when a check suite failed.
fn run(cli: Cli) -> Result<bool> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Verify { what } => {
            let suite = match what {
                Verify::Geometry { cases, seed } => geometry_suite(cases, &[2, 8, 1024], seed)?,
                Verify::Signal { wav, seed } => match wav {
                    Some(path) => {
                        let (samples, rate) = read_wav_mono16(&path)
                            .with_context(|| format!("reading {}", path.display()))?;
                        println!("{}: {} samples at {rate} Hz", path.display(), samples.len());
                        signal_suite(Some(&samples), seed)?
                    }
                    None => signal_suite(None, seed)?,
                },
            };
            Ok(print_suite(&suite))
        }
        Command::Gradcheck { models, seed } => Ok(print_suite(&gradcheck_suite(models, seed)?)),
        Command::Train {
            task,
            mode,
            seed,
            budgets,
            flags,
            out,
        } => {
            cmd_train(&file, task, mode, seed, budgets, &flags, &out)?;
            Ok(true)
        }
        Command::Sample {
            checkpoint,
            steps,
            vcs,
            n_eval,
            eval_seed,
            out,
        } => {
            let steps = flags_or(steps, file.steps).unwrap_or(DEFAULT_STEPS);
            let mut eval = EvalConfig::default();
            eval.n_eval = flags_or(n_eval, file.n_eval).unwrap_or(eval.n_eval);
            eval.seed = flags_or(eval_seed, file.eval_seed).unwrap_or(eval.seed);
            eval.vcs_epsilon = file.vcs_epsilon.unwrap_or(eval.vcs_epsilon);
            cmd_sample(&checkpoint, steps, vcs, &eval, &out)?;
            Ok(true)
        }
        Command::Compare {
            task,
            seeds,
            budgets,
            flags,
            out,
        } => {
            cmd_compare(&file, task, seeds, budgets, &flags, &out)?;
            Ok(true)
        }
        Command::AblateVcs {
            task,
            seeds,
            steps,
            flags,
            out,
        } => {
            cmd_ablate(&file, task, seeds, steps, &flags, &out)?;
            Ok(true)
        }
    }
}

fn print_suite(suite: &Suite) -> bool {
    print!("{suite}");
    let ok = suite.passed();
    println!(
        "{}",
        if ok {
            "all checks passed"
        } else {
            "some checks FAILED"
        }
    );
    ok
}

fn task_name(flag: Option<String>, file: &FileConfig) -> String {
    flag.or_else(|| file.task.clone())
        .unwrap_or_else(|| "2d".to_string())
}

fn cmd_train(
    file: &FileConfig,
    task: Option<String>,
    mode: Option<String>,
    seed: Option<u64>,
    budgets: Option<Vec<usize>>,
    flags: &TrainFlags,
    out: &Path,
) -> Result<()> {
    let task = parse_task(&task_name(task, file))?;
    let mode = parse_mode(mode.as_deref().or(file.mode.as_deref()).unwrap_or("lp"))?;
    let budgets = budgets
        .or_else(|| file.budgets.clone())
        .unwrap_or(DEFAULT_BUDGETS.to_vec());
    let r = resolve(task, mode, seed, flags, file)?;
    fs::create_dir_all(out)?;
    let report = run_experiment(&r.task, &r.train, &r.spec, &budgets, &r.eval)?;

    fs::write(out.join("loss.csv"), report.loss_csv())?;
    fs::write(out.join("metrics.csv"), report.metrics_csv())?;
    fs::write(out.join("report.txt"), report.summary())?;
    if let Some(model) = report.model.clone() {
        Checkpoint::new(model)
            .with_meta("task", r.task.name())
            .with_meta("mode", r.train.mode)
            .with_meta("lambda", r.train.lambda)
            .with_meta("seed", r.train.seed)
            .with_meta("epochs", r.train.epochs)
            .save(out.join("model.ckpt"))?;
    }
    print!("{}", report.summary());
    print!("{}", report.metrics_csv());
    if !report.is_ok() {
        bail!("training failed, see {}", out.join("report.txt").display());
    }
    Ok(())
}

fn cmd_sample(
    checkpoint: &Path,
    steps: usize,
    vcs: bool,
    eval: &EvalConfig,
    out: &Path,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)
        .with_context(|| format!("loading {}", checkpoint.display()))?;
    let task_name = ck
        .meta("task")
        .context("checkpoint has no `task` metadata")?;
    let task = parse_task(task_name)?;
    if ck.model.data_dim() != task.dim() || ck.model.cond_width() != task.cond_dim() {
        bail!("checkpoint shape does not match task `{task_name}`");
    }
    fs::create_dir_all(out)?;

    let cfg = SamplerConfig {
        steps,
        vcs_enabled: vcs,
        vcs_epsilon: eval.vcs_epsilon,
    };
    let mut csv = String::from("sample,step,t");
    for i in 0..task.dim() {
        let _ = write!(csv, ",x{i}");
    }
    csv.push('\n');
    for (i, (draw, x0)) in eval_set(&task, eval).iter().enumerate() {
        let tr = euler_sample(&ck.model, x0, &draw.condition, Some(&draw.lines), &cfg)?;
        for (k, state) in tr.states.iter().enumerate() {
            let _ = write!(csv, "{i},{k},{}", k as f64 / steps as f64);
            for x in state {
                let _ = write!(csv, ",{x}");
            }
            csv.push('\n');
        }
    }
    fs::write(out.join("trajectories.csv"), csv)?;

    let rows = evaluate(FieldSource::Model(&ck.model), &task, &[steps], vcs, eval)?;
    let metrics = metrics_csv(&rows);
    fs::write(out.join("metrics.csv"), &metrics)?;
    print!("{metrics}");
    Ok(())
}

fn cmd_compare(
    file: &FileConfig,
    task: Option<String>,
    seeds: Option<Vec<u64>>,
    budgets: Option<Vec<usize>>,
    flags: &TrainFlags,
    out: &Path,
) -> Result<()> {
    let task = parse_task(&task_name(task, file))?;
    let seeds = seeds
        .or_else(|| file.seeds.clone())
        .unwrap_or(DEFAULT_SEEDS.to_vec());
    let budgets = budgets
        .or_else(|| file.budgets.clone())
        .unwrap_or(DEFAULT_BUDGETS.to_vec());
    let lp = resolve(task, PathMode::Lp, None, flags, file)?;
    let ot = resolve(task, PathMode::Ot, None, flags, file)?;
    let cmp = compare(
        &task, &seeds, &lp.train, &ot.train, &budgets, &lp.spec, &lp.eval,
    )?;
    cmp.write_to(out)?;
    print!("{}", cmp.summary_csv());
    Ok(())
}

fn cmd_ablate(
    file: &FileConfig,
    task: Option<String>,
    seeds: Option<Vec<u64>>,
    steps: Option<usize>,
    flags: &TrainFlags,
    out: &Path,
) -> Result<()> {
    let task = parse_task(&task_name(task, file))?;
    let seeds = seeds
        .or_else(|| file.seeds.clone())
        .unwrap_or(DEFAULT_SEEDS.to_vec());
    let steps = flags_or(steps, file.steps).unwrap_or(DEFAULT_STEPS);
    let lp = resolve(task, PathMode::Lp, None, flags, file)?;
    let ot = resolve(task, PathMode::Ot, None, flags, file)?;
    let cmp = compare(
        &task,
        &seeds,
        &lp.train,
        &ot.train,
        &[steps],
        &lp.spec,
        &lp.eval,
    )?;
    cmp.write_to(out)?;
    let ablation = vcs_ablation_from(&task, &cmp, steps, &lp.eval)?;
    ablation.write_to(out)?;
    print!("{}", ablation.csv());
    Ok(())
}
