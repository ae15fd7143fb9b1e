//! `qasa generate|train|eval|compare|bench`.
//!
//! Exit codes: 0 success, 1 sub-run or I/O failure, 2 usage or configuration
//! error, 3 numerical abort. `QASA_THREADS` caps worker threads in `compare`.

use crate::autodiff::{Tape, Tensor};
use crate::config::{DataConfig, ExperimentConfig};
use crate::data::{self, SeriesSpec, Task};
use crate::error::{Error, Result};
use crate::model::{self, Model, ModelConfig, Variant};
use crate::train::{self, TrainOutcome};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const CHECKPOINT_FILE: &str = "checkpoint.qasa";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Parser, Debug)]
#[command(name = "qasa", version, about = "Hybrid quantum self-attention forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic series as `index,t,value` CSV.
    Generate(GenerateArgs),
    /// Train from a JSON experiment config.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the train and validation splits.
    Eval(EvalArgs),
    /// Multi-task, multi-seed comparison table.
    Compare(CompareArgs),
    /// Median forward+backward wall clock per sequence length.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    task: String,
    #[arg(long, default_value_t = 2050)]
    length: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON config; omitted means all defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Supplies the data section; defaults to the desk data with the
    /// checkpoint's window length.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Comma-separated task names or `all`.
    #[arg(long, default_value = "all")]
    tasks: String,
    #[arg(long, default_value = "qasa_classical,qasa")]
    models: String,
    #[arg(long, default_value = "42,43,44")]
    seeds: String,
    /// Output prefix; writes `<out>.csv`, `<out>.md` and `<out>_runs.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    length: Option<usize>,
    /// Full-size models and 2050-point series instead of desk scale.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value = "8,16,32,64")]
    seq_lens: String,
    #[arg(long, default_value = "qasa")]
    variant: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Json(_) => EXIT_USAGE,
        Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
        _ => EXIT_FAILURE,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text)
        }
    }
}

fn parse_list<T>(flag: &str, text: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(flag, "empty list"));
    }
    Ok(items)
}

fn parse_variant(s: &str) -> Result<Variant> {
    Variant::parse(s).ok_or_else(|| {
        Error::config(
            "--models",
            format!("unknown model `{s}` (expected transformer, qasa_classical or qasa)"),
        )
    })
}

fn cmd_generate(a: GenerateArgs) -> Result<i32> {
    let task = Task::parse(&a.task)?;
    let spec = SeriesSpec {
        dt: a.dt,
        ..SeriesSpec::new(task, a.length, a.seed)
    };
    let series = data::generate(&spec)?;
    let mut w = create(&a.out)?;
    data::write_series_csv(&spec, &series, &mut w)?;
    w.flush()?;
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let std = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{}: {} points, mean {mean:.6}, std {std:.6}, min {min:.6}, max {max:.6} -> {}",
        task.name(),
        series.len(),
        a.out.display()
    );
    Ok(EXIT_OK)
}

/// Trains one experiment and writes checkpoint, metrics, predictions,
/// summary and the resolved config into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (train_set, val_set, _) =
        data::prepare(&cfg.data.series_spec(), cfg.data.window, cfg.data.split_ratio)?;
    let model = Model::new(cfg.model.clone())?;
    let outcome = train::train(&model, &train_set, &val_set, &cfg.train)?;

    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join(CONFIG_FILE), cfg.to_json())?;
    model::save_checkpoint(&outcome.best, out_dir.join(CHECKPOINT_FILE))?;
    let mut w = create(&out_dir.join(METRICS_FILE))?;
    train::write_metrics_csv(&outcome.history, &mut w)?;
    w.flush()?;
    let mut w = create(&out_dir.join(PREDICTIONS_FILE))?;
    train::write_predictions_csv(&outcome.val_predictions, val_set.targets(), &mut w)?;
    w.flush()?;
    let last = outcome.final_val().expect("at least one epoch");
    let summary = serde_json::json!({
        "variant": cfg.model.variant.name(),
        "task": cfg.data.task.name(),
        "epochs_run": outcome.history.len() / 2,
        "best_epoch": outcome.best_epoch,
        "best_val_mse": outcome.best_val_mse,
        "final_val_mse": last.mse,
        "final_val_mae": last.mae,
        "stopped_early": outcome.stopped_early,
        "quantum_invocations": model.quantum_invocations(),
    });
    std::fs::write(
        out_dir.join(SUMMARY_FILE),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(outcome)
}

fn cmd_train(a: TrainArgs) -> Result<i32> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(d) = a.out_dir {
        cfg.output_dir = d;
    }
    let dir = cfg.output_dir.clone();
    let outcome = run_experiment(&cfg, &dir)?;
    let last = outcome.final_val().expect("at least one epoch");
    println!(
        "{} on {}: {} epochs, best val mse {:.6} at epoch {}, final val mse {:.6} mae {:.6} -> {}",
        cfg.model.variant.name(),
        cfg.data.task.name(),
        outcome.history.len() / 2,
        outcome.best_val_mse,
        outcome.best_epoch,
        last.mse,
        last.mae,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn cmd_eval(a: EvalArgs) -> Result<i32> {
    let model = model::load_checkpoint(&a.checkpoint)?;
    let data_cfg = match a.config.as_deref() {
        Some(p) => load_config(Some(p))?.data,
        None => DataConfig {
            window: model.config().seq_len,
            length: model.config().seq_len + 800,
            ..DataConfig::default()
        },
    };
    if data_cfg.window != model.config().seq_len {
        return Err(Error::config(
            "data.window",
            format!("checkpoint expects windows of {}", model.config().seq_len),
        ));
    }
    let (tr, va, _) = data::prepare(&data_cfg.series_spec(), data_cfg.window, data_cfg.split_ratio)?;
    println!("split,mse,mae");
    for (name, ds) in [("train", &tr), ("val", &va)] {
        let (mse, mae) = train::evaluate(&model, ds)?;
        println!("{name},{mse:?},{mae:?}");
    }
    Ok(EXIT_OK)
}

fn worker_count(jobs: usize) -> Result<usize> {
    let cap = match std::env::var("QASA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config("QASA_THREADS", format!("`{v}` is not a positive integer")))?,
        Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    Ok(cap.min(jobs).max(1))
}

/// Per-run validation metrics of the best checkpoint.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub task: Task,
    pub variant: Variant,
    pub seed: u64,
    pub outcome: std::result::Result<(f64, f64), String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub task: Task,
    pub variant: Variant,
    pub mae_mean: f64,
    pub mse_mean: f64,
    pub mae_std: f64,
    pub mse_std: f64,
    pub runs: usize,
    pub failed: usize,
}

/// Mean and sample standard deviation (N−1 denominator; NaN below 2 values).
pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate(cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Task, Variant)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.task, c.variant)) {
            keys.push((c.task, c.variant));
        }
    }
    keys.into_iter()
        .map(|(task, variant)| {
            let group: Vec<&CellResult> = cells
                .iter()
                .filter(|c| c.task == task && c.variant == variant)
                .collect();
            let ok: Vec<(f64, f64)> = group.iter().filter_map(|c| c.outcome.clone().ok()).collect();
            let (mse_mean, mse_std) = mean_and_std(&ok.iter().map(|r| r.0).collect::<Vec<_>>());
            let (mae_mean, mae_std) = mean_and_std(&ok.iter().map(|r| r.1).collect::<Vec<_>>());
            AggregateRow {
                task,
                variant,
                mae_mean,
                mse_mean,
                mae_std,
                mse_std,
                runs: ok.len(),
                failed: group.len() - ok.len(),
            }
        })
        .collect()
}

pub fn write_compare_csv<W: Write>(rows: &[AggregateRow], mut w: W) -> Result<()> {
    w.write_all(b"task,model,mae_mean,mse_mean,mae_std,mse_std\n")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:?},{:?},{:?},{:?}",
            r.task.name(),
            r.variant.name(),
            r.mae_mean,
            r.mse_mean,
            r.mae_std,
            r.mse_std
        )?;
    }
    Ok(())
}

pub fn write_compare_markdown<W: Write>(rows: &[AggregateRow], mut w: W) -> Result<()> {
    writeln!(w, "| Task | Model | MAE Mean | MSE Mean | MAE Std | MSE Std |")?;
    writeln!(w, "|------|-------|----------|----------|---------|---------|")?;
    for r in rows {
        writeln!(
            w,
            "| {} | {} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.task.name(),
            r.variant.name(),
            r.mae_mean,
            r.mse_mean,
            r.mae_std,
            r.mse_std
        )?;
    }
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<i32> {
    let tasks = if a.tasks.trim() == "all" {
        Task::ALL.to_vec()
    } else {
        parse_list("--tasks", &a.tasks, Task::parse)?
    };
    let variants = parse_list("--models", &a.models, parse_variant)?;
    let seeds = parse_list("--seeds", &a.seeds, |s| {
        s.parse::<u64>()
            .map_err(|_| Error::config("--seeds", format!("`{s}` is not an integer")))
    })?;
    if seeds.len() < 2 {
        return Err(Error::config("--seeds", "need at least two seeds for a standard deviation"));
    }

    let mut jobs = Vec::new();
    for &task in &tasks {
        for &variant in &variants {
            for &seed in &seeds {
                let mut cfg = if a.full_scale {
                    ExperimentConfig::full(variant, task)
                } else {
                    ExperimentConfig::desk(variant, task)
                };
                cfg.model.seed = seed;
                cfg.train.seed = seed;
                cfg.data.seed = seed;
                if let Some(e) = a.epochs {
                    cfg.train.epochs = e;
                }
                if let Some(lr) = a.lr {
                    cfg.train.lr = lr;
                }
                if let Some(l) = a.length {
                    cfg.data.length = l;
                }
                cfg.validate()?;
                jobs.push(cfg);
            }
        }
    }

    let cells = run_cells(&jobs, worker_count(jobs.len())?);
    for c in &cells {
        if let Err(msg) = &c.outcome {
            eprintln!("run {} / {} / seed {} failed: {msg}", c.task.name(), c.variant.name(), c.seed);
        }
    }
    let rows = aggregate(&cells);

    let with_ext = |suffix: &str| {
        let mut s = a.out.clone().into_os_string();
        s.push(suffix);
        PathBuf::from(s)
    };
    let mut w = create(&with_ext(".csv"))?;
    write_compare_csv(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(&with_ext(".md"))?;
    write_compare_markdown(&rows, &mut w)?;
    w.flush()?;
    let mut w = create(&with_ext("_runs.csv"))?;
    w.write_all(b"task,model,seed,status,val_mse,val_mae\n")?;
    for c in &cells {
        match &c.outcome {
            Ok((mse, mae)) => writeln!(w, "{},{},{},ok,{mse:?},{mae:?}", c.task.name(), c.variant.name(), c.seed)?,
            Err(_) => writeln!(w, "{},{},{},failed,,", c.task.name(), c.variant.name(), c.seed)?,
        }
    }
    w.flush()?;
    write_compare_markdown(&rows, std::io::stdout().lock())?;

    let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
    Ok(if failed > 0 { EXIT_FAILURE } else { EXIT_OK })
}

fn run_cell(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let (tr, va, _) = data::prepare(&cfg.data.series_spec(), cfg.data.window, cfg.data.split_ratio)?;
    let model = Model::new(cfg.model.clone())?;
    let out = train::train(&model, &tr, &va, &cfg.train)?;
    train::evaluate(&out.best, &va)
}

/// Runs every job on up to `workers` threads; results keep job order.
pub fn run_cells(jobs: &[ExperimentConfig], workers: usize) -> Vec<CellResult> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<CellResult>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cfg) = jobs.get(i) else { break };
                let outcome = run_cell(cfg).map_err(|e| e.to_string());
                slots.lock().expect("result lock")[i] = Some(CellResult {
                    task: cfg.data.task,
                    variant: cfg.model.variant,
                    seed: cfg.model.seed,
                    outcome,
                });
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|c| c.expect("every job ran"))
        .collect()
}

/// Median milliseconds of one forward+backward pass on a single window.
pub fn bench_seq_len(cfg: &ModelConfig, repeats: usize) -> Result<f64> {
    let model = Model::new(cfg.clone())?;
    let window: Vec<f64> = (0..cfg.seq_len).map(|k| (k as f64 * 0.2).sin()).collect();
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, true);
        let y = model.forward_on_tape(&mut tape, &vars, &[&window], None)?;
        let target = tape.constant(Tensor::matrix(1, 1, vec![0.0])?);
        let loss = train::mse_loss(&mut tape, y, target)?;
        std::hint::black_box(tape.backward(loss)?);
        times.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    Ok(if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    })
}

fn cmd_bench(a: BenchArgs) -> Result<i32> {
    let variant = Variant::parse(&a.variant).ok_or_else(|| Error::config("--variant", format!("unknown variant `{}`", a.variant)))?;
    let lens = parse_list("--seq-lens", &a.seq_lens, |s| {
        s.parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config("--seq-lens", format!("`{s}` is not a positive integer")))
    })?;
    if lens.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("--seq-lens", "must be strictly ascending"));
    }
    if a.repeats == 0 {
        return Err(Error::config("--repeats", "must be at least 1"));
    }
    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    out.write_all(b"seq_len,variant,median_ms,trials\n")?;
    for l in lens {
        let cfg = ModelConfig {
            seq_len: l,
            ..ModelConfig::desk(variant)
        };
        let ms = bench_seq_len(&cfg, a.repeats)?;
        writeln!(out, "{l},{},{ms:.3},{}", variant.name(), a.repeats)?;
    }
    out.flush()?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_and_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_and_std(&[0.5, 0.5, 0.5]).1, 0.0);
    }

    #[test]
    fn aggregate_groups_in_first_seen_order() {
        let cell = |task, variant, seed, v: f64| CellResult {
            task,
            variant,
            seed,
            outcome: Ok((v, v / 2.0)),
        };
        let cells = vec![
            cell(Task::Arma, Variant::Qasa, 1, 1.0),
            cell(Task::Arma, Variant::Qasa, 2, 3.0),
            cell(Task::Sawtooth, Variant::Qasa, 1, 2.0),
            CellResult {
                outcome: Err("boom".into()),
                ..cell(Task::Sawtooth, Variant::Qasa, 2, 0.0)
            },
        ];
        let rows = aggregate(&cells);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mse_mean, 2.0);
        assert_eq!(rows[0].mae_mean, 1.0);
        assert_eq!(rows[1].failed, 1);
        assert!(rows[1].mse_std.is_nan());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["qasa", "frobnicate"]), EXIT_USAGE);
        assert_eq!(
            run(["qasa", "generate", "--task", "bogus", "--out", "/nonexistent/x.csv"]),
            EXIT_USAGE
        );
    }
}
