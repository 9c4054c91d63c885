//! `thermofuse` command-line interface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thermofuse_core::augmentation::{load_augmented_split, write_augmented_dataset, AugmentationConfig};
use thermofuse_core::dataset::Split;
use thermofuse_core::engine::{load_checkpoint, save_checkpoint};
use thermofuse_core::pipeline::{
    augment_parallel, evaluate, find_reports, lambda_csv, load_raw_dataset, preprocess_parallel,
    proportional_counts, report_split, sweep_lambda, train, worker_threads, write_evaluation,
    write_raw_dataset, write_summary, Dataset, HeadKind, RunConfig, THREADS_ENV,
};
use thermofuse_core::simulate::{simulate_batch, SimulationPlan};

const CHECKPOINT_FILE: &str = "checkpoint.ptckpt";
const SWEEP_FILE: &str = "lambda_sweep.csv";

#[derive(Parser)]
#[command(name = "thermofuse", version, about = "Pulse-thermography defect segmentation and depth estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate specimens and write a raw dataset with a split index.
    Simulate(SimulateArgs),
    /// Compress every sequence into PCA and TSR tensors without augmentation.
    Preprocess(PreprocessArgs),
    /// Temporal augmentation of train/val sequences, pass-through of test.
    Augment(AugmentArgs),
    /// Train a model, save its checkpoint and evaluate it.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Train one binary/depth model per loss weight.
    SweepLambda(SweepArgs),
    /// Collect run reports into an ablation table.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Simulation plan JSON; defaults to the desk plate at `--size`.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    count: usize,
    /// Image side length used without `--spec`.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Split counts `train,val,test`; defaults to about 70/15/15.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "pca-j", default_value_t = 10)]
    pca_j: usize,
    #[arg(long = "tsr-degree", default_value_t = 5)]
    tsr_degree: usize,
    /// Accepted for uniformity; preprocessing draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Augmentation config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `dataset_dir`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
    /// Augmented dataset; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Required metrics kind (`multiclass` or `binary_depth`).
    #[arg(long)]
    metrics: Option<String>,
    /// Accepted for uniformity; evaluation draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated loss weights; defaults to the config's grid.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Accepted for uniformity; reporting draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(thermofuse_core::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

fn echo(command: &str, config: serde_json::Value) -> Result<()> {
    let effective = json!({
        "command": command,
        "threads": worker_threads(),
        "config": config,
    });
    println!("{}", serde_json::to_string_pretty(&effective)?);
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| invalid(format!("bad {what} value {v:?}")))
        })
        .collect()
}

fn invalid(msg: String) -> anyhow::Error {
    thermofuse_core::Error::InvalidArgument(msg).into()
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(invalid(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let plan: SimulationPlan = match &a.spec {
        Some(p) => read_json(p)?,
        None => SimulationPlan::desk_default(a.size, a.size),
    };
    let seed = a.seed.unwrap_or(0);
    let counts = match &a.split {
        Some(s) => match parse_list::<usize>(s, "split")?[..] {
            [tr, va, te] => (tr, va, te),
            _ => return Err(invalid("split needs three counts".into())),
        },
        None => proportional_counts(a.count),
    };
    echo(
        "simulate",
        json!({"plan": plan, "count": a.count, "seed": seed, "split": counts, "out": a.out}),
    )?;
    let items = simulate_batch(&plan, a.count, seed)?;
    write_raw_dataset(&a.out, &items, counts, seed)?;
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<()> {
    let cfg = AugmentationConfig {
        pca_components: a.pca_j,
        tsr_degree: a.tsr_degree,
        factor: 1,
        seed: a.seed.unwrap_or(0),
        ..Default::default()
    };
    cfg.validate()?;
    echo(
        "preprocess",
        json!({"in": a.input, "out": a.out, "pca_j": a.pca_j, "tsr_degree": a.tsr_degree, "seed": cfg.seed}),
    )?;
    require_dir(&a.input, "input")?;
    let items = load_raw_dataset(&a.input)?;
    write_augmented_dataset(preprocess_parallel(&items, &cfg, worker_threads()), &cfg, &a.out)?;
    Ok(())
}

fn augment(a: AugmentArgs) -> Result<()> {
    let mut cfg: AugmentationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AugmentationConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    echo("augment", json!({"in": a.input, "out": a.out, "augmentation": cfg}))?;
    require_dir(&a.input, "input")?;
    let items = load_raw_dataset(&a.input)?;
    write_augmented_dataset(augment_parallel(&items, &cfg, worker_threads()), &cfg, &a.out)?;
    Ok(())
}

fn run_config(
    path: &Path,
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<(RunConfig, PathBuf, PathBuf)> {
    let mut cfg: RunConfig = read_json(path)?;
    if data.is_some() {
        cfg.dataset_dir = data;
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let data = cfg
        .dataset_dir
        .clone()
        .ok_or_else(|| invalid("dataset_dir is not set".into()))?;
    let out = cfg
        .output_dir
        .clone()
        .ok_or_else(|| invalid("output_dir is not set".into()))?;
    Ok((cfg, data, out))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let (cfg, data_dir, out) = run_config(&a.config, a.data, a.out, a.seed)?;
    echo("train", serde_json::to_value(&cfg)?)?;
    require_dir(&data_dir, "dataset")?;
    let data = Dataset::load(&data_dir)?;
    let tm = train(&cfg, &data)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    save_checkpoint(&tm.to_checkpoint()?, out.join(CHECKPOINT_FILE))?;
    let split = report_split(&data);
    let ev = evaluate(&tm, data.split(split), split, None)?;
    write_evaluation(&out, &ev)?;
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let split = Split::parse(&a.split)?;
    let expect = a.metrics.as_deref().map(HeadKind::parse).transpose()?;
    let tm = thermofuse_core::pipeline::TrainedModel::from_checkpoint(&load_checkpoint(&a.checkpoint)?)?;
    let data_dir = a
        .data
        .or_else(|| tm.dataset_dir.clone())
        .ok_or_else(|| invalid("no dataset given and none recorded in the checkpoint".into()))?;
    echo(
        "eval",
        json!({"checkpoint": a.checkpoint, "split": split, "data": data_dir, "out": a.out,
               "metrics": expect, "seed": a.seed, "run": tm.config}),
    )?;
    require_dir(&data_dir, "dataset")?;
    let samples = load_augmented_split(&data_dir, split)?;
    let ev = evaluate(&tm, &samples, split, expect)?;
    write_evaluation(&a.out, &ev)?;
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let (mut cfg, data_dir, out) = run_config(&a.config, a.data, a.out, a.seed)?;
    if let Some(g) = &a.grid {
        cfg.lambda_grid = parse_list(g, "lambda")?;
        cfg.validate()?;
    }
    echo("sweep-lambda", serde_json::to_value(&cfg)?)?;
    require_dir(&data_dir, "dataset")?;
    let data = Dataset::load(&data_dir)?;
    let rows = sweep_lambda(&cfg, &data, &cfg.lambda_grid)?;
    for (lambda, ev) in &rows {
        write_evaluation(&out.join(format!("lambda_{lambda}")), ev)?;
    }
    let reports: Vec<_> = rows.into_iter().map(|(l, ev)| (l, ev.report)).collect();
    let path = out.join(SWEEP_FILE);
    std::fs::write(&path, lambda_csv(&reports)).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    echo("report", json!({"in": a.input, "out": a.out, "seed": a.seed}))?;
    require_dir(&a.input, "input")?;
    let found = find_reports(&a.input)?;
    if found.is_empty() {
        bail!(invalid(format!("no metrics.json under {}", a.input.display())));
    }
    let reports: Vec<_> = found.into_iter().map(|(_, r)| r).collect();
    write_summary(&reports, &a.out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Augment(a) => augment(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::SweepLambda(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

/// One stderr line: `error kind=<kind> msg=<json string>`.
fn report_error(kind: &str, msg: &str) {
    let msg = serde_json::to_string(msg).unwrap_or_else(|_| "\"\"".into());
    eprintln!("error kind={kind} msg={msg}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error");
            report_error("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if !v.trim().parse::<usize>().is_ok_and(|n| n > 0) {
            report_error("invalid_argument", &format!("{THREADS_ENV} must be a positive integer"));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .chain()
                .find_map(|c| c.downcast_ref::<thermofuse_core::Error>())
                .map_or("other", |c| c.kind());
            let msg = format!("{e:#}").replace('\n', " ");
            report_error(kind, &msg);
            ExitCode::FAILURE
        }
    }
}
