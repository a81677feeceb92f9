//! Command-line entry point shared by the `vlmtrack` binary.
//!
//! Exit codes: 0 on success, 2 for usage, config or input-data problems,
//! 3 for transport and other runtime failures.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde_json::Value;

use crate::config::AppConfig;
use crate::error::{DatasetError, EvalError, TrackError};
use crate::eval::{evaluate, join_ground_truth, read_predictions, write_submission, PredictedTrack};
use crate::grpo::{toy_train, write_trace, Aggregation};
use crate::rewards::{overall_reward, overall_reward_with_tokens, ResponseMode};
use crate::sampler::{generate_dataset, load_got10k, load_got10k_for_tracking, read_records, DatasetOptions};
use crate::tracker::{
    grounding_request, parse_grounding, run_sequence, HttpBackend, Init, MockBackend, PolicyBackend,
};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "vlmtrack", version, about = "Reward shaping, data sampling and one-shot tracking for VLM trackers")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Config override `section.key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Log filter, e.g. `info` or `vlmtrack=debug`. `RUST_LOG` also works.
    #[arg(long, global = true)]
    pub log: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample template/search training records from a GOT-10k tree.
    Dataset(DatasetArgs),
    /// Score model responses against training records.
    Reward(RewardArgs),
    /// Track every sequence of a dataset and write a submission tree.
    Track(TrackArgs),
    /// Ask the backend for the box of a described object in one image.
    Ground(GroundArgs),
    /// Score a submission tree against ground truth.
    Eval(EvalArgs),
    /// Train the toy policy and write the training trace.
    GrpoDemo(GrpoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Think,
    Nothink,
}

impl From<ModeArg> for ResponseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Think => ResponseMode::Think,
            ModeArg::Nothink => ResponseMode::NoThink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Http,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    Sequence,
    Token,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// GOT-10k split directory (with list.txt).
    #[arg(long)]
    pub root: PathBuf,
    /// Number of records to sample.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Also write chat-formatted `sft.jsonl`.
    #[arg(long)]
    pub sft: bool,
    /// Write records only, no crop images.
    #[arg(long)]
    pub skip_images: bool,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    /// `records.jsonl` from the dataset command.
    #[arg(long)]
    pub records: PathBuf,
    /// One response per line: a JSON string, an object with `response` (and
    /// optional `tokens`), or raw text.
    #[arg(long)]
    pub responses: PathBuf,
    /// Output JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// GOT-10k split directory (with list.txt).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, default_value = "http")]
    pub backend: BackendArg,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub resolution: Option<u32>,
    /// Submission output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Initialize every sequence from this description instead of the first box.
    #[arg(long)]
    pub text: Option<String>,
    /// Track only the first N sequences.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GroundArgs {
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub text: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Submission tree (`<name>/<name>_001.txt`).
    #[arg(long)]
    pub pred: PathBuf,
    /// GOT-10k split directory with full ground truth.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct GrpoArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub group_size: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<AggregationArg>,
    #[arg(long)]
    pub clip_ratio: Option<f64>,
    /// Trace JSONL; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_USAGE, error: error.into() }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: EXIT_RUNTIME, error: error.into() }
}

fn dataset_failure(e: DatasetError) -> Failure {
    match e {
        DatasetError::Io { .. } | DatasetError::Image { .. } => runtime(e),
        _ => usage(e),
    }
}

fn track_failure(e: TrackError) -> Failure {
    match e {
        TrackError::InvalidConfig(_) | TrackError::DegenerateInit(_) | TrackError::EmptyDescription => usage(e),
        TrackError::Dataset(d) => dataset_failure(d),
        _ => runtime(e),
    }
}

fn eval_failure(e: EvalError) -> Failure {
    match e {
        EvalError::Io { .. } | EvalError::Zip(_) => runtime(e),
        _ => usage(e),
    }
}

type Outcome = Result<(), Failure>;

/// Parses `std::env::args`, runs the command and returns the exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    init_logging(cli.global.log.as_deref());
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", error_chain(&f.error));
            ExitCode::from(f.code)
        }
    }
}

/// Joins the cause chain, skipping causes already spelled out by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn init_logging(filter: Option<&str>) {
    let env = env_logger::Env::default().default_filter_or(filter.unwrap_or("info"));
    let mut b = env_logger::Builder::from_env(env);
    if let Some(f) = filter {
        b.parse_filters(f);
    }
    let _ = b.target(env_logger::Target::Stderr).try_init();
}

pub fn run(cli: Cli) -> Outcome {
    let cfg = AppConfig::load(cli.global.config.as_deref(), &cli.global.overrides, |k| std::env::var(k).ok())
        .map_err(usage)?;
    match cli.command {
        Command::Dataset(a) => cmd_dataset(a, cfg),
        Command::Reward(a) => cmd_reward(a, cfg),
        Command::Track(a) => cmd_track(a, cfg),
        Command::Ground(a) => cmd_ground(a, cfg),
        Command::Eval(a) => cmd_eval(a),
        Command::GrpoDemo(a) => cmd_grpo_demo(a, cfg),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime)?;
            }
            let f = File::create(p).with_context(|| format!("creating {}", p.display())).map_err(runtime)?;
            Box::new(BufWriter::new(f))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_dataset(a: DatasetArgs, mut cfg: AppConfig) -> Outcome {
    if let Some(s) = a.seed {
        cfg.sample.seed = s;
    }
    if let Some(m) = a.mode {
        cfg.sample.mode = m.into();
    }
    if !a.root.is_dir() {
        return Err(usage(anyhow!("dataset root {} is not a directory", a.root.display())));
    }
    let opts = DatasetOptions { sft: a.sft, skip_images: a.skip_images };
    let m = generate_dataset(&a.root, a.n, &cfg.sample, &a.out, &opts).map_err(dataset_failure)?;
    info!("{} of {} records written, manifest at {}", m.written, m.requested, a.out.join("manifest.json").display());
    Ok(())
}

/// Reads a responses line: JSON string, `{"response": ..., "tokens": n}`, or raw text.
fn parse_response_line(line: &str) -> (String, Option<usize>) {
    match serde_json::from_str::<Value>(line) {
        Ok(Value::String(s)) => (s, None),
        Ok(Value::Object(o)) if o.get("response").is_some_and(Value::is_string) => (
            o["response"].as_str().unwrap_or_default().to_string(),
            o.get("tokens").and_then(Value::as_u64).map(|t| t as usize),
        ),
        _ => (line.to_string(), None),
    }
}

fn cmd_reward(a: RewardArgs, mut cfg: AppConfig) -> Outcome {
    if let Some(m) = a.mode {
        cfg.reward.mode = m.into();
    }
    let records = read_records(&a.records).map_err(dataset_failure)?;
    let text = fs::read_to_string(&a.responses)
        .with_context(|| format!("reading {}", a.responses.display()))
        .map_err(usage)?;
    let responses: Vec<&str> = text.lines().collect();
    if responses.len() != records.len() {
        return Err(usage(anyhow!(
            "{} responses for {} records",
            responses.len(),
            records.len()
        )));
    }
    let mut out = output(a.out.as_deref())?;
    for (i, (rec, line)) in records.iter().zip(responses).enumerate() {
        let (response, tokens) = parse_response_line(line);
        let gt = rec.gt();
        let b = match tokens {
            Some(t) => overall_reward_with_tokens(&response, &gt, &cfg.reward, t),
            None => overall_reward(&response, &gt, &cfg.reward),
        }
        .with_context(|| format!("record {}", i + 1))
        .map_err(usage)?;
        let line = serde_json::to_string(&b).map_err(runtime)?;
        writeln!(out, "{line}").map_err(runtime)?;
    }
    out.flush().map_err(runtime)?;
    Ok(())
}

fn cmd_track(a: TrackArgs, mut cfg: AppConfig) -> Outcome {
    if let Some(m) = a.mode {
        cfg.tracker.mode = m.into();
    }
    if let Some(r) = a.resolution {
        cfg.tracker.resolution = r;
    }
    cfg.tracker.validate().map_err(usage)?;
    if !a.dataset.is_dir() {
        return Err(usage(anyhow!("dataset {} is not a directory", a.dataset.display())));
    }
    let mut seqs = load_got10k_for_tracking(&a.dataset).map_err(dataset_failure)?;
    if let Some(n) = a.limit {
        seqs.truncate(n);
    }
    let http = match a.backend {
        BackendArg::Http => Some(HttpBackend::new(cfg.backend.clone())),
        BackendArg::Mock => None,
    };
    let tracks: Vec<PredictedTrack> = seqs
        .par_iter()
        .map(|seq| {
            let mock;
            let backend: &dyn PolicyBackend = match &http {
                Some(h) => h,
                None => {
                    if seq.boxes.len() < seq.len() {
                        return Err(usage(anyhow!(
                            "mock backend needs ground truth for every frame of {}",
                            seq.name
                        )));
                    }
                    mock = MockBackend::new(
                        seq.boxes.clone(),
                        cfg.mock.noise_px,
                        cfg.mock.format_error_rate,
                        cfg.tracker.mode,
                        cfg.mock.seed,
                    );
                    &mock
                }
            };
            let init = match &a.text {
                Some(t) => Init::Text(t.clone()),
                None => Init::Box(seq.boxes[0]),
            };
            let run = run_sequence(&seq.frames, &init, backend, &cfg.tracker)
                .map_err(track_failure)
                .map_err(|f| Failure { error: f.error.context(format!("sequence {}", seq.name)), ..f })?;
            info!("{}: {} frames, {} unusable responses", seq.name, run.boxes.len(), run.failures);
            Ok(PredictedTrack {
                name: seq.name.clone(),
                boxes: run.boxes,
                latencies: Some(run.latencies),
            })
        })
        .collect::<Result<_, _>>()?;
    let zip = write_submission(&tracks, &a.out).map_err(eval_failure)?;
    info!("submission for {} sequences written to {}", tracks.len(), zip.display());
    Ok(())
}

fn cmd_ground(a: GroundArgs, cfg: AppConfig) -> Outcome {
    let img = image::open(&a.image)
        .with_context(|| format!("reading {}", a.image.display()))
        .map_err(usage)?
        .to_rgb8();
    if a.text.trim().is_empty() {
        return Err(usage(TrackError::EmptyDescription));
    }
    let backend = HttpBackend::new(cfg.backend.clone());
    let raw = backend
        .respond(&grounding_request(&img, &a.text))
        .map_err(runtime)?;
    let b = parse_grounding(&raw).ok_or_else(|| runtime(TrackError::GroundingFailed { raw }))?;
    println!("{}", serde_json::json!({ "bbox": b.to_array(), "text": a.text }));
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    if !a.pred.is_dir() {
        return Err(usage(anyhow!("prediction directory {} not found", a.pred.display())));
    }
    let gt = load_got10k(&a.gt).map_err(usage)?;
    let preds = read_predictions(&a.pred).map_err(eval_failure)?;
    let results = join_ground_truth(&preds, &gt).map_err(eval_failure)?;
    let report = evaluate(&results).map_err(eval_failure)?;
    let mut out = output(Some(&a.report))?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(runtime)?;
    writeln!(out).and_then(|_| out.flush()).map_err(runtime)?;
    info!(
        "AO {:.4}  SR@0.5 {:.4}  SR@0.75 {:.4} over {} sequences",
        report.ao,
        report.sr_050,
        report.sr_075,
        report.per_sequence.len()
    );
    Ok(())
}

fn cmd_grpo_demo(a: GrpoArgs, mut cfg: AppConfig) -> Outcome {
    let g = &mut cfg.grpo;
    if let Some(v) = a.iters {
        g.iterations = v;
    }
    if let Some(v) = a.seed {
        g.seed = v;
    }
    if let Some(v) = a.beta {
        g.beta = v;
    }
    if let Some(v) = a.group_size {
        g.group_size = v;
    }
    if let Some(v) = a.aggregation {
        g.aggregation = match v {
            AggregationArg::Sequence => Aggregation::SequenceLevel,
            AggregationArg::Token => Aggregation::TokenLevel,
        };
    }
    if a.clip_ratio.is_some() {
        g.clip_ratio = a.clip_ratio;
    }
    g.validate().map_err(usage)?;
    let (trace, _) = toy_train(g).map_err(runtime)?;
    let mut out = output(a.out.as_deref())?;
    write_trace(&trace, &mut out).and_then(|_| out.flush()).map_err(runtime)?;
    if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
        info!("mean reward {:.4} -> {:.4}, kl {:.4}", first.mean_reward, last.mean_reward, last.kl);
    }
    Ok(())
}
