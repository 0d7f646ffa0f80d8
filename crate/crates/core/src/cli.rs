// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end.
//!
//! Settings resolve as flag, then `--config` file value, then built-in
//! default. Exit codes: 0 success, 1 runtime failure, 2 input-contract
//! violation.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{load_corpus, read_manifest, write_corpus};
use crate::detector::WindowConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate_fixed, finetune_per_participant, loocv, welch_table, welch_ttest, BaseModel};
use crate::ingest::{Aggregator, ArbitrationPolicy, AssemblerConfig, FrameFormat, DEFAULT_ERROR_BUDGET};
use crate::live::{run_reader, serve, EventRecord, LivePipeline, LiveSummary};
use crate::model::{train, Activation, ModelParams, TrainConfig};
use crate::simgen::{generate, perturb, Perturbation, ScenarioSpec};
use crate::types::ErrorEvent;

pub const LOG_ENV: &str = "AUSENTINEL_LOG";

#[derive(Debug, Parser)]
#[command(name = "ausentinel", version, about = "Detect robot errors from observer facial action units")]
pub struct Cli {
    /// JSON file with default settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus directory.
    Simulate(SimulateArgs),
    /// Train a model on a corpus directory.
    Train(TrainArgs),
    /// Run detection over frame files, stdin or a TCP listener.
    Detect(DetectArgs),
    /// Score a model or run leave-one-participant-out evaluation.
    Evaluate(EvaluateArgs),
    /// Per-AU Welch t-tests between error and no-error timesteps.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct WindowArgs {
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub merge_gap: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct IngestArgs {
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long)]
    pub fps: Option<f64>,
    /// Per-timestep reducer: mean, last or max.
    #[arg(long)]
    pub aggregator: Option<Aggregator>,
    /// Malformed records tolerated per input before failing.
    #[arg(long)]
    pub error_budget: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden activation: relu or tanh.
    #[arg(long)]
    pub activation: Option<Activation>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON scenario; defaults apply to missing fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Perturbation as kind:magnitude (novelty, occlusion, amplitude-scale).
    #[arg(long)]
    pub perturb: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory (manifest.json, annotations.csv, frames/).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Training report (per-epoch loss and sample counts).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub ingest: IngestArgs,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Frame files to process in batch; the trial id is the file stem.
    #[arg(long, conflicts_with_all = ["corpus", "listen"])]
    pub input: Vec<PathBuf>,
    /// Run over every trial of a corpus directory.
    #[arg(long, conflicts_with = "listen")]
    pub corpus: Option<PathBuf>,
    /// Serve live JSONL clients on this address instead of reading stdin.
    #[arg(long)]
    pub listen: Option<String>,
    /// Number of TCP clients (one per camera) to wait for.
    #[arg(long, default_value_t = 1)]
    pub connections: usize,
    /// Frame encoding of --input files and stdin.
    #[arg(long)]
    pub format: Option<FrameFormat>,
    /// Trial id for events from stdin or TCP.
    #[arg(long, default_value = "live")]
    pub trial_id: String,
    /// Event log path; stdout when absent.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub ingest: IngestArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Leave-one-participant-out: train one model per held-out participant.
    #[arg(long, conflicts_with = "model")]
    pub loocv: bool,
    /// Score this fixed model instead.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Tune on each participant's first annotated trial and compare base and
    /// tuned models on the rest.
    #[arg(long)]
    pub finetune_per_participant: bool,
    /// Epochs used for per-participant tuning.
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-subset summary CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub ingest: IngestArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub ingest: IngestArgs,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub window_len: Option<usize>,
    pub threshold: Option<f64>,
    pub merge_gap: Option<usize>,
    pub warmup: Option<usize>,
    pub min_confidence: Option<f64>,
    pub fps: Option<f64>,
    pub aggregator: Option<Aggregator>,
    pub error_budget: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub activation: Option<Activation>,
    pub finetune_epochs: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings shared by the subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub window: WindowConfig,
    pub policy: ArbitrationPolicy,
    /// False when neither flag nor file touched the policy, so a corpus's
    /// own frame rate applies.
    pub policy_overridden: bool,
    pub error_budget: usize,
    pub train: TrainConfig,
    pub finetune: TrainConfig,
}

/// Default tuning length for per-participant fine-tuning.
pub const FINETUNE_EPOCHS: usize = 200;

impl RunConfig {
    pub fn resolve(
        file: &FileConfig,
        window: Option<&WindowArgs>,
        ingest: Option<&IngestArgs>,
        training: Option<&TrainingArgs>,
        finetune_epochs: Option<usize>,
    ) -> Result<Self> {
        let w = window.cloned().unwrap_or_default();
        let i = ingest.cloned().unwrap_or_default();
        let t = training.cloned().unwrap_or_default();

        let wd = WindowConfig::default();
        let window = WindowConfig {
            window_len: w.window_len.or(file.window_len).unwrap_or(wd.window_len),
            threshold: w.threshold.or(file.threshold).unwrap_or(wd.threshold),
            merge_gap: w.merge_gap.or(file.merge_gap).unwrap_or(wd.merge_gap),
            warmup: w.warmup.or(file.warmup).unwrap_or(wd.warmup),
        };
        window.validate()?;

        let fps = i.fps.or(file.fps);
        let min_conf = i.min_confidence.or(file.min_confidence);
        let aggregator = i.aggregator.or(file.aggregator);
        let policy_overridden = fps.is_some() || min_conf.is_some() || aggregator.is_some();
        let mut policy = ArbitrationPolicy::for_fps(fps.unwrap_or(30.0))?;
        if let Some(c) = min_conf {
            policy.min_confidence = c;
        }
        if let Some(a) = aggregator {
            policy.aggregator = a;
        }
        policy.validate()?;

        let td = TrainConfig::default();
        let train = TrainConfig {
            epochs: t.epochs.or(file.epochs).unwrap_or(td.epochs),
            learning_rate: t.learning_rate.or(file.learning_rate).unwrap_or(td.learning_rate),
            seed: t.seed.or(file.seed).unwrap_or(td.seed),
            activation: t.activation.or(file.activation).unwrap_or(td.activation),
        };
        let finetune = TrainConfig {
            epochs: finetune_epochs.or(file.finetune_epochs).unwrap_or(FINETUNE_EPOCHS),
            ..train
        };
        Ok(RunConfig {
            window,
            policy,
            policy_overridden,
            error_budget: i.error_budget.or(file.error_budget).unwrap_or(DEFAULT_ERROR_BUDGET),
            train,
            finetune,
        })
    }

    fn corpus_policy(&self) -> Option<ArbitrationPolicy> {
        self.policy_overridden.then_some(self.policy)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            serde_json::from_str::<ScenarioSpec>(&text)
                .map_err(|e| Error::Spec(format!("{}: {e}", path.display())))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let mut corpus = generate(&spec)?;
    for p in &args.perturb {
        let (kind, magnitude) = p
            .split_once(':')
            .ok_or_else(|| Error::InvalidInput(format!("perturbation {p:?} is not kind:magnitude")))?;
        let magnitude: f64 = magnitude
            .parse()
            .map_err(|_| Error::InvalidInput(format!("perturbation magnitude {magnitude:?} is not a number")))?;
        corpus = perturb(&corpus, &Perturbation::from_kind(kind, magnitude)?)?;
    }
    let manifest = write_corpus(&args.out, &corpus)?;
    eprintln!(
        "wrote {} trials ({} participants) to {}",
        manifest.trials.len(),
        spec.participants,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_train(args: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&args.corpus, cfg.corpus_policy(), cfg.error_budget)?;
    let (params, report) = train(&corpus, &cfg.train)?;
    drop(create(&args.model)?);
    params.save(&args.model)?;
    if let Some(path) = &args.report {
        write_json_file(path, &report)?;
    }
    let last = report.epochs.last();
    eprintln!(
        "trained on {} error / {} no-error timesteps, {} epochs, final loss {:.6}",
        report.error_timesteps,
        report.no_error_timesteps,
        report.epochs.len(),
        last.map_or(f64::NAN, |e| e.loss)
    );
    Ok(())
}

fn event_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(out: &mut dyn Write, trial_id: &str, e: &ErrorEvent) -> Result<()> {
    serde_json::to_writer(&mut *out, &EventRecord::new(trial_id, e))?;
    out.write_all(b"\n")?;
    // events go out as they fire
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DetectSummary<'a> {
    trial_id: &'a str,
    #[serde(flatten)]
    summary: LiveSummary,
}

fn report_summary(trial_id: &str, summary: LiveSummary) -> Result<()> {
    let line = serde_json::to_string(&DetectSummary { trial_id, summary })?;
    eprintln!("{line}");
    Ok(())
}

pub fn cmd_detect(args: &DetectArgs, cfg: &RunConfig) -> Result<()> {
    let params = ModelParams::load(&args.model)?;
    let mut out = event_writer(args.events.as_deref())?;
    let asm = AssemblerConfig::new(cfg.policy);
    let format = args.format.unwrap_or(FrameFormat::Jsonl);

    if let Some(dir) = &args.corpus {
        let manifest = read_manifest(dir)?;
        let policy = match cfg.corpus_policy() {
            Some(p) => p,
            None => ArbitrationPolicy::for_fps(manifest.fps)?,
        };
        for trial in &manifest.trials {
            let path = dir.join(&trial.frames);
            let pipe = LivePipeline::new(params.clone(), cfg.window, AssemblerConfig::new(policy))?;
            let reader = BufReader::new(File::open(&path)?);
            let summary = run_reader(reader, FrameFormat::Jsonl, cfg.error_budget, pipe, |e| {
                emit(&mut *out, &trial.trial_id, e)
            })
            .map_err(|e| annotate_path(e, &path))?;
            report_summary(&trial.trial_id, summary)?;
        }
        return Ok(());
    }

    if !args.input.is_empty() {
        for path in &args.input {
            let trial_id = path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            let pipe = LivePipeline::new(params.clone(), cfg.window, asm)?;
            let reader = BufReader::new(File::open(path)?);
            let summary = run_reader(reader, format, cfg.error_budget, pipe, |e| emit(&mut *out, &trial_id, e))
                .map_err(|e| annotate_path(e, path))?;
            report_summary(&trial_id, summary)?;
        }
        return Ok(());
    }

    let pipe = LivePipeline::new(params, cfg.window, asm)?;
    let trial_id = args.trial_id.as_str();
    let summary = match &args.listen {
        Some(addr) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            serve(listener, args.connections, cfg.error_budget, pipe, |e| emit(&mut *out, trial_id, e))?
        }
        None => {
            let stdin = io::stdin().lock();
            run_reader(stdin, format, cfg.error_budget, pipe, |e| emit(&mut *out, trial_id, e))?
        }
    };
    report_summary(trial_id, summary)
}

fn annotate_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Format { line, message } => Error::Format {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&args.corpus, cfg.corpus_policy(), cfg.error_budget)?;
    let fixed = args.model.as_ref().map(ModelParams::load).transpose()?;
    if !args.loocv && fixed.is_none() {
        return Err(Error::InvalidInput("evaluate needs --loocv or --model".into()));
    }
    let mut stdout = io::stdout().lock();
    if args.finetune_per_participant {
        let base = match &fixed {
            Some(p) => BaseModel::Fixed(p),
            None => BaseModel::Loocv(&cfg.train),
        };
        let report = finetune_per_participant(&corpus, base, &cfg.finetune, &cfg.window)?;
        writeln!(stdout, "base model")?;
        write!(stdout, "{}", report.base.score.table())?;
        writeln!(stdout, "fine-tuned per participant")?;
        write!(stdout, "{}", report.tuned.score.table())?;
        if let Some(path) = &args.report {
            write_json_file(path, &report)?;
        }
        if let Some(path) = &args.csv {
            let mut w = create(path)?;
            w.write_all(report.tuned.score.to_csv().as_bytes())?;
            w.flush()?;
        }
        return Ok(());
    }
    let report = match &fixed {
        Some(p) => evaluate_fixed(&corpus, p, &cfg.window)?,
        None => loocv(&corpus, &cfg.train, &cfg.window)?,
    };
    write!(stdout, "{}", report.score.table())?;
    if let Some(path) = &args.report {
        write_json_file(path, &report)?;
    }
    if let Some(path) = &args.csv {
        let mut w = create(path)?;
        w.write_all(report.score.to_csv().as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

pub fn cmd_analyze(args: &AnalyzeArgs, cfg: &RunConfig) -> Result<()> {
    let corpus = load_corpus(&args.corpus, cfg.corpus_policy(), cfg.error_budget)?;
    let rows = welch_ttest(&corpus)?;
    print!("{}", welch_table(&rows));
    if let Some(path) = &args.report {
        write_json_file(path, &rows)?;
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => {
            let cfg = RunConfig::resolve(&file, None, Some(&a.ingest), Some(&a.training), None)?;
            cmd_train(a, &cfg)
        }
        Command::Detect(a) => {
            let cfg = RunConfig::resolve(&file, Some(&a.window), Some(&a.ingest), None, None)?;
            cmd_detect(a, &cfg)
        }
        Command::Evaluate(a) => {
            let cfg = RunConfig::resolve(
                &file,
                Some(&a.window),
                Some(&a.ingest),
                Some(&a.training),
                a.finetune_epochs,
            )?;
            cmd_evaluate(a, &cfg)
        }
        Command::Analyze(a) => {
            let cfg = RunConfig::resolve(&file, None, Some(&a.ingest), None, None)?;
            cmd_analyze(a, &cfg)
        }
    }
}

fn init_logging() {
    let env = env_logger::Env::new().filter_or(LOG_ENV, "warn");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            log::debug!("{e:?}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
