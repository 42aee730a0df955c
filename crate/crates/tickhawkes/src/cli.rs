//! Command-line definitions and handlers.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use tickhawkes_core::ingest::{filter_events, synthesize_quotes, window_segments, IngestConfig, TickSeries};
use tickhawkes_core::mle::{fit_mle, Init};
use tickhawkes_core::nn::{
    self, empirical_dataset, mix_datasets, AdamConfig, Architecture, EpochStats, FeatureEncoding, TrainConfig,
    TrainLog,
};
use tickhawkes_core::simulate::{
    default_param_sampler, simulate, FixedSampler, MarkDist, MarkLaw, SimConfig, StopRule,
};
use tickhawkes_core::volatility::{
    estimate_mark_moments, hawkes_volatility, realized_volatility, sample_on_grid, VolConfig,
    TRADING_SECONDS_PER_YEAR,
};
use tickhawkes_core::{EventSequence, HawkesParams, MarkMoments};

use crate::config::{config_path, load_config, merge_config};
use crate::error::{Error, Result};
use crate::formats::{self, quotes::stdin_label, FitFile, QuoteStream};
use crate::manifest::{dataset_fingerprints, RunManifest, TRAINING_FINGERPRINTS, VERSION};
use crate::parallel::{fit_many, make_dataset_parallel, Parallel};
use crate::stream::{self, Estimator, StreamConfig, StreamRow};
use crate::study::{self, InitChoice, Method, StudyConfig, PARAM_NAMES};

/// Parameters written as `mu,alpha1,alpha2,beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamList(pub [f64; 4]);

impl ParamList {
    pub fn params(&self) -> HawkesParams {
        HawkesParams::from_array(self.0)
    }
}

impl FromStr for ParamList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(format!("expected mu,alpha1,alpha2,beta; got {s:?}"));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
        }
        Ok(ParamList(v))
    }
}

/// Mark law on the command line: `unit` or `geometric:P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarkSpec(#[serde(serialize_with = "mark_spec_str")] pub MarkDist);

fn mark_spec_str<S: serde::Serializer>(d: &MarkDist, s: S) -> std::result::Result<S::Ok, S::Error> {
    match d {
        MarkDist::Unit => s.serialize_str("unit"),
        MarkDist::Geometric { p } => s.serialize_str(&format!("geometric:{p}")),
    }
}

impl FromStr for MarkSpec {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().split_once(':') {
            None if s.trim() == "unit" => Ok(MarkSpec(MarkDist::Unit)),
            Some(("geometric", p)) => {
                let p: f64 = p.parse().map_err(|_| format!("not a probability: {p:?}"))?;
                Ok(MarkSpec(MarkDist::Geometric { p }))
            }
            _ => Err(format!("expected unit or geometric:P, got {s:?}")),
        }
    }
}

/// Seconds, optionally suffixed with `s` or `ms`.
pub fn parse_seconds(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let (num, scale) = if let Some(n) = t.strip_suffix("ms") {
        (n, 1e-3)
    } else if let Some(n) = t.strip_suffix('s') {
        (n, 1.0)
    } else {
        (t, 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| format!("not a duration: {s:?}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v * scale)
    } else {
        Err(format!("duration must be positive: {s:?}"))
    }
}

/// Comma-separated estimation methods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodList(pub Vec<Method>);

impl FromStr for MethodList {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',').map(Method::from_str).collect::<std::result::Result<_, _>>().map(MethodList)
    }
}

#[derive(Debug, Parser)]
#[command(name = "tickhawkes", version = VERSION, about = "Hawkes-process estimation and volatility for tick data")]
#[command(args_override_self = true)]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// `key = value` file of flag defaults; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path and write its events (and optionally quotes).
    Simulate(SimulateArgs),
    /// Generate a labeled training dataset.
    MakeDataset(MakeDatasetArgs),
    /// Train the recurrent estimator on a dataset.
    Train(TrainArgs),
    /// Train on MLE-labelled windows of observed event files.
    TrainEmpirical(TrainEmpiricalArgs),
    /// Estimate parameters of one event file.
    Estimate(EstimateArgs),
    /// Hawkes volatility of a fitted model.
    Vol(VolArgs),
    /// Realized volatility of a price file.
    Rv(RvArgs),
    /// Filter quotes into events.
    Ingest(IngestArgs),
    /// Sampling distribution of the estimators at fixed parameters.
    Study(StudyArgs),
    /// MSE and time of both estimators on a held-out dataset.
    Compare(CompareArgs),
    /// Sliding-window estimation over a quote stream.
    Stream(StreamArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// mu,alpha1,alpha2,beta
    #[arg(long)]
    pub params: ParamList,
    /// Simulate on [0, T] seconds.
    #[arg(long, conflicts_with = "events", required_unless_present = "events")]
    pub horizon: Option<f64>,
    /// Simulate exactly this many events.
    #[arg(long)]
    pub events: Option<usize>,
    /// unit or geometric:P
    #[arg(long, default_value = "unit")]
    pub marks: MarkSpec,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a quote file whose filtered events reproduce the path.
    #[arg(long)]
    pub quotes_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100.0)]
    pub opening_mid: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeDatasetArgs {
    #[arg(long)]
    pub n_paths: usize,
    /// Events per path.
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    /// Fixed parameters for every path instead of the default sampler.
    #[arg(long)]
    pub params: Option<ParamList>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a long-format CSV copy.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainingFlags {
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub adam_beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub adam_beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,
    #[arg(long, default_value_t = 12)]
    pub hidden1: usize,
    #[arg(long, default_value_t = 12)]
    pub hidden2: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    /// Per-epoch losses as CSV.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Do not print per-epoch progress.
    #[arg(long)]
    pub quiet: bool,
}

impl TrainingFlags {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_epsilon,
            },
            seed,
            validation_fraction: self.validation_fraction,
            architecture: Architecture { hidden1: self.hidden1, hidden2: self.hidden2 },
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainEmpiricalArgs {
    /// Event files; each is cut into windows of `length` events.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    /// Events between window starts; defaults to `length` (no overlap).
    #[arg(long)]
    pub stride: Option<usize>,
    /// Simulated dataset to mix in.
    #[arg(long)]
    pub simulated: Option<PathBuf>,
    /// Share of the training set made of empirical windows.
    #[arg(long, default_value_t = 1.0)]
    pub empirical_share: f64,
    #[arg(long, default_value_t = 20)]
    pub min_segments: usize,
    #[command(flatten)]
    pub training: TrainingFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long, default_value = "mle")]
    pub method: Method,
    /// Event CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// MLE starting point mu,alpha1,alpha2,beta; automatic when absent.
    #[arg(long)]
    pub init: Option<ParamList>,
    /// Network file, required for `--method nn`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct VolArgs {
    /// fit.json from `estimate`.
    #[arg(long)]
    pub params: PathBuf,
    /// Event CSV to estimate mark moments from; unit marks when absent.
    #[arg(long)]
    pub marks: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
    /// Seconds over which the standard deviation accrues.
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// Include the annualized value.
    #[arg(long)]
    pub annualize: bool,
    /// Seconds per trading year.
    #[arg(long, default_value_t = TRADING_SECONDS_PER_YEAR)]
    pub annualization: f64,
    /// JSON output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RvArgs {
    #[arg(long)]
    pub prices: PathBuf,
    /// Sampling step, e.g. `1s` or `500ms`.
    #[arg(long, default_value = "1s", value_parser = parse_seconds)]
    pub grid: f64,
    /// Window start; first timestamp when absent.
    #[arg(long)]
    pub start: Option<f64>,
    /// Window end; last timestamp when absent.
    #[arg(long)]
    pub end: Option<f64>,
    #[arg(long, default_value_t = TRADING_SECONDS_PER_YEAR)]
    pub annualization: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub quotes: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long, default_value = "0.3,0.4,0.7,1.5")]
    pub params: ParamList,
    #[arg(long, default_value_t = 500)]
    pub n_paths: usize,
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    /// Comma-separated subset of mle,nn.
    #[arg(long, default_value = "mle")]
    pub methods: MethodList,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InitChoice::Truth)]
    pub init: InitChoice,
    /// JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-path estimates as CSV.
    #[arg(long)]
    pub estimates_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Held-out dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = InitChoice::Auto)]
    pub init: InitChoice,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StreamArgs {
    /// Quote CSV, or `-` for standard input.
    #[arg(long)]
    pub quotes: PathBuf,
    #[arg(long, default_value = "nn")]
    pub method: Method,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Events per window.
    #[arg(long, default_value_t = 2000)]
    pub length: usize,
    /// Events between windows; defaults to length / 10.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
    /// Add realized volatility sampled on this grid, e.g. `1s`.
    #[arg(long, value_parser = parse_seconds)]
    pub rv_grid: Option<f64>,
    #[arg(long, default_value_t = TRADING_SECONDS_PER_YEAR)]
    pub annualization: f64,
    /// Windows estimated concurrently; output order is unchanged.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Shared state of one invocation.
struct Context {
    seed: u64,
    threads: usize,
    out_dir: Option<PathBuf>,
    started: Instant,
}

impl Context {
    fn output(&self, p: &Path) -> Result<PathBuf> {
        let path = match &self.out_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        };
        if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(path)
    }

    fn manifest(&self, command: &str, args: &impl Serialize) -> RunManifest {
        let config = serde_json::to_value(args).expect("arguments serialize");
        RunManifest::new(command, self.seed, self.threads, config)
    }

    fn finish(&self, mut m: RunManifest, primary: &Path) -> Result<()> {
        m.timings.insert("total".into(), self.started.elapsed().as_secs_f64());
        m.write_beside(primary)?;
        Ok(())
    }
}

fn warn(msg: impl AsRef<str>) {
    eprintln!("warning: {}", msg.as_ref());
}

/// Parses arguments (merging `--config`), then runs the command.
pub fn main_with_args(args: Vec<OsString>) -> Result<()> {
    let args = match config_path(&args) {
        Some(path) => {
            let path = PathBuf::from(path);
            let entries = load_config(&path)?;
            let (merged, unknown) = merge_config(&Cli::command(), args, &entries, &path)?;
            for e in unknown {
                warn(format!("{}: line {}: unknown key {:?} ignored", path.display(), e.line, e.key));
            }
            merged
        }
        None => args,
    };
    let matches = Cli::command().try_get_matches_from(args).unwrap_or_else(|e| e.exit());
    let cli = Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit());
    run(cli)
}

pub fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let ctx = Context {
        seed: cli.seed,
        threads: rayon::current_num_threads(),
        out_dir: cli.out_dir,
        started: Instant::now(),
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::MakeDataset(a) => cmd_make_dataset(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::TrainEmpirical(a) => cmd_train_empirical(&ctx, a),
        Command::Estimate(a) => cmd_estimate(&ctx, a),
        Command::Vol(a) => cmd_vol(&ctx, a),
        Command::Rv(a) => cmd_rv(&ctx, a),
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Study(a) => cmd_study(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Stream(a) => cmd_stream(&ctx, a),
    }
}

fn cmd_simulate(ctx: &Context, a: &SimulateArgs) -> Result<()> {
    let stop = match (a.horizon, a.events) {
        (Some(t), _) => StopRule::Horizon(t),
        (None, Some(n)) => StopRule::EventCount(n),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let cfg = SimConfig::new(a.params.params(), stop, ctx.seed).with_marks(MarkLaw::symmetric(a.marks.0));
    let seq = simulate(&cfg)?;
    let out = ctx.output(&a.out)?;
    formats::write_events(&out, &seq)?;
    let mut m = ctx.manifest("simulate", a);
    m.outputs.push(out.clone());
    if let Some(q) = &a.quotes_out {
        let q = ctx.output(q)?;
        let ticks = synthesize_quotes(&seq, a.opening_mid, a.tick_size)?;
        formats::write_quotes(&q, &ticks)?;
        m.outputs.push(q);
    }
    m.extra.insert("events".into(), json!(seq.len()));
    m.extra.insert("horizon".into(), json!(seq.horizon()));
    ctx.finish(m, &out)
}

fn cmd_make_dataset(ctx: &Context, a: &MakeDatasetArgs) -> Result<()> {
    let clock = Instant::now();
    let ds = match a.params {
        Some(p) => {
            p.params().check()?;
            make_dataset_parallel(a.n_paths, a.length, &FixedSampler(p.params()), ctx.seed)?
        }
        None => make_dataset_parallel(a.n_paths, a.length, &default_param_sampler(), ctx.seed)?,
    };
    let simulate_secs = clock.elapsed().as_secs_f64();
    let out = ctx.output(&a.out)?;
    formats::save_dataset(&out, &ds)?;
    let mut m = ctx.manifest("make-dataset", a);
    m.outputs.push(out.clone());
    if let Some(csv) = &a.csv {
        let csv = ctx.output(csv)?;
        let file = File::create(&csv).map_err(|e| Error::io(&csv, e))?;
        formats::export_dataset_csv(BufWriter::new(file), &ds).map_err(|e| Error::io(&csv, e))?;
        m.outputs.push(csv);
    }
    m.timings.insert("simulate".into(), simulate_secs);
    ctx.finish(m, &out)
}

fn write_train_log(path: &Path, log: &TrainLog) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch,train_mse,validation_mse,seconds").map_err(io)?;
    for e in &log.epochs {
        writeln!(w, "{},{},{},{}", e.epoch, e.train_mse, e.validation_mse, e.seconds).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn progress(quiet: bool) -> impl FnMut(&EpochStats) {
    move |s: &EpochStats| {
        if !quiet {
            eprintln!(
                "epoch {:>4}  train {:.6}  validation {:.6}  ({:.1}s)",
                s.epoch, s.train_mse, s.validation_mse, s.seconds
            );
        }
    }
}

/// Saves the model, its optional loss log and a manifest that records which
/// paths it has seen.
fn save_trained(
    ctx: &Context,
    mut m: RunManifest,
    model: &nn::LstmEstimator,
    log: &TrainLog,
    ds: &tickhawkes_core::simulate::LabeledDataset,
    flags: &TrainingFlags,
    out: &Path,
) -> Result<()> {
    let out = ctx.output(out)?;
    formats::save_model(&out, model)?;
    m.outputs.push(out.clone());
    if let Some(p) = &flags.log {
        let p = ctx.output(p)?;
        write_train_log(&p, log)?;
        m.outputs.push(p);
    }
    let last = log.epochs.last().expect("at least one epoch");
    m.extra.insert("final_train_mse".into(), json!(last.train_mse));
    m.extra.insert("final_validation_mse".into(), json!(last.validation_mse));
    m.extra.insert("paths".into(), json!(ds.n_paths()));
    m.extra.insert(TRAINING_FINGERPRINTS.into(), json!(dataset_fingerprints(ds, 0..ds.n_paths())));
    m.timings.insert("train".into(), log.epochs.iter().map(|e| e.seconds).sum());
    ctx.finish(m, &out)
}

fn cmd_train(ctx: &Context, a: &TrainArgs) -> Result<()> {
    let dataset = formats::load_dataset(&a.dataset)?;
    let cfg = a.training.config(ctx.seed);
    let (model, log) = nn::train_with(&dataset, &cfg, &Parallel, &mut progress(a.training.quiet))?;
    let mut m = ctx.manifest("train", a);
    m.inputs.push(a.dataset.clone());
    save_trained(ctx, m, &model, &log, &dataset, &a.training, &a.out)
}

fn cmd_train_empirical(ctx: &Context, a: &TrainEmpiricalArgs) -> Result<()> {
    let stride = a.stride.unwrap_or(a.length);
    let mut segments = Vec::new();
    for path in &a.input {
        let loaded = formats::read_events(path)?;
        if loaded.ties_moved > 0 {
            warn(format!("{}: {} tied timestamps moved forward by 1 ns", path.display(), loaded.ties_moved));
        }
        segments.extend(window_segments(&loaded.events, a.length, stride)?.into_iter().map(|w| w.events));
    }
    let simulated = a.simulated.as_deref().map(formats::load_dataset).transpose()?;
    let cfg = a.training.config(ctx.seed);
    let clock = Instant::now();
    let (ds, summary) = if a.empirical_share == 0.0 {
        let sim = simulated.ok_or_else(|| Error::Input("--empirical-share 0 needs --simulated".into()))?;
        let n = sim.n_paths();
        (sim, nn::EmpiricalSummary { simulated: n, ..Default::default() })
    } else {
        let fits = fit_many(segments.par_iter(), |_| Init::Auto);
        let (emp, mut summary) = empirical_dataset(&segments, &fits, a.min_segments)?;
        let ds = mix_datasets(&emp, simulated.as_ref(), a.empirical_share)?;
        summary.simulated = ds.n_paths() - emp.n_paths();
        (ds, summary)
    };
    let fit_secs = clock.elapsed().as_secs_f64();
    if summary.skipped > 0 {
        warn(format!("{} windows skipped because their MLE did not converge", summary.skipped));
    }
    let (model, log) = nn::train_with(&ds, &cfg, &Parallel, &mut progress(a.training.quiet))?;
    let mut m = ctx.manifest("train-empirical", a);
    m.inputs.extend(a.input.iter().cloned());
    m.inputs.extend(a.simulated.iter().cloned());
    m.extra.insert(
        "segments".into(),
        json!({"windows": segments.len(), "used": summary.used, "skipped": summary.skipped, "simulated": summary.simulated}),
    );
    m.timings.insert("mle_labels".into(), fit_secs);
    save_trained(ctx, m, &model, &log, &ds, &a.training, &a.out)
}

fn load_events_with_warning(path: &Path) -> Result<EventSequence> {
    let loaded = formats::read_events(path)?;
    if loaded.ties_moved > 0 {
        warn(format!("{}: {} tied timestamps moved forward by 1 ns", path.display(), loaded.ties_moved));
    }
    Ok(loaded.events)
}

fn cmd_estimate(ctx: &Context, a: &EstimateArgs) -> Result<()> {
    let seq = load_events_with_warning(&a.input)?;
    let mut m = ctx.manifest("estimate", a);
    m.inputs.push(a.input.clone());
    let file = match a.method {
        Method::Mle => {
            let init = a.init.map_or(Init::Auto, |p| Init::Given(p.params()));
            let fit = fit_mle(&seq, init)?;
            if !fit.converged {
                warn(format!("MLE stopped after {} iterations without converging", fit.iterations));
            }
            FitFile::from_mle(&fit)
        }
        Method::Nn => {
            let path = a.model.as_ref().ok_or_else(|| Error::Input("--method nn needs --model".into()))?;
            let model = formats::load_model(path)?;
            m.inputs.push(path.clone());
            if seq.is_empty() {
                return Err(Error::Input(format!("{}: no events", a.input.display())));
            }
            let enc = FeatureEncoding::from_sequence(&seq);
            let pred = model.predict_batch(&[enc.view()]);
            FitFile::from_params("nn", &pred.params[0], pred.wall_time)
        }
    };
    let out = ctx.output(&a.out)?;
    formats::write_fit(&out, &file)?;
    m.outputs.push(out.clone());
    ctx.finish(m, &out)
}

/// Writes JSON to `out` (with a manifest) or standard output.
fn emit_json(ctx: &Context, value: &serde_json::Value, out: Option<&Path>, m: RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("json serializes") + "\n";
    match out {
        Some(p) => {
            let p = ctx.output(p)?;
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            let mut m = m;
            m.outputs.push(p.clone());
            ctx.finish(m, &p)
        }
        None => io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}

fn cmd_vol(ctx: &Context, a: &VolArgs) -> Result<()> {
    let params = formats::read_fit(&a.params)?.params(&a.params)?;
    let mut m = ctx.manifest("vol", a);
    m.inputs.push(a.params.clone());
    let marks = match &a.marks {
        Some(p) => {
            m.inputs.push(p.clone());
            estimate_mark_moments(&load_events_with_warning(p)?)?
        }
        None => MarkMoments::unit(),
    };
    let cfg = VolConfig { tick_size: a.tick_size, horizon_t: a.horizon, annualization: a.annualization };
    let v = hawkes_volatility(&params, &marks, &cfg)?;
    let mut out = json!({
        "hawkes_vol_per_sec_sqrt": v.per_sec_sqrt,
        "variance_rate_ticks": v.variance_rate,
        "sd_ticks": v.sd_ticks,
        "sd_price": v.sd_price,
        "horizon": a.horizon,
        "tick_size": a.tick_size,
        "mark_moments": {"z1_mean": marks.z1_mean, "z2_mean": marks.z2_mean, "z1_sq": marks.z1_sq, "z2_sq": marks.z2_sq},
    });
    if a.annualize {
        out["hawkes_vol_annualized"] = json!(v.annualized);
        out["annualization"] = json!(a.annualization);
    }
    emit_json(ctx, &out, a.out.as_deref(), m)
}

fn cmd_rv(ctx: &Context, a: &RvArgs) -> Result<()> {
    let (times, prices) = formats::read_prices(&a.prices)?;
    if times.is_empty() {
        return Err(Error::Input(format!("{}: no prices", a.prices.display())));
    }
    let start = a.start.unwrap_or(times[0]).max(times[0]);
    let end = a.end.unwrap_or(*times.last().unwrap());
    if !(end > start) {
        return Err(Error::Input(format!("window end {end} must come after start {start}")));
    }
    let grid = sample_on_grid(&times, &prices, start, end, a.grid);
    let cfg = VolConfig { tick_size: 1.0, horizon_t: end - start, annualization: a.annualization };
    let rv = realized_volatility(&grid, &cfg)?;
    let mut m = ctx.manifest("rv", a);
    m.inputs.push(a.prices.clone());
    let out = json!({
        "realized_vol": rv.realized,
        "realized_vol_annualized": rv.annualized,
        "returns": rv.returns,
        "start": start,
        "end": end,
        "grid": a.grid,
    });
    emit_json(ctx, &out, a.out.as_deref(), m)
}

/// Reads quotes leniently: bad records become warnings.
fn read_quotes_lenient(path: &Path) -> Result<(TickSeries, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stream = QuoteStream::new(BufReader::new(file), path)?;
    let mut records = Vec::new();
    let mut skipped = 0;
    while let Some(r) = stream.next_record() {
        match r {
            Ok(q) => records.push(q),
            Err(s) => {
                skipped += 1;
                warn(format!("{}: line {}: skipped: {}", path.display(), s.line, s.reason));
            }
        }
    }
    Ok((TickSeries::new(records)?, skipped))
}

fn cmd_ingest(ctx: &Context, a: &IngestArgs) -> Result<()> {
    let (ticks, skipped) = read_quotes_lenient(&a.quotes)?;
    let cfg = IngestConfig { dt: a.dt, tick_size: a.tick_size };
    let filtered = filter_events(&ticks, &cfg)?;
    let mut counts = [0usize; 3];
    for w in &filtered.warnings {
        use tickhawkes_core::ingest::FilterWarning::*;
        match w {
            MarkRounding { time, ticks } => {
                counts[0] += 1;
                warn(format!("t={time:.9}: move of {ticks} ticks is not close to a whole tick; check --tick-size"));
            }
            SubTickMove { time, ticks } => {
                counts[1] += 1;
                warn(format!("t={time:.9}: sub-tick move ({ticks} ticks) recorded as mark 1"));
            }
            TiePerturbed { .. } => counts[2] += 1,
        }
    }
    if counts[2] > 0 {
        warn(format!("{} tied event times moved forward by 1 ns", counts[2]));
    }
    let seq = filtered.events;
    let span = ticks.records().last().unwrap().timestamp - ticks.records()[0].timestamp;
    let rate = if span > 0.0 { seq.len() as f64 / span } else { 0.0 };
    eprintln!("{} events from {} quotes ({rate:.3} events/s)", seq.len(), ticks.len());
    let out = ctx.output(&a.out)?;
    formats::write_events(&out, &seq)?;
    let mut m = ctx.manifest("ingest", a);
    m.inputs.push(a.quotes.clone());
    m.outputs.push(out.clone());
    m.extra.insert(
        "summary".into(),
        json!({"quotes": ticks.len(), "skipped": skipped, "events": seq.len(), "events_per_second": rate,
               "mark_rounding_warnings": counts[0], "sub_tick_warnings": counts[1], "ties_moved": counts[2]}),
    );
    ctx.finish(m, &out)
}

fn cmd_study(ctx: &Context, a: &StudyArgs) -> Result<()> {
    let model = a.model.as_deref().map(formats::load_model).transpose()?;
    let cfg = StudyConfig {
        params: a.params.params(),
        n_paths: a.n_paths,
        length: a.length,
        methods: a.methods.0.clone(),
        init: a.init,
        seed: ctx.seed,
    };
    let (report, estimates) = study::run_study(&cfg, model.as_ref())?;
    for s in &report.methods {
        if s.failed > 0 {
            warn(format!("{} of {} MLE fits failed or did not converge and were excluded", s.failed, a.n_paths));
        }
    }
    let mut m = ctx.manifest("study", a);
    m.inputs.extend(a.model.iter().cloned());
    if let Some(p) = &a.estimates_out {
        let p = ctx.output(p)?;
        write_estimates(&p, &estimates)?;
        m.outputs.push(p);
    }
    let out = ctx.output(&a.out)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    fs::write(&out, text).map_err(|e| Error::io(&out, e))?;
    m.outputs.push(out.clone());
    ctx.finish(m, &out)
}

fn write_estimates(path: &Path, all: &[study::StudyEstimates]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "method,path,{}", PARAM_NAMES.join(",")).map_err(io)?;
    for s in all {
        let name = match s.method {
            Method::Mle => "mle",
            Method::Nn => "nn",
        };
        for (i, e) in s.estimates.iter().enumerate() {
            match e {
                Some(p) => writeln!(w, "{name},{i},{},{},{},{}", p.mu, p.alpha1, p.alpha2, p.beta),
                None => writeln!(w, "{name},{i},,,,"),
            }
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn cmd_compare(ctx: &Context, a: &CompareArgs) -> Result<()> {
    let test = formats::load_dataset(&a.dataset)?;
    let model = formats::load_model(&a.model)?;
    let train_manifest = RunManifest::path_for(&a.model);
    match RunManifest::read(&train_manifest).ok().and_then(|m| m.training_fingerprints()) {
        Some(fp) => study::check_overlap(&test, &fp)?,
        None => warn(format!(
            "{}: no training manifest with path fingerprints; overlap not checked",
            train_manifest.display()
        )),
    }
    let report = study::compare(&test, &model, a.init)?;
    if report.mle.failed > 0 {
        warn(format!("{} paths excluded because their MLE did not converge", report.mle.failed));
    }
    let table = json!({
        "columns": ["NN", "MLE"],
        "MSE": [report.nn.mse_aggregate, report.mle.mse_aggregate],
        "Time (sec)": [report.nn.time_per_path, report.mle.time_per_path],
    });
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["table"] = table;
    let mut m = ctx.manifest("compare", a);
    m.inputs.extend([a.dataset.clone(), a.model.clone()]);
    let out = ctx.output(&a.out)?;
    fs::write(&out, serde_json::to_string_pretty(&value).expect("json") + "\n").map_err(|e| Error::io(&out, e))?;
    m.outputs.push(out.clone());
    ctx.finish(m, &out)
}

fn cmd_stream(ctx: &Context, a: &StreamArgs) -> Result<()> {
    let estimator = match a.method {
        Method::Mle => Estimator::Mle,
        Method::Nn => {
            let path = a.model.as_ref().ok_or_else(|| Error::Input("--method nn needs --model".into()))?;
            Estimator::Nn(formats::load_model(path)?)
        }
    };
    let cfg = StreamConfig {
        length: a.length,
        stride: a.stride.unwrap_or((a.length / 10).max(1)),
        ingest: IngestConfig { dt: a.dt, tick_size: a.tick_size },
        rv_grid: a.rv_grid,
        annualization: a.annualization,
        workers: a.workers,
    };
    let out_path = a.out.as_deref().map(|p| ctx.output(p)).transpose()?;
    let sink: Box<dyn Write> = match &out_path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let sink_label = out_path.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let mut writer = RowWriter { sink, label: sink_label, header_done: false };

    let (source, label): (Box<dyn Read>, PathBuf) = if a.quotes.as_os_str() == "-" {
        (Box::new(io::stdin().lock()), stdin_label())
    } else {
        let f = File::open(&a.quotes).map_err(|e| Error::io(&a.quotes, e))?;
        (Box::new(BufReader::new(f)), a.quotes.clone())
    };
    let stats = stream::run_stream(source, &label, &estimator, &cfg, &mut |r| writer.row(r), &mut |w| warn(w))?;
    writer.finish()?;
    if stats.skipped > 0 {
        warn(format!("{} malformed quote records skipped", stats.skipped));
    }
    if let Some(out) = out_path {
        let mut m = ctx.manifest("stream", a);
        m.inputs.push(a.quotes.clone());
        m.inputs.extend(a.model.iter().cloned());
        m.outputs.push(out.clone());
        m.extra.insert(
            "summary".into(),
            json!({"quotes": stats.quotes, "skipped": stats.skipped, "events": stats.events,
                   "rows": stats.rows, "failed_windows": stats.failed_windows, "stride": cfg.stride}),
        );
        ctx.finish(m, &out)?;
    }
    Ok(())
}

/// CSV sink that writes the header with the first row, so a stream that
/// never fills a window produces no output.
struct RowWriter {
    sink: Box<dyn Write>,
    label: PathBuf,
    header_done: bool,
}

impl RowWriter {
    fn row(&mut self, r: &StreamRow) -> Result<()> {
        let label = self.label.clone();
        let io = |e| Error::io(&label, e);
        if !self.header_done {
            writeln!(self.sink, "{}", stream::ROW_HEADER).map_err(io)?;
            self.header_done = true;
        }
        stream::write_row(&mut self.sink, r).map_err(io)?;
        // Rows are plotted live, so push each one out.
        self.sink.flush().map_err(io)
    }

    fn finish(&mut self) -> Result<()> {
        self.sink.flush().map_err(|e| Error::io(&self.label, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn value_parsers() {
        assert_eq!("0.3, 0.4,0.7,1.5".parse::<ParamList>().unwrap().0, [0.3, 0.4, 0.7, 1.5]);
        assert!("0.3,0.4".parse::<ParamList>().is_err());
        assert_eq!("geometric:0.5".parse::<MarkSpec>().unwrap().0, MarkDist::Geometric { p: 0.5 });
        assert_eq!("unit".parse::<MarkSpec>().unwrap().0, MarkDist::Unit);
        assert_eq!(parse_seconds("1s").unwrap(), 1.0);
        assert_eq!(parse_seconds("250ms").unwrap(), 0.25);
        assert_eq!(parse_seconds("2").unwrap(), 2.0);
        assert!(parse_seconds("0s").is_err());
        assert_eq!("mle,nn".parse::<MethodList>().unwrap().0, [Method::Mle, Method::Nn]);
    }
}
