//! Command-line interface. Every command writes its artifacts and a
//! `manifest.json` into the directory given by `--out`.

pub mod manifest;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::budget::{default_probes, fit_cost_model, CostModel, RuntimeBudget, DEFAULT_EPOCHS};
use crate::corpus::{
    ingest, sample_sequences, split_last_token_with_tokens, split_temporal_with_tokens, write_test_pairs, InputFormat,
    SplitManifest, SplitProtocol,
};
use crate::error::{Error, Result};
use crate::evaluator::{aggregate_runs, evaluate_model, write_per_pair_csv, EvalOptions, IndexMode};
use crate::optimizer::report::{search_markdown, transfer_markdown, write_transfer_csv, write_trials_csv};
use crate::optimizer::search::{
    holdout_split, incumbent, run_search, BudgetContext, SearchConfig, SearchFile, SearchMode, SearchOutcome, TrialLog,
};
use crate::optimizer::space::Param;
use crate::optimizer::sweep::{linear_sweep, parse_grid, write_sweep_csv};
use crate::optimizer::transfer::{
    budget_context, default_hp, sample_transfer, SplitSpec, TransferConfig, TransferReport,
};
use crate::trainer::{train, HyperParams, ModelKind, TrainOptions, WordVectors};
use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "w2vt",
    version,
    about = "Word2vec training, evaluation and hyperparameter search for item sequences"
)]
pub struct Cli {
    /// Worker threads for training and evaluation.
    #[arg(long, global = true, env = "W2VT_THREADS")]
    pub workers: Option<usize>,

    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate a corpus, write a normalized copy and its statistics.
    Ingest(IngestArgs),
    /// Build training sequences and test pairs.
    Split(SplitArgs),
    /// Draw a random fraction of the sequences.
    Sample(SampleArgs),
    /// Runtime budget tools.
    Budget {
        #[command(subcommand)]
        command: BudgetCommand,
    },
    /// Train embeddings.
    Train(TrainArgs),
    /// Evaluate embeddings on a split (HR@k, NDCG@k).
    Eval(EvalArgs),
    /// Search hyperparameters.
    Tune(TuneArgs),
    /// Tune on a sample, then evaluate on the full corpus.
    SampleTune(SampleTuneArgs),
    /// Vary one hyperparameter around a centre configuration.
    Sweep(SweepArgs),
    /// Rebuild reports from a trial log.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum BudgetCommand {
    /// Time the default configuration and fit the per-epoch cost model.
    Measure(MeasureArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Plain,
    Timestamped,
}

impl From<FormatArg> for InputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Plain => InputFormat::Plain,
            FormatArg::Timestamped => InputFormat::Timestamped,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    LastToken,
    Temporal,
}

#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "plain")]
    pub format: FormatArg,
    /// Drop tokens seen fewer times.
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value = "last-token")]
    pub protocol: ProtocolArg,
    /// First timestamp of the test period (temporal protocol).
    #[arg(long, allow_hyphen_values = true)]
    pub test_start: Option<i64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    /// Split manifest whose training sequences are timed.
    #[arg(long, conflicts_with = "input")]
    pub split: Option<PathBuf>,
    /// Plain corpus to time instead of a split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Downsampling threshold ratio used by the timed runs.
    #[arg(long = "t")]
    pub t_ratio: Option<f64>,
    /// Skip the probe runs that fit the cost model.
    #[arg(long)]
    pub no_probes: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Hyperparameter flags. Precedence: flags, then `--config`, then defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct HpArgs {
    /// TOML or JSON file with hyperparameter values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Embedding dimension.
    #[arg(long = "d")]
    pub dim: Option<usize>,
    /// Maximum window size.
    #[arg(long = "L")]
    pub window: Option<usize>,
    /// Negative-sampling exponent.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Initial learning rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Negatives per positive.
    #[arg(long = "N")]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Downsampling threshold as a fraction of the token count.
    #[arg(long = "t")]
    pub t_ratio: Option<f64>,
}

/// Partial hyperparameters read from a file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpFile {
    pub model: Option<ModelKind>,
    pub dim: Option<usize>,
    pub window: Option<usize>,
    pub alpha: Option<f64>,
    pub learning_rate: Option<f64>,
    pub negatives: Option<usize>,
    pub epochs: Option<usize>,
    pub t_ratio: Option<f64>,
    pub min_count: Option<u64>,
}

impl HpFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    fn apply(&self, hp: &mut HyperParams) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { hp.$f = v; } )* };
        }
        set!(
            model,
            dim,
            window,
            alpha,
            learning_rate,
            negatives,
            epochs,
            t_ratio,
            min_count
        );
    }
}

impl HpArgs {
    pub fn resolve(&self, min_count: u64) -> Result<HyperParams> {
        let mut hp = HyperParams {
            min_count,
            ..Default::default()
        };
        if let Some(path) = &self.config {
            HpFile::load(path)?.apply(&mut hp);
        }
        macro_rules! set {
            ($($arg:ident => $f:ident),*) => { $( if let Some(v) = self.$arg { hp.$f = v; } )* };
        }
        set!(model => model, dim => dim, window => window, alpha => alpha, lambda => learning_rate,
             negatives => negatives, epochs => epochs, t_ratio => t_ratio);
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Plain corpus to train on.
    #[arg(long, required_unless_present = "split", conflicts_with = "split")]
    pub input: Option<PathBuf>,
    /// Split manifest; trains on its training sequences.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub min_count: u64,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalOutputArgs {
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Use the approximate (HNSW) index.
    #[arg(long)]
    pub approximate: bool,
    /// Count query == target pairs as hits instead of dropping them.
    #[arg(long)]
    pub keep_self_pairs: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub split: PathBuf,
    /// Embeddings in word2vec text format.
    #[arg(long, conflicts_with = "runs")]
    pub vectors: Option<PathBuf>,
    /// Retrain this many times (seeds from --seeds) and report mean and 95% CI.
    #[arg(long, requires = "seeds")]
    pub runs: Option<usize>,
    /// Seeds as `a..b`, `a,b,c` or a single value.
    #[arg(long)]
    pub seeds: Option<String>,
    #[command(flatten)]
    pub hp: HpArgs,
    #[command(flatten)]
    pub eval: EvalOutputArgs,
    /// Also write per-pair ranks.
    #[arg(long)]
    pub per_pair: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    /// TOML or JSON search configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<SearchMode>,
    /// Space preset: unconstrained or constrained.
    #[arg(long)]
    pub space: Option<String>,
    /// Model types to search, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_trials: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Epoch cap for unconstrained trials.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long = "t")]
    pub t_ratio: Option<f64>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub approximate: bool,
}

impl SearchArgs {
    /// Preset for the mode, then the config file, then flags.
    pub fn resolve(&self, default_mode: SearchMode, workers: usize) -> Result<SearchConfig> {
        let file = match &self.config {
            Some(p) => SearchFile::load(p)?,
            None => SearchFile::default(),
        };
        let file_workers = file.workers;
        let mut cfg = SearchFile {
            mode: self.mode.or(file.mode),
            ..file
        }
        .resolve(default_mode)?;
        if file_workers.is_none() {
            cfg.workers = workers;
        }
        if let Some(s) = &self.space {
            cfg.space = crate::optimizer::space::SearchSpace::preset(s)?;
        }
        if let Some(m) = &self.models {
            cfg.models = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.max_trials {
            cfg.stop.max_trials = n;
        }
        if let Some(n) = self.patience {
            cfg.stop.patience = n;
        }
        if let Some(n) = self.max_epochs {
            cfg.convergence.max_epochs = n;
        }
        if let Some(t) = self.t_ratio {
            cfg.base.t_ratio = t;
        }
        if let Some(m) = self.min_count {
            cfg.base.min_count = m;
        }
        if self.approximate {
            cfg.index = IndexMode::Approximate;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Budget file from `budget measure`; measured if absent.
    #[arg(long)]
    pub budget: Option<PathBuf>,
    /// Cost model file; defaults to cost_model.json next to the budget.
    #[arg(long)]
    pub cost_model: Option<PathBuf>,
    /// Hold out this fraction of test pairs from tuning and report on it.
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SampleTuneArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, value_enum, default_value = "last-token")]
    pub protocol: ProtocolArg,
    #[arg(long, allow_hyphen_values = true)]
    pub test_start: Option<i64>,
    #[arg(long, default_value_t = 0.1)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub sample_seed: u64,
    #[command(flatten)]
    pub search: SearchArgs,
    /// Seeds of the full-corpus evaluation runs.
    #[arg(long, default_value = "1..5")]
    pub eval_seeds: String,
    /// Also tune on the full corpus for comparison.
    #[arg(long)]
    pub full_tune: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub param: Param,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long, default_value = "1..5")]
    pub seeds: String,
    #[command(flatten)]
    pub hp: HpArgs,
    #[arg(long)]
    pub approximate: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Trial log (JSON lines).
    #[arg(long)]
    pub trials: PathBuf,
    /// transfer.json from `sample-tune`.
    #[arg(long)]
    pub transfer: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `a..b` (inclusive), `a,b,c` or a single seed.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("bad seed list {spec:?}; use a..b, a,b,c or a single value"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let seeds = if let Some((a, b)) = spec.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        if b < a {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<u64>>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

fn index_mode(approximate: bool) -> IndexMode {
    if approximate {
        IndexMode::Approximate
    } else {
        IndexMode::Exact
    }
}

fn load_split(path: &Path, m: &mut RunManifest) -> Result<(SplitManifest, crate::corpus::EvalSplit)> {
    let sm = SplitManifest::load(path)?;
    m.input(path)?;
    m.input(&sm.train_path)?;
    m.input(&sm.test_pairs_path)?;
    let split = sm.load_split()?;
    Ok((sm, split))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let workers = match cli.workers {
        Some(0) => return Err(Error::InvalidArgument("--workers must be >= 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a, workers),
        Command::Split(a) => cmd_split(&a, workers),
        Command::Sample(a) => cmd_sample(&a, workers),
        Command::Budget {
            command: BudgetCommand::Measure(a),
        } => cmd_budget_measure(&a, workers),
        Command::Train(a) => cmd_train(&a, workers),
        Command::Eval(a) => cmd_eval(&a, workers),
        Command::Tune(a) => cmd_tune(&a, workers),
        Command::SampleTune(a) => cmd_sample_tune(&a, workers),
        Command::Sweep(a) => cmd_sweep(&a, workers),
        Command::Report(a) => cmd_report(&a, workers),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on success, 1 for usage or validation errors, 2 for runtime failures.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                1
            } else {
                2
            }
        }
    }
}

pub fn cmd_ingest(a: &IngestArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("ingest", workers);
    let corpus = ingest(&a.corpus.input, a.corpus.format.into(), a.corpus.min_count)?;
    m.input(&a.corpus.input)?;
    out_dir(&a.out)?;
    let (name, format) = match a.corpus.format {
        FormatArg::Plain => ("corpus.txt", InputFormat::Plain),
        FormatArg::Timestamped => ("events.tsv", InputFormat::Timestamped),
    };
    let path = a.out.join(name);
    match format {
        InputFormat::Plain => corpus.write_plain(&path)?,
        InputFormat::Timestamped => corpus.write_timestamped(&path)?,
    }
    let stats = corpus.stats();
    let stats_path = a.out.join("stats.json");
    write_json(&stats_path, &stats)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    m.config(&serde_json::json!({"format": format, "min_count": a.corpus.min_count}))?;
    m.output(&path);
    m.output(&stats_path);
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_split(a: &SplitArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("split", workers);
    let corpus = ingest(&a.corpus.input, a.corpus.format.into(), a.corpus.min_count)?;
    m.input(&a.corpus.input)?;
    let (split, pairs, protocol) = match a.protocol {
        ProtocolArg::LastToken => {
            let (s, p) = split_last_token_with_tokens(&corpus)?;
            (s, p, SplitProtocol::LastToken)
        }
        ProtocolArg::Temporal => {
            let start = a
                .test_start
                .ok_or_else(|| Error::InvalidArgument("--test-start is required for the temporal protocol".into()))?;
            let (s, p) = split_temporal_with_tokens(&corpus, start)?;
            (s, p, SplitProtocol::Temporal)
        }
    };
    out_dir(&a.out)?;
    let train_path = a.out.join("train.txt");
    let pairs_path = a.out.join("test_pairs.tsv");
    split.train.write_plain(&train_path)?;
    write_test_pairs(&pairs_path, &pairs)?;
    let sm = SplitManifest {
        train_path: "train.txt".into(),
        test_pairs_path: "test_pairs.tsv".into(),
        protocol,
        test_start: a.test_start.filter(|_| protocol == SplitProtocol::Temporal),
        seed: 0,
        min_count: a.corpus.min_count,
    };
    let sm_path = a.out.join("split.json");
    write_json(&sm_path, &sm)?;
    info!("{} training sequences, {} test pairs", split.train.len(), pairs.len());
    m.config(&sm)?;
    for p in [&train_path, &pairs_path, &sm_path] {
        m.output(p);
    }
    m.finish(&a.out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleManifest {
    pub source: PathBuf,
    pub sample_path: PathBuf,
    pub format: InputFormat,
    pub fraction: f64,
    pub seed: u64,
    pub sequences: usize,
    pub source_sequences: usize,
}

fn write_sample(
    full: &crate::corpus::Corpus,
    corpus: &CorpusArgs,
    fraction: f64,
    seed: u64,
    dir: &Path,
) -> Result<(crate::corpus::Corpus, SampleManifest, PathBuf)> {
    let sample = sample_sequences(full, fraction, seed)?;
    let format: InputFormat = corpus.format.into();
    let name = match format {
        InputFormat::Plain => "sample.txt",
        InputFormat::Timestamped => "sample.tsv",
    };
    let path = dir.join(name);
    match format {
        InputFormat::Plain => sample.write_plain(&path)?,
        InputFormat::Timestamped => sample.write_timestamped(&path)?,
    }
    let sm = SampleManifest {
        source: corpus.input.clone(),
        sample_path: name.into(),
        format,
        fraction,
        seed,
        sequences: sample.len(),
        source_sequences: full.len(),
    };
    let sm_path = dir.join("sample.json");
    write_json(&sm_path, &sm)?;
    Ok((sample, sm, path))
}

pub fn cmd_sample(a: &SampleArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("sample", workers);
    let full = ingest(&a.corpus.input, a.corpus.format.into(), a.corpus.min_count)?;
    m.input(&a.corpus.input)?;
    out_dir(&a.out)?;
    let (_, sm, path) = write_sample(&full, &a.corpus, a.fraction, a.seed, &a.out)?;
    info!("sampled {} of {} sequences", sm.sequences, sm.source_sequences);
    m.seeds.push(a.seed);
    m.config(&sm)?;
    m.output(&path);
    m.output(&a.out.join("sample.json"));
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_budget_measure(a: &MeasureArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("budget measure", workers);
    let corpus = match (&a.split, &a.input) {
        (Some(s), _) => load_split(s, &mut m)?.1.train,
        (None, Some(i)) => {
            m.input(i)?;
            ingest(i, InputFormat::Plain, 1)?
        }
        (None, None) => return Err(Error::InvalidArgument("give --split or --input".into())),
    };
    let mut cfg = SearchConfig::new(SearchMode::Constrained);
    cfg.workers = workers;
    cfg.seed = a.seed;
    if let Some(t) = a.t_ratio {
        cfg.base.t_ratio = t;
    }
    cfg.base.min_count = corpus.vocab().min_count();
    out_dir(&a.out)?;
    let hp = HyperParams {
        epochs: a.epochs,
        ..default_hp(ModelKind::Skipgram, &cfg.base)
    };
    let budget = crate::budget::measure_run(&corpus, &hp, workers, a.seed)?;
    let budget_path = a.out.join("budget.json");
    budget.save(&budget_path)?;
    m.output(&budget_path);
    println!(
        "budget {:.4}s ({} epochs, {} workers)",
        budget.budget_s, a.epochs, workers
    );
    if !a.no_probes {
        let probes: Vec<HyperParams> = ModelKind::ALL
            .iter()
            .flat_map(|&k| default_probes(k))
            .map(|p| HyperParams {
                t_ratio: cfg.base.t_ratio,
                min_count: cfg.base.min_count,
                ..p
            })
            .collect();
        let cost = fit_cost_model(&corpus, &probes, workers, a.seed)?;
        let cost_path = a.out.join("cost_model.json");
        cost.save(&cost_path)?;
        m.output(&cost_path);
        println!("cost model max relative residual {:.3}", cost.max_residual());
    }
    m.seeds.push(a.seed);
    m.config(&serde_json::json!({"epochs": a.epochs, "hp": hp, "probes": !a.no_probes}))?;
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, workers: usize) -> Result<()> {
    let hp = a.hp.resolve(a.min_count)?;
    let mut m = RunManifest::start("train", workers);
    let corpus = match (&a.input, &a.split) {
        (Some(i), _) => {
            m.input(i)?;
            ingest(i, InputFormat::Plain, hp.min_count)?
        }
        (None, Some(s)) => load_split(s, &mut m)?.1.train,
        (None, None) => return Err(Error::InvalidArgument("give --input or --split".into())),
    };
    let opts = TrainOptions {
        workers,
        seed: a.seed,
        ..Default::default()
    };
    let (model, stats) = train(&corpus, &hp, &opts)?;
    out_dir(&a.out)?;
    let vec_path = a.out.join("vectors.txt");
    model.write_word2vec_text(&vec_path)?;
    let stats_path = a.out.join("train_stats.json");
    write_json(&stats_path, &stats)?;
    println!(
        "trained {} epochs in {:.2}s ({:.0} tokens/s), final loss {:.4}",
        hp.epochs, stats.total_wall_s, stats.tokens_per_s, stats.final_loss
    );
    m.seeds.push(a.seed);
    m.config(&hp)?;
    m.output(&vec_path);
    m.output(&stats_path);
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("eval", workers);
    let (_, split) = load_split(&a.split, &mut m)?;
    let opts = EvalOptions {
        k: a.eval.k,
        keep_self_pairs: a.eval.keep_self_pairs,
        record_ranks: a.per_pair,
        parallel: workers > 1,
    };
    let mode = index_mode(a.eval.approximate);
    out_dir(&a.out)?;
    let eval_path = a.out.join("eval.json");
    if let Some(vectors) = &a.vectors {
        m.input(vectors)?;
        let model = WordVectors::read_text(vectors)?.align_to(split.train.vocab())?;
        let result = evaluate_model(&model, &split, mode, &opts)?;
        println!(
            "HR@{} = {:.3}  NDCG@{} = {:.4}  ({} pairs)",
            opts.k, result.hr_at_k, opts.k, result.ndcg_at_k, result.n_pairs
        );
        if a.per_pair {
            let p = a.out.join("per_pair.csv");
            write_per_pair_csv(&p, &split, &result, opts.keep_self_pairs)?;
            m.output(&p);
        }
        write_json(&eval_path, &result)?;
        m.config(&serde_json::json!({"eval": opts, "index": mode}))?;
    } else {
        let seeds = parse_seeds(
            a.seeds
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("give --vectors, or --runs with --seeds to retrain".into()))?,
        )?;
        let runs = a.runs.unwrap_or(seeds.len());
        if runs == 0 || runs > seeds.len() {
            return Err(Error::InvalidArgument(format!(
                "--runs {runs} needs that many seeds, got {}",
                seeds.len()
            )));
        }
        let hp = a.hp.resolve(split.train.vocab().min_count())?;
        let mut results = Vec::with_capacity(runs);
        for &seed in &seeds[..runs] {
            let topts = TrainOptions {
                workers,
                seed,
                ..Default::default()
            };
            let (model, _) = train(&split.train, &hp, &topts)?;
            let r = evaluate_model(
                &model,
                &split,
                mode,
                &EvalOptions {
                    record_ranks: false,
                    ..opts
                },
            )?;
            info!("seed {seed}: HR@{} = {:.3}", opts.k, r.hr_at_k);
            results.push(r);
        }
        let summary = aggregate_runs(&results)?;
        println!(
            "HR@{} = {:.3} ± {:.3}  NDCG@{} = {:.4} ± {:.4}  ({} runs)",
            opts.k,
            summary.hr_at_k.mean,
            summary.hr_at_k.half_width,
            opts.k,
            summary.ndcg_at_k.mean,
            summary.ndcg_at_k.half_width,
            runs
        );
        write_json(&eval_path, &serde_json::json!({"summary": summary, "runs": results}))?;
        m.seeds = seeds[..runs].to_vec();
        m.config(&serde_json::json!({"hp": hp, "eval": opts, "index": mode}))?;
    }
    m.output(&eval_path);
    m.finish(&a.out)?;
    Ok(())
}

/// Loads the budget (and cost model) for a constrained search, or measures
/// and persists them in `out` when none is given. A budget already in
/// `out` from an interrupted run is reused.
fn resolve_budget(
    a: &TuneArgs,
    train: &crate::corpus::Corpus,
    cfg: &SearchConfig,
    m: &mut RunManifest,
) -> Result<BudgetContext> {
    let out_budget = a.out.join("budget.json");
    let out_cost = a.out.join("cost_model.json");
    let budget_path = a
        .budget
        .clone()
        .or_else(|| out_budget.exists().then(|| out_budget.clone()));
    let Some(bp) = budget_path else {
        info!("no budget given; timing the default configuration");
        let ctx = budget_context(train, cfg)?;
        ctx.budget.save(&out_budget)?;
        ctx.cost.save(&out_cost)?;
        m.output(&out_budget);
        m.output(&out_cost);
        return Ok(ctx);
    };
    m.input(&bp)?;
    let budget = RuntimeBudget::load(&bp)?;
    let cost_path = a
        .cost_model
        .clone()
        .unwrap_or_else(|| bp.parent().unwrap_or(Path::new(".")).join("cost_model.json"));
    let cost = if cost_path.exists() {
        m.input(&cost_path)?;
        CostModel::load(&cost_path)?
    } else {
        info!("no cost model at {}; fitting one", cost_path.display());
        let probes: Vec<HyperParams> = ModelKind::ALL
            .iter()
            .flat_map(|&k| default_probes(k))
            .map(|p| HyperParams {
                t_ratio: cfg.base.t_ratio,
                min_count: cfg.base.min_count,
                ..p
            })
            .collect();
        let cost = fit_cost_model(train, &probes, cfg.workers, cfg.seed)?;
        cost.save(&out_cost)?;
        m.output(&out_cost);
        cost
    };
    if bp != out_budget {
        budget.save(&out_budget)?;
        m.output(&out_budget);
    }
    Ok(BudgetContext { budget, cost })
}

fn write_search_outputs(outcome: &SearchOutcome, dir: &Path, title: &str, m: &mut RunManifest) -> Result<()> {
    let report = dir.join("report.md");
    std::fs::write(&report, search_markdown(outcome, title)).map_err(|e| Error::io(&report, e))?;
    let csv = dir.join("trials.csv");
    write_trials_csv(&csv, &outcome.history)?;
    m.output(&report);
    m.output(&csv);
    for b in &outcome.best {
        let p = dir.join(format!("best_{}.json", b.model));
        write_json(&p, &b.hp)?;
        m.output(&p);
    }
    Ok(())
}

pub fn cmd_tune(a: &TuneArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("tune", workers);
    let cfg = a.search.resolve(SearchMode::Unconstrained, workers)?;
    let (_, split) = load_split(&a.split, &mut m)?;
    out_dir(&a.out)?;
    let (tune_split, holdout) = match a.holdout_frac {
        Some(f) => {
            let (t, h) = holdout_split(&split, f, cfg.seed)?;
            (t, Some(h))
        }
        None => (split, None),
    };
    let budget = match cfg.mode {
        SearchMode::Constrained => Some(resolve_budget(a, &tune_split.train, &cfg, &mut m)?),
        SearchMode::Unconstrained => None,
    };
    let log = a.out.join("trials.jsonl");
    let outcome = run_search(&tune_split, &cfg, budget.as_ref(), Some(&log))?;
    m.output(&log);
    m.output(&crate::optimizer::search::config_path_for(&log));
    let title = match cfg.mode {
        SearchMode::Constrained => format!(
            "Constrained search (budget {:.3}s)",
            budget.as_ref().map_or(0.0, |b| b.budget.budget_s)
        ),
        SearchMode::Unconstrained => "Unconstrained search".to_owned(),
    };
    write_search_outputs(&outcome, &a.out, &title, &mut m)?;

    let mut summary = serde_json::json!({ "config_hash": outcome.config_hash, "best": outcome.best });
    if let Some(h) = &holdout {
        let mut held = Vec::new();
        for b in &outcome.best {
            let opts = TrainOptions {
                workers,
                seed: b.seed,
                ..Default::default()
            };
            let (model, _) = train(&h.train, &b.hp, &opts)?;
            let r = evaluate_model(
                &model,
                h,
                cfg.index,
                &EvalOptions {
                    parallel: workers > 1,
                    ..Default::default()
                },
            )?;
            println!("{} held-out HR@10 = {:.3}", b.model, r.hr_at_k);
            held.push(serde_json::json!({"model": b.model, "eval": r}));
        }
        summary["holdout"] = serde_json::Value::Array(held);
    }
    for b in &outcome.best {
        println!(
            "{}: HR@10 = {:.3} NDCG@10 = {:.4} (d={} L={} alpha={:.3} n={} lambda={:.4} N={})",
            b.model,
            b.objective,
            b.ndcg,
            b.hp.dim,
            b.hp.window,
            b.hp.alpha,
            b.hp.epochs,
            b.hp.learning_rate,
            b.hp.negatives
        );
    }
    let summary_path = a.out.join("summary.json");
    write_json(&summary_path, &summary)?;
    m.output(&summary_path);
    m.seeds.push(cfg.seed);
    m.config(&serde_json::json!({"search": cfg, "holdout_frac": a.holdout_frac}))?;
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_sample_tune(a: &SampleTuneArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("sample-tune", workers);
    let mut search = a.search.resolve(SearchMode::Constrained, workers)?;
    search.mode = SearchMode::Constrained;
    if a.search.min_count.is_none() {
        search.base.min_count = a.corpus.min_count;
    }
    let full = ingest(&a.corpus.input, a.corpus.format.into(), search.base.min_count)?;
    m.input(&a.corpus.input)?;
    let split = match a.protocol {
        ProtocolArg::LastToken => SplitSpec::LastToken,
        ProtocolArg::Temporal => SplitSpec::Temporal {
            test_start: a
                .test_start
                .ok_or_else(|| Error::InvalidArgument("--test-start is required for the temporal protocol".into()))?,
        },
    };
    out_dir(&a.out)?;
    let sample_dir = a.out.join("sample");
    out_dir(&sample_dir)?;
    let (_, sample_manifest, sample_path) = write_sample(&full, &a.corpus, a.fraction, a.sample_seed, &sample_dir)?;
    let mut sm = RunManifest::start("sample", workers);
    sm.input(&a.corpus.input)?;
    sm.seeds.push(a.sample_seed);
    sm.config(&sample_manifest)?;
    sm.output(&sample_path);
    sm.output(&sample_dir.join("sample.json"));
    sm.finish(&sample_dir)?;

    let cfg = TransferConfig {
        fraction: a.fraction,
        sample_seed: a.sample_seed,
        split,
        eval_seeds: parse_seeds(&a.eval_seeds)?,
        full_tune: a.full_tune,
        search,
    };
    let log = a.out.join("trials.jsonl");
    let report = sample_transfer(&full, &cfg, Some(&log))?;
    let md = a.out.join("transfer.md");
    std::fs::write(&md, transfer_markdown(&report)).map_err(|e| Error::io(&md, e))?;
    let csv = a.out.join("transfer.csv");
    write_transfer_csv(&csv, &report)?;
    let json = a.out.join("transfer.json");
    write_json(&json, &report)?;
    write_search_outputs(&report.sample_search, &a.out, "Search on the sample", &mut m)?;
    print!("{}", transfer_markdown(&report));
    for p in [&log, &md, &csv, &json] {
        m.output(p);
    }
    m.seeds = cfg.eval_seeds.clone();
    m.seeds.push(cfg.sample_seed);
    m.config(&cfg)?;
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_sweep(a: &SweepArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("sweep", workers);
    let (_, split) = load_split(&a.split, &mut m)?;
    let center = a.hp.resolve(split.train.vocab().min_count())?;
    let grid = parse_grid(&a.grid)?;
    let seeds = parse_seeds(&a.seeds)?;
    let opts = TrainOptions {
        workers,
        ..Default::default()
    };
    let mode = index_mode(a.approximate);
    let rows = linear_sweep(&split, &center, a.param, &grid, &seeds, &opts, mode, workers > 1)?;
    out_dir(&a.out)?;
    let csv = a.out.join("sweep.csv");
    write_sweep_csv(&csv, a.param, &rows)?;
    let json = a.out.join("sweep.json");
    write_json(
        &json,
        &serde_json::json!({"param": a.param, "center": center, "rows": rows}),
    )?;
    for r in &rows {
        println!(
            "{}={}{}: HR@10 = {:.3}{}",
            a.param,
            r.value,
            if r.is_center { " (centre)" } else { "" },
            r.hr_at_10.mean,
            r.hr_at_10.half_width.map_or_else(String::new, |h| format!(" ± {h:.3}"))
        );
    }
    m.seeds = seeds;
    m.config(&serde_json::json!({"param": a.param, "grid": grid, "center": center, "index": mode}))?;
    m.output(&csv);
    m.output(&json);
    m.finish(&a.out)?;
    Ok(())
}

pub fn cmd_report(a: &ReportArgs, workers: usize) -> Result<()> {
    let mut m = RunManifest::start("report", workers);
    let history = TrialLog::read(&a.trials)?;
    m.input(&a.trials)?;
    let mut models: Vec<ModelKind> = history.iter().map(|r| r.model).collect();
    models.dedup();
    models.sort();
    models.dedup();
    let outcome = SearchOutcome {
        config_hash: history.first().map(|r| r.config_hash.clone()).unwrap_or_default(),
        best: models.iter().filter_map(|&k| incumbent(&history, k).cloned()).collect(),
        history,
    };
    out_dir(&a.out)?;
    write_search_outputs(&outcome, &a.out, "Search report", &mut m)?;
    if let Some(t) = &a.transfer {
        m.input(t)?;
        let text = std::fs::read_to_string(t).map_err(|e| Error::io(t, e))?;
        let report: TransferReport = serde_json::from_str(&text)?;
        let md = a.out.join("transfer.md");
        std::fs::write(&md, transfer_markdown(&report)).map_err(|e| Error::io(&md, e))?;
        let csv = a.out.join("transfer.csv");
        write_transfer_csv(&csv, &report)?;
        m.output(&md);
        m.output(&csv);
    }
    m.config(&serde_json::json!({"trials": a.trials, "transfer": a.transfer}))?;
    m.finish(&a.out)?;
    Ok(())
}
