//! Search loops over the hyperparameter space, one independent GP per model
//! type, with an append-only JSON-lines trial log that can be resumed.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bayes::{propose, ProposalSource, SurrogateConfig};
use super::space::SearchSpace;
use crate::budget::{epochs_for_budget, now_unix, CostModel, RuntimeBudget, DEFAULT_SAFETY};
use crate::corpus::EvalSplit;
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_model, EvalOptions, EvalResult, IndexMode};
use crate::trainer::{train, HyperParams, ModelKind, TrainOptions, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Each trial trains until its validation hit rate stops improving.
    Unconstrained,
    /// Each trial trains for as many epochs as fit in the runtime budget.
    Constrained,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unconstrained" => Ok(SearchMode::Unconstrained),
            "constrained" => Ok(SearchMode::Constrained),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode {other:?}; expected unconstrained or constrained"
            ))),
        }
    }
}

/// When a per-model search ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopConfig {
    /// Consecutive trials without a significant incumbent improvement.
    pub patience: usize,
    /// Hit-rate points (percent) an improvement must exceed to count.
    pub min_improvement: f64,
    pub max_trials: usize,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            patience: 20,
            min_improvement: 0.05,
            max_trials: 60,
        }
    }
}

/// Early stopping of a single unconstrained training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceConfig {
    pub patience: usize,
    pub min_improvement: f64,
    pub max_epochs: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            patience: 10,
            min_improvement: 0.01,
            max_epochs: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub space: SearchSpace,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub workers: usize,
    pub stop: StopConfig,
    pub convergence: ConvergenceConfig,
    pub surrogate: SurrogateConfig,
    pub safety: f64,
    /// Values for parameters outside the space (downsampling, min count).
    pub base: HyperParams,
    pub index: IndexMode,
}

impl SearchConfig {
    pub fn new(mode: SearchMode) -> Self {
        let space = match mode {
            SearchMode::Unconstrained => SearchSpace::unconstrained(),
            SearchMode::Constrained => SearchSpace::constrained(),
        };
        SearchConfig {
            mode,
            space,
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            workers: 1,
            stop: StopConfig::default(),
            convergence: ConvergenceConfig::default(),
            surrogate: SurrogateConfig::default(),
            safety: DEFAULT_SAFETY,
            base: HyperParams::default(),
            index: IndexMode::Exact,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        if self.models.is_empty() {
            return Err(Error::InvalidArgument("no model types to search".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        if self.stop.max_trials == 0 {
            return Err(Error::InvalidArgument("max_trials must be >= 1".into()));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "safety must be in (0, 1], got {}",
                self.safety
            )));
        }
        if self.convergence.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Partial search configuration read from a TOML or JSON file. Present
/// fields override the preset for the chosen mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchFile {
    pub mode: Option<SearchMode>,
    pub space: Option<SpaceSpec>,
    pub models: Option<Vec<ModelKind>>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub stop: Option<StopConfig>,
    pub convergence: Option<ConvergenceConfig>,
    pub initial_points: Option<usize>,
    pub candidates: Option<usize>,
    pub safety: Option<f64>,
    pub t_ratio: Option<f64>,
    pub min_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Preset(String),
    Explicit(SearchSpace),
}

impl SearchFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    /// Builds the configuration: preset for the mode, then file values.
    pub fn resolve(&self, default_mode: SearchMode) -> Result<SearchConfig> {
        let mut cfg = SearchConfig::new(self.mode.unwrap_or(default_mode));
        match &self.space {
            Some(SpaceSpec::Preset(name)) => cfg.space = SearchSpace::preset(name)?,
            Some(SpaceSpec::Explicit(space)) => cfg.space = space.clone(),
            None => {}
        }
        if let Some(m) = &self.models {
            cfg.models = m.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.stop {
            cfg.stop = s;
        }
        if let Some(c) = self.convergence {
            cfg.convergence = c;
        }
        if let Some(n) = self.initial_points {
            cfg.surrogate.initial_points = n;
        }
        if let Some(n) = self.candidates {
            cfg.surrogate.candidates = n;
        }
        if let Some(s) = self.safety {
            cfg.safety = s;
        }
        if let Some(t) = self.t_ratio {
            cfg.base.t_ratio = t;
        }
        if let Some(m) = self.min_count {
            cfg.base.min_count = m;
        }
        Ok(cfg)
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based trial number within the model's search.
    pub trial: usize,
    pub model: ModelKind,
    /// Configuration as evaluated; `epochs` is the epoch count `n` of the
    /// reported model.
    pub hp: HyperParams,
    /// HR@10 in percent on the validation pairs.
    pub objective: f64,
    pub ndcg: f64,
    /// Wall seconds spent training.
    pub runtime_s: f64,
    pub epochs_run: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_runtime_s: Option<f64>,
    pub over_budget: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
    pub source: ProposalSource,
    pub seed: u64,
    pub timestamp: u64,
    pub config_hash: String,
}

impl TrialRecord {
    /// Eligible to be the incumbent.
    pub fn is_feasible(&self) -> bool {
        self.failed.is_none() && !self.over_budget
    }
}

/// Best feasible trial of `model`; ties go to the earlier trial.
pub fn incumbent(history: &[TrialRecord], model: ModelKind) -> Option<&TrialRecord> {
    history.iter().filter(|r| r.model == model && r.is_feasible()).fold(
        None,
        |best: Option<&TrialRecord>, r| match best {
            Some(b) if b.objective >= r.objective => Some(b),
            _ => Some(r),
        },
    )
}

/// Trials since the incumbent last improved by more than
/// `min_improvement`, counting from the first feasible trial.
pub fn trials_without_improvement(records: &[&TrialRecord], min_improvement: f64) -> usize {
    let mut reference: Option<f64> = None;
    let mut stale = 0;
    for r in records {
        if r.is_feasible() && reference.is_none_or(|b| r.objective > b + min_improvement) {
            reference = Some(r.objective);
            stale = 0;
        } else {
            stale += 1;
        }
    }
    stale
}

pub fn should_stop(records: &[&TrialRecord], stop: &StopConfig) -> bool {
    records.len() >= stop.max_trials || trials_without_improvement(records, stop.min_improvement) >= stop.patience
}

/// Budget and per-epoch cost model used by constrained searches.
#[derive(Debug, Clone)]
pub struct BudgetContext {
    pub budget: RuntimeBudget,
    pub cost: CostModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub config_hash: String,
    pub history: Vec<TrialRecord>,
    /// Incumbent per searched model, in the configured model order.
    pub best: Vec<TrialRecord>,
}

impl SearchOutcome {
    pub fn best_for(&self, model: ModelKind) -> Option<&TrialRecord> {
        self.best.iter().find(|r| r.model == model)
    }
}

/// Append-only JSON-lines trial log. The configuration is kept next to it
/// so a resumed run can be checked against the original.
pub struct TrialLog {
    path: PathBuf,
}

pub fn config_path_for(log: &Path) -> PathBuf {
    log.with_extension("config.json")
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
            if items.is_empty() {
                out.insert(prefix.to_owned(), "[]".into());
            }
        }
        other => {
            out.insert(prefix.to_owned(), other.to_string());
        }
    }
}

/// `key: old -> new` lines for every differing leaf of two JSON values.
pub fn json_diff(old: &serde_json::Value, new: &serde_json::Value) -> Vec<String> {
    let (mut a, mut b) = (BTreeMap::new(), BTreeMap::new());
    flatten("", old, &mut a);
    flatten("", new, &mut b);
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| {
            let show = |m: &BTreeMap<String, String>| m.get(k).cloned().unwrap_or_else(|| "<absent>".into());
            format!("{k}: {} -> {}", show(&a), show(&b))
        })
        .collect()
}

impl TrialLog {
    /// Opens `path` for `cfg`. Existing records are returned for resumption;
    /// a log written under a different configuration is refused.
    pub fn open(path: &Path, cfg: &SearchConfig) -> Result<(Self, Vec<TrialRecord>)> {
        let hash = cfg.hash();
        let cfg_path = config_path_for(path);
        let mut records = Vec::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                records.push(rec);
            }
        }
        let stored: Option<serde_json::Value> = if cfg_path.exists() {
            let text = std::fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        let foreign = records.iter().find(|r| r.config_hash != hash);
        if foreign.is_some() {
            let diff = match &stored {
                Some(old) => json_diff(old, &serde_json::to_value(cfg)?),
                None => vec!["stored configuration not found".into()],
            };
            return Err(Error::ConfigMismatch(format!(
                "{} was written with config {} but this run has {}; differences:\n  {}",
                path.display(),
                foreign.map_or("?", |r| r.config_hash.as_str()),
                hash,
                diff.join("\n  ")
            )));
        }
        let text = serde_json::to_string_pretty(cfg)?;
        std::fs::write(&cfg_path, text).map_err(|e| Error::io(&cfg_path, e))?;
        if !path.exists() {
            File::create(path).map_err(|e| Error::io(path, e))?;
        }
        Ok((TrialLog { path: path.to_owned() }, records))
    }

    pub fn append(&self, record: &TrialRecord) -> Result<()> {
        let mut f = OpenOptions::new()
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::io(&self.path, e))?;
        let line = serde_json::to_string(record)?;
        writeln!(f, "{line}").map_err(|e| Error::io(&self.path, e))?;
        f.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn read(path: &Path) -> Result<Vec<TrialRecord>> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if !line.trim().is_empty() {
                out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: e.to_string(),
                })?);
            }
        }
        Ok(out)
    }
}

/// Seed for trial `trial` (1-based) of `model`.
pub fn trial_seed(base: u64, model: ModelKind, trial: usize) -> u64 {
    let m = match model {
        ModelKind::Skipgram => 1u64,
        ModelKind::Cbow => 2,
    };
    base.wrapping_mul(1_000_003)
        .wrapping_add(m << 32)
        .wrapping_add(trial as u64)
}

/// Outcome of training and evaluating one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub hp: HyperParams,
    pub eval: EvalResult,
    pub runtime_s: f64,
    pub epochs_run: usize,
}

fn eval_opts(parallel: bool) -> EvalOptions {
    EvalOptions {
        parallel,
        ..Default::default()
    }
}

/// Trains for `hp.epochs` epochs and evaluates the final model.
pub fn run_fixed_trial(
    split: &EvalSplit,
    hp: HyperParams,
    opts: &TrainOptions,
    index: IndexMode,
) -> Result<TrialResult> {
    let (model, stats) = train(&split.train, &hp, opts)?;
    let eval = evaluate_model(&model, split, index, &eval_opts(opts.workers > 1))?;
    Ok(TrialResult {
        hp,
        eval,
        runtime_s: stats.total_wall_s,
        epochs_run: hp.epochs,
    })
}

/// Trains epoch by epoch, evaluating after each, until the hit rate has
/// not improved by more than `conv.min_improvement` for `conv.patience`
/// epochs or `conv.max_epochs` is reached. The learning rate decays over
/// `max_epochs`. Reports the best epoch.
pub fn run_converged_trial(
    split: &EvalSplit,
    hp: HyperParams,
    opts: &TrainOptions,
    index: IndexMode,
    conv: &ConvergenceConfig,
) -> Result<TrialResult> {
    let hp_run = HyperParams {
        epochs: conv.max_epochs,
        ..hp
    };
    let mut trainer = Trainer::new(&split.train, hp_run, *opts)?;
    let mut best: Option<(usize, EvalResult)> = None;
    let mut reference = f64::NEG_INFINITY;
    let mut stale = 0;
    let mut runtime_s = 0.0;
    for epoch in 1..=conv.max_epochs {
        runtime_s += trainer.run_epoch()?.wall_s;
        let eval = evaluate_model(&trainer.model(), split, index, &eval_opts(opts.workers > 1))?;
        if best.as_ref().is_none_or(|b| eval.hr_at_k > b.1.hr_at_k) {
            best = Some((epoch, eval.clone()));
        }
        if eval.hr_at_k > reference + conv.min_improvement {
            reference = eval.hr_at_k;
            stale = 0;
        } else {
            stale += 1;
            if stale >= conv.patience {
                break;
            }
        }
    }
    let (best_epoch, eval) = best.expect("at least one epoch ran");
    Ok(TrialResult {
        hp: HyperParams {
            epochs: best_epoch,
            ..hp
        },
        eval,
        runtime_s,
        epochs_run: trainer.epochs_done(),
    })
}

fn same_point(space: &SearchSpace, a: &HyperParams, b: &HyperParams) -> bool {
    space
        .to_unit(a)
        .iter()
        .zip(space.to_unit(b))
        .all(|(x, y)| (x - y).abs() < 1e-9)
}

/// Returns `hp` if it has not been evaluated, otherwise the nearest
/// unevaluated neighbour: integer dimensions step by one, continuous ones
/// by `0.01` in unit coordinates, widening the radius until one is free.
pub fn dedup(space: &SearchSpace, hp: HyperParams, evaluated: &[HyperParams]) -> HyperParams {
    let seen = |h: &HyperParams| evaluated.iter().any(|e| same_point(space, e, h));
    if !seen(&hp) {
        return hp;
    }
    let origin = space.to_unit(&hp);
    let dist = |h: &HyperParams| -> f64 { space.to_unit(h).iter().zip(&origin).map(|(a, b)| (a - b).powi(2)).sum() };
    for radius in 1..=200 {
        let mut cands = space.neighbours(&hp, radius, 0.01);
        cands.sort_by(|a, b| dist(a).total_cmp(&dist(b)));
        if let Some(free) = cands.into_iter().find(|c| !seen(c)) {
            return free;
        }
    }
    hp
}

/// Proposes the next configuration for `model` given its trial history.
pub fn suggest(
    history: &[&TrialRecord],
    space: &SearchSpace,
    surrogate: &SurrogateConfig,
    base: &HyperParams,
    model: ModelKind,
    parallel: bool,
) -> Result<(HyperParams, ProposalSource)> {
    let observed: Vec<(Vec<f64>, f64)> = history
        .iter()
        .filter(|r| r.failed.is_none())
        .map(|r| (space.to_unit(&r.hp), r.objective))
        .collect();
    let best = history
        .iter()
        .filter(|r| r.is_feasible())
        .map(|r| r.objective)
        .fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.max(v))));
    let seed_shift = match model {
        ModelKind::Skipgram => 0,
        ModelKind::Cbow => 0x5bd1_e995,
    };
    let cfg = SurrogateConfig {
        seed: surrogate.seed ^ seed_shift,
        ..*surrogate
    };
    let p = propose(&observed, best, space.len(), history.len(), &cfg, parallel)?;
    let base = HyperParams { model, ..*base };
    let hp = space.from_unit(&p.point, &base);
    let evaluated: Vec<HyperParams> = history.iter().map(|r| r.hp).collect();
    Ok((dedup(space, hp, &evaluated), p.source))
}

/// Runs the search for every configured model. Previously logged trials
/// are replayed into the surrogate; at one worker the continuation is the
/// same as an uninterrupted run.
pub fn run_search(
    split: &EvalSplit,
    cfg: &SearchConfig,
    budget: Option<&BudgetContext>,
    log: Option<&Path>,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    if cfg.mode == SearchMode::Constrained && budget.is_none() {
        return Err(Error::InvalidArgument(
            "constrained search needs a runtime budget".into(),
        ));
    }
    let hash = cfg.hash();
    let (log, mut history) = match log {
        Some(p) => {
            let (l, h) = TrialLog::open(p, cfg)?;
            (Some(l), h)
        }
        None => (None, Vec::new()),
    };
    if !history.is_empty() {
        info!("resuming from {} logged trials", history.len());
    }
    let parallel = cfg.workers > 1;
    let surrogate = SurrogateConfig {
        seed: cfg.surrogate.seed ^ cfg.seed,
        ..cfg.surrogate
    };

    for &model in &cfg.models {
        loop {
            let mine: Vec<&TrialRecord> = history.iter().filter(|r| r.model == model).collect();
            if should_stop(&mine, &cfg.stop) {
                break;
            }
            let trial = mine.len() + 1;
            let (mut hp, source) = suggest(&mine, &cfg.space, &surrogate, &cfg.base, model, parallel)?;
            let seed = trial_seed(cfg.seed, model, trial);
            let opts = TrainOptions {
                workers: cfg.workers,
                seed,
                ..Default::default()
            };
            let mut predicted = None;
            let mut infeasible = false;
            let result = match (cfg.mode, budget) {
                (SearchMode::Constrained, Some(b)) => {
                    let plan = epochs_for_budget(&hp, &b.budget, &b.cost, cfg.safety);
                    hp.epochs = plan.epochs;
                    predicted = Some(plan.predicted_total_s);
                    infeasible = plan.infeasible;
                    run_fixed_trial(split, hp, &opts, cfg.index)
                }
                _ => run_converged_trial(split, hp, &opts, cfg.index, &cfg.convergence),
            };
            let record = match result {
                Ok(r) => {
                    let over_budget = budget.is_some_and(|b| {
                        cfg.mode == SearchMode::Constrained && (infeasible || r.runtime_s > b.budget.budget_s)
                    });
                    TrialRecord {
                        trial,
                        model,
                        hp: r.hp,
                        objective: r.eval.hr_at_k,
                        ndcg: r.eval.ndcg_at_k,
                        runtime_s: r.runtime_s,
                        epochs_run: r.epochs_run,
                        predicted_runtime_s: predicted,
                        over_budget,
                        failed: None,
                        source,
                        seed,
                        timestamp: now_unix(),
                        config_hash: hash.clone(),
                    }
                }
                Err(e) => {
                    warn!("{model} trial {trial} failed: {e}");
                    TrialRecord {
                        trial,
                        model,
                        hp,
                        objective: 0.0,
                        ndcg: 0.0,
                        runtime_s: 0.0,
                        epochs_run: 0,
                        predicted_runtime_s: predicted,
                        over_budget: false,
                        failed: Some(e.to_string()),
                        source,
                        seed,
                        timestamp: now_unix(),
                        config_hash: hash.clone(),
                    }
                }
            };
            info!(
                "{model} trial {trial}: d={} L={} alpha={:.3} lambda={:.4} N={} n={} HR@10={:.3} NDCG@10={:.4} {:.2}s{}",
                record.hp.dim,
                record.hp.window,
                record.hp.alpha,
                record.hp.learning_rate,
                record.hp.negatives,
                record.hp.epochs,
                record.objective,
                record.ndcg,
                record.runtime_s,
                if record.over_budget { " over budget" } else { "" }
            );
            if let Some(l) = &log {
                l.append(&record)?;
            }
            history.push(record);
        }
    }
    let best = cfg
        .models
        .iter()
        .filter_map(|&m| incumbent(&history, m).cloned())
        .collect();
    Ok(SearchOutcome {
        config_hash: hash,
        history,
        best,
    })
}

/// Splits the test pairs into a tuning part and a held-out part of
/// `holdout_frac` of the pairs, chosen at random.
pub fn holdout_split(split: &EvalSplit, holdout_frac: f64, seed: u64) -> Result<(EvalSplit, EvalSplit)> {
    if !(holdout_frac > 0.0 && holdout_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "holdout fraction must be in (0, 1), got {holdout_frac}"
        )));
    }
    let mut pairs = split.test_pairs.clone();
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((pairs.len() as f64) * holdout_frac).round() as usize;
    if n_hold == 0 || n_hold == pairs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} test pairs are too few for a {holdout_frac} holdout",
            pairs.len()
        )));
    }
    let held = pairs.split_off(pairs.len() - n_hold);
    Ok((
        EvalSplit {
            train: split.train.clone(),
            test_pairs: pairs,
        },
        EvalSplit {
            train: split.train.clone(),
            test_pairs: held,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_last_token;
    use crate::synthetic::PlantedConfig;

    fn record(trial: usize, objective: f64, over_budget: bool) -> TrialRecord {
        TrialRecord {
            trial,
            model: ModelKind::Skipgram,
            hp: HyperParams::default(),
            objective,
            ndcg: 0.0,
            runtime_s: 1.0,
            epochs_run: 1,
            predicted_runtime_s: None,
            over_budget,
            failed: None,
            source: ProposalSource::Sobol,
            seed: 0,
            timestamp: 0,
            config_hash: String::new(),
        }
    }

    #[test]
    fn incumbent_skips_over_budget_and_failed() {
        let mut h = vec![record(1, 5.0, false), record(2, 9.0, true), record(3, 6.0, false)];
        h.push(TrialRecord {
            failed: Some("x".into()),
            objective: 50.0,
            ..record(4, 0.0, false)
        });
        assert_eq!(incumbent(&h, ModelKind::Skipgram).unwrap().trial, 3);
        assert!(incumbent(&h, ModelKind::Cbow).is_none());
    }

    #[test]
    fn stop_rule_counts_insignificant_gains() {
        let stop = StopConfig {
            patience: 3,
            min_improvement: 0.05,
            max_trials: 100,
        };
        let h = [
            record(1, 1.0, false),
            record(2, 1.04, false),
            record(3, 1.05, false),
            record(4, 0.5, false),
        ];
        let refs: Vec<&TrialRecord> = h.iter().collect();
        assert_eq!(trials_without_improvement(&refs, 0.05), 3);
        assert!(should_stop(&refs, &stop));
        assert!(!should_stop(&refs[..3], &stop));
        let h2 = [record(1, 1.0, false), record(2, 1.2, false)];
        let refs2: Vec<&TrialRecord> = h2.iter().collect();
        assert_eq!(trials_without_improvement(&refs2, 0.05), 0);
        assert!(should_stop(&refs2, &StopConfig { max_trials: 2, ..stop }));
    }

    #[test]
    fn dedup_moves_to_unevaluated_neighbour() {
        let space = SearchSpace::constrained();
        let hp = HyperParams {
            dim: 50,
            window: 3,
            negatives: 4,
            ..Default::default()
        };
        assert_eq!(dedup(&space, hp, &[]), hp);
        let moved = dedup(&space, hp, &[hp]);
        assert_ne!(moved, hp);
        assert!(space.contains(&moved));
        let moved2 = dedup(&space, hp, &[hp, moved]);
        assert!(moved2 != hp && moved2 != moved);
    }

    #[test]
    fn config_hash_and_diff() {
        let a = SearchConfig::new(SearchMode::Constrained);
        let mut b = a.clone();
        b.stop.max_trials = 7;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        let diff = json_diff(&serde_json::to_value(&a).unwrap(), &serde_json::to_value(&b).unwrap());
        assert_eq!(diff, vec!["stop.max_trials: 60 -> 7".to_string()]);
    }

    #[test]
    fn search_file_overrides_preset() {
        let f: SearchFile =
            toml::from_str("mode = \"constrained\"\nspace = \"unconstrained\"\nseed = 9\n[stop]\nmax_trials = 12\n")
                .unwrap();
        let cfg = f.resolve(SearchMode::Unconstrained).unwrap();
        assert_eq!(cfg.mode, SearchMode::Constrained);
        assert_eq!(cfg.space, SearchSpace::unconstrained());
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.stop.max_trials, 12);
        assert_eq!(cfg.stop.patience, 20);
        assert!(toml::from_str::<SearchFile>("bogus = 1").is_err());
    }

    #[test]
    fn holdout_partitions_pairs() {
        let c = PlantedConfig {
            sequences: 200,
            ..Default::default()
        }
        .build()
        .unwrap();
        let s = split_last_token(&c).unwrap();
        let (tune, hold) = holdout_split(&s, 0.25, 3).unwrap();
        assert_eq!(tune.test_pairs.len() + hold.test_pairs.len(), s.test_pairs.len());
        assert_eq!(
            hold.test_pairs.len(),
            (s.test_pairs.len() as f64 * 0.25).round() as usize
        );
        assert!(holdout_split(&s, 1.0, 3).is_err());
    }

    #[test]
    fn small_unconstrained_search_is_deterministic_and_resumable() {
        let c = PlantedConfig {
            sequences: 300,
            items_per_community: 30,
            ..Default::default()
        }
        .build()
        .unwrap();
        let split = split_last_token(&c).unwrap();
        let mut cfg = SearchConfig::new(SearchMode::Unconstrained);
        cfg.models = vec![ModelKind::Cbow];
        cfg.space = SearchSpace::constrained();
        cfg.space.dims[0].upper = 20.0;
        cfg.space.dims[1].upper = 4.0;
        cfg.space.dims[4].upper = 4.0;
        cfg.stop.max_trials = 4;
        cfg.surrogate.initial_points = 2;
        cfg.surrogate.candidates = 64;
        cfg.convergence = ConvergenceConfig {
            patience: 2,
            min_improvement: 0.01,
            max_epochs: 4,
        };
        cfg.base.t_ratio = 0.0;
        let full = run_search(&split, &cfg, None, None).unwrap();
        assert_eq!(full.history.len(), 4);
        assert!(full.history.iter().all(|r| r.epochs_run <= 4 && r.hp.epochs >= 1));

        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("trials.jsonl");
        let logged = run_search(&split, &cfg, None, Some(&log)).unwrap();
        let key =
            |o: &SearchOutcome| -> Vec<(HyperParams, f64)> { o.history.iter().map(|r| (r.hp, r.objective)).collect() };
        assert_eq!(key(&logged), key(&full));

        // interrupt after two trials and resume
        let text = std::fs::read_to_string(&log).unwrap();
        let head: Vec<&str> = text.lines().take(2).collect();
        std::fs::write(&log, head.join("\n") + "\n").unwrap();
        let resumed = run_search(&split, &cfg, None, Some(&log)).unwrap();
        assert_eq!(key(&resumed), key(&full));
        assert_eq!(TrialLog::read(&log).unwrap().len(), 4);

        // a different config cannot reuse the log
        let mut other = cfg.clone();
        other.stop.max_trials = 5;
        let err = run_search(&split, &other, None, Some(&log)).unwrap_err();
        assert!(
            matches!(err, Error::ConfigMismatch(ref m) if m.contains("stop.max_trials: 4 -> 5")),
            "{err}"
        );
    }
}
