//! Tune on a sample of the sequences, then apply the found hyperparameters
//! to the full corpus under the full corpus' own runtime budget.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use super::search::{run_fixed_trial, run_search, BudgetContext, SearchConfig, SearchMode, SearchOutcome};
use super::sweep::Estimate;
use crate::budget::{
    default_probes, epochs_for_budget, fit_cost_model, measure_run, CorpusProfile, RuntimeBudget, DEFAULT_EPOCHS,
};
use crate::corpus::{sample_sequences, split_last_token, split_temporal, Corpus, EvalSplit};
use crate::error::{Error, Result};
use crate::trainer::{HyperParams, ModelKind, TrainOptions};

/// How a corpus becomes training sequences and test pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "kebab-case")]
pub enum SplitSpec {
    LastToken,
    Temporal { test_start: i64 },
}

impl SplitSpec {
    pub fn apply(&self, corpus: &Corpus) -> Result<EvalSplit> {
        match *self {
            SplitSpec::LastToken => split_last_token(corpus),
            SplitSpec::Temporal { test_start } => split_temporal(corpus, test_start),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferConfig {
    pub fraction: f64,
    pub sample_seed: u64,
    pub split: SplitSpec,
    /// Constrained search run on the sample.
    pub search: SearchConfig,
    /// Seeds of the repeated full-corpus evaluations.
    pub eval_seeds: Vec<u64>,
    /// Also run the constrained search on the full corpus.
    pub full_tune: bool,
}

impl TransferConfig {
    pub fn new(search: SearchConfig) -> Self {
        TransferConfig {
            fraction: 0.1,
            sample_seed: 0,
            split: SplitSpec::LastToken,
            search,
            eval_seeds: (1..=5).collect(),
            full_tune: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Default,
    SampleTuned,
    FullTuned,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Default => "default",
            Variant::SampleTuned => "sample-tuned",
            Variant::FullTuned => "full-tuned",
        }
    }
}

/// Full-corpus result of one configuration over the evaluation seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub model: ModelKind,
    pub variant: Variant,
    /// Configuration as retrained; `epochs` recomputed for the full corpus.
    pub hp: HyperParams,
    pub hr_at_10: Estimate,
    pub ndcg_at_10: Estimate,
    pub hr_runs: Vec<f64>,
    pub mean_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub fraction: f64,
    pub sample_sequences: usize,
    pub full_sequences: usize,
    pub sample_budget: RuntimeBudget,
    pub full_budget: RuntimeBudget,
    pub sample_search: SearchOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_search: Option<SearchOutcome>,
    pub rows: Vec<TransferRow>,
}

impl TransferReport {
    pub fn row(&self, model: ModelKind, variant: Variant) -> Option<&TransferRow> {
        self.rows.iter().find(|r| r.model == model && r.variant == variant)
    }
}

/// Default hyperparameters for `model` with the search's downsampling and
/// min-count settings.
pub fn default_hp(model: ModelKind, base: &HyperParams) -> HyperParams {
    HyperParams {
        model,
        epochs: DEFAULT_EPOCHS,
        t_ratio: base.t_ratio,
        min_count: base.min_count,
        ..HyperParams::default()
    }
}

/// Measures the default-run budget and fits the per-epoch cost model on
/// `train`.
pub fn budget_context(train: &Corpus, cfg: &SearchConfig) -> Result<BudgetContext> {
    let budget = measure_run(
        train,
        &default_hp(ModelKind::Skipgram, &cfg.base),
        cfg.workers,
        cfg.seed,
    )?;
    let probes: Vec<HyperParams> = ModelKind::ALL
        .iter()
        .flat_map(|&m| default_probes(m))
        .map(|p| HyperParams {
            t_ratio: cfg.base.t_ratio,
            min_count: cfg.base.min_count,
            ..p
        })
        .collect();
    let cost = fit_cost_model(train, &probes, cfg.workers, cfg.seed)?;
    Ok(BudgetContext { budget, cost })
}

fn evaluate_variant(
    split: &EvalSplit,
    model: ModelKind,
    variant: Variant,
    hp: HyperParams,
    seeds: &[u64],
    cfg: &SearchConfig,
) -> Result<TransferRow> {
    let mut hr = Vec::with_capacity(seeds.len());
    let mut ndcg = Vec::with_capacity(seeds.len());
    let mut runtime = 0.0;
    for &seed in seeds {
        let opts = TrainOptions {
            workers: cfg.workers,
            seed,
            ..Default::default()
        };
        let r = run_fixed_trial(split, hp, &opts, cfg.index)?;
        hr.push(r.eval.hr_at_k);
        ndcg.push(r.eval.ndcg_at_k);
        runtime += r.runtime_s;
    }
    info!("{model} {}: HR@10 runs {hr:?}", variant.as_str());
    Ok(TransferRow {
        model,
        variant,
        hp,
        hr_at_10: Estimate::of(&hr)?,
        ndcg_at_10: Estimate::of(&ndcg)?,
        hr_runs: hr,
        mean_runtime_s: runtime / seeds.len() as f64,
    })
}

/// Samples `fraction` of the sequences, tunes on the sample under the
/// sample's default-run budget, and re-evaluates defaults and the tuned
/// incumbents on the full corpus with epochs planned for the full-corpus
/// default-run budget.
pub fn sample_transfer(full: &Corpus, cfg: &TransferConfig, log: Option<&Path>) -> Result<TransferReport> {
    if cfg.search.mode != SearchMode::Constrained {
        return Err(Error::InvalidArgument(
            "sample transfer uses a constrained search".into(),
        ));
    }
    if cfg.eval_seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one evaluation seed is needed".into()));
    }
    let sample = sample_sequences(full, cfg.fraction, cfg.sample_seed)?;
    info!("sample: {} of {} sequences", sample.len(), full.len());
    let sample_split = cfg.split.apply(&sample)?;
    let sample_ctx = budget_context(&sample_split.train, &cfg.search)?;
    info!("sample budget {:.3}s", sample_ctx.budget.budget_s);
    let sample_search = run_search(&sample_split, &cfg.search, Some(&sample_ctx), log)?;

    let full_split = cfg.split.apply(full)?;
    let full_budget = measure_run(
        &full_split.train,
        &default_hp(ModelKind::Skipgram, &cfg.search.base),
        cfg.search.workers,
        cfg.search.seed,
    )?;
    // per-epoch costs are a property of the machine; only the corpus shape changes
    let full_cost = sample_ctx
        .cost
        .for_profile(CorpusProfile::new(&full_split.train, cfg.search.base.t_ratio)?);
    info!("full budget {:.3}s", full_budget.budget_s);
    let full_ctx = BudgetContext {
        budget: full_budget.clone(),
        cost: full_cost,
    };

    let full_search = if cfg.full_tune {
        Some(run_search(&full_split, &cfg.search, Some(&full_ctx), None)?)
    } else {
        None
    };

    let replan = |hp: &HyperParams| HyperParams {
        epochs: epochs_for_budget(hp, &full_ctx.budget, &full_ctx.cost, cfg.search.safety).epochs,
        ..*hp
    };
    let mut rows = Vec::new();
    for &model in &cfg.search.models {
        let default = default_hp(model, &cfg.search.base);
        rows.push(evaluate_variant(
            &full_split,
            model,
            Variant::Default,
            default,
            &cfg.eval_seeds,
            &cfg.search,
        )?);
        if let Some(best) = sample_search.best_for(model) {
            let hp = replan(&best.hp);
            rows.push(evaluate_variant(
                &full_split,
                model,
                Variant::SampleTuned,
                hp,
                &cfg.eval_seeds,
                &cfg.search,
            )?);
        }
        if let Some(best) = full_search.as_ref().and_then(|s| s.best_for(model)) {
            rows.push(evaluate_variant(
                &full_split,
                model,
                Variant::FullTuned,
                best.hp,
                &cfg.eval_seeds,
                &cfg.search,
            )?);
        }
    }
    Ok(TransferReport {
        fraction: cfg.fraction,
        sample_sequences: sample.len(),
        full_sequences: full.len(),
        sample_budget: sample_ctx.budget,
        full_budget,
        sample_search,
        full_search,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::PlantedConfig;

    #[test]
    fn full_fraction_tunes_on_the_whole_corpus() {
        let c = PlantedConfig {
            sequences: 150,
            items_per_community: 15,
            ..Default::default()
        }
        .build()
        .unwrap();
        let mut search = SearchConfig::new(SearchMode::Constrained);
        search.stop.max_trials = 2;
        search.surrogate.initial_points = 2;
        search.space.dims[0].upper = 16.0;
        search.space.dims[1].upper = 3.0;
        search.space.dims[4].upper = 3.0;
        search.base.t_ratio = 0.0;
        let mut cfg = TransferConfig::new(search);
        cfg.fraction = 1.0;
        cfg.eval_seeds = vec![1, 2];
        let report = sample_transfer(&c, &cfg, None).unwrap();
        assert_eq!(report.sample_sequences, report.full_sequences);
        for m in ModelKind::ALL {
            assert!(report.row(m, Variant::Default).is_some());
            // a tuned row exists exactly when the search found a feasible incumbent
            assert_eq!(
                report.row(m, Variant::SampleTuned).is_some(),
                report.sample_search.best_for(m).is_some()
            );
        }
        assert_eq!(report.sample_budget.default_hp.t_ratio, 0.0);
        assert_eq!(report.sample_search.history.len(), 4);
    }

    #[test]
    fn rejects_unconstrained_search() {
        let c = PlantedConfig {
            sequences: 50,
            ..Default::default()
        }
        .build()
        .unwrap();
        let cfg = TransferConfig::new(SearchConfig::new(SearchMode::Unconstrained));
        assert!(sample_transfer(&c, &cfg, None).is_err());
    }
}
