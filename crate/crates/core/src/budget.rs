//! Runtime budgets: measure the default-configuration training time and turn
//! it into an epoch count for any candidate configuration.
//!
//! Per-epoch cost is predicted from the amount of work each model does. A
//! Skipgram iteration touches every (context, target) pair with `1 + N`
//! output vectors, so it does `contexts * (N + 1)` output updates. A CBOW
//! iteration averages the context vectors once, does `1 + N` output updates
//! and spreads the gradient back, so it does `positions * (N + 1)` output
//! updates. Output updates and context reads/writes each cost a multiple of
//! `d`; tokens and sampled outputs also carry costs that do not scale with
//! `d`, which dominate at small `d` and large `N`. The four coefficients per
//! model are fit by non-negative least squares on timed probe epochs,
//! minimizing relative error.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Downsampler};
use crate::error::{Error, Result};
use crate::trainer::{train, HyperParams, ModelKind, TrainOptions, Trainer};

/// Epochs in the default run that defines the budget.
pub const DEFAULT_EPOCHS: usize = 5;
/// Fraction of the budget a planned run may use.
pub const DEFAULT_SAFETY: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeBudget {
    /// Wall seconds of the default run.
    pub budget_s: f64,
    pub workers: usize,
    pub hardware_tag: String,
    pub default_hp: HyperParams,
    /// Unix seconds.
    pub measured_at: u64,
}

impl RuntimeBudget {
    pub fn new(budget_s: f64, workers: usize) -> Result<Self> {
        if !(budget_s > 0.0 && budget_s.is_finite()) {
            return Err(Error::InvalidArgument(format!("budget must be > 0, got {budget_s}")));
        }
        Ok(RuntimeBudget {
            budget_s,
            workers,
            hardware_tag: hardware_tag(),
            default_hp: HyperParams::default(),
            measured_at: now_unix(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Free-form description of the measuring machine.
pub fn hardware_tag() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} threads={}",
        std::env::consts::OS,
        std::env::consts::ARCH,
        threads
    )
}

/// Trains the default configuration (Skipgram, d=100, L=5, alpha=0.75,
/// N=5, lambda=0.025) for `epochs` epochs and records its wall time.
pub fn measure_default(corpus: &Corpus, workers: usize, epochs: usize, seed: u64) -> Result<RuntimeBudget> {
    let hp = HyperParams {
        epochs,
        ..HyperParams::default()
    };
    measure_run(corpus, &hp, workers, seed)
}

/// Budget from one timed training run of `hp`. Use it when the searched
/// configurations share non-default downsampling or min-count settings.
pub fn measure_run(corpus: &Corpus, hp: &HyperParams, workers: usize, seed: u64) -> Result<RuntimeBudget> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let opts = TrainOptions {
        workers,
        seed,
        ..Default::default()
    };
    let (_, stats) = train(corpus, hp, &opts)?;
    let mut budget = RuntimeBudget::new(stats.total_wall_s, workers)?;
    budget.default_hp = *hp;
    Ok(budget)
}

/// Downsampling passes averaged into a [`CorpusProfile`].
const PROFILE_DRAWS: usize = 8;

/// Shape statistics of a corpus after downsampling, enough to count the
/// work of one epoch for any window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub t_ratio: f64,
    /// Expected surviving tokens per epoch.
    pub kept_tokens: f64,
    /// `(length, sequences)`: expected number of sequences per
    /// post-downsampling length.
    pub lengths: Vec<(usize, f64)>,
}

impl CorpusProfile {
    /// Context counts are convex in sequence length, so the histogram comes
    /// from actual downsampling draws rather than from expected lengths.
    pub fn new(corpus: &Corpus, t_ratio: f64) -> Result<Self> {
        let ds = Downsampler::new(corpus.vocab(), t_ratio)?;
        let mut hist = std::collections::BTreeMap::new();
        let always = ds.keep_rates().iter().all(|&p| p >= 1.0);
        let draws = if always { 1 } else { PROFILE_DRAWS };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for seq in corpus.sequences() {
            for _ in 0..draws {
                let kept = seq.iter().filter(|&&id| ds.keep(id, &mut rng)).count();
                *hist.entry(kept).or_insert(0.0) += 1.0 / draws as f64;
            }
        }
        Ok(CorpusProfile {
            t_ratio,
            kept_tokens: ds.expected_kept(corpus.vocab()),
            lengths: hist.into_iter().filter(|&(n, _)| n > 0).collect(),
        })
    }

    /// Expected number of (position, context) pairs per epoch with windows
    /// drawn uniformly from `1..=window`.
    pub fn contexts(&self, window: usize) -> f64 {
        let max_len = self.lengths.last().map_or(0, |l| l.0);
        let w = window.max(1) as f64;
        // mean_min[a] = E[min(l, a)] for l ~ U{1..window}
        let mut prefix = vec![0.0; max_len + 1];
        for a in 0..max_len {
            let af = a as f64;
            let m = if a >= window {
                (w + 1.0) / 2.0
            } else {
                (af * (af + 1.0) / 2.0 + (w - af) * af) / w
            };
            prefix[a + 1] = prefix[a] + m;
        }
        self.lengths.iter().map(|&(n, count)| 2.0 * prefix[n] * count).sum()
    }

    /// Positions that have at least one context token.
    pub fn positions(&self) -> f64 {
        self.lengths
            .iter()
            .filter(|(n, _)| *n >= 2)
            .map(|&(n, c)| n as f64 * c)
            .sum()
    }

    /// Features of one epoch: kept tokens, sampled outputs, output-vector
    /// work (`outputs * d`) and context-vector work (`contexts * d`). The
    /// first two carry the costs that do not scale with `d` (downsampling,
    /// window and sampler draws, loop control).
    pub fn features(&self, hp: &HyperParams) -> [f64; FEATURES] {
        let d = hp.dim as f64;
        let per_target = hp.negatives as f64 + 1.0;
        let contexts = self.contexts(hp.window);
        let outputs = match hp.model {
            ModelKind::Skipgram => contexts * per_target,
            ModelKind::Cbow => self.positions() * per_target,
        };
        [self.kept_tokens, outputs, outputs * d, contexts * d]
    }
}

/// Number of cost-model features.
pub const FEATURES: usize = 4;

/// Seconds per unit of each feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCoefficients {
    pub s_per_token: f64,
    pub s_per_output: f64,
    pub s_per_output_dim: f64,
    pub s_per_context_dim: f64,
}

impl CostCoefficients {
    fn from_array(c: [f64; FEATURES]) -> Self {
        CostCoefficients {
            s_per_token: c[0],
            s_per_output: c[1],
            s_per_output_dim: c[2],
            s_per_context_dim: c[3],
        }
    }

    fn to_array(self) -> [f64; FEATURES] {
        [
            self.s_per_token,
            self.s_per_output,
            self.s_per_output_dim,
            self.s_per_context_dim,
        ]
    }

    fn predict(&self, f: [f64; FEATURES]) -> f64 {
        self.to_array().iter().zip(f).map(|(c, x)| c * x).sum()
    }
}

/// One timed probe epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeObservation {
    pub hp: HyperParams,
    pub epoch_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub hp: HyperParams,
    pub measured_s: f64,
    pub predicted_s: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub skipgram: CostCoefficients,
    pub cbow: CostCoefficients,
    pub profile: CorpusProfile,
    pub residuals: Vec<Residual>,
}

/// Least squares on the columns in `active`, after scaling each column to
/// unit maximum. Residuals are relative, so short and long probes weigh the
/// same.
fn solve_active(rows: &[([f64; FEATURES], f64)], active: &[usize]) -> Option<Vec<f64>> {
    let scale: Vec<f64> = active
        .iter()
        .map(|&j| rows.iter().map(|r| r.0[j].abs()).fold(0.0, f64::max).max(1e-300))
        .collect();
    let a = DMatrix::from_fn(rows.len(), active.len(), |i, k| {
        rows[i].0[active[k]] / scale[k] / rows[i].1
    });
    let b = DVector::from_element(rows.len(), 1.0);
    let svd = a.svd(true, true);
    let (max_sv, min_sv) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if !(min_sv > 1e-8 * max_sv) {
        return None;
    }
    let x = svd.solve(&b, 1e-12).ok()?;
    Some(x.iter().zip(&scale).map(|(c, s)| c / s).collect())
}

/// Index of the output-vector work feature, which every fit must keep.
const OUTPUT_WORK: usize = 2;

/// Non-negative fit: drops the most negative coefficient and refits until
/// all are non-negative. The output-vector work coefficient must survive.
fn fit_coefficients(rows: &[([f64; FEATURES], f64)]) -> Result<CostCoefficients> {
    if rows.len() < FEATURES {
        return Err(Error::SingularFit(format!(
            "{} probe(s) for {FEATURES} coefficients",
            rows.len()
        )));
    }
    let mut active: Vec<usize> = (0..FEATURES).collect();
    loop {
        let x = solve_active(rows, &active)
            .ok_or_else(|| Error::SingularFit("probe configurations do not vary enough".into()))?;
        let worst = (0..active.len())
            .filter(|&k| x[k] < 0.0)
            .min_by(|&a, &b| x[a].total_cmp(&x[b]));
        match worst {
            Some(k) if active[k] != OUTPUT_WORK && active.len() > 1 => {
                active.remove(k);
            }
            Some(_) => return Err(Error::SingularFit("fitted work cost is not positive".into())),
            None => {
                let mut c = [0.0; FEATURES];
                for (k, &j) in active.iter().enumerate() {
                    c[j] = x[k];
                }
                if c[OUTPUT_WORK] <= 0.0 {
                    return Err(Error::SingularFit("fitted work cost is not positive".into()));
                }
                return Ok(CostCoefficients::from_array(c));
            }
        }
    }
}

impl CostModel {
    /// Least-squares fit of the per-model coefficients from timed probes.
    pub fn fit(observations: &[ProbeObservation], profile: CorpusProfile) -> Result<Self> {
        let rows = |m: ModelKind| -> Vec<([f64; FEATURES], f64)> {
            observations
                .iter()
                .filter(|o| o.hp.model == m)
                .map(|o| (profile.features(&o.hp), o.epoch_s))
                .collect()
        };
        let skipgram = fit_coefficients(&rows(ModelKind::Skipgram))?;
        let cbow = fit_coefficients(&rows(ModelKind::Cbow))?;
        let mut model = CostModel {
            skipgram,
            cbow,
            profile,
            residuals: Vec::new(),
        };
        model.residuals = observations
            .iter()
            .map(|o| {
                let predicted_s = model.predict_epoch_s(&o.hp);
                Residual {
                    hp: o.hp,
                    measured_s: o.epoch_s,
                    predicted_s,
                    rel_error: (predicted_s - o.epoch_s).abs() / o.epoch_s.max(1e-12),
                }
            })
            .collect();
        Ok(model)
    }

    pub fn coefficients(&self, model: ModelKind) -> &CostCoefficients {
        match model {
            ModelKind::Skipgram => &self.skipgram,
            ModelKind::Cbow => &self.cbow,
        }
    }

    /// Predicted seconds for one epoch on the calibration corpus.
    pub fn predict_epoch_s(&self, hp: &HyperParams) -> f64 {
        self.predict_epoch_s_on(hp, &self.profile)
    }

    /// Predicted seconds for one epoch on another corpus.
    pub fn predict_epoch_s_on(&self, hp: &HyperParams, profile: &CorpusProfile) -> f64 {
        self.coefficients(hp.model).predict(profile.features(hp))
    }

    /// Same coefficients, applied to a different corpus.
    pub fn for_profile(&self, profile: CorpusProfile) -> CostModel {
        CostModel {
            skipgram: self.skipgram,
            cbow: self.cbow,
            profile,
            residuals: Vec::new(),
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(|r| r.rel_error).fold(0.0, f64::max)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Probe grid for one model type: every combination of two values of d, L
/// and N.
pub fn default_probes(model: ModelKind) -> Vec<HyperParams> {
    let mut probes = Vec::new();
    for &dim in &[10, 100] {
        for &window in &[2, 16] {
            for &negatives in &[2, 24] {
                probes.push(HyperParams {
                    model,
                    dim,
                    window,
                    negatives,
                    epochs: 1,
                    ..HyperParams::default()
                });
            }
        }
    }
    probes
}

/// Times one epoch per probe configuration, sequentially, and fits a
/// [`CostModel`].
pub fn fit_cost_model(corpus: &Corpus, probes: &[HyperParams], workers: usize, seed: u64) -> Result<CostModel> {
    for m in ModelKind::ALL {
        let n = probes.iter().filter(|p| p.model == m).count();
        if n < 4 {
            return Err(Error::SingularFit(format!("{n} probe(s) for {m}, need at least 4")));
        }
    }
    let t_ratio = probes[0].t_ratio;
    let opts = TrainOptions {
        workers,
        seed,
        ..Default::default()
    };
    let mut observations = Vec::with_capacity(probes.len());
    for hp in probes {
        let hp = HyperParams { epochs: 1, ..*hp };
        let mut trainer = Trainer::new(corpus, hp, opts)?;
        let epoch = trainer.run_epoch()?;
        observations.push(ProbeObservation {
            hp,
            epoch_s: epoch.wall_s,
        });
    }
    CostModel::fit(&observations, CorpusProfile::new(corpus, t_ratio)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub epochs: usize,
    pub predicted_epoch_s: f64,
    pub predicted_total_s: f64,
    /// Even one epoch is predicted to exceed the budget.
    pub infeasible: bool,
}

/// Largest epoch count whose predicted runtime fits in `safety * budget`.
/// Configurations that cannot fit one epoch get `epochs = 1` and are
/// flagged infeasible.
pub fn epochs_for_budget(hp: &HyperParams, budget: &RuntimeBudget, model: &CostModel, safety: f64) -> EpochPlan {
    plan_epochs(model.predict_epoch_s(hp), budget.budget_s, safety)
}

pub fn plan_epochs(predicted_epoch_s: f64, budget_s: f64, safety: f64) -> EpochPlan {
    let per = predicted_epoch_s.max(1e-12);
    let n = (safety * budget_s / per).floor();
    let infeasible = n < 1.0;
    if infeasible {
        warn!("one epoch is predicted to take {per:.3}s, over the {budget_s:.3}s budget");
    }
    let epochs = if infeasible { 1 } else { n as usize };
    EpochPlan {
        epochs,
        predicted_epoch_s: per,
        predicted_total_s: per * epochs as f64,
        infeasible,
    }
}

/// Epoch count for a re-run after a run of `epochs` epochs measured
/// `measured_s` against `budget_s`. Never increases the count.
pub fn corrected_epochs(epochs: usize, measured_s: f64, budget_s: f64, safety: f64) -> usize {
    if measured_s <= budget_s || measured_s <= 0.0 {
        return epochs;
    }
    let per = measured_s / epochs as f64;
    ((safety * budget_s / per).floor() as usize).clamp(1, epochs)
}
