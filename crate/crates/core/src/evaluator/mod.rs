//! Next-event evaluation: for each (query, target) test pair, retrieve the
//! k nearest items to the query by cosine similarity and score HR@k and
//! NDCG@k.

mod index;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::{EvalSplit, TestPair};
use crate::error::{Error, Result};
use crate::par;
use crate::trainer::EmbeddingModel;

pub use index::{CosineIndex, HnswParams, IndexMode, Scored};

pub const DEFAULT_K: usize = 10;
/// Runs averaged for confidence intervals.
pub const DEFAULT_RUNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub k: usize,
    /// Count `query == target` pairs as rank-1 hits instead of dropping them.
    pub keep_self_pairs: bool,
    pub record_ranks: bool,
    pub parallel: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: DEFAULT_K,
            keep_self_pairs: false,
            record_ranks: false,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Hit rate in percent.
    pub hr_at_k: f64,
    pub ndcg_at_k: f64,
    pub k: usize,
    pub n_pairs: usize,
    pub n_discarded: usize,
    /// 1-based rank of the target per evaluated pair, `None` for a miss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_pair_ranks: Option<Vec<Option<usize>>>,
}

/// Discounted gain of a single relevant item at 1-based `rank`.
#[inline]
pub fn ndcg_gain(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Outcome of one test pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairOutcome {
    Discarded,
    Rank(Option<usize>),
}

fn score_pair(index: &CosineIndex, pair: &TestPair, opts: &EvalOptions) -> PairOutcome {
    if pair.target == Some(pair.query) {
        return if opts.keep_self_pairs {
            PairOutcome::Rank(Some(1))
        } else {
            PairOutcome::Discarded
        };
    }
    let Some(target) = pair.target else {
        return PairOutcome::Rank(None);
    };
    let rank = index
        .top_k(pair.query, opts.k)
        .iter()
        .position(|s| s.id == target)
        .map(|p| p + 1);
    PairOutcome::Rank(rank)
}

/// Scores `pairs` against `index`. Ids are rows of the indexed matrix.
pub fn evaluate(index: &CosineIndex, pairs: &[TestPair], opts: &EvalOptions) -> Result<EvalResult> {
    if opts.k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let outcomes = par::map(pairs, opts.parallel, |p| score_pair(index, p, opts));
    let ranks: Vec<Option<usize>> = outcomes
        .iter()
        .filter_map(|o| match o {
            PairOutcome::Rank(r) => Some(*r),
            PairOutcome::Discarded => None,
        })
        .collect();
    if ranks.is_empty() {
        return Err(Error::NoEvalPairs);
    }
    let n = ranks.len();
    let hits = ranks.iter().filter(|r| r.is_some()).count();
    // sequential sum keeps the result independent of thread scheduling
    let gain: f64 = ranks.iter().map(|r| r.map_or(0.0, ndcg_gain)).sum();
    Ok(EvalResult {
        hr_at_k: 100.0 * hits as f64 / n as f64,
        ndcg_at_k: gain / n as f64,
        k: opts.k,
        n_pairs: n,
        n_discarded: outcomes.len() - n,
        per_pair_ranks: opts.record_ranks.then_some(ranks),
    })
}

/// Builds an index over the model's input vectors and scores the split's
/// test pairs.
pub fn evaluate_model(
    model: &EmbeddingModel,
    split: &EvalSplit,
    mode: IndexMode,
    opts: &EvalOptions,
) -> Result<EvalResult> {
    if model.vocab().len() != split.train.vocab().len() {
        return Err(Error::VocabMismatch(format!(
            "model has {} rows, training vocabulary has {} tokens",
            model.vocab().len(),
            split.train.vocab().len()
        )));
    }
    let index = CosineIndex::build(model.input_vectors(), model.dim(), mode);
    evaluate(&index, &split.test_pairs, opts)
}

/// Writes `query,target,rank` rows with rank -1 for misses. Discarded pairs
/// are skipped.
pub fn write_per_pair_csv(path: &Path, split: &EvalSplit, result: &EvalResult, keep_self_pairs: bool) -> Result<()> {
    let ranks = result
        .per_pair_ranks
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("result has no per-pair ranks".into()))?;
    let vocab = split.train.vocab();
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(f, "query,target,rank").map_err(io)?;
    let kept = split
        .test_pairs
        .iter()
        .filter(|p| keep_self_pairs || p.target != Some(p.query));
    for (p, r) in kept.zip(ranks) {
        let target = p.target.map_or("<unseen>", |t| vocab.token(t));
        let rank = r.map_or(-1, |r| r as i64);
        writeln!(f, "{},{},{}", vocab.token(p.query), target, rank).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Mean and 95% confidence half-width of a sample (Student t).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    pub fn of(values: &[f64]) -> Result<Self> {
        let r = values.len();
        if r < 2 {
            return Err(Error::InvalidArgument(format!(
                "a confidence interval needs at least 2 runs, got {r}"
            )));
        }
        let mean = values.iter().sum::<f64>() / r as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
        let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .inverse_cdf(0.975);
        Ok(Interval {
            mean,
            half_width: t * var.sqrt() / (r as f64).sqrt(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    pub hr_at_k: Interval,
    pub ndcg_at_k: Interval,
}

/// Aggregates repeated runs (different seeds) into means with 95% CIs.
pub fn aggregate_runs(results: &[EvalResult]) -> Result<RunSummary> {
    let hr: Vec<f64> = results.iter().map(|r| r.hr_at_k).collect();
    let ndcg: Vec<f64> = results.iter().map(|r| r.ndcg_at_k).collect();
    Ok(RunSummary {
        runs: results.len(),
        hr_at_k: Interval::of(&hr)?,
        ndcg_at_k: Interval::of(&ndcg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot_index(n: usize) -> CosineIndex {
        let mut v = vec![0.0f32; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        CosineIndex::exact(&v, n)
    }

    fn pair(q: u32, t: u32) -> TestPair {
        TestPair {
            query: q,
            target: Some(t),
        }
    }

    #[test]
    fn single_pair_rank_three() {
        // with one-hot rows every cosine is 0 and ranking is by id
        let idx = one_hot_index(6);
        let r = evaluate(&idx, &[pair(0, 3)], &EvalOptions::default()).unwrap();
        assert_eq!(r.hr_at_k, 100.0);
        assert_eq!(r.ndcg_at_k, 0.5);
        assert_eq!(ndcg_gain(3), 0.5);
    }

    #[test]
    fn perfect_model() {
        // rows come in identical pairs (0,1), (2,3), ...
        let base = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let v: Vec<f32> = base.iter().flat_map(|r| r.iter().chain(r.iter())).copied().collect();
        let idx = CosineIndex::exact(&v, 3);
        let pairs = [pair(0, 1), pair(1, 0), pair(2, 3), pair(4, 5)];
        let r = evaluate(&idx, &pairs, &EvalOptions::default()).unwrap();
        assert_eq!(r.hr_at_k, 100.0);
        assert_eq!(r.ndcg_at_k, 1.0);
    }

    #[test]
    fn self_pairs_are_discarded() {
        let idx = one_hot_index(20);
        let pairs = [pair(0, 15), pair(4, 4), pair(2, 1)];
        let r = evaluate(
            &idx,
            &pairs,
            &EvalOptions {
                record_ranks: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.n_pairs, 2);
        assert_eq!(r.n_discarded, 1);
        assert_eq!(r.per_pair_ranks, Some(vec![None, Some(2)]));
        assert_eq!(r.hr_at_k, 50.0);

        let keep = evaluate(
            &idx,
            &pairs,
            &EvalOptions {
                keep_self_pairs: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(keep.n_pairs, 3);
        assert!((keep.hr_at_k - 200.0 / 3.0).abs() < 1e-12);

        assert!(matches!(
            evaluate(&idx, &[pair(3, 3)], &EvalOptions::default()),
            Err(Error::NoEvalPairs)
        ));
    }

    #[test]
    fn unseen_target_is_a_miss() {
        let idx = one_hot_index(4);
        let r = evaluate(&idx, &[TestPair { query: 0, target: None }], &EvalOptions::default()).unwrap();
        assert_eq!(r.hr_at_k, 0.0);
        assert_eq!(r.n_pairs, 1);
    }

    #[test]
    fn t_interval_examples() {
        let ci = Interval::of(&[10.0, 12.0, 14.0, 11.0, 13.0]).unwrap();
        assert!((ci.mean - 12.0).abs() < 1e-12);
        assert!((ci.half_width - 1.963).abs() < 1e-3, "{}", ci.half_width);
        let flat = Interval::of(&[3.5; 5]).unwrap();
        assert_eq!(flat.half_width, 0.0);
        assert!(Interval::of(&[1.0]).is_err());
    }
}
