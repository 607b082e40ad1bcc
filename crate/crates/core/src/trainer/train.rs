use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{EmbeddingModel, SharedMatrix};
use super::params::{HyperParams, ModelKind};
use super::sampler::NegativeSampler;
use crate::corpus::{Corpus, Downsampler};
use crate::error::{Error, Result};

/// Absolute learning-rate floor reached at the end of the schedule.
pub const MIN_LEARNING_RATE: f64 = 1e-4;
/// Attempts to draw a negative different from the positive before the
/// negative is skipped.
const NEGATIVE_REDRAWS: usize = 8;
/// Raw tokens a worker processes between learning-rate refreshes.
const LR_REFRESH_TOKENS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub workers: usize,
    pub seed: u64,
    /// Upper bound on the bytes of both weight matrices together.
    pub memory_cap_bytes: u64,
    /// Draw the effective window from `1..=L` at every position. Disabling
    /// always uses the full window `L`.
    pub window_sampling: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            workers: 1,
            seed: 0,
            memory_cap_bytes: 8 << 30,
            window_sampling: true,
        }
    }
}

impl TrainOptions {
    pub fn with_seed(seed: u64) -> Self {
        TrainOptions {
            seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epoch_times_s: Vec<f64>,
    pub epoch_losses: Vec<f64>,
    pub tokens_per_s: f64,
    pub final_loss: f64,
    pub total_wall_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub wall_s: f64,
    /// Mean loss per (input, output) pair over the epoch.
    pub mean_loss: f64,
    pub kept_tokens: u64,
    pub learning_rate: f64,
}

/// Effective window for one position: uniform on `1..=max_window`.
#[inline]
pub fn sample_window<R: Rng + ?Sized>(max_window: usize, rng: &mut R) -> usize {
    rng.random_range(1..=max_window)
}

/// `[lo, hi]` context bounds around `pos` for window `l`, truncated to the
/// sequence.
#[inline]
pub fn context_bounds(pos: usize, len: usize, l: usize) -> (usize, usize) {
    (pos.saturating_sub(l), (pos + l).min(len - 1))
}

/// Splits `sequences` into `workers` contiguous ranges of roughly equal
/// token counts.
fn partition(sequences: &[Vec<u32>], workers: usize) -> Vec<Range<usize>> {
    let total: usize = sequences.iter().map(Vec::len).sum();
    let mut parts = Vec::with_capacity(workers);
    let mut start = 0;
    let mut acc = 0usize;
    for w in 0..workers {
        let goal = total * (w + 1) / workers;
        let mut end = start;
        while end < sequences.len() && (acc < goal || w + 1 == workers) {
            acc += sequences[end].len();
            end += 1;
        }
        parts.push(start..end);
        start = end;
    }
    parts
}

fn mix_seed(seed: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stateful trainer that advances one epoch at a time. The learning-rate
/// schedule spans `hp.epochs` epochs.
pub struct Trainer<'a> {
    corpus: &'a Corpus,
    hp: HyperParams,
    opts: TrainOptions,
    input: SharedMatrix,
    output: SharedMatrix,
    negatives: NegativeSampler,
    downsampler: Downsampler,
    parts: Vec<Range<usize>>,
    processed: AtomicU64,
    planned_tokens: u64,
    epoch: usize,
    stats: TrainStats,
    #[cfg(feature = "parallel")]
    pool: Option<rayon::ThreadPool>,
}

struct WorkerOutcome {
    loss: f64,
    pairs: u64,
    kept: u64,
}

struct Scratch {
    kept: Vec<u32>,
    v: Vec<f32>,
    u: Vec<f32>,
    grad: Vec<f32>,
}

impl<'a> Trainer<'a> {
    pub fn new(corpus: &'a Corpus, hp: HyperParams, opts: TrainOptions) -> Result<Self> {
        hp.validate()?;
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if opts.workers == 0 {
            return Err(Error::InvalidArgument("workers must be >= 1".into()));
        }
        let vocab = corpus.vocab();
        let needed = 2 * vocab.len() as u64 * hp.dim as u64 * 4;
        if needed > opts.memory_cap_bytes {
            return Err(Error::MemoryCap {
                needed,
                cap: opts.memory_cap_bytes,
            });
        }
        let negatives = NegativeSampler::new(vocab, hp.alpha)?;
        let downsampler = Downsampler::new(vocab, hp.t_ratio)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed));
        let input = SharedMatrix::uniform(vocab.len(), hp.dim, 0.5 / hp.dim as f32, &mut init_rng);
        let output = SharedMatrix::zeros(vocab.len(), hp.dim);

        #[cfg(feature = "parallel")]
        let pool = if opts.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(opts.workers)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
            )
        } else {
            None
        };

        Ok(Trainer {
            corpus,
            hp,
            opts,
            input,
            output,
            negatives,
            downsampler,
            parts: partition(corpus.sequences(), opts.workers),
            processed: AtomicU64::new(0),
            planned_tokens: hp.epochs as u64 * corpus.total_tokens(),
            epoch: 0,
            stats: TrainStats::default(),
            #[cfg(feature = "parallel")]
            pool,
        })
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    fn learning_rate(&self, processed: u64) -> f64 {
        let start = self.hp.learning_rate;
        let floor = MIN_LEARNING_RATE.max(MIN_LEARNING_RATE * start).min(start);
        let progress = (processed as f64 / self.planned_tokens.max(1) as f64).min(1.0);
        (start - (start - floor) * progress).max(floor)
    }

    pub fn run_epoch(&mut self) -> Result<EpochStats> {
        let epoch = self.epoch;
        let started = Instant::now();
        let outcomes = self.run_workers(epoch);
        let wall_s = started.elapsed().as_secs_f64();

        if let Some(pos) = self.input.first_non_finite().or_else(|| self.output.first_non_finite()) {
            return Err(Error::Diverged(format!(
                "non-finite weight in row {} after epoch {} (lambda={}, d={}, N={})",
                pos / self.hp.dim,
                epoch + 1,
                self.hp.learning_rate,
                self.hp.dim,
                self.hp.negatives
            )));
        }

        let (loss, pairs, kept) = outcomes.iter().fold((0.0, 0u64, 0u64), |acc, o| {
            (acc.0 + o.loss, acc.1 + o.pairs, acc.2 + o.kept)
        });
        let mean_loss = if pairs > 0 { loss / pairs as f64 } else { 0.0 };
        self.epoch += 1;
        self.stats.epoch_times_s.push(wall_s);
        self.stats.epoch_losses.push(mean_loss);
        self.stats.final_loss = mean_loss;
        self.stats.total_wall_s += wall_s;
        let raw = self.corpus.total_tokens() as f64 * self.epoch as f64;
        self.stats.tokens_per_s = if self.stats.total_wall_s > 0.0 {
            raw / self.stats.total_wall_s
        } else {
            0.0
        };
        Ok(EpochStats {
            epoch: self.epoch,
            wall_s,
            mean_loss,
            kept_tokens: kept,
            learning_rate: self.learning_rate(self.processed.load(Ordering::Relaxed)),
        })
    }

    /// Runs the remaining scheduled epochs.
    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.hp.epochs {
            self.run_epoch()?;
        }
        Ok(())
    }

    fn run_workers(&self, epoch: usize) -> Vec<WorkerOutcome> {
        let workers = self.opts.workers;
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| {
                (0..workers)
                    .into_par_iter()
                    .map(|w| self.run_worker(epoch, w))
                    .collect()
            });
        }
        (0..workers).map(|w| self.run_worker(epoch, w)).collect()
    }

    fn run_worker(&self, epoch: usize, worker: usize) -> WorkerOutcome {
        let hp = &self.hp;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.opts.seed));
        rng.set_stream((epoch * self.opts.workers + worker) as u64 + 1);
        let d = hp.dim;
        let mut s = Scratch {
            kept: Vec::new(),
            v: vec![0.0; d],
            u: vec![0.0; d],
            grad: vec![0.0; d],
        };
        let mut out = WorkerOutcome {
            loss: 0.0,
            pairs: 0,
            kept: 0,
        };
        let mut pending = 0u64;
        let mut lr = self.learning_rate(self.processed.load(Ordering::Relaxed)) as f32;

        for seq in &self.corpus.sequences()[self.parts[worker].clone()] {
            pending += seq.len() as u64;
            if pending >= LR_REFRESH_TOKENS {
                let total = self.processed.fetch_add(pending, Ordering::Relaxed) + pending;
                pending = 0;
                lr = self.learning_rate(total) as f32;
            }
            let mut kept = std::mem::take(&mut s.kept);
            self.downsampler.filter_into(seq, &mut rng, &mut kept);
            out.kept += kept.len() as u64;
            let n = kept.len();
            for pos in 0..n {
                if n < 2 {
                    break;
                }
                let l = if self.opts.window_sampling {
                    sample_window(hp.window, &mut rng)
                } else {
                    hp.window
                };
                let (lo, hi) = context_bounds(pos, n, l);
                match hp.model {
                    ModelKind::Skipgram => {
                        for c in lo..=hi {
                            if c == pos {
                                continue;
                            }
                            let (loss, pairs) = self.skipgram_step(kept[c], kept[pos], lr, &mut rng, &mut s);
                            out.loss += loss;
                            out.pairs += pairs;
                        }
                    }
                    ModelKind::Cbow => {
                        let (loss, pairs) = self.cbow_step(&kept, pos, lo, hi, lr, &mut rng, &mut s);
                        out.loss += loss;
                        out.pairs += pairs;
                    }
                }
            }
            s.kept = kept;
        }
        self.processed.fetch_add(pending, Ordering::Relaxed);
        out
    }

    #[inline]
    fn draw_negative<R: Rng>(&self, positive: u32, rng: &mut R) -> Option<u32> {
        (0..NEGATIVE_REDRAWS)
            .map(|_| self.negatives.sample(rng))
            .find(|&id| id != positive)
    }

    /// Logistic updates of `hidden` against the positive `target` and N
    /// negatives. Output rows are updated in place; the accumulated hidden
    /// gradient step is left in `s.grad`.
    #[inline]
    fn output_layer<R: Rng>(&self, target: u32, lr: f32, rng: &mut R, s: &mut Scratch) -> (f64, u64) {
        s.grad.iter_mut().for_each(|x| *x = 0.0);
        let mut loss = 0.0f64;
        let mut pairs = 0u64;
        for k in 0..=self.hp.negatives {
            let (id, label) = if k == 0 {
                (target, 1.0f32)
            } else {
                match self.draw_negative(target, rng) {
                    Some(id) => (id, 0.0),
                    None => continue,
                }
            };
            self.output.load_row(id as usize, &mut s.u);
            let f = dot(&s.u, &s.v);
            let sig = sigmoid(f);
            let p = if label > 0.5 { sig } else { 1.0 - sig };
            loss -= (p.max(1e-7) as f64).ln();
            pairs += 1;
            let g = (label - sig) * lr;
            axpy(g, &s.u, &mut s.grad);
            axpy(g, &s.v, &mut s.u);
            self.output.store_row(id as usize, &s.u);
        }
        (loss, pairs)
    }

    fn skipgram_step<R: Rng>(&self, context: u32, target: u32, lr: f32, rng: &mut R, s: &mut Scratch) -> (f64, u64) {
        self.input.load_row(context as usize, &mut s.v);
        let r = self.output_layer(target, lr, rng, s);
        self.input.add_to_row(context as usize, &s.grad);
        r
    }

    #[allow(clippy::too_many_arguments)]
    fn cbow_step<R: Rng>(
        &self,
        kept: &[u32],
        pos: usize,
        lo: usize,
        hi: usize,
        lr: f32,
        rng: &mut R,
        s: &mut Scratch,
    ) -> (f64, u64) {
        let count = hi - lo; // excludes pos itself
        if count == 0 {
            return (0.0, 0);
        }
        s.v.iter_mut().for_each(|x| *x = 0.0);
        for c in (lo..=hi).filter(|&c| c != pos) {
            self.input.load_row(kept[c] as usize, &mut s.u);
            axpy(1.0, &s.u, &mut s.v);
        }
        let inv = 1.0 / count as f32;
        s.v.iter_mut().for_each(|x| *x *= inv);
        let r = self.output_layer(kept[pos], lr, rng, s);
        s.grad.iter_mut().for_each(|x| *x *= inv);
        for c in (lo..=hi).filter(|&c| c != pos) {
            self.input.add_to_row(kept[c] as usize, &s.grad);
        }
        r
    }

    pub fn model(&self) -> EmbeddingModel {
        EmbeddingModel::new(
            self.corpus.vocab().clone(),
            self.hp.dim,
            self.input.snapshot(),
            self.output.snapshot(),
        )
        .expect("matrix shapes match the vocabulary")
    }

    #[cfg(test)]
    pub(crate) fn set_rows(&mut self, input: &[f32], output: &[f32]) {
        for r in 0..self.input.rows() {
            let d = self.hp.dim;
            self.input.store_row(r, &input[r * d..(r + 1) * d]);
            self.output.store_row(r, &output[r * d..(r + 1) * d]);
        }
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(a: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

/// Trains a model for `hp.epochs` epochs.
pub fn train(corpus: &Corpus, hp: &HyperParams, opts: &TrainOptions) -> Result<(EmbeddingModel, TrainStats)> {
    let mut trainer = Trainer::new(corpus, *hp, *opts)?;
    trainer.run()?;
    let model = trainer.model();
    Ok((model, trainer.stats.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::sgns;

    fn corpus(lines: &[String]) -> Corpus {
        let seqs: Vec<Vec<&str>> = lines.iter().map(|l| l.split_whitespace().collect()).collect();
        Corpus::from_token_sequences(&seqs, None, 1).unwrap()
    }

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        d / (na * nb)
    }

    #[test]
    fn partition_covers_all_sequences() {
        let seqs: Vec<Vec<u32>> = (0..37).map(|i| vec![0; 1 + i % 5]).collect();
        for w in 1..6 {
            let p = partition(&seqs, w);
            assert_eq!(p.len(), w);
            assert_eq!(p[0].start, 0);
            assert_eq!(p.last().unwrap().end, seqs.len());
            for pair in p.windows(2) {
                assert_eq!(pair[0].end, pair[1].start);
            }
        }
    }

    #[test]
    fn window_draws_and_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| sample_window(1, &mut rng) == 1));
        // at the sequence start only the right side is available
        assert_eq!(context_bounds(1, 10, 3), (0, 4));
        assert_eq!(context_bounds(8, 10, 3), (5, 9));
        assert_eq!(context_bounds(0, 1, 5), (0, 0));
    }

    #[test]
    fn learning_rate_decays_linearly_to_floor() {
        let c = corpus(&["a b c".to_string()]);
        let hp = HyperParams {
            epochs: 2,
            learning_rate: 0.025,
            dim: 2,
            ..Default::default()
        };
        let t = Trainer::new(&c, hp, TrainOptions::default()).unwrap();
        assert_eq!(t.learning_rate(0), 0.025);
        assert!((t.learning_rate(3) - (0.025 - (0.025 - 1e-4) * 0.5)).abs() < 1e-12);
        assert_eq!(t.learning_rate(6), 1e-4);
        assert_eq!(t.learning_rate(100), 1e-4);
    }

    #[test]
    fn memory_cap_rejected_before_allocation() {
        let c = corpus(&["a b c".to_string()]);
        let opts = TrainOptions {
            memory_cap_bytes: 100,
            ..Default::default()
        };
        let hp = HyperParams {
            dim: 100,
            ..Default::default()
        };
        assert!(matches!(Trainer::new(&c, hp, opts), Err(Error::MemoryCap { .. })));
    }

    #[test]
    fn kernel_step_follows_analytic_gradient() {
        // one skipgram pair with N negatives, checked against sgns_gradient
        let c = corpus(&["a b c d e f".to_string()]);
        let d = 6;
        let hp = HyperParams {
            dim: d,
            negatives: 3,
            epochs: 1,
            t_ratio: 0.0,
            ..Default::default()
        };
        let mut t = Trainer::new(&c, hp, TrainOptions::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let input: Vec<f32> = (0..6 * d).map(|_| rng.random::<f32>() - 0.5).collect();
        let output: Vec<f32> = (0..6 * d).map(|_| rng.random::<f32>() - 0.5).collect();
        t.set_rows(&input, &output);

        // replay the negative draws the kernel will make; pick a seed whose
        // negatives are distinct so each output row is touched once
        let lr = 1e-3f32;
        let (mut draw_rng, negs) = (0..)
            .map(|seed| {
                let rng = ChaCha8Rng::seed_from_u64(seed);
                let mut replay = rng.clone();
                let negs: Vec<u32> = (0..3).filter_map(|_| t.draw_negative(1, &mut replay)).collect();
                (rng, negs)
            })
            .find(|(_, negs)| {
                let mut u = negs.clone();
                u.sort();
                u.dedup();
                u.len() == 3
            })
            .unwrap();

        let mut s = Scratch {
            kept: vec![],
            v: vec![0.0; d],
            u: vec![0.0; d],
            grad: vec![0.0; d],
        };
        t.skipgram_step(0, 1, lr, &mut draw_rng, &mut s);
        let after = t.model();

        let row = |m: &[f32], i: u32| -> Vec<f64> {
            m[i as usize * d..(i as usize + 1) * d]
                .iter()
                .map(|&x| x as f64)
                .collect()
        };
        let v = row(&input, 0);
        let mut outs = vec![row(&output, 1)];
        outs.extend(negs.iter().map(|&n| row(&output, n)));
        let refs: Vec<&[f64]> = outs.iter().map(Vec::as_slice).collect();
        let g = sgns::sgns_gradient(&v, &refs, &sgns::positive_then_negatives(negs.len()));

        for j in 0..d {
            let moved = after.vector(0)[j] as f64 - v[j];
            assert!((moved + lr as f64 * g.input[j]).abs() < 1e-6, "input dim {j}");
        }
        for (k, &id) in std::iter::once(&1u32).chain(negs.iter()).enumerate() {
            for j in 0..d {
                let moved = after.output_vector(id)[j] as f64 - outs[k][j];
                assert!(
                    (moved + lr as f64 * g.outputs[k][j]).abs() < 1e-6,
                    "output {id} dim {j}"
                );
            }
        }
    }

    #[test]
    fn two_token_corpus_converges() {
        let lines: Vec<String> = (0..200).map(|_| "a b".to_string()).collect();
        let c = corpus(&lines);
        let hp = HyperParams {
            dim: 4,
            negatives: 1,
            window: 1,
            epochs: 50,
            t_ratio: 0.0,
            learning_rate: 0.025,
            ..Default::default()
        };
        let mut t = Trainer::new(&c, hp, TrainOptions::with_seed(1)).unwrap();
        let (a, b) = (c.vocab().id("a").unwrap(), c.vocab().id("b").unwrap());
        // With two tokens every negative is the context itself, so the
        // optimum aligns v_a with u_b - u_a and v_b with u_a - u_b.
        let mut cosines = Vec::new();
        for _ in 0..50 {
            t.run_epoch().unwrap();
            let m = t.model();
            cosines.push(cosine(m.vector(a), m.output_vector(b)));
        }
        let m = t.model();
        let score: f64 = m
            .output_vector(b)
            .iter()
            .zip(m.vector(a))
            .map(|(x, y)| (x * y) as f64)
            .sum();
        assert!(sgns::sigmoid(score) > 0.9, "sigma = {}", sgns::sigmoid(score));
        let early: f64 = cosines[..5].iter().sum::<f64>() / 5.0;
        let late: f64 = cosines[45..].iter().sum::<f64>() / 5.0;
        assert!(late > early && late > 0.9, "{early} -> {late}");
        let ua_minus_ub: Vec<f32> = m
            .output_vector(b)
            .iter()
            .zip(m.output_vector(a))
            .map(|(x, y)| x - y)
            .collect();
        assert!(cosine(m.vector(a), &ua_minus_ub) > 0.95);
        assert!(cosine(m.vector(a), m.vector(b)) < -0.9);
    }

    #[test]
    fn single_worker_is_bit_reproducible() {
        let lines: Vec<String> = (0..300)
            .map(|i| format!("t{} t{} t{} t{}", i % 7, i % 13, (i + 3) % 7, i % 5))
            .collect();
        let c = corpus(&lines);
        let hp = HyperParams {
            dim: 8,
            epochs: 3,
            ..Default::default()
        };
        for model in ModelKind::ALL {
            let hp = HyperParams { model, ..hp };
            let (m1, s1) = train(&c, &hp, &TrainOptions::with_seed(7)).unwrap();
            let (m2, s2) = train(&c, &hp, &TrainOptions::with_seed(7)).unwrap();
            assert_eq!(m1.input_vectors(), m2.input_vectors());
            assert_eq!(m1.output_vectors(), m2.output_vectors());
            assert_eq!(s1.epoch_losses, s2.epoch_losses);
            let (m3, _) = train(&c, &hp, &TrainOptions::with_seed(8)).unwrap();
            assert_ne!(m1.input_vectors(), m3.input_vectors());
        }
    }

    #[test]
    fn multi_worker_training_stays_finite() {
        let lines: Vec<String> = (0..400)
            .map(|i| format!("t{} t{} t{}", i % 17, i % 19, i % 23))
            .collect();
        let c = corpus(&lines);
        let hp = HyperParams {
            dim: 16,
            epochs: 2,
            ..Default::default()
        };
        let opts = TrainOptions {
            workers: 4,
            seed: 1,
            ..Default::default()
        };
        let (m, s) = train(&c, &hp, &opts).unwrap();
        assert!(m.is_finite());
        assert_eq!(s.epoch_times_s.len(), 2);
        assert_eq!(m.vocab().len() * 16, m.input_vectors().len());
    }
}
