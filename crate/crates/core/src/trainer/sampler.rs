use rand::Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Draws negative ids with probability proportional to `count^alpha`, using
/// Vose's alias method (exact, O(1) per draw).
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    alpha: f64,
    prob: Vec<f64>,
    alias: Vec<u32>,
    weights: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocabulary, alpha: f64) -> Result<Self> {
        Self::from_counts(vocab.counts(), alpha)
    }

    pub fn from_counts(counts: &[u64], alpha: f64) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "negative sampling needs at least 2 tokens, vocabulary has {}",
                counts.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::InvalidArgument("zero count in vocabulary".into()));
        }
        let raw: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(alpha)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();

        let n = weights.len();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0u32; n];
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
        let mut small = Vec::with_capacity(n);
        let mut large = Vec::with_capacity(n);
        for (i, &p) in scaled.iter().enumerate() {
            if p < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
            alias[i] = i as u32;
        }
        Ok(NegativeSampler {
            alpha,
            prob,
            alias,
            weights,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Normalized sampling distribution.
    pub fn probabilities(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i as u32
        } else {
            self.alias[i]
        }
    }
}
