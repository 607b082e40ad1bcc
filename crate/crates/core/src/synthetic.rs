//! Synthetic corpora with known structure, for tests, benchmarks and
//! desk-scale experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::Result;

/// Sequences that walk a ring of items inside one of several disjoint
/// communities. Each step moves forward by 1..=`max_step` positions, or with
/// probability `noise` jumps to a uniformly random item of the same
/// community. Items are named `c{community}_{item}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub communities: usize,
    pub items_per_community: usize,
    pub sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub max_step: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            communities: 2,
            items_per_community: 200,
            sequences: 4000,
            min_len: 5,
            max_len: 30,
            max_step: 2,
            noise: 0.1,
            seed: 1,
        }
    }
}

impl PlantedConfig {
    pub fn token_sequences(&self) -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let m = self.items_per_community;
        (0..self.sequences)
            .map(|_| {
                let c = rng.random_range(0..self.communities);
                let len = rng.random_range(self.min_len..=self.max_len);
                let mut item = rng.random_range(0..m);
                (0..len)
                    .map(|i| {
                        if i > 0 {
                            item = if rng.random::<f64>() < self.noise {
                                rng.random_range(0..m)
                            } else {
                                (item + rng.random_range(1..=self.max_step)) % m
                            };
                        }
                        format!("c{c}_{item}")
                    })
                    .collect()
            })
            .collect()
    }

    pub fn build(&self) -> Result<Corpus> {
        Corpus::from_token_sequences(&self.token_sequences(), None, 1)
    }
}

/// Community index encoded in a planted token name.
pub fn community_of(token: &str) -> Option<usize> {
    token.strip_prefix('c')?.split('_').next()?.parse().ok()
}

/// Independent uniform draws over `vocab` items; no learnable structure.
pub fn uniform_corpus(vocab: usize, sequences: usize, len: usize, seed: u64) -> Result<Corpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seqs: Vec<Vec<String>> = (0..sequences)
        .map(|_| (0..len).map(|_| format!("u{}", rng.random_range(0..vocab))).collect())
        .collect();
    Corpus::from_token_sequences(&seqs, None, 1)
}
