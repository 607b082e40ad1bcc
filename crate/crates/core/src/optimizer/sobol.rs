//! Sobol low-discrepancy sequence (Antonov–Saleev Gray-code order) with
//! Joe–Kuo direction numbers, optionally scrambled by a random digital
//! shift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const BITS: usize = 32;

/// `(degree s, polynomial coefficients a, initial m_1..m_s)` for dimensions
/// 2 through 21.
const JOE_KUO: [(u32, u32, &[u32]); 20] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

/// Highest supported dimension.
pub const MAX_DIM: usize = JOE_KUO.len() + 1;

fn directions(dim_index: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim_index == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim_index - 1];
    let s = s as usize;
    for k in 0..s.min(BITS) {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}

#[derive(Debug, Clone)]
pub struct Sobol {
    dirs: Vec<[u32; BITS]>,
    shift: Vec<u32>,
    state: Vec<u32>,
    index: u64,
}

impl Sobol {
    /// Unscrambled sequence; the first point is the origin.
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::SobolDimension {
                requested: dim,
                available: MAX_DIM,
            });
        }
        Ok(Sobol {
            dirs: (0..dim).map(directions).collect(),
            shift: vec![0; dim],
            state: vec![0; dim],
            index: 0,
        })
    }

    /// Sequence XOR-shifted by a seeded random word per coordinate. The
    /// shift preserves the dyadic stratification of the points.
    pub fn scrambled(dim: usize, seed: u64) -> Result<Self> {
        let mut s = Self::new(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.shift = (0..dim).map(|_| rng.random()).collect();
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.dirs.len()
    }

    /// Raw 32-bit coordinates of the next point.
    pub fn next_bits(&mut self) -> Vec<u32> {
        let out: Vec<u32> = self.state.iter().zip(&self.shift).map(|(x, s)| x ^ s).collect();
        // Gray-code step: flip the direction number of the lowest zero bit
        let c = (!self.index).trailing_zeros() as usize;
        if c < BITS {
            for (x, d) in self.state.iter_mut().zip(&self.dirs) {
                *x ^= d[c];
            }
        }
        self.index += 1;
        out
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        self.next_bits()
            .into_iter()
            .map(|x| x as f64 / (1u64 << BITS) as f64)
            .collect()
    }

    /// Skips `n` points.
    pub fn skip(&mut self, n: u64) {
        for _ in 0..n {
            self.next_bits();
        }
    }
}

/// The first `count` points of a `dim`-dimensional sequence. `seed = None`
/// gives the unscrambled sequence.
pub fn sobol_points(dim: usize, count: usize, seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
    let mut s = match seed {
        Some(seed) => Sobol::scrambled(dim, seed)?,
        None => Sobol::new(dim)?,
    };
    Ok((0..count).map(|_| s.next_point()).collect())
}
