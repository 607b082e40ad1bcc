use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMode {
    Exact,
    Approximate,
}

/// Candidate with its cosine score, ordered best-first: higher score, then
/// lower id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub id: u32,
    pub score: f32,
}

impl Scored {
    #[inline]
    fn better_than(&self, other: &Scored) -> bool {
        match self.score.partial_cmp(&other.score) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Less) => false,
            _ => self.id < other.id,
        }
    }
}

// heap ordering: the "greatest" element is the worst candidate
#[derive(Debug, Clone, Copy)]
struct Worst(Scored);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Worst {}
impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        if self.0.better_than(&other.0) {
            Ordering::Less
        } else if other.0.better_than(&self.0) {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }
}

// heap ordering: the "greatest" element is the best candidate
#[derive(Debug, Clone, Copy)]
struct Best(Scored);

impl PartialEq for Best {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Best {}
impl PartialOrd for Best {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Best {
    fn cmp(&self, other: &Self) -> Ordering {
        Worst(other.0).cmp(&Worst(self.0))
    }
}

/// Bounded best-k collector.
struct TopK {
    k: usize,
    heap: BinaryHeap<Worst>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, c: Scored) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(Worst(c));
        } else if let Some(worst) = self.heap.peek() {
            if c.better_than(&worst.0) {
                self.heap.pop();
                self.heap.push(Worst(c));
            }
        }
    }

    fn worst(&self) -> Option<Scored> {
        if self.heap.len() < self.k {
            None
        } else {
            self.heap.peek().map(|w| w.0)
        }
    }

    fn into_sorted(self) -> Vec<Scored> {
        // ascending Worst order is best-first
        self.heap.into_sorted_vec().into_iter().map(|w| w.0).collect()
    }
}

/// Cosine nearest-neighbour index over the rows of an embedding matrix.
pub struct CosineIndex {
    dim: usize,
    normed: Vec<f32>,
    graph: Option<Hnsw>,
}

impl CosineIndex {
    /// Exact index over a row-major `n x dim` matrix. Zero rows stay zero and
    /// score 0 against everything.
    pub fn exact(vectors: &[f32], dim: usize) -> Self {
        assert!(dim > 0 && vectors.len().is_multiple_of(dim), "matrix shape mismatch");
        let mut normed = vectors.to_vec();
        for row in normed.chunks_mut(dim) {
            let norm = row.iter().map(|x| x * x).sum::<f32>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        CosineIndex {
            dim,
            normed,
            graph: None,
        }
    }

    /// Graph-based approximate index (hierarchical small-world graph).
    pub fn approximate(vectors: &[f32], dim: usize, params: HnswParams) -> Self {
        let mut idx = Self::exact(vectors, dim);
        let graph = Hnsw::build(&idx, params);
        idx.graph = Some(graph);
        idx
    }

    pub fn build(vectors: &[f32], dim: usize, mode: IndexMode) -> Self {
        match mode {
            IndexMode::Exact => Self::exact(vectors, dim),
            IndexMode::Approximate => Self::approximate(vectors, dim, HnswParams::default()),
        }
    }

    pub fn mode(&self) -> IndexMode {
        if self.graph.is_some() {
            IndexMode::Approximate
        } else {
            IndexMode::Exact
        }
    }

    pub fn len(&self) -> usize {
        self.normed.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.normed.is_empty()
    }

    #[inline]
    fn row(&self, id: u32) -> &[f32] {
        let i = id as usize * self.dim;
        &self.normed[i..i + self.dim]
    }

    #[inline]
    pub fn cosine(&self, a: u32, b: u32) -> f32 {
        dot(self.row(a), self.row(b))
    }

    /// The `k` most cosine-similar ids to `query`, best first, never
    /// including `query` itself. Ties break by ascending id. Returns at most
    /// `|V| - 1` results.
    pub fn top_k(&self, query: u32, k: usize) -> Vec<Scored> {
        match &self.graph {
            Some(g) => g.search(self, query, k),
            None => self.exact_top_k(query, k),
        }
    }

    pub fn exact_top_k(&self, query: u32, k: usize) -> Vec<Scored> {
        let q = self.row(query);
        let mut top = TopK::new(k.min(self.len().saturating_sub(1)));
        for (id, row) in self.normed.chunks(self.dim).enumerate() {
            if id as u32 == query {
                continue;
            }
            top.offer(Scored {
                id: id as u32,
                score: dot(q, row),
            });
        }
        top.into_sorted()
    }

    /// Mean fraction of exact top-k neighbours recovered by [`Self::top_k`]
    /// over the given probe queries.
    pub fn recall_at(&self, probes: &[u32], k: usize) -> f64 {
        if probes.is_empty() {
            return 1.0;
        }
        let total: f64 = probes
            .iter()
            .map(|&q| {
                let exact: HashSet<u32> = self.exact_top_k(q, k).iter().map(|s| s.id).collect();
                if exact.is_empty() {
                    return 1.0;
                }
                let got = self.top_k(q, k).iter().filter(|s| exact.contains(&s.id)).count();
                got as f64 / exact.len() as f64
            })
            .sum();
        total / probes.len() as f64
    }
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnswParams {
    /// Links per node on upper layers; layer 0 keeps twice as many.
    pub m: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub seed: u64,
}

impl Default for HnswParams {
    fn default() -> Self {
        HnswParams {
            m: 16,
            ef_construction: 200,
            ef_search: 128,
            seed: 0x5eed,
        }
    }
}

struct Hnsw {
    params: HnswParams,
    // links[node][layer]
    links: Vec<Vec<Vec<u32>>>,
    entry: u32,
    top_layer: usize,
}

impl Hnsw {
    fn build(index: &CosineIndex, params: HnswParams) -> Self {
        let n = index.len();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let ml = 1.0 / (params.m.max(2) as f64).ln();
        let mut g = Hnsw {
            params,
            links: Vec::with_capacity(n),
            entry: 0,
            top_layer: 0,
        };
        for id in 0..n as u32 {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let level = (-u.ln() * ml).floor() as usize;
            g.links.push(vec![Vec::new(); level + 1]);
            if id == 0 {
                g.top_layer = level;
                continue;
            }
            g.insert(index, id, level);
        }
        g
    }

    fn max_links(&self, layer: usize) -> usize {
        if layer == 0 {
            self.params.m * 2
        } else {
            self.params.m
        }
    }

    fn insert(&mut self, index: &CosineIndex, id: u32, level: usize) {
        let q = index.row(id).to_vec();
        let mut ep = self.entry;
        for layer in (level + 1..=self.top_layer).rev() {
            ep = self.greedy(index, &q, ep, layer);
        }
        for layer in (0..=level.min(self.top_layer)).rev() {
            let found = self.search_layer(index, &q, &[ep], self.params.ef_construction, layer, None);
            let neighbours = self.select(index, &found, self.params.m);
            for &nb in &neighbours {
                self.links[id as usize][layer].push(nb);
                self.links[nb as usize][layer].push(id);
                let cap = self.max_links(layer);
                if self.links[nb as usize][layer].len() > cap {
                    self.prune(index, nb, layer, cap);
                }
            }
            if let Some(best) = found.first() {
                ep = best.id;
            }
        }
        if level > self.top_layer {
            self.top_layer = level;
            self.entry = id;
        }
    }

    /// Diversity heuristic: keep a candidate only if it is closer to the
    /// base than to every neighbour already kept.
    fn select(&self, index: &CosineIndex, sorted: &[Scored], m: usize) -> Vec<u32> {
        let mut kept: Vec<u32> = Vec::with_capacity(m);
        for c in sorted {
            if kept.len() >= m {
                break;
            }
            if kept.iter().all(|&k| index.cosine(c.id, k) < c.score) {
                kept.push(c.id);
            }
        }
        // top up with the nearest skipped candidates
        for c in sorted {
            if kept.len() >= m {
                break;
            }
            if !kept.contains(&c.id) {
                kept.push(c.id);
            }
        }
        kept
    }

    fn prune(&mut self, index: &CosineIndex, node: u32, layer: usize, cap: usize) {
        let base = index.row(node);
        let mut cands: Vec<Scored> = self.links[node as usize][layer]
            .iter()
            .map(|&id| Scored {
                id,
                score: dot(base, index.row(id)),
            })
            .collect();
        cands.sort_by(|a, b| {
            if a.better_than(b) {
                Ordering::Less
            } else {
                Ordering::Greater
            }
        });
        cands.dedup_by_key(|c| c.id);
        self.links[node as usize][layer] = self.select(index, &cands, cap);
    }

    fn greedy(&self, index: &CosineIndex, q: &[f32], mut ep: u32, layer: usize) -> u32 {
        let mut best = dot(q, index.row(ep));
        loop {
            let mut moved = false;
            for &nb in &self.links[ep as usize][layer] {
                let s = dot(q, index.row(nb));
                if s > best {
                    best = s;
                    ep = nb;
                    moved = true;
                }
            }
            if !moved {
                return ep;
            }
        }
    }

    /// Beam search on one layer, returning up to `ef` candidates best-first.
    fn search_layer(
        &self,
        index: &CosineIndex,
        q: &[f32],
        entries: &[u32],
        ef: usize,
        layer: usize,
        skip: Option<u32>,
    ) -> Vec<Scored> {
        let mut visited: HashSet<u32> = HashSet::new();
        let mut frontier: BinaryHeap<Best> = BinaryHeap::new();
        let mut results = TopK::new(ef);
        for &e in entries {
            visited.insert(e);
            let c = Scored {
                id: e,
                score: dot(q, index.row(e)),
            };
            frontier.push(Best(c));
            if Some(e) != skip {
                results.offer(c);
            }
        }
        while let Some(Best(cur)) = frontier.pop() {
            if let Some(worst) = results.worst() {
                if worst.better_than(&cur) {
                    break;
                }
            }
            for &nb in &self.links[cur.id as usize][layer] {
                if !visited.insert(nb) {
                    continue;
                }
                let c = Scored {
                    id: nb,
                    score: dot(q, index.row(nb)),
                };
                let admit = results.worst().is_none_or(|w| c.better_than(&w));
                if admit {
                    frontier.push(Best(c));
                    if Some(nb) != skip {
                        results.offer(c);
                    }
                }
            }
        }
        results.into_sorted()
    }

    fn search(&self, index: &CosineIndex, query: u32, k: usize) -> Vec<Scored> {
        let q = index.row(query);
        let mut ep = self.entry;
        for layer in (1..=self.top_layer).rev() {
            ep = self.greedy(index, q, ep, layer);
        }
        let k = k.min(index.len().saturating_sub(1));
        let mut found = self.search_layer(index, q, &[ep], self.params.ef_search.max(k), 0, Some(query));
        found.truncate(k);
        found
    }
}
