//! Sequence corpora: ingestion, vocabulary, frequency downsampling, evaluation
//! splits and sequence-level subsampling.
//!
//! A corpus is a list of per-user event sequences over a dense integer
//! vocabulary. Token ids are assigned in descending frequency order (ties by
//! token string), so id 0 is always the most frequent token.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default downsampling ratio used for every tuning run.
pub const DEFAULT_T_RATIO: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
    counts: Vec<u64>,
    total_tokens: u64,
    min_count: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from raw token counts, dropping tokens seen fewer
    /// than `min_count` times.
    pub fn from_counts<I>(counts: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = (String, u64)>,
    {
        let mut entries: Vec<(String, u64)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens = Vec::with_capacity(entries.len());
        let mut counts = Vec::with_capacity(entries.len());
        let mut token_to_id = HashMap::with_capacity(entries.len());
        for (id, (tok, c)) in entries.into_iter().enumerate() {
            token_to_id.insert(tok.clone(), id as u32);
            tokens.push(tok);
            counts.push(c);
        }
        let total_tokens = counts.iter().sum();
        Vocabulary {
            tokens,
            token_to_id,
            counts,
            total_tokens,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sequences: Vec<Vec<u32>>,
    timestamps: Option<Vec<Vec<i64>>>,
    vocab: Vocabulary,
}

impl Corpus {
    /// Builds a corpus from token-string sequences. Tokens below `min_count`
    /// are removed and sequences left empty are dropped.
    pub fn from_token_sequences<S: AsRef<str>>(
        sequences: &[Vec<S>],
        timestamps: Option<Vec<Vec<i64>>>,
        min_count: u64,
    ) -> Result<Self> {
        if let Some(ts) = &timestamps {
            if ts.len() != sequences.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} timestamp rows for {} sequences",
                    ts.len(),
                    sequences.len()
                )));
            }
            for (i, (seq, t)) in sequences.iter().zip(ts).enumerate() {
                if seq.len() != t.len() {
                    return Err(Error::InvalidArgument(format!(
                        "sequence {i} has {} tokens but {} timestamps",
                        seq.len(),
                        t.len()
                    )));
                }
                if t.windows(2).any(|w| w[0] > w[1]) {
                    return Err(Error::InvalidArgument(format!(
                        "sequence {i} has decreasing timestamps"
                    )));
                }
            }
        }

        let mut counts: HashMap<&str, u64> = HashMap::new();
        for seq in sequences {
            for tok in seq {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let vocab = Vocabulary::from_counts(counts.into_iter().map(|(k, v)| (k.to_owned(), v)), min_count);

        let mut ids = Vec::with_capacity(sequences.len());
        let mut kept_ts = timestamps.as_ref().map(|_| Vec::with_capacity(sequences.len()));
        for (i, seq) in sequences.iter().enumerate() {
            let mut row = Vec::with_capacity(seq.len());
            let mut trow = Vec::new();
            for (j, tok) in seq.iter().enumerate() {
                if let Some(id) = vocab.id(tok.as_ref()) {
                    row.push(id);
                    if let Some(ts) = &timestamps {
                        trow.push(ts[i][j]);
                    }
                }
            }
            if !row.is_empty() {
                ids.push(row);
                if let Some(k) = kept_ts.as_mut() {
                    k.push(trow);
                }
            }
        }

        Ok(Corpus {
            sequences: ids,
            timestamps: kept_ts,
            vocab,
        })
    }

    pub fn sequences(&self) -> &[Vec<u32>] {
        &self.sequences
    }

    pub fn timestamps(&self) -> Option<&[Vec<i64>]> {
        self.timestamps.as_deref()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_tokens(&self) -> u64 {
        self.vocab.total_tokens
    }

    /// Sequences mapped back to token strings.
    pub fn token_sequences(&self) -> Vec<Vec<&str>> {
        self.sequences
            .iter()
            .map(|s| s.iter().map(|&id| self.vocab.token(id)).collect())
            .collect()
    }

    /// Writes the corpus in the plain format (one sequence per line).
    pub fn write_plain(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for seq in &self.sequences {
            let line: Vec<&str> = seq.iter().map(|&id| self.vocab.token(id)).collect();
            writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `user<TAB>token<TAB>timestamp` rows, naming sequence `i`
    /// user `u{i}`.
    pub fn write_timestamped(&self, path: &Path) -> Result<()> {
        let stamps = self.timestamps.as_ref().ok_or(Error::MissingTimestamps)?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, (seq, ts)) in self.sequences.iter().zip(stamps).enumerate() {
            for (&id, t) in seq.iter().zip(ts) {
                writeln!(w, "u{i}\t{}\t{t}", self.vocab.token(id)).map_err(|e| Error::io(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn stats(&self) -> CorpusStats {
        let lengths: Vec<usize> = self.sequences.iter().map(Vec::len).collect();
        CorpusStats {
            sequences: self.sequences.len(),
            vocab_size: self.vocab.len(),
            total_tokens: self.vocab.total_tokens,
            min_len: lengths.iter().copied().min().unwrap_or(0),
            max_len: lengths.iter().copied().max().unwrap_or(0),
            mean_len: if lengths.is_empty() {
                0.0
            } else {
                self.vocab.total_tokens as f64 / lengths.len() as f64
            },
            timestamped: self.timestamps.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sequences: usize,
    pub vocab_size: usize,
    pub total_tokens: u64,
    pub min_len: usize,
    pub max_len: usize,
    pub mean_len: f64,
    pub timestamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One sequence per line, whitespace-separated tokens.
    Plain,
    /// `user<TAB>token<TAB>unix_seconds` rows.
    Timestamped,
}

/// Reads a corpus file.
pub fn ingest(path: &Path, format: InputFormat, min_count: u64) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    match format {
        InputFormat::Plain => {
            let mut seqs: Vec<Vec<String>> = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
                let toks: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
                if !toks.is_empty() {
                    seqs.push(toks);
                }
            }
            Corpus::from_token_sequences(&seqs, None, min_count)
        }
        InputFormat::Timestamped => {
            let mut order: Vec<String> = Vec::new();
            let mut users: HashMap<String, Vec<(i64, usize, String)>> = HashMap::new();
            for (i, line) in reader.lines().enumerate() {
                let lineno = i + 1;
                let line = line.map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: lineno,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() != 3 {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line: lineno,
                        message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                    });
                }
                let ts: i64 = fields[2].trim().parse().map_err(|e| Error::Parse {
                    path: path.to_owned(),
                    line: lineno,
                    message: format!("bad timestamp {:?}: {e}", fields[2]),
                })?;
                let user = fields[0].to_owned();
                let events = users.entry(user.clone()).or_insert_with(|| {
                    order.push(user);
                    Vec::new()
                });
                events.push((ts, lineno, fields[1].trim().to_owned()));
            }
            let mut seqs = Vec::with_capacity(order.len());
            let mut stamps = Vec::with_capacity(order.len());
            for user in order {
                let mut events = users.remove(&user).unwrap_or_default();
                events.sort_by_key(|e| (e.0, e.1));
                stamps.push(events.iter().map(|e| e.0).collect());
                seqs.push(events.into_iter().map(|e| e.2).collect());
            }
            Corpus::from_token_sequences(&seqs, Some(stamps), min_count)
        }
    }
}

/// Keep weight of a token with count `count` under absolute threshold `t`:
/// `(sqrt(f/t) + 1) * t / f`. Values at or above 1 mean the token is always
/// kept; `t == 0` disables downsampling and yields infinity.
pub fn keep_probability(count: u64, t: f64) -> f64 {
    if t <= 0.0 || count == 0 {
        return f64::INFINITY;
    }
    let f = count as f64;
    ((f / t).sqrt() + 1.0) * (t / f)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DownsampleConfig {
    pub t_ratio: f64,
    pub seed: u64,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        DownsampleConfig {
            t_ratio: DEFAULT_T_RATIO,
            seed: 0,
        }
    }
}

/// Per-token keep probabilities for streaming downsampling. Each call to
/// [`Downsampler::filter_into`] draws fresh decisions, so a trainer re-draws
/// the filter on every epoch.
#[derive(Debug, Clone)]
pub struct Downsampler {
    keep: Vec<f64>,
}

impl Downsampler {
    pub fn new(vocab: &Vocabulary, t_ratio: f64) -> Result<Self> {
        if !(t_ratio >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "downsampling ratio must be >= 0, got {t_ratio}"
            )));
        }
        let t = t_ratio * vocab.total_tokens() as f64;
        let keep = vocab
            .counts()
            .iter()
            .map(|&c| keep_probability(c, t).min(1.0))
            .collect();
        Ok(Downsampler { keep })
    }

    /// Probability that one occurrence of `id` survives, in `[0, 1]`.
    pub fn keep_rate(&self, id: u32) -> f64 {
        self.keep[id as usize]
    }

    pub fn keep_rates(&self) -> &[f64] {
        &self.keep
    }

    #[inline]
    pub fn keep<R: Rng + ?Sized>(&self, id: u32, rng: &mut R) -> bool {
        let p = self.keep[id as usize];
        p >= 1.0 || p >= rng.random::<f64>()
    }

    pub fn filter_into<R: Rng + ?Sized>(&self, seq: &[u32], rng: &mut R, out: &mut Vec<u32>) {
        out.clear();
        out.extend(seq.iter().copied().filter(|&id| self.keep(id, rng)));
    }

    /// Expected number of surviving tokens over a whole corpus pass.
    pub fn expected_kept(&self, vocab: &Vocabulary) -> f64 {
        vocab.counts().iter().zip(&self.keep).map(|(&c, &p)| c as f64 * p).sum()
    }
}

/// Materializes one downsampling draw over the corpus. Vocabulary and ids
/// are unchanged; sequences emptied by the filter are dropped.
pub fn downsample(corpus: &Corpus, cfg: &DownsampleConfig) -> Result<Corpus> {
    if cfg.t_ratio == 0.0 {
        return Ok(corpus.clone());
    }
    let sampler = Downsampler::new(&corpus.vocab, cfg.t_ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sequences = Vec::with_capacity(corpus.sequences.len());
    let mut timestamps = corpus.timestamps.as_ref().map(|_| Vec::new());
    for (i, seq) in corpus.sequences.iter().enumerate() {
        let mut row = Vec::with_capacity(seq.len());
        let mut trow = Vec::new();
        for (j, &id) in seq.iter().enumerate() {
            if sampler.keep(id, &mut rng) {
                row.push(id);
                if let Some(ts) = &corpus.timestamps {
                    trow.push(ts[i][j]);
                }
            }
        }
        if !row.is_empty() {
            sequences.push(row);
            if let Some(t) = timestamps.as_mut() {
                t.push(trow);
            }
        }
    }
    Ok(Corpus {
        sequences,
        timestamps,
        vocab: corpus.vocab.clone(),
    })
}

/// A next-event test pair. Ids refer to the training vocabulary; a target
/// that never occurs in training is `None` and can never be retrieved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TestPair {
    pub query: u32,
    pub target: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitProtocol {
    LastToken,
    Temporal,
}

#[derive(Debug, Clone)]
pub struct EvalSplit {
    pub train: Corpus,
    pub test_pairs: Vec<TestPair>,
}

impl EvalSplit {
    /// Resolves token-string pairs against a training corpus, dropping pairs
    /// whose query has no training vector.
    pub fn from_token_pairs<S: AsRef<str>>(train: Corpus, pairs: &[(S, S)]) -> Self {
        let test_pairs = pairs
            .iter()
            .filter_map(|(q, t)| {
                let query = train.vocab.id(q.as_ref())?;
                Some(TestPair {
                    query,
                    target: train.vocab.id(t.as_ref()),
                })
            })
            .collect();
        EvalSplit { train, test_pairs }
    }

    /// Test pairs as token strings; out-of-vocabulary targets are lost, so
    /// callers that persist splits keep the original strings instead.
    pub fn pair_tokens(&self) -> Vec<(String, Option<String>)> {
        let v = self.train.vocab();
        self.test_pairs
            .iter()
            .map(|p| (v.token(p.query).to_owned(), p.target.map(|t| v.token(t).to_owned())))
            .collect()
    }
}

/// Trains on every sequence minus its final token and tests on the
/// (penultimate, last) pair. Sequences of length 1 stay in training whole.
pub fn split_last_token(corpus: &Corpus) -> Result<EvalSplit> {
    let (split, _) = split_last_token_with_tokens(corpus)?;
    Ok(split)
}

/// Like [`split_last_token`] but also returns the raw test pairs as token
/// strings, including targets unseen in training.
pub fn split_last_token_with_tokens(corpus: &Corpus) -> Result<(EvalSplit, Vec<(String, String)>)> {
    let vocab = &corpus.vocab;
    let mut train: Vec<Vec<&str>> = Vec::with_capacity(corpus.sequences.len());
    let mut train_ts: Option<Vec<Vec<i64>>> = corpus.timestamps.as_ref().map(|_| Vec::new());
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (i, seq) in corpus.sequences.iter().enumerate() {
        let keep = if seq.len() >= 2 {
            let n = seq.len();
            pairs.push((vocab.token(seq[n - 2]).to_owned(), vocab.token(seq[n - 1]).to_owned()));
            n - 1
        } else {
            seq.len()
        };
        train.push(seq[..keep].iter().map(|&id| vocab.token(id)).collect());
        if let (Some(out), Some(ts)) = (train_ts.as_mut(), corpus.timestamps.as_ref()) {
            out.push(ts[i][..keep].to_vec());
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let train = Corpus::from_token_sequences(&train, train_ts, vocab.min_count)?;
    let split = EvalSplit::from_token_pairs(train, &pairs);
    Ok((split, pairs))
}

/// Per-user temporal split: events before `test_start` train, and the last
/// two events of each user's test period form a pair if the query token was
/// seen in training.
pub fn split_temporal(corpus: &Corpus, test_start: i64) -> Result<EvalSplit> {
    let (split, _) = split_temporal_with_tokens(corpus, test_start)?;
    Ok(split)
}

pub fn split_temporal_with_tokens(corpus: &Corpus, test_start: i64) -> Result<(EvalSplit, Vec<(String, String)>)> {
    let stamps = corpus.timestamps.as_ref().ok_or(Error::MissingTimestamps)?;
    let vocab = &corpus.vocab;
    let mut train: Vec<Vec<&str>> = Vec::new();
    let mut train_ts: Vec<Vec<i64>> = Vec::new();
    let mut pairs: Vec<(String, String)> = Vec::new();
    for (seq, ts) in corpus.sequences.iter().zip(stamps) {
        let cut = ts.partition_point(|&t| t < test_start);
        if cut > 0 {
            train.push(seq[..cut].iter().map(|&id| vocab.token(id)).collect());
            train_ts.push(ts[..cut].to_vec());
        }
        let test = &seq[cut..];
        if test.len() >= 2 {
            let n = test.len();
            pairs.push((vocab.token(test[n - 2]).to_owned(), vocab.token(test[n - 1]).to_owned()));
        }
    }
    let train = Corpus::from_token_sequences(&train, Some(train_ts), vocab.min_count)?;
    let split = EvalSplit::from_token_pairs(train, &pairs);
    let kept: Vec<(String, String)> = pairs
        .into_iter()
        .filter(|(q, _)| split.train.vocab.id(q).is_some())
        .collect();
    Ok((split, kept))
}

/// Uniform sample of `floor(fraction * n)` whole sequences, without
/// replacement, in their original order. The vocabulary is rebuilt.
pub fn sample_sequences(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sample fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n = corpus.sequences.len();
    let k = ((fraction * n as f64) + 1e-9).floor() as usize;
    let k = k.min(n);
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {fraction} of {n} sequences selects nothing"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();

    let vocab = &corpus.vocab;
    let seqs: Vec<Vec<&str>> = picked
        .iter()
        .map(|&i| corpus.sequences[i].iter().map(|&id| vocab.token(id)).collect())
        .collect();
    let ts = corpus
        .timestamps
        .as_ref()
        .map(|t| picked.iter().map(|&i| t[i].clone()).collect());
    Corpus::from_token_sequences(&seqs, ts, vocab.min_count)
}

/// On-disk description of a persisted split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_path: PathBuf,
    pub test_pairs_path: PathBuf,
    pub protocol: SplitProtocol,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_start: Option<i64>,
    pub seed: u64,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
}

fn default_min_count() -> u64 {
    1
}

/// Writes `query<TAB>target` rows.
pub fn write_test_pairs(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (q, t) in pairs {
        writeln!(w, "{q}\t{t}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_test_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        match (it.next(), it.next(), it.next()) {
            (Some(q), Some(t), None) => pairs.push((q.to_owned(), t.to_owned())),
            _ => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: "expected query<TAB>target".into(),
                })
            }
        }
    }
    Ok(pairs)
}

impl SplitManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: SplitManifest = serde_json::from_str(&text)?;
        // relative paths resolve against the manifest's directory
        let base = path.parent().unwrap_or(Path::new("."));
        if m.train_path.is_relative() {
            m.train_path = base.join(&m.train_path);
        }
        if m.test_pairs_path.is_relative() {
            m.test_pairs_path = base.join(&m.test_pairs_path);
        }
        Ok(m)
    }

    pub fn load_split(&self) -> Result<EvalSplit> {
        let train = ingest(&self.train_path, InputFormat::Plain, self.min_count)?;
        let pairs = read_test_pairs(&self.test_pairs_path)?;
        Ok(EvalSplit::from_token_pairs(train, &pairs))
    }
}
