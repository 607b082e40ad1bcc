use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

/// Row-major `rows x cols` f32 matrix that many workers update without
/// locks. Every element is a word-sized atomic accessed with relaxed
/// ordering, so concurrent writers may lose updates but never tear a value.
pub(crate) struct SharedMatrix {
    cols: usize,
    data: Vec<AtomicU32>,
}

impl SharedMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let data = (0..rows * cols).map(|_| AtomicU32::new(0)).collect();
        SharedMatrix { cols, data }
    }

    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, half_width: f32, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| {
                let x = (rng.random::<f32>() - 0.5) * 2.0 * half_width;
                AtomicU32::new(x.to_bits())
            })
            .collect();
        SharedMatrix { cols, data }
    }

    #[inline]
    fn row(&self, i: usize) -> &[AtomicU32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn load_row(&self, i: usize, out: &mut [f32]) {
        for (o, a) in out.iter_mut().zip(self.row(i)) {
            *o = f32::from_bits(a.load(Ordering::Relaxed));
        }
    }

    #[inline]
    pub fn store_row(&self, i: usize, values: &[f32]) {
        for (a, &v) in self.row(i).iter().zip(values) {
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }

    /// Element-wise `row += delta` as separate load/store pairs.
    #[inline]
    pub fn add_to_row(&self, i: usize, delta: &[f32]) {
        for (a, &d) in self.row(i).iter().zip(delta) {
            let cur = f32::from_bits(a.load(Ordering::Relaxed));
            a.store((cur + d).to_bits(), Ordering::Relaxed);
        }
    }

    pub fn snapshot(&self) -> Vec<f32> {
        self.data
            .iter()
            .map(|a| f32::from_bits(a.load(Ordering::Relaxed)))
            .collect()
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|a| !f32::from_bits(a.load(Ordering::Relaxed)).is_finite())
    }

    #[cfg(test)]
    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }
}

/// Trained input (target) and output (context) matrices bound to a
/// vocabulary. The input matrix is the item representation.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    vocab: Vocabulary,
    dim: usize,
    input: Vec<f32>,
    output: Vec<f32>,
}

impl EmbeddingModel {
    pub fn new(vocab: Vocabulary, dim: usize, input: Vec<f32>, output: Vec<f32>) -> Result<Self> {
        let n = vocab.len() * dim;
        if input.len() != n || (!output.is_empty() && output.len() != n) {
            return Err(Error::InvalidArgument(format!(
                "matrix sizes {}/{} do not match |V| x d = {n}",
                input.len(),
                output.len()
            )));
        }
        Ok(EmbeddingModel {
            vocab,
            dim,
            input,
            output,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Input-vector matrix, row-major `|V| x d`.
    pub fn input_vectors(&self) -> &[f32] {
        &self.input
    }

    /// Output-vector matrix; empty for models loaded from a text file.
    pub fn output_vectors(&self) -> &[f32] {
        &self.output
    }

    pub fn vector(&self, id: u32) -> &[f32] {
        let i = id as usize * self.dim;
        &self.input[i..i + self.dim]
    }

    pub fn output_vector(&self, id: u32) -> &[f32] {
        let i = id as usize * self.dim;
        &self.output[i..i + self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    /// Writes the input vectors in word2vec text format: a `|V| d` header
    /// then one `token v1 ... vd` line per vocabulary entry.
    pub fn write_word2vec_text(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "{} {}", self.vocab.len(), self.dim).map_err(io)?;
        for (id, tok) in self.vocab.tokens().iter().enumerate() {
            write!(w, "{tok}").map_err(io)?;
            for x in &self.input[id * self.dim..(id + 1) * self.dim] {
                write!(w, " {x}").map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Token vectors as read from a word2vec text file.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectors {
    pub tokens: Vec<String>,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl WordVectors {
    pub fn read_text(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_owned(),
            line,
            message,
        };
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header".into()))?
            .map_err(|e| Error::io(path, e))?;
        let mut h = header.split_whitespace().map(str::parse::<usize>);
        let (n, dim) = match (h.next(), h.next(), h.next()) {
            (Some(Ok(n)), Some(Ok(d)), None) if d > 0 => (n, d),
            _ => return Err(parse_err(1, format!("bad header {header:?}"))),
        };
        let mut tokens = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * dim);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            let tok = parts.next().unwrap_or_default().to_owned();
            let before = data.len();
            for p in parts.filter(|p| !p.is_empty()) {
                let x: f32 = p
                    .parse()
                    .map_err(|e| parse_err(lineno, format!("bad float {p:?}: {e}")))?;
                data.push(x);
            }
            if data.len() - before != dim {
                return Err(parse_err(
                    lineno,
                    format!("expected {dim} values, found {}", data.len() - before),
                ));
            }
            tokens.push(tok);
        }
        if tokens.len() != n {
            return Err(parse_err(1, format!("header says {n} rows, found {}", tokens.len())));
        }
        Ok(WordVectors { tokens, dim, data })
    }

    /// Reorders rows to match `vocab`. Every vocabulary token must be present.
    pub fn align_to(&self, vocab: &Vocabulary) -> Result<EmbeddingModel> {
        let index: std::collections::HashMap<&str, usize> =
            self.tokens.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let mut input = Vec::with_capacity(vocab.len() * self.dim);
        let mut missing = Vec::new();
        for tok in vocab.tokens() {
            match index.get(tok.as_str()) {
                Some(&row) => input.extend_from_slice(&self.data[row * self.dim..(row + 1) * self.dim]),
                None => missing.push(tok.as_str()),
            }
        }
        if !missing.is_empty() {
            let shown: Vec<&str> = missing.iter().take(5).copied().collect();
            return Err(Error::VocabMismatch(format!(
                "{} training tokens have no embedding (e.g. {})",
                missing.len(),
                shown.join(", ")
            )));
        }
        EmbeddingModel::new(vocab.clone(), self.dim, input, Vec::new())
    }
}
