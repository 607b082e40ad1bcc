use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::DEFAULT_T_RATIO;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "sg")]
    Skipgram,
    #[serde(rename = "cbow")]
    Cbow,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Skipgram, ModelKind::Cbow];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Skipgram => "sg",
            ModelKind::Cbow => "cbow",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sg" | "skipgram" | "skip-gram" => Ok(ModelKind::Skipgram),
            "cbow" => Ok(ModelKind::Cbow),
            other => Err(Error::InvalidArgument(format!(
                "unknown model {other:?}; expected sg or cbow"
            ))),
        }
    }
}

/// One point in the Word2vec hyperparameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub model: ModelKind,
    /// Embedding dimension.
    pub dim: usize,
    /// Maximum window size; the effective window is drawn from `1..=window`.
    pub window: usize,
    /// Negative-sampling exponent.
    pub alpha: f64,
    /// Initial learning rate, decayed linearly.
    pub learning_rate: f64,
    /// Negatives per positive pair.
    pub negatives: usize,
    pub epochs: usize,
    #[serde(default = "default_t_ratio")]
    pub t_ratio: f64,
    #[serde(default = "default_min_count")]
    pub min_count: u64,
}

fn default_t_ratio() -> f64 {
    DEFAULT_T_RATIO
}

fn default_min_count() -> u64 {
    1
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            model: ModelKind::Skipgram,
            dim: 100,
            window: 5,
            alpha: 0.75,
            learning_rate: 0.025,
            negatives: 5,
            epochs: 5,
            t_ratio: DEFAULT_T_RATIO,
            min_count: 1,
        }
    }
}

impl HyperParams {
    pub fn defaults_for(model: ModelKind) -> Self {
        HyperParams {
            model,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.dim < 1 {
            return bad(format!("d must be >= 1, got {}", self.dim));
        }
        if self.window < 1 {
            return bad(format!("L must be >= 1, got {}", self.window));
        }
        if self.negatives < 1 {
            return bad(format!("N must be >= 1, got {}", self.negatives));
        }
        if self.epochs < 1 {
            return bad(format!("epochs must be >= 1, got {}", self.epochs));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("lambda must be > 0, got {}", self.learning_rate));
        }
        if !(-1.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [-1, 1], got {}", self.alpha));
        }
        if !(self.t_ratio >= 0.0) {
            return bad(format!("t_ratio must be >= 0, got {}", self.t_ratio));
        }
        Ok(())
    }
}
