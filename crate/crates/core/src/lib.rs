//! Word2vec (Skipgram/CBOW with negative sampling) for item-interaction
//! sequences, next-event evaluation, and hyperparameter search under a
//! runtime budget.

pub mod budget;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod optimizer;
pub mod par;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
