//! Hyperparameter search.

pub mod acquisition;
pub mod bayes;
pub mod gp;
pub mod nelder_mead;
pub mod report;
pub mod search;
pub mod sobol;
pub mod space;
pub mod sweep;
pub mod transfer;
