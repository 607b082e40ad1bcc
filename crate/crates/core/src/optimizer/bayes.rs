//! Sequential proposal of points in the unit cube: Sobol points for the
//! first trials, then the maximizer of expected improvement under a GP fit
//! to the observations.

use log::warn;
use serde::{Deserialize, Serialize};

use super::acquisition::expected_improvement;
use super::gp::{GaussianProcess, GpConfig};
use super::nelder_mead;
use super::sobol::sobol_points;
use crate::error::Result;
use crate::par;

pub const DEFAULT_INITIAL_POINTS: usize = 9;
pub const DEFAULT_CANDIDATES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Trials drawn from the Sobol sequence before the GP is used.
    pub initial_points: usize,
    /// Sobol candidates scored by EI per proposal.
    pub candidates: usize,
    /// Best candidates refined by a local search on EI.
    pub refine_top: usize,
    pub refine_evals: usize,
    pub gp: GpConfig,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            initial_points: DEFAULT_INITIAL_POINTS,
            candidates: DEFAULT_CANDIDATES,
            refine_top: 8,
            refine_evals: 200,
            gp: GpConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalSource {
    Sobol,
    ExpectedImprovement,
    /// GP fit failed; a Sobol point was used instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub point: Vec<f64>,
    pub source: ProposalSource,
    pub ei: Option<f64>,
}

fn sobol_point(dim: usize, index: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(sobol_points(dim, index + 1, Some(seed))?.swap_remove(index))
}

/// Proposes the next point of a maximization run. `observed` holds
/// (unit point, objective) pairs usable for the surrogate, `best` the
/// incumbent objective (defaults to the best observation), and `step` the
/// number of trials already run, failed ones included.
pub fn propose(
    observed: &[(Vec<f64>, f64)],
    best: Option<f64>,
    dim: usize,
    step: usize,
    cfg: &SurrogateConfig,
    parallel: bool,
) -> Result<Proposal> {
    if step < cfg.initial_points || observed.is_empty() {
        return Ok(Proposal {
            point: sobol_point(dim, step, cfg.seed)?,
            source: ProposalSource::Sobol,
            ei: None,
        });
    }
    let xs: Vec<Vec<f64>> = observed.iter().map(|o| o.0.clone()).collect();
    let ys: Vec<f64> = observed.iter().map(|o| o.1).collect();
    let gp_cfg = GpConfig {
        seed: cfg.gp.seed ^ cfg.seed.wrapping_add(step as u64),
        ..cfg.gp
    };
    let gp = match GaussianProcess::fit(&xs, &ys, &gp_cfg) {
        Ok(gp) => gp,
        Err(e) => {
            warn!("{e}; using a Sobol point for trial {}", step + 1);
            return Ok(Proposal {
                point: sobol_point(dim, step, cfg.seed)?,
                source: ProposalSource::Fallback,
                ei: None,
            });
        }
    };
    let f_best = best.unwrap_or_else(|| ys.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let ei_at = |x: &[f64]| {
        let (m, s) = gp.predict(x);
        expected_improvement(m, s, f_best)
    };

    let candidate_seed = cfg
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(step as u64 + 1);
    let candidates = sobol_points(dim, cfg.candidates.max(1), Some(candidate_seed))?;
    let scores = par::map(&candidates, parallel, |c| ei_at(c));
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let lower = vec![0.0; dim];
    let upper = vec![1.0; dim];
    let starts: Vec<usize> = order.iter().take(cfg.refine_top).copied().collect();
    let refined = par::map(&starts, parallel, |&i| {
        nelder_mead::minimize(|x| -ei_at(x), &candidates[i], 0.05, &lower, &upper, cfg.refine_evals)
    });

    let mut best_point = candidates[order[0]].clone();
    let mut best_ei = scores[order[0]];
    for (x, neg) in refined {
        if -neg > best_ei {
            best_ei = -neg;
            best_point = x;
        }
    }
    Ok(Proposal {
        point: best_point,
        source: ProposalSource::ExpectedImprovement,
        ei: Some(best_ei),
    })
}
