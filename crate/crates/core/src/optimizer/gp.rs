//! Gaussian-process regression with an ARD Matérn-5/2 kernel, constant mean
//! and fitted observation noise.
//!
//! Outputs are standardized before fitting. The constant mean and signal
//! variance are profiled out of the marginal likelihood in closed form; the
//! lengthscales and the noise-to-signal ratio are fit by Nelder–Mead with
//! random restarts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::nelder_mead;
use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub restarts: usize,
    /// Lower bound on the noise-to-signal variance ratio.
    pub noise_floor: f64,
    pub min_lengthscale: f64,
    pub max_lengthscale: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            restarts: 4,
            noise_floor: 1e-6,
            min_lengthscale: 0.01,
            max_lengthscale: 20.0,
            seed: 0,
        }
    }
}

#[inline]
fn matern52(a: &[f64], b: &[f64], inv_ls: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(inv_ls)
        .map(|((x, y), il)| ((x - y) * il).powi(2))
        .sum();
    let r = r2.sqrt();
    (1.0 + SQRT5 * r + 5.0 / 3.0 * r2) * (-SQRT5 * r).exp()
}

struct Posterior {
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    mean: f64,
    signal_var: f64,
    nll: f64,
}

fn posterior(x: &[Vec<f64>], y: &DVector<f64>, inv_ls: &[f64], noise_ratio: f64) -> Option<Posterior> {
    let n = x.len();
    let r = DMatrix::from_fn(n, n, |i, j| {
        let k = matern52(&x[i], &x[j], inv_ls);
        if i == j {
            k + noise_ratio
        } else {
            k
        }
    });
    let chol = Cholesky::new(r)?;
    let ones = DVector::from_element(n, 1.0);
    let rinv_one = chol.solve(&ones);
    let rinv_y = chol.solve(y);
    let denom = ones.dot(&rinv_one);
    if denom <= 0.0 {
        return None;
    }
    let mean = ones.dot(&rinv_y) / denom;
    let resid = y - DVector::from_element(n, mean);
    let weights = chol.solve(&resid);
    let signal_var = (resid.dot(&weights) / n as f64).max(1e-12);
    let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let nll = 0.5 * n as f64 * signal_var.ln() + log_det;
    if !nll.is_finite() {
        return None;
    }
    Some(Posterior {
        chol,
        weights,
        mean,
        signal_var,
        nll,
    })
}

#[derive(Debug, Clone)]
pub struct GaussianProcess {
    x: Vec<Vec<f64>>,
    inv_ls: Vec<f64>,
    noise_ratio: f64,
    y_shift: f64,
    y_scale: f64,
    mean: f64,
    signal_var: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
    nll: f64,
}

impl GaussianProcess {
    pub fn fit(x: &[Vec<f64>], y: &[f64], cfg: &GpConfig) -> Result<Self> {
        let n = x.len();
        if n == 0 || n != y.len() {
            return Err(Error::GpFit(format!("{} inputs for {} outputs", n, y.len())));
        }
        let dim = x[0].len();
        if x.iter().any(|p| p.len() != dim) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::GpFit("ragged inputs or non-finite outputs".into()));
        }
        let y_shift = y.iter().sum::<f64>() / n as f64;
        let sd = (y.iter().map(|v| (v - y_shift).powi(2)).sum::<f64>() / n as f64).sqrt();
        let y_scale = if sd > 1e-12 { sd } else { 1.0 };
        let ys = DVector::from_iterator(n, y.iter().map(|v| (v - y_shift) / y_scale));

        let lo: Vec<f64> = std::iter::repeat_n(cfg.min_lengthscale.ln(), dim)
            .chain(std::iter::once(cfg.noise_floor.ln()))
            .collect();
        let hi: Vec<f64> = std::iter::repeat_n(cfg.max_lengthscale.ln(), dim)
            .chain(std::iter::once(0.0))
            .collect();
        let objective = |theta: &[f64]| -> f64 {
            let inv_ls: Vec<f64> = theta[..dim].iter().map(|t| (-t).exp()).collect();
            posterior(x, &ys, &inv_ls, theta[dim].exp()).map_or(f64::INFINITY, |p| p.nll)
        };

        let mut starts = vec![std::iter::repeat_n(0.3f64.ln(), dim)
            .chain(std::iter::once(1e-3f64.ln()))
            .collect::<Vec<f64>>()];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for _ in 0..cfg.restarts {
            starts.push(lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..*h)).collect());
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        for s in &starts {
            let (theta, v) = nelder_mead::minimize(objective, s, 0.5, &lo, &hi, 150 * (dim + 1));
            if v.is_finite() && best.as_ref().is_none_or(|b| v < b.1) {
                best = Some((theta, v));
            }
        }
        let (theta, _) =
            best.ok_or_else(|| Error::GpFit("no hyperparameters gave a positive-definite kernel".into()))?;
        let inv_ls: Vec<f64> = theta[..dim].iter().map(|t| (-t).exp()).collect();
        let noise_ratio = theta[dim].exp();
        let post = posterior(x, &ys, &inv_ls, noise_ratio)
            .ok_or_else(|| Error::GpFit("kernel matrix not positive definite".into()))?;
        Ok(GaussianProcess {
            x: x.to_vec(),
            inv_ls,
            noise_ratio,
            y_shift,
            y_scale,
            mean: post.mean,
            signal_var: post.signal_var,
            chol: post.chol,
            weights: post.weights,
            nll: post.nll,
        })
    }

    /// Posterior mean and standard deviation of the latent function, in the
    /// units of the training outputs.
    pub fn predict(&self, point: &[f64]) -> (f64, f64) {
        let n = self.x.len();
        let k = DVector::from_iterator(n, self.x.iter().map(|xi| matern52(point, xi, &self.inv_ls)));
        let mu = self.mean + k.dot(&self.weights);
        let v = self.chol.solve(&k);
        let var = (self.signal_var * (1.0 - k.dot(&v))).max(0.0);
        (self.y_shift + self.y_scale * mu, self.y_scale * var.sqrt())
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.inv_ls.iter().map(|v| 1.0 / v).collect()
    }

    /// Observation noise standard deviation in output units.
    pub fn noise_std(&self) -> f64 {
        self.y_scale * (self.signal_var * self.noise_ratio).sqrt()
    }

    pub fn signal_std(&self) -> f64 {
        self.y_scale * self.signal_var.sqrt()
    }

    /// Negative log marginal likelihood (up to a constant) of the fit.
    pub fn neg_log_likelihood(&self) -> f64 {
        self.nll
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64 / 11.0, ((i * 7) % 12) as f64 / 11.0])
            .collect();
        let y = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[1]).collect();
        (x, y)
    }

    #[test]
    fn interpolates_training_points() {
        let (x, y) = toy();
        let gp = GaussianProcess::fit(&x, &y, &GpConfig::default()).unwrap();
        for (p, v) in x.iter().zip(&y) {
            let (m, s) = gp.predict(p);
            assert!(s >= 0.0);
            assert!(
                (m - v).abs() <= 3.0 * gp.noise_std() + 1e-6,
                "{m} vs {v}, noise {}",
                gp.noise_std()
            );
        }
    }

    #[test]
    fn variance_grows_away_from_data() {
        let (x, y) = toy();
        let gp = GaussianProcess::fit(&x, &y, &GpConfig::default()).unwrap();
        let (_, near) = gp.predict(&x[3]);
        let (_, far) = gp.predict(&[1e4, -1e4]);
        assert!(far > near);
        assert!((far - gp.signal_std()).abs() < 1e-6 * gp.signal_std().max(1.0));
    }

    #[test]
    fn constant_outputs_are_handled() {
        let x = vec![vec![0.1], vec![0.5], vec![0.9]];
        let gp = GaussianProcess::fit(&x, &[2.0, 2.0, 2.0], &GpConfig::default()).unwrap();
        let (m, s) = gp.predict(&[0.3]);
        assert!((m - 2.0).abs() < 1e-6);
        assert!(s.is_finite());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GaussianProcess::fit(&[], &[], &GpConfig::default()).is_err());
        assert!(GaussianProcess::fit(&[vec![0.0]], &[f64::NAN], &GpConfig::default()).is_err());
    }
}
