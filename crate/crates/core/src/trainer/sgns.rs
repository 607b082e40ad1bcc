//! Reference negative-sampling objective and its analytic gradients in f64.
//!
//! The training kernels in [`super::train`] apply these same formulas in f32;
//! the functions here exist so the math can be checked on its own.

/// Logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(x))`, stable for large |x|.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary logistic loss of one input vector against labelled output vectors:
/// `-sum(y log s(u.v) + (1 - y) log s(-u.v))`.
pub fn sgns_loss(input: &[f64], outputs: &[&[f64]], labels: &[f64]) -> f64 {
    outputs
        .iter()
        .zip(labels)
        .map(|(u, &y)| {
            let x = dot(u, input);
            -(y * log_sigmoid(x) + (1.0 - y) * log_sigmoid(-x))
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsGradient {
    /// d loss / d input.
    pub input: Vec<f64>,
    /// d loss / d output_k, one per output vector.
    pub outputs: Vec<Vec<f64>>,
}

/// Gradient of [`sgns_loss`]. With the first output the positive target
/// (label 1) and the rest negatives (label 0) this is
/// `dv = (s(u_w.v) - 1) u_w + sum_k s(u_k.v) u_k`.
pub fn sgns_gradient(input: &[f64], outputs: &[&[f64]], labels: &[f64]) -> SgnsGradient {
    assert_eq!(outputs.len(), labels.len());
    let d = input.len();
    let mut d_input = vec![0.0; d];
    let mut d_outputs = Vec::with_capacity(outputs.len());
    for (u, &y) in outputs.iter().zip(labels) {
        assert_eq!(u.len(), d, "vector dimensions differ");
        let g = sigmoid(dot(u, input)) - y;
        for (acc, &ui) in d_input.iter_mut().zip(u.iter()) {
            *acc += g * ui;
        }
        d_outputs.push(input.iter().map(|&vi| g * vi).collect());
    }
    SgnsGradient {
        input: d_input,
        outputs: d_outputs,
    }
}

/// Labels for one positive followed by `negatives` negatives.
pub fn positive_then_negatives(negatives: usize) -> Vec<f64> {
    let mut labels = vec![0.0; negatives + 1];
    labels[0] = 1.0;
    labels
}

fn mean_vector(contexts: &[&[f64]]) -> Vec<f64> {
    assert!(!contexts.is_empty(), "CBOW needs at least one context vector");
    let d = contexts[0].len();
    let mut h = vec![0.0; d];
    for c in contexts {
        assert_eq!(c.len(), d, "vector dimensions differ");
        for (hi, ci) in h.iter_mut().zip(c.iter()) {
            *hi += ci;
        }
    }
    let inv = 1.0 / contexts.len() as f64;
    h.iter_mut().for_each(|x| *x *= inv);
    h
}

/// CBOW loss: the hidden layer is the mean of the context input vectors.
pub fn cbow_loss(contexts: &[&[f64]], outputs: &[&[f64]], labels: &[f64]) -> f64 {
    sgns_loss(&mean_vector(contexts), outputs, labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CbowGradient {
    /// d loss / d context_j; identical for every context (the hidden-layer
    /// gradient divided by the context count).
    pub contexts: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
}

pub fn cbow_gradient(contexts: &[&[f64]], outputs: &[&[f64]], labels: &[f64]) -> CbowGradient {
    let h = mean_vector(contexts);
    let g = sgns_gradient(&h, outputs, labels);
    let inv = 1.0 / contexts.len() as f64;
    let per_context: Vec<f64> = g.input.iter().map(|x| x * inv).collect();
    CbowGradient {
        contexts: vec![per_context; contexts.len()],
        outputs: g.outputs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_positive_has_vanishing_gradient() {
        let v = [50.0, 0.0];
        let u = [50.0, 0.0];
        let g = sgns_gradient(&v, &[&u], &[1.0]);
        assert!(g.input.iter().all(|x| x.abs() < 1e-12));
        assert!(g.outputs[0].iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn zero_vectors_give_zero_context_gradient() {
        let z = [0.0; 4];
        let g = sgns_gradient(&z, &[&z, &z, &z], &positive_then_negatives(2));
        assert_eq!(g.input, vec![0.0; 4]);
    }

    #[test]
    fn zero_context_half_weights() {
        // s(0) = 0.5, so dv = -0.5 u_w + 0.5 u_k
        let v = [0.0; 3];
        let uw = [1.0, 2.0, 3.0];
        let un = [4.0, 0.0, -2.0];
        let g = sgns_gradient(&v, &[&uw, &un], &[1.0, 0.0]);
        assert_eq!(g.input, vec![1.5, -1.0, -2.5]);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(log_sigmoid(800.0), 0.0);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn cbow_splits_hidden_gradient_evenly() {
        let c1 = [0.2, -0.1];
        let c2 = [0.4, 0.3];
        let u = [0.5, 0.5];
        let g = cbow_gradient(&[&c1, &c2], &[&u], &[1.0]);
        let h = [0.3, 0.1];
        let direct = sgns_gradient(&h, &[&u], &[1.0]);
        for j in 0..2 {
            assert!((g.contexts[0][j] - direct.input[j] / 2.0).abs() < 1e-15);
        }
        assert_eq!(g.contexts[0], g.contexts[1]);
    }
}
