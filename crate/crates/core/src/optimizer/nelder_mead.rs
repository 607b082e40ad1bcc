//! Small derivative-free minimizer used for GP hyperparameters and local
//! refinement of the acquisition function.

/// Minimizes `f` from `x0` with the Nelder–Mead simplex method. Every
/// evaluated point is first clamped to `[lower, upper]` per coordinate.
pub fn minimize<F>(f: F, x0: &[f64], step: f64, lower: &[f64], upper: &[f64], max_evals: usize) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let evals = std::cell::Cell::new(0usize);
    let eval = |x: &mut Vec<f64>| {
        clamp(x);
        evals.set(evals.get() + 1);
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let mut p = x0.to_vec();
    let v = eval(&mut p);
    simplex.push((p, v));
    for i in 0..n {
        let mut p = x0.to_vec();
        // step away from the nearer bound so the vertex stays distinct
        p[i] = if p[i] + step <= upper[i] {
            p[i] + step
        } else {
            p[i] - step
        };
        let v = eval(&mut p);
        simplex.push((p, v));
    }

    while evals.get() < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if (worst - best).abs() <= 1e-10 * (1.0 + best.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|s| s.0[j]).sum::<f64>() / n as f64)
            .collect();
        let towards =
            |t: f64, from: &[f64]| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (from[j] - centroid[j])).collect() };

        let mut reflected = towards(-1.0, &simplex[n].0);
        let fr = eval(&mut reflected);
        if fr < simplex[0].1 {
            let mut expanded = towards(-2.0, &simplex[n].0);
            let fe = eval(&mut expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let mut contracted = if fr < simplex[n].1 {
                towards(-0.5, &simplex[n].0)
            } else {
                towards(0.5, &simplex[n].0)
            };
            let fc = eval(&mut contracted);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best_point = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let mut shrunk: Vec<f64> = (0..n).map(|j| best_point[j] + 0.5 * (s.0[j] - best_point[j])).collect();
                    let v = eval(&mut shrunk);
                    *s = (shrunk, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}
