use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use w2vt::budget::{default_probes, fit_cost_model};
use w2vt::synthetic::PlantedConfig;
use w2vt::trainer::{HyperParams, ModelKind, TrainOptions, Trainer};

/// Predicted epoch times stay within 30% of measured ones on
/// configurations the model was not fit on.
#[test]
fn held_out_epoch_times_within_30_percent() {
    let corpus = PlantedConfig {
        items_per_community: 1000,
        sequences: 10_000,
        seed: 21,
        ..Default::default()
    }
    .build()
    .unwrap();
    let t_ratio = 1e-5;
    let probes: Vec<HyperParams> = ModelKind::ALL
        .iter()
        .flat_map(|&m| default_probes(m))
        .map(|p| HyperParams { t_ratio, ..p })
        .collect();
    let cm = fit_cost_model(&corpus, &probes, 1, 0).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut rows = Vec::new();
    for i in 0..16 {
        let hp = HyperParams {
            model: ModelKind::ALL[i % 2],
            dim: rng.random_range(10..=200),
            window: rng.random_range(1..=40),
            negatives: rng.random_range(1..=40),
            epochs: 1,
            t_ratio,
            ..Default::default()
        };
        let predicted = cm.predict_epoch_s(&hp);
        // best of three damps scheduler noise
        let measured = (0..3)
            .map(|s| {
                let mut tr = Trainer::new(&corpus, hp, TrainOptions::with_seed(s)).unwrap();
                tr.run_epoch().unwrap().wall_s
            })
            .fold(f64::INFINITY, f64::min);
        let err = (predicted - measured).abs() / measured;
        worst = worst.max(err);
        rows.push(format!(
            "{} d={} L={} N={}: predicted {predicted:.4}s measured {measured:.4}s",
            hp.model, hp.dim, hp.window, hp.negatives
        ));
    }
    assert!(worst < 0.3, "worst relative error {worst:.3}\n{}", rows.join("\n"));
}
