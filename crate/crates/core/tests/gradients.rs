use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use raypose_core::scorer::network::{score_loss, score_loss_grad};
use raypose_core::scorer::{ScorerConfig, ScorerModel};

/// Tiny instance: 8 rays, 4x4 image in 2x2 patches (4 patches), 8 channels.
fn tiny() -> (ScorerModel, Array2<f64>, Array2<f64>, Vec<f64>) {
    let config = ScorerConfig {
        channels: 8,
        hidden: 16,
        hidden_layers: 2,
        pe_origin: 6,
        pe_dir: 4,
        patch_size: 2,
    };
    let mut model = ScorerModel::init(config, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    // non-zero biases so that every parameter takes part
    for p in model.params_mut() {
        if p.nrows() == 1 {
            p.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
    }
    let rays = Array2::from_shape_fn((8, config.ray_input_dim()), |_| rng.random_range(-1.0..1.0));
    let patches = Array2::from_shape_fn((4, config.patch_dim()), |_| rng.random::<f64>());
    let raw: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let target = raw.iter().map(|v| v * 4.0 / total).collect();
    (model, rays, patches, target)
}

fn loss(model: &ScorerModel, rays: &Array2<f64>, patches: &Array2<f64>, target: &[f64]) -> f64 {
    let cache = model
        .forward_encoded(rays.clone(), patches.clone())
        .unwrap();
    score_loss(cache.scores(), target)
}

#[test]
fn backward_matches_central_differences() {
    let (model, rays, patches, target) = tiny();
    let cache = model
        .forward_encoded(rays.clone(), patches.clone())
        .unwrap();
    let grads = model.backward(&cache, &score_loss_grad(cache.scores(), &target));
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(grads.len(), names.len());

    let h = 1e-5;
    let mut checked = 0;
    for (t, name) in names.iter().enumerate() {
        let shape = grads[t].dim();
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let mut plus = model.clone();
                plus.params_mut()[t][[r, c]] += h;
                let mut minus = model.clone();
                minus.params_mut()[t][[r, c]] -= h;
                let numeric = (loss(&plus, &rays, &patches, &target)
                    - loss(&minus, &rays, &patches, &target))
                    / (2.0 * h);
                let analytic = grads[t][[r, c]];
                let tol = 1e-4 * analytic.abs().max(numeric.abs()) + 1e-9;
                assert!(
                    (analytic - numeric).abs() <= tol,
                    "{name}[{r},{c}]: analytic {analytic} numeric {numeric}"
                );
                checked += 1;
            }
        }
    }
    assert_eq!(
        checked,
        model.params().iter().map(|(_, p)| p.len()).sum::<usize>()
    );
}
