//! Per-scene training of the scorer against geometric ground-truth scores.

use ndarray::Array2;

use crate::camera::Image;
use crate::estimate::{generate_bundle, BundleConfig};
use crate::field::RadianceField;
use crate::{fold_seed, Vec3};

use super::gt::{gt_scores, GtScoreConfig};
use super::network::{encode_rays, image_patches, score_loss, score_loss_grad, Grads, ScorerModel};
use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: i32,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Array2<f64>>, grads: &Grads) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.raw_dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, g), m), v) in params
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            ndarray::Zip::from(p)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Bundle generation; its sampler seed is replaced every iteration.
    pub bundle: BundleConfig,
    pub gt: GtScoreConfig,
}

impl TrainConfig {
    pub fn new(bundle: BundleConfig) -> Self {
        Self {
            learning_rate: 1e-3,
            iterations: 1500,
            seed: 0,
            bundle,
            gt: GtScoreConfig::default(),
        }
    }
}

/// Training image with the center of the camera that took it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainView {
    pub image: Image,
    pub camera_position: Vec3,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ScorerModel,
    /// Loss of every iteration, measured before its update.
    pub losses: Vec<f64>,
}

/// Fits `model` with Adam. Every iteration draws a fresh bundle (iteration
/// index folded into the seed) and cycles through the training views.
pub fn train_scorer<F: RadianceField + ?Sized>(
    field: &F,
    views: &[TrainView],
    mut model: ScorerModel,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if views.is_empty() {
        return Err(TrainError::NoViews);
    }
    let patches = views
        .iter()
        .map(|v| image_patches(&v.image, model.config.patch_size))
        .collect::<Result<Vec<_>, _>>()?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let mut bundle_cfg = cfg.bundle.clone();
        bundle_cfg.sampler.seed = fold_seed(cfg.seed, it as u64);
        let bundle = generate_bundle(field, &bundle_cfg)?;

        let view = it % views.len();
        let mass = patches[view].nrows() as f64;
        let target = gt_scores(&bundle, &views[view].camera_position, &cfg.gt, mass)?;

        let cache =
            model.forward_encoded(encode_rays(&bundle, &model.config), patches[view].clone())?;
        let loss = score_loss(cache.scores(), &target);
        losses.push(loss);
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                iteration: it,
                losses,
            });
        }
        let grads = model.backward(&cache, &score_loss_grad(cache.scores(), &target));
        adam.step(model.params_mut(), &grads);
    }
    Ok(TrainOutcome { model, losses })
}
