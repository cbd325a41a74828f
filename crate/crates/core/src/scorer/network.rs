//! Ray embedding MLP, linear patch image encoder and their joint
//! forward/backward pass through the attention scores.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::Image;
use crate::isocell::RayBundle;

use super::attention::{attention_backward, attention_scores, AttentionScores};
use super::ScorerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScorerConfig {
    /// Feature width `C` shared by rays and image patches.
    pub channels: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    /// Positional-encoding frequencies for ray origins.
    pub pe_origin: usize,
    /// Positional-encoding frequencies for ray directions.
    pub pe_dir: usize,
    pub patch_size: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            channels: 64,
            hidden: 128,
            hidden_layers: 2,
            pe_origin: 6,
            pe_dir: 4,
            patch_size: 8,
        }
    }
}

impl ScorerConfig {
    /// Width of the encoded ray: encoded origin, encoded direction, raw color.
    pub fn ray_input_dim(&self) -> usize {
        6 * self.pe_origin + 6 * self.pe_dir + 3
    }

    pub fn patch_dim(&self) -> usize {
        3 * self.patch_size * self.patch_size
    }
}

/// `sin/cos(2^l * pi * v)` for `l < freqs`, appended to `out`.
pub fn positional_encoding(v: f64, freqs: usize, out: &mut Vec<f64>) {
    let mut scale = PI;
    for _ in 0..freqs {
        let (s, c) = (scale * v).sin_cos();
        out.push(s);
        out.push(c);
        scale *= 2.0;
    }
}

pub fn encode_rays(bundle: &RayBundle, cfg: &ScorerConfig) -> Array2<f64> {
    let dim = cfg.ray_input_dim();
    let mut data = Vec::with_capacity(bundle.len() * dim);
    for ray in &bundle.rays {
        for k in 0..3 {
            positional_encoding(ray.origin[k], cfg.pe_origin, &mut data);
        }
        for k in 0..3 {
            positional_encoding(ray.direction[k], cfg.pe_dir, &mut data);
        }
        data.extend(ray.color.iter());
    }
    Array2::from_shape_vec((bundle.len(), dim), data).expect("row width matches encoding")
}

/// Splits an image into non-overlapping square patches, one row per patch in
/// row-major patch order; within a patch pixels are row-major, RGB fastest.
pub fn image_patches(image: &Image, patch: usize) -> Result<Array2<f64>, ScorerError> {
    let (w, h) = (image.width(), image.height());
    if patch == 0 || w % patch != 0 || h % patch != 0 || w == 0 || h == 0 {
        return Err(ScorerError::ImageSize {
            width: w,
            height: h,
            patch,
        });
    }
    let (gw, gh) = (w / patch, h / patch);
    let mut data = Vec::with_capacity(w * h * 3);
    for py in 0..gh {
        for px in 0..gw {
            for y in 0..patch {
                for x in 0..patch {
                    data.extend(image.pixel(px * patch + x, py * patch + y).iter());
                }
            }
        }
    }
    Ok(Array2::from_shape_vec((gw * gh, 3 * patch * patch), data).expect("patch rows"))
}

/// Pixel center of patch `k` for an image `width` pixels wide.
pub fn patch_center(k: usize, width: usize, patch: usize) -> (f64, f64) {
    let gw = width / patch;
    let (px, py) = (k % gw, k / gw);
    (
        ((px as f64) + 0.5) * patch as f64,
        ((py as f64) + 0.5) * patch as f64,
    )
}

/// Affine map `x W + b`; `weight` is `in x out`, `bias` is `1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl Linear {
    /// Uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight =
            Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit));
        Self {
            weight,
            bias: Array2::zeros((1, fan_out)),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.ncols()
    }
}

/// Ray embedder and image encoder trained together.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub config: ScorerConfig,
    /// Ray MLP; ReLU between layers, linear output.
    pub ray_layers: Vec<Linear>,
    pub patch_proj: Linear,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub ray_inputs: Array2<f64>,
    /// Output of every ray layer; the last one is the ray feature matrix.
    pub ray_activations: Vec<Array2<f64>>,
    pub patches: Array2<f64>,
    pub image_features: Array2<f64>,
    pub attention: AttentionScores,
}

impl ForwardCache {
    pub fn ray_features(&self) -> &Array2<f64> {
        self.ray_activations.last().expect("at least one layer")
    }

    pub fn scores(&self) -> &Array1<f64> {
        &self.attention.scores
    }
}

/// Gradients aligned with [`ScorerModel::params`].
pub type Grads = Vec<Array2<f64>>;

impl ScorerModel {
    pub fn init(config: ScorerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![config.ray_input_dim()];
        widths.extend(std::iter::repeat_n(config.hidden, config.hidden_layers));
        widths.push(config.channels);
        let ray_layers = widths
            .windows(2)
            .map(|w| Linear::glorot(w[0], w[1], &mut rng))
            .collect();
        let patch_proj = Linear::glorot(config.patch_dim(), config.channels, &mut rng);
        Self {
            config,
            ray_layers,
            patch_proj,
        }
    }

    /// Named parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::with_capacity(2 * self.ray_layers.len() + 2);
        for (i, l) in self.ray_layers.iter().enumerate() {
            out.push((format!("ray.{i}.weight"), &l.weight));
            out.push((format!("ray.{i}.bias"), &l.bias));
        }
        out.push(("patch.weight".to_owned(), &self.patch_proj.weight));
        out.push(("patch.bias".to_owned(), &self.patch_proj.bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = Vec::with_capacity(2 * self.ray_layers.len() + 2);
        for l in &mut self.ray_layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.patch_proj.weight);
        out.push(&mut self.patch_proj.bias);
        out
    }

    pub fn embed_rays(&self, bundle: &RayBundle) -> Array2<f64> {
        self.embed_inputs(encode_rays(bundle, &self.config))
    }

    /// Ray features from already encoded rays, keeping no intermediates.
    pub fn embed_inputs(&self, inputs: Array2<f64>) -> Array2<f64> {
        let last = self.ray_layers.len() - 1;
        let mut x = inputs;
        for (i, layer) in self.ray_layers.iter().enumerate() {
            x = layer.forward(&x);
            if i < last {
                x.mapv_inplace(|v| v.max(0.0));
            }
        }
        x
    }

    fn ray_forward(&self, inputs: Array2<f64>) -> Vec<Array2<f64>> {
        let last = self.ray_layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.ray_layers.len());
        for (i, layer) in self.ray_layers.iter().enumerate() {
            let x = acts.last().unwrap_or(&inputs);
            let mut y = layer.forward(x);
            if i < last {
                y.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(y);
        }
        acts
    }

    pub fn encode_image(&self, image: &Image) -> Result<Array2<f64>, ScorerError> {
        Ok(self
            .patch_proj
            .forward(&image_patches(image, self.config.patch_size)?))
    }

    pub fn forward(&self, bundle: &RayBundle, image: &Image) -> Result<ForwardCache, ScorerError> {
        let patches = image_patches(image, self.config.patch_size)?;
        self.forward_encoded(encode_rays(bundle, &self.config), patches)
    }

    pub fn forward_encoded(
        &self,
        ray_inputs: Array2<f64>,
        patches: Array2<f64>,
    ) -> Result<ForwardCache, ScorerError> {
        let ray_activations = self.ray_forward(ray_inputs.clone());
        let image_features = self.patch_proj.forward(&patches);
        let attention = attention_scores(ray_activations.last().expect("layers"), &image_features)?;
        Ok(ForwardCache {
            ray_inputs,
            ray_activations,
            patches,
            image_features,
            attention,
        })
    }

    /// Gradients of a loss with respect to every parameter, given the loss
    /// gradient with respect to the predicted scores.
    pub fn backward(&self, cache: &ForwardCache, d_scores: &Array1<f64>) -> Grads {
        let (mut d_rays, d_image) = attention_backward(
            cache.ray_features(),
            &cache.image_features,
            &cache.attention,
            d_scores,
        );

        let mut layer_grads = Vec::with_capacity(self.ray_layers.len());
        for i in (0..self.ray_layers.len()).rev() {
            let input = if i == 0 {
                &cache.ray_inputs
            } else {
                &cache.ray_activations[i - 1]
            };
            let d_weight = input.t().dot(&d_rays);
            let d_bias = d_rays.sum_axis(Axis(0)).insert_axis(Axis(0));
            layer_grads.push((d_weight, d_bias));
            if i > 0 {
                let mut d_input = d_rays.dot(&self.ray_layers[i].weight.t());
                Zip::from(&mut d_input).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                d_rays = d_input;
            }
        }

        let mut grads = Vec::with_capacity(2 * self.ray_layers.len() + 2);
        for (w, b) in layer_grads.into_iter().rev() {
            grads.push(w);
            grads.push(b);
        }
        grads.push(cache.patches.t().dot(&d_image));
        grads.push(d_image.sum_axis(Axis(0)).insert_axis(Axis(0)));
        grads
    }
}

/// Mean squared error between predicted and target scores.
pub fn score_loss(predicted: &Array1<f64>, target: &[f64]) -> f64 {
    let n = target.len() as f64;
    predicted
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n
}

pub fn score_loss_grad(predicted: &Array1<f64>, target: &[f64]) -> Array1<f64> {
    let n = target.len() as f64;
    Array1::from_iter(predicted.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n))
}
