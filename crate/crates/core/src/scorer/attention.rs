//! Single-head scaled dot-product attention from image patches (queries) to
//! rays (keys), and the per-ray scores obtained by summing attention over
//! patches.

use ndarray::{Array1, Array2, Axis, Zip};

use super::ScorerError;

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionScores {
    /// `WH x N`; each row is a softmax over rays.
    pub map: Array2<f64>,
    /// Column sums of `map`, one per ray. They add up to `WH`.
    pub scores: Array1<f64>,
}

impl AttentionScores {
    /// Patch with the largest attention weight for every ray.
    pub fn best_patches(&self) -> Vec<usize> {
        self.map
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }
}

pub fn attention_scores(
    ray_features: &Array2<f64>,
    image_features: &Array2<f64>,
) -> Result<AttentionScores, ScorerError> {
    let channels = ray_features.ncols();
    if image_features.ncols() != channels {
        return Err(ScorerError::ChannelMismatch {
            rays: channels,
            image: image_features.ncols(),
        });
    }
    let mut map = image_features.dot(&ray_features.t());
    map /= (channels as f64).sqrt();
    for mut row in map.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let total = row.sum();
        row /= total;
    }
    let scores = map.sum_axis(Axis(0));
    Ok(AttentionScores { map, scores })
}

/// Back-propagates a gradient on the scores to the ray and image features.
pub fn attention_backward(
    ray_features: &Array2<f64>,
    image_features: &Array2<f64>,
    att: &AttentionScores,
    d_scores: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let scale = 1.0 / (ray_features.ncols() as f64).sqrt();
    // every entry of column n receives d_scores[n]; softmax Jacobian per row
    let row_dot = att.map.dot(d_scores);
    let mut d_logits = att.map.clone();
    Zip::indexed(&mut d_logits).for_each(|(k, n), m| {
        *m *= (d_scores[n] - row_dot[k]) * scale;
    });
    let d_rays = d_logits.t().dot(image_features);
    let d_image = d_logits.dot(ray_features);
    (d_rays, d_image)
}
