//! Geometric ground-truth ray scores from a known camera center.

use crate::isocell::{Ray, RayBundle};
use crate::Vec3;

use super::ScorerError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtScoreConfig {
    /// Distance scale of the `1 - tanh(d / lambda)` falloff.
    pub lambda: f64,
}

impl Default for GtScoreConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

/// Distance from `camera` to the closest point of the half-line `ray`.
pub fn ray_distance(ray: &Ray, camera: &Vec3) -> f64 {
    let t = (camera - ray.origin).dot(&ray.direction).max(0.0);
    (ray.origin + ray.direction * t - camera).norm()
}

/// Unnormalized closeness `1 - tanh(d / lambda)` in `(0, 1]`.
pub fn closeness(ray: &Ray, camera: &Vec3, lambda: f64) -> f64 {
    1.0 - (ray_distance(ray, camera) / lambda).tanh()
}

/// Rescales non-negative values so that they sum to `mass`.
pub fn normalize_to_mass(raw: &[f64], mass: f64) -> Result<Vec<f64>, ScorerError> {
    let total: f64 = raw.iter().sum();
    if !(total >= 1e-12) {
        return Err(ScorerError::DegenerateScores(total));
    }
    Ok(raw.iter().map(|d| d * mass / total).collect())
}

/// Per-ray target scores, normalized so they sum to `mass`.
///
/// Training uses `mass = W * H` (the number of image patches), which is the
/// total mass of the predicted scores; `mass = N` gives mean-one scores.
pub fn gt_scores(
    bundle: &RayBundle,
    camera: &Vec3,
    cfg: &GtScoreConfig,
    mass: f64,
) -> Result<Vec<f64>, ScorerError> {
    if bundle.is_empty() {
        return Err(ScorerError::EmptyBundle);
    }
    let raw: Vec<f64> = bundle
        .rays
        .iter()
        .map(|r| closeness(r, camera, cfg.lambda))
        .collect();
    normalize_to_mass(&raw, mass)
}
