//! Bundle generation and test-time pose estimation.
//!
//! A bundle is built once per field and seed (sample surface points, cast
//! isocell rays, render their colors). Each query image is then scored
//! against it, the best rays are selected and the pose is solved.

use ndarray::{s, Array2};
use thiserror::Error;

use crate::camera::Pose;
use crate::camera::{Camera, Image, Intrinsics};
use crate::field::RadianceField;
use crate::isocell::{cast_rays, IsocellError, IsocellPartition, RayBundle};
use crate::pose::{select_top, solve_position, solve_rotation, PoseError, PoseEstimate};
use crate::renderer::{render_bundle, RenderConfig};
use crate::sampler::{mh_sample, MhConfig, SamplerError};
use crate::scorer::attention::attention_scores;
use crate::scorer::gt::{gt_scores, GtScoreConfig};
use crate::scorer::network::{encode_rays, patch_center, ScorerModel};
use crate::scorer::ScorerError;

#[derive(Debug, Error, PartialEq)]
pub enum BundleError {
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Isocell(#[from] IsocellError),
}

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Pose(#[from] PoseError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleConfig {
    pub sampler: MhConfig,
    /// Rays per surface point; must be `3 n^2`.
    pub cells: usize,
    pub render: RenderConfig,
}

impl BundleConfig {
    /// Sampler defaults and surface-ray rendering for a scene of the given
    /// box diagonal.
    pub fn for_diagonal(diagonal: f64) -> Self {
        Self {
            sampler: MhConfig::default(),
            cells: 27,
            render: RenderConfig::surface(diagonal),
        }
    }
}

pub fn generate_bundle<F: RadianceField + ?Sized>(
    field: &F,
    cfg: &BundleConfig,
) -> Result<RayBundle, BundleError> {
    let partition = IsocellPartition::build(cfg.cells)?;
    let points = mh_sample(field, &cfg.sampler)?;
    Ok(render_bundle(
        field,
        cast_rays(&points, &partition),
        &cfg.render,
    ))
}

const EMBED_CHUNK: usize = 4096;

/// A trained scorer with the ray features of one bundle cached, so that
/// many query images can be scored against the same bundle.
#[derive(Debug, Clone)]
pub struct BundleScorer<'a> {
    model: &'a ScorerModel,
    ray_features: Array2<f64>,
}

impl<'a> BundleScorer<'a> {
    pub fn new(model: &'a ScorerModel, bundle: &RayBundle) -> Self {
        let mut ray_features = Array2::zeros((bundle.len(), model.config.channels));
        for start in (0..bundle.len()).step_by(EMBED_CHUNK) {
            let end = (start + EMBED_CHUNK).min(bundle.len());
            let chunk = RayBundle {
                rays: bundle.rays[start..end].to_vec(),
            };
            let inputs = encode_rays(&chunk, &model.config);
            let features = model.embed_inputs(inputs);
            ray_features.slice_mut(s![start..end, ..]).assign(&features);
        }
        Self {
            model,
            ray_features,
        }
    }

    /// Predicted scores and, for every ray, the pixel center of the patch
    /// that attends to it most.
    pub fn score(&self, image: &Image) -> Result<(Vec<f64>, Vec<(f64, f64)>), ScorerError> {
        let image_features = self.model.encode_image(image)?;
        let att = attention_scores(&self.ray_features, &image_features)?;
        let patch = self.model.config.patch_size;
        let pixels = att
            .best_patches()
            .into_iter()
            .map(|k| patch_center(k, image.width(), patch))
            .collect();
        Ok((att.scores.to_vec(), pixels))
    }
}

/// Where ray scores and pixel correspondences come from.
pub enum ScoreSource<'a, 'b> {
    Learned {
        scorer: &'b BundleScorer<'a>,
        image: &'b Image,
    },
    /// Geometric scores from a known camera. Each ray is matched to the
    /// pixel its origin projects to in that camera.
    Oracle { camera: Camera, gt: GtScoreConfig },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateConfig {
    pub n_top: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self { n_top: 100 }
    }
}

fn pixel_index(camera: &Camera, p: &crate::Vec3) -> Option<(f64, f64)> {
    let (x, y) = camera.project(p)?;
    let k = &camera.intrinsics;
    let inside = x >= 0.0 && y >= 0.0 && x < k.width as f64 && y < k.height as f64;
    inside.then(|| (x.floor() + 0.5, y.floor() + 0.5))
}

/// Selects the top-scoring rays and solves position and orientation.
pub fn estimate_pose(
    bundle: &RayBundle,
    source: &ScoreSource<'_, '_>,
    intrinsics: &Intrinsics,
    cfg: &EstimateConfig,
) -> Result<PoseEstimate, EstimateError> {
    let (scores, pixels): (Vec<f64>, Vec<Option<(f64, f64)>>) = match source {
        ScoreSource::Learned { scorer, image } => {
            let (scores, pixels) = scorer.score(image)?;
            (scores, pixels.into_iter().map(Some).collect())
        }
        ScoreSource::Oracle { camera, gt } => {
            let scores = gt_scores(bundle, &camera.pose.position, gt, bundle.len() as f64)?;
            let pixels = bundle
                .rays
                .iter()
                .map(|r| pixel_index(camera, &r.origin))
                .collect();
            (scores, pixels)
        }
    };

    let top = select_top(&scores, cfg.n_top);
    let rays = bundle.select(&top).rays;
    let weights: Vec<f64> = top.iter().map(|&i| scores[i]).collect();
    let position = solve_position(&rays, &weights)?;

    let (mut matched_rays, mut matched_px, mut matched_w) = (Vec::new(), Vec::new(), Vec::new());
    for ((&i, ray), &w) in top.iter().zip(&rays).zip(&weights) {
        if let Some(px) = pixels[i] {
            matched_rays.push(*ray);
            matched_px.push(px);
            matched_w.push(w);
        }
    }
    if matched_rays.len() < 2 {
        return Err(PoseError::DegenerateDirections.into());
    }
    let rotation = solve_rotation(&matched_rays, &matched_px, intrinsics, &matched_w)?;

    Ok(PoseEstimate {
        pose: Pose::new(rotation, position.position),
        top_indices: top,
        residual: position.residual,
        condition_flag: position.ill_conditioned,
    })
}
