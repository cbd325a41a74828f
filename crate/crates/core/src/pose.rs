//! Camera pose recovery from scored rays and pose error metrics.
//!
//! The camera center is the weighted least-squares point closest to the
//! selected ray lines. Orientation comes from aligning the camera-frame
//! bearings of matched pixels with the world directions back along the rays.

use nalgebra::{Matrix3, SymmetricEigen, Vector3, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{Intrinsics, Pose};
use crate::isocell::Ray;
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum PoseError {
    #[error("need at least 2 rays, got {0}")]
    InsufficientRays(usize),
    #[error("weights must be non-negative, finite and not all zero")]
    InvalidWeights,
    #[error("rays are parallel and the system has no consistent solution")]
    AllParallel,
    #[error("direction pairs are collinear; rotation is undetermined")]
    DegenerateDirections,
    #[error("{estimates} estimates but {truth} ground-truth poses")]
    LengthMismatch { estimates: usize, truth: usize },
}

/// Indices of the `n_top` largest scores in descending score order; equal
/// scores keep index order. `n_top` is clamped to the number of scores.
pub fn select_top(scores: &[f64], n_top: usize) -> Vec<usize> {
    let n_top = n_top.min(scores.len());
    if n_top == 0 {
        return Vec::new();
    }
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if n_top < idx.len() {
        idx.select_nth_unstable_by(n_top - 1, order);
        idx.truncate(n_top);
    }
    idx.sort_unstable_by(order);
    idx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSolution {
    pub position: Vec3,
    /// Weighted sum of squared point-to-line distances at `position`.
    pub residual: f64,
    /// Rays are close to parallel; `position` is the minimum-norm solution.
    pub ill_conditioned: bool,
}

fn check_weights(weights: &[f64]) -> Result<(), PoseError> {
    let valid =
        weights.iter().all(|w| w.is_finite() && *w >= 0.0) && weights.iter().any(|w| *w > 0.0);
    if valid {
        Ok(())
    } else {
        Err(PoseError::InvalidWeights)
    }
}

/// Weighted squared perpendicular distance from `p` to every ray line.
pub fn line_residual(rays: &[Ray], weights: &[f64], p: &Vec3) -> f64 {
    rays.iter()
        .zip(weights)
        .map(|(r, w)| {
            let v = p - r.origin;
            let along = v.dot(&r.direction);
            w * (v - r.direction * along).norm_squared()
        })
        .sum()
}

/// Solves `sum_j w_j (I - d_j d_j^T) p = sum_j w_j (I - d_j d_j^T) o_j`.
pub fn solve_position(rays: &[Ray], weights: &[f64]) -> Result<PositionSolution, PoseError> {
    if rays.len() < 2 {
        return Err(PoseError::InsufficientRays(rays.len()));
    }
    assert_eq!(rays.len(), weights.len(), "one weight per ray");
    check_weights(weights)?;

    let mut a = Matrix3::zeros();
    let mut b = Vec3::zeros();
    for (r, &w) in rays.iter().zip(weights) {
        let proj = Matrix3::identity() - r.direction * r.direction.transpose();
        a += proj * w;
        b += proj * r.origin * w;
    }

    let eig = SymmetricEigen::new(a);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let (l_max, l_mid, l_min) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    let cutoff = 1e-8 * l_max;

    let (position, ill_conditioned) = if l_min >= cutoff {
        let p = a
            .cholesky()
            .map(|c| c.solve(&b))
            .unwrap_or_else(|| pseudo_solve(&eig, &b, cutoff));
        (p, false)
    } else {
        let p = pseudo_solve(&eig, &b, cutoff);
        if l_mid < cutoff && (a * p - b).norm() > 1e-9 * (b.norm() + 1.0) {
            return Err(PoseError::AllParallel);
        }
        (p, true)
    };

    Ok(PositionSolution {
        position,
        residual: line_residual(rays, weights, &position),
        ill_conditioned,
    })
}

fn pseudo_solve(eig: &SymmetricEigen<f64, nalgebra::U3>, b: &Vec3, cutoff: f64) -> Vec3 {
    (0..3)
        .filter(|&i| eig.eigenvalues[i] >= cutoff && eig.eigenvalues[i] > 0.0)
        .map(|i| {
            let v = eig.eigenvectors.column(i).into_owned();
            v * (v.dot(b) / eig.eigenvalues[i])
        })
        .sum()
}

/// Rotation `R` minimizing `sum_j w_j |R b_j - t_j|^2` (weighted Wahba
/// problem), from the SVD of the weighted cross-covariance with a
/// determinant correction.
pub fn align_directions(
    bearings: &[Vec3],
    targets: &[Vec3],
    weights: &[f64],
) -> Result<Matrix3<f64>, PoseError> {
    assert_eq!(bearings.len(), targets.len());
    assert_eq!(bearings.len(), weights.len());
    check_weights(weights)?;
    let mut cov = Matrix3::zeros();
    for ((b, t), &w) in bearings.iter().zip(targets).zip(weights) {
        cov += t * b.transpose() * w;
    }
    let svd = SVD::new(cov, true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= 1e-12 * sv[0] {
        return Err(PoseError::DegenerateDirections);
    }
    let (u, v_t) = (svd.u.expect("computed"), svd.v_t.expect("computed"));
    let d = (u * v_t).determinant().signum();
    Ok(u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t)
}

/// Camera orientation from rays matched to pixel positions. The camera sees
/// each ray's origin along `-direction`.
pub fn solve_rotation(
    rays: &[Ray],
    pixels: &[(f64, f64)],
    intrinsics: &Intrinsics,
    weights: &[f64],
) -> Result<Matrix3<f64>, PoseError> {
    assert_eq!(rays.len(), pixels.len());
    let bearings: Vec<Vec3> = pixels
        .iter()
        .map(|&(x, y)| intrinsics.bearing(x, y))
        .collect();
    let targets: Vec<Vec3> = rays.iter().map(|r| -r.direction).collect();
    align_directions(&bearings, &targets, weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub top_indices: Vec<usize>,
    pub residual: f64,
    pub condition_flag: bool,
}

#[derive(Serialize, Deserialize)]
struct PoseEstimateJson {
    pose: [[f64; 4]; 3],
    residual: f64,
    top_indices: Vec<usize>,
    condition_flag: bool,
}

impl PoseEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&PoseEstimateJson {
            pose: self.pose.to_rows(),
            residual: self.residual,
            top_indices: self.top_indices.clone(),
            condition_flag: self.condition_flag,
        })
        .expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let raw: PoseEstimateJson = serde_json::from_str(text)?;
        Ok(Self {
            pose: Pose::from_rows(&raw.pose),
            top_indices: raw.top_indices,
            residual: raw.residual,
            condition_flag: raw.condition_flag,
        })
    }
}

/// Geodesic angle between two rotations, in degrees.
pub fn rotation_error_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let q = a.transpose() * b;
    let cos = (q.trace() - 1.0) / 2.0;
    let sin = 0.5
        * Vector3::new(
            q[(2, 1)] - q[(1, 2)],
            q[(0, 2)] - q[(2, 0)],
            q[(1, 0)] - q[(0, 1)],
        )
        .norm();
    sin.atan2(cos).to_degrees()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewError {
    pub id: String,
    pub angular_deg: f64,
    pub translation: f64,
    pub seconds: f64,
}

impl ViewError {
    pub fn new(id: impl Into<String>, estimate: &Pose, truth: &Pose, seconds: f64) -> Self {
        Self {
            id: id.into(),
            angular_deg: rotation_error_deg(&estimate.rotation, &truth.rotation),
            translation: (estimate.position - truth.position).norm(),
            seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean angular error, degrees.
    pub mae: f64,
    /// Mean translation error, scene units.
    pub mte: f64,
    pub mean_seconds: f64,
    pub per_view: Vec<ViewError>,
}

impl MetricsReport {
    pub fn from_views(per_view: Vec<ViewError>) -> Self {
        let n = per_view.len().max(1) as f64;
        Self {
            mae: per_view.iter().map(|v| v.angular_deg).sum::<f64>() / n,
            mte: per_view.iter().map(|v| v.translation).sum::<f64>() / n,
            mean_seconds: per_view.iter().map(|v| v.seconds).sum::<f64>() / n,
            per_view,
        }
    }
}

pub fn metrics(estimates: &[Pose], truth: &[Pose]) -> Result<MetricsReport, PoseError> {
    if estimates.len() != truth.len() {
        return Err(PoseError::LengthMismatch {
            estimates: estimates.len(),
            truth: truth.len(),
        });
    }
    let views = estimates
        .iter()
        .zip(truth)
        .enumerate()
        .map(|(i, (e, t))| ViewError::new(i.to_string(), e, t, 0.0))
        .collect();
    Ok(MetricsReport::from_views(views))
}
