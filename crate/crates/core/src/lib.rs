//! Camera pose estimation against a volumetric radiance field without an
//! initial guess.
//!
//! The pipeline samples surface points from the field's density, casts an
//! equal-area bundle of rays from each point, renders a color per ray,
//! scores every ray against the query image and recovers the camera center
//! as the weighted least-squares intersection of the best rays.

pub mod camera;
pub mod estimate;
pub mod field;
pub mod isocell;
pub mod pose;
pub mod renderer;
pub mod sampler;
pub mod scorer;

pub use camera::{Camera, Image, Intrinsics, Pose};
pub use estimate::{
    estimate_pose, generate_bundle, BundleConfig, BundleScorer, EstimateConfig, ScoreSource,
};
pub use field::{Aabb, RadianceField};
pub use isocell::{cast_rays, IsocellPartition, Ray, RayBundle};
pub use pose::{MetricsReport, PoseEstimate};
pub use sampler::{mh_sample, MhConfig, SurfacePointSet};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Rgb = nalgebra::Vector3<f64>;

/// Derives a per-iteration seed from a base seed (splitmix64 finalizer).
pub fn fold_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
