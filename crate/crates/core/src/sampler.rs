//! Surface point sampling by population-percentile threshold acceptance.
//!
//! Points are bootstrapped uniformly inside the scene box and then moved by
//! isotropic Gaussian proposals. A proposal is accepted only if its density
//! clears the given percentile of the population's densities from the
//! previous round, so the population climbs toward the density maxima, i.e.
//! the surfaces of the scene.

use std::io::{self, Write};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::field::{normal_at, Aabb, RadianceField};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("density is zero at every visited position; the scene looks empty")]
    AllZeroDensity,
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MhConfig {
    /// Number of surface points kept in the population.
    pub points: usize,
    pub iterations: usize,
    /// Acceptance percentile in `(0, 1)`.
    pub percentile: f64,
    /// Proposal standard deviation as a fraction of the box diagonal.
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for MhConfig {
    fn default() -> Self {
        Self {
            points: 5000,
            iterations: 800,
            percentile: 0.6,
            step_scale: 0.2,
            seed: 0,
        }
    }
}

impl MhConfig {
    fn validate(&self) -> Result<(), SamplerError> {
        if self.points == 0 {
            return Err(SamplerError::InvalidConfig("points must be >= 1"));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(SamplerError::InvalidConfig("percentile must lie in (0, 1)"));
        }
        if !(self.step_scale > 0.0) {
            return Err(SamplerError::InvalidConfig("step_scale must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub density: f64,
    pub normal: Vec3,
    /// Set when the density gradient vanished and the fallback normal was used.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurfacePointSet {
    pub points: Vec<SurfacePoint>,
}

impl SurfacePointSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_density(&self) -> f64 {
        self.points.iter().map(|p| p.density).sum::<f64>() / self.points.len().max(1) as f64
    }

    /// ASCII PLY with per-vertex `x y z nx ny nz density`.
    pub fn write_ply<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "ply\nformat ascii 1.0\nelement vertex {}",
            self.points.len()
        )?;
        for name in ["x", "y", "z", "nx", "ny", "nz", "density"] {
            writeln!(out, "property float {name}")?;
        }
        writeln!(out, "end_header")?;
        for p in &self.points {
            let (u, n) = (p.position, p.normal);
            writeln!(
                out,
                "{} {} {} {} {} {} {}",
                u.x, u.y, u.z, n.x, n.y, n.z, p.density
            )?;
        }
        out.flush()
    }
}

/// Per-round diagnostics of a sampler run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MhTrace {
    /// Mean population density before round 0 and after every round
    /// (`iterations + 1` entries).
    pub mean_density: Vec<f64>,
    /// Fraction of accepted proposals per round.
    pub acceptance: Vec<f64>,
    /// Threshold used in each round.
    pub threshold: Vec<f64>,
}

/// Maps a point of the unit cube onto the box.
pub fn from_unit(bbox: &Aabb, beta: &Vec3) -> Vec3 {
    beta.component_mul(&bbox.extent()) + bbox.min
}

/// Uniform draws inside the box.
pub fn bootstrap<R: Rng + ?Sized>(bbox: &Aabb, count: usize, rng: &mut R) -> Vec<Vec3> {
    (0..count).map(|_| uniform_in(bbox, rng)).collect()
}

fn uniform_in<R: Rng + ?Sized>(bbox: &Aabb, rng: &mut R) -> Vec3 {
    let beta = Vector3::new(
        rng.random::<f64>(),
        rng.random::<f64>(),
        rng.random::<f64>(),
    );
    from_unit(bbox, &beta)
}

/// Nearest-rank percentile: the smallest value with at least `fraction` of
/// the population at or below it.
pub fn percentile(values: &[f64], fraction: f64) -> f64 {
    assert!(!values.is_empty());
    let mut scratch = values.to_vec();
    let rank = ((fraction * values.len() as f64).ceil() as usize).clamp(1, values.len()) - 1;
    let (_, v, _) = scratch.select_nth_unstable_by(rank, f64::total_cmp);
    *v
}

/// One independent random stream per point keeps runs reproducible no matter
/// how rounds are scheduled across threads.
fn point_streams(seed: u64, count: usize) -> Vec<ChaCha8Rng> {
    (0..count)
        .map(|g| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(g as u64);
            rng
        })
        .collect()
}

pub fn mh_sample<F: RadianceField + ?Sized>(
    field: &F,
    cfg: &MhConfig,
) -> Result<SurfacePointSet, SamplerError> {
    mh_sample_traced(field, cfg).map(|(set, _)| set)
}

pub fn mh_sample_traced<F: RadianceField + ?Sized>(
    field: &F,
    cfg: &MhConfig,
) -> Result<(SurfacePointSet, MhTrace), SamplerError> {
    cfg.validate()?;
    let bbox = *field.bbox();
    let sigma = cfg.step_scale * bbox.diagonal();

    let mut rngs = point_streams(cfg.seed, cfg.points);
    let mut positions: Vec<Vec3> = rngs.iter_mut().map(|rng| uniform_in(&bbox, rng)).collect();
    let mut densities: Vec<f64> = positions.par_iter().map(|p| field.density(p)).collect();
    let mut any_positive = densities.iter().any(|&d| d > 0.0);

    let mut trace = MhTrace {
        mean_density: vec![mean(&densities)],
        ..MhTrace::default()
    };

    for _ in 0..cfg.iterations {
        let threshold = percentile(&densities, cfg.percentile);
        let (accepted, positive) = positions
            .par_iter_mut()
            .zip(densities.par_iter_mut())
            .zip(rngs.par_iter_mut())
            .map(|((pos, dens), rng)| {
                let step = Vector3::from_fn(|_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * sigma
                });
                let proposal = bbox.clamp(&(*pos + step));
                let d = field.density(&proposal);
                let positive = d > 0.0;
                if d >= threshold {
                    *pos = proposal;
                    *dens = d;
                    (1usize, positive)
                } else {
                    (0, positive)
                }
            })
            .reduce(|| (0, false), |a, b| (a.0 + b.0, a.1 || b.1));
        any_positive |= positive;
        trace.threshold.push(threshold);
        trace.acceptance.push(accepted as f64 / cfg.points as f64);
        trace.mean_density.push(mean(&densities));
    }

    if !any_positive {
        return Err(SamplerError::AllZeroDensity);
    }

    let h = field.normal_step();
    let points = positions
        .into_par_iter()
        .zip(densities)
        .map(|(position, density)| {
            let n = normal_at(field, &position, h);
            SurfacePoint {
                position,
                density,
                normal: n.dir,
                degenerate: n.degenerate,
            }
        })
        .collect();
    Ok((SurfacePointSet { points }, trace))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FnField, ShellField};
    use crate::Rgb;

    fn shell() -> ShellField {
        ShellField::new(Aabb::cube(0.55), 0.5, 200.0, 1.0, Rgb::new(1.0, 0.0, 0.0))
    }

    #[test]
    fn bootstrap_stays_in_unit_box() {
        let bbox = Aabb::new(Vec3::zeros(), Vector3::repeat(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in bootstrap(&bbox, 1000, &mut rng) {
            assert!(bbox.contains(&p));
        }
    }

    #[test]
    fn bootstrap_mean_is_box_center() {
        let bbox = Aabb::cube(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = bootstrap(&bbox, 10_000, &mut rng);
        let m = pts.iter().sum::<Vec3>() / pts.len() as f64;
        for k in 0..3 {
            assert!(m[k].abs() < 0.05, "axis {k}: {}", m[k]);
        }
    }

    #[test]
    fn zero_beta_maps_to_min_corner() {
        let bbox = Aabb::new(Vector3::new(-1.0, 2.0, 3.0), Vector3::new(0.0, 4.0, 7.0)).unwrap();
        assert_eq!(from_unit(&bbox, &Vec3::zeros()), bbox.min);
    }

    #[test]
    fn ply_lists_every_point() {
        let set = SurfacePointSet {
            points: vec![
                SurfacePoint {
                    position: Vector3::new(0.5, 0.0, -0.25),
                    density: 2.0,
                    normal: Vec3::x(),
                    degenerate: false,
                };
                3
            ],
        };
        let mut out = Vec::new();
        set.write_ply(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("element vertex 3\n"));
        assert!(text.contains("property float density\nend_header\n"));
        assert!(text.ends_with("0.5 0 -0.25 1 0 0 2\n"));
        assert_eq!(text.lines().count(), 11 + 3);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.6), 6.0);
        assert_eq!(percentile(&[4.0], 0.6), 4.0);
    }

    #[test]
    fn shell_population_concentrates_on_radius() {
        let (set, trace) = mh_sample_traced(&shell(), &MhConfig::default()).unwrap();
        let near = set
            .points
            .iter()
            .filter(|p| (p.position.norm() - 0.5).abs() < 0.05)
            .count();
        assert!(near as f64 >= 0.95 * set.len() as f64, "{near}");
        assert!(trace.mean_density.last().unwrap() >= &trace.mean_density[0]);
        assert_eq!(trace.mean_density.len(), 801);
    }

    #[test]
    fn constant_density_stays_centered() {
        let field = FnField::new(
            Aabb::cube(1.0),
            |_: &Vec3| 1.0,
            |_: &Vec3, _: &Vec3| Rgb::zeros(),
        );
        let cfg = MhConfig {
            iterations: 200,
            ..MhConfig::default()
        };
        let (set, trace) = mh_sample_traced(&field, &cfg).unwrap();
        assert!(trace.acceptance.iter().all(|&a| a == 1.0));
        let n = set.len() as f64;
        for k in 0..3 {
            let m = set.points.iter().map(|p| p.position[k]).sum::<f64>() / n;
            let var = set
                .points
                .iter()
                .map(|p| (p.position[k] - m).powi(2))
                .sum::<f64>()
                / n;
            assert!(m.abs() < 3.0 * (var / n).sqrt(), "axis {k}: mean {m}");
        }
    }

    #[test]
    fn empty_scene_is_an_error() {
        let field = FnField::new(
            Aabb::cube(1.0),
            |_: &Vec3| 0.0,
            |_: &Vec3, _: &Vec3| Rgb::zeros(),
        );
        let cfg = MhConfig {
            points: 50,
            iterations: 20,
            ..MhConfig::default()
        };
        assert_eq!(mh_sample(&field, &cfg), Err(SamplerError::AllZeroDensity));
    }

    #[test]
    fn same_seed_same_points() {
        let cfg = MhConfig {
            points: 300,
            iterations: 50,
            seed: 77,
            ..MhConfig::default()
        };
        let a = mh_sample(&shell(), &cfg).unwrap();
        let b = mh_sample(&shell(), &cfg).unwrap();
        assert_eq!(a, b);
        let c = mh_sample(&shell(), &MhConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn output_inside_box_with_unit_normals() {
        let cfg = MhConfig {
            points: 500,
            iterations: 100,
            ..MhConfig::default()
        };
        let field = shell();
        let set = mh_sample(&field, &cfg).unwrap();
        for p in &set.points {
            assert!(field.bbox().contains(&p.position));
            if !p.degenerate {
                assert!((p.normal.norm() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = MhConfig {
            percentile: 1.0,
            ..MhConfig::default()
        };
        assert!(matches!(
            mh_sample(&shell(), &cfg),
            Err(SamplerError::InvalidConfig(_))
        ));
    }
}
