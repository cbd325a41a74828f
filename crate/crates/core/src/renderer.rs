//! Per-ray volumetric color rendering.

use rayon::prelude::*;

use crate::camera::{Camera, Image};
use crate::field::RadianceField;
use crate::isocell::RayBundle;
use crate::{Rgb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderConfig {
    /// Number of samples along the ray.
    pub samples: usize,
    pub t_near: f64,
    pub t_far: f64,
    /// Feed `-dir` as the view direction to the color field.
    pub view_flip: bool,
}

impl RenderConfig {
    /// Short near-origin span used for rays cast from surface points.
    pub fn surface(diagonal: f64) -> Self {
        Self {
            samples: 32,
            t_near: 0.0,
            t_far: 0.1 * diagonal,
            view_flip: true,
        }
    }

    pub fn camera(samples: usize, t_near: f64, t_far: f64) -> Self {
        Self {
            samples,
            t_near,
            t_far,
            view_flip: false,
        }
    }
}

/// Alpha compositing of `samples` stratified midpoints in `[t_near, t_far]`:
/// `sum_i T_i (1 - exp(-sigma_i delta)) a_i` with `T_i = exp(-sum_{j<i} sigma_j delta)`.
pub fn render_ray<F: RadianceField + ?Sized>(
    field: &F,
    origin: &Vec3,
    dir: &Vec3,
    cfg: &RenderConfig,
) -> Rgb {
    debug_assert!(cfg.samples >= 1 && cfg.t_far > cfg.t_near);
    let delta = (cfg.t_far - cfg.t_near) / cfg.samples as f64;
    let view = if cfg.view_flip { -dir } else { *dir };
    let mut optical_depth = 0.0_f64;
    let mut color = Rgb::zeros();
    for i in 0..cfg.samples {
        let t = cfg.t_near + (i as f64 + 0.5) * delta;
        let x = origin + dir * t;
        let sigma = field.density(&x);
        if sigma > 0.0 {
            let transmittance = (-optical_depth).exp();
            let alpha = 1.0 - (-sigma * delta).exp();
            color += field.color(&x, &view) * (transmittance * alpha);
            optical_depth += sigma * delta;
        }
    }
    color.map(|c| c.clamp(0.0, 1.0))
}

/// Fills every ray's color, preserving order.
pub fn render_bundle<F: RadianceField + ?Sized>(
    field: &F,
    mut bundle: RayBundle,
    cfg: &RenderConfig,
) -> RayBundle {
    bundle.rays.par_iter_mut().for_each(|ray| {
        ray.color = render_ray(field, &ray.origin, &ray.direction, cfg);
    });
    bundle
}

/// Full-frame rendering through a pinhole camera; pixels whose ray misses
/// the scene box stay black.
pub fn render_image<F: RadianceField + ?Sized>(
    field: &F,
    camera: &Camera,
    samples: usize,
) -> Image {
    let (w, h) = (camera.intrinsics.width, camera.intrinsics.height);
    let pixels: Vec<Rgb> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
            let dir = camera.world_ray(x, y);
            match field.bbox().intersect(&camera.pose.position, &dir) {
                Some((t0, t1)) if t1 > t0 => render_ray(
                    field,
                    &camera.pose.position,
                    &dir,
                    &RenderConfig::camera(samples, t0, t1),
                ),
                _ => Rgb::zeros(),
            }
        })
        .collect();
    Image::from_pixels(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Aabb, FnField};
    use nalgebra::Vector3;
    use std::f64::consts::LN_2;

    fn constant(sigma: f64, color: Rgb) -> impl RadianceField {
        FnField::new(
            Aabb::cube(10.0),
            move |_: &Vec3| sigma,
            move |_: &Vec3, _: &Vec3| color,
        )
    }

    #[test]
    fn vacuum_is_black() {
        let f = constant(0.0, Rgb::repeat(1.0));
        let c = render_ray(&f, &Vec3::zeros(), &Vec3::x(), &RenderConfig::surface(1.0));
        assert_eq!(c, Rgb::zeros());
    }

    #[test]
    fn single_sample_half_opacity() {
        let cfg = RenderConfig::camera(1, 0.0, 0.5);
        let f = constant(LN_2 / 0.5, Rgb::new(1.0, 0.0, 0.0));
        let c = render_ray(&f, &Vec3::zeros(), &Vec3::x(), &cfg);
        assert!((c - Rgb::new(0.5, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn two_samples_geometric_accumulation() {
        let cfg = RenderConfig::camera(2, 0.0, 1.0);
        let f = constant(LN_2 / 0.5, Rgb::repeat(1.0));
        let c = render_ray(&f, &Vec3::zeros(), &Vec3::y(), &cfg);
        assert!((c - Rgb::repeat(0.75)).norm() < 1e-12);
    }

    #[test]
    fn view_direction_follows_flip() {
        let f = FnField::new(
            Aabb::cube(10.0),
            |_: &Vec3| 100.0,
            |_: &Vec3, v: &Vec3| Vector3::new(v.x.max(0.0), (-v.x).max(0.0), 0.0),
        );
        let mut cfg = RenderConfig::camera(4, 0.0, 1.0);
        let plain = render_ray(&f, &Vec3::zeros(), &Vec3::x(), &cfg);
        cfg.view_flip = true;
        let flipped = render_ray(&f, &Vec3::zeros(), &Vec3::x(), &cfg);
        assert!(plain.x > 0.99 && plain.y == 0.0);
        assert!(flipped.y > 0.99 && flipped.x == 0.0);
    }

    #[test]
    fn opaque_prefix_hides_the_rest() {
        // dense red slab over t in [0, 0.5), green behind it
        let f = FnField::new(
            Aabb::cube(10.0),
            |x: &Vec3| if x.x < 0.5 { 1e4 } else { 1.0 },
            |x: &Vec3, _: &Vec3| if x.x < 0.5 { Rgb::x() } else { Rgb::y() },
        );
        let c = render_ray(
            &f,
            &Vec3::zeros(),
            &Vec3::x(),
            &RenderConfig::camera(64, 0.0, 2.0),
        );
        assert!(c.y < 1e-6);
        assert!((c.x - 1.0).abs() < 1e-6);
    }
}
