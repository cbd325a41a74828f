//! Radiance fields: density and view-dependent color over a bounded volume.
//!
//! A field is queried through [`RadianceField`]. Analytic scenes and a
//! trilinearly interpolated voxel grid are provided; anything else that can
//! answer `density`/`color` plugs in the same way.

use std::io::{self, BufRead, Write};

use nalgebra::Vector3;
use thiserror::Error;

use crate::{Rgb, Vec3};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("degenerate bounding box: min {min:?} must be strictly below max {max:?}")]
    DegenerateBox { min: [f64; 3], max: [f64; 3] },
    #[error("voxel grid resolution must be positive on every axis, got {0:?}")]
    BadResolution([usize; 3]),
    #[error("voxel grid expects {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("negative density {0} in voxel grid")]
    NegativeDensity(f64),
    #[error("malformed voxel grid header: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Axis-aligned bounding box of the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, FieldError> {
        if (0..3).all(|k| min[k] < max[k]) {
            Ok(Self { min, max })
        } else {
            Err(FieldError::DegenerateBox {
                min: min.into(),
                max: max.into(),
            })
        }
    }

    /// Cube centered at the origin with the given half extent.
    pub fn cube(half: f64) -> Self {
        Self::new(Vector3::repeat(-half), Vector3::repeat(half)).expect("half extent must be > 0")
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        Vector3::from_fn(|k, _| p[k].clamp(self.min[k], self.max[k]))
    }

    /// Parametric entry/exit distances of the ray `origin + t * dir`, with
    /// `t >= 0`. `None` when the ray misses the box.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            if dir[k].abs() < 1e-300 {
                if origin[k] < self.min[k] || origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let (mut a, mut b) = (
                (self.min[k] - origin[k]) * inv,
                (self.max[k] - origin[k]) * inv,
            );
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Queryable density and emitted color over a bounded region.
///
/// Implementations must be pure: identical arguments give bit-identical
/// results. Density is non-negative and zero outside [`RadianceField::bbox`];
/// color channels lie in `[0, 1]`.
pub trait RadianceField: Send + Sync {
    fn density(&self, x: &Vec3) -> f64;

    /// Color emitted at `x` toward an observer looking along `view`.
    fn color(&self, x: &Vec3, view: &Vec3) -> Rgb;

    fn bbox(&self) -> &Aabb;

    /// Finite-difference step used for surface normals.
    fn normal_step(&self) -> f64 {
        1e-4 * self.bbox().diagonal()
    }
}

impl<F: RadianceField + ?Sized> RadianceField for Box<F> {
    fn density(&self, x: &Vec3) -> f64 {
        (**self).density(x)
    }
    fn color(&self, x: &Vec3, view: &Vec3) -> Rgb {
        (**self).color(x, view)
    }
    fn bbox(&self) -> &Aabb {
        (**self).bbox()
    }
    fn normal_step(&self) -> f64 {
        (**self).normal_step()
    }
}

/// Unit surface normal, with a flag for points where the density gradient
/// vanishes and the fallback axis was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normal {
    pub dir: Vec3,
    pub degenerate: bool,
}

pub const FALLBACK_NORMAL: Vec3 = Vector3::new(0.0, 0.0, 1.0);

/// Negative normalized central-difference gradient of the density.
pub fn normal_at<F: RadianceField + ?Sized>(field: &F, x: &Vec3, h: f64) -> Normal {
    debug_assert!(h > 0.0);
    let grad = Vector3::from_fn(|k, _| {
        let mut e = Vec3::zeros();
        e[k] = h;
        (field.density(&(x + e)) - field.density(&(x - e))) / (2.0 * h)
    });
    let norm = grad.norm();
    if norm < 1e-12 || !norm.is_finite() {
        Normal {
            dir: FALLBACK_NORMAL,
            degenerate: true,
        }
    } else {
        Normal {
            dir: -grad / norm,
            degenerate: false,
        }
    }
}

fn clamp_rgb(c: Rgb) -> Rgb {
    c.map(|v| v.clamp(0.0, 1.0))
}

/// Field built from a pair of closures; handy for ad-hoc analytic scenes.
pub struct FnField<D, C> {
    bbox: Aabb,
    density: D,
    color: C,
}

impl<D, C> FnField<D, C>
where
    D: Fn(&Vec3) -> f64 + Send + Sync,
    C: Fn(&Vec3, &Vec3) -> Rgb + Send + Sync,
{
    pub fn new(bbox: Aabb, density: D, color: C) -> Self {
        Self {
            bbox,
            density,
            color,
        }
    }
}

impl<D, C> RadianceField for FnField<D, C>
where
    D: Fn(&Vec3) -> f64 + Send + Sync,
    C: Fn(&Vec3, &Vec3) -> Rgb + Send + Sync,
{
    fn density(&self, x: &Vec3) -> f64 {
        if self.bbox.contains(x) {
            (self.density)(x).max(0.0)
        } else {
            0.0
        }
    }

    fn color(&self, x: &Vec3, view: &Vec3) -> Rgb {
        if self.bbox.contains(x) {
            clamp_rgb((self.color)(x, view))
        } else {
            Rgb::zeros()
        }
    }

    fn bbox(&self) -> &Aabb {
        &self.bbox
    }
}

/// Spherical shell: `peak * exp(-sharpness * (|x - center| - radius)^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellField {
    pub bbox: Aabb,
    pub center: Vec3,
    pub radius: f64,
    pub sharpness: f64,
    pub peak: f64,
    pub color: Rgb,
}

impl ShellField {
    pub fn new(bbox: Aabb, radius: f64, sharpness: f64, peak: f64, color: Rgb) -> Self {
        Self {
            center: bbox.center(),
            bbox,
            radius,
            sharpness,
            peak,
            color: clamp_rgb(color),
        }
    }

    fn raw_density(&self, x: &Vec3) -> f64 {
        let r = (x - self.center).norm() - self.radius;
        self.peak * (-self.sharpness * r * r).exp()
    }
}

impl RadianceField for ShellField {
    fn density(&self, x: &Vec3) -> f64 {
        if self.bbox.contains(x) {
            self.raw_density(x)
        } else {
            0.0
        }
    }

    fn color(&self, x: &Vec3, _view: &Vec3) -> Rgb {
        if self.bbox.contains(x) {
            self.color
        } else {
            Rgb::zeros()
        }
    }

    fn bbox(&self) -> &Aabb {
        &self.bbox
    }
}

/// Two shells with distinct colors; color is the density-weighted blend.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoShellsField {
    pub bbox: Aabb,
    pub shells: [ShellField; 2],
}

impl RadianceField for TwoShellsField {
    fn density(&self, x: &Vec3) -> f64 {
        if !self.bbox.contains(x) {
            return 0.0;
        }
        self.shells.iter().map(|s| s.raw_density(x)).sum()
    }

    fn color(&self, x: &Vec3, _view: &Vec3) -> Rgb {
        if !self.bbox.contains(x) {
            return Rgb::zeros();
        }
        let (a, b) = (self.shells[0].raw_density(x), self.shells[1].raw_density(x));
        if a + b <= 0.0 {
            return self.shells[0].color;
        }
        clamp_rgb((self.shells[0].color * a + self.shells[1].color * b) / (a + b))
    }

    fn bbox(&self) -> &Aabb {
        &self.bbox
    }
}

/// Hollow box whose density peaks on the faces, with a per-face checker
/// texture so that different faces and regions are distinguishable.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedBoxField {
    pub bbox: Aabb,
    pub center: Vec3,
    pub half: Vec3,
    pub sharpness: f64,
    pub peak: f64,
    pub checks: usize,
}

const FACE_HUES: [[f64; 3]; 6] = [
    [0.9, 0.2, 0.2],
    [0.2, 0.8, 0.3],
    [0.2, 0.3, 0.9],
    [0.9, 0.8, 0.2],
    [0.8, 0.3, 0.8],
    [0.2, 0.8, 0.8],
];

impl TexturedBoxField {
    /// Signed distance to the box surface (negative inside).
    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        let q = (x - self.center).abs() - self.half;
        let outside = q.map(|v| v.max(0.0)).norm();
        let inside = q.max().min(0.0);
        outside + inside
    }

    fn face_of(&self, local: &Vec3) -> (usize, usize) {
        let scaled = local.component_div(&self.half);
        let axis = scaled.iamax();
        let face = 2 * axis + usize::from(scaled[axis] < 0.0);
        (face, axis)
    }
}

impl RadianceField for TexturedBoxField {
    fn density(&self, x: &Vec3) -> f64 {
        if !self.bbox.contains(x) {
            return 0.0;
        }
        let d = self.signed_distance(x);
        self.peak * (-self.sharpness * d * d).exp()
    }

    fn color(&self, x: &Vec3, _view: &Vec3) -> Rgb {
        if !self.bbox.contains(x) {
            return Rgb::zeros();
        }
        let local = x - self.center;
        let (face, axis) = self.face_of(&local);
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let cell = |k: usize| {
            let t = (local[k] / self.half[k] * 0.5 + 0.5) * self.checks as f64;
            t.floor() as i64
        };
        let hue = Vector3::from(FACE_HUES[face]);
        if (cell(u) + cell(v)).rem_euclid(2) == 0 {
            hue
        } else {
            hue * 0.35
        }
    }

    fn bbox(&self) -> &Aabb {
        &self.bbox
    }
}

/// Dense grid of density and color samples located at the grid nodes, with
/// nodes spanning the bounding box corner to corner.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGridField {
    bbox: Aabb,
    resolution: [usize; 3],
    densities: Vec<f32>,
    colors: Vec<[f32; 3]>,
}

impl VoxelGridField {
    pub fn new(
        bbox: Aabb,
        resolution: [usize; 3],
        densities: Vec<f32>,
        colors: Vec<[f32; 3]>,
    ) -> Result<Self, FieldError> {
        if resolution.contains(&0) {
            return Err(FieldError::BadResolution(resolution));
        }
        let count = resolution.iter().product::<usize>();
        for len in [densities.len(), colors.len()] {
            if len != count {
                return Err(FieldError::LengthMismatch {
                    expected: count,
                    got: len,
                });
            }
        }
        if let Some(&bad) = densities.iter().find(|d| !(**d >= 0.0)) {
            return Err(FieldError::NegativeDensity(bad as f64));
        }
        Ok(Self {
            bbox,
            resolution,
            densities,
            colors,
        })
    }

    /// Samples `density`/`color` at every node of a grid over `field`'s box.
    pub fn bake<F: RadianceField + ?Sized>(
        field: &F,
        resolution: [usize; 3],
    ) -> Result<Self, FieldError> {
        let bbox = *field.bbox();
        let mut densities = Vec::with_capacity(resolution.iter().product());
        let mut colors = Vec::with_capacity(densities.capacity());
        let view = Vector3::new(0.0, 0.0, -1.0);
        for z in 0..resolution[2] {
            for y in 0..resolution[1] {
                for x in 0..resolution[0] {
                    let p = node_position(&bbox, resolution, [x, y, z]);
                    densities.push(field.density(&p) as f32);
                    let c = field.color(&p, &view);
                    colors.push([c[0] as f32, c[1] as f32, c[2] as f32]);
                }
            }
        }
        Self::new(bbox, resolution, densities, colors)
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    fn index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.resolution[0] * (y + self.resolution[1] * z)
    }

    /// Enclosing node indices and fractional offsets per axis.
    fn locate(&self, p: &Vec3) -> [(usize, usize, f64); 3] {
        let ext = self.bbox.extent();
        std::array::from_fn(|k| {
            let n = self.resolution[k];
            if n == 1 {
                return (0, 0, 0.0);
            }
            let g =
                ((p[k] - self.bbox.min[k]) / ext[k] * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let i0 = (g.floor() as usize).min(n - 2);
            (i0, i0 + 1, g - i0 as f64)
        })
    }

    fn trilinear<T, const D: usize>(
        &self,
        p: &Vec3,
        values: &[T],
        get: impl Fn(&T) -> [f64; D],
    ) -> [f64; D] {
        let [ax, ay, az] = self.locate(p);
        let mut out = [0.0; D];
        for (iz, wz) in [(az.0, 1.0 - az.2), (az.1, az.2)] {
            for (iy, wy) in [(ay.0, 1.0 - ay.2), (ay.1, ay.2)] {
                for (ix, wx) in [(ax.0, 1.0 - ax.2), (ax.1, ax.2)] {
                    let w = wx * wy * wz;
                    if w == 0.0 {
                        continue;
                    }
                    let v = get(&values[self.index([ix, iy, iz])]);
                    for d in 0..D {
                        out[d] += w * v[d];
                    }
                }
            }
        }
        out
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        let [nx, ny, nz] = self.resolution;
        let (lo, hi) = (self.bbox.min, self.bbox.max);
        writeln!(
            out,
            "VOXGRID v1 {nx} {ny} {nz} {} {} {} {} {} {}",
            lo.x, lo.y, lo.z, hi.x, hi.y, hi.z
        )?;
        for d in &self.densities {
            out.write_all(&d.to_le_bytes())?;
        }
        for c in &self.colors {
            for v in c {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<Self, FieldError> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 11 || tokens[0] != "VOXGRID" || tokens[1] != "v1" {
            return Err(FieldError::BadHeader(header.trim_end().to_owned()));
        }
        let bad = || FieldError::BadHeader(header.trim_end().to_owned());
        let mut resolution = [0usize; 3];
        for k in 0..3 {
            resolution[k] = tokens[2 + k].parse().map_err(|_| bad())?;
        }
        let mut corners = [0.0f64; 6];
        for k in 0..6 {
            corners[k] = tokens[5 + k].parse().map_err(|_| bad())?;
        }
        let bbox = Aabb::new(
            Vector3::new(corners[0], corners[1], corners[2]),
            Vector3::new(corners[3], corners[4], corners[5]),
        )?;
        if resolution.contains(&0) {
            return Err(FieldError::BadResolution(resolution));
        }
        let count = resolution.iter().product::<usize>();
        let mut buf = vec![0u8; count * 16];
        input.read_exact(&mut buf)?;
        let floats: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let densities = floats[..count].to_vec();
        let colors = floats[count..]
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Self::new(bbox, resolution, densities, colors)
    }
}

fn node_position(bbox: &Aabb, resolution: [usize; 3], idx: [usize; 3]) -> Vec3 {
    let ext = bbox.extent();
    Vector3::from_fn(|k, _| {
        let n = resolution[k];
        if n == 1 {
            bbox.center()[k]
        } else {
            bbox.min[k] + ext[k] * idx[k] as f64 / (n - 1) as f64
        }
    })
}

impl RadianceField for VoxelGridField {
    fn density(&self, x: &Vec3) -> f64 {
        if !self.bbox.contains(x) {
            return 0.0;
        }
        self.trilinear(x, &self.densities, |d| [*d as f64])[0].max(0.0)
    }

    fn color(&self, x: &Vec3, _view: &Vec3) -> Rgb {
        if !self.bbox.contains(x) {
            return Rgb::zeros();
        }
        let c = self.trilinear(x, &self.colors, |c| c.map(f64::from));
        clamp_rgb(Vector3::from(c))
    }

    fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// One voxel edge: the smallest node spacing.
    fn normal_step(&self) -> f64 {
        let ext = self.bbox.extent();
        (0..3)
            .filter(|&k| self.resolution[k] > 1)
            .map(|k| ext[k] / (self.resolution[k] - 1) as f64)
            .fold(f64::INFINITY, f64::min)
            .min(self.bbox.diagonal())
    }
}
