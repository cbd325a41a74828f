//! Equal-area hemisphere partition and normal-oriented ray casting.
//!
//! The unit disk is split into `n` concentric rings; ring `i` (1-based)
//! spans radii `[(i-1)/n, i/n]` and holds `(2i-1) * 3` cells, so every cell
//! covers the same disk area `pi / (3 n^2)`. Cell centers are lifted to the
//! `+z` hemisphere with the Lambert azimuthal equal-area map, which keeps the
//! cells' solid angles equal.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::sampler::SurfacePointSet;
use crate::{Rgb, Vec3};

/// Cells in the innermost ring.
pub const BASE_CELLS: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum IsocellError {
    #[error("cell count {0} is not of the form 3 * n^2")]
    InvalidCellCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub ring: usize,
    /// Cell center on the unit disk, polar coordinates.
    pub radius: f64,
    pub azimuth: f64,
    /// Cell center lifted onto the `+z` hemisphere.
    pub dir: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsocellPartition {
    rings: usize,
    cells: Vec<Cell>,
}

/// Lambert azimuthal equal-area lift of a disk point onto the `+z` hemisphere.
pub fn lift_to_hemisphere(radius: f64, azimuth: f64) -> Vec3 {
    let s = radius * (2.0 - radius * radius).sqrt();
    Vector3::new(s * azimuth.cos(), s * azimuth.sin(), 1.0 - radius * radius)
}

impl IsocellPartition {
    pub fn build(cell_count: usize) -> Result<Self, IsocellError> {
        let rings = rings_for(cell_count).ok_or(IsocellError::InvalidCellCount(cell_count))?;
        let mut cells = Vec::with_capacity(cell_count);
        for ring in 1..=rings {
            let count = cells_in_ring(ring);
            let radius = (ring as f64 - 0.5) / rings as f64;
            let width = 2.0 * PI / count as f64;
            let offset = (ring - 1) as f64 * PI / count as f64;
            for j in 0..count {
                let azimuth = offset + (j as f64 + 0.5) * width;
                cells.push(Cell {
                    ring,
                    radius,
                    azimuth,
                    dir: lift_to_hemisphere(radius, azimuth),
                });
            }
        }
        Ok(Self { rings, cells })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn rings(&self) -> usize {
        self.rings
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn directions(&self) -> impl Iterator<Item = &Vec3> {
        self.cells.iter().map(|c| &c.dir)
    }

    /// Disk area of ring `ring` (1-based) divided by its cell count.
    pub fn cell_area(&self, ring: usize) -> f64 {
        let n = self.rings as f64;
        let (inner, outer) = ((ring - 1) as f64 / n, ring as f64 / n);
        PI * (outer * outer - inner * inner) / cells_in_ring(ring) as f64
    }
}

pub fn cells_in_ring(ring: usize) -> usize {
    (2 * ring - 1) * BASE_CELLS
}

fn rings_for(cell_count: usize) -> Option<usize> {
    if cell_count == 0 || !cell_count.is_multiple_of(BASE_CELLS) {
        return None;
    }
    let sq = cell_count / BASE_CELLS;
    let n = (sq as f64).sqrt().round() as usize;
    (n * n == sq).then_some(n)
}

/// Minimal rotation carrying `+z` onto `normal`; a half turn about `x` at the
/// antipode.
pub fn align_z_to(normal: &Vec3) -> Matrix3<f64> {
    let z = Vec3::z();
    let n = normal.normalize();
    let c = z.dot(&n);
    if c < -1.0 + 1e-12 {
        return Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0));
    }
    let axis = z.cross(&n);
    let s = axis.norm();
    if s < 1e-300 {
        return Matrix3::identity();
    }
    Rotation3::from_axis_angle(&Unit::new_unchecked(axis / s), s.atan2(c)).into_inner()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub color: Rgb,
    /// Index of the surface point the ray was cast from.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RayBundle {
    pub rays: Vec<Ray>,
}

impl RayBundle {
    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> RayBundle {
        RayBundle {
            rays: indices.iter().map(|&i| self.rays[i]).collect(),
        }
    }

    /// ASCII PLY of line segments from each origin to `origin + length * dir`.
    pub fn write_ply<W: Write>(&self, mut out: W, length: f64) -> io::Result<()> {
        writeln!(out, "ply\nformat ascii 1.0")?;
        writeln!(out, "element vertex {}", 2 * self.rays.len())?;
        writeln!(out, "property float x\nproperty float y\nproperty float z")?;
        writeln!(
            out,
            "property uchar red\nproperty uchar green\nproperty uchar blue"
        )?;
        writeln!(out, "element edge {}", self.rays.len())?;
        writeln!(
            out,
            "property int vertex1\nproperty int vertex2\nend_header"
        )?;
        for ray in &self.rays {
            let c = ray.color.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
            for p in [ray.origin, ray.origin + ray.direction * length] {
                writeln!(out, "{} {} {} {} {} {}", p.x, p.y, p.z, c.x, c.y, c.z)?;
            }
        }
        for i in 0..self.rays.len() {
            writeln!(out, "{} {}", 2 * i, 2 * i + 1)?;
        }
        Ok(())
    }
}

/// Casts one ray per partition cell from every surface point, with the
/// partition's `+z` axis aligned to the point normal. Ordering is point-major.
pub fn cast_rays(points: &SurfacePointSet, partition: &IsocellPartition) -> RayBundle {
    let rays = points
        .points
        .par_iter()
        .enumerate()
        .flat_map_iter(|(g, p)| {
            let rot = align_z_to(&p.normal);
            partition.cells.iter().map(move |cell| Ray {
                origin: p.position,
                direction: (rot * cell.dir).normalize(),
                color: Rgb::zeros(),
                source: g,
            })
        })
        .collect();
    RayBundle { rays }
}
