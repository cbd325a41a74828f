//! Pinhole cameras, camera-to-world poses and RGB images.
//!
//! Camera frame: `x` right, `y` down, `z` forward (the viewing axis). A pose
//! maps camera-frame vectors into the world and stores the camera center.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Rgb, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Centered principal point with the given horizontal field of view.
    pub fn from_fov(width: usize, height: usize, fov_deg: f64) -> Self {
        let focal = 0.5 * width as f64 / (0.5 * fov_deg.to_radians()).tan();
        Self {
            focal,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            width,
            height,
        }
    }

    /// Unit bearing of a pixel position in the camera frame.
    pub fn bearing(&self, x: f64, y: f64) -> Vec3 {
        Vector3::new((x - self.cx) / self.focal, (y - self.cy) / self.focal, 1.0).normalize()
    }

    /// Pixel position of a camera-frame point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| {
            (
                self.focal * p.x / p.z + self.cx,
                self.focal * p.y / p.z + self.cy,
            )
        })
    }
}

/// Camera-to-world rigid transform `[R | p]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub position: Vec3,
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, position: Vec3) -> Self {
        Self { rotation, position }
    }

    /// Camera at `eye` whose viewing axis points at `target`. `up` fixes roll
    /// and must not be parallel to the viewing axis.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        Self {
            rotation: Matrix3::from_columns(&[right, down, forward]),
            position: eye,
        }
    }

    /// Row-major 3x4 matrix.
    pub fn to_rows(&self) -> [[f64; 4]; 3] {
        std::array::from_fn(|r| {
            [
                self.rotation[(r, 0)],
                self.rotation[(r, 1)],
                self.rotation[(r, 2)],
                self.position[r],
            ]
        })
    }

    pub fn from_rows(rows: &[[f64; 4]; 3]) -> Self {
        Self {
            rotation: Matrix3::from_fn(|r, c| rows[r][c]),
            position: Vector3::new(rows[0][3], rows[1][3], rows[2][3]),
        }
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose() * (p - self.position)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

impl Camera {
    /// World-frame unit direction through pixel position `(x, y)`.
    pub fn world_ray(&self, x: f64, y: f64) -> Vec3 {
        (self.pose.rotation * self.intrinsics.bearing(x, y)).normalize()
    }

    /// Pixel position of a world point, `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        self.intrinsics.project(&self.pose.world_to_camera(p))
    }
}

/// Row-major RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl Image {
    pub fn from_pixels(width: usize, height: usize, pixels: Vec<Rgb>) -> Self {
        assert_eq!(
            pixels.len(),
            width * height,
            "pixel count does not match image size"
        );
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Self::from_pixels(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    /// Quantizes to 8-bit RGB, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .flat_map(|p| {
                p.iter()
                    .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Self {
        let pixels = bytes
            .chunks_exact(3)
            .map(|c| Rgb::new(c[0] as f64, c[1] as f64, c[2] as f64) / 255.0)
            .collect();
        Self::from_pixels(width, height, pixels)
    }
}
