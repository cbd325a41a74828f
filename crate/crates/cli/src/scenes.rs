//! Synthetic datasets: an analytic field, cameras on a sphere around it and
//! the images they see.

use std::path::Path;

use clap::ValueEnum;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use raypose_core::renderer::render_image;
use raypose_core::{Aabb, Camera, Intrinsics, Pose, RadianceField, Vec3};

use crate::config::{self, Hyper, LoadedConfig, SceneConfig, ScorerSpec};
use crate::dataset::{write_json, write_png, PoseFile, Split, ViewEntry, ViewSet};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SceneKind {
    Shell,
    TwoSpheres,
    TexturedBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenOptions {
    pub kind: SceneKind,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Square image side in pixels.
    pub size: usize,
    pub fov_deg: f64,
    /// Camera distance from the box center in box diagonals.
    pub distance: f64,
    /// Samples per camera ray.
    pub samples: usize,
    /// Surface points per training bundle written into the configuration.
    pub train_points: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            kind: SceneKind::Shell,
            n_train: 8,
            n_test: 50,
            seed: 0,
            size: 64,
            fov_deg: 40.0,
            distance: 1.5,
            samples: 256,
            train_points: 200,
        }
    }
}

/// Camera at `distance` from `center` along `dir`, looking at `center`.
pub fn orbit_pose(center: &Vec3, dir: &Vec3, distance: f64) -> Pose {
    let up = if dir.z.abs() > 0.95 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    Pose::look_at(center + dir * distance, *center, up)
}

/// Directions drawn uniformly on the unit sphere.
pub fn sphere_directions(count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    (0..count)
        .map(|_| loop {
            let v: Vec3 = Vector3::from_fn(|_, _| StandardNormal.sample(&mut *rng));
            let n = v.norm();
            if n > 1e-9 {
                break v / n;
            }
        })
        .collect()
}

/// Writes `scene.json`, `views.json`, `images/*.png` and `poses/*.json`.
pub fn gen_scene(out: &Path, opts: &GenOptions) -> CliResult<SceneConfig> {
    if opts.n_train == 0 {
        return Err(CliError::Usage(
            "n_train must be at least 1: training needs posed views".into(),
        ));
    }
    if opts.size == 0 || opts.samples == 0 {
        return Err(CliError::Usage(
            "image size and samples must be positive".into(),
        ));
    }
    let (field_spec, bbox) = match opts.kind {
        SceneKind::Shell => config::shell_spec(),
        SceneKind::TwoSpheres => config::two_spheres_spec(),
        SceneKind::TexturedBox => config::textured_box_spec(),
    };
    let intrinsics = Intrinsics::from_fov(opts.size, opts.size, opts.fov_deg);
    let scene = SceneConfig {
        field: field_spec,
        bbox,
        intrinsics,
        hyper: Hyper {
            train_points: opts.train_points,
            seed: opts.seed,
            ..Hyper::default()
        },
        scorer: ScorerSpec::default(),
        views: "views.json".into(),
    };
    scene.validate()?;
    let loaded = LoadedConfig {
        config: scene.clone(),
        base: out.to_path_buf(),
    };
    let field = loaded.field()?;
    let aabb: Aabb = *field.bbox();
    let center = aabb.center();
    let distance = opts.distance * aabb.diagonal();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dirs = sphere_directions(opts.n_train + opts.n_test, &mut rng);
    let mut views = Vec::with_capacity(dirs.len());
    for (i, dir) in dirs.iter().enumerate() {
        let (split, id) = if i < opts.n_train {
            (Split::Train, format!("train_{i:03}"))
        } else {
            (Split::Test, format!("test_{:03}", i - opts.n_train))
        };
        let pose = orbit_pose(&center, dir, distance);
        let camera = Camera { pose, intrinsics };
        let image = render_image(field.as_ref(), &camera, opts.samples);
        let image_path = Path::new("images").join(format!("{id}.png"));
        write_png(&out.join(&image_path), &image)?;
        write_json(
            &out.join("poses").join(format!("{id}.json")),
            &PoseFile {
                pose: pose.to_rows(),
            },
        )?;
        views.push(ViewEntry {
            id,
            image: image_path,
            split,
            pose: Some(pose.to_rows()),
            intrinsics,
        });
    }
    write_json(&out.join("views.json"), &ViewSet { views })?;
    write_json(&out.join("scene.json"), &scene)?;
    Ok(scene)
}
