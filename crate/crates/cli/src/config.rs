//! Scene configuration file: field, box, camera intrinsics and
//! hyper-parameters. Paths inside it are relative to the file's directory.

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use raypose_core::field::{Aabb, ShellField, TexturedBoxField, TwoShellsField, VoxelGridField};
use raypose_core::renderer::RenderConfig;
use raypose_core::scorer::{GtScoreConfig, ScorerConfig, TrainConfig};
use raypose_core::{BundleConfig, Intrinsics, MhConfig, RadianceField};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereSpec {
    pub center: [f64; 3],
    pub radius: f64,
    pub sharpness: f64,
    pub peak: f64,
    pub color: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FieldSpec {
    Shell(SphereSpec),
    TwoSpheres {
        spheres: [SphereSpec; 2],
    },
    TexturedBox {
        center: [f64; 3],
        half: [f64; 3],
        sharpness: f64,
        peak: f64,
        checks: usize,
    },
    /// Voxel grid file, relative to the configuration file.
    Voxel {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    /// Surface points per bundle.
    pub points: usize,
    pub mh_iterations: usize,
    pub percentile: f64,
    pub step_scale: f64,
    /// Rays per surface point.
    pub cells: usize,
    /// Samples per surface ray.
    pub render_samples: usize,
    pub lambda: f64,
    pub n_top: usize,
    pub learning_rate: f64,
    pub train_iterations: usize,
    /// Surface points per training bundle.
    pub train_points: usize,
    pub seed: u64,
}

impl Default for Hyper {
    fn default() -> Self {
        let mh = MhConfig::default();
        Self {
            points: mh.points,
            mh_iterations: mh.iterations,
            percentile: mh.percentile,
            step_scale: mh.step_scale,
            cells: 27,
            render_samples: 32,
            lambda: 1.0,
            n_top: 100,
            learning_rate: 1e-3,
            train_iterations: 1500,
            train_points: mh.points,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub field: FieldSpec,
    pub bbox: BoxSpec,
    pub intrinsics: Intrinsics,
    #[serde(default)]
    pub hyper: Hyper,
    #[serde(default)]
    pub scorer: ScorerSpec,
    /// View set file, relative to the configuration file.
    pub views: PathBuf,
}

/// Serializable mirror of [`ScorerConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSpec {
    pub channels: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub pe_origin: usize,
    pub pe_dir: usize,
    pub patch_size: usize,
}

impl Default for ScorerSpec {
    fn default() -> Self {
        let c = ScorerConfig::default();
        Self {
            channels: c.channels,
            hidden: c.hidden,
            hidden_layers: c.hidden_layers,
            pe_origin: c.pe_origin,
            pe_dir: c.pe_dir,
            patch_size: c.patch_size,
        }
    }
}

impl From<ScorerSpec> for ScorerConfig {
    fn from(s: ScorerSpec) -> Self {
        ScorerConfig {
            channels: s.channels,
            hidden: s.hidden,
            hidden_layers: s.hidden_layers,
            pe_origin: s.pe_origin,
            pe_dir: s.pe_dir,
            patch_size: s.patch_size,
        }
    }
}

/// A configuration together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: SceneConfig,
    pub base: PathBuf,
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

impl SphereSpec {
    fn build(&self, bbox: Aabb) -> ShellField {
        let mut shell = ShellField::new(
            bbox,
            self.radius,
            self.sharpness,
            self.peak,
            vec3(self.color),
        );
        shell.center = vec3(self.center);
        shell
    }
}

impl SceneConfig {
    pub fn aabb(&self) -> CliResult<Aabb> {
        Aabb::new(vec3(self.bbox.min), vec3(self.bbox.max))
            .map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let h = &self.hyper;
        let checks = [
            (h.points > 0, "hyper.points must be positive"),
            (h.mh_iterations > 0, "hyper.mh_iterations must be positive"),
            (
                h.percentile > 0.0 && h.percentile < 1.0,
                "hyper.percentile must lie in (0, 1)",
            ),
            (h.step_scale > 0.0, "hyper.step_scale must be positive"),
            (
                h.render_samples > 0,
                "hyper.render_samples must be positive",
            ),
            (h.lambda > 0.0, "hyper.lambda must be positive"),
            (h.n_top > 0, "hyper.n_top must be positive"),
            (
                h.learning_rate >= 0.0,
                "hyper.learning_rate must be non-negative",
            ),
            (h.train_points > 0, "hyper.train_points must be positive"),
            (
                self.scorer.patch_size > 0,
                "scorer.patch_size must be positive",
            ),
            (self.scorer.channels > 0, "scorer.channels must be positive"),
            (
                self.intrinsics.focal > 0.0,
                "intrinsics.focal must be positive",
            ),
            (
                self.intrinsics.width > 0 && self.intrinsics.height > 0,
                "intrinsics image size must be positive",
            ),
        ];
        if let Some((_, msg)) = checks.iter().find(|(ok, _)| !ok) {
            return Err(CliError::Usage((*msg).to_owned()));
        }
        raypose_core::IsocellPartition::build(h.cells)
            .map_err(|e| CliError::Usage(format!("hyper.cells: {e}")))?;
        self.aabb()?;
        Ok(())
    }

    pub fn sampler(&self, points: usize, seed: u64) -> MhConfig {
        MhConfig {
            points,
            iterations: self.hyper.mh_iterations,
            percentile: self.hyper.percentile,
            step_scale: self.hyper.step_scale,
            seed,
        }
    }

    pub fn bundle(&self, points: usize, seed: u64) -> CliResult<BundleConfig> {
        let mut render = RenderConfig::surface(self.aabb()?.diagonal());
        render.samples = self.hyper.render_samples;
        Ok(BundleConfig {
            sampler: self.sampler(points, seed),
            cells: self.hyper.cells,
            render,
        })
    }

    pub fn gt(&self) -> GtScoreConfig {
        GtScoreConfig {
            lambda: self.hyper.lambda,
        }
    }

    pub fn train(&self, iterations: usize, seed: u64) -> CliResult<TrainConfig> {
        Ok(TrainConfig {
            learning_rate: self.hyper.learning_rate,
            iterations,
            seed,
            bundle: self.bundle(self.hyper.train_points, seed)?,
            gt: self.gt(),
        })
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: SceneConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base.join(path)
    }

    pub fn views_path(&self) -> PathBuf {
        self.resolve(&self.config.views)
    }

    /// Builds the radiance field, reading the voxel grid file if needed.
    pub fn field(&self) -> CliResult<Box<dyn RadianceField>> {
        let bbox = self.config.aabb()?;
        Ok(match &self.config.field {
            FieldSpec::Shell(s) => Box::new(s.build(bbox)),
            FieldSpec::TwoSpheres { spheres } => Box::new(TwoShellsField {
                bbox,
                shells: [spheres[0].build(bbox), spheres[1].build(bbox)],
            }),
            FieldSpec::TexturedBox {
                center,
                half,
                sharpness,
                peak,
                checks,
            } => Box::new(TexturedBoxField {
                bbox,
                center: vec3(*center),
                half: vec3(*half),
                sharpness: *sharpness,
                peak: *peak,
                checks: *checks,
            }),
            FieldSpec::Voxel { path } => {
                let full = self.resolve(path);
                let file = File::open(&full).map_err(|e| CliError::io(&full, e))?;
                let grid = VoxelGridField::read(BufReader::new(file))
                    .map_err(|e| CliError::Data(format!("{}: {e}", full.display())))?;
                Box::new(grid)
            }
        })
    }
}

/// Default red sphere shell.
pub fn shell_spec() -> (FieldSpec, BoxSpec) {
    (
        FieldSpec::Shell(SphereSpec {
            center: [0.0; 3],
            radius: 0.5,
            sharpness: 200.0,
            peak: 100.0,
            color: [1.0, 0.0, 0.0],
        }),
        BoxSpec {
            min: [-0.55; 3],
            max: [0.55; 3],
        },
    )
}

pub fn two_spheres_spec() -> (FieldSpec, BoxSpec) {
    let sphere = |x: f64, color: [f64; 3]| SphereSpec {
        center: [x, 0.0, 0.0],
        radius: 0.3,
        sharpness: 400.0,
        peak: 150.0,
        color,
    };
    (
        FieldSpec::TwoSpheres {
            spheres: [sphere(-0.4, [0.9, 0.2, 0.1]), sphere(0.4, [0.1, 0.3, 0.9])],
        },
        BoxSpec {
            min: [-0.8, -0.4, -0.4],
            max: [0.8, 0.4, 0.4],
        },
    )
}

pub fn textured_box_spec() -> (FieldSpec, BoxSpec) {
    (
        FieldSpec::TexturedBox {
            center: [0.0; 3],
            half: [0.4; 3],
            sharpness: 800.0,
            peak: 150.0,
            checks: 4,
        },
        BoxSpec {
            min: [-0.5; 3],
            max: [0.5; 3],
        },
    )
}
