//! Command implementations.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use raypose_core::estimate::{
    estimate_pose, generate_bundle, BundleScorer, EstimateConfig, EstimateError, ScoreSource,
};
use raypose_core::pose::{MetricsReport, ViewError};
use raypose_core::sampler::{mh_sample, percentile};
use raypose_core::scorer::{
    read_checkpoint, train_scorer, write_checkpoint, ScorerError, ScorerModel, TrainError,
    TrainView,
};
use raypose_core::{Camera, Image, Pose, RayBundle};

use crate::config::LoadedConfig;
use crate::dataset::{
    read_json, read_pose, write_file, write_json, LoadedViews, Split, ViewEntry, ViewSet,
};
use crate::error::{CliError, CliResult};

/// Flags that override configuration values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub cells: Option<usize>,
    pub n_top: Option<usize>,
}

impl Overrides {
    /// Applies the overrides and re-validates the configuration.
    pub fn apply(&self, loaded: &mut LoadedConfig) -> CliResult<()> {
        let h = &mut loaded.config.hyper;
        if let Some(s) = self.seed {
            h.seed = s;
        }
        if let Some(g) = self.points {
            h.points = g;
        }
        if let Some(v) = self.cells {
            h.cells = v;
        }
        if let Some(n) = self.n_top {
            h.n_top = n;
        }
        loaded.config.validate()
    }
}

pub fn load_config(path: &Path, overrides: &Overrides) -> CliResult<LoadedConfig> {
    let mut loaded = LoadedConfig::load(path)?;
    overrides.apply(&mut loaded)?;
    Ok(loaded)
}

fn log_time(what: &str, start: Instant) {
    eprintln!("{what}: {:.3} s", start.elapsed().as_secs_f64());
}

fn bundle_for(loaded: &LoadedConfig) -> CliResult<RayBundle> {
    let field = loaded.field()?;
    let h = &loaded.config.hyper;
    let cfg = loaded.config.bundle(h.points, h.seed)?;
    generate_bundle(field.as_ref(), &cfg).map_err(CliError::numerical)
}

#[derive(Debug, Serialize)]
struct DensitySummary {
    min: f64,
    p10: f64,
    p50: f64,
    p90: f64,
    max: f64,
    mean: f64,
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    points: usize,
    degenerate_normals: usize,
    seed: u64,
    density: DensitySummary,
}

/// Surface points as `points.ply` plus `points.json` with density statistics.
pub fn cmd_sample(loaded: &LoadedConfig, out: &Path) -> CliResult<()> {
    let start = Instant::now();
    let field = loaded.field()?;
    let h = &loaded.config.hyper;
    let set = mh_sample(field.as_ref(), &loaded.config.sampler(h.points, h.seed))
        .map_err(CliError::numerical)?;
    let mut ply = Vec::new();
    set.write_ply(&mut ply).expect("writing to memory");
    write_file(&out.join("points.ply"), &ply)?;

    let d: Vec<f64> = set.points.iter().map(|p| p.density).collect();
    let summary = SampleSummary {
        points: set.len(),
        degenerate_normals: set.points.iter().filter(|p| p.degenerate).count(),
        seed: h.seed,
        density: DensitySummary {
            min: d.iter().copied().fold(f64::INFINITY, f64::min),
            p10: percentile(&d, 0.1),
            p50: percentile(&d, 0.5),
            p90: percentile(&d, 0.9),
            max: d.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: set.mean_density(),
        },
    };
    write_json(&out.join("points.json"), &summary)?;
    log_time("sample", start);
    Ok(())
}

/// Rendered ray bundle as PLY line segments in `rays.ply`.
pub fn cmd_cast(loaded: &LoadedConfig, out: &Path, length: Option<f64>) -> CliResult<()> {
    let start = Instant::now();
    let bundle = bundle_for(loaded)?;
    let length = length.unwrap_or(0.1 * loaded.config.aabb()?.diagonal());
    let mut ply = Vec::new();
    bundle
        .write_ply(&mut ply, length)
        .expect("writing to memory");
    write_file(&out.join("rays.ply"), &ply)?;
    log_time("cast", start);
    Ok(())
}

fn loss_csv(losses: &[f64]) -> String {
    let mut csv = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(csv, "{i},{l}").expect("writing to a string");
    }
    csv
}

/// Trains the scorer on the posed training views; writes `scorer.ckpt` and
/// `loss.csv`.
pub fn cmd_train(loaded: &LoadedConfig, out: &Path, iterations: Option<usize>) -> CliResult<()> {
    let start = Instant::now();
    let views = LoadedViews::load(&loaded.views_path())?;
    let train: Vec<TrainView> = views
        .split(Split::Train)
        .map(|v| {
            Ok(TrainView {
                image: views.image(v)?,
                camera_position: v.pose().expect("checked on load").position,
            })
        })
        .collect::<CliResult<_>>()?;
    if train.is_empty() {
        return Err(CliError::Data("no training views".into()));
    }
    let config = &loaded.config;
    let iterations = iterations.unwrap_or(config.hyper.train_iterations);
    let model = ScorerModel::init(config.scorer.into(), config.hyper.seed);
    let field = loaded.field()?;
    let result = train_scorer(
        field.as_ref(),
        &train,
        model,
        &config.train(iterations, config.hyper.seed)?,
    );
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::NonFiniteLoss { iteration, losses }) => {
            write_file(&out.join("loss.csv"), loss_csv(&losses).as_bytes())?;
            return Err(CliError::Numerical(format!(
                "loss became non-finite at iteration {iteration}"
            )));
        }
        Err(TrainError::Scorer(e @ ScorerError::ImageSize { .. })) => {
            return Err(CliError::Data(e.to_string()))
        }
        Err(e) => return Err(CliError::numerical(e)),
    };
    write_file(&out.join("loss.csv"), loss_csv(&outcome.losses).as_bytes())?;
    let mut ckpt = Vec::new();
    write_checkpoint(&outcome.model, &mut ckpt).expect("writing to memory");
    write_file(&out.join("scorer.ckpt"), &ckpt)?;
    if let (Some(first), Some(last)) = (outcome.losses.first(), outcome.losses.last()) {
        eprintln!(
            "loss {first:.6e} -> {last:.6e} over {} iterations",
            outcome.losses.len()
        );
    }
    log_time("train", start);
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> CliResult<ScorerModel> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    read_checkpoint(BufReader::new(file))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn check_patches(image: &Image, patch: usize, what: &str) -> CliResult<()> {
    if !image.width().is_multiple_of(patch) || !image.height().is_multiple_of(patch) {
        return Err(CliError::Data(format!(
            "{what}: {}x{} image is not divisible into {patch}x{patch} patches",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

fn estimate_error(e: EstimateError) -> CliError {
    match e {
        EstimateError::Scorer(s @ ScorerError::ImageSize { .. }) => CliError::Data(s.to_string()),
        other => CliError::numerical(other),
    }
}

/// How a query is scored.
pub enum Scoring {
    Learned {
        checkpoint: PathBuf,
    },
    /// Geometric scores from a known pose file.
    Oracle {
        pose: PathBuf,
    },
}

/// Estimates the pose of one image and returns the JSON document.
pub fn cmd_estimate(
    loaded: &LoadedConfig,
    scoring: &Scoring,
    image: Option<&Path>,
) -> CliResult<String> {
    let start = Instant::now();
    let config = &loaded.config;
    let est_cfg = EstimateConfig {
        n_top: config.hyper.n_top,
    };
    let intrinsics = config.intrinsics;
    let estimate = match scoring {
        Scoring::Learned { checkpoint } => {
            let image_path = image.ok_or_else(|| {
                CliError::Usage("--image is required without --oracle-scores".into())
            })?;
            let model = load_checkpoint(checkpoint)?;
            let query = crate::dataset::read_png(image_path)?;
            check_patches(
                &query,
                model.config.patch_size,
                &image_path.display().to_string(),
            )?;
            let bundle = bundle_for(loaded)?;
            let scorer = BundleScorer::new(&model, &bundle);
            let source = ScoreSource::Learned {
                scorer: &scorer,
                image: &query,
            };
            estimate_pose(&bundle, &source, &intrinsics, &est_cfg).map_err(estimate_error)?
        }
        Scoring::Oracle { pose } => {
            let truth = read_pose(pose)?;
            let bundle = bundle_for(loaded)?;
            let source = ScoreSource::Oracle {
                camera: Camera {
                    pose: truth,
                    intrinsics,
                },
                gt: config.gt(),
            };
            estimate_pose(&bundle, &source, &intrinsics, &est_cfg).map_err(estimate_error)?
        }
    };
    log_time("estimate", start);
    Ok(estimate.to_json())
}

/// Where `eval` gets its estimates from.
pub enum EvalSource {
    Learned {
        checkpoint: PathBuf,
    },
    Oracle,
    /// A view set holding previously estimated poses, matched by view id.
    Given {
        estimates: PathBuf,
    },
}

fn metrics_csv(report: &MetricsReport) -> String {
    let mut csv = String::from("id,angular_deg,translation,seconds\n");
    for v in &report.per_view {
        writeln!(
            csv,
            "{},{},{},{}",
            v.id, v.angular_deg, v.translation, v.seconds
        )
        .expect("writing to a string");
    }
    csv
}

/// Estimates every test view and writes `metrics.json`, `metrics.csv` and
/// `estimates.json` (a view set with the estimated poses).
pub fn cmd_eval(
    loaded: &LoadedConfig,
    source: &EvalSource,
    views_path: Option<&Path>,
    out: &Path,
) -> CliResult<MetricsReport> {
    let start = Instant::now();
    let views_path = views_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| loaded.views_path());
    let views = LoadedViews::load(&views_path)?;
    let mut tests: Vec<&ViewEntry> = views.split(Split::Test).collect();
    tests.sort_by(|a, b| a.id.cmp(&b.id));
    if tests.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no test views",
            views_path.display()
        )));
    }
    let truths: Vec<Pose> = tests
        .iter()
        .map(|v| {
            v.pose().ok_or_else(|| {
                CliError::Data(format!("test view {} has no ground-truth pose", v.id))
            })
        })
        .collect::<CliResult<_>>()?;

    let config = &loaded.config;
    let est_cfg = EstimateConfig {
        n_top: config.hyper.n_top,
    };
    let mut estimates: Vec<(Pose, f64)> = Vec::with_capacity(tests.len());
    match source {
        EvalSource::Given { estimates: path } => {
            let given: ViewSet = read_json(path)?;
            for v in &tests {
                let entry = given
                    .views
                    .iter()
                    .find(|e| e.id == v.id)
                    .and_then(ViewEntry::pose)
                    .ok_or_else(|| {
                        CliError::Data(format!("{}: no estimate for view {}", path.display(), v.id))
                    })?;
                estimates.push((entry, 0.0));
            }
        }
        EvalSource::Oracle => {
            let bundle = bundle_for(loaded)?;
            for (v, truth) in tests.iter().zip(&truths) {
                let t = Instant::now();
                let src = ScoreSource::Oracle {
                    camera: Camera {
                        pose: *truth,
                        intrinsics: v.intrinsics,
                    },
                    gt: config.gt(),
                };
                let e = estimate_pose(&bundle, &src, &v.intrinsics, &est_cfg)
                    .map_err(estimate_error)?;
                estimates.push((e.pose, t.elapsed().as_secs_f64()));
            }
        }
        EvalSource::Learned { checkpoint } => {
            let model = load_checkpoint(checkpoint)?;
            let images = tests
                .iter()
                .map(|v| views.image(v))
                .collect::<CliResult<Vec<_>>>()?;
            for (v, img) in tests.iter().zip(&images) {
                check_patches(img, model.config.patch_size, &v.id)?;
            }
            let bundle = bundle_for(loaded)?;
            let scorer = BundleScorer::new(&model, &bundle);
            for (v, img) in tests.iter().zip(&images) {
                let t = Instant::now();
                let src = ScoreSource::Learned {
                    scorer: &scorer,
                    image: img,
                };
                let e = estimate_pose(&bundle, &src, &v.intrinsics, &est_cfg)
                    .map_err(estimate_error)?;
                estimates.push((e.pose, t.elapsed().as_secs_f64()));
            }
        }
    }

    let per_view = tests
        .iter()
        .zip(&truths)
        .zip(&estimates)
        .map(|((v, truth), (est, secs))| ViewError::new(v.id.clone(), est, truth, *secs))
        .collect();
    let report = MetricsReport::from_views(per_view);

    let estimated = ViewSet {
        views: tests
            .iter()
            .zip(&estimates)
            .map(|(v, (est, _))| ViewEntry {
                pose: Some(est.to_rows()),
                image: views.base.join(&v.image),
                ..(*v).clone()
            })
            .collect(),
    };
    write_json(&out.join("estimates.json"), &estimated)?;
    write_json(&out.join("metrics.json"), &report)?;
    write_file(&out.join("metrics.csv"), metrics_csv(&report).as_bytes())?;
    eprintln!(
        "MAE {:.4} deg, MTE {:.6} units over {} views",
        report.mae,
        report.mte,
        report.per_view.len()
    );
    log_time("eval", start);
    Ok(report)
}

/// Writes a pose estimate document to a file.
pub fn write_estimate(path: &Path, json: &str) -> CliResult<()> {
    let mut text = json.to_owned();
    text.push('\n');
    write_file(path, text.as_bytes())
}
