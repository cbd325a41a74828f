//! Command-line front end: synthetic scenes, sampling, training, pose
//! estimation and evaluation.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod scenes;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::{EvalSource, Overrides, Scoring};
use crate::error::{CliError, CliResult};
use crate::scenes::{GenOptions, SceneKind};

#[derive(Debug, Parser)]
#[command(
    name = "raypose",
    version,
    about = "Camera pose estimation against a radiance field"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Configuration file and the values that may override it.
#[derive(Debug, Args)]
pub struct Common {
    /// Scene configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Random seed for sampling and training.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of surface points.
    #[arg(long = "G")]
    pub points: Option<usize>,
    /// Rays per surface point (3n^2).
    #[arg(long = "V")]
    pub cells: Option<usize>,
    /// Rays kept for pose recovery.
    #[arg(long = "ntop")]
    pub n_top: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            points: self.points,
            cells: self.cells,
            n_top: self.n_top,
        }
    }

    fn load(&self) -> CliResult<config::LoadedConfig> {
        commands::load_config(&self.config, &self.overrides())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic dataset with known poses.
    GenScene {
        #[arg(long, value_enum, default_value = "shell")]
        kind: SceneKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_train: usize,
        #[arg(long, default_value_t = 50)]
        n_test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Square image side in pixels.
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Samples per camera ray.
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// Sample surface points; writes points.ply and points.json.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Cast and render the ray bundle; writes rays.ply.
    Cast {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Segment length; defaults to a tenth of the box diagonal.
        #[arg(long)]
        length: Option<f64>,
    },
    /// Train the ray scorer; writes scorer.ckpt and loss.csv.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Estimate the pose of one image and print it as JSON.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(
            long,
            required_unless_present = "oracle_scores",
            conflicts_with = "oracle_scores"
        )]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        /// Score rays geometrically against the camera in this pose file.
        #[arg(long)]
        oracle_scores: Option<PathBuf>,
        /// Also write the estimate to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate every test view; writes metrics.json, metrics.csv and
    /// estimates.json.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, required_unless_present_any = ["oracle", "estimates"])]
        checkpoint: Option<PathBuf>,
        /// Use geometric scores from the ground-truth poses.
        #[arg(long, conflicts_with_all = ["checkpoint", "estimates"])]
        oracle: bool,
        /// Evaluate previously estimated poses instead of estimating.
        #[arg(long, conflicts_with = "checkpoint")]
        estimates: Option<PathBuf>,
        /// View set to evaluate instead of the configured one.
        #[arg(long)]
        views: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenScene {
            kind,
            out,
            n_train,
            n_test,
            seed,
            size,
            samples,
        } => {
            let opts = GenOptions {
                kind,
                n_train,
                n_test,
                seed,
                size,
                samples,
                ..GenOptions::default()
            };
            scenes::gen_scene(&out, &opts).map(|_| ())
        }
        Command::Sample { common, out } => commands::cmd_sample(&common.load()?, &out),
        Command::Cast {
            common,
            out,
            length,
        } => {
            if length.is_some_and(|l| !(l.is_finite() && l > 0.0)) {
                return Err(CliError::Usage("--length must be positive".into()));
            }
            commands::cmd_cast(&common.load()?, &out, length)
        }
        Command::Train {
            common,
            out,
            iterations,
        } => commands::cmd_train(&common.load()?, &out, iterations),
        Command::Estimate {
            common,
            checkpoint,
            image,
            oracle_scores,
            out,
        } => {
            let scoring = match (checkpoint, oracle_scores) {
                (_, Some(pose)) => Scoring::Oracle { pose },
                (Some(checkpoint), None) => Scoring::Learned { checkpoint },
                (None, None) => {
                    return Err(CliError::Usage(
                        "--checkpoint or --oracle-scores is required".into(),
                    ))
                }
            };
            let json = commands::cmd_estimate(&common.load()?, &scoring, image.as_deref())?;
            if let Some(path) = out {
                commands::write_estimate(&path, &json)?;
            }
            println!("{json}");
            Ok(())
        }
        Command::Eval {
            common,
            checkpoint,
            oracle,
            estimates,
            views,
            out,
        } => {
            let source = match (checkpoint, oracle, estimates) {
                (_, _, Some(estimates)) => EvalSource::Given { estimates },
                (_, true, None) => EvalSource::Oracle,
                (Some(checkpoint), false, None) => EvalSource::Learned { checkpoint },
                (None, false, None) => {
                    return Err(CliError::Usage(
                        "--checkpoint, --oracle or --estimates is required".into(),
                    ))
                }
            };
            commands::cmd_eval(&common.load()?, &source, views.as_deref(), &out).map(|_| ())
        }
    }
}
