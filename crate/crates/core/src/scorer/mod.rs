//! Ray scoring: geometric ground truth, learned embeddings, attention and
//! training.

use thiserror::Error;

use crate::estimate::BundleError;

pub mod attention;
pub mod checkpoint;
pub mod gt;
pub mod network;
pub mod train;

pub use attention::{attention_scores, AttentionScores};
pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gt::{gt_scores, GtScoreConfig};
pub use network::{ScorerConfig, ScorerModel};
pub use train::{train_scorer, Adam, TrainConfig, TrainOutcome, TrainView};

#[derive(Debug, Error, PartialEq)]
pub enum ScorerError {
    #[error("ray bundle is empty")]
    EmptyBundle,
    #[error("ground-truth closeness sums to {0}; the camera is too far from every ray")]
    DegenerateScores(f64),
    #[error("ray features have {rays} channels but image features have {image}")]
    ChannelMismatch { rays: usize, image: usize },
    #[error("image of {width}x{height} pixels is not divisible into {patch}x{patch} patches")]
    ImageSize {
        width: usize,
        height: usize,
        patch: usize,
    },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training views")]
    NoViews,
    #[error("loss became non-finite at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, losses: Vec<f64> },
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}
