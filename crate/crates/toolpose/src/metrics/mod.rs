//! Quantitative evaluation: back-projection errors, IoU, OKS, precision,
//! recall, mAP@50 and mAP@50:95.

mod bpe;
mod detection;

pub use bpe::{back_projection_error, BpeAccumulator, BpeNorm, BpePoint, BpeClassValues, BpeReport};
pub use detection::{
    iou, mean_average_precision, match_and_score, oks, EvalReport, EvalTask, GtInstance,
    MatchMode, MatchOutcome, OksConfig, OksParams, PredInstance, MAP_THRESHOLDS,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("mismatched keypoint counts: pred {pred}, gt {gt}")]
    KeypointMismatch { pred: usize, gt: usize },
    #[error("OKS undefined: no visible ground-truth keypoints")]
    UndefinedOks,
    #[error("no ground-truth instances")]
    NoGroundTruth,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("view {0} not present in rig")]
    UnknownView(u32),
}
