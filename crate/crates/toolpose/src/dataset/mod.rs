//! Dataset I/O: keypoint label files, PPM/PGM rasters, object/marker
//! masks, mask-driven augmentation, and random pruning.
//!
//! Per-sample naming convention: `<stem>.ppm` (image),
//! `<stem>.object.pgm`, `<stem>.marker.pgm` (masks), `<stem>.txt` (labels).

mod augment;
mod labels;
mod prune;
mod raster;

pub use augment::augment_sample;
pub use labels::{format_labels, parse_labels, read_labels, write_labels, LabelRecord};
pub use prune::{prune_dataset, PRUNE_FRACTION_PRESETS};
pub use raster::{Mask, MaskPair, Raster};

use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("raster: {0}")]
    Raster(String),
    #[error("mask: {0}")]
    Mask(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

pub(crate) fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn image_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.ppm"))
}

pub fn object_mask_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.object.pgm"))
}

pub fn marker_mask_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.marker.pgm"))
}

pub fn label_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.txt"))
}
