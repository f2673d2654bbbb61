//! Back-projection error: re-project each reconstructed 3D point into the
//! views that observed it and measure the pixel distance to the original
//! detection.

use super::MetricsError;
use crate::camera::Rig;
use crate::reconstruct::{Observation2D, ToolClass};
use nalgebra::Vector3;
use std::fmt::Write as _;

/// How per-pair distances are pooled. The printed proportional variants of
/// the reference results only reconcile with a mean Euclidean distance, so
/// that is the default; the squared pooling exists behind this switch for
/// completeness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BpeNorm {
    #[default]
    MeanDistance,
    MeanSquaredDistance,
}

/// A reconstructed 3D point together with the 2D observations used to
/// reconstruct it.
#[derive(Debug, Clone, PartialEq)]
pub struct BpePoint {
    pub class: ToolClass,
    pub position: Vector3<f64>,
    pub observations: Vec<Observation2D>,
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassAccumulator {
    sum_distance: f64,
    sum_squared: f64,
    n: usize,
}

/// Streaming accumulator over (point, view) pairs; one accumulator per
/// class, scaled three ways at report time.
#[derive(Debug, Clone, Default)]
pub struct BpeAccumulator {
    bean: ClassAccumulator,
    grasper: ClassAccumulator,
    skipped_pairs: usize,
}

/// Per-class slice of a [`BpeReport`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpeClassValues {
    /// Mean back-projection distance, pixels.
    pub bpe_pd: f64,
    /// `bpe_pd / image width`, as a fraction.
    pub bpe_ppw: f64,
    /// `bpe_pd / image height`, as a fraction.
    pub bpe_pph: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpeReport {
    pub bean: BpeClassValues,
    pub grasper: BpeClassValues,
    /// Pooled over every accumulated (point, view) pair of both classes.
    pub aggregate: BpeClassValues,
    /// Pairs whose point did not project in front of the camera.
    pub skipped_pairs: usize,
    pub width: u32,
    pub height: u32,
}

impl BpeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one back-projected pair with the given pixel distance.
    pub fn add_pair(&mut self, class: ToolClass, distance_px: f64) {
        let acc = match class {
            ToolClass::Bean => &mut self.bean,
            ToolClass::Grasper => &mut self.grasper,
        };
        acc.sum_distance += distance_px;
        acc.sum_squared += distance_px * distance_px;
        acc.n += 1;
    }

    pub fn add_skipped(&mut self) {
        self.skipped_pairs += 1;
    }

    pub fn merge(&mut self, other: &BpeAccumulator) {
        for (a, b) in [
            (&mut self.bean, &other.bean),
            (&mut self.grasper, &other.grasper),
        ] {
            a.sum_distance += b.sum_distance;
            a.sum_squared += b.sum_squared;
            a.n += b.n;
        }
        self.skipped_pairs += other.skipped_pairs;
    }

    pub fn report(&self, width: u32, height: u32, norm: BpeNorm) -> BpeReport {
        let values = |acc: &ClassAccumulator| {
            let bpe_pd = if acc.n == 0 {
                0.0
            } else {
                match norm {
                    BpeNorm::MeanDistance => acc.sum_distance / acc.n as f64,
                    BpeNorm::MeanSquaredDistance => acc.sum_squared / acc.n as f64,
                }
            };
            BpeClassValues {
                bpe_pd,
                bpe_ppw: bpe_pd / width as f64,
                bpe_pph: bpe_pd / height as f64,
                n_points: acc.n,
            }
        };
        let combined = ClassAccumulator {
            sum_distance: self.bean.sum_distance + self.grasper.sum_distance,
            sum_squared: self.bean.sum_squared + self.grasper.sum_squared,
            n: self.bean.n + self.grasper.n,
        };
        BpeReport {
            bean: values(&self.bean),
            grasper: values(&self.grasper),
            aggregate: values(&combined),
            skipped_pairs: self.skipped_pairs,
            width,
            height,
        }
    }
}

/// Back-project every point into the views that observed it and pool the
/// pixel distances per class. Pairs behind a camera are skipped and
/// counted. Width and height for the proportional variants come from the
/// rig's first camera.
pub fn back_projection_error(
    points: &[BpePoint],
    rig: &Rig,
    norm: BpeNorm,
) -> Result<BpeReport, MetricsError> {
    let mut acc = BpeAccumulator::new();
    for point in points {
        if point.observations.is_empty() {
            return Err(MetricsError::InvalidInput(
                "every 3D point needs at least one corresponding 2D detection".into(),
            ));
        }
        for obs in &point.observations {
            let cam = rig
                .camera(obs.view_id)
                .ok_or(MetricsError::UnknownView(obs.view_id))?;
            match cam.project_point(&point.position) {
                Ok(px) => acc.add_pair(point.class, (px - obs.pixel).norm()),
                Err(_) => acc.add_skipped(),
            }
        }
    }
    let first = &rig.cameras()[0];
    Ok(acc.report(first.intrinsics().width, first.intrinsics().height, norm))
}

impl BpeReport {
    /// Flat `class metric value` table, fixed 6-decimal formatting.
    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        for (name, v) in [
            ("bean", &self.bean),
            ("grasper", &self.grasper),
            ("avg", &self.aggregate),
        ] {
            writeln!(out, "{name} BPE_PD {:.6}", v.bpe_pd).unwrap();
            writeln!(out, "{name} BPE_PPw {:.6}%", v.bpe_ppw * 100.0).unwrap();
            writeln!(out, "{name} BPE_PPh {:.6}%", v.bpe_pph * 100.0).unwrap();
            writeln!(out, "{name} n {}", v.n_points).unwrap();
        }
        writeln!(out, "skipped_pairs {}", self.skipped_pairs).unwrap();
        out
    }
}
