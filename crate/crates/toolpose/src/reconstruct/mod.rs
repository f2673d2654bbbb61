//! 3D tool pose reconstruction from per-view 2D detections.
//!
//! Point keypoints (wrist, fingertips, beans) are triangulated by stacking
//! one `H_i·M_i` block per view into a homogeneous system `G·X = 0` and
//! taking the right singular vector of the smallest singular value. The arm
//! direction comes from a second null-space problem: each view contributes
//! the normal of the plane spanned by its back-projected wrist and arm rays,
//! and the stacked normal matrix `N` satisfies `N·u = 0` for the true axis
//! `u` regardless of where along the arm each view's keypoint landed.

mod axis;
mod beans;
mod grasper;
mod tips;
mod triangulate;

pub use axis::{estimate_arm_axis, orient_axis_sign, AxisSystem, OrientedAxis};
pub use beans::{reconstruct_beans, BeanLeftover, BeanPoint, BeanReconstruction, DEFAULT_TAU_EPI};
pub use grasper::{reconstruct_grasper, SmootherState};
pub use tips::{match_tips_across_views, TipLabeling, TipMatch, ViewTipAssignment};
pub use triangulate::{triangulate_point, triangulate_point_weighted, TriangulationSystem};

use crate::camera::CameraError;
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

/// Keypoint slots of a grasper detection, in storage order.
pub const KP_TIP_A: usize = 0;
pub const KP_TIP_B: usize = 1;
pub const KP_WRIST: usize = 2;
pub const KP_ARM: usize = 3;
pub const GRASPER_KEYPOINTS: usize = 4;
pub const BEAN_KEYPOINTS: usize = 1;

#[derive(Debug, Error)]
pub enum ReconstructError {
    #[error("need at least {needed} usable views, got {got}")]
    InsufficientViews { needed: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("arm axis unobservable: wrist and arm rays are parallel in every view")]
    AxisUnobservable,
    #[error("view {0} not present in rig")]
    UnknownView(u32),
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// Object classes of the bean-drop task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ToolClass {
    Grasper,
    Bean,
}

impl ToolClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ToolClass::Grasper => "grasper",
            ToolClass::Bean => "bean",
        }
    }

    pub fn from_str(s: &str) -> Option<Self> {
        match s {
            "grasper" => Some(ToolClass::Grasper),
            "bean" => Some(ToolClass::Bean),
            _ => None,
        }
    }

    /// Number of keypoint slots a detection of this class carries.
    pub fn keypoint_count(&self) -> usize {
        match self {
            ToolClass::Grasper => GRASPER_KEYPOINTS,
            ToolClass::Bean => BEAN_KEYPOINTS,
        }
    }
}

/// Per-keypoint visibility: 0 = absent, 1 = labeled but invisible,
/// 2 = visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Absent,
    Hidden,
    Visible,
}

impl Visibility {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Visibility::Absent),
            1 => Some(Visibility::Hidden),
            2 => Some(Visibility::Visible),
            _ => None,
        }
    }

    pub fn as_u8(&self) -> u8 {
        match self {
            Visibility::Absent => 0,
            Visibility::Hidden => 1,
            Visibility::Visible => 2,
        }
    }
}

/// One 2D keypoint of a detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub pixel: Vector2<f64>,
    pub visibility: Visibility,
    pub confidence: f64,
}

/// Axis-aligned bounding box in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bbox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Bbox {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn is_valid(&self) -> bool {
        self.x_min < self.x_max && self.y_min < self.y_max
    }
}

/// A single 2D point observation of one keypoint in one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation2D {
    pub view_id: u32,
    pub pixel: Vector2<f64>,
    pub confidence: f64,
}

impl Observation2D {
    pub fn new(view_id: u32, pixel: Vector2<f64>, confidence: f64) -> Self {
        Self {
            view_id,
            pixel,
            confidence,
        }
    }

    pub fn validate(&self) -> Result<(), ReconstructError> {
        if !(self.pixel.x.is_finite() && self.pixel.y.is_finite()) {
            return Err(ReconstructError::InvalidDetection(format!(
                "non-finite pixel in view {}",
                self.view_id
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ReconstructError::InvalidDetection(format!(
                "confidence {} outside [0,1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

/// One detected tool instance in one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolDetection2D {
    pub view_id: u32,
    pub class: ToolClass,
    pub bbox: Bbox,
    /// `[tip_a, tip_b, wrist, arm]` for graspers, a single point for beans.
    pub keypoints: Vec<Keypoint>,
    pub score: f64,
}

impl ToolDetection2D {
    pub fn new(
        view_id: u32,
        class: ToolClass,
        bbox: Bbox,
        keypoints: Vec<Keypoint>,
        score: f64,
    ) -> Result<Self, ReconstructError> {
        if keypoints.len() != class.keypoint_count() {
            return Err(ReconstructError::InvalidDetection(format!(
                "{} expects {} keypoints, got {}",
                class.as_str(),
                class.keypoint_count(),
                keypoints.len()
            )));
        }
        if !bbox.is_valid() {
            return Err(ReconstructError::InvalidDetection(format!(
                "invalid bbox ({}, {}, {}, {})",
                bbox.x_min, bbox.y_min, bbox.x_max, bbox.y_max
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(ReconstructError::InvalidDetection(format!(
                "score {score} outside [0,1]"
            )));
        }
        for kp in &keypoints {
            if !(kp.pixel.x.is_finite() && kp.pixel.y.is_finite()) {
                return Err(ReconstructError::InvalidDetection(
                    "non-finite keypoint pixel".into(),
                ));
            }
            if !(0.0..=1.0).contains(&kp.confidence) {
                return Err(ReconstructError::InvalidDetection(format!(
                    "keypoint confidence {} outside [0,1]",
                    kp.confidence
                )));
            }
        }
        Ok(Self {
            view_id,
            class,
            bbox,
            keypoints,
            score,
        })
    }

    /// Observation of keypoint `index` when it is visible.
    pub fn observation(&self, index: usize) -> Option<Observation2D> {
        let kp = self.keypoints.get(index)?;
        (kp.visibility == Visibility::Visible)
            .then(|| Observation2D::new(self.view_id, kp.pixel, kp.confidence))
    }
}

/// A triangulated 3D point plus the 2D observations it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedPoint {
    pub position: Vector3<f64>,
    /// RMS back-projection distance over contributing views, pixels.
    pub residual_px: f64,
    pub observations: Vec<Observation2D>,
}

/// Oriented arm direction, unit length, pointing from the arm toward the
/// wrist.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmAxis {
    pub direction: Vector3<f64>,
    /// No view could disambiguate the sign; `+u` was kept.
    pub sign_fallback: bool,
    /// Fewer than four views contributed normal rows.
    pub below_recommended_views: bool,
}

/// Reconstructed 3D state of one grasper. Tips and axis are optional so a
/// partially occluded instance still yields the parts that were observable.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolPose3D {
    pub wrist: ReconstructedPoint,
    pub tip_a: Option<ReconstructedPoint>,
    pub tip_b: Option<ReconstructedPoint>,
    pub arm_axis: Option<ArmAxis>,
    /// No view saw both tips; tip_a and tip_b hold one merged point.
    pub merged_tips: bool,
    pub views_used: Vec<u32>,
}
