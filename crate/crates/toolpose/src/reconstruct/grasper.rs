//! Full grasper pose assembly: wrist, tips, oriented arm axis, smoothing.

use super::axis::{orient_axis_sign, AxisSystem, RECOMMENDED_AXIS_VIEWS};
use super::tips::{match_tips_across_views, TipMatch};
use super::triangulate::triangulate_point;
use super::{
    ArmAxis, Observation2D, ReconstructError, ReconstructedPoint, ToolClass, ToolDetection2D,
    ToolPose3D, KP_ARM, KP_WRIST,
};
use crate::camera::Rig;
use nalgebra::Vector3;

/// Exponential moving average over consecutive poses of one tracked
/// instance. `alpha = 0` disables smoothing; `alpha = 1` holds the previous
/// pose.
#[derive(Debug, Clone)]
pub struct SmootherState {
    alpha: f64,
    previous: Option<ToolPose3D>,
}

impl SmootherState {
    pub fn new(alpha: f64) -> Result<Self, ReconstructError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ReconstructError::InvalidParameter(format!(
                "smoothing alpha {alpha} outside [0,1]"
            )));
        }
        Ok(Self {
            alpha,
            previous: None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn previous(&self) -> Option<&ToolPose3D> {
        self.previous.as_ref()
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Blend the current pose with the stored one and update the state.
    /// With `alpha = 0` the input is returned untouched; with `alpha = 1`
    /// the stored pose is returned unchanged.
    pub fn apply(&mut self, current: ToolPose3D) -> ToolPose3D {
        if self.alpha == 0.0 {
            self.previous = Some(current.clone());
            return current;
        }
        let Some(prev) = self.previous.clone() else {
            self.previous = Some(current.clone());
            return current;
        };
        if self.alpha == 1.0 {
            return prev;
        }
        let a = self.alpha;
        let blend_vec = |p: &Vector3<f64>, c: &Vector3<f64>| p * a + c * (1.0 - a);
        let blend_point = |p: Option<&ReconstructedPoint>, c: Option<ReconstructedPoint>| match (
            p, c,
        ) {
            (Some(p), Some(mut c)) => {
                c.position = blend_vec(&p.position, &c.position);
                Some(c)
            }
            (_, c) => c,
        };
        let wrist = blend_point(Some(&prev.wrist), Some(current.wrist)).expect("wrist present");
        let tip_a = blend_point(prev.tip_a.as_ref(), current.tip_a);
        let tip_b = blend_point(prev.tip_b.as_ref(), current.tip_b);
        let arm_axis = match (&prev.arm_axis, current.arm_axis) {
            (Some(p), Some(mut c)) => {
                let mixed = blend_vec(&p.direction, &c.direction);
                if mixed.norm() > 1e-12 {
                    c.direction = mixed.normalize();
                }
                Some(c)
            }
            (_, c) => c,
        };
        let smoothed = ToolPose3D {
            wrist,
            tip_a,
            tip_b,
            arm_axis,
            merged_tips: current.merged_tips,
            views_used: current.views_used,
        };
        self.previous = Some(smoothed.clone());
        smoothed
    }
}

fn triangulated_point(
    obs: Vec<Observation2D>,
    rig: &Rig,
) -> Result<ReconstructedPoint, ReconstructError> {
    let (position, residual_px) = triangulate_point(&obs, rig)?;
    Ok(ReconstructedPoint {
        position,
        residual_px,
        observations: obs,
    })
}

/// Reconstruct a grasper pose from one detection per view.
///
/// The wrist must be visible in at least two views; tips and axis degrade
/// gracefully to `None` when their own sub-problems are unsolvable.
/// Tip A/B order is canonicalized lexicographically by position so the
/// output is independent of view order.
pub fn reconstruct_grasper(
    dets: &[ToolDetection2D],
    rig: &Rig,
    smoother: Option<&mut SmootherState>,
) -> Result<ToolPose3D, ReconstructError> {
    for det in dets {
        if det.class != ToolClass::Grasper {
            return Err(ReconstructError::InvalidDetection(format!(
                "expected grasper detections, got {}",
                det.class.as_str()
            )));
        }
        if rig.camera(det.view_id).is_none() {
            return Err(ReconstructError::UnknownView(det.view_id));
        }
    }

    // Wrist: mandatory.
    let wrist_obs: Vec<Observation2D> =
        dets.iter().filter_map(|d| d.observation(KP_WRIST)).collect();
    if wrist_obs.len() < 2 {
        return Err(ReconstructError::InsufficientViews {
            needed: 2,
            got: wrist_obs.len(),
        });
    }
    let wrist = triangulated_point(wrist_obs, rig)?;

    // Tips: resolve cross-view correspondence, then triangulate each side.
    let det_refs: Vec<&ToolDetection2D> = dets.iter().collect();
    let (mut tip_a, mut tip_b, merged_tips) = match match_tips_across_views(&det_refs, rig)? {
        TipMatch::Labeled(labeling) => {
            let mut obs_a = Vec::new();
            let mut obs_b = Vec::new();
            for assign in &labeling.assignments {
                let det = dets
                    .iter()
                    .find(|d| d.view_id == assign.view_id)
                    .expect("assignment views come from input");
                if let Some(slot) = assign.tip_to_a {
                    obs_a.extend(det.observation(slot));
                }
                if let Some(slot) = assign.tip_to_b {
                    obs_b.extend(det.observation(slot));
                }
            }
            let a = (obs_a.len() >= 2)
                .then(|| triangulated_point(obs_a, rig).ok())
                .flatten();
            let b = (obs_b.len() >= 2)
                .then(|| triangulated_point(obs_b, rig).ok())
                .flatten();
            (a, b, false)
        }
        TipMatch::Merged => {
            let obs: Vec<Observation2D> = dets
                .iter()
                .flat_map(|d| {
                    [d.observation(super::KP_TIP_A), d.observation(super::KP_TIP_B)]
                        .into_iter()
                        .flatten()
                })
                .collect();
            let merged = (obs.len() >= 2)
                .then(|| triangulated_point(obs, rig).ok())
                .flatten();
            (merged.clone(), merged, true)
        }
    };
    if let (Some(a), Some(b)) = (&tip_a, &tip_b) {
        let key = |p: &ReconstructedPoint| (p.position.x, p.position.y, p.position.z);
        if key(b) < key(a) {
            std::mem::swap(&mut tip_a, &mut tip_b);
        }
    }

    // Arm axis from views where wrist and arm are both visible.
    let axis_pairs: Vec<(Observation2D, Observation2D)> = dets
        .iter()
        .filter_map(|d| Some((d.observation(KP_WRIST)?, d.observation(KP_ARM)?)))
        .collect();
    let arm_axis = AxisSystem::build(&axis_pairs, rig).ok().map(|system| {
        let u = system.solve();
        let oriented = orient_axis_sign(&u, &wrist.position, &axis_pairs, rig);
        ArmAxis {
            direction: oriented.direction,
            sign_fallback: oriented.fallback,
            below_recommended_views: system.len() < RECOMMENDED_AXIS_VIEWS,
        }
    });

    let mut views_used: Vec<u32> = wrist
        .observations
        .iter()
        .chain(tip_a.iter().flat_map(|p| p.observations.iter()))
        .chain(tip_b.iter().flat_map(|p| p.observations.iter()))
        .map(|o| o.view_id)
        .collect();
    views_used.sort_unstable();
    views_used.dedup();

    let pose = ToolPose3D {
        wrist,
        tip_a,
        tip_b,
        arm_axis,
        merged_tips,
        views_used,
    };
    Ok(match smoother {
        Some(state) => state.apply(pose),
        None => pose,
    })
}
