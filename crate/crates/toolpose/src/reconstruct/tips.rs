//! Cross-view correspondence of the two fingertips.
//!
//! The two fingers are interchangeable in any single image, so every view's
//! (tip, tip) pair must be assigned consistently to the 3D points A and B
//! before triangulation. The labeling is chosen by exhaustive search over
//! the `2^(I−1)` assignments relative to the first view, minimizing the sum
//! of the two triangulation residuals. Beyond ten views the search keeps
//! the exhaustive optimum of the first ten and assigns the remainder
//! greedily.

use super::triangulate::{hm_block, raw_reproject, solve_gram};
use super::{Observation2D, ReconstructError, ToolClass, ToolDetection2D, KP_TIP_A, KP_TIP_B};
use crate::camera::Rig;
use nalgebra::Matrix4;

/// Views handled by exhaustive enumeration; 2^(MAX−1) candidate labelings.
const MAX_EXHAUSTIVE_VIEWS: usize = 10;

/// Per-view assignment of detected tip keypoints to the 3D tips A and B.
/// Indices refer to the detection's keypoint slots (0 or 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewTipAssignment {
    pub view_id: u32,
    pub tip_to_a: Option<usize>,
    pub tip_to_b: Option<usize>,
}

/// A resolved labeling with the residuals of its two triangulated tips.
#[derive(Debug, Clone, PartialEq)]
pub struct TipLabeling {
    pub assignments: Vec<ViewTipAssignment>,
    /// RMS back-projection residual of tip A, if it had ≥ 2 observations.
    pub residual_a: Option<f64>,
    pub residual_b: Option<f64>,
}

/// Outcome of the correspondence search.
#[derive(Debug, Clone, PartialEq)]
pub enum TipMatch {
    Labeled(TipLabeling),
    /// No view saw both tips, so cross-view correspondence is undefined;
    /// all tip observations describe one merged point.
    Merged,
}

struct ViewTips {
    view_id: u32,
    /// Visible tip observations: (keypoint slot, observation, Gram block).
    tips: Vec<(usize, Observation2D, Matrix4<f64>)>,
}

/// Score one side of a candidate labeling: Gram-accumulated triangulation
/// plus RMS re-projection. `None` when the side has < 2 observations.
fn side_residual(
    members: &[(usize, usize)], // (view index, tip index)
    views: &[ViewTips],
    rig: &Rig,
) -> Option<f64> {
    if members.len() < 2 {
        return None;
    }
    let mut gram = Matrix4::zeros();
    for &(v, t) in members {
        gram += views[v].tips[t].2;
    }
    let Some(point) = solve_gram(&gram) else {
        return Some(f64::INFINITY);
    };
    let mut acc = 0.0;
    for &(v, t) in members {
        let obs = &views[v].tips[t].1;
        let cam = rig.camera(obs.view_id).expect("validated view");
        match raw_reproject(cam, &point) {
            Some(px) => acc += (px - obs.pixel).norm_squared(),
            None => return Some(f64::INFINITY),
        }
    }
    Some((acc / members.len() as f64).sqrt())
}

/// Cost of a labeling: fewer untriangulable sides first, then the residual
/// sum of the triangulable ones.
fn labeling_cost(
    choice: &[bool],
    views: &[ViewTips],
    rig: &Rig,
) -> ((usize, f64), Option<f64>, Option<f64>) {
    let mut side_a = Vec::new();
    let mut side_b = Vec::new();
    for (v, view) in views.iter().enumerate() {
        let swapped = choice[v];
        match view.tips.len() {
            2 => {
                if swapped {
                    side_a.push((v, 1));
                    side_b.push((v, 0));
                } else {
                    side_a.push((v, 0));
                    side_b.push((v, 1));
                }
            }
            1 => {
                if swapped {
                    side_b.push((v, 0));
                } else {
                    side_a.push((v, 0));
                }
            }
            _ => unreachable!("views without tips are filtered out"),
        }
    }
    let ra = side_residual(&side_a, views, rig);
    let rb = side_residual(&side_b, views, rig);
    let invalid = usize::from(ra.is_none()) + usize::from(rb.is_none());
    let sum = ra.unwrap_or(0.0) + rb.unwrap_or(0.0);
    ((invalid, sum), ra, rb)
}

fn better(a: &(usize, f64), b: &(usize, f64)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Choose, per view, which detected tip keypoint is tip "A" so that the sum
/// of the two triangulation residuals is minimal. Ties resolve to the
/// identity labeling (no view swapped).
pub fn match_tips_across_views(
    dets: &[&ToolDetection2D],
    rig: &Rig,
) -> Result<TipMatch, ReconstructError> {
    let mut views = Vec::new();
    let mut any_double = false;
    for det in dets {
        if det.class != ToolClass::Grasper {
            return Err(ReconstructError::InvalidDetection(format!(
                "tip matching expects grasper detections, got {}",
                det.class.as_str()
            )));
        }
        let cam = rig
            .camera(det.view_id)
            .ok_or(ReconstructError::UnknownView(det.view_id))?;
        let mut tips = Vec::new();
        for slot in [KP_TIP_A, KP_TIP_B] {
            if let Some(obs) = det.observation(slot) {
                let block = hm_block(cam, &obs.pixel);
                tips.push((slot, obs, block.transpose() * block));
            }
        }
        if tips.len() == 2 {
            any_double = true;
        }
        if !tips.is_empty() {
            views.push(ViewTips {
                view_id: det.view_id,
                tips,
            });
        }
    }
    if !any_double {
        return Ok(TipMatch::Merged);
    }

    let n = views.len();
    let exhaustive = n.min(MAX_EXHAUSTIVE_VIEWS);
    let mut best_choice = vec![false; n];
    let mut best_cost = labeling_cost(&best_choice[..exhaustive], &views[..exhaustive], rig).0;
    // First view fixed; identity (all-unswapped) evaluated first so exact
    // ties keep it.
    for bits in 1u64..(1u64 << (exhaustive - 1)) {
        let mut choice = vec![false; exhaustive];
        for (v, c) in choice.iter_mut().enumerate().skip(1) {
            *c = (bits >> (v - 1)) & 1 == 1;
        }
        let cost = labeling_cost(&choice, &views[..exhaustive], rig).0;
        if better(&cost, &best_cost) {
            best_cost = cost;
            best_choice[..exhaustive].copy_from_slice(&choice);
        }
    }
    // Greedy tail for unusually wide rigs.
    for v in exhaustive..n {
        let keep = labeling_cost(&best_choice[..=v], &views[..=v], rig).0;
        best_choice[v] = true;
        let swap = labeling_cost(&best_choice[..=v], &views[..=v], rig).0;
        if !better(&swap, &keep) {
            best_choice[v] = false;
        }
    }

    let (_, residual_a, residual_b) = labeling_cost(&best_choice, &views, rig);
    let assignments = views
        .iter()
        .zip(&best_choice)
        .map(|(view, &swapped)| match view.tips.len() {
            2 => ViewTipAssignment {
                view_id: view.view_id,
                tip_to_a: Some(view.tips[if swapped { 1 } else { 0 }].0),
                tip_to_b: Some(view.tips[if swapped { 0 } else { 1 }].0),
            },
            _ => ViewTipAssignment {
                view_id: view.view_id,
                tip_to_a: (!swapped).then_some(view.tips[0].0),
                tip_to_b: swapped.then_some(view.tips[0].0),
            },
        })
        .collect();
    Ok(TipMatch::Labeled(TipLabeling {
        assignments,
        residual_a,
        residual_b,
    }))
}
