//! Cross-view grouping and triangulation of bean detections.
//!
//! Beans are indistinguishable single-keypoint instances, so multi-instance
//! frames need correspondence before triangulation. Groups are grown
//! greedily from two-view seeds and accepted only when every member pixel
//! lies within `tau_epi` of the back-projection of the group's triangulated
//! point; each 2D bean is used at most once.

use super::triangulate::triangulate_point;
use super::{Observation2D, ReconstructError, ToolClass, ToolDetection2D};
use crate::camera::Rig;
use nalgebra::Vector3;

/// Default epipolar-consistency gate in pixels.
pub const DEFAULT_TAU_EPI: f64 = 4.0;

/// One recovered bean.
#[derive(Debug, Clone, PartialEq)]
pub struct BeanPoint {
    pub position: Vector3<f64>,
    /// RMS back-projection distance over member views, pixels.
    pub residual_px: f64,
    pub observations: Vec<Observation2D>,
    /// More than one unused candidate was consistent during grouping.
    pub ambiguous: bool,
}

/// A 2D bean detection no accepted group claimed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeanLeftover {
    pub view_id: u32,
    /// Index within that view's bean detections, in input order.
    pub index: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BeanReconstruction {
    pub points: Vec<BeanPoint>,
    pub leftovers: Vec<BeanLeftover>,
}

/// Distance from an observation to the back-projection of `point`, or
/// `None` when the point does not project in front of that camera.
fn gate_distance(rig: &Rig, obs: &Observation2D, point: &Vector3<f64>) -> Option<f64> {
    let cam = rig.camera(obs.view_id)?;
    let px = cam.project_point(point).ok()?;
    Some((px - obs.pixel).norm())
}

struct Grouper<'a> {
    rig: &'a Rig,
    tau_epi: f64,
    /// Per view (rig order): bean observations in input order.
    obs: Vec<Vec<Observation2D>>,
    used: Vec<Vec<bool>>,
}

impl<'a> Grouper<'a> {
    fn members_obs(&self, members: &[(usize, usize)]) -> Vec<Observation2D> {
        members.iter().map(|&(v, i)| self.obs[v][i]).collect()
    }

    /// Triangulate the members and check the gate for every one of them.
    fn consistent(&self, members: &[(usize, usize)]) -> Option<(Vector3<f64>, f64)> {
        let obs = self.members_obs(members);
        let (point, residual) = triangulate_point(&obs, self.rig).ok()?;
        for o in &obs {
            if gate_distance(self.rig, o, &point)? > self.tau_epi {
                return None;
            }
        }
        Some((point, residual))
    }

    /// Grow a group seeded at (view `v0`, bean `i0`). Returns the accepted
    /// members, triangulation, and an ambiguity flag.
    fn grow(&self, v0: usize, i0: usize) -> Option<(Vec<(usize, usize)>, Vector3<f64>, f64, bool)> {
        // Seed: in the first view (rig order) holding any unused
        // consistent partner, take the partner with the lowest two-view
        // residual.
        let mut seed = None;
        for v1 in (0..self.obs.len()).filter(|&v| v != v0) {
            let mut best: Option<(usize, f64)> = None;
            for i1 in 0..self.obs[v1].len() {
                if self.used[v1][i1] {
                    continue;
                }
                if let Some((_, r)) = self.consistent(&[(v0, i0), (v1, i1)]) {
                    if best.map_or(true, |(_, br)| r < br) {
                        best = Some((i1, r));
                    }
                }
            }
            if let Some((i1, _)) = best {
                seed = Some((v1, i1));
                break;
            }
        }
        let (v1, i1) = seed?;
        let mut members = vec![(v0, i0), (v1, i1)];
        let (mut point, mut residual) = self.consistent(&members)?;

        // Extend view by view, nearest unused consistent candidate first.
        for v in (0..self.obs.len()).filter(|&v| v != v0 && v != v1) {
            let mut candidates: Vec<(usize, f64)> = (0..self.obs[v].len())
                .filter(|&i| !self.used[v][i])
                .filter_map(|i| {
                    let d = gate_distance(self.rig, &self.obs[v][i], &point)?;
                    (d <= self.tau_epi).then_some((i, d))
                })
                .collect();
            candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"));
            if let Some(&(i, _)) = candidates.first() {
                members.push((v, i));
                match self.consistent(&members) {
                    Some((p, r)) => {
                        point = p;
                        residual = r;
                    }
                    None => {
                        // Refined point fell outside some member's gate;
                        // drop the newcomer.
                        members.pop();
                    }
                }
            }
        }

        // The grouping is ambiguous when any view holds more than one
        // observation (used or not) inside the gate of the final point: a
        // different grouping would also have been consistent. Two-view
        // seed coincidences do not count; only the refined point decides.
        let mut ambiguous = false;
        for v in 0..self.obs.len() {
            let in_gate = (0..self.obs[v].len())
                .filter_map(|i| gate_distance(self.rig, &self.obs[v][i], &point))
                .filter(|&d| d <= self.tau_epi)
                .count();
            if in_gate > 1 {
                ambiguous = true;
                break;
            }
        }
        Some((members, point, residual, ambiguous))
    }
}

/// Group bean detections across views and triangulate each group.
/// Unmatched detections are reported as leftovers, never errors.
pub fn reconstruct_beans(
    dets: &[ToolDetection2D],
    rig: &Rig,
    tau_epi: f64,
) -> Result<BeanReconstruction, ReconstructError> {
    if !(tau_epi > 0.0) {
        return Err(ReconstructError::InvalidParameter(format!(
            "tau_epi {tau_epi} must be > 0"
        )));
    }
    let view_order: Vec<u32> = rig.ids().collect();
    let mut obs: Vec<Vec<Observation2D>> = vec![Vec::new(); view_order.len()];
    for det in dets {
        if det.class != ToolClass::Bean {
            return Err(ReconstructError::InvalidDetection(format!(
                "expected bean detections, got {}",
                det.class.as_str()
            )));
        }
        let slot = view_order
            .iter()
            .position(|&id| id == det.view_id)
            .ok_or(ReconstructError::UnknownView(det.view_id))?;
        if let Some(o) = det.observation(0) {
            obs[slot].push(o);
        }
    }

    let used = obs.iter().map(|v| vec![false; v.len()]).collect();
    let mut grouper = Grouper {
        rig,
        tau_epi,
        obs,
        used,
    };

    let mut points = Vec::new();
    for v0 in 0..grouper.obs.len() {
        for i0 in 0..grouper.obs[v0].len() {
            if grouper.used[v0][i0] {
                continue;
            }
            if let Some((members, position, residual_px, ambiguous)) = grouper.grow(v0, i0) {
                for &(v, i) in &members {
                    grouper.used[v][i] = true;
                }
                points.push(BeanPoint {
                    position,
                    residual_px,
                    observations: grouper.members_obs(&members),
                    ambiguous,
                });
            }
        }
    }

    let mut leftovers = Vec::new();
    for (v, flags) in grouper.used.iter().enumerate() {
        for (i, &used) in flags.iter().enumerate() {
            if !used {
                leftovers.push(BeanLeftover {
                    view_id: view_order[v],
                    index: i,
                });
            }
        }
    }
    Ok(BeanReconstruction { points, leftovers })
}
