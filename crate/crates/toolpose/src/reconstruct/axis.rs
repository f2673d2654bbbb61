//! Arm-axis direction from stacked plane normals.
//!
//! Each view's optical center together with the wrist and any point on the
//! arm spans a plane containing the whole arm axis. The wrist and arm
//! keypoints generally correspond to *different* 3D points per view, but
//! their back-projected ray directions span the identical plane through the
//! optical center, so the plane normal is computable from 2D alone. The
//! true axis lies in every such plane, hence `N·u = 0` for the stacked
//! normal matrix `N`.

use super::{Observation2D, ReconstructError};
use crate::camera::{Ray, Rig};
use nalgebra::{Matrix3, Vector3};

/// Rows whose cross product is this small are parallel wrist/arm rays and
/// carry no orientation information.
const DEGENERATE_NORMAL_EPS: f64 = 1e-12;

/// Views recommended for a well-conditioned axis estimate; fewer still
/// solves but is flagged.
pub const RECOMMENDED_AXIS_VIEWS: usize = 4;

/// The stacked normal system `N·u = 0`: one unit plane normal per usable
/// view, plus the back-projected wrist/arm rays it was built from.
#[derive(Debug, Clone)]
pub struct AxisSystem {
    normals: Vec<Vector3<f64>>,
    weights: Vec<f64>,
    rays: Vec<(Ray, Ray)>,
    view_ids: Vec<u32>,
    rejected_views: Vec<u32>,
}

impl AxisSystem {
    /// Build from per-view (wrist, arm) observation pairs. Pairs whose rays
    /// are parallel (e.g. coincident pixels) are rejected row-wise.
    pub fn build(
        pairs: &[(Observation2D, Observation2D)],
        rig: &Rig,
    ) -> Result<Self, ReconstructError> {
        Self::build_impl(pairs, rig, false)
    }

    /// Like [`AxisSystem::build`] but with each row scaled by the pair's
    /// smaller observation confidence.
    pub fn build_weighted(
        pairs: &[(Observation2D, Observation2D)],
        rig: &Rig,
    ) -> Result<Self, ReconstructError> {
        Self::build_impl(pairs, rig, true)
    }

    fn build_impl(
        pairs: &[(Observation2D, Observation2D)],
        rig: &Rig,
        weighted: bool,
    ) -> Result<Self, ReconstructError> {
        let mut normals = Vec::with_capacity(pairs.len());
        let mut weights = Vec::with_capacity(pairs.len());
        let mut rays = Vec::with_capacity(pairs.len());
        let mut view_ids = Vec::with_capacity(pairs.len());
        let mut rejected_views = Vec::new();
        for (wrist, arm) in pairs {
            wrist.validate()?;
            arm.validate()?;
            if wrist.view_id != arm.view_id {
                return Err(ReconstructError::InvalidDetection(format!(
                    "wrist/arm pair spans views {} and {}",
                    wrist.view_id, arm.view_id
                )));
            }
            let cam = rig
                .camera(wrist.view_id)
                .ok_or(ReconstructError::UnknownView(wrist.view_id))?;
            let wrist_ray = cam.back_project_ray(&wrist.pixel);
            let arm_ray = cam.back_project_ray(&arm.pixel);
            let normal = wrist_ray.direction.cross(&arm_ray.direction);
            let norm = normal.norm();
            if norm <= DEGENERATE_NORMAL_EPS {
                rejected_views.push(wrist.view_id);
                continue;
            }
            normals.push(normal / norm);
            weights.push(if weighted {
                wrist.confidence.min(arm.confidence)
            } else {
                1.0
            });
            rays.push((wrist_ray, arm_ray));
            view_ids.push(wrist.view_id);
        }
        if normals.is_empty() && !pairs.is_empty() {
            return Err(ReconstructError::AxisUnobservable);
        }
        if normals.len() < 2 {
            return Err(ReconstructError::InsufficientViews {
                needed: 2,
                got: normals.len(),
            });
        }
        Ok(Self {
            normals,
            weights,
            rays,
            view_ids,
            rejected_views,
        })
    }

    /// Unit rows of `N`.
    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    /// Back-projected (wrist, arm) rays per contributing view.
    pub fn rays(&self) -> &[(Ray, Ray)] {
        &self.rays
    }

    pub fn view_ids(&self) -> &[u32] {
        &self.view_ids
    }

    pub fn rejected_views(&self) -> &[u32] {
        &self.rejected_views
    }

    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Global minimizer of `‖N·u‖` over unit `u`: the right singular vector
    /// of `N` for the smallest singular value, computed as the minimum
    /// eigenvector of `NᵀN` (identical minimizer, and well defined even for
    /// the two-row system where a thin SVD carries no null vector).
    ///
    /// The sign is canonical but arbitrary; see [`orient_axis_sign`].
    pub fn solve(&self) -> Vector3<f64> {
        let mut gram = Matrix3::zeros();
        for (n, w) in self.normals.iter().zip(&self.weights) {
            gram += n * n.transpose() * (w * w);
        }
        let eig = gram.symmetric_eigen();
        let mut min_idx = 0;
        for i in 1..3 {
            if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
                min_idx = i;
            }
        }
        let mut u = eig.eigenvectors.column(min_idx).normalize();
        // The QR sweep stops around 1e-9; ridge-shifted inverse iteration
        // sharpens the null vector to machine precision. Kept only when it
        // actually lowers the residual.
        let ridge = gram.trace() * 1e-12 + f64::MIN_POSITIVE;
        let lu = (gram + Matrix3::identity() * ridge).lu();
        let residual = |v: &Vector3<f64>| (gram * v).norm();
        for _ in 0..2 {
            let Some(refined) = lu.solve(&u) else {
                break;
            };
            let norm = refined.norm();
            if !(norm.is_finite() && norm > 0.0) {
                break;
            }
            let refined = refined / norm;
            if residual(&refined) < residual(&u) {
                u = refined;
            } else {
                break;
            }
        }
        // Deterministic sign: largest-magnitude component positive.
        let mut dominant = 0;
        for i in 1..3 {
            if u[i].abs() > u[dominant].abs() {
                dominant = i;
            }
        }
        if u[dominant] < 0.0 {
            -u
        } else {
            u
        }
    }
}

/// Estimate the (unsigned) arm direction from ≥ 2 views' wrist/arm
/// observation pairs.
pub fn estimate_arm_axis(
    pairs: &[(Observation2D, Observation2D)],
    rig: &Rig,
) -> Result<Vector3<f64>, ReconstructError> {
    Ok(AxisSystem::build(pairs, rig)?.solve())
}

/// A sign-disambiguated axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedAxis {
    /// Unit direction from the arm toward the wrist.
    pub direction: Vector3<f64>,
    /// No view was usable for the sign vote; `+u` was kept.
    pub fallback: bool,
}

/// Resolve the sign ambiguity of the null-space axis: choose `+u` or `−u`
/// so that the projected 3D direction at the wrist agrees with the observed
/// arm→wrist pixel direction in a majority of views. Ties and unusable
/// inputs fall back to `+u`.
pub fn orient_axis_sign(
    u: &Vector3<f64>,
    wrist3d: &Vector3<f64>,
    pairs: &[(Observation2D, Observation2D)],
    rig: &Rig,
) -> OrientedAxis {
    let mut plus = 0usize;
    let mut minus = 0usize;
    for (wrist, arm) in pairs {
        let Some(cam) = rig.camera(wrist.view_id) else {
            continue;
        };
        let observed = wrist.pixel - arm.pixel;
        if observed.norm() == 0.0 {
            continue;
        }
        let Some(projected) = cam.image_direction(wrist3d, u) else {
            continue;
        };
        let dot = projected.dot(&observed);
        if dot > 0.0 {
            plus += 1;
        } else if dot < 0.0 {
            minus += 1;
        }
    }
    if plus + minus == 0 {
        return OrientedAxis {
            direction: *u,
            fallback: true,
        };
    }
    OrientedAxis {
        direction: if minus > plus { -u } else { *u },
        fallback: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Camera, Extrinsics, Intrinsics, Rig};
    use approx::assert_relative_eq;
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cameras on a circle of the given radius in the z = 0 plane, all
    /// looking at the origin.
    fn ring_rig(n: usize, radius: f64) -> Rig {
        let intr = Intrinsics {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
        };
        let cameras = (0..n)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.3;
                let center = Vector3::new(radius * angle.cos(), radius * angle.sin(), 0.0);
                let forward = (-center).normalize();
                let up = Vector3::new(0.0, 0.0, 1.0);
                let x = up.cross(&forward).normalize();
                let y = forward.cross(&x);
                let rotation =
                    nalgebra::Matrix3::from_rows(&[x.transpose(), y.transpose(), forward.transpose()]);
                let translation = -rotation * center;
                Camera::new(
                    i as u32,
                    intr,
                    Extrinsics {
                        rotation,
                        translation,
                    },
                )
                .unwrap()
            })
            .collect();
        Rig::new(cameras).unwrap()
    }

    /// Project wrist and a per-view point along the axis at the given
    /// depths behind the wrist.
    fn axis_pairs(
        rig: &Rig,
        wrist: &Vector3<f64>,
        axis: &Vector3<f64>,
        depths: &[f64],
    ) -> Vec<(Observation2D, Observation2D)> {
        rig.cameras()
            .iter()
            .zip(depths)
            .map(|(cam, depth)| {
                let arm_point = wrist - axis * *depth;
                let w = cam.project_point(wrist).unwrap();
                let a = cam.project_point(&arm_point).unwrap();
                (
                    Observation2D::new(cam.id(), w, 1.0),
                    Observation2D::new(cam.id(), a, 1.0),
                )
            })
            .collect()
    }

    /// Unsigned; atan2 keeps precision for tiny angles where acos cannot.
    fn angular_error(u: &Vector3<f64>, truth: &Vector3<f64>) -> f64 {
        u.cross(truth).norm().atan2(u.dot(truth).abs())
    }

    #[test]
    fn four_view_circle_recovers_axis() {
        let rig = ring_rig(4, 1.0);
        let truth = Vector3::new(0.0, 0.0, 1.0);
        let wrist = Vector3::new(0.01, -0.02, 0.03);
        let pairs = axis_pairs(&rig, &wrist, &truth, &[0.04, 0.07, 0.05, 0.09]);
        let u = estimate_arm_axis(&pairs, &rig).unwrap();
        assert!(angular_error(&u, &truth) < 1e-9);
        assert!((u.dot(&truth).abs() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_row_rejected_without_changing_result() {
        let rig = ring_rig(4, 1.0);
        let truth = Vector3::new(0.2, -0.1, 0.95).normalize();
        let wrist = Vector3::new(0.0, 0.01, 0.0);
        let mut pairs = axis_pairs(&rig, &wrist, &truth, &[0.05, 0.06, 0.07, 0.08]);
        let clean = estimate_arm_axis(&pairs[1..].to_vec(), &rig).unwrap();
        // Make view 0 degenerate: arm pixel equals wrist pixel.
        pairs[0].1.pixel = pairs[0].0.pixel;
        let with_degenerate = estimate_arm_axis(&pairs, &rig).unwrap();
        assert!(angular_error(&with_degenerate, &clean) < 1e-9);
        let system = AxisSystem::build(&pairs, &rig).unwrap();
        assert_eq!(system.len(), 3);
        assert_eq!(system.rejected_views(), &[0]);
    }

    #[test]
    fn two_orthogonal_views_suffice() {
        // Oracle: with exactly two plane normals the null vector is their
        // cross product.
        let rig = ring_rig(4, 1.0);
        let sub = rig.subset(&[0, 1]).unwrap();
        let truth = Vector3::new(0.1, 0.2, 0.97).normalize();
        let wrist = Vector3::new(0.02, 0.0, -0.01);
        let pairs = axis_pairs(&sub, &wrist, &truth, &[0.05, 0.08]);
        let system = AxisSystem::build(&pairs, &sub).unwrap();
        let u = system.solve();
        let oracle = system.normals()[0].cross(&system.normals()[1]).normalize();
        assert!(angular_error(&u, &oracle) < 1e-9);
        assert!(angular_error(&u, &truth) < 1e-9);
    }

    #[test]
    fn all_rows_degenerate_is_unobservable() {
        let rig = ring_rig(3, 1.0);
        let wrist = Vector3::new(0.0, 0.0, 0.0);
        let pairs: Vec<_> = rig
            .cameras()
            .iter()
            .map(|cam| {
                let w = cam.project_point(&wrist).unwrap();
                (
                    Observation2D::new(cam.id(), w, 1.0),
                    Observation2D::new(cam.id(), w, 1.0),
                )
            })
            .collect();
        assert!(matches!(
            estimate_arm_axis(&pairs, &rig),
            Err(ReconstructError::AxisUnobservable)
        ));
    }

    #[test]
    fn single_usable_row_is_insufficient() {
        let rig = ring_rig(3, 1.0);
        let truth = Vector3::new(0.0, 0.0, 1.0);
        let wrist = Vector3::new(0.01, 0.0, 0.0);
        let mut pairs = axis_pairs(&rig, &wrist, &truth, &[0.05, 0.06, 0.07]);
        pairs[0].1.pixel = pairs[0].0.pixel;
        pairs[1].1.pixel = pairs[1].0.pixel;
        assert!(matches!(
            estimate_arm_axis(&pairs, &rig),
            Err(ReconstructError::InsufficientViews { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn axis_depth_invariance() {
        // Re-sampling each view's arm keypoint at a different depth along
        // the true axis leaves the estimate unchanged: the property that
        // makes the normal-stacking formulation sound.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rig = ring_rig(5, 1.2);
        let truth = Vector3::new(-0.3, 0.25, 0.9).normalize();
        let wrist = Vector3::new(0.02, -0.01, 0.0);
        let depths_a: Vec<f64> = (0..5).map(|_| rng.gen_range(0.03..0.12)).collect();
        let depths_b: Vec<f64> = (0..5).map(|_| rng.gen_range(0.03..0.12)).collect();
        let u_a = estimate_arm_axis(&axis_pairs(&rig, &wrist, &truth, &depths_a), &rig).unwrap();
        let u_b = estimate_arm_axis(&axis_pairs(&rig, &wrist, &truth, &depths_b), &rig).unwrap();
        assert!(angular_error(&u_a, &u_b) < 1e-9);
        assert!(angular_error(&u_a, &truth) < 1e-9);
    }

    #[test]
    fn normals_have_unit_rows() {
        let rig = ring_rig(4, 1.0);
        let truth = Vector3::new(0.0, 1.0, 0.2).normalize();
        let pairs = axis_pairs(&rig, &Vector3::new(0.0, 0.0, 0.01), &truth, &[0.1; 4]);
        let system = AxisSystem::build(&pairs, &rig).unwrap();
        for n in system.normals() {
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sign_recovery_and_idempotence() {
        let rig = ring_rig(4, 1.0);
        let truth = Vector3::new(0.0, 0.0, 1.0);
        let wrist = Vector3::new(0.01, 0.005, 0.02);
        let pairs = axis_pairs(&rig, &wrist, &truth, &[0.05, 0.08, 0.06, 0.09]);
        let oriented = orient_axis_sign(&truth, &wrist, &pairs, &rig);
        assert!(!oriented.fallback);
        assert_relative_eq!(oriented.direction, truth, epsilon = 1e-12);
        // Feeding −u with the same observations still recovers +u.
        let flipped = orient_axis_sign(&(-truth), &wrist, &pairs, &rig);
        assert_relative_eq!(flipped.direction, truth, epsilon = 1e-12);
    }

    #[test]
    fn mirrored_scene_flips_sign() {
        let rig = ring_rig(4, 1.0);
        let wrist = Vector3::new(0.01, 0.005, 0.02);
        let axis_up = Vector3::new(0.0, 0.0, 1.0);
        let axis_down = -axis_up;
        let pairs_up = axis_pairs(&rig, &wrist, &axis_up, &[0.05, 0.08, 0.06, 0.09]);
        let pairs_down = axis_pairs(&rig, &wrist, &axis_down, &[0.05, 0.08, 0.06, 0.09]);
        let up = orient_axis_sign(&axis_up, &wrist, &pairs_up, &rig);
        let down = orient_axis_sign(&axis_up, &wrist, &pairs_down, &rig);
        assert_relative_eq!(up.direction, axis_up, epsilon = 1e-12);
        assert_relative_eq!(down.direction, axis_down, epsilon = 1e-12);
    }

    #[test]
    fn confidence_weighting_downweights_corrupt_view() {
        let rig = ring_rig(4, 1.0);
        let truth = Vector3::new(0.1, 0.2, 0.97).normalize();
        let wrist = Vector3::new(0.02, 0.0, -0.01);
        let mut pairs = axis_pairs(&rig, &wrist, &truth, &[0.05, 0.06, 0.07, 0.08]);
        // Corrupt one view's arm pixel but mark it untrusted.
        pairs[1].1.pixel += Vector2::new(25.0, -15.0);
        pairs[1].0.confidence = 0.05;
        pairs[1].1.confidence = 0.05;
        let plain = AxisSystem::build(&pairs, &rig).unwrap().solve();
        let weighted = AxisSystem::build_weighted(&pairs, &rig).unwrap().solve();
        assert!(angular_error(&weighted, &truth) < angular_error(&plain, &truth));
    }

    #[test]
    fn unusable_views_fall_back_to_plus_u() {
        let rig = ring_rig(2, 1.0);
        let u = Vector3::new(0.0, 0.0, 1.0);
        let wrist = Vector3::new(0.0, 0.0, 0.0);
        let px = Vector2::new(320.0, 240.0);
        let pairs = vec![(
            Observation2D::new(0, px, 1.0),
            Observation2D::new(0, px, 1.0),
        )];
        let oriented = orient_axis_sign(&u, &wrist, &pairs, &rig);
        assert!(oriented.fallback);
        assert_eq!(oriented.direction, u);
    }
}
