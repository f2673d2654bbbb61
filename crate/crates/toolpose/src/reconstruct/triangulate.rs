//! Homogeneous least-squares triangulation of a single 3D point.

use super::{Observation2D, ReconstructError};
use crate::camera::{Camera, Rig};
use nalgebra::{DMatrix, Matrix2x4, Matrix4, Vector2, Vector3, Vector4};

/// Unit homogeneous vectors with |w| below this are points at infinity,
/// which is what near-parallel rays degenerate to.
const DEHOMOGENIZE_EPS: f64 = 1e-10;
/// Relative singular-value threshold for a rank-deficient stacked system
/// (null space of dimension ≥ 2, e.g. two coincident cameras).
const RANK_EPS: f64 = 1e-10;

/// The stacked system `G·X = 0`: two rows `H_i·M_i` per contributing view.
#[derive(Debug, Clone)]
pub struct TriangulationSystem {
    rows: DMatrix<f64>,
    view_ids: Vec<u32>,
}

impl TriangulationSystem {
    /// Assemble `G` from observations. Rows are unweighted; see
    /// [`TriangulationSystem::build_weighted`] for confidence scaling.
    pub fn build(obs: &[Observation2D], rig: &Rig) -> Result<Self, ReconstructError> {
        Self::build_impl(obs, rig, false)
    }

    /// Assemble `G` with each view's row pair scaled by its observation
    /// confidence.
    pub fn build_weighted(obs: &[Observation2D], rig: &Rig) -> Result<Self, ReconstructError> {
        Self::build_impl(obs, rig, true)
    }

    fn build_impl(
        obs: &[Observation2D],
        rig: &Rig,
        weighted: bool,
    ) -> Result<Self, ReconstructError> {
        let mut distinct: Vec<u32> = obs.iter().map(|o| o.view_id).collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(ReconstructError::InsufficientViews {
                needed: 2,
                got: distinct.len(),
            });
        }
        let mut rows = DMatrix::zeros(2 * obs.len(), 4);
        let mut view_ids = Vec::with_capacity(obs.len());
        for (i, o) in obs.iter().enumerate() {
            o.validate()?;
            let cam = rig
                .camera(o.view_id)
                .ok_or(ReconstructError::UnknownView(o.view_id))?;
            let mut block = hm_block(cam, &o.pixel);
            if weighted {
                block *= o.confidence;
            }
            rows.view_mut((2 * i, 0), (2, 4)).copy_from(&block);
            view_ids.push(o.view_id);
        }
        Ok(Self { rows, view_ids })
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn view_ids(&self) -> &[u32] {
        &self.view_ids
    }

    /// Right singular vector of `G` for the smallest singular value,
    /// unit length.
    pub fn solve_homogeneous(&self) -> Result<Vector4<f64>, ReconstructError> {
        let svd = self.rows.clone().svd(false, true);
        let sv = &svd.singular_values;
        let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
        let mut order: Vec<usize> = (0..sv.len()).collect();
        order.sort_by(|&a, &b| sv[a].partial_cmp(&sv[b]).expect("finite singular values"));
        let (min_idx, second_idx) = (order[0], order[1]);
        let max_sv = sv[*order.last().expect("non-empty")];
        if max_sv > 0.0 && sv[second_idx] < RANK_EPS * max_sv {
            return Err(ReconstructError::DegenerateGeometry(
                "stacked system has a null space of dimension >= 2",
            ));
        }
        let row = v_t.row(min_idx);
        Ok(Vector4::new(row[0], row[1], row[2], row[3]))
    }

    /// Solve and dehomogenize to a 3D point.
    pub fn solve(&self) -> Result<Vector3<f64>, ReconstructError> {
        let v = self.solve_homogeneous()?;
        let v = v.normalize();
        if v.w.abs() < DEHOMOGENIZE_EPS {
            return Err(ReconstructError::DegenerateGeometry(
                "solution at infinity (near-parallel rays)",
            ));
        }
        Ok(Vector3::new(v.x / v.w, v.y / v.w, v.z / v.w))
    }
}

/// Triangulate one 3D point from ≥ 2 observations in distinct views.
/// Returns the point and the RMS back-projection distance in pixels.
pub fn triangulate_point(
    obs: &[Observation2D],
    rig: &Rig,
) -> Result<(Vector3<f64>, f64), ReconstructError> {
    let system = TriangulationSystem::build(obs, rig)?;
    let point = system.solve()?;
    Ok((point, rms_residual(obs, rig, &point)))
}

/// Confidence-weighted variant of [`triangulate_point`]; rows of `G` are
/// scaled by each observation's confidence.
pub fn triangulate_point_weighted(
    obs: &[Observation2D],
    rig: &Rig,
) -> Result<(Vector3<f64>, f64), ReconstructError> {
    let system = TriangulationSystem::build_weighted(obs, rig)?;
    let point = system.solve()?;
    Ok((point, rms_residual(obs, rig, &point)))
}

/// `H_i·M_i` for one observation: `[m1 − x·m3; m2 − y·m3]`.
pub(crate) fn hm_block(cam: &Camera, pixel: &Vector2<f64>) -> Matrix2x4<f64> {
    let m = cam.projection();
    let r0 = m.row(0).clone_owned() - m.row(2).clone_owned() * pixel.x;
    let r1 = m.row(1).clone_owned() - m.row(2).clone_owned() * pixel.y;
    Matrix2x4::from_rows(&[r0, r1])
}

/// Algebraic re-projection without a front-of-camera check; used for
/// residual bookkeeping.
pub(crate) fn raw_reproject(cam: &Camera, point: &Vector3<f64>) -> Option<Vector2<f64>> {
    let h = cam.projection() * Vector4::new(point.x, point.y, point.z, 1.0);
    if h.z.abs() < 1e-15 {
        return None;
    }
    Some(Vector2::new(h.x / h.z, h.y / h.z))
}

/// RMS of per-view back-projection distances.
pub(crate) fn rms_residual(obs: &[Observation2D], rig: &Rig, point: &Vector3<f64>) -> f64 {
    let mut acc = 0.0;
    let mut n = 0usize;
    for o in obs {
        let Some(cam) = rig.camera(o.view_id) else {
            continue;
        };
        match raw_reproject(cam, point) {
            Some(px) => {
                acc += (px - o.pixel).norm_squared();
                n += 1;
            }
            None => return f64::INFINITY,
        }
    }
    if n == 0 {
        return f64::INFINITY;
    }
    (acc / n as f64).sqrt()
}

/// Minimizer of `‖Σ blockᵀ·block · v‖` over unit `v`, computed from the
/// accumulated 4×4 Gram matrix. Same minimizer as the singular-vector
/// route; used on the hot path of the tip-labeling search.
pub(crate) fn solve_gram(gram: &Matrix4<f64>) -> Option<Vector3<f64>> {
    let eig = gram.symmetric_eigen();
    let mut min_idx = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] < eig.eigenvalues[min_idx] {
            min_idx = i;
        }
    }
    let v = eig.eigenvectors.column(min_idx).normalize();
    if v.w.abs() < DEHOMOGENIZE_EPS {
        return None;
    }
    Some(Vector3::new(v.x / v.w, v.y / v.w, v.z / v.w))
}
