//! Pinhole camera models and the multi-camera rig.
//!
//! A [`Camera`] is immutable after construction and caches its 3×4
//! projection matrix `M = K·[R|t]` together with its optical center
//! `O = −Rᵀ·t`, which are the two quantities every reconstruction and
//! evaluation routine consumes. The world→camera convention is
//! `x_cam = R·X + t` and is recorded verbatim in the rig file header.

use nalgebra::{Matrix3, Matrix3x4, Vector2, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Convention string every rig file must declare.
pub const RIG_CONVENTION: &str = "x_cam = R*X + t";

/// Orthonormality / determinant tolerance for rotations.
const ROTATION_TOL: f64 = 1e-9;
/// A homogeneous scale below this is treated as a point at infinity.
const HOMOGENEOUS_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("camera {id}: invalid intrinsics: {reason}")]
    InvalidIntrinsics { id: u32, reason: String },
    #[error("camera {id}: invalid extrinsics: {reason}")]
    InvalidExtrinsics { id: u32, reason: String },
    #[error("rig: {0}")]
    InvalidRig(String),
    #[error("rig file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("rig file {path}: parse error: {reason}")]
    Parse { path: String, reason: String },
    #[error("point projects behind camera {id}")]
    BehindCamera { id: u32 },
    #[error("point at infinity for camera {id}")]
    PointAtInfinity { id: u32 },
}

/// Camera-internal parameters: focal lengths, principal point, image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self, id: u32) -> Result<(), CameraError> {
        let fail = |reason: String| CameraError::InvalidIntrinsics { id, reason };
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(fail(format!("fx, fy must be > 0 (got {}, {})", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(fail("width and height must be > 0".into()));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64) {
            return Err(fail(format!("cx={} outside [0, {})", self.cx, self.width)));
        }
        if !(0.0 <= self.cy && self.cy < self.height as f64) {
            return Err(fail(format!("cy={} outside [0, {})", self.cy, self.height)));
        }
        Ok(())
    }

    /// The 3×3 calibration matrix K.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

/// Rigid world→camera transform: `x_cam = rotation·X + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn validate(&self, id: u32) -> Result<(), CameraError> {
        let gram = self.rotation.transpose() * self.rotation;
        let max_dev = (gram - Matrix3::identity()).abs().max();
        if max_dev > ROTATION_TOL {
            return Err(CameraError::InvalidExtrinsics {
                id,
                reason: format!("rotation not orthonormal (max |RᵀR − I| = {max_dev:.3e})"),
            });
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOL {
            return Err(CameraError::InvalidExtrinsics {
                id,
                reason: format!("rotation determinant {det} != 1"),
            });
        }
        Ok(())
    }
}

/// A ray in world coordinates: `origin + s·direction`, `s ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    /// Unit length.
    pub direction: Vector3<f64>,
}

impl Ray {
    /// Distance from `point` to the infinite line through this ray.
    pub fn distance_to(&self, point: &Vector3<f64>) -> f64 {
        let d = point - self.origin;
        (d - self.direction * d.dot(&self.direction)).norm()
    }
}

/// One calibrated view. Immutable; projection matrix and optical center are
/// computed once at construction so the cache can never go stale.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    id: u32,
    intrinsics: Intrinsics,
    extrinsics: Extrinsics,
    projection: Matrix3x4<f64>,
    center: Vector3<f64>,
}

/// `M = K·[R|t]`.
pub fn projection_matrix(
    intr: &Intrinsics,
    extr: &Extrinsics,
) -> Result<Matrix3x4<f64>, CameraError> {
    intr.validate(u32::MAX)?;
    extr.validate(u32::MAX)?;
    Ok(compose_projection(intr, extr))
}

fn compose_projection(intr: &Intrinsics, extr: &Extrinsics) -> Matrix3x4<f64> {
    let mut rt = Matrix3x4::zeros();
    rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&extr.rotation);
    rt.fixed_view_mut::<3, 1>(0, 3).copy_from(&extr.translation);
    intr.matrix() * rt
}

impl Camera {
    pub fn new(id: u32, intrinsics: Intrinsics, extrinsics: Extrinsics) -> Result<Self, CameraError> {
        intrinsics.validate(id)?;
        extrinsics.validate(id)?;
        let projection = compose_projection(&intrinsics, &extrinsics);
        let center = -extrinsics.rotation.transpose() * extrinsics.translation;
        Ok(Self {
            id,
            intrinsics,
            extrinsics,
            projection,
            center,
        })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &Extrinsics {
        &self.extrinsics
    }

    /// Cached `M = K·[R|t]`.
    pub fn projection(&self) -> &Matrix3x4<f64> {
        &self.projection
    }

    /// Cached optical center `O = −Rᵀ·t`; the null direction of `M`.
    pub fn center(&self) -> &Vector3<f64> {
        &self.center
    }

    /// Project a world point to pixel coordinates.
    pub fn project_point(&self, point: &Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
        let h = self.projection * Vector4::new(point.x, point.y, point.z, 1.0);
        if h.z.abs() < HOMOGENEOUS_EPS {
            return Err(CameraError::PointAtInfinity { id: self.id });
        }
        if h.z < 0.0 {
            return Err(CameraError::BehindCamera { id: self.id });
        }
        Ok(Vector2::new(h.x / h.z, h.y / h.z))
    }

    /// World-frame ray through a pixel: origin at the optical center,
    /// direction `normalize(Rᵀ·K⁻¹·(px, py, 1))`.
    pub fn back_project_ray(&self, pixel: &Vector2<f64>) -> Ray {
        let k = &self.intrinsics;
        let cam_dir = Vector3::new((pixel.x - k.cx) / k.fx, (pixel.y - k.cy) / k.fy, 1.0);
        let dir = self.extrinsics.rotation.transpose() * cam_dir;
        Ray {
            origin: self.center,
            direction: dir.normalize(),
        }
    }

    /// Image-plane direction of a world-space direction `u` at point `x`,
    /// i.e. the derivative of `project_point(x + s·u)` at `s = 0`.
    /// Unnormalized; `None` when `x` sits on the principal plane.
    pub fn image_direction(&self, x: &Vector3<f64>, u: &Vector3<f64>) -> Option<Vector2<f64>> {
        let b = self.projection * Vector4::new(x.x, x.y, x.z, 1.0);
        let a = self.projection * Vector4::new(u.x, u.y, u.z, 0.0);
        if b.z.abs() < HOMOGENEOUS_EPS {
            return None;
        }
        let inv = 1.0 / (b.z * b.z);
        Some(Vector2::new(
            (a.x * b.z - b.x * a.z) * inv,
            (a.y * b.z - b.y * a.z) * inv,
        ))
    }
}

/// An ordered multi-camera array with unique view ids.
#[derive(Debug, Clone)]
pub struct Rig {
    cameras: Vec<Camera>,
}

impl Rig {
    pub fn new(cameras: Vec<Camera>) -> Result<Self, CameraError> {
        if cameras.len() < 2 {
            return Err(CameraError::InvalidRig(format!(
                "need at least 2 cameras, got {}",
                cameras.len()
            )));
        }
        let mut ids: Vec<u32> = cameras.iter().map(Camera::id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != cameras.len() {
            return Err(CameraError::InvalidRig("duplicate camera ids".into()));
        }
        Ok(Self { cameras })
    }

    pub fn cameras(&self) -> &[Camera] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn camera(&self, id: u32) -> Option<&Camera> {
        self.cameras.iter().find(|c| c.id() == id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.cameras.iter().map(Camera::id)
    }

    /// A rig restricted to the given view ids, preserving order.
    pub fn subset(&self, ids: &[u32]) -> Result<Rig, CameraError> {
        let cameras: Vec<Camera> = self
            .cameras
            .iter()
            .filter(|c| ids.contains(&c.id()))
            .cloned()
            .collect();
        if cameras.len() != ids.len() {
            return Err(CameraError::InvalidRig("subset contains unknown ids".into()));
        }
        Rig::new(cameras)
    }
}

// -------------------------------------------------------------------------
// Rig configuration file (JSON)

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigFile {
    convention: String,
    cameras: Vec<CameraFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    id: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    /// Row-major 3×3 world→camera rotation.
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

/// Parse a rig from its JSON text.
pub fn parse_rig(text: &str) -> Result<Rig, CameraError> {
    let file: RigFile = serde_json::from_str(text).map_err(|e| CameraError::Parse {
        path: "<memory>".into(),
        reason: e.to_string(),
    })?;
    rig_from_file(file)
}

/// Load and validate a rig configuration file.
pub fn load_rig(path: &Path) -> Result<Rig, CameraError> {
    let text = std::fs::read_to_string(path).map_err(|e| CameraError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let file: RigFile = serde_json::from_str(&text).map_err(|e| CameraError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    rig_from_file(file)
}

fn rig_from_file(file: RigFile) -> Result<Rig, CameraError> {
    if file.convention != RIG_CONVENTION {
        return Err(CameraError::InvalidRig(format!(
            "unsupported convention {:?}, expected {RIG_CONVENTION:?}",
            file.convention
        )));
    }
    let cameras = file
        .cameras
        .into_iter()
        .map(|c| {
            let intr = Intrinsics {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
            };
            let extr = Extrinsics {
                rotation: Matrix3::from_row_slice(&c.r),
                translation: Vector3::new(c.t[0], c.t[1], c.t[2]),
            };
            Camera::new(c.id, intr, extr)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Rig::new(cameras)
}

/// Serialize a rig back to the configuration file format.
pub fn rig_to_json(rig: &Rig) -> String {
    let file = RigFile {
        convention: RIG_CONVENTION.to_string(),
        cameras: rig
            .cameras()
            .iter()
            .map(|c| {
                let mut r = [0.0; 9];
                for row in 0..3 {
                    for col in 0..3 {
                        r[row * 3 + col] = c.extrinsics().rotation[(row, col)];
                    }
                }
                CameraFile {
                    id: c.id(),
                    fx: c.intrinsics().fx,
                    fy: c.intrinsics().fy,
                    cx: c.intrinsics().cx,
                    cy: c.intrinsics().cy,
                    width: c.intrinsics().width,
                    height: c.intrinsics().height,
                    r,
                    t: [
                        c.extrinsics().translation.x,
                        c.extrinsics().translation.y,
                        c.extrinsics().translation.z,
                    ],
                }
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("rig serialization cannot fail");
    s.push('\n');
    s
}

/// Write a rig configuration file.
pub fn save_rig(rig: &Rig, path: &Path) -> Result<(), CameraError> {
    std::fs::write(path, rig_to_json(rig)).map_err(|e| CameraError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
