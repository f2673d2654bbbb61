//! Synthetic camera arrays and grasper/bean scenes with exact ground truth.
//!
//! Everything here is deterministic given `(spec, seed, frame_index)`, and
//! with noise disabled the emitted detections are exact projections of the
//! ground truth, which is what makes the round-trip test suite an oracle
//! rather than a regression snapshot.

use crate::camera::{Camera, CameraError, Extrinsics, Intrinsics, Rig};
use crate::reconstruct::{Bbox, Keypoint, ToolClass, ToolDetection2D, Visibility};
use crate::stream::FrameBundle;
use nalgebra::{Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

// ---------------------------------------------------------------------
// Camera arrays

/// Ring-array rig layout: `arrays` rings of `cameras_per_array` cameras,
/// vertically offset, all looking at `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct RigSpec {
    pub arrays: usize,
    pub cameras_per_array: usize,
    pub radius: f64,
    pub target: Vector3<f64>,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Height offset between consecutive rings.
    pub vertical_spacing: f64,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            arrays: 1,
            cameras_per_array: 5,
            radius: 1.0,
            target: Vector3::zeros(),
            width: 640,
            height: 480,
            focal: 600.0,
            vertical_spacing: 0.5,
        }
    }
}

/// World→camera rotation looking from `center` toward `target`.
fn look_at_rotation(center: &Vector3<f64>, target: &Vector3<f64>) -> Matrix3<f64> {
    let forward = (target - center).normalize();
    let up = if forward.z.abs() > 0.999 {
        Vector3::new(0.0, 1.0, 0.0)
    } else {
        Vector3::new(0.0, 0.0, 1.0)
    };
    let x = up.cross(&forward).normalize();
    let y = forward.cross(&x);
    Matrix3::from_rows(&[x.transpose(), y.transpose(), forward.transpose()])
}

/// Place the cameras of a [`RigSpec`] on their rings.
pub fn make_rig(spec: &RigSpec) -> Result<Rig, SimError> {
    if spec.cameras_per_array < 2 {
        return Err(SimError::InvalidSpec(format!(
            "cameras_per_array must be >= 2, got {}",
            spec.cameras_per_array
        )));
    }
    if spec.arrays == 0 {
        return Err(SimError::InvalidSpec("arrays must be >= 1".into()));
    }
    if !(spec.radius > 0.0) {
        return Err(SimError::InvalidSpec(format!(
            "ring radius must be > 0, got {}",
            spec.radius
        )));
    }
    let intr = Intrinsics {
        fx: spec.focal,
        fy: spec.focal,
        cx: spec.width as f64 / 2.0,
        cy: spec.height as f64 / 2.0,
        width: spec.width,
        height: spec.height,
    };
    let mut cameras = Vec::with_capacity(spec.arrays * spec.cameras_per_array);
    for array in 0..spec.arrays {
        // Stagger rings so stacked cameras do not share a vertical plane.
        let stagger = array as f64 * std::f64::consts::PI / spec.cameras_per_array as f64;
        for k in 0..spec.cameras_per_array {
            let angle =
                2.0 * std::f64::consts::PI * k as f64 / spec.cameras_per_array as f64 + stagger;
            let center = spec.target
                + Vector3::new(
                    spec.radius * angle.cos(),
                    spec.radius * angle.sin(),
                    array as f64 * spec.vertical_spacing,
                );
            let rotation = look_at_rotation(&center, &spec.target);
            let extr = Extrinsics {
                rotation,
                translation: -rotation * center,
            };
            let id = (array * spec.cameras_per_array + k) as u32;
            cameras.push(Camera::new(id, intr, extr)?);
        }
    }
    Ok(Rig::new(cameras)?)
}

// ---------------------------------------------------------------------
// Grasper geometry

/// Parametric grasper state. `axis` points from the arm toward the wrist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrasperParams {
    pub wrist: Vector3<f64>,
    pub axis: Vector3<f64>,
    pub roll: f64,
    pub open_half_angle: f64,
    pub finger_length: f64,
    /// λ: distance behind the wrist (along −axis) of the nominal arm
    /// keypoint.
    pub arm_marker_offset: f64,
}

impl GrasperParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if (self.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidSpec("axis must be unit length".into()));
        }
        if !(0.0..=std::f64::consts::FRAC_PI_3).contains(&self.open_half_angle) {
            return Err(SimError::InvalidSpec(format!(
                "open_half_angle {} outside [0, π/3]",
                self.open_half_angle
            )));
        }
        if !(self.finger_length > 0.0) {
            return Err(SimError::InvalidSpec("finger_length must be > 0".into()));
        }
        if !(self.arm_marker_offset > 0.0) {
            return Err(SimError::InvalidSpec("arm_marker_offset must be > 0".into()));
        }
        Ok(())
    }
}

/// The four ground-truth 3D keypoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrasperSkeleton {
    pub tip_a: Vector3<f64>,
    pub tip_b: Vector3<f64>,
    pub wrist: Vector3<f64>,
    pub arm_point: Vector3<f64>,
}

/// Deterministic orthonormal frame perpendicular to a unit vector: the
/// first basis axis least aligned with it seeds `e1`.
fn perpendicular_frame(u: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let abs = [u.x.abs(), u.y.abs(), u.z.abs()];
    let mut least = 0;
    for i in 1..3 {
        if abs[i] < abs[least] {
            least = i;
        }
    }
    let mut h = Vector3::zeros();
    h[least] = 1.0;
    let e1 = h.cross(u).normalize();
    let e2 = u.cross(&e1);
    (e1, e2)
}

/// Expand grasper parameters to the four 3D keypoints. The two fingers
/// open symmetrically about the axis within the roll-oriented plane, so
/// shifting roll by π swaps the tips.
pub fn grasper_skeleton(p: &GrasperParams) -> Result<GrasperSkeleton, SimError> {
    p.validate()?;
    let (e1, e2) = perpendicular_frame(&p.axis);
    let opening = e1 * p.roll.cos() + e2 * p.roll.sin();
    let (sin_h, cos_h) = p.open_half_angle.sin_cos();
    let dir_a = p.axis * cos_h + opening * sin_h;
    let dir_b = p.axis * cos_h - opening * sin_h;
    Ok(GrasperSkeleton {
        tip_a: p.wrist + dir_a * p.finger_length,
        tip_b: p.wrist + dir_b * p.finger_length,
        wrist: p.wrist,
        arm_point: p.wrist - p.axis * p.arm_marker_offset,
    })
}

// ---------------------------------------------------------------------
// Motion

/// Smooth parametric motion: circular wrist path, optional axis
/// precession, sinusoidal opening, constant roll rate. All rates are per
/// frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionScript {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub angular_velocity: f64,
    pub phase: f64,
    pub axis_base: Vector3<f64>,
    pub axis_precession_angle: f64,
    pub axis_precession_velocity: f64,
    pub open_base: f64,
    pub open_amplitude: f64,
    pub open_frequency: f64,
    pub roll_velocity: f64,
    pub finger_length: f64,
    pub arm_marker_offset: f64,
}

impl MotionScript {
    /// The stock bean-drop-style maneuver: a slow circle around the
    /// target with precessing axis, oscillating jaws, and steady roll.
    pub fn demo(target: &Vector3<f64>) -> Self {
        Self {
            center: target + Vector3::new(0.0, 0.0, 0.05),
            radius: 0.03,
            angular_velocity: 0.05,
            phase: 0.0,
            axis_base: Vector3::new(0.1, -0.05, 0.99).normalize(),
            axis_precession_angle: 0.15,
            axis_precession_velocity: 0.02,
            open_base: 0.25,
            open_amplitude: 0.1,
            open_frequency: 0.07,
            roll_velocity: 0.03,
            finger_length: 0.03,
            arm_marker_offset: 0.08,
        }
    }

    /// A script that yields the same parameters for every frame.
    pub fn constant(params: &GrasperParams) -> Self {
        Self {
            center: params.wrist,
            radius: 0.0,
            angular_velocity: 0.0,
            phase: 0.0,
            axis_base: params.axis,
            axis_precession_angle: 0.0,
            axis_precession_velocity: 0.0,
            open_base: params.open_half_angle,
            open_amplitude: 0.0,
            open_frequency: 0.0,
            roll_velocity: 0.0,
            finger_length: params.finger_length,
            arm_marker_offset: params.arm_marker_offset,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.radius < 0.0 {
            return Err(SimError::InvalidSpec("radius must be >= 0".into()));
        }
        if (self.axis_base.norm() - 1.0).abs() > 1e-9 {
            return Err(SimError::InvalidSpec("axis_base must be unit length".into()));
        }
        // Probe one frame so parameter-range errors surface early.
        trajectory(0, self)?;
        Ok(())
    }

    /// Upper bound on the wrist displacement between consecutive frames.
    pub fn max_wrist_step(&self) -> f64 {
        self.radius * self.angular_velocity.abs()
    }

    /// Upper bound on the axis rotation between consecutive frames, rad.
    pub fn max_axis_step(&self) -> f64 {
        self.axis_precession_velocity.abs() * self.axis_precession_angle.sin().abs()
    }

    /// Upper bound on the opening-angle change between consecutive frames.
    pub fn max_open_step(&self) -> f64 {
        (self.open_amplitude * self.open_frequency).abs()
    }

    pub fn max_roll_step(&self) -> f64 {
        self.roll_velocity.abs()
    }
}

/// Grasper parameters at a frame index.
pub fn trajectory(t: u64, script: &MotionScript) -> Result<GrasperParams, SimError> {
    let tf = t as f64;
    let theta = script.angular_velocity * tf + script.phase;
    let wrist = script.center
        + Vector3::new(
            script.radius * theta.cos(),
            script.radius * theta.sin(),
            0.0,
        );
    let axis = if script.axis_precession_angle == 0.0 {
        script.axis_base
    } else {
        let (e1, e2) = perpendicular_frame(&script.axis_base);
        let psi = script.axis_precession_velocity * tf;
        let (sin_a, cos_a) = script.axis_precession_angle.sin_cos();
        (script.axis_base * cos_a + (e1 * psi.cos() + e2 * psi.sin()) * sin_a).normalize()
    };
    let open = (script.open_base + script.open_amplitude * (script.open_frequency * tf).sin())
        .clamp(0.0, std::f64::consts::FRAC_PI_3);
    let params = GrasperParams {
        wrist,
        axis,
        roll: script.roll_velocity * tf,
        open_half_angle: open,
        finger_length: script.finger_length,
        arm_marker_offset: script.arm_marker_offset,
    };
    params.validate()?;
    Ok(params)
}

// ---------------------------------------------------------------------
// Detection rendering

/// Pixel noise and keypoint dropout. `seed` fully determines every frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma_px: f64,
    pub dropout_prob: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            sigma_px: 0.0,
            dropout_prob: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma_px >= 0.0) {
            return Err(SimError::InvalidSpec("sigma_px must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(SimError::InvalidSpec("dropout_prob must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Ground truth for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGroundTruth {
    pub skeleton: GrasperSkeleton,
    /// Unit arm direction, arm → wrist.
    pub axis: Vector3<f64>,
    pub beans: Vec<Vector3<f64>>,
}

/// Ground truth plus the per-view detections rendered from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub gt: SceneGroundTruth,
    pub bundle: FrameBundle,
}

/// Fraction of the nominal arm offset the per-view depth is drawn from.
const ARM_DEPTH_RANGE: (f64, f64) = (0.5, 1.5);
/// Bounding boxes are padded by this fraction per side, floored at 1 px.
const BBOX_PAD_FRACTION: f64 = 0.05;
const BBOX_PAD_MIN_PX: f64 = 1.0;

struct ProjectedKeypoint {
    pixel: Vector2<f64>,
    visible: bool,
}

fn render_keypoint(
    cam: &Camera,
    point: &Vector3<f64>,
    noise: &NoiseModel,
    normal: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> Option<ProjectedKeypoint> {
    let mut pixel = cam.project_point(point).ok()?;
    if let Some(normal) = normal {
        pixel.x += normal.sample(rng);
        pixel.y += normal.sample(rng);
    }
    let visible = if noise.dropout_prob > 0.0 {
        rng.gen::<f64>() >= noise.dropout_prob
    } else {
        true
    };
    Some(ProjectedKeypoint { pixel, visible })
}

fn bbox_around(pixels: &[Vector2<f64>]) -> Bbox {
    let mut x_min = f64::INFINITY;
    let mut y_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for p in pixels {
        x_min = x_min.min(p.x);
        y_min = y_min.min(p.y);
        x_max = x_max.max(p.x);
        y_max = y_max.max(p.y);
    }
    let pad_x = (BBOX_PAD_FRACTION * (x_max - x_min)).max(BBOX_PAD_MIN_PX);
    let pad_y = (BBOX_PAD_FRACTION * (y_max - y_min)).max(BBOX_PAD_MIN_PX);
    Bbox {
        x_min: x_min - pad_x,
        y_min: y_min - pad_y,
        x_max: x_max + pad_x,
        y_max: y_max + pad_y,
    }
}

fn keypoint_of(p: Option<&ProjectedKeypoint>) -> Keypoint {
    match p {
        Some(kp) if kp.visible => Keypoint {
            pixel: kp.pixel,
            visibility: Visibility::Visible,
            confidence: 1.0,
        },
        _ => Keypoint {
            pixel: Vector2::zeros(),
            visibility: Visibility::Absent,
            confidence: 0.0,
        },
    }
}

/// Render per-view detections of a grasper skeleton plus beans.
///
/// Per view, every ground-truth point is projected, pixel noise is added,
/// and dropout is applied. The arm keypoint is projected from a fresh
/// random depth along the arm axis per view, reflecting that the arm
/// offers no view-consistent landmark. Points behind a camera are dropped
/// with visibility 0. Deterministic under `(noise.seed, frame_index)`.
pub fn render_detections(
    skeleton: &GrasperSkeleton,
    axis: &Vector3<f64>,
    beans: &[Vector3<f64>],
    rig: &Rig,
    noise: &NoiseModel,
    frame_index: u64,
) -> Result<SimFrame, SimError> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    rng.set_stream(frame_index);
    let normal = if noise.sigma_px > 0.0 {
        Some(Normal::new(0.0, noise.sigma_px).expect("validated sigma"))
    } else {
        None
    };
    let lambda = (skeleton.wrist - skeleton.arm_point).norm();

    let mut bundle = FrameBundle::new(frame_index);
    for cam in rig.cameras() {
        // Grasper: per-view arm depth, then the four keypoints.
        let depth = rng.gen_range(ARM_DEPTH_RANGE.0 * lambda..ARM_DEPTH_RANGE.1 * lambda);
        let arm_sample = skeleton.wrist - axis * depth;
        let points = [skeleton.tip_a, skeleton.tip_b, skeleton.wrist, arm_sample];
        let projected: Vec<Option<ProjectedKeypoint>> = points
            .iter()
            .map(|p| render_keypoint(cam, p, noise, normal.as_ref(), &mut rng))
            .collect();
        let in_front: Vec<Vector2<f64>> =
            projected.iter().flatten().map(|kp| kp.pixel).collect();
        if !in_front.is_empty() {
            let keypoints = projected.iter().map(|p| keypoint_of(p.as_ref())).collect();
            let det = ToolDetection2D::new(
                cam.id(),
                ToolClass::Grasper,
                bbox_around(&in_front),
                keypoints,
                1.0,
            )
            .expect("simulator emits valid detections");
            bundle.push(det);
        }

        for bean in beans {
            if let Some(kp) = render_keypoint(cam, bean, noise, normal.as_ref(), &mut rng) {
                let det = ToolDetection2D::new(
                    cam.id(),
                    ToolClass::Bean,
                    bbox_around(std::slice::from_ref(&kp.pixel)),
                    vec![keypoint_of(Some(&kp))],
                    1.0,
                )
                .expect("simulator emits valid detections");
                bundle.push(det);
            }
        }
    }

    Ok(SimFrame {
        gt: SceneGroundTruth {
            skeleton: *skeleton,
            axis: *axis,
            beans: beans.to_vec(),
        },
        bundle,
    })
}

/// Deterministically scatter beans near a center point.
pub fn scatter_beans(count: usize, center: &Vector3<f64>, spread: f64, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX); // never collides with frame streams
    (0..count)
        .map(|_| {
            center
                + Vector3::new(
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                )
        })
        .collect()
}

/// One trajectory frame end to end: parameters → skeleton → detections.
pub fn simulate_frame(
    rig: &Rig,
    script: &MotionScript,
    beans: &[Vector3<f64>],
    noise: &NoiseModel,
    frame_index: u64,
) -> Result<SimFrame, SimError> {
    let params = trajectory(frame_index, script)?;
    let skeleton = grasper_skeleton(&params)?;
    render_detections(&skeleton, &params.axis, beans, rig, noise, frame_index)
}

/// Ground truth of one frame in sidecar form: grasper points in
/// tip_a/tip_b/wrist order, the axis record, then beans.
pub fn gt_to_points(frame_index: u64, gt: &SceneGroundTruth) -> crate::stream::FramePoints {
    use crate::stream::{FramePoints, PointClass, PointRecord};
    let mut points = vec![
        PointRecord {
            class: PointClass::GrasperTipA,
            position: gt.skeleton.tip_a,
            residual_px: None,
        },
        PointRecord {
            class: PointClass::GrasperTipB,
            position: gt.skeleton.tip_b,
            residual_px: None,
        },
        PointRecord {
            class: PointClass::GrasperWrist,
            position: gt.skeleton.wrist,
            residual_px: None,
        },
    ];
    for bean in &gt.beans {
        points.push(PointRecord {
            class: PointClass::Bean,
            position: *bean,
            residual_px: None,
        });
    }
    FramePoints {
        frame_index,
        points,
        axis: Some(gt.axis),
    }
}

/// A rendered detection stream plus its ground-truth sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationProducts {
    pub detections: String,
    pub ground_truth: String,
}

/// Render a whole trajectory into the detection-stream and sidecar
/// formats.
pub fn simulate_stream(
    rig: &Rig,
    script: &MotionScript,
    beans: &[Vector3<f64>],
    noise: &NoiseModel,
    frames: u64,
) -> Result<SimulationProducts, SimError> {
    let mut detections = String::new();
    let mut ground_truth = String::new();
    for frame_index in 0..frames {
        let frame = simulate_frame(rig, script, beans, noise, frame_index)?;
        crate::stream::write_detection_frame(&mut detections, &frame.bundle);
        crate::stream::write_points_frame(&mut ground_truth, &gt_to_points(frame_index, &frame.gt));
    }
    Ok(SimulationProducts {
        detections,
        ground_truth,
    })
}
