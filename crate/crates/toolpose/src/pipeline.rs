//! The operational shell: frame pipeline with per-stage timing, file-level
//! evaluation, and the view-count ablation runner.
//!
//! The paper-facing stage decomposition is (a) frame read, (b) detection
//! acquisition, (c) 3D reconstruction, (d) pose emission. Stage (b) is a
//! pluggable [`FrameSource`]: a detection stream file or the simulator.

use crate::camera::Rig;
use crate::metrics::{
    BpeAccumulator, BpeClassValues, BpeNorm, BpePoint, BpeReport, EvalReport, EvalTask,
    GtInstance, MetricsError, OksConfig, PredInstance,
};
use crate::reconstruct::{
    reconstruct_beans, reconstruct_grasper, BeanReconstruction, Observation2D, ReconstructError,
    SmootherState, ToolClass, ToolDetection2D, ToolPose3D, DEFAULT_TAU_EPI, KP_TIP_A, KP_TIP_B,
    KP_WRIST,
};
use crate::sim::{simulate_frame, MotionScript, NoiseModel, SimError};
use crate::stream::{
    parse_detection_stream, parse_points_stream, pose_to_points, write_points_frame,
    DetectionStreamParser, FrameBundle, PointClass, StreamError,
};
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Reconstruct(#[from] ReconstructError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Pipeline tuning knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    /// Temporal smoothing factor; 0 disables smoothing.
    pub smoothing_alpha: f64,
    /// Epipolar gate for bean grouping, pixels.
    pub tau_epi: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            smoothing_alpha: 0.0,
            tau_epi: DEFAULT_TAU_EPI,
        }
    }
}

// ---------------------------------------------------------------------
// Sources

/// A two-phase frame source. `fetch` is the frame-read stage, `decode`
/// the detection-acquisition stage.
pub trait FrameSource {
    type Raw;

    fn fetch(&mut self) -> Option<Self::Raw>;
    fn decode(&mut self, raw: Self::Raw) -> Result<FrameBundle, PipelineError>;
}

/// Detection-stream file source.
pub struct StreamSource<'a> {
    parser: DetectionStreamParser<'a>,
}

impl<'a> StreamSource<'a> {
    pub fn new(text: &'a str) -> Self {
        Self {
            parser: DetectionStreamParser::new(text),
        }
    }
}

impl<'a> FrameSource for StreamSource<'a> {
    type Raw = Vec<(usize, &'a str)>;

    fn fetch(&mut self) -> Option<Self::Raw> {
        self.parser.next_block()
    }

    fn decode(&mut self, raw: Self::Raw) -> Result<FrameBundle, PipelineError> {
        Ok(self.parser.parse_block(&raw)?)
    }
}

/// Simulator source: frames are generated instead of read.
pub struct SimulatorSource<'a> {
    rig: &'a Rig,
    script: MotionScript,
    beans: Vec<Vector3<f64>>,
    noise: NoiseModel,
    frames: u64,
    next: u64,
}

impl<'a> SimulatorSource<'a> {
    pub fn new(
        rig: &'a Rig,
        script: MotionScript,
        beans: Vec<Vector3<f64>>,
        noise: NoiseModel,
        frames: u64,
    ) -> Self {
        Self {
            rig,
            script,
            beans,
            noise,
            frames,
            next: 0,
        }
    }
}

impl<'a> FrameSource for SimulatorSource<'a> {
    type Raw = u64;

    fn fetch(&mut self) -> Option<u64> {
        if self.next >= self.frames {
            return None;
        }
        let frame = self.next;
        self.next += 1;
        Some(frame)
    }

    fn decode(&mut self, frame_index: u64) -> Result<FrameBundle, PipelineError> {
        let frame = simulate_frame(self.rig, &self.script, &self.beans, &self.noise, frame_index)?;
        Ok(frame.bundle)
    }
}

// ---------------------------------------------------------------------
// Timing

/// Wall-clock stage durations of one frame, milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub read_ms: f64,
    pub detect_ms: f64,
    pub reconstruct_ms: f64,
    pub emit_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TimingReport {
    pub per_frame: Vec<StageTimes>,
}

impl TimingReport {
    pub fn aggregate(&self) -> StageTimes {
        let n = self.per_frame.len().max(1) as f64;
        let mut sum = StageTimes::default();
        for t in &self.per_frame {
            sum.read_ms += t.read_ms;
            sum.detect_ms += t.detect_ms;
            sum.reconstruct_ms += t.reconstruct_ms;
            sum.emit_ms += t.emit_ms;
            sum.total_ms += t.total_ms;
        }
        StageTimes {
            read_ms: sum.read_ms / n,
            detect_ms: sum.detect_ms / n,
            reconstruct_ms: sum.reconstruct_ms / n,
            emit_ms: sum.emit_ms / n,
            total_ms: sum.total_ms / n,
        }
    }

    pub fn summary(&self) -> String {
        let mean = self.aggregate();
        let mut out = String::new();
        writeln!(out, "frames {}", self.per_frame.len()).unwrap();
        writeln!(out, "read_ms {:.4}", mean.read_ms).unwrap();
        writeln!(out, "detect_source_ms {:.4}", mean.detect_ms).unwrap();
        writeln!(out, "reconstruct_ms {:.4}", mean.reconstruct_ms).unwrap();
        writeln!(out, "emit_ms {:.4}", mean.emit_ms).unwrap();
        writeln!(out, "total_ms {:.4}", mean.total_ms).unwrap();
        out
    }
}

// ---------------------------------------------------------------------
// Pipeline

/// Reconstruction result of one frame.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub frame_index: u64,
    pub pose: Option<ToolPose3D>,
    /// Why the pose is missing, when it is.
    pub pose_error: Option<String>,
    pub beans: BeanReconstruction,
}

/// A frame the pipeline dropped, with the reason.
#[derive(Debug, Clone)]
pub struct SkipRecord {
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub frames: Vec<FrameResult>,
    pub skipped: Vec<SkipRecord>,
    pub timing: TimingReport,
    /// The serialized pose stream (deterministic; no timing inside).
    pub pose_stream: String,
}

/// Highest-score grasper detection per view.
fn grasper_per_view(bundle: &FrameBundle) -> Vec<ToolDetection2D> {
    let mut per_view = Vec::new();
    for dets in bundle.views.values() {
        let best = dets
            .iter()
            .filter(|d| d.class == ToolClass::Grasper)
            .max_by(|a, b| a.score.partial_cmp(&b.score).expect("finite scores"));
        if let Some(det) = best {
            per_view.push(det.clone());
        }
    }
    per_view
}

/// Run the full pipeline over a source: parse → reconstruct → emit, with
/// every stage wall-clock timed. Malformed frames are skipped and
/// counted; unknown view ids are a fatal configuration error.
pub fn run_pipeline<S: FrameSource>(
    source: &mut S,
    rig: &Rig,
    options: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let mut output = PipelineOutput::default();
    let mut smoother = if options.smoothing_alpha > 0.0 {
        Some(SmootherState::new(options.smoothing_alpha).map_err(PipelineError::Reconstruct)?)
    } else {
        None
    };

    loop {
        let t0 = Instant::now();
        let Some(raw) = source.fetch() else {
            break;
        };
        let t1 = Instant::now();
        let bundle = match source.decode(raw) {
            Ok(bundle) => bundle,
            Err(err) => {
                output.skipped.push(SkipRecord {
                    reason: err.to_string(),
                });
                continue;
            }
        };
        for view_id in bundle.views.keys() {
            if rig.camera(*view_id).is_none() {
                return Err(PipelineError::Config(format!(
                    "frame {}: view {view_id} not present in rig",
                    bundle.frame_index
                )));
            }
        }
        let t2 = Instant::now();

        let graspers = grasper_per_view(&bundle);
        let (pose, pose_error) = if graspers.len() >= 2 {
            match reconstruct_grasper(&graspers, rig, smoother.as_mut()) {
                Ok(pose) => (Some(pose), None),
                Err(err) => (None, Some(err.to_string())),
            }
        } else {
            (None, Some(format!("{} grasper views", graspers.len())))
        };
        let beans = reconstruct_beans(&bundle.of_class(ToolClass::Bean), rig, options.tau_epi)?;
        let t3 = Instant::now();

        let bean_points: Vec<(Vector3<f64>, f64)> = beans
            .points
            .iter()
            .map(|b| (b.position, b.residual_px))
            .collect();
        let points = pose_to_points(bundle.frame_index, pose.as_ref(), &bean_points);
        write_points_frame(&mut output.pose_stream, &points);
        let t4 = Instant::now();

        output.timing.per_frame.push(StageTimes {
            read_ms: (t1 - t0).as_secs_f64() * 1e3,
            detect_ms: (t2 - t1).as_secs_f64() * 1e3,
            reconstruct_ms: (t3 - t2).as_secs_f64() * 1e3,
            emit_ms: (t4 - t3).as_secs_f64() * 1e3,
            total_ms: (t4 - t0).as_secs_f64() * 1e3,
        });
        output.frames.push(FrameResult {
            frame_index: bundle.frame_index,
            pose,
            pose_error,
            beans,
        });
    }
    Ok(output)
}

/// Convenience wrapper: run the pipeline over detection-stream text.
pub fn reconstruct_stream_text(
    text: &str,
    rig: &Rig,
    options: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let mut source = StreamSource::new(text);
    run_pipeline(&mut source, rig, options)
}

// ---------------------------------------------------------------------
// File-level evaluation

/// Collect the BPE points of one reconstructed frame (in-pipeline route:
/// exact reconstruction correspondences).
pub fn frame_bpe_points(result: &FrameResult) -> Vec<BpePoint> {
    let mut points = Vec::new();
    if let Some(pose) = &result.pose {
        for tip in [&pose.tip_a, &pose.tip_b].into_iter().flatten() {
            points.push(BpePoint {
                class: ToolClass::Grasper,
                position: tip.position,
                observations: tip.observations.clone(),
            });
        }
        points.push(BpePoint {
            class: ToolClass::Grasper,
            position: pose.wrist.position,
            observations: pose.wrist.observations.clone(),
        });
    }
    for bean in &result.beans.points {
        points.push(BpePoint {
            class: ToolClass::Bean,
            position: bean.position,
            observations: bean.observations.clone(),
        });
    }
    points
}

/// Back-projection evaluation of a pose stream against the detection
/// stream it was reconstructed from. Correspondences are re-derived:
/// wrist and tips pair with the per-view visible keypoints (tips via the
/// per-view assignment minimizing summed distance), beans greedily by
/// nearest back-projection within `tau_epi`.
pub fn evaluate_bpe_files(
    pose_text: &str,
    detections_text: &str,
    rig: &Rig,
    norm: BpeNorm,
    tau_epi: f64,
) -> Result<BpeReport, PipelineError> {
    let poses = parse_points_stream(pose_text)?;
    let detections = parse_detection_stream(detections_text)?;
    let mut acc = BpeAccumulator::new();

    for pose_frame in &poses {
        let Some(bundle) = detections
            .iter()
            .find(|b| b.frame_index == pose_frame.frame_index)
        else {
            continue;
        };
        let find = |class: PointClass| {
            pose_frame
                .points
                .iter()
                .find(|p| p.class == class)
                .map(|p| p.position)
        };
        let tip_a = find(PointClass::GrasperTipA);
        let tip_b = find(PointClass::GrasperTipB);
        let wrist = find(PointClass::GrasperWrist);
        let bean_points: Vec<Vector3<f64>> = pose_frame
            .points
            .iter()
            .filter(|p| p.class == PointClass::Bean)
            .map(|p| p.position)
            .collect();

        let mut wrist_obs = Vec::new();
        let mut tip_a_obs = Vec::new();
        let mut tip_b_obs = Vec::new();
        let mut bean_obs: Vec<Observation2D> = Vec::new();
        for dets in bundle.views.values() {
            for det in dets {
                match det.class {
                    ToolClass::Grasper => {
                        if wrist.is_some() {
                            wrist_obs.extend(det.observation(KP_WRIST));
                        }
                        assign_tip_observations(
                            det,
                            rig,
                            tip_a,
                            tip_b,
                            &mut tip_a_obs,
                            &mut tip_b_obs,
                        );
                    }
                    ToolClass::Bean => bean_obs.extend(det.observation(0)),
                }
            }
        }

        let mut points = Vec::new();
        if let (Some(position), false) = (wrist, wrist_obs.is_empty()) {
            points.push(BpePoint {
                class: ToolClass::Grasper,
                position,
                observations: wrist_obs,
            });
        }
        if let (Some(position), false) = (tip_a, tip_a_obs.is_empty()) {
            points.push(BpePoint {
                class: ToolClass::Grasper,
                position,
                observations: tip_a_obs,
            });
        }
        if let (Some(position), false) = (tip_b, tip_b_obs.is_empty()) {
            points.push(BpePoint {
                class: ToolClass::Grasper,
                position,
                observations: tip_b_obs,
            });
        }
        accumulate_bean_pairs(&bean_points, &bean_obs, rig, tau_epi, &mut points);

        for point in &points {
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
    }
    let first = &rig.cameras()[0];
    Ok(acc.report(first.intrinsics().width, first.intrinsics().height, norm))
}

/// Per-view tip pairing for file-level BPE: both orders are tried and the
/// one with the smaller summed back-projection distance wins.
fn assign_tip_observations(
    det: &ToolDetection2D,
    rig: &Rig,
    tip_a: Option<Vector3<f64>>,
    tip_b: Option<Vector3<f64>>,
    tip_a_obs: &mut Vec<Observation2D>,
    tip_b_obs: &mut Vec<Observation2D>,
) {
    let Some(cam) = rig.camera(det.view_id) else {
        return;
    };
    let proj = |p: Option<Vector3<f64>>| p.and_then(|p| cam.project_point(&p).ok());
    let pa = proj(tip_a);
    let pb = proj(tip_b);
    let obs: Vec<Observation2D> = [det.observation(KP_TIP_A), det.observation(KP_TIP_B)]
        .into_iter()
        .flatten()
        .collect();
    match (pa, pb, obs.len()) {
        (Some(pa), Some(pb), 2) => {
            let direct = (pa - obs[0].pixel).norm() + (pb - obs[1].pixel).norm();
            let swapped = (pa - obs[1].pixel).norm() + (pb - obs[0].pixel).norm();
            if swapped < direct {
                tip_a_obs.push(obs[1]);
                tip_b_obs.push(obs[0]);
            } else {
                tip_a_obs.push(obs[0]);
                tip_b_obs.push(obs[1]);
            }
        }
        (Some(pa), Some(pb), 1) => {
            if (pb - obs[0].pixel).norm() < (pa - obs[0].pixel).norm() {
                tip_b_obs.push(obs[0]);
            } else {
                tip_a_obs.push(obs[0]);
            }
        }
        (Some(_), None, n) if n >= 1 => tip_a_obs.extend(obs.into_iter().take(1)),
        (None, Some(_), n) if n >= 1 => tip_b_obs.extend(obs.into_iter().take(1)),
        _ => {}
    }
}

/// Greedy nearest-first bean pairing within the epipolar gate.
fn accumulate_bean_pairs(
    bean_points: &[Vector3<f64>],
    bean_obs: &[Observation2D],
    rig: &Rig,
    tau_epi: f64,
    out: &mut Vec<BpePoint>,
) {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (pi, point) in bean_points.iter().enumerate() {
        for (oi, obs) in bean_obs.iter().enumerate() {
            let Some(cam) = rig.camera(obs.view_id) else {
                continue;
            };
            if let Ok(px) = cam.project_point(point) {
                let d = (px - obs.pixel).norm();
                if d <= tau_epi {
                    pairs.push((pi, oi, d));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.2.partial_cmp(&b.2).expect("finite").then(a.1.cmp(&b.1)));
    let mut obs_used = vec![false; bean_obs.len()];
    let mut assigned: Vec<Vec<Observation2D>> = vec![Vec::new(); bean_points.len()];
    let mut view_taken: Vec<Vec<u32>> = vec![Vec::new(); bean_points.len()];
    for (pi, oi, _) in pairs {
        if obs_used[oi] || view_taken[pi].contains(&bean_obs[oi].view_id) {
            continue;
        }
        obs_used[oi] = true;
        view_taken[pi].push(bean_obs[oi].view_id);
        assigned[pi].push(bean_obs[oi]);
    }
    for (pi, observations) in assigned.into_iter().enumerate() {
        if !observations.is_empty() {
            out.push(BpePoint {
                class: ToolClass::Bean,
                position: bean_points[pi],
                observations,
            });
        }
    }
}

/// OD / PE evaluation of a predicted detection stream against a
/// ground-truth detection stream. Each (frame, view) pair is one image;
/// classes are evaluated separately and averaged.
pub fn evaluate_detection_files(
    pred_text: &str,
    gt_text: &str,
    task: EvalTask,
    oks_cfg: &OksConfig,
) -> Result<EvalReport, PipelineError> {
    let preds = parse_detection_stream(pred_text)?;
    let gts = parse_detection_stream(gt_text)?;
    let mut keys: Vec<(u64, u32)> = Vec::new();
    for bundle in preds.iter().chain(&gts) {
        for view in bundle.views.keys() {
            let key = (bundle.frame_index, *view);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    keys.sort_unstable();

    let to_pred = |det: &ToolDetection2D| PredInstance {
        class: det.class,
        bbox: det.bbox,
        keypoints: det.keypoints.iter().map(|k| k.pixel).collect(),
        score: det.score,
    };
    let to_gt = |det: &ToolDetection2D| GtInstance {
        class: det.class,
        bbox: det.bbox,
        keypoints: det
            .keypoints
            .iter()
            .map(|k| (k.pixel, k.visibility.as_u8()))
            .collect(),
    };

    fn view_dets<'a>(bundles: &'a [FrameBundle], frame: u64, view: u32) -> &'a [ToolDetection2D] {
        bundles
            .iter()
            .find(|b| b.frame_index == frame)
            .and_then(|b| b.views.get(&view))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
    let mut samples = Vec::with_capacity(keys.len());
    for (frame, view) in keys {
        let p: Vec<PredInstance> = view_dets(&preds, frame, view).iter().map(to_pred).collect();
        let g: Vec<GtInstance> = view_dets(&gts, frame, view).iter().map(to_gt).collect();
        samples.push((p, g));
    }
    Ok(crate::metrics::mean_average_precision(
        &samples, task, oks_cfg,
    )?)
}

// ---------------------------------------------------------------------
// View-count ablation

/// One averaged row of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub k: usize,
    /// Number of camera subsets evaluated; always `C(|rig|, k)`.
    pub subsets_evaluated: usize,
    pub bean: BpeClassValues,
    pub grasper: BpeClassValues,
    pub aggregate: BpeClassValues,
}

#[derive(Debug, Clone, Default)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub frames_used: usize,
}

impl AblationTable {
    pub fn row(&self, k: usize) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.k == k)
    }

    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "frames {}", self.frames_used).unwrap();
        for row in &self.rows {
            for (class, v) in [
                ("bean", &row.bean),
                ("grasper", &row.grasper),
                ("avg", &row.aggregate),
            ] {
                writeln!(
                    out,
                    "k={} subsets={} {class} BPE_PD {:.6} BPE_PPw {:.6}% BPE_PPh {:.6}%",
                    row.k,
                    row.subsets_evaluated,
                    v.bpe_pd,
                    v.bpe_ppw * 100.0,
                    v.bpe_pph * 100.0,
                )
                .unwrap();
            }
        }
        out
    }
}

/// All k-subsets of `ids`, lexicographic.
fn combinations(ids: &[u32], k: usize) -> Vec<Vec<u32>> {
    let n = ids.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| ids[i]).collect());
        // Advance the rightmost index that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn restrict_bundle(bundle: &FrameBundle, subset: &[u32]) -> FrameBundle {
    let mut out = FrameBundle::new(bundle.frame_index);
    for (view, dets) in &bundle.views {
        if subset.contains(view) {
            out.views.insert(*view, dets.clone());
        }
    }
    out
}

/// Rerun reconstruction on every camera subset of each size in
/// `k_min..=k_max` and average the per-subset back-projection errors.
pub fn ablate_views(
    frames: &[FrameBundle],
    rig: &Rig,
    k_min: usize,
    k_max: usize,
    options: &PipelineOptions,
    norm: BpeNorm,
) -> Result<AblationTable, PipelineError> {
    if k_min < 2 {
        return Err(PipelineError::Config(format!(
            "k must be at least 2, got {k_min}"
        )));
    }
    if k_max < k_min || k_max > rig.len() {
        return Err(PipelineError::Config(format!(
            "k range {k_min}..={k_max} invalid for a {}-camera rig",
            rig.len()
        )));
    }
    let ids: Vec<u32> = rig.ids().collect();
    let first = &rig.cameras()[0];
    let (width, height) = (first.intrinsics().width, first.intrinsics().height);

    let mut table = AblationTable {
        rows: Vec::new(),
        frames_used: frames.len(),
    };
    for k in k_min..=k_max {
        let subsets = combinations(&ids, k);
        let mut sums = [(0.0f64, 0usize); 3]; // bean, grasper, aggregate
        let mut n_points = [0usize; 3];
        for subset in &subsets {
            let sub_rig = rig
                .subset(subset)
                .map_err(|e| PipelineError::Config(e.to_string()))?;
            let mut acc = BpeAccumulator::new();
            for bundle in frames {
                let restricted = restrict_bundle(bundle, subset);
                let graspers = grasper_per_view(&restricted);
                let beans =
                    reconstruct_beans(&restricted.of_class(ToolClass::Bean), &sub_rig, options.tau_epi)?;
                let pose = if graspers.len() >= 2 {
                    reconstruct_grasper(&graspers, &sub_rig, None).ok()
                } else {
                    None
                };
                let result = FrameResult {
                    frame_index: bundle.frame_index,
                    pose,
                    pose_error: None,
                    beans,
                };
                for point in frame_bpe_points(&result) {
                    for obs in &point.observations {
                        let cam = sub_rig
                            .camera(obs.view_id)
                            .ok_or(MetricsError::UnknownView(obs.view_id))?;
                        match cam.project_point(&point.position) {
                            Ok(px) => acc.add_pair(point.class, (px - obs.pixel).norm()),
                            Err(_) => acc.add_skipped(),
                        }
                    }
                }
            }
            let report = acc.report(width, height, norm);
            for (slot, values) in [report.bean, report.grasper, report.aggregate]
                .iter()
                .enumerate()
            {
                if values.n_points > 0 {
                    sums[slot].0 += values.bpe_pd;
                    sums[slot].1 += 1;
                    n_points[slot] += values.n_points;
                }
            }
        }
        let mean = |slot: usize| {
            let (sum, count) = sums[slot];
            let bpe_pd = if count == 0 { 0.0 } else { sum / count as f64 };
            BpeClassValues {
                bpe_pd,
                bpe_ppw: bpe_pd / width as f64,
                bpe_pph: bpe_pd / height as f64,
                n_points: n_points[slot],
            }
        };
        table.rows.push(AblationRow {
            k,
            subsets_evaluated: subsets.len(),
            bean: mean(0),
            grasper: mean(1),
            aggregate: mean(2),
        });
    }
    Ok(table)
}
