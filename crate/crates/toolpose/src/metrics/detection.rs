//! Detection and pose-estimation accuracy: IoU, OKS, greedy matching,
//! precision/recall, and mean average precision.

use super::MetricsError;
use crate::reconstruct::{Bbox, ToolClass};
use nalgebra::Vector2;
use std::fmt::Write as _;

/// mAP@50:95 thresholds: 0.50 to 0.95 in 0.05 steps.
pub const MAP_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// Intersection over union of two boxes. Degenerate (zero-area) boxes
/// yield 0.
pub fn iou(a: &Bbox, b: &Bbox) -> f64 {
    if !a.is_valid() || !b.is_valid() {
        return 0.0;
    }
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}

/// Per-keypoint OKS constants. A keypoint counts when its ground-truth
/// visibility is > 0.
#[derive(Debug, Clone, PartialEq)]
pub struct OksParams {
    pub k: Vec<f64>,
}

impl OksParams {
    /// k_i = 0.05 for every keypoint slot of the class.
    pub fn default_for(class: ToolClass) -> Self {
        Self {
            k: vec![0.05; class.keypoint_count()],
        }
    }

    pub fn uniform(count: usize, k: f64) -> Self {
        Self { k: vec![k; count] }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.k.iter().any(|&k| !(k > 0.0)) {
            return Err(MetricsError::InvalidInput(
                "every OKS k_i must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Object keypoint similarity of a predicted keypoint set against ground
/// truth, scale-normalized by the ground-truth box.
pub fn oks(
    pred: &[Vector2<f64>],
    gt: &[(Vector2<f64>, u8)],
    gt_bbox: &Bbox,
    params: &OksParams,
) -> Result<f64, MetricsError> {
    params.validate()?;
    if pred.len() != gt.len() || pred.len() != params.k.len() {
        return Err(MetricsError::KeypointMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if !gt_bbox.is_valid() {
        return Err(MetricsError::InvalidInput(
            "OKS needs a ground-truth box with positive area".into(),
        ));
    }
    let s_squared = gt_bbox.width() * gt_bbox.height();
    let mut sum = 0.0;
    let mut visible = 0usize;
    for ((p, (g, vis)), k) in pred.iter().zip(gt).zip(&params.k) {
        if *vis == 0 {
            continue;
        }
        visible += 1;
        let d2 = (p - g).norm_squared();
        sum += (-d2 / (2.0 * s_squared * k * k)).exp();
    }
    if visible == 0 {
        return Err(MetricsError::UndefinedOks);
    }
    Ok(sum / visible as f64)
}

/// How predictions are scored against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// Bounding-box IoU (object detection).
    Iou,
    /// Keypoint OKS (pose estimation).
    Oks,
}

/// Class-specific OKS constants used when matching in OKS mode.
#[derive(Debug, Clone, PartialEq)]
pub struct OksConfig {
    pub grasper: OksParams,
    pub bean: OksParams,
}

impl Default for OksConfig {
    fn default() -> Self {
        Self {
            grasper: OksParams::default_for(ToolClass::Grasper),
            bean: OksParams::default_for(ToolClass::Bean),
        }
    }
}

impl OksConfig {
    fn for_class(&self, class: ToolClass) -> &OksParams {
        match class {
            ToolClass::Grasper => &self.grasper,
            ToolClass::Bean => &self.bean,
        }
    }
}

/// One ground-truth instance in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub class: ToolClass,
    pub bbox: Bbox,
    /// (pixel, visibility); visibility > 0 participates in OKS.
    pub keypoints: Vec<(Vector2<f64>, u8)>,
}

/// One predicted instance in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredInstance {
    pub class: ToolClass,
    pub bbox: Bbox,
    pub keypoints: Vec<Vector2<f64>>,
    pub score: f64,
}

fn pair_score(pred: &PredInstance, gt: &GtInstance, mode: MatchMode, oks_cfg: &OksConfig) -> f64 {
    if pred.class != gt.class {
        return f64::NEG_INFINITY;
    }
    match mode {
        MatchMode::Iou => iou(&pred.bbox, &gt.bbox),
        MatchMode::Oks => oks(
            &pred.keypoints,
            &gt.keypoints,
            &gt.bbox,
            oks_cfg.for_class(gt.class),
        )
        .unwrap_or(f64::NEG_INFINITY),
    }
}

/// Result of greedy matching at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub true_positives: usize,
    pub false_positives: usize,
    pub n_gt: usize,
    /// `None` when there were no predictions.
    pub precision: Option<f64>,
    /// `None` when there was no ground truth.
    pub recall: Option<f64>,
    /// (pred index, gt index, score) for accepted matches.
    pub matches: Vec<(usize, usize, f64)>,
    /// Per prediction, in input order: was it a true positive.
    pub pred_is_tp: Vec<bool>,
}

/// Greedy single-match protocol: predictions in descending confidence,
/// each claiming its best still-unmatched same-class ground truth; the
/// claim is a true positive iff the pair score reaches the threshold.
pub fn match_and_score(
    preds: &[PredInstance],
    gts: &[GtInstance],
    threshold: f64,
    mode: MatchMode,
    oks_cfg: &OksConfig,
) -> MatchOutcome {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut gt_taken = vec![false; gts.len()];
    let mut pred_is_tp = vec![false; preds.len()];
    let mut matches = Vec::new();
    let mut tp = 0usize;
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let s = pair_score(&preds[p], gt, mode, oks_cfg);
            if s == f64::NEG_INFINITY {
                continue;
            }
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some((g, s));
            }
        }
        if let Some((g, s)) = best {
            if s >= threshold {
                gt_taken[g] = true;
                pred_is_tp[p] = true;
                tp += 1;
                matches.push((p, g, s));
            }
        }
    }
    let fp = preds.len() - tp;
    MatchOutcome {
        true_positives: tp,
        false_positives: fp,
        n_gt: gts.len(),
        precision: (!preds.is_empty()).then(|| tp as f64 / preds.len() as f64),
        recall: (!gts.is_empty()).then(|| tp as f64 / gts.len() as f64),
        matches,
        pred_is_tp,
    }
}

/// Evaluated task, following the OD / PE split of the report tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTask {
    ObjectDetection,
    PoseEstimation,
}

impl EvalTask {
    pub fn as_str(&self) -> &'static str {
        match self {
            EvalTask::ObjectDetection => "OD",
            EvalTask::PoseEstimation => "PE",
        }
    }

    pub fn mode(&self) -> MatchMode {
        match self {
            EvalTask::ObjectDetection => MatchMode::Iou,
            EvalTask::PoseEstimation => MatchMode::Oks,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: EvalTask,
    /// Pooled precision at the primary 0.5 threshold.
    pub precision: f64,
    /// Pooled recall at the primary 0.5 threshold.
    pub recall: f64,
    pub map50: f64,
    pub map50_95: f64,
    /// (threshold, pooled precision, pooled recall) per mAP threshold.
    pub pr_points: Vec<(f64, f64, f64)>,
}

/// All-points-interpolated average precision from globally ranked TP/FP
/// flags.
fn average_precision(flags: &[(f64, bool)], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut ranked: Vec<&(f64, bool)> = flags.iter().collect();
    // Descending score; stable for equal scores.
    let mut order: Vec<usize> = (0..ranked.len()).collect();
    order.sort_by(|&a, &b| {
        ranked[b]
            .0
            .partial_cmp(&ranked[a].0)
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    ranked = order.iter().map(|&i| &flags[i]).collect();

    let mut precisions = Vec::with_capacity(ranked.len());
    let mut recalls = Vec::with_capacity(ranked.len());
    let mut tp = 0usize;
    for (rank, (_, is_tp)) in ranked.iter().enumerate() {
        if *is_tp {
            tp += 1;
        }
        precisions.push(tp as f64 / (rank + 1) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    // Precision envelope from the right, then sum over recall increments.
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..precisions.len() {
        if recalls[i] > prev_recall {
            ap += (recalls[i] - prev_recall) * precisions[i];
            prev_recall = recalls[i];
        }
    }
    ap
}

/// Evaluate a corpus of (predictions, ground truths) images. AP is
/// computed per class and averaged over the classes present in the ground
/// truth; precision and recall are pooled over all images at each
/// threshold.
pub fn mean_average_precision(
    samples: &[(Vec<PredInstance>, Vec<GtInstance>)],
    task: EvalTask,
    oks_cfg: &OksConfig,
) -> Result<EvalReport, MetricsError> {
    let total_gt: usize = samples.iter().map(|(_, gts)| gts.len()).sum();
    if total_gt == 0 {
        return Err(MetricsError::NoGroundTruth);
    }
    let mode = task.mode();
    let mut classes: Vec<ToolClass> = samples
        .iter()
        .flat_map(|(_, gts)| gts.iter().map(|g| g.class))
        .collect();
    classes.sort();
    classes.dedup();

    let mut pr_points = Vec::with_capacity(MAP_THRESHOLDS.len());
    let mut aps = Vec::with_capacity(MAP_THRESHOLDS.len());
    for &threshold in &MAP_THRESHOLDS {
        let mut pooled_tp = 0usize;
        let mut pooled_preds = 0usize;
        let mut class_aps = Vec::with_capacity(classes.len());
        for &class in &classes {
            let mut flags: Vec<(f64, bool)> = Vec::new();
            let mut class_gt = 0usize;
            for (preds, gts) in samples {
                let preds_c: Vec<PredInstance> = preds
                    .iter()
                    .filter(|p| p.class == class)
                    .cloned()
                    .collect();
                let gts_c: Vec<GtInstance> =
                    gts.iter().filter(|g| g.class == class).cloned().collect();
                class_gt += gts_c.len();
                let outcome = match_and_score(&preds_c, &gts_c, threshold, mode, oks_cfg);
                pooled_tp += outcome.true_positives;
                pooled_preds += preds_c.len();
                for (p, is_tp) in outcome.pred_is_tp.iter().enumerate() {
                    flags.push((preds_c[p].score, *is_tp));
                }
            }
            class_aps.push(average_precision(&flags, class_gt));
        }
        let ap = class_aps.iter().sum::<f64>() / class_aps.len() as f64;
        aps.push(ap);
        let precision = if pooled_preds == 0 {
            0.0
        } else {
            pooled_tp as f64 / pooled_preds as f64
        };
        let recall = pooled_tp as f64 / total_gt as f64;
        pr_points.push((threshold, precision, recall));
    }

    Ok(EvalReport {
        task,
        precision: pr_points[0].1,
        recall: pr_points[0].2,
        map50: aps[0],
        map50_95: aps.iter().sum::<f64>() / aps.len() as f64,
        pr_points,
    })
}

impl EvalReport {
    /// Flat `metric value` table, fixed 6-decimal formatting.
    pub fn to_table_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "task {}", self.task.as_str()).unwrap();
        writeln!(out, "precision {:.6}", self.precision).unwrap();
        writeln!(out, "recall {:.6}", self.recall).unwrap();
        writeln!(out, "mAP@50 {:.6}", self.map50).unwrap();
        writeln!(out, "mAP@50:95 {:.6}", self.map50_95).unwrap();
        for (t, p, r) in &self.pr_points {
            writeln!(out, "pr {t:.2} {p:.6} {r:.6}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Bbox {
        Bbox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    #[test]
    fn iou_basic_cases() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(5.0, 5.0, 6.0, 6.0)), 0.0);
        // Intersection 2, union 6.
        let b = bx(1.0, 0.0, 3.0, 2.0);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_degenerate_box_is_zero() {
        let a = bx(0.0, 0.0, 2.0, 2.0);
        let degenerate = bx(1.0, 1.0, 1.0, 3.0);
        assert_eq!(iou(&a, &degenerate), 0.0);
    }

    #[test]
    fn iou_symmetry_and_range() {
        let boxes = [
            bx(0.0, 0.0, 2.0, 2.0),
            bx(1.0, 1.0, 4.0, 3.0),
            bx(-1.0, -2.0, 0.5, 0.5),
        ];
        for a in &boxes {
            for b in &boxes {
                let ab = iou(a, b);
                assert!((0.0..=1.0).contains(&ab));
                assert_eq!(ab, iou(b, a));
            }
        }
    }

    #[test]
    fn oks_perfect_is_one() {
        let gt = vec![
            (Vector2::new(10.0, 10.0), 2u8),
            (Vector2::new(20.0, 20.0), 2u8),
        ];
        let pred: Vec<Vector2<f64>> = gt.iter().map(|(p, _)| *p).collect();
        let v = oks(
            &pred,
            &gt,
            &bx(0.0, 0.0, 100.0, 100.0),
            &OksParams::uniform(2, 0.05),
        )
        .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn oks_single_keypoint_spot_value() {
        // d² = 2·s²·k² → exp(−1).
        let k = 0.05;
        let bbox = bx(0.0, 0.0, 100.0, 100.0);
        let s2 = bbox.width() * bbox.height();
        let d = (2.0 * s2 * k * k).sqrt();
        let gt = vec![(Vector2::new(50.0, 50.0), 2u8)];
        let pred = vec![Vector2::new(50.0 + d, 50.0)];
        let v = oks(&pred, &gt, &bbox, &OksParams::uniform(1, k)).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn oks_scale_invariance() {
        let k = OksParams::uniform(2, 0.07);
        let gt = vec![
            (Vector2::new(10.0, 12.0), 2u8),
            (Vector2::new(30.0, 25.0), 1u8),
        ];
        let pred = vec![Vector2::new(13.0, 12.0), Vector2::new(30.0, 28.5)];
        let base = oks(&pred, &gt, &bx(5.0, 5.0, 45.0, 40.0), &k).unwrap();
        for c in [0.5, 2.0, 10.0] {
            let gt_s: Vec<_> = gt.iter().map(|(p, v)| (p * c, *v)).collect();
            let pred_s: Vec<_> = pred.iter().map(|p| p * c).collect();
            let bbox_s = bx(5.0 * c, 5.0 * c, 45.0 * c, 40.0 * c);
            let v = oks(&pred_s, &gt_s, &bbox_s, &k).unwrap();
            assert!((v - base).abs() < 1e-12, "scale {c}");
        }
    }

    #[test]
    fn oks_invisible_keypoints_are_skipped() {
        let gt = vec![
            (Vector2::new(0.0, 0.0), 2u8),
            (Vector2::new(99.0, 99.0), 0u8),
        ];
        // Second prediction is far off but its gt is invisible.
        let pred = vec![Vector2::new(0.0, 0.0), Vector2::new(0.0, 0.0)];
        let v = oks(
            &pred,
            &gt,
            &bx(0.0, 0.0, 50.0, 50.0),
            &OksParams::uniform(2, 0.05),
        )
        .unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn oks_zero_visible_is_error() {
        let gt = vec![(Vector2::new(0.0, 0.0), 0u8)];
        let pred = vec![Vector2::new(0.0, 0.0)];
        assert!(matches!(
            oks(
                &pred,
                &gt,
                &bx(0.0, 0.0, 10.0, 10.0),
                &OksParams::uniform(1, 0.05)
            ),
            Err(MetricsError::UndefinedOks)
        ));
    }

    fn pred(bbox: Bbox, score: f64) -> PredInstance {
        PredInstance {
            class: ToolClass::Bean,
            bbox,
            keypoints: vec![],
            score,
        }
    }

    fn gt(bbox: Bbox) -> GtInstance {
        GtInstance {
            class: ToolClass::Bean,
            bbox,
            keypoints: vec![],
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let g = vec![gt(bx(0.0, 0.0, 2.0, 2.0)), gt(bx(5.0, 5.0, 7.0, 7.0))];
        let p = vec![
            pred(bx(0.0, 0.0, 2.0, 2.0), 0.9),
            pred(bx(5.0, 5.0, 7.0, 7.0), 0.8),
        ];
        let out = match_and_score(&p, &g, 0.5, MatchMode::Iou, &OksConfig::default());
        assert_eq!(out.precision, Some(1.0));
        assert_eq!(out.recall, Some(1.0));
    }

    #[test]
    fn one_tp_one_fp_hand_count() {
        // 1 TP (IoU 0.9) + 1 FP (IoU 0.1) at threshold 0.5 over one gt.
        let g = vec![gt(bx(0.0, 0.0, 10.0, 10.0))];
        let p = vec![
            pred(bx(0.0, 0.0, 10.0, 9.0), 0.9),   // IoU 0.9
            pred(bx(0.0, 9.0, 10.0, 19.0), 0.8),  // IoU < 0.1
        ];
        let out = match_and_score(&p, &g, 0.5, MatchMode::Iou, &OksConfig::default());
        assert_eq!(out.true_positives, 1);
        assert_eq!(out.false_positives, 1);
        assert_eq!(out.precision, Some(0.5));
        assert_eq!(out.recall, Some(1.0));
    }

    #[test]
    fn duplicate_prediction_is_fp() {
        let g = vec![gt(bx(0.0, 0.0, 2.0, 2.0))];
        let p = vec![
            pred(bx(0.0, 0.0, 2.0, 2.0), 0.9),
            pred(bx(0.0, 0.0, 2.0, 2.0), 0.8),
        ];
        let out = match_and_score(&p, &g, 0.5, MatchMode::Iou, &OksConfig::default());
        assert_eq!(out.true_positives, 1);
        assert_eq!(out.false_positives, 1);
        assert!(out.pred_is_tp[0]);
        assert!(!out.pred_is_tp[1]);
    }

    #[test]
    fn empty_gt_flags() {
        let p = vec![pred(bx(0.0, 0.0, 2.0, 2.0), 0.9)];
        let out = match_and_score(&p, &[], 0.5, MatchMode::Iou, &OksConfig::default());
        assert_eq!(out.precision, Some(0.0));
        assert_eq!(out.recall, None);
        let out = match_and_score(&[], &[], 0.5, MatchMode::Iou, &OksConfig::default());
        assert_eq!(out.precision, None);
        assert_eq!(out.recall, None);
    }

    #[test]
    fn perfect_detector_map_is_one() {
        let samples = vec![
            (
                vec![pred(bx(0.0, 0.0, 2.0, 2.0), 0.95)],
                vec![gt(bx(0.0, 0.0, 2.0, 2.0))],
            ),
            (
                vec![pred(bx(3.0, 3.0, 5.0, 5.0), 0.9)],
                vec![gt(bx(3.0, 3.0, 5.0, 5.0))],
            ),
        ];
        let report =
            mean_average_precision(&samples, EvalTask::ObjectDetection, &OksConfig::default())
                .unwrap();
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 1.0);
        assert_eq!(report.map50, 1.0);
        assert_eq!(report.map50_95, 1.0);
        assert!(report.map50 >= report.map50_95);
    }

    #[test]
    fn iou_point_six_detector_threshold_count() {
        // Every prediction has IoU exactly 0.6: perfect at thresholds
        // 0.50/0.55/0.60, zero beyond → mAP@50:95 = 3/10.
        // Boxes: (0,0,10,6) vs (0,0,10,10): intersection 60, union 100.
        let samples = vec![(
            vec![pred(bx(0.0, 0.0, 10.0, 6.0), 0.9)],
            vec![gt(bx(0.0, 0.0, 10.0, 10.0))],
        )];
        let report =
            mean_average_precision(&samples, EvalTask::ObjectDetection, &OksConfig::default())
                .unwrap();
        assert_eq!(report.map50, 1.0);
        assert!((report.map50_95 - 0.3).abs() < 1e-12);
    }

    #[test]
    fn no_ground_truth_is_undefined() {
        let samples = vec![(vec![pred(bx(0.0, 0.0, 2.0, 2.0), 0.9)], vec![])];
        assert!(matches!(
            mean_average_precision(&samples, EvalTask::ObjectDetection, &OksConfig::default()),
            Err(MetricsError::NoGroundTruth)
        ));
    }

    #[test]
    fn map_invariant_to_prediction_order() {
        let g = vec![gt(bx(0.0, 0.0, 2.0, 2.0)), gt(bx(5.0, 5.0, 7.0, 7.0))];
        let mut p = vec![
            pred(bx(0.0, 0.0, 2.0, 1.9), 0.9),
            pred(bx(5.0, 5.0, 7.0, 6.5), 0.7),
            pred(bx(9.0, 9.0, 11.0, 11.0), 0.8),
        ];
        let a = mean_average_precision(
            &[(p.clone(), g.clone())],
            EvalTask::ObjectDetection,
            &OksConfig::default(),
        )
        .unwrap();
        p.reverse();
        let b = mean_average_precision(
            &[(p, g)],
            EvalTask::ObjectDetection,
            &OksConfig::default(),
        )
        .unwrap();
        assert_eq!(a.map50, b.map50);
        assert_eq!(a.map50_95, b.map50_95);
    }

    #[test]
    fn ap_small_corpus_hand_value() {
        // Three predictions ranked 0.9 TP, 0.8 FP, 0.7 TP over 2 gts:
        // envelope precision at recalls 0.5 and 1.0 → AP = 0.5·1 + 0.5·(2/3).
        let flags = vec![(0.9, true), (0.8, false), (0.7, true)];
        let ap = average_precision(&flags, 2);
        assert!((ap - (0.5 + 0.5 * (2.0 / 3.0))).abs() < 1e-12);
    }
}
