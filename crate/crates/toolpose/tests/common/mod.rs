//! Shared test support: independent brute-force oracles for the detection
//! metrics. Everything here recomputes from first principles with naive
//! enumeration and shares no code with the library implementations.

use toolpose::metrics::{GtInstance, PredInstance};
use toolpose::reconstruct::Bbox;

/// Rasterized IoU: count cells of a fine grid over the union's bounding
/// box. Resolution-limited, so callers compare with a small tolerance.
pub fn grid_iou(a: &Bbox, b: &Bbox, cells: usize) -> f64 {
    let x0 = a.x_min.min(b.x_min);
    let x1 = a.x_max.max(b.x_max);
    let y0 = a.y_min.min(b.y_min);
    let y1 = a.y_max.max(b.y_max);
    let mut inter = 0usize;
    let mut union = 0usize;
    for iy in 0..cells {
        let y = y0 + (y1 - y0) * (iy as f64 + 0.5) / cells as f64;
        for ix in 0..cells {
            let x = x0 + (x1 - x0) * (ix as f64 + 0.5) / cells as f64;
            let in_a = x > a.x_min && x < a.x_max && y > a.y_min && y < a.y_max;
            let in_b = x > b.x_min && x < b.x_max && y > b.y_min && y < b.y_max;
            if in_a && in_b {
                inter += 1;
            }
            if in_a || in_b {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Score matrix recomputed from first principles.
fn oracle_score(pred: &PredInstance, gt: &GtInstance, use_oks: bool, k: f64) -> f64 {
    if pred.class != gt.class {
        return f64::NEG_INFINITY;
    }
    if use_oks {
        // Direct evaluation of the OKS formula.
        let w = gt.bbox.x_max - gt.bbox.x_min;
        let h = gt.bbox.y_max - gt.bbox.y_min;
        let s2 = w * h;
        let mut sum = 0.0;
        let mut visible = 0usize;
        for (p, (g, vis)) in pred.keypoints.iter().zip(&gt.keypoints) {
            if *vis == 0 {
                continue;
            }
            visible += 1;
            let dx = p.x - g.x;
            let dy = p.y - g.y;
            sum += (-(dx * dx + dy * dy) / (2.0 * s2 * k * k)).exp();
        }
        if visible == 0 {
            return f64::NEG_INFINITY;
        }
        sum / visible as f64
    } else {
        let ix = (pred.bbox.x_max.min(gt.bbox.x_max) - pred.bbox.x_min.max(gt.bbox.x_min)).max(0.0);
        let iy = (pred.bbox.y_max.min(gt.bbox.y_max) - pred.bbox.y_min.max(gt.bbox.y_min)).max(0.0);
        let inter = ix * iy;
        let area_a = (pred.bbox.x_max - pred.bbox.x_min) * (pred.bbox.y_max - pred.bbox.y_min);
        let area_b = (gt.bbox.x_max - gt.bbox.x_min) * (gt.bbox.y_max - gt.bbox.y_min);
        let union = area_a + area_b - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Naive re-implementation of the greedy single-match protocol:
/// predictions in descending confidence, each claiming the best
/// still-free ground truth; a claim counts iff its score reaches the
/// threshold. Returns per-prediction TP flags in input order.
pub fn oracle_greedy_flags(
    preds: &[PredInstance],
    gts: &[GtInstance],
    threshold: f64,
    use_oks: bool,
    k: f64,
) -> Vec<bool> {
    let n = preds.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut free = vec![true; gts.len()];
    let mut flags = vec![false; n];
    for &p in &order {
        let mut best: Option<(usize, f64)> = None;
        for g in 0..gts.len() {
            if !free[g] {
                continue;
            }
            let s = oracle_score(&preds[p], &gts[g], use_oks, k);
            if s == f64::NEG_INFINITY {
                continue;
            }
            if best.map_or(true, |(_, bs)| s > bs) {
                best = Some((g, s));
            }
        }
        if let Some((g, s)) = best {
            if s >= threshold {
                free[g] = false;
                flags[p] = true;
            }
        }
    }
    flags
}

/// Exhaustive maximum matching: enumerate every injective assignment of
/// predictions to ground truths (4×4 at most) and count the largest
/// number of pairs scoring at or above the threshold.
pub fn oracle_max_matching(
    preds: &[PredInstance],
    gts: &[GtInstance],
    threshold: f64,
    use_oks: bool,
    k: f64,
) -> usize {
    fn recurse(
        p: usize,
        preds: &[PredInstance],
        gts: &[GtInstance],
        free: &mut Vec<bool>,
        threshold: f64,
        use_oks: bool,
        k: f64,
    ) -> usize {
        if p == preds.len() {
            return 0;
        }
        // Leave this prediction unmatched...
        let mut best = recurse(p + 1, preds, gts, free, threshold, use_oks, k);
        // ...or match it to any free gt above threshold.
        for g in 0..gts.len() {
            if !free[g] {
                continue;
            }
            if oracle_score(&preds[p], &gts[g], use_oks, k) >= threshold {
                free[g] = false;
                best = best.max(1 + recurse(p + 1, preds, gts, free, threshold, use_oks, k));
                free[g] = true;
            }
        }
        best
    }
    let mut free = vec![true; gts.len()];
    recurse(0, preds, gts, &mut free, threshold, use_oks, k)
}

/// Naive all-points average precision: for each recall level reached,
/// scan every ranked prefix for the maximum precision at recall ≥ r.
/// O(n²), no envelope trick.
pub fn oracle_average_precision(flags_by_rank: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let n = flags_by_rank.len();
    let mut precisions = Vec::with_capacity(n);
    let mut recalls = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (i, &f) in flags_by_rank.iter().enumerate() {
        if f {
            tp += 1;
        }
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        if recalls[i] > prev {
            let mut p_max = 0.0f64;
            for j in 0..n {
                if recalls[j] >= recalls[i] {
                    p_max = p_max.max(precisions[j]);
                }
            }
            ap += (recalls[i] - prev) * p_max;
            prev = recalls[i];
        }
    }
    ap
}
