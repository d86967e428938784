//! Detection scoring: center-distance matching, per-class average precision
//! over distance thresholds, true-positive error metrics at 2 m, and the
//! composite detection score.
//!
//! Matching is greedy per frame: predictions in score order each take the
//! nearest unmatched same-class ground truth within the distance threshold.
//! AP samples the cumulative precision/recall curve at 101 uniform recall
//! points, drops samples below 10% recall, subtracts a 10% precision floor
//! (clamped at zero), and normalizes by 0.9. The composite score is
//! `(5*mAP + sum(1 - min(1, mTP))) / 10`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{aligned_iou_3d, center_distance_2d, yaw_diff, Box3D, DetClass};

/// Number of uniform recall samples on the PR curve.
pub const RECALL_SAMPLES: usize = 101;
/// Recall floor: samples below are discarded.
pub const MIN_RECALL: f64 = 0.1;
/// Precision floor subtracted from every sample.
pub const MIN_PRECISION: f64 = 0.1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Center-distance matching thresholds, meters.
    pub dist_thresholds: Vec<f64>,
    /// Matching threshold for the TP error metrics.
    pub tp_dist: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            dist_thresholds: vec![0.5, 1.0, 2.0, 3.0],
            tp_dist: 2.0,
        }
    }
}

/// Matches for one (frame, class, threshold) cell.
#[derive(Debug, Clone)]
pub struct MatchSet {
    pub class: DetClass,
    pub dist_thresh: f64,
    /// Class predictions, score descending (ties keep input order).
    pub preds: Vec<Box3D>,
    /// Per prediction, the index of its ground truth in `gts`.
    pub matched_gt: Vec<Option<usize>>,
    /// Class ground truths, input order.
    pub gts: Vec<Box3D>,
}

impl MatchSet {
    pub fn gt_count(&self) -> usize {
        self.gts.len()
    }

    pub fn average_precision(&self) -> f64 {
        let records: Vec<(f64, bool)> = self
            .preds
            .iter()
            .zip(&self.matched_gt)
            .map(|(p, m)| (p.score, m.is_some()))
            .collect();
        average_precision_from(&records, self.gt_count())
    }
}

/// Greedy matching of one frame's predictions of `class` against its ground
/// truths: score order, nearest unmatched ground truth strictly within `d`,
/// distance ties broken by ground-truth index.
pub fn match_predictions(preds: &[Box3D], gts: &[Box3D], class: DetClass, d: f64) -> MatchSet {
    let mut preds: Vec<Box3D> = preds.iter().filter(|b| b.class == class).cloned().collect();
    preds.sort_by(|a, b| b.score.total_cmp(&a.score));
    let gts: Vec<Box3D> = gts.iter().filter(|b| b.class == class).cloned().collect();

    let mut taken = vec![false; gts.len()];
    let mut matched_gt = Vec::with_capacity(preds.len());
    for pred in &preds {
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let dist = center_distance_2d(pred, gt);
            if dist < d && best.map_or(true, |(_, bd)| dist < bd) {
                best = Some((gi, dist));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
            matched_gt.push(Some(gi));
        } else {
            matched_gt.push(None);
        }
    }
    MatchSet {
        class,
        dist_thresh: d,
        preds,
        matched_gt,
        gts,
    }
}

/// AP from score-ordered `(score, matched)` records.
pub fn average_precision_from(records: &[(f64, bool)], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    let samples = sample_precision(records, gt_count);
    let kept = &samples[10..]; // recall >= 0.1
    let adjusted: f64 = kept.iter().map(|p| (p - MIN_PRECISION).max(0.0)).sum();
    adjusted / kept.len() as f64 / (1.0 - MIN_PRECISION)
}

/// Precision at each of the 101 uniform recall points: the precision of the
/// first cumulative curve point whose recall reaches the sample, zero where
/// the curve never does.
pub fn sample_precision(records: &[(f64, bool)], gt_count: usize) -> Vec<f64> {
    let mut curve = Vec::with_capacity(records.len());
    let mut tp = 0usize;
    for (k, &(_, matched)) in records.iter().enumerate() {
        if matched {
            tp += 1;
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / gt_count as f64;
        curve.push((recall, precision));
    }
    let mut out = Vec::with_capacity(RECALL_SAMPLES);
    let mut k = 0usize;
    for i in 0..RECALL_SAMPLES {
        let r = i as f64 / (RECALL_SAMPLES - 1) as f64;
        while k < curve.len() && curve[k].0 < r {
            k += 1;
        }
        out.push(if k < curve.len() { curve[k].1 } else { 0.0 });
    }
    out
}

/// The five TP error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpMetrics {
    /// Mean ground-plane center distance, meters.
    pub ate: f64,
    /// Mean `1 - IoU` after center and yaw alignment.
    pub ase: f64,
    /// Mean absolute yaw difference, radians.
    pub aoe: f64,
    /// Mean velocity error (L2), m/s.
    pub ave: f64,
    /// `1 -` attribute accuracy.
    pub aae: f64,
}

impl TpMetrics {
    /// The defined value when a class has no matches.
    pub fn no_matches() -> Self {
        Self {
            ate: 1.0,
            ase: 1.0,
            aoe: 1.0,
            ave: 1.0,
            aae: 1.0,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.ate, self.ase, self.aoe, self.ave, self.aae]
    }
}

/// Error components of one matched prediction/ground-truth pair.
#[derive(Debug, Clone, Copy)]
pub struct PairError {
    pub trans: f64,
    pub scale: f64,
    pub orient: f64,
    pub vel: f64,
    pub attr_correct: bool,
}

pub fn pair_error(pred: &Box3D, gt: &Box3D) -> PairError {
    PairError {
        trans: center_distance_2d(pred, gt),
        scale: 1.0 - aligned_iou_3d(pred, gt),
        orient: yaw_diff(pred.yaw, gt.yaw),
        vel: (pred.vx - gt.vx).hypot(pred.vy - gt.vy),
        attr_correct: pred.attribute == gt.attribute,
    }
}

/// Plain means of the pair errors; all metrics are 1 when nothing matched.
pub fn tp_metrics_from_pairs(pairs: &[PairError]) -> TpMetrics {
    if pairs.is_empty() {
        return TpMetrics::no_matches();
    }
    let n = pairs.len() as f64;
    let correct = pairs.iter().filter(|p| p.attr_correct).count() as f64;
    TpMetrics {
        ate: pairs.iter().map(|p| p.trans).sum::<f64>() / n,
        ase: pairs.iter().map(|p| p.scale).sum::<f64>() / n,
        aoe: pairs.iter().map(|p| p.orient).sum::<f64>() / n,
        ave: pairs.iter().map(|p| p.vel).sum::<f64>() / n,
        aae: 1.0 - correct / n,
    }
}

/// TP metrics of one match set (intended at the 2 m threshold).
pub fn tp_metrics(ms: &MatchSet) -> TpMetrics {
    let pairs: Vec<PairError> = ms
        .preds
        .iter()
        .zip(&ms.matched_gt)
        .filter_map(|(p, m)| m.map(|gi| pair_error(p, &ms.gts[gi])))
        .collect();
    tp_metrics_from_pairs(&pairs)
}

/// Composite detection score, each mean TP error clamped at 1.
pub fn nds(mean_ap: f64, mean_tps: &[f64; 5]) -> f64 {
    let tp_sum: f64 = mean_tps.iter().map(|&tp| 1.0 - tp.min(1.0)).sum();
    (5.0 * mean_ap + tp_sum) / 10.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

/// Full evaluation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Classes present in the ground truth (others are not scored).
    pub classes: Vec<String>,
    pub dist_thresholds: Vec<f64>,
    /// `ap[class][threshold]`.
    pub ap: BTreeMap<String, BTreeMap<String, f64>>,
    pub tp_metrics: BTreeMap<String, TpMetrics>,
    pub mean_ap: f64,
    pub mean_ate: f64,
    pub mean_ase: f64,
    pub mean_aoe: f64,
    pub mean_ave: f64,
    pub mean_aae: f64,
    pub nds: f64,
    /// Sampled PR curves per class and threshold.
    pub pr_curves: BTreeMap<String, BTreeMap<String, PrCurve>>,
}

fn thresh_key(d: f64) -> String {
    format!("{d}")
}

/// Scores predictions against ground truth over every frame.
///
/// Frames are the union of both maps' keys; the class set is whatever the
/// ground truth contains. Per (class, threshold), per-frame match records
/// pool into one global score-ordered curve.
pub fn evaluate(
    preds: &BTreeMap<String, Vec<Box3D>>,
    gts: &BTreeMap<String, Vec<Box3D>>,
    cfg: &EvalConfig,
) -> EvalReport {
    let classes: Vec<DetClass> = {
        let mut present = [false; 10];
        for boxes in gts.values() {
            for b in boxes {
                present[b.class.index()] = true;
            }
        }
        DetClass::ALL
            .iter()
            .copied()
            .filter(|c| present[c.index()])
            .collect()
    };

    let empty: Vec<Box3D> = Vec::new();
    let frames: Vec<&String> = {
        let mut keys: Vec<&String> = preds.keys().chain(gts.keys()).collect();
        keys.sort();
        keys.dedup();
        keys
    };

    // per frame, per class, per threshold: records and (at tp_dist) pair errors
    type FrameCell = (Vec<(f64, bool)>, usize, Vec<PairError>);
    let per_frame: Vec<Vec<Vec<FrameCell>>> = frames
        .par_iter()
        .map(|frame_id| {
            let frame_preds = preds.get(*frame_id).unwrap_or(&empty);
            let frame_gts = gts.get(*frame_id).unwrap_or(&empty);
            classes
                .iter()
                .map(|&class| {
                    cfg.dist_thresholds
                        .iter()
                        .map(|&d| {
                            let ms = match_predictions(frame_preds, frame_gts, class, d);
                            let records: Vec<(f64, bool)> = ms
                                .preds
                                .iter()
                                .zip(&ms.matched_gt)
                                .map(|(p, m)| (p.score, m.is_some()))
                                .collect();
                            let pairs: Vec<PairError> = if d == cfg.tp_dist {
                                ms.preds
                                    .iter()
                                    .zip(&ms.matched_gt)
                                    .filter_map(|(p, m)| m.map(|gi| pair_error(p, &ms.gts[gi])))
                                    .collect()
                            } else {
                                Vec::new()
                            };
                            (records, ms.gt_count(), pairs)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut ap = BTreeMap::new();
    let mut pr_curves = BTreeMap::new();
    let mut tp_table = BTreeMap::new();
    let mut ap_values = Vec::new();
    let mut tp_sums = [0.0f64; 5];

    for (ci, &class) in classes.iter().enumerate() {
        let mut class_ap = BTreeMap::new();
        let mut class_pr = BTreeMap::new();
        for (di, &d) in cfg.dist_thresholds.iter().enumerate() {
            let mut records: Vec<(f64, bool)> = Vec::new();
            let mut gt_count = 0usize;
            for frame in &per_frame {
                let (recs, gts_n, _) = &frame[ci][di];
                records.extend_from_slice(recs);
                gt_count += gts_n;
            }
            records.sort_by(|a, b| b.0.total_cmp(&a.0));
            let value = average_precision_from(&records, gt_count);
            ap_values.push(value);
            class_ap.insert(thresh_key(d), value);
            let precision = sample_precision(&records, gt_count.max(1));
            let recall = (0..RECALL_SAMPLES)
                .map(|i| i as f64 / (RECALL_SAMPLES - 1) as f64)
                .collect();
            class_pr.insert(
                thresh_key(d),
                PrCurve {
                    recall,
                    precision,
                },
            );
        }
        ap.insert(class.name().to_string(), class_ap);
        pr_curves.insert(class.name().to_string(), class_pr);

        let tp_di = cfg
            .dist_thresholds
            .iter()
            .position(|&d| d == cfg.tp_dist);
        let pairs: Vec<PairError> = match tp_di {
            Some(di) => per_frame
                .iter()
                .flat_map(|frame| frame[ci][di].2.iter().copied())
                .collect(),
            None => Vec::new(),
        };
        let metrics = tp_metrics_from_pairs(&pairs);
        for (sum, v) in tp_sums.iter_mut().zip(metrics.as_array()) {
            *sum += v;
        }
        tp_table.insert(class.name().to_string(), metrics);
    }

    let n_cells = ap_values.len().max(1) as f64;
    let mean_ap = ap_values.iter().sum::<f64>() / n_cells;
    let n_classes = classes.len().max(1) as f64;
    let mean_tps = [
        tp_sums[0] / n_classes,
        tp_sums[1] / n_classes,
        tp_sums[2] / n_classes,
        tp_sums[3] / n_classes,
        tp_sums[4] / n_classes,
    ];
    let score = nds(mean_ap, &mean_tps);

    EvalReport {
        classes: classes.iter().map(|c| c.name().to_string()).collect(),
        dist_thresholds: cfg.dist_thresholds.clone(),
        ap,
        tp_metrics: tp_table,
        mean_ap,
        mean_ate: mean_tps[0],
        mean_ase: mean_tps[1],
        mean_aoe: mean_tps[2],
        mean_ave: mean_tps[3],
        mean_aae: mean_tps[4],
        nds: score,
        pr_curves,
    }
}

/// Plain mean over a complete `class x threshold` AP table.
pub fn map_score(
    ap: &BTreeMap<String, BTreeMap<String, f64>>,
    classes: &[String],
    thresholds: &[f64],
) -> Result<f64, crate::error::Error> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for class in classes {
        let row = ap
            .get(class)
            .ok_or_else(|| crate::error::Error::invalid(format!("missing AP row for {class}")))?;
        for &d in thresholds {
            let cell = row.get(&thresh_key(d)).ok_or_else(|| {
                crate::error::Error::invalid(format!("missing AP cell {class}@{d}"))
            })?;
            sum += cell;
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn gt_at(cx: f64, cy: f64, class: DetClass) -> Box3D {
        Box3D::gt(cx, cy, 0.0, 4.0, 2.0, 1.5, 0.0, class)
    }

    fn pred_at(cx: f64, cy: f64, score: f64, class: DetClass) -> Box3D {
        let mut b = gt_at(cx, cy, class);
        b.score = score;
        b
    }

    #[test]
    fn exact_pred_matches_at_every_threshold() {
        let gts = vec![gt_at(5.0, 5.0, DetClass::Car)];
        let preds = vec![pred_at(5.0, 5.0, 0.9, DetClass::Car)];
        for d in [0.5, 1.0, 2.0, 3.0] {
            let ms = match_predictions(&preds, &gts, DetClass::Car, d);
            assert_eq!(ms.matched_gt, vec![Some(0)]);
        }
    }

    #[test]
    fn threshold_is_strict() {
        let gts = vec![gt_at(0.0, 0.0, DetClass::Car)];
        let preds = vec![pred_at(1.5, 0.0, 0.9, DetClass::Car)];
        for (d, expect) in [(0.5, false), (1.0, false), (1.5, false), (2.0, true), (3.0, true)] {
            let ms = match_predictions(&preds, &gts, DetClass::Car, d);
            assert_eq!(ms.matched_gt[0].is_some(), expect, "d = {d}");
        }
    }

    #[test]
    fn higher_score_takes_the_gt() {
        let gts = vec![gt_at(0.0, 0.0, DetClass::Car)];
        let preds = vec![
            pred_at(0.3, 0.0, 0.5, DetClass::Car),
            pred_at(0.2, 0.0, 0.9, DetClass::Car),
        ];
        let ms = match_predictions(&preds, &gts, DetClass::Car, 2.0);
        // sorted by score: the 0.9 one first
        assert_relative_eq!(ms.preds[0].score, 0.9);
        assert_eq!(ms.matched_gt, vec![Some(0), None]);
    }

    #[test]
    fn class_filter_applies() {
        let gts = vec![gt_at(0.0, 0.0, DetClass::Car)];
        let preds = vec![pred_at(0.0, 0.0, 0.9, DetClass::Truck)];
        let ms = match_predictions(&preds, &gts, DetClass::Car, 2.0);
        assert!(ms.preds.is_empty());
        assert_eq!(ms.gt_count(), 1);
    }

    #[test]
    fn ap_perfect_detector() {
        let records = vec![(0.9, true), (0.8, true)];
        assert_relative_eq!(average_precision_from(&records, 2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn ap_no_predictions_or_no_gt() {
        assert_eq!(average_precision_from(&[], 2), 0.0);
        assert_eq!(average_precision_from(&[(0.9, false)], 0), 0.0);
    }

    #[test]
    fn ap_hand_example() {
        // 2 gts; preds: TP(0.9), FP(0.8), TP(0.7)
        // curve: (0.5, 1), (0.5, 0.5), (1, 2/3)
        // samples r in [0.1, 0.5] -> 1 (41 points), r in (0.5, 1] -> 2/3 (50 points)
        let records = vec![(0.9, true), (0.8, false), (0.7, true)];
        let expect = (41.0 * 0.9 + 50.0 * (2.0 / 3.0 - 0.1)) / 91.0 / 0.9;
        assert_relative_eq!(average_precision_from(&records, 2), expect, epsilon = 1e-12);
    }

    #[test]
    fn tp_metrics_identical_pair_is_zero() {
        let gts = vec![gt_at(1.0, 2.0, DetClass::Car)];
        let preds = vec![pred_at(1.0, 2.0, 1.0, DetClass::Car)];
        let ms = match_predictions(&preds, &gts, DetClass::Car, 2.0);
        let m = tp_metrics(&ms);
        assert_eq!(m.as_array(), [0.0; 5]);
    }

    #[test]
    fn tp_metrics_velocity_and_scale() {
        let mut gt = gt_at(0.0, 0.0, DetClass::Car);
        gt.vx = 0.0;
        gt.vy = 0.0;
        let mut pred = pred_at(0.0, 0.0, 1.0, DetClass::Car);
        pred.vx = 3.0;
        pred.vy = 4.0;
        let ms = match_predictions(&[pred], &[gt], DetClass::Car, 2.0);
        let m = tp_metrics(&ms);
        assert_relative_eq!(m.ave, 5.0, epsilon = 1e-12);

        let gt2 = Box3D::gt(0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 0.0, DetClass::Car);
        let mut pred2 = Box3D::gt(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, DetClass::Car);
        pred2.score = 0.9;
        let ms2 = match_predictions(&[pred2], &[gt2], DetClass::Car, 2.0);
        assert_relative_eq!(tp_metrics(&ms2).ase, 0.875, epsilon = 1e-12);
    }

    #[test]
    fn tp_metrics_no_matches_is_one() {
        let ms = match_predictions(&[], &[gt_at(0.0, 0.0, DetClass::Car)], DetClass::Car, 2.0);
        assert_eq!(tp_metrics(&ms), TpMetrics::no_matches());
    }

    #[test]
    fn nds_formula() {
        assert_relative_eq!(nds(1.0, &[0.0; 5]), 1.0);
        // published row: mAP 20.67, errors (0.527, 0.286, 1.10, 2.23, 0.284)
        let score = nds(0.2067, &[0.527, 0.286, 1.10, 2.23, 0.284]);
        assert_relative_eq!(score, 0.29365, epsilon = 1e-9);
        // a TP error of 1.40 clamps to zero contribution
        let base = nds(0.5, &[1.0, 1.0, 1.0, 1.0, 1.0]);
        let clamped = nds(0.5, &[1.40, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(base, clamped);
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let mut gts = BTreeMap::new();
        gts.insert(
            "f0".to_string(),
            vec![gt_at(0.0, 0.0, DetClass::Car), gt_at(20.0, 0.0, DetClass::Pedestrian)],
        );
        let cfg = EvalConfig::default();

        let preds = gts.clone();
        let report = evaluate(&preds, &gts, &cfg);
        assert_relative_eq!(report.mean_ap, 1.0, epsilon = 1e-12);
        assert_relative_eq!(report.nds, 1.0, epsilon = 1e-12);
        assert_eq!(report.classes, vec!["car", "pedestrian"]);

        let report = evaluate(&BTreeMap::new(), &gts, &cfg);
        assert_eq!(report.mean_ap, 0.0);
        assert_eq!(report.mean_ate, 1.0);
        assert_eq!(report.nds, 0.0);
    }

    #[test]
    fn map_score_means_and_errors() {
        let mut gts = BTreeMap::new();
        gts.insert("f0".to_string(), vec![gt_at(0.0, 0.0, DetClass::Car)]);
        let report = evaluate(&gts.clone(), &gts, &EvalConfig::default());
        let m = map_score(&report.ap, &report.classes, &report.dist_thresholds).unwrap();
        assert_relative_eq!(m, report.mean_ap, epsilon = 1e-12);
        assert!(map_score(&report.ap, &["bus".to_string()], &[0.5]).is_err());
    }

    #[test]
    fn ap_monotone_in_threshold() {
        let gts = vec![gt_at(0.0, 0.0, DetClass::Car), gt_at(10.0, 0.0, DetClass::Car)];
        let preds = vec![
            pred_at(0.8, 0.0, 0.9, DetClass::Car),
            pred_at(10.4, 0.3, 0.7, DetClass::Car),
            pred_at(-2.4, 0.0, 0.6, DetClass::Car),
        ];
        let mut prev = 0.0;
        for d in [0.5, 1.0, 2.0, 3.0] {
            let ms = match_predictions(&preds, &gts, DetClass::Car, d);
            let ap = ms.average_precision();
            assert!(ap + 1e-12 >= prev, "AP decreased at d = {d}");
            prev = ap;
        }
    }
}
