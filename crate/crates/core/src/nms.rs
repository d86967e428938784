//! Greedy non-maximum suppression with yaw-aware BEV IoU, per class group
//! and then across groups.
//!
//! The multi-group pipeline: split detections by group; per group apply the
//! score filter, keep the top-k by score, suppress at the in-group IoU
//! threshold, and cap the survivors; then run a class-agnostic pass over the
//! merged pool at the cross-group threshold. Ties in score always break by
//! original index, so the whole pipeline is deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, Box3D};
use crate::sampling::GroupMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsConfig {
    pub score_thresh: f64,
    pub iou_in_group: f64,
    pub iou_cross_group: f64,
    pub pre_nms_top_k: usize,
    pub max_per_group: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            score_thresh: 0.1,
            iou_in_group: 0.2,
            iou_cross_group: 0.3,
            pre_nms_top_k: 1000,
            max_per_group: 80,
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("score_thresh", self.score_thresh),
            ("iou_in_group", self.iou_in_group),
            ("iou_cross_group", self.iou_cross_group),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.pre_nms_top_k == 0 || self.max_per_group == 0 {
            return Err(Error::config("top-k and per-group cap must be positive"));
        }
        Ok(())
    }
}

/// Sorts candidate positions by score descending, index ascending.
fn score_order(boxes: &[Box3D], candidates: &mut Vec<usize>) {
    candidates.sort_by(|&a, &b| {
        boxes[b]
            .score
            .total_cmp(&boxes[a].score)
            .then(a.cmp(&b))
    });
}

/// Greedy suppression over one list. Returns kept indices in keep order
/// (score descending).
pub fn nms(boxes: &[Box3D], iou_thresh: f64, score_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..boxes.len())
        .filter(|&i| boxes[i].score >= score_thresh)
        .collect();
    score_order(boxes, &mut order);
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if kept.iter().all(|&k| bev_iou(&boxes[i], &boxes[k]) < iou_thresh) {
            kept.push(i);
        }
    }
    kept
}

/// Per-group filtering, suppression, and caps, then a class-agnostic pass
/// across the merged pool. Output is sorted by score descending.
pub fn multi_group_nms(dets: &[Box3D], groups: &GroupMap, cfg: &NmsConfig) -> Vec<Box3D> {
    // split, remembering original positions
    let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); groups.group_count()];
    for (i, det) in dets.iter().enumerate() {
        by_group[groups.group_of(det.class)].push(i);
    }

    let mut merged: Vec<usize> = Vec::new();
    for mut members in by_group {
        members.retain(|&i| dets[i].score >= cfg.score_thresh);
        score_order(dets, &mut members);
        members.truncate(cfg.pre_nms_top_k);
        let mut kept: Vec<usize> = Vec::new();
        for i in members {
            if kept.len() == cfg.max_per_group {
                break;
            }
            if kept
                .iter()
                .all(|&k| bev_iou(&dets[i], &dets[k]) < cfg.iou_in_group)
            {
                kept.push(i);
            }
        }
        merged.extend(kept);
    }

    // cross-group pass over the merged pool
    score_order(dets, &mut merged);
    let mut kept: Vec<usize> = Vec::new();
    for i in merged {
        if kept
            .iter()
            .all(|&k| bev_iou(&dets[i], &dets[k]) < cfg.iou_cross_group)
        {
            kept.push(i);
        }
    }
    kept.into_iter().map(|i| dets[i].clone()).collect()
}
