//! Synthetic scene and dataset generation: a desk-scale stand-in for a real
//! recording.
//!
//! Frames get randomly placed non-overlapping boxes with points sampled
//! inside them plus ground clutter, so every annotation contains at least
//! one point by construction. Optionally emits jittered predictions
//! (duplicates, false positives, dropped objects) for exercising
//! suppression and scoring. Everything is a pure function of the seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{
    save_annotation_boxes, save_detections, save_eval_gts, save_manifest, FrameEntry, Manifest,
    SweepEntry,
};
use crate::error::Result;
use crate::geometry::{bev_iou, normalize_yaw, Box3D, DetClass};
use crate::pointcloud::{save_pointcloud, PointCloud, Pose};

/// Typical (l, w, h) per class, meters.
fn class_dims(class: DetClass) -> [f64; 3] {
    match class {
        DetClass::Car => [4.6, 1.95, 1.7],
        DetClass::Truck => [7.0, 2.5, 2.8],
        DetClass::ConstructionVehicle => [6.0, 2.8, 3.2],
        DetClass::Bus => [11.0, 2.9, 3.4],
        DetClass::Trailer => [12.0, 2.9, 3.8],
        DetClass::Barrier => [2.5, 0.5, 1.0],
        DetClass::Motorcycle => [2.1, 0.8, 1.5],
        DetClass::Bicycle => [1.7, 0.6, 1.3],
        DetClass::Pedestrian => [0.73, 0.67, 1.76],
        DetClass::TrafficCone => [0.41, 0.41, 1.07],
    }
}

fn moves(class: DetClass) -> bool {
    !matches!(class, DetClass::Barrier | DetClass::TrafficCone)
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub n_frames: usize,
    pub seed: u64,
    pub objects_per_frame: [usize; 2],
    pub clutter_points: usize,
    pub sweeps_per_frame: usize,
    /// Relative class frequencies; imbalanced by default.
    pub class_weights: Vec<(DetClass, f64)>,
    pub with_predictions: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_frames: 10,
            seed: 0,
            objects_per_frame: [3, 8],
            clutter_points: 400,
            sweeps_per_frame: 0,
            class_weights: vec![
                (DetClass::Car, 0.45),
                (DetClass::Pedestrian, 0.15),
                (DetClass::Barrier, 0.10),
                (DetClass::TrafficCone, 0.08),
                (DetClass::Truck, 0.08),
                (DetClass::Bus, 0.04),
                (DetClass::Trailer, 0.03),
                (DetClass::Motorcycle, 0.03),
                (DetClass::Bicycle, 0.02),
                (DetClass::ConstructionVehicle, 0.02),
            ],
            with_predictions: false,
        }
    }
}

fn pick_class(weights: &[(DetClass, f64)], rng: &mut impl Rng) -> DetClass {
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut draw = rng.random_range(0.0..total);
    for &(class, w) in weights {
        if draw < w {
            return class;
        }
        draw -= w;
    }
    weights.last().map(|&(c, _)| c).unwrap_or(DetClass::Car)
}

/// One synthetic keyframe: boxes, interior points, and ground clutter.
pub fn synth_scene(cfg: &SynthConfig, rng: &mut impl Rng) -> (PointCloud, Vec<Box3D>) {
    let ground = -1.6;
    let n_objects = rng.random_range(cfg.objects_per_frame[0]..=cfg.objects_per_frame[1]);
    let mut boxes: Vec<Box3D> = Vec::new();
    for _ in 0..n_objects {
        let class = pick_class(&cfg.class_weights, rng);
        let [l0, w0, h0] = class_dims(class);
        let f = rng.random_range(0.85..1.15);
        let (l, w, h) = (l0 * f, w0 * f, h0 * f);
        // rejection-sample a collision-free placement
        let mut placed = None;
        for _ in 0..30 {
            let mut b = Box3D::gt(
                rng.random_range(-38.0..38.0),
                rng.random_range(-38.0..38.0),
                ground + h / 2.0,
                l,
                w,
                h,
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
                class,
            );
            if moves(class) {
                let normal = Normal::new(0.0, 2.0).unwrap();
                b.vx = normal.sample(rng);
                b.vy = normal.sample(rng);
            }
            b.attribute = Some(rng.random_range(0..4u32));
            if boxes.iter().all(|other| bev_iou(&b, other) == 0.0) {
                placed = Some(b);
                break;
            }
        }
        if let Some(b) = placed {
            boxes.push(b);
        }
    }

    let mut pc = PointCloud::default();
    for b in &boxes {
        let n_points = rng.random_range(8..=40);
        let (sin, cos) = b.yaw.sin_cos();
        for _ in 0..n_points {
            let fx = rng.random_range(-0.5..0.5) * b.l;
            let fy = rng.random_range(-0.5..0.5) * b.w;
            let fz = rng.random_range(-0.5..0.5) * b.h;
            pc.push(
                (b.cx + fx * cos - fy * sin) as f32,
                (b.cy + fx * sin + fy * cos) as f32,
                (b.cz + fz) as f32,
                rng.random_range(0.0..1.0),
                0.0,
            );
        }
    }
    for _ in 0..cfg.clutter_points {
        pc.push(
            rng.random_range(-45.0..45.0),
            rng.random_range(-45.0..45.0),
            (ground + rng.random_range(0.0..0.4)) as f32,
            rng.random_range(0.0..1.0),
            0.0,
        );
    }
    (pc, boxes)
}

/// Jittered predictions for one frame's ground truth: kept objects get a
/// noisy copy and possibly overlapping duplicates, plus a few false
/// positives and sub-threshold noise detections.
pub fn perturb_predictions(gts: &[Box3D], cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Box3D> {
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let vel_jitter = Normal::new(0.0, 0.5).unwrap();
    let yaw_jitter = Normal::new(0.0, 0.15).unwrap();
    let mut preds = Vec::new();
    for gt in gts {
        if rng.random_bool(0.85) {
            let copies = 1 + rng.random_range(0..=2);
            for c in 0..copies {
                let mut p = gt.clone();
                p.cx += jitter.sample(rng);
                p.cy += jitter.sample(rng);
                p.cz += 0.3 * jitter.sample(rng);
                let df = rng.random_range(0.9..1.1);
                p.l *= df;
                p.w *= df;
                p.h *= df;
                p.yaw = normalize_yaw(p.yaw + yaw_jitter.sample(rng));
                p.vx += vel_jitter.sample(rng);
                p.vy += vel_jitter.sample(rng);
                if !rng.random_bool(0.85) {
                    p.attribute = Some(rng.random_range(0..4u32));
                }
                p.score = if c == 0 {
                    rng.random_range(0.4..0.95)
                } else {
                    rng.random_range(0.15..0.6)
                };
                preds.push(p);
            }
        }
    }
    // false positives at random spots
    for _ in 0..rng.random_range(0..=3) {
        let class = pick_class(&cfg.class_weights, rng);
        let [l, w, h] = class_dims(class);
        let mut p = Box3D::gt(
            rng.random_range(-38.0..38.0),
            rng.random_range(-38.0..38.0),
            -1.6 + h / 2.0,
            l,
            w,
            h,
            rng.random_range(-3.0..3.0),
            class,
        );
        p.attribute = Some(rng.random_range(0..4u32));
        p.score = rng.random_range(0.1..0.5);
        preds.push(p);
    }
    // noise under the usual score threshold
    for _ in 0..rng.random_range(0..=2) {
        let mut p = preds
            .first()
            .cloned()
            .unwrap_or_else(|| Box3D::gt(0.0, 0.0, -0.7, 4.0, 2.0, 1.6, 0.0, DetClass::Car));
        p.cx += jitter.sample(rng);
        p.score = rng.random_range(0.01..0.09);
        preds.push(p);
    }
    preds
}

/// In-memory evaluation scenario: per-frame ground truths and predictions.
pub fn synth_eval_scenario(
    n_frames: usize,
    seed: u64,
) -> (
    BTreeMap<String, Vec<Box3D>>,
    BTreeMap<String, Vec<Box3D>>,
) {
    let cfg = SynthConfig {
        n_frames,
        seed,
        clutter_points: 0,
        ..SynthConfig::default()
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut preds = BTreeMap::new();
    let mut gts = BTreeMap::new();
    for f in 0..n_frames {
        let frame_id = format!("frame_{f:06}");
        let (_, frame_gts) = synth_scene(&cfg, &mut rng);
        let frame_preds = perturb_predictions(&frame_gts, &cfg, &mut rng);
        gts.insert(frame_id.clone(), frame_gts);
        preds.insert(frame_id, frame_preds);
    }
    (preds, gts)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthSummary {
    pub frames: usize,
    pub boxes: usize,
    pub points: usize,
}

/// Writes a full dataset directory: `clouds/`, `anns/`, `manifest.json`,
/// `gts.json`, and (optionally) `preds.json`.
pub fn synth_dataset(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<SynthSummary> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir.join("clouds"))?;
    fs::create_dir_all(out_dir.join("anns"))?;
    if cfg.sweeps_per_frame > 0 {
        fs::create_dir_all(out_dir.join("sweeps"))?;
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut gts: BTreeMap<String, Vec<Box3D>> = BTreeMap::new();
    let mut preds: BTreeMap<String, Vec<Box3D>> = BTreeMap::new();
    let mut summary = SynthSummary::default();

    for f in 0..cfg.n_frames {
        let frame_id = format!("frame_{f:06}");
        let timestamp = f as f64 * 0.5;
        let (pc, boxes) = synth_scene(cfg, &mut rng);
        let cloud_rel = format!("clouds/{frame_id}.pcb");
        let ann_rel = format!("anns/{frame_id}.json");
        save_pointcloud(&pc, out_dir.join(&cloud_rel))?;
        save_annotation_boxes(&boxes, out_dir.join(&ann_rel))?;

        let mut sweeps = Vec::with_capacity(cfg.sweeps_per_frame);
        for s in 0..cfg.sweeps_per_frame {
            let sweep_rel = format!("sweeps/{frame_id}_{s}.pcb");
            let mut sweep_pc = PointCloud::default();
            for _ in 0..cfg.clutter_points.min(100) {
                sweep_pc.push(
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-40.0..40.0),
                    rng.random_range(-2.0..0.0),
                    rng.random_range(0.0..1.0),
                    0.0,
                );
            }
            save_pointcloud(&sweep_pc, out_dir.join(&sweep_rel))?;
            let pose = Pose::rigid_2d(
                rng.random_range(-0.02..0.02),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
                0.0,
            );
            sweeps.push(SweepEntry {
                cloud: sweep_rel,
                timestamp: timestamp - 0.05 * (s + 1) as f64,
                pose: pose.to_row_major().to_vec(),
            });
        }

        if cfg.with_predictions {
            preds.insert(frame_id.clone(), perturb_predictions(&boxes, cfg, &mut rng));
        }
        summary.frames += 1;
        summary.boxes += boxes.len();
        summary.points += pc.len();
        gts.insert(frame_id.clone(), boxes);
        frames.push(FrameEntry {
            frame_id,
            timestamp,
            cloud: cloud_rel,
            annotations: ann_rel,
            sweeps,
        });
    }

    save_manifest(&Manifest { frames }, out_dir.join("manifest.json"))?;
    save_eval_gts(&gts, out_dir.join("gts.json"))?;
    if cfg.with_predictions {
        save_detections(&preds, out_dir.join("preds.json"))?;
    }
    Ok(summary)
}
