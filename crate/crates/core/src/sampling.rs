//! Class-balanced dataset sampling, the ground-truth paste database, and
//! the six-group class mapping.
//!
//! The duplication plan keys each frame on the rarest class it contains:
//! `copies = round(min(cap, target_frac / empirical_frac))`, floored at 1,
//! with the target fraction uniform over the classes that actually occur.
//! Paste augmentation relocates stored objects in the ground plane (stored
//! z and yaw kept) and only accepts placements whose BEV IoU with every
//! other box is exactly zero.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_json_pretty, BoxRecord, Dataset};
use crate::error::{Error, Result};
use crate::geometry::{bev_iou, point_in_box, Box3D, DetClass};
use crate::pointcloud::{load_pointcloud, save_pointcloud, PointCloud};

/// Per-class instance counts over the ten detection classes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: [u64; 10],
}

impl ClassHistogram {
    pub fn add(&mut self, class: DetClass) {
        self.counts[class.index()] += 1;
    }

    pub fn count(&self, class: DetClass) -> u64 {
        self.counts[class.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn from_boxes<'a>(boxes: impl IntoIterator<Item = &'a Box3D>) -> Self {
        let mut h = Self::default();
        for b in boxes {
            h.add(b.class);
        }
        h
    }

    /// Classes with at least one instance.
    pub fn active_classes(&self) -> Vec<DetClass> {
        DetClass::ALL
            .iter()
            .copied()
            .filter(|c| self.count(*c) > 0)
            .collect()
    }

    /// KL divergence from the class distribution to uniform over the given
    /// class set; classes outside the set must have zero count.
    pub fn kl_to_uniform(&self, classes: &[DetClass]) -> f64 {
        let total: u64 = classes.iter().map(|c| self.count(*c)).sum();
        assert_eq!(total, self.total(), "histogram has mass outside the class set");
        if total == 0 || classes.is_empty() {
            return 0.0;
        }
        let n = classes.len() as f64;
        classes
            .iter()
            .filter(|c| self.count(**c) > 0)
            .map(|c| {
                let p = self.count(*c) as f64 / total as f64;
                p * (p * n).ln()
            })
            .sum()
    }
}

/// Exact per-class instance counts over a dataset.
pub fn build_histogram(dataset: &Dataset) -> Result<ClassHistogram> {
    let per_frame: Vec<ClassHistogram> = dataset
        .manifest
        .frames
        .par_iter()
        .map(|frame| {
            let boxes = dataset.load_boxes(frame)?;
            Ok(ClassHistogram::from_boxes(&boxes))
        })
        .collect::<Result<_>>()?;
    let mut out = ClassHistogram::default();
    for h in per_frame {
        for (dst, src) in out.counts.iter_mut().zip(h.counts) {
            *dst += src;
        }
    }
    Ok(out)
}

/// Frame duplication counts, keyed by frame id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplePlan {
    pub copies: BTreeMap<String, u32>,
    pub rng_seed: u64,
}

impl SamplePlan {
    pub fn total_copies(&self) -> u64 {
        self.copies.values().map(|&c| c as u64).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json_pretty(self, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Builds the duplication plan from the dataset histogram and each frame's
/// own class histogram. Deterministic; every frame gets at least one copy.
pub fn ds_sample_plan(
    hist: &ClassHistogram,
    frames: &[(String, ClassHistogram)],
    cap: f64,
    rng_seed: u64,
) -> SamplePlan {
    let total = hist.total();
    let active = hist.active_classes();
    let target_frac = if active.is_empty() {
        0.0
    } else {
        1.0 / active.len() as f64
    };
    let mut copies = BTreeMap::new();
    for (frame_id, frame_hist) in frames {
        let mut ratio: f64 = 1.0;
        if total > 0 {
            for c in &active {
                if frame_hist.count(*c) > 0 {
                    let empirical = hist.count(*c) as f64 / total as f64;
                    ratio = ratio.max((target_frac / empirical).min(cap));
                }
            }
        }
        let n = (ratio.round() as u32).max(1);
        copies.insert(frame_id.clone(), n);
    }
    SamplePlan { copies, rng_seed }
}

/// Class histogram of a dataset resampled under a plan.
pub fn histogram_under_plan(
    plan: &SamplePlan,
    frames: &[(String, ClassHistogram)],
) -> ClassHistogram {
    let mut out = ClassHistogram::default();
    for (frame_id, hist) in frames {
        let copies = plan.copies.get(frame_id).copied().unwrap_or(1) as u64;
        for (dst, src) in out.counts.iter_mut().zip(hist.counts) {
            *dst += src * copies;
        }
    }
    out
}

/// One stored object: its box and the member points relative to the box
/// center.
#[derive(Debug, Clone)]
pub struct GtObject {
    pub boxrec: Box3D,
    /// Cropped points, translated so the box center is the origin.
    pub points: PointCloud,
}

/// Per-class collections of cropped objects for paste augmentation.
#[derive(Debug, Clone, Default)]
pub struct GtDatabase {
    pub objects: BTreeMap<DetClass, Vec<GtObject>>,
    /// Annotated boxes skipped because no point fell inside them.
    pub skipped_empty: usize,
}

impl GtDatabase {
    pub fn total_objects(&self) -> usize {
        self.objects.values().map(Vec::len).sum()
    }
}

/// Crops every annotated box's interior points out of its frame.
pub fn build_gt_database(dataset: &Dataset) -> Result<GtDatabase> {
    let per_frame: Vec<(Vec<GtObject>, usize)> = dataset
        .manifest
        .frames
        .par_iter()
        .map(|frame| {
            let cloud = dataset.load_cloud(frame).map_err(|e| {
                Error::format(format!("frame {}: {e}", frame.frame_id))
            })?;
            let boxes = dataset.load_boxes(frame).map_err(|e| {
                Error::format(format!("frame {}: {e}", frame.frame_id))
            })?;
            Ok(crop_objects(&cloud, &boxes))
        })
        .collect::<Result<_>>()?;

    let mut db = GtDatabase::default();
    for (objects, skipped) in per_frame {
        db.skipped_empty += skipped;
        for obj in objects {
            db.objects.entry(obj.boxrec.class).or_default().push(obj);
        }
    }
    Ok(db)
}

/// Extracts the per-box interior points of one frame; boxes with no interior
/// points are skipped and counted.
pub fn crop_objects(cloud: &PointCloud, boxes: &[Box3D]) -> (Vec<GtObject>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for b in boxes {
        let mut points = PointCloud::default();
        for i in 0..cloud.len() {
            if point_in_box(cloud.point(i), b) {
                points.push(
                    cloud.x[i] - b.cx as f32,
                    cloud.y[i] - b.cy as f32,
                    cloud.z[i] - b.cz as f32,
                    cloud.intensity[i],
                    cloud.dt[i],
                );
            }
        }
        if points.is_empty() {
            skipped += 1;
        } else {
            out.push(GtObject {
                boxrec: b.clone(),
                points,
            });
        }
    }
    (out, skipped)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GtAugConfig {
    /// Target instance count per class and frame; classes below their quota
    /// get database objects pasted in.
    pub quotas: BTreeMap<DetClass, u32>,
    /// Placement attempts per requested object before giving up.
    pub retry_limit: u32,
    /// Ground-plane region the pasted box center is drawn from.
    pub placement_min: [f64; 2],
    pub placement_max: [f64; 2],
    pub rng_seed: u64,
}

impl Default for GtAugConfig {
    fn default() -> Self {
        Self {
            quotas: BTreeMap::new(),
            retry_limit: 20,
            placement_min: [-45.0, -46.0],
            placement_max: [45.0, 46.0],
            rng_seed: 0,
        }
    }
}

/// Outcome of paste augmentation on one frame.
#[derive(Debug, Clone)]
pub struct GtAugResult {
    pub cloud: PointCloud,
    pub boxes: Vec<Box3D>,
    pub pasted: BTreeMap<DetClass, u32>,
    /// Quota shortfall per class when the database ran dry or placements
    /// kept colliding.
    pub unmet: BTreeMap<DetClass, u32>,
}

/// Pastes database objects into a frame until each class meets its quota,
/// rejecting placements that overlap any existing or pasted box in BEV.
pub fn gt_aug(pc: &PointCloud, boxes: &[Box3D], db: &GtDatabase, cfg: &GtAugConfig) -> GtAugResult {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.rng_seed);
    let mut cloud = pc.clone();
    let mut all_boxes: Vec<Box3D> = boxes.to_vec();
    let mut pasted: BTreeMap<DetClass, u32> = BTreeMap::new();
    let mut unmet: BTreeMap<DetClass, u32> = BTreeMap::new();

    for class in DetClass::ALL {
        let Some(&quota) = cfg.quotas.get(&class) else {
            continue;
        };
        let existing = all_boxes.iter().filter(|b| b.class == class).count() as u32;
        let needed = quota.saturating_sub(existing);
        let pool = db.objects.get(&class).map(Vec::as_slice).unwrap_or(&[]);
        if needed == 0 {
            continue;
        }
        if pool.is_empty() {
            unmet.insert(class, needed);
            continue;
        }
        for _ in 0..needed {
            let mut placed = false;
            for _ in 0..cfg.retry_limit {
                let obj = &pool[rng.random_range(0..pool.len())];
                let cx = rng.random_range(cfg.placement_min[0]..=cfg.placement_max[0]);
                let cy = rng.random_range(cfg.placement_min[1]..=cfg.placement_max[1]);
                let mut candidate = obj.boxrec.clone();
                candidate.cx = cx;
                candidate.cy = cy;
                // stored z and yaw are kept
                if all_boxes.iter().all(|b| bev_iou(&candidate, b) == 0.0) {
                    for i in 0..obj.points.len() {
                        cloud.push(
                            obj.points.x[i] + cx as f32,
                            obj.points.y[i] + cy as f32,
                            obj.points.z[i] + candidate.cz as f32,
                            obj.points.intensity[i],
                            obj.points.dt[i],
                        );
                    }
                    all_boxes.push(candidate);
                    *pasted.entry(class).or_insert(0) += 1;
                    placed = true;
                    break;
                }
            }
            if !placed {
                *unmet.entry(class).or_insert(0) += 1;
            }
        }
    }
    GtAugResult {
        cloud,
        boxes: all_boxes,
        pasted,
        unmet,
    }
}

/// Class-to-group mapping: six groups over the ten classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupMap {
    pub groups: Vec<Vec<DetClass>>,
}

impl Default for GroupMap {
    fn default() -> Self {
        Self {
            groups: vec![
                vec![DetClass::Car],
                vec![DetClass::Truck, DetClass::ConstructionVehicle],
                vec![DetClass::Bus, DetClass::Trailer],
                vec![DetClass::Barrier],
                vec![DetClass::Motorcycle, DetClass::Bicycle],
                vec![DetClass::Pedestrian, DetClass::TrafficCone],
            ],
        }
    }
}

impl GroupMap {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Group index of a class. The map is validated to be total, so this
    /// cannot miss.
    pub fn group_of(&self, class: DetClass) -> usize {
        self.groups
            .iter()
            .position(|g| g.contains(&class))
            .expect("validated group map covers every class")
    }

    /// Every class in exactly one group.
    pub fn validate(&self) -> Result<()> {
        for class in DetClass::ALL {
            let hits = self.groups.iter().filter(|g| g.contains(&class)).count();
            if hits != 1 {
                return Err(Error::config(format!(
                    "class {class} appears in {hits} groups, expected exactly 1"
                )));
            }
        }
        if self.groups.iter().any(Vec::is_empty) {
            return Err(Error::config("empty class group"));
        }
        Ok(())
    }

    /// Partitions detections by group, preserving order within each group.
    pub fn split_by_group(&self, dets: &[Box3D]) -> Vec<Vec<Box3D>> {
        let mut out: Vec<Vec<Box3D>> = vec![Vec::new(); self.group_count()];
        for det in dets {
            out[self.group_of(det.class)].push(det.clone());
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
struct DbIndexEntry {
    file: String,
    #[serde(flatten)]
    boxrec: BoxRecord,
}

/// Persists the database as a directory: one index JSON per class plus one
/// point-cloud binary per object (points relative to the box center).
pub fn save_gt_database(db: &GtDatabase, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (class, objects) in &db.objects {
        let mut index = Vec::with_capacity(objects.len());
        for (i, obj) in objects.iter().enumerate() {
            let file = format!("{}_{:05}.pcb", class, i);
            save_pointcloud(&obj.points, dir.join(&file))?;
            index.push(DbIndexEntry {
                file,
                boxrec: BoxRecord::from_box(&obj.boxrec),
            });
        }
        write_json_pretty(&index, dir.join(format!("{class}.json")))?;
    }
    Ok(())
}

pub fn load_gt_database(dir: impl AsRef<Path>) -> Result<GtDatabase> {
    let dir = dir.as_ref();
    let mut db = GtDatabase::default();
    for class in DetClass::ALL {
        let index_path = dir.join(format!("{class}.json"));
        if !index_path.exists() {
            continue;
        }
        let text = fs::read_to_string(&index_path)?;
        let entries: Vec<DbIndexEntry> =
            crate::dataset::parse_rows(&text, &index_path.display().to_string())?;
        let mut objects = Vec::with_capacity(entries.len());
        for entry in entries {
            objects.push(GtObject {
                boxrec: entry.boxrec.into_box(1.0)?,
                points: load_pointcloud(dir.join(&entry.file))?,
            });
        }
        if !objects.is_empty() {
            db.objects.insert(class, objects);
        }
    }
    Ok(db)
}
