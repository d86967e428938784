//! Dataset manifest and JSON box formats.
//!
//! A dataset is a directory with a `manifest.json` listing frames; each
//! frame names its cloud file, its annotation file, and any non-keyframe
//! sweeps (cloud, timestamp, row-major 4x4 pose into keyframe coordinates).
//! Annotations are JSON arrays of box objects; detection and ground-truth
//! files for evaluation carry the same fields plus a `frame_id` (and, for
//! detections, a `score`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_yaw, Box3D, DetClass};
use crate::pointcloud::{load_pointcloud, PointCloud, Pose, Sweep, SweepSet};

/// One box as stored in per-frame annotation files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub class: DetClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<u32>,
}

impl BoxRecord {
    pub fn from_box(b: &Box3D) -> Self {
        Self {
            cx: b.cx,
            cy: b.cy,
            cz: b.cz,
            l: b.l,
            w: b.w,
            h: b.h,
            yaw: b.yaw,
            vx: b.vx,
            vy: b.vy,
            class: b.class,
            attribute: b.attribute,
        }
    }

    pub fn into_box(self, score: f64) -> Result<Box3D> {
        let b = Box3D {
            cx: self.cx,
            cy: self.cy,
            cz: self.cz,
            l: self.l,
            w: self.w,
            h: self.h,
            yaw: normalize_yaw(self.yaw),
            vx: self.vx,
            vy: self.vy,
            class: self.class,
            score,
            attribute: self.attribute,
        };
        b.validate()?;
        Ok(b)
    }
}

/// One prediction row in a detection file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetRecord {
    pub frame_id: String,
    #[serde(flatten)]
    pub boxrec: BoxRecord,
    pub score: f64,
}

/// One ground-truth row in an evaluation ground-truth file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtRecord {
    pub frame_id: String,
    #[serde(flatten)]
    pub boxrec: BoxRecord,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub cloud: String,
    pub timestamp: f64,
    /// Row-major 4x4 rigid transform into keyframe coordinates.
    pub pose: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub frame_id: String,
    pub timestamp: f64,
    pub cloud: String,
    pub annotations: String,
    #[serde(default)]
    pub sweeps: Vec<SweepEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub frames: Vec<FrameEntry>,
}

/// A manifest bound to the directory it was loaded from.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let text = fs::read_to_string(manifest_path)?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| {
            Error::format(format!("{}: {}", manifest_path.display(), e))
        })?;
        let root = manifest_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { root, manifest })
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load_cloud(&self, frame: &FrameEntry) -> Result<PointCloud> {
        load_pointcloud(self.resolve(&frame.cloud))
    }

    pub fn load_boxes(&self, frame: &FrameEntry) -> Result<Vec<Box3D>> {
        load_annotation_boxes(self.resolve(&frame.annotations))
    }

    pub fn load_sweep_set(&self, frame: &FrameEntry) -> Result<SweepSet> {
        let keyframe = self.load_cloud(frame)?;
        let mut sweeps = Vec::with_capacity(frame.sweeps.len());
        for s in &frame.sweeps {
            if s.timestamp > frame.timestamp {
                return Err(Error::format(format!(
                    "frame {}: sweep timestamp {} after keyframe {}",
                    frame.frame_id, s.timestamp, frame.timestamp
                )));
            }
            sweeps.push(Sweep {
                cloud: load_pointcloud(self.resolve(&s.cloud))?,
                pose: Pose::from_row_major(&s.pose)?,
                timestamp: s.timestamp,
            });
        }
        Ok(SweepSet {
            keyframe,
            keyframe_timestamp: frame.timestamp,
            sweeps,
        })
    }
}

/// Parses a JSON array element-by-element so failures name the row.
pub fn parse_rows<T: DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    let values: Vec<serde_json::Value> = serde_json::from_str(text)
        .map_err(|e| Error::format(format!("{what}: not a JSON array: {e}")))?;
    let mut out = Vec::with_capacity(values.len());
    for (i, value) in values.into_iter().enumerate() {
        let row: T = serde_json::from_value(value)
            .map_err(|e| Error::format(format!("{what}[{i}]: {e}")))?;
        out.push(row);
    }
    Ok(out)
}

/// Loads a per-frame annotation file; boxes get score 1.0.
pub fn load_annotation_boxes(path: impl AsRef<Path>) -> Result<Vec<Box3D>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows: Vec<BoxRecord> = parse_rows(&text, &path.display().to_string())?;
    rows.into_iter().map(|r| r.into_box(1.0)).collect()
}

pub fn save_annotation_boxes(boxes: &[Box3D], path: impl AsRef<Path>) -> Result<()> {
    let rows: Vec<BoxRecord> = boxes.iter().map(BoxRecord::from_box).collect();
    write_json_pretty(&rows, path)
}

/// Loads a detection file, grouped by frame.
pub fn load_detections(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<Box3D>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows: Vec<DetRecord> = parse_rows(&text, &path.display().to_string())?;
    let mut out: BTreeMap<String, Vec<Box3D>> = BTreeMap::new();
    for (i, row) in rows.into_iter().enumerate() {
        let b = row.boxrec.into_box(row.score).map_err(|e| {
            Error::format(format!("{}[{i}]: {e}", path.display()))
        })?;
        out.entry(row.frame_id).or_default().push(b);
    }
    Ok(out)
}

pub fn save_detections(dets: &BTreeMap<String, Vec<Box3D>>, path: impl AsRef<Path>) -> Result<()> {
    let mut rows = Vec::new();
    for (frame_id, boxes) in dets {
        for b in boxes {
            rows.push(DetRecord {
                frame_id: frame_id.clone(),
                boxrec: BoxRecord::from_box(b),
                score: b.score,
            });
        }
    }
    write_json_pretty(&rows, path)
}

/// Loads an evaluation ground-truth file, grouped by frame; boxes get
/// score 1.0.
pub fn load_eval_gts(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<Box3D>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows: Vec<GtRecord> = parse_rows(&text, &path.display().to_string())?;
    let mut out: BTreeMap<String, Vec<Box3D>> = BTreeMap::new();
    for (i, row) in rows.into_iter().enumerate() {
        let b = row.boxrec.into_box(1.0).map_err(|e| {
            Error::format(format!("{}[{i}]: {e}", path.display()))
        })?;
        out.entry(row.frame_id).or_default().push(b);
    }
    Ok(out)
}

pub fn save_eval_gts(gts: &BTreeMap<String, Vec<Box3D>>, path: impl AsRef<Path>) -> Result<()> {
    let mut rows = Vec::new();
    for (frame_id, boxes) in gts {
        for b in boxes {
            rows.push(GtRecord {
                frame_id: frame_id.clone(),
                boxrec: BoxRecord::from_box(b),
            });
        }
    }
    write_json_pretty(&rows, path)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    write_json_pretty(manifest, path)
}

/// Serializes as pretty JSON via a temp file plus rename, so readers never
/// observe a partial file.
pub fn write_json_pretty<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = serde_json::to_vec_pretty(value)?;
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::save_pointcloud;

    #[test]
    fn annotation_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anns.json");
        let mut b = Box3D::gt(1.0, 2.0, 3.0, 4.0, 2.0, 1.5, 0.3, DetClass::Bicycle);
        b.vx = 0.5;
        b.attribute = Some(2);
        save_annotation_boxes(&[b.clone()], &path).unwrap();
        let loaded = load_annotation_boxes(&path).unwrap();
        assert_eq!(loaded, vec![b]);
    }

    #[test]
    fn row_errors_name_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anns.json");
        fs::write(
            &path,
            r#"[
              {"cx":0,"cy":0,"cz":0,"l":1,"w":1,"h":1,"yaw":0,"vx":0,"vy":0,"class":"car"},
              {"cx":0,"cy":0,"cz":0,"l":1,"w":1,"h":1,"yaw":0,"vx":0,"vy":0,"class":"lorry"}
            ]"#,
        )
        .unwrap();
        let err = load_annotation_boxes(&path).unwrap_err().to_string();
        assert!(err.contains("[1]"), "{err}");
        assert!(err.contains("lorry"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("anns.json");
        fs::write(
            &path,
            r#"[{"cx":0,"cy":0,"cz":0,"l":1,"w":1,"h":1,"yaw":0,"vx":0,"vy":0,"class":"car","bogus":1}]"#,
        )
        .unwrap();
        assert!(load_annotation_boxes(&path).is_err());
    }

    #[test]
    fn invalid_dims_rejected_with_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dets.json");
        fs::write(
            &path,
            r#"[{"frame_id":"f0","cx":0,"cy":0,"cz":0,"l":-1,"w":1,"h":1,"yaw":0,"vx":0,"vy":0,"class":"car","score":0.5}]"#,
        )
        .unwrap();
        let err = load_detections(&path).unwrap_err().to_string();
        assert!(err.contains("[0]"), "{err}");
    }

    #[test]
    fn dataset_open_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let cloud_path = dir.path().join("frame0.pcb");
        let ann_path = dir.path().join("frame0.json");
        let mut pc = PointCloud::default();
        pc.push(1.0, 2.0, 3.0, 0.5, 0.0);
        save_pointcloud(&pc, &cloud_path).unwrap();
        save_annotation_boxes(
            &[Box3D::gt(1.0, 2.0, 3.0, 2.0, 2.0, 2.0, 0.0, DetClass::Car)],
            &ann_path,
        )
        .unwrap();
        let manifest = Manifest {
            frames: vec![FrameEntry {
                frame_id: "f0".into(),
                timestamp: 1.0,
                cloud: "frame0.pcb".into(),
                annotations: "frame0.json".into(),
                sweeps: vec![],
            }],
        };
        let mpath = dir.path().join("manifest.json");
        save_manifest(&manifest, &mpath).unwrap();
        let ds = Dataset::open(&mpath).unwrap();
        let frame = &ds.manifest.frames[0];
        assert_eq!(ds.load_cloud(frame).unwrap().len(), 1);
        assert_eq!(ds.load_boxes(frame).unwrap().len(), 1);
        let set = ds.load_sweep_set(frame).unwrap();
        assert_eq!(set.keyframe.len(), 1);
        assert!(set.sweeps.is_empty());
    }
}
