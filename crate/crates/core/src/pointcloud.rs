//! Point-cloud storage, binary file format, and multi-sweep aggregation.
//!
//! A cloud is columnar: per-point `(x, y, z, intensity, dt)` where `dt` is
//! the non-negative time lag (seconds) of the sweep that produced the point
//! relative to the keyframe; keyframe points carry `dt = 0`.
//!
//! On disk: a 16-byte header (8-byte magic, u32 version, u32 reserved), a
//! little-endian u64 point count, then `count` records of five little-endian
//! f32 values — 20 bytes per record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;

const MAGIC: &[u8; 8] = b"LPCLOUD\0";
const VERSION: u32 = 1;
const RECORD_BYTES: usize = 20;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub z: Vec<f32>,
    pub intensity: Vec<f32>,
    pub dt: Vec<f32>,
}

impl PointCloud {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            x: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            z: Vec::with_capacity(n),
            intensity: Vec::with_capacity(n),
            dt: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn push(&mut self, x: f32, y: f32, z: f32, intensity: f32, dt: f32) {
        self.x.push(x);
        self.y.push(y);
        self.z.push(z);
        self.intensity.push(intensity);
        self.dt.push(dt);
    }

    /// Spatial coordinates of point `i`, widened to f64.
    pub fn point(&self, i: usize) -> Point3 {
        Point3::new(self.x[i] as f64, self.y[i] as f64, self.z[i] as f64)
    }

    pub fn iter_points(&self) -> impl Iterator<Item = Point3> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }
}

/// Row-major 4x4 rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose(pub [[f64; 4]; 4]);

impl Pose {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Pose(m)
    }

    pub fn translation(tx: f64, ty: f64, tz: f64) -> Self {
        let mut p = Pose::identity();
        p.0[0][3] = tx;
        p.0[1][3] = ty;
        p.0[2][3] = tz;
        p
    }

    /// Rotation about +Z by `yaw` plus a translation.
    pub fn rigid_2d(yaw: f64, tx: f64, ty: f64, tz: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let mut p = Pose::identity();
        p.0[0][0] = c;
        p.0[0][1] = -s;
        p.0[1][0] = s;
        p.0[1][1] = c;
        p.0[0][3] = tx;
        p.0[1][3] = ty;
        p.0[2][3] = tz;
        p
    }

    pub fn transform_point(&self, p: Point3) -> Point3 {
        let m = &self.0;
        Point3::new(
            m[0][0] * p.x + m[0][1] * p.y + m[0][2] * p.z + m[0][3],
            m[1][0] * p.x + m[1][1] * p.y + m[1][2] * p.z + m[1][3],
            m[2][0] * p.x + m[2][1] * p.y + m[2][2] * p.z + m[2][3],
        )
    }

    /// Flattened row-major 16 values (manifest representation).
    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                out[i * 4 + j] = self.0[i][j];
            }
        }
        out
    }

    pub fn from_row_major(v: &[f64]) -> Result<Self> {
        if v.len() != 16 {
            return Err(Error::format(format!("pose must have 16 values, got {}", v.len())));
        }
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = v[i * 4 + j];
            }
        }
        Ok(Pose(m))
    }
}

/// One non-keyframe sweep: its cloud, the rigid transform into keyframe
/// coordinates, and its timestamp (seconds, at or before the keyframe's).
#[derive(Debug, Clone)]
pub struct Sweep {
    pub cloud: PointCloud,
    pub pose: Pose,
    pub timestamp: f64,
}

/// A keyframe plus the ordered sweeps that precede it.
#[derive(Debug, Clone)]
pub struct SweepSet {
    pub keyframe: PointCloud,
    pub keyframe_timestamp: f64,
    pub sweeps: Vec<Sweep>,
}

/// Transforms sweeps into the keyframe frame and concatenates.
///
/// `n_sweeps` counts the keyframe itself (the usual setting is 10: keyframe
/// plus 9 non-keyframes). If fewer sweeps exist than requested, aggregates
/// what is available. Returns the cloud and the number of frames actually
/// aggregated.
pub fn aggregate_sweeps(set: &SweepSet, n_sweeps: usize) -> (PointCloud, usize) {
    assert!(n_sweeps >= 1, "n_sweeps must be at least 1");
    let take = (n_sweeps - 1).min(set.sweeps.len());
    let total: usize = set.keyframe.len() + set.sweeps[..take].iter().map(|s| s.cloud.len()).sum::<usize>();
    let mut out = PointCloud::with_capacity(total);

    // keyframe points pass through untouched
    out.x.extend_from_slice(&set.keyframe.x);
    out.y.extend_from_slice(&set.keyframe.y);
    out.z.extend_from_slice(&set.keyframe.z);
    out.intensity.extend_from_slice(&set.keyframe.intensity);
    out.dt.extend(std::iter::repeat(0.0f32).take(set.keyframe.len()));

    for sweep in &set.sweeps[..take] {
        let dt = (set.keyframe_timestamp - sweep.timestamp) as f32;
        for i in 0..sweep.cloud.len() {
            let p = sweep.pose.transform_point(sweep.cloud.point(i));
            out.push(p.x as f32, p.y as f32, p.z as f32, sweep.cloud.intensity[i], dt);
        }
    }
    (out, take + 1)
}

pub fn save_pointcloud(pc: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&0u32.to_le_bytes())?;
    w.write_all(&(pc.len() as u64).to_le_bytes())?;
    for i in 0..pc.len() {
        for v in [pc.x[i], pc.y[i], pc.z[i], pc.intensity[i], pc.dt[i]] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_pointcloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_pointcloud(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {}", path.display(), msg)),
        other => other,
    })
}

fn parse_pointcloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.len() < 24 {
        return Err(Error::format("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::format("bad magic, not a point-cloud file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let payload = &bytes[24..];
    if payload.len() % RECORD_BYTES != 0 {
        return Err(Error::format(format!(
            "record section is {} bytes, not a multiple of {}",
            payload.len(),
            RECORD_BYTES
        )));
    }
    if payload.len() / RECORD_BYTES != count {
        return Err(Error::format(format!(
            "header claims {} points but file holds {}",
            count,
            payload.len() / RECORD_BYTES
        )));
    }
    let mut pc = PointCloud::with_capacity(count);
    for (i, rec) in payload.chunks_exact(RECORD_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().unwrap());
        let vals = [f(0), f(1), f(2), f(3), f(4)];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(format!("non-finite value in record {i}")));
        }
        pc.push(vals[0], vals[1], vals[2], vals[3], vals[4]);
    }
    Ok(pc)
}
