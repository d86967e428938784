//! Global geometric augmentation applied jointly to a cloud and its boxes.
//!
//! One draw produces a scene transform (optional flip across the XZ plane,
//! uniform scale, rotation about +Z, per-axis translation); the same
//! transform is applied to every point and every box, so point-in-box
//! membership is preserved. All randomness comes from the config seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{normalize_yaw, Box3D, Point3};
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Probability of reflecting the scene across the XZ plane.
    pub flip_prob: f64,
    pub scale_range: [f64; 2],
    /// Rotation about +Z, radians, sampled uniformly.
    pub rot_range: [f64; 2],
    /// Per-axis translation scale, meters: Gaussian sigma, or the half-width
    /// of a uniform draw when `trans_uniform` is set.
    pub trans_sigma: f64,
    pub trans_uniform: bool,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            scale_range: [0.95, 1.05],
            rot_range: [-0.3925, 0.3925],
            trans_sigma: 0.2,
            trans_uniform: false,
            rng_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::config("flip_prob must be in [0, 1]"));
        }
        if self.scale_range[0] <= 0.0 || self.scale_range[1] < self.scale_range[0] {
            return Err(Error::config("scale_range must be positive and ordered"));
        }
        if self.rot_range[1] < self.rot_range[0] {
            return Err(Error::config("rot_range must be ordered"));
        }
        if self.trans_sigma < 0.0 {
            return Err(Error::config("trans_sigma must be non-negative"));
        }
        Ok(())
    }
}

/// One sampled scene transform: flip, then scale, then rotate, then translate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneTransform {
    pub flip_y: bool,
    pub scale: f64,
    pub rotation: f64,
    pub translation: [f64; 3],
}

impl SceneTransform {
    pub fn identity() -> Self {
        Self {
            flip_y: false,
            scale: 1.0,
            rotation: 0.0,
            translation: [0.0; 3],
        }
    }

    /// Draws flip, scale, rotation, and translation, in that fixed order.
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let flip_y = rng.random_bool(cfg.flip_prob);
        let scale = uniform_in(rng, cfg.scale_range);
        let rotation = uniform_in(rng, cfg.rot_range);
        let mut translation = [0.0; 3];
        if cfg.trans_uniform {
            for t in &mut translation {
                *t = uniform_in(rng, [-cfg.trans_sigma, cfg.trans_sigma]);
            }
        } else {
            let normal = Normal::new(0.0, cfg.trans_sigma).expect("validated sigma");
            for t in &mut translation {
                *t = normal.sample(rng);
            }
        }
        Self {
            flip_y,
            scale,
            rotation,
            translation,
        }
    }

    pub fn apply_point(&self, p: Point3) -> Point3 {
        let mut x = p.x;
        let mut y = if self.flip_y { -p.y } else { p.y };
        let mut z = p.z;
        x *= self.scale;
        y *= self.scale;
        z *= self.scale;
        let (sin, cos) = self.rotation.sin_cos();
        let (rx, ry) = (x * cos - y * sin, x * sin + y * cos);
        Point3::new(
            rx + self.translation[0],
            ry + self.translation[1],
            z + self.translation[2],
        )
    }

    pub fn apply_box(&self, b: &Box3D) -> Box3D {
        let mut out = b.clone();
        if self.flip_y {
            out.cy = -out.cy;
            out.yaw = -out.yaw;
            out.vy = -out.vy;
        }
        out.cx *= self.scale;
        out.cy *= self.scale;
        out.cz *= self.scale;
        out.l *= self.scale;
        out.w *= self.scale;
        out.h *= self.scale;
        out.vx *= self.scale;
        out.vy *= self.scale;
        let (sin, cos) = self.rotation.sin_cos();
        let (cx, cy) = (out.cx * cos - out.cy * sin, out.cx * sin + out.cy * cos);
        out.cx = cx;
        out.cy = cy;
        let (vx, vy) = (out.vx * cos - out.vy * sin, out.vx * sin + out.vy * cos);
        out.vx = vx;
        out.vy = vy;
        out.yaw = normalize_yaw(out.yaw + self.rotation);
        out.cx += self.translation[0];
        out.cy += self.translation[1];
        out.cz += self.translation[2];
        out
    }
}

fn uniform_in(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// Applies one seeded scene transform jointly to cloud and boxes.
pub fn augment(pc: &PointCloud, boxes: &[Box3D], cfg: &AugmentConfig) -> (PointCloud, Vec<Box3D>) {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.rng_seed);
    let t = SceneTransform::sample(cfg, &mut rng);
    apply_transform(pc, boxes, &t)
}

/// Applies a given transform jointly to cloud and boxes.
pub fn apply_transform(
    pc: &PointCloud,
    boxes: &[Box3D],
    t: &SceneTransform,
) -> (PointCloud, Vec<Box3D>) {
    let mut out = PointCloud::with_capacity(pc.len());
    for i in 0..pc.len() {
        let p = t.apply_point(pc.point(i));
        out.push(p.x as f32, p.y as f32, p.z as f32, pc.intensity[i], pc.dt[i]);
    }
    let boxes_out = boxes.iter().map(|b| t.apply_box(b)).collect();
    (out, boxes_out)
}
