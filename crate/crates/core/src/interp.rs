//! Inverse-distance-weighted propagation of sparse features to query points.
//!
//! Each query gathers every feature point within a ball of the configured
//! radius, weights it by the reciprocal distance (floored at epsilon for
//! coincident points), and normalizes. Queries with an empty neighborhood
//! yield a zero vector and a cleared coverage flag. Neighbor search runs on
//! a uniform spatial hash with cell size equal to the radius, so the 27-cell
//! neighborhood is guaranteed to cover the ball.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::voxel::{voxel_index_to_world, VoxelGrid};

/// Sparse feature points: positions plus row-major D-dimensional features.
#[derive(Debug, Clone)]
pub struct FeatureCloud {
    positions: Vec<Point3>,
    features: Vec<f64>,
    dim: usize,
}

impl FeatureCloud {
    pub fn new(positions: Vec<Point3>, features: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dim must be at least 1"));
        }
        if features.len() != positions.len() * dim {
            return Err(Error::invalid(format!(
                "feature buffer holds {} values, expected {} x {}",
                features.len(),
                positions.len(),
                dim
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite feature value"));
        }
        Ok(Self {
            positions,
            features,
            dim,
        })
    }

    /// Voxel centers with their 5-vector mean features.
    pub fn from_voxel_grid(grid: &VoxelGrid) -> Result<Self> {
        let mut positions = Vec::with_capacity(grid.voxels.len());
        let mut features = Vec::with_capacity(grid.voxels.len() * 5);
        for (idx, v) in &grid.voxels {
            positions.push(voxel_index_to_world(*idx, &grid.config, grid.stride)?);
            features.extend_from_slice(&v.mean);
        }
        Self::new(positions, features, 5)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn position(&self, j: usize) -> Point3 {
        self.positions[j]
    }

    pub fn feature(&self, j: usize) -> &[f64] {
        &self.features[j * self.dim..(j + 1) * self.dim]
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpConfig {
    /// Ball radius, meters.
    pub radius: f64,
    /// Distance floor for coincident points (the weight is 1/distance).
    pub epsilon: f64,
}

impl Default for InterpConfig {
    fn default() -> Self {
        Self {
            radius: 0.2,
            epsilon: 1e-6,
        }
    }
}

/// Interpolated vector plus whether any neighbor fell inside the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated {
    pub value: Vec<f64>,
    pub covered: bool,
}

struct HashGrid {
    cells: HashMap<[i64; 3], Vec<u32>>,
    inv_cell: f64,
}

impl HashGrid {
    fn build(fc: &FeatureCloud, cell_size: f64) -> Self {
        let inv_cell = 1.0 / cell_size;
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for j in 0..fc.len() {
            let key = Self::key(fc.position(j), inv_cell);
            cells.entry(key).or_default().push(j as u32);
        }
        Self { cells, inv_cell }
    }

    fn key(p: Point3, inv_cell: f64) -> [i64; 3] {
        [
            (p.x * inv_cell).floor() as i64,
            (p.y * inv_cell).floor() as i64,
            (p.z * inv_cell).floor() as i64,
        ]
    }

    /// Indices within `radius` of `p`, sorted ascending.
    fn ball(&self, p: Point3, radius: f64, fc: &FeatureCloud, out: &mut Vec<u32>) {
        out.clear();
        let center = Self::key(p, self.inv_cell);
        let r2 = radius * radius;
        for dz in -1..=1i64 {
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let key = [center[0] + dx, center[1] + dy, center[2] + dz];
                    if let Some(indices) = self.cells.get(&key) {
                        for &j in indices {
                            let q = fc.position(j as usize);
                            let d2 = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
                            if d2 <= r2 {
                                out.push(j);
                            }
                        }
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// Inverse-distance interpolation of `fc` at each query point.
pub fn interpolate(queries: &[Point3], fc: &FeatureCloud, cfg: &InterpConfig) -> Vec<Interpolated> {
    assert!(cfg.radius > 0.0 && cfg.epsilon > 0.0, "invalid interp config");
    let grid = HashGrid::build(fc, cfg.radius);
    let mut neighbors = Vec::new();
    let mut out = Vec::with_capacity(queries.len());
    for &q in queries {
        grid.ball(q, cfg.radius, fc, &mut neighbors);
        out.push(weigh_neighbors(q, &neighbors, fc, cfg.epsilon));
    }
    out
}

fn weigh_neighbors(q: Point3, neighbors: &[u32], fc: &FeatureCloud, epsilon: f64) -> Interpolated {
    let mut value = vec![0.0; fc.dim()];
    if neighbors.is_empty() {
        return Interpolated {
            value,
            covered: false,
        };
    }
    let mut weight_sum = 0.0;
    for &j in neighbors {
        let p = fc.position(j as usize);
        let d = ((q.x - p.x).powi(2) + (q.y - p.y).powi(2) + (q.z - p.z).powi(2)).sqrt();
        let w = 1.0 / d.max(epsilon);
        weight_sum += w;
        for (acc, f) in value.iter_mut().zip(fc.feature(j as usize)) {
            *acc += w * f;
        }
    }
    for v in &mut value {
        *v /= weight_sum;
    }
    Interpolated {
        value,
        covered: true,
    }
}

/// Per-query concatenation of each stage's interpolation; coverage flags are
/// kept per stage.
pub fn multi_stage_interpolate(
    queries: &[Point3],
    stages: &[(FeatureCloud, f64)],
) -> Result<Vec<(Vec<f64>, Vec<bool>)>> {
    if stages.is_empty() {
        return Err(Error::invalid("multi-stage interpolation needs at least one stage"));
    }
    let mut per_stage = Vec::with_capacity(stages.len());
    for (fc, radius) in stages {
        if *radius <= 0.0 {
            return Err(Error::invalid("stage radius must be positive"));
        }
        let cfg = InterpConfig {
            radius: *radius,
            ..InterpConfig::default()
        };
        per_stage.push(interpolate(queries, fc, &cfg));
    }
    let total_dim: usize = stages.iter().map(|(fc, _)| fc.dim()).sum();
    let mut out = Vec::with_capacity(queries.len());
    for qi in 0..queries.len() {
        let mut value = Vec::with_capacity(total_dim);
        let mut covered = Vec::with_capacity(stages.len());
        for stage in &per_stage {
            value.extend_from_slice(&stage[qi].value);
            covered.push(stage[qi].covered);
        }
        out.push((value, covered));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fc(points: &[(f64, f64, f64)], feats: &[f64], dim: usize) -> FeatureCloud {
        let positions = points.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
        FeatureCloud::new(positions, feats.to_vec(), dim).unwrap()
    }

    #[test]
    fn coincident_query_returns_feature() {
        let cloud = fc(&[(1.0, 2.0, 3.0)], &[7.5], 1);
        let out = interpolate(&[Point3::new(1.0, 2.0, 3.0)], &cloud, &InterpConfig::default());
        assert!(out[0].covered);
        assert_relative_eq!(out[0].value[0], 7.5, epsilon = 1e-12);
    }

    #[test]
    fn equidistant_neighbors_average() {
        let cloud = fc(&[(0.1, 0.0, 0.0), (-0.1, 0.0, 0.0)], &[1.0, 3.0], 1);
        let out = interpolate(&[Point3::new(0.0, 0.0, 0.0)], &cloud, &InterpConfig::default());
        assert_relative_eq!(out[0].value[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_distance_weighting() {
        // distances 1 and 2, features 0 and 3: (1*0 + 0.5*3) / 1.5 = 1
        let cloud = fc(&[(1.0, 0.0, 0.0), (2.0, 0.0, 0.0)], &[0.0, 3.0], 1);
        let cfg = InterpConfig {
            radius: 2.5,
            ..InterpConfig::default()
        };
        let out = interpolate(&[Point3::new(0.0, 0.0, 0.0)], &cloud, &cfg);
        assert_relative_eq!(out[0].value[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uncovered_query_zero_vector() {
        let cloud = fc(&[(10.0, 0.0, 0.0)], &[5.0, 6.0], 2);
        let out = interpolate(&[Point3::new(0.0, 0.0, 0.0)], &cloud, &InterpConfig::default());
        assert!(!out[0].covered);
        assert_eq!(out[0].value, vec![0.0, 0.0]);
    }

    #[test]
    fn neighbor_on_radius_boundary_included() {
        let cloud = fc(&[(0.2, 0.0, 0.0)], &[4.0], 1);
        let out = interpolate(&[Point3::new(0.0, 0.0, 0.0)], &cloud, &InterpConfig::default());
        assert!(out[0].covered);
    }

    #[test]
    fn multi_stage_concatenates_in_order() {
        let s1 = fc(&[(0.0, 0.0, 0.0)], &[1.0, 2.0], 2);
        let s2 = fc(&[(0.0, 0.0, 0.0)], &[9.0], 1);
        let q = [Point3::new(0.05, 0.0, 0.0)];
        let out = multi_stage_interpolate(&q, &[(s1.clone(), 0.2), (s2.clone(), 0.4)]).unwrap();
        assert_eq!(out[0].0, vec![1.0, 2.0, 9.0]);
        assert_eq!(out[0].1, vec![true, true]);
        // permuting stages permutes output blocks
        let swapped = multi_stage_interpolate(&q, &[(s2, 0.4), (s1, 0.2)]).unwrap();
        assert_eq!(swapped[0].0, vec![9.0, 1.0, 2.0]);
    }

    #[test]
    fn single_stage_matches_interpolate() {
        let cloud = fc(&[(0.0, 0.0, 0.0), (0.1, 0.0, 0.0)], &[1.0, 5.0], 1);
        let q = [Point3::new(0.05, 0.0, 0.0), Point3::new(3.0, 0.0, 0.0)];
        let direct = interpolate(&q, &cloud, &InterpConfig::default());
        let staged = multi_stage_interpolate(&q, &[(cloud, 0.2)]).unwrap();
        for (d, s) in direct.iter().zip(&staged) {
            assert_eq!(d.value, s.0);
            assert_eq!(vec![d.covered], s.1);
        }
    }

    #[test]
    fn dim_validation() {
        assert!(FeatureCloud::new(vec![Point3::new(0.0, 0.0, 0.0)], vec![1.0, 2.0], 3).is_err());
        assert!(FeatureCloud::new(vec![], vec![], 0).is_err());
    }
}
