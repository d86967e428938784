//! Hash-grid interpolation against a direct O(N*M) evaluation of the
//! inverse-distance formula, plus its convexity and equivariance
//! properties.

use lidarpipe_core::geometry::Point3;
use lidarpipe_core::interp::{interpolate, FeatureCloud, InterpConfig};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Literal inverse-distance weighting: every feature point within the ball,
/// weight 1/distance (floored at epsilon), normalized.
fn brute_force(
    queries: &[Point3],
    positions: &[Point3],
    features: &[Vec<f64>],
    radius: f64,
    epsilon: f64,
) -> Vec<(Vec<f64>, bool)> {
    let dim = features.first().map(Vec::len).unwrap_or(0);
    let mut out = Vec::new();
    for q in queries {
        let mut num = vec![0.0; dim];
        let mut den = 0.0;
        let mut any = false;
        for (p, f) in positions.iter().zip(features) {
            let d = ((q.x - p.x).powi(2) + (q.y - p.y).powi(2) + (q.z - p.z).powi(2)).sqrt();
            if d <= radius {
                any = true;
                let w = 1.0 / d.max(epsilon);
                den += w;
                for (n, v) in num.iter_mut().zip(f) {
                    *n += w * v;
                }
            }
        }
        if any {
            for n in &mut num {
                *n /= den;
            }
        }
        out.push((num, any));
    }
    out
}

struct Scene {
    queries: Vec<Point3>,
    cloud: FeatureCloud,
    positions: Vec<Point3>,
    features: Vec<Vec<f64>>,
}

fn random_scene(rng: &mut impl Rng, n_features: usize, n_queries: usize, dim: usize) -> Scene {
    let point = |rng: &mut dyn rand::RngCore| {
        Point3::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.0..1.0),
        )
    };
    let mut positions = Vec::with_capacity(n_features);
    let mut features = Vec::with_capacity(n_features);
    let mut flat = Vec::with_capacity(n_features * dim);
    for _ in 0..n_features {
        positions.push(point(rng));
        let f: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        flat.extend_from_slice(&f);
        features.push(f);
    }
    // bias some queries onto feature points to exercise the epsilon floor
    let mut queries = Vec::with_capacity(n_queries);
    for i in 0..n_queries {
        if i % 7 == 0 && !positions.is_empty() {
            queries.push(positions[i % positions.len()]);
        } else {
            queries.push(point(rng));
        }
    }
    let cloud = FeatureCloud::new(positions.clone(), flat, dim).unwrap();
    Scene {
        queries,
        cloud,
        positions,
        features,
    }
}

#[test]
fn hash_grid_matches_brute_force() {
    let mut rng = ChaCha12Rng::seed_from_u64(77);
    for scene_idx in 0..50 {
        let dim = 1 + (scene_idx % 5);
        let scene = random_scene(&mut rng, 200, 100, dim);
        let radius = [0.2, 0.4, 0.8][scene_idx % 3];
        let cfg = InterpConfig {
            radius,
            epsilon: 1e-6,
        };
        let fast = interpolate(&scene.queries, &scene.cloud, &cfg);
        let slow = brute_force(&scene.queries, &scene.positions, &scene.features, radius, 1e-6);
        for (qi, (f, s)) in fast.iter().zip(&slow).enumerate() {
            assert_eq!(f.covered, s.1, "scene {scene_idx} query {qi} coverage");
            for (a, b) in f.value.iter().zip(&s.0) {
                assert!(
                    (a - b).abs() < 1e-9,
                    "scene {scene_idx} query {qi}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn convexity_and_normalization() {
    let mut rng = ChaCha12Rng::seed_from_u64(78);
    for _ in 0..20 {
        let scene = random_scene(&mut rng, 150, 80, 1);
        let cfg = InterpConfig {
            radius: 0.8,
            epsilon: 1e-6,
        };
        let out = interpolate(&scene.queries, &scene.cloud, &cfg);
        for (q, o) in scene.queries.iter().zip(&out) {
            if !o.covered {
                continue;
            }
            // contributing neighbors bound each output component
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut weight_sum = 0.0;
            for (p, f) in scene.positions.iter().zip(&scene.features) {
                let d = ((q.x - p.x).powi(2) + (q.y - p.y).powi(2) + (q.z - p.z).powi(2)).sqrt();
                if d <= cfg.radius {
                    lo = lo.min(f[0]);
                    hi = hi.max(f[0]);
                    weight_sum += 1.0 / d.max(cfg.epsilon);
                }
            }
            assert!(o.value[0] >= lo - 1e-9 && o.value[0] <= hi + 1e-9);
            // renormalized weights sum to one
            let normalized: f64 = scene
                .positions
                .iter()
                .filter_map(|p| {
                    let d =
                        ((q.x - p.x).powi(2) + (q.y - p.y).powi(2) + (q.z - p.z).powi(2)).sqrt();
                    (d <= cfg.radius).then(|| (1.0 / d.max(cfg.epsilon)) / weight_sum)
                })
                .sum();
            assert!((normalized - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn translation_equivariance() {
    let mut rng = ChaCha12Rng::seed_from_u64(79);
    let scene = random_scene(&mut rng, 120, 60, 3);
    let cfg = InterpConfig {
        radius: 0.4,
        epsilon: 1e-6,
    };
    let base = interpolate(&scene.queries, &scene.cloud, &cfg);

    let shift = Point3::new(13.25, -4.5, 2.0); // exactly representable
    let moved_positions: Vec<Point3> = scene
        .positions
        .iter()
        .map(|p| Point3::new(p.x + shift.x, p.y + shift.y, p.z + shift.z))
        .collect();
    let flat: Vec<f64> = scene.features.iter().flatten().copied().collect();
    let moved_cloud = FeatureCloud::new(moved_positions, flat, 3).unwrap();
    let moved_queries: Vec<Point3> = scene
        .queries
        .iter()
        .map(|q| Point3::new(q.x + shift.x, q.y + shift.y, q.z + shift.z))
        .collect();
    let moved = interpolate(&moved_queries, &moved_cloud, &cfg);

    for (a, b) in base.iter().zip(&moved) {
        assert_eq!(a.covered, b.covered);
        for (x, y) in a.value.iter().zip(&b.value) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }
}
