//! Oriented-box and point geometry.
//!
//! Boxes are yaw-only: rotated about +Z, counterclockwise from +X, with `l`
//! the extent along the heading, `w` lateral, and `(cx, cy, cz)` the
//! geometric center (not the bottom face). All functions here are pure and
//! total on valid inputs.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// A point in 3D space, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// The ten detection classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetClass {
    Car,
    Truck,
    ConstructionVehicle,
    Bus,
    Trailer,
    Barrier,
    Motorcycle,
    Bicycle,
    Pedestrian,
    TrafficCone,
}

impl DetClass {
    pub const ALL: [DetClass; 10] = [
        DetClass::Car,
        DetClass::Truck,
        DetClass::ConstructionVehicle,
        DetClass::Bus,
        DetClass::Trailer,
        DetClass::Barrier,
        DetClass::Motorcycle,
        DetClass::Bicycle,
        DetClass::Pedestrian,
        DetClass::TrafficCone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetClass::Car => "car",
            DetClass::Truck => "truck",
            DetClass::ConstructionVehicle => "construction_vehicle",
            DetClass::Bus => "bus",
            DetClass::Trailer => "trailer",
            DetClass::Barrier => "barrier",
            DetClass::Motorcycle => "motorcycle",
            DetClass::Bicycle => "bicycle",
            DetClass::Pedestrian => "pedestrian",
            DetClass::TrafficCone => "traffic_cone",
        }
    }

    /// Index into [`DetClass::ALL`].
    pub fn index(self) -> usize {
        DetClass::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for DetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        DetClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// An oriented 3D box: annotation or prediction.
///
/// `score` is 1.0 for ground truth. `yaw` is kept normalized to (-pi, pi].
#[derive(Debug, Clone, PartialEq)]
pub struct Box3D {
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
    pub score: f64,
    pub attribute: Option<u32>,
}

impl Box3D {
    /// Ground-truth box (score 1.0, no attribute).
    pub fn gt(cx: f64, cy: f64, cz: f64, l: f64, w: f64, h: f64, yaw: f64, class: DetClass) -> Self {
        Self {
            cx,
            cy,
            cz,
            l,
            w,
            h,
            yaw: normalize_yaw(yaw),
            vx: 0.0,
            vy: 0.0,
            class,
            score: 1.0,
            attribute: None,
        }
    }

    pub fn center(&self) -> Point3 {
        Point3::new(self.cx, self.cy, self.cz)
    }

    /// BEV footprint corners, counterclockwise, starting front-left.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (sin, cos) = self.yaw.sin_cos();
        let (hl, hw) = (self.l / 2.0, self.w / 2.0);
        // box-frame corners (x along heading, y lateral)
        let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
        local.map(|[x, y]| [self.cx + x * cos - y * sin, self.cy + x * sin + y * cos])
    }

    /// Checks the type invariants; used at file-format boundaries.
    pub fn validate(&self) -> Result<(), Error> {
        let finite = [
            self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw, self.vx, self.vy,
            self.score,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("box has non-finite field"));
        }
        if self.l <= 0.0 || self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::invalid(format!(
                "box dimensions must be positive, got l={} w={} h={}",
                self.l, self.w, self.h
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::invalid(format!("score {} outside [0, 1]", self.score)));
        }
        Ok(())
    }
}

/// Wraps an angle into (-pi, pi]. In-range angles pass through unchanged.
pub fn normalize_yaw(yaw: f64) -> f64 {
    if yaw > -PI && yaw <= PI {
        return yaw;
    }
    let y = yaw.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Smallest absolute angular difference, in [0, pi].
pub fn yaw_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// True iff `p` lies inside `b` (boundary counts as inside).
pub fn point_in_box(p: Point3, b: &Box3D) -> bool {
    point_in_box_with_margin(p, b, 0.0)
}

/// Point-in-box test with the half-extents grown by `margin` meters.
pub fn point_in_box_with_margin(p: Point3, b: &Box3D, margin: f64) -> bool {
    let dx = p.x - b.cx;
    let dy = p.y - b.cy;
    let dz = p.z - b.cz;
    // rotate into the box frame (by -yaw about Z)
    let (sin, cos) = b.yaw.sin_cos();
    let bx = dx * cos + dy * sin;
    let by = -dx * sin + dy * cos;
    bx.abs() <= b.l / 2.0 + margin && by.abs() <= b.w / 2.0 + margin && dz.abs() <= b.h / 2.0 + margin
}

/// Ground-plane Euclidean distance between box centers (`cz` ignored).
pub fn center_distance_2d(a: &Box3D, b: &Box3D) -> f64 {
    (a.cx - b.cx).hypot(a.cy - b.cy)
}

/// IoU of the two yaw-rotated BEV rectangles, by convex polygon clipping.
pub fn bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let area_a = a.l * a.w;
    let area_b = b.l * b.w;
    let inter = convex_intersection_area(&a.bev_corners(), &b.bev_corners());
    // clipping noise on disjoint or touching rectangles
    if inter < 1e-12 {
        return 0.0;
    }
    let union = area_a + area_b - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// IoU after aligning centers and yaws: per-axis overlap is min(dim).
pub fn aligned_iou_3d(a: &Box3D, b: &Box3D) -> f64 {
    let inter = a.l.min(b.l) * a.w.min(b.w) * a.h.min(b.h);
    let union = a.l * a.w * a.h + b.l * b.w * b.h - inter;
    inter / union
}

/// Area of the intersection of two convex polygons (counterclockwise
/// vertices), via Sutherland-Hodgman clipping and the shoelace formula.
fn convex_intersection_area(subject: &[[f64; 2]; 4], clip: &[[f64; 2]; 4]) -> f64 {
    let mut poly: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if poly.is_empty() {
            return 0.0;
        }
        let edge_a = clip[i];
        let edge_b = clip[(i + 1) % clip.len()];
        poly = clip_against_edge(&poly, edge_a, edge_b);
    }
    polygon_area(&poly)
}

/// Keeps the part of `poly` on the left of the directed edge a->b.
fn clip_against_edge(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let inside = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0.0;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let cur_in = inside(cur);
        let prev_in = inside(prev);
        if cur_in {
            if !prev_in {
                out.push(line_intersection(prev, cur, a, b));
            }
            out.push(cur);
        } else if prev_in {
            out.push(line_intersection(prev, cur, a, b));
        }
    }
    out
}

/// Intersection of segment p->q with the infinite line through a->b.
fn line_intersection(p: [f64; 2], q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let r = [q[0] - p[0], q[1] - p[1]];
    let s = [b[0] - a[0], b[1] - a[1]];
    let denom = r[0] * s[1] - r[1] * s[0];
    // callers only clip segments that genuinely cross the line
    let t = ((a[0] - p[0]) * s[1] - (a[1] - p[1]) * s[0]) / denom;
    [p[0] + t * r[0], p[1] + t * r[1]]
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}
