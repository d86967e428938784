//! Static BEV rendering to SVG: point scatter, ground-truth boxes in green,
//! predictions in blue, with a center-to-front tick marking each box's
//! heading. Output is plain text with fixed-precision coordinates, so equal
//! inputs give byte-equal files.

use std::fmt::Write as _;

use crate::geometry::Box3D;
use crate::pointcloud::PointCloud;

#[derive(Debug, Clone)]
pub struct RenderConfig {
    /// World extent drawn, meters: [xmin, ymin, xmax, ymax].
    pub extent: [f64; 4],
    /// Canvas size, pixels (square aspect is the caller's business).
    pub width: f64,
    pub height: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            extent: [-51.2, -51.2, 51.2, 51.2],
            width: 800.0,
            height: 800.0,
        }
    }
}

struct Mapper {
    cfg: RenderConfig,
}

impl Mapper {
    // world x right, world y up; SVG y grows downward
    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        let [xmin, ymin, xmax, ymax] = self.cfg.extent;
        let px = (x - xmin) / (xmax - xmin) * self.cfg.width;
        let py = self.cfg.height - (y - ymin) / (ymax - ymin) * self.cfg.height;
        (px, py)
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.2}")
}

fn push_polygon(svg: &mut String, m: &Mapper, b: &Box3D, stroke: &str) {
    let corners = b.bev_corners();
    let mut points = String::new();
    for [x, y] in corners {
        let (px, py) = m.map(x, y);
        let _ = write!(points, "{},{} ", fmt_f(px), fmt_f(py));
    }
    let _ = writeln!(
        svg,
        r#"  <polygon points="{}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#,
        points.trim_end()
    );
    // heading tick: center to front-edge midpoint
    let (sin, cos) = b.yaw.sin_cos();
    let front = (b.cx + b.l / 2.0 * cos, b.cy + b.l / 2.0 * sin);
    let (cx, cy) = m.map(b.cx, b.cy);
    let (fx, fy) = m.map(front.0, front.1);
    let _ = writeln!(
        svg,
        r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="1.5"/>"#,
        fmt_f(cx),
        fmt_f(cy),
        fmt_f(fx),
        fmt_f(fy)
    );
}

/// Renders a BEV scene. Either box list may be empty.
pub fn render_bev(
    pc: Option<&PointCloud>,
    gt_boxes: &[Box3D],
    pred_boxes: &[Box3D],
    cfg: &RenderConfig,
) -> String {
    let m = Mapper { cfg: cfg.clone() };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        fmt_f(cfg.width),
        fmt_f(cfg.height),
        fmt_f(cfg.width),
        fmt_f(cfg.height)
    );
    let _ = writeln!(
        svg,
        r#"  <rect width="{}" height="{}" fill="white"/>"#,
        fmt_f(cfg.width),
        fmt_f(cfg.height)
    );
    // axes through the world origin
    let (ox, oy) = m.map(0.0, 0.0);
    let _ = writeln!(
        svg,
        r##"  <line x1="0" y1="{oy}" x2="{w}" y2="{oy}" stroke="#dddddd" stroke-width="1"/>"##,
        oy = fmt_f(oy),
        w = fmt_f(cfg.width)
    );
    let _ = writeln!(
        svg,
        r##"  <line x1="{ox}" y1="0" x2="{ox}" y2="{h}" stroke="#dddddd" stroke-width="1"/>"##,
        ox = fmt_f(ox),
        h = fmt_f(cfg.height)
    );
    if let Some(pc) = pc {
        for i in 0..pc.len() {
            let (px, py) = m.map(pc.x[i] as f64, pc.y[i] as f64);
            if px < 0.0 || px > cfg.width || py < 0.0 || py > cfg.height {
                continue;
            }
            let _ = writeln!(
                svg,
                r##"  <circle cx="{}" cy="{}" r="0.8" fill="#888888"/>"##,
                fmt_f(px),
                fmt_f(py)
            );
        }
    }
    for b in gt_boxes {
        push_polygon(&mut svg, &m, b, "green");
    }
    for b in pred_boxes {
        push_polygon(&mut svg, &m, b, "blue");
    }
    svg.push_str("</svg>\n");
    svg
}
