//! Minimal SVG output: top-down trajectory and barrier traces.

use std::fmt::Write;

use super::config::ScenarioConfig;
use super::log::LogRow;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 30.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            return Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        let mx = ((f.x1 - f.x0) * 0.05).max(1e-3);
        let my = ((f.y1 - f.y0) * 0.05).max(1e-3);
        Frame {
            x0: f.x0 - mx,
            x1: f.x1 + mx,
            y0: f.y0 - my,
            y1: f.y1 + my,
        }
    }

    fn sx(&self, x: f64) -> f64 {
        PAD + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn sy(&self, y: f64) -> f64 {
        H - PAD - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }

    fn polyline(&self, pts: &[(f64, f64)], color: &str) -> String {
        let mut s = String::new();
        for &(x, y) in pts {
            let _ = write!(s, "{:.2},{:.2} ", self.sx(x), self.sy(y));
        }
        format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n", s.trim_end())
    }
}

fn open() -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n")
}

/// Base path, planner path, boxes and their inflated barrier discs, equal-aspect.
pub fn trajectory_svg(cfg: &ScenarioConfig, rows: &[LogRow]) -> String {
    let r_clear = cfg.planner.robot_clearance;
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.record.base.x, r.record.base.y)).collect();
    pts.push((cfg.scenario.goal[0], cfg.scenario.goal[1]));
    pts.push((cfg.scenario.start[0], cfg.scenario.start[1]));
    for b in &cfg.boxes {
        let r = b.half_extent * 2f64.sqrt() + r_clear;
        pts.push((b.center[0] - r, b.center[1] - r));
        pts.push((b.center[0] + r, b.center[1] + r));
    }
    let mut f = Frame::fit(pts.into_iter());
    // equal aspect: widen the tighter axis
    let sx = (f.x1 - f.x0) / (W - 2.0 * PAD);
    let sy = (f.y1 - f.y0) / (H - 2.0 * PAD);
    let s = sx.max(sy);
    let (cx, cy) = ((f.x0 + f.x1) / 2.0, (f.y0 + f.y1) / 2.0);
    f.x0 = cx - s * (W - 2.0 * PAD) / 2.0;
    f.x1 = cx + s * (W - 2.0 * PAD) / 2.0;
    f.y0 = cy - s * (H - 2.0 * PAD) / 2.0;
    f.y1 = cy + s * (H - 2.0 * PAD) / 2.0;

    let mut svg = open();
    let last = rows.last();
    for (i, b) in cfg.boxes.iter().enumerate() {
        let r = b.half_extent * 2f64.sqrt() + r_clear;
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>",
            f.sx(b.center[0]),
            f.sy(b.center[1]),
            r / s
        );
        let c = last.and_then(|l| l.record.boxes.get(i)).map_or((b.center[0], b.center[1]), |v| (v.x, v.y));
        let half = b.half_extent / s;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#d99\" stroke=\"#733\"/>",
            f.sx(c.0) - half,
            f.sy(c.1) - half,
            2.0 * half,
            2.0 * half
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{} kg</text>",
            f.sx(c.0) - half,
            f.sy(c.1) - half - 3.0,
            b.mass
        );
    }
    let plan: Vec<(f64, f64)> = rows.iter().map(|r| (r.record.phi.x, r.record.phi.y)).collect();
    let base: Vec<(f64, f64)> = rows.iter().map(|r| (r.record.base.x, r.record.base.y)).collect();
    svg.push_str(&f.polyline(&plan, "#39c"));
    svg.push_str(&f.polyline(&base, "#222"));
    let _ = writeln!(
        svg,
        "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#3a3\"/>",
        f.sx(cfg.scenario.goal[0]),
        f.sy(cfg.scenario.goal[1])
    );
    svg.push_str("</svg>\n");
    svg
}

/// Barrier values of the two logged levels over time, with the zero line.
pub fn barriers_svg(rows: &[LogRow]) -> String {
    let series: Vec<Vec<(f64, f64)>> = (0..2)
        .map(|k| rows.iter().filter_map(|r| r.record.h[k].map(|h| (r.record.time, h))).collect())
        .collect();
    let f = Frame::fit(series.iter().flatten().copied().chain([(0.0, 0.0)]));
    let mut svg = open();
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        f.sx(f.x0),
        f.sy(0.0),
        f.sx(f.x1),
        f.sy(0.0)
    );
    for (pts, color) in series.iter().zip(["#c33", "#39c"]) {
        if !pts.is_empty() {
            svg.push_str(&f.polyline(pts, color));
        }
    }
    svg.push_str("<text x=\"40\" y=\"20\" font-size=\"12\" fill=\"#c33\">h1</text>\n");
    svg.push_str("<text x=\"70\" y=\"20\" font-size=\"12\" fill=\"#39c\">h2</text>\n");
    svg.push_str("</svg>\n");
    svg
}
