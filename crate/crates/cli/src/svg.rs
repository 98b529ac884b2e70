//! Static SVG rendering of a run: planar trajectory over the predicate
//! regions, and the barrier and funnel time series.

use std::fmt::Write;

use stlcbf::sim::{flags, TrajectoryLog};
use stlcbf::stl::PredicateTable;

const PANEL: f64 = 420.0;
const PAD: f64 = 40.0;
const CELLS: usize = 140;
const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#76b7b2", "#edc948", "#9c755f"];

/// Maps a data range onto a pixel range.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, px_lo: f64, px_hi: f64) -> Self {
        let (lo, hi) = if hi - lo < 1e-9 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        Self { lo, hi, px_lo, px_hi }
    }

    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn at(&self, k: usize, n: usize) -> f64 {
        self.lo + (self.hi - self.lo) * k as f64 / n as f64
    }
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, style: &str) {
    let mut d = String::new();
    for (x, y) in pts {
        if x.is_finite() && y.is_finite() {
            let _ = write!(d, "{x:.2},{y:.2} ");
        }
    }
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, d.trim_end());
}

fn text(out: &mut String, x: f64, y: f64, anchor: &str, s: &str) {
    let _ = writeln!(out, r#"<text x="{x:.1}" y="{y:.1}" font-size="11" text-anchor="{anchor}">{s}</text>"#);
}

fn frame(out: &mut String, ax: &Axis, ay: &Axis, title: &str) {
    let (x0, x1, y0, y1) = (ax.px_lo, ax.px_hi, ay.px_hi, ay.px_lo);
    let _ = writeln!(out, r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#333"/>"##, x1 - x0, y1 - y0);
    text(out, (x0 + x1) / 2.0, y0 - 8.0, "middle", title);
    for k in 0..=4 {
        let (vx, vy) = (ax.at(k, 4), ay.at(k, 4));
        text(out, ax.map(vx), y1 + 14.0, "middle", &format!("{vx:.2}"));
        text(out, x0 - 4.0, ay.map(vy) + 4.0, "end", &format!("{vy:.2}"));
    }
}

/// Planar view: predicate regions sampled on a grid, true and estimated
/// position traces, start and end markers.
fn plane(out: &mut String, log: &TrajectoryLog, predicates: &PredicateTable) {
    let (mut xl, mut xh) = bounds(log.rows.iter().map(|r| &r.x[0]));
    let (mut yl, mut yh) = bounds(log.rows.iter().map(|r| &r.x[1]));
    let span = (xh - xl).max(yh - yl).max(1.0);
    let (cx, cy) = ((xl + xh) / 2.0, (yl + yh) / 2.0);
    (xl, xh, yl, yh) = (cx - 0.6 * span, cx + 0.6 * span, cy - 0.6 * span, cy + 0.6 * span);
    let ax = Axis::new(xl, xh, PAD, PAD + PANEL);
    let ay = Axis::new(yl, yh, PAD + PANEL, PAD);
    let (cw, ch) = (PANEL / CELLS as f64, PANEL / CELLS as f64);
    for (k, def) in predicates.iter().filter(|d| d.dim() == 2).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(out, r#"<g fill="{color}" fill-opacity="0.3">"#);
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for j in 0..CELLS {
            let y = ay.at(2 * j + 1, 2 * CELLS);
            let mut run: Option<usize> = None;
            for i in 0..=CELLS {
                let inside = i < CELLS && def.eval(&[ax.at(2 * i + 1, 2 * CELLS), y]).is_ok_and(|h| h >= 0.0);
                if inside {
                    sx += ax.at(2 * i + 1, 2 * CELLS);
                    sy += y;
                    n += 1;
                }
                match (inside, run) {
                    (true, None) => run = Some(i),
                    (false, Some(s)) => {
                        let px = PAD + s as f64 * cw;
                        let py = PAD + PANEL - (j + 1) as f64 * ch;
                        let _ = writeln!(out, r#"<rect x="{px:.2}" y="{py:.2}" width="{:.2}" height="{ch:.2}"/>"#, (i - s) as f64 * cw);
                        run = None;
                    }
                    _ => {}
                }
            }
        }
        out.push_str("</g>\n");
        if n > 0 {
            text(out, ax.map(sx / n as f64), ay.map(sy / n as f64), "middle", &def.name);
        }
    }
    polyline(out, log.rows.iter().map(|r| (ax.map(r.xhat[0]), ay.map(r.xhat[1]))), r##"stroke="#999" stroke-dasharray="4 3""##);
    polyline(out, log.rows.iter().map(|r| (ax.map(r.x[0]), ay.map(r.x[1]))), r##"stroke="#000" stroke-width="1.5""##);
    if let (Some(first), Some(last)) = (log.rows.first(), log.rows.last()) {
        for (r, fill) in [(first, "#fff"), (last, "#000")] {
            let _ = writeln!(out, r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{fill}" stroke="#000"/>"##, ax.map(r.x[0]), ay.map(r.x[1]));
        }
    }
    frame(out, &ax, &ay, "trajectory (solid: x, dashed: estimate)");
}

/// Time series of `hhat`, `e` and `rho` on the rows where the barrier is live.
fn series(out: &mut String, log: &TrajectoryLog, left: f64) {
    let live: Vec<_> = log.live_rows().collect();
    let (tl, th) = bounds(log.rows.iter().map(|r| &r.t));
    let (vl, vh) = bounds(live.iter().flat_map(|r| [&r.hhat, &r.e, &r.rho]));
    let (vl, vh) = (vl.min(0.0), if vh.is_finite() { vh } else { 1.0 });
    let ax = Axis::new(tl, th, left, left + PANEL);
    let ay = Axis::new(vl, vh, PAD + PANEL, PAD);
    let _ = writeln!(out, r##"<line x1="{}" x2="{}" y1="{y:.2}" y2="{y:.2}" stroke="#bbb"/>"##, ax.px_lo, ax.px_hi, y = ay.map(0.0));
    // Split at releases so jumps are not drawn as ramps.
    let mut segments: Vec<Vec<_>> = vec![Vec::new()];
    for r in &live {
        if r.flags & flags::RELEASE_RESET != 0 {
            segments.last_mut().expect("nonempty").push(*r);
            segments.push(Vec::new());
        }
        segments.last_mut().expect("nonempty").push(*r);
    }
    for seg in &segments {
        polyline(out, seg.iter().map(|r| (ax.map(r.t), ay.map(r.rho))), r##"stroke="#e15759""##);
        polyline(out, seg.iter().map(|r| (ax.map(r.t), ay.map(r.e))), r##"stroke="#4e79a7""##);
        polyline(out, seg.iter().map(|r| (ax.map(r.t), ay.map(r.hhat))), r##"stroke="#000""##);
    }
    frame(out, &ax, &ay, "hhat (black), e (blue), rho (red)");
}

pub fn render(log: &TrajectoryLog, predicates: &PredicateTable) -> String {
    let width = 3.0 * PAD + 2.0 * PANEL + PAD;
    let height = 2.0 * PAD + PANEL + 10.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n");
    if log.state_dim >= 2 {
        plane(&mut out, log, predicates);
    }
    series(&mut out, log, 3.0 * PAD + PANEL);
    out.push_str("</svg>\n");
    out
}
