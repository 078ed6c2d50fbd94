//! Low-level SVG assembly. User units are 1/100 inch; the root element
//! declares its size in inches so rasterizers know the physical scale.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::rng::fnv1a64;

pub(crate) const UNITS_PER_INCH: f64 = 100.0;
pub(crate) const FONT: &str = "DejaVu Sans";

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Colors by label hash; a label whose slot is taken moves to the next free
/// slot, so every label in one figure is distinct while there are ≤ 10.
pub fn assign_colors<'a>(
    labels: impl IntoIterator<Item = &'a str>,
    overrides: &BTreeMap<String, String>,
) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut used = [false; PALETTE.len()];
    for label in labels {
        if out.contains_key(label) {
            continue;
        }
        if let Some(c) = overrides.get(label) {
            out.insert(label.to_string(), c.clone());
            continue;
        }
        let start = (fnv1a64(label) % PALETTE.len() as u64) as usize;
        let slot = (0..PALETTE.len())
            .map(|k| (start + k) % PALETTE.len())
            .find(|&s| !used[s])
            .unwrap_or(start);
        used[slot] = true;
        out.insert(label.to_string(), PALETTE[slot].to_string());
    }
    out
}

/// Fixed two-decimal coordinate, never `-0.00`.
pub(crate) fn f2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn nice_step(range: f64) -> f64 {
    let raw = range / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 2.5 {
        2.5
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// Round-number ticks inside `[lo, hi]` and the step between them.
pub(crate) fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let step = nice_step(hi - lo);
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

pub(crate) fn tick_label(v: f64, step: f64, largest: f64) -> String {
    let (scale, suffix) = if largest >= 1e6 {
        (1e6, "M")
    } else if largest >= 1e4 {
        (1e3, "k")
    } else {
        (1.0, "")
    };
    let s = step / scale;
    let decimals = (0..=6)
        .find(|&d| {
            let x = s * 10f64.powi(d);
            (x - x.round()).abs() < 1e-6 * x.abs().max(1.0)
        })
        .unwrap_or(6) as usize;
    let text = format!("{:.*}", decimals, v / scale);
    let text = if text.starts_with('-') && text[1..].chars().all(|c| c == '0' || c == '.') {
        text[1..].to_string()
    } else {
        text
    };
    format!("{text}{suffix}")
}

/// A plot area and the data ranges mapped onto it.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Frame {
    pub fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x0) / (self.x1 - self.x0) * self.width
    }

    pub fn py(&self, y: f64) -> f64 {
        self.top + self.height - (y - self.y0) / (self.y1 - self.y0) * self.height
    }
}

/// Expands a degenerate range and pads a data range by `pad` of its width.
pub(crate) fn padded_range(lo: f64, hi: f64, pad: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
        let half = (lo.abs() * 0.1).max(0.5);
        return (lo - half, hi + half);
    }
    let p = (hi - lo) * pad;
    (lo - p, hi + p)
}

pub(crate) struct Svg {
    pub buf: String,
}

impl Svg {
    pub fn begin(width: f64, height: f64) -> Self {
        let mut buf = String::new();
        writeln!(
            buf,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}in" height="{}in" viewBox="0 0 {} {}" font-family="{FONT}">"#,
            f2(width / UNITS_PER_INCH),
            f2(height / UNITS_PER_INCH),
            f2(width),
            f2(height)
        )
        .unwrap();
        writeln!(buf, r#"<rect width="{}" height="{}" fill="white"/>"#, f2(width), f2(height)).unwrap();
        Self { buf }
    }

    pub fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }

    pub fn raw(&mut self, s: &str) {
        self.buf.push_str(s);
        self.buf.push('\n');
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        writeln!(
            self.buf,
            r#"<text x="{}" y="{}" font-size="{}" text-anchor="{anchor}">{}</text>"#,
            f2(x),
            f2(y),
            f2(size),
            escape(content)
        )
        .unwrap();
    }

    pub fn vtext(&mut self, x: f64, y: f64, size: f64, content: &str) {
        writeln!(
            self.buf,
            r#"<text x="{0}" y="{1}" font-size="{2}" text-anchor="middle" transform="rotate(-90 {0} {1})">{3}</text>"#,
            f2(x),
            f2(y),
            f2(size),
            escape(content)
        )
        .unwrap();
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        writeln!(
            self.buf,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}" stroke-width="{}"/>"#,
            f2(x1),
            f2(y1),
            f2(x2),
            f2(y2),
            f2(width)
        )
        .unwrap();
    }

    /// Axes box, grid lines and tick labels for `frame`.
    pub fn axes(&mut self, f: &Frame, xlabel: &str, ylabel: &str, y_ticks: bool) {
        writeln!(
            self.buf,
            r##"<rect class="frame" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#333333" stroke-width="0.8"/>"##,
            f2(f.left),
            f2(f.top),
            f2(f.width),
            f2(f.height)
        )
        .unwrap();
        let bottom = f.top + f.height;
        let (xt, xstep) = ticks(f.x0, f.x1);
        let xlargest = f.x0.abs().max(f.x1.abs());
        for x in xt {
            let px = f.px(x);
            self.line(px, f.top, px, bottom, "#e5e5e5", 0.5);
            self.line(px, bottom, px, bottom + 3.0, "#333333", 0.8);
            self.text(px, bottom + 13.0, 9.0, "middle", &tick_label(x, xstep, xlargest));
        }
        if y_ticks {
            let (yt, ystep) = ticks(f.y0, f.y1);
            let ylargest = f.y0.abs().max(f.y1.abs());
            for y in yt {
                let py = f.py(y);
                self.line(f.left, py, f.left + f.width, py, "#e5e5e5", 0.5);
                self.line(f.left - 3.0, py, f.left, py, "#333333", 0.8);
                self.text(f.left - 5.0, py + 3.0, 9.0, "end", &tick_label(y, ystep, ylargest));
            }
        }
        if !xlabel.is_empty() {
            self.text(f.left + f.width / 2.0, bottom + 30.0, 11.0, "middle", xlabel);
        }
        if !ylabel.is_empty() {
            self.vtext(f.left - 45.0, f.top + f.height / 2.0, 11.0, ylabel);
        }
    }

    /// Filled band between the `hi` edge (drawn forward) and the `lo` edge
    /// (drawn backward).
    pub fn band(&mut self, f: &Frame, label: &str, color: &str, pts: &[(f64, f64, f64)]) {
        if pts.is_empty() {
            return;
        }
        let mut d = String::new();
        for (i, &(x, _, hi)) in pts.iter().enumerate() {
            let _ = write!(d, "{}{},{} ", if i == 0 { "M" } else { "L" }, f2(f.px(x)), f2(f.py(hi)));
        }
        for &(x, lo, _) in pts.iter().rev() {
            let _ = write!(d, "L{},{} ", f2(f.px(x)), f2(f.py(lo)));
        }
        d.push('Z');
        writeln!(
            self.buf,
            r#"<path class="band" data-series="{}" d="{d}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            escape(label)
        )
        .unwrap();
    }

    pub fn polyline(&mut self, f: &Frame, label: &str, color: &str, pts: &[(f64, f64)]) {
        if pts.len() == 1 {
            let (x, y) = pts[0];
            writeln!(
                self.buf,
                r#"<circle class="marker" data-series="{}" cx="{}" cy="{}" r="3" fill="{color}"/>"#,
                escape(label),
                f2(f.px(x)),
                f2(f.py(y))
            )
            .unwrap();
            return;
        }
        let points: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{},{}", f2(f.px(x)), f2(f.py(y))))
            .collect();
        writeln!(
            self.buf,
            r#"<polyline class="line" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5" stroke-linejoin="round"/>"#,
            escape(label),
            points.join(" ")
        )
        .unwrap();
    }

    pub fn open_panel(&mut self, title: &str, f: &Frame) {
        writeln!(
            self.buf,
            r#"<g class="panel" data-title="{}" data-plot-rect="{} {} {} {}" data-x-range="{} {}" data-y-range="{} {}">"#,
            escape(title),
            f2(f.left),
            f2(f.top),
            f2(f.width),
            f2(f.height),
            f.x0,
            f.x1,
            f.y0,
            f.y1
        )
        .unwrap();
        self.text(f.left + f.width / 2.0, f.top - 8.0, 11.0, "middle", title);
    }

    pub fn close_panel(&mut self) {
        self.buf.push_str("</g>\n");
    }

    /// Shared legend in `ncols` columns starting at `top`.
    pub fn legend(&mut self, labels: &[String], colors: &BTreeMap<String, String>, width: f64, top: f64, ncols: usize) {
        self.buf.push_str("<g class=\"legend\">\n");
        let col_w = width / ncols as f64;
        for (i, label) in labels.iter().enumerate() {
            let x = (i % ncols) as f64 * col_w + 15.0;
            let y = top + (i / ncols) as f64 * LEGEND_ROW + 12.0;
            let color = &colors[label];
            writeln!(
                self.buf,
                r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="3"/>"#,
                f2(x),
                f2(y - 4.0),
                f2(x + 20.0),
                f2(y - 4.0)
            )
            .unwrap();
            self.text(x + 26.0, y, 10.0, "start", label);
        }
        self.buf.push_str("</g>\n");
    }
}

pub(crate) const LEGEND_ROW: f64 = 18.0;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(ticks(0.0, 1.0), (vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0], 0.2));
        let (t, s) = ticks(0.0, 1e6);
        assert_eq!(s, 200_000.0);
        assert_eq!(tick_label(t[1], s, 1e6), "0.2M");
        assert_eq!(tick_label(2.5, 2.5, 10.0), "2.5");
        assert_eq!(tick_label(-0.0, 1.0, 10.0), "0");
    }

    #[test]
    fn colors_are_distinct_and_stable() {
        let labels = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let c = assign_colors(labels, &BTreeMap::new());
        let distinct: std::collections::BTreeSet<_> = c.values().collect();
        assert_eq!(distinct.len(), 10);
        assert_eq!(c, assign_colors(labels, &BTreeMap::new()));
        let over = BTreeMap::from([("a".to_string(), "#000000".to_string())]);
        assert_eq!(assign_colors(["a"], &over)["a"], "#000000");
    }

    #[test]
    fn f2_has_no_negative_zero() {
        assert_eq!(f2(-0.001), "0.00");
        assert_eq!(f2(1.005), "1.00");
    }
}
