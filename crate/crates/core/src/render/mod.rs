//! Figure grids and summary tables. Figures are written as SVG and then
//! rasterized to PNG from that same SVG.

mod png;
mod svg;
mod table;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::rlstats::{IntervalEstimate, ProfileCurve};
use svg::{assign_colors as colors_for, padded_range, Frame, Svg, LEGEND_ROW};

pub use png::{svg_to_png, PNG_DPI};
pub use svg::{assign_colors, PALETTE};
pub use table::{emit_summary_table, format_sig4, summary_csv, summary_markdown, SummaryRow, TableFormat};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("figure has no panels")]
    EmptyFigure,
    #[error("panel `{panel}`, series `{series}`: {reason}")]
    InconsistentSeries {
        panel: String,
        series: String,
        reason: String,
    },
    #[error("summary table needs at least one method")]
    EmptyTable,
    #[error("invalid plot config: {0}")]
    InvalidConfig(String),
    #[error("could not rasterize SVG: {0}")]
    Raster(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotConfig {
    pub ncols: usize,
    pub ncols_legend: usize,
    pub xlabel: String,
    pub ylabel: String,
    pub max_steps: Option<f64>,
    /// Whole-figure size in inches.
    pub figsize: Option<(f64, f64)>,
    /// Label → CSS color, taking precedence over hashed colors.
    pub colors: BTreeMap<String, String>,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self {
            ncols: 2,
            ncols_legend: 2,
            xlabel: "Steps".into(),
            ylabel: "Episodic Return".into(),
            max_steps: None,
            figsize: None,
            colors: BTreeMap::new(),
        }
    }
}

impl PlotConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        if self.ncols == 0 {
            return Err(RenderError::InvalidConfig("ncols must be >= 1".into()));
        }
        if self.ncols_legend == 0 {
            return Err(RenderError::InvalidConfig("ncols_legend must be >= 1".into()));
        }
        if let Some((w, h)) = self.figsize {
            if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
                return Err(RenderError::InvalidConfig(format!("figsize must be positive, got {w} x {h}")));
            }
        }
        Ok(())
    }
}

/// What the shaded region around a mean line represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShadeKind {
    #[default]
    Std,
    Ci,
}

impl ShadeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShadeKind::Std => "std",
            ShadeKind::Ci => "ci",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            ShadeKind::Std => "shaded: mean ± 1 standard deviation",
            ShadeKind::Ci => "shaded: 95% bootstrap CI of the mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub series: Vec<Series>,
    /// Fixed y range; otherwise fitted to the data.
    pub y_range: Option<(f64, f64)>,
}

impl Panel {
    pub fn new(title: impl Into<String>, series: Vec<Series>) -> Self {
        Self {
            title: title.into(),
            series,
            y_range: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FigureSpec {
    pub panels: Vec<Panel>,
    pub subtitle: Option<String>,
}

/// Rows and columns used for `n` panels.
pub fn grid_shape(n: usize, ncols: usize) -> (usize, usize) {
    let cols = ncols.max(1);
    (n.div_ceil(cols), cols)
}

const CELL_W: f64 = 340.0;
const CELL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 48.0;

struct Layout {
    width: f64,
    height: f64,
    header: f64,
    cell_w: f64,
    cell_h: f64,
    legend_top: f64,
}

fn layout(n_panels: usize, n_labels: usize, cfg: &PlotConfig, has_subtitle: bool) -> Layout {
    let (rows, cols) = grid_shape(n_panels, cfg.ncols);
    let header = if has_subtitle { 26.0 } else { 6.0 };
    let legend_h = n_labels.div_ceil(cfg.ncols_legend) as f64 * LEGEND_ROW + 10.0;
    let (width, cell_w, cell_h) = match cfg.figsize {
        Some((w, h)) => {
            let (w, h) = (w * 100.0, h * 100.0);
            let cell_h = ((h - header - legend_h) / rows as f64).max(120.0);
            (w, w / cols as f64, cell_h)
        }
        None => (cols as f64 * CELL_W, CELL_W, CELL_H),
    };
    let legend_top = header + rows as f64 * cell_h;
    Layout {
        width,
        height: legend_top + legend_h,
        header,
        cell_w,
        cell_h,
        legend_top,
    }
}

fn plot_frame(l: &Layout, index: usize, ncols: usize, x: (f64, f64), y: (f64, f64)) -> Frame {
    let (r, c) = (index / ncols, index % ncols);
    Frame {
        left: c as f64 * l.cell_w + MARGIN_L,
        top: l.header + r as f64 * l.cell_h + MARGIN_T,
        width: (l.cell_w - MARGIN_L - MARGIN_R).max(10.0),
        height: (l.cell_h - MARGIN_T - MARGIN_B).max(10.0),
        x0: x.0,
        x1: x.1,
        y0: y.0,
        y1: y.1,
    }
}

fn check_series(panel: &Panel) -> Result<(), RenderError> {
    for s in &panel.series {
        let bad = |reason: String| RenderError::InconsistentSeries {
            panel: panel.title.clone(),
            series: s.label.clone(),
            reason,
        };
        if s.x.len() != s.y.len() {
            return Err(bad(format!("{} x values but {} y values", s.x.len(), s.y.len())));
        }
        if let Some(b) = &s.band {
            if b.len() != s.x.len() {
                return Err(bad(format!("{} points but {} band entries", s.x.len(), b.len())));
            }
        }
    }
    Ok(())
}

fn finite_points(s: &Series) -> Vec<(f64, f64)> {
    s.x.iter()
        .zip(&s.y)
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .map(|(&x, &y)| (x, y))
        .collect()
}

fn band_points(s: &Series) -> Vec<(f64, f64, f64)> {
    match &s.band {
        Some(b) => s
            .x
            .iter()
            .zip(b)
            .filter(|(x, (lo, hi))| x.is_finite() && lo.is_finite() && hi.is_finite())
            .map(|(&x, &(lo, hi))| (x, lo, hi))
            .collect(),
        None => Vec::new(),
    }
}

fn data_ranges(panel: &Panel) -> ((f64, f64), (f64, f64)) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in &panel.series {
        for (x, y) in finite_points(s) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        for (x, lo, hi) in band_points(s) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(lo);
            y1 = y1.max(hi);
        }
    }
    let x = if x0.is_finite() && x1 > x0 { (x0, x1) } else { padded_range(x0, x1, 0.0) };
    let y = match panel.y_range {
        Some(r) => r,
        None => padded_range(y0, y1, 0.05),
    };
    (x, y)
}

/// Labels in order of first appearance across panels.
fn legend_labels(panels: &[Panel]) -> Vec<String> {
    let mut labels: Vec<String> = Vec::new();
    for s in panels.iter().flat_map(|p| &p.series) {
        if !labels.contains(&s.label) {
            labels.push(s.label.clone());
        }
    }
    labels
}

fn subtitle(svg: &mut Svg, text: &Option<String>, width: f64) {
    if let Some(t) = text {
        svg.text(width / 2.0, 17.0, 11.0, "middle", t);
    }
}

/// SVG text of a line-plot grid.
pub fn curve_grid_svg(spec: &FigureSpec, cfg: &PlotConfig) -> Result<String, RenderError> {
    cfg.validate()?;
    if spec.panels.is_empty() {
        return Err(RenderError::EmptyFigure);
    }
    spec.panels.iter().try_for_each(check_series)?;
    let labels = legend_labels(&spec.panels);
    let colors = colors_for(labels.iter().map(String::as_str), &cfg.colors);
    let l = layout(spec.panels.len(), labels.len(), cfg, spec.subtitle.is_some());
    let mut svg = Svg::begin(l.width, l.height);
    subtitle(&mut svg, &spec.subtitle, l.width);
    for (i, panel) in spec.panels.iter().enumerate() {
        let (x, y) = data_ranges(panel);
        let f = plot_frame(&l, i, cfg.ncols, x, y);
        svg.open_panel(&panel.title, &f);
        svg.axes(&f, &cfg.xlabel, &cfg.ylabel, true);
        for s in &panel.series {
            svg.band(&f, &s.label, &colors[&s.label], &band_points(s));
        }
        for s in &panel.series {
            svg.polyline(&f, &s.label, &colors[&s.label], &finite_points(s));
        }
        svg.close_panel();
    }
    svg.legend(&labels, &colors, l.width, l.legend_top, cfg.ncols_legend);
    Ok(svg.finish())
}

/// Writes `<out_base>.svg` and its PNG rendering `<out_base>.png`.
pub fn write_figure(svg_text: &str, out_base: &Path) -> Result<Vec<PathBuf>, RenderError> {
    let svg_path = with_suffix(out_base, "svg");
    let png_path = with_suffix(out_base, "png");
    if let Some(dir) = svg_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| RenderError::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(&svg_path, svg_text).map_err(|e| RenderError::Io {
        path: svg_path.clone(),
        source: e,
    })?;
    let png = svg_to_png(svg_text)?;
    fs::write(&png_path, png).map_err(|e| RenderError::Io {
        path: png_path.clone(),
        source: e,
    })?;
    Ok(vec![svg_path, png_path])
}

/// `base` with `.ext` appended (not replacing anything after a dot in the name).
pub fn with_suffix(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn render_curve_grid(spec: &FigureSpec, cfg: &PlotConfig, out_base: &Path) -> Result<Vec<PathBuf>, RenderError> {
    write_figure(&curve_grid_svg(spec, cfg)?, out_base)
}

/// All interval estimates of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodIntervals {
    pub label: String,
    pub estimates: Vec<IntervalEstimate>,
}

/// One panel per aggregator, one horizontal bar per method. `cfg.xlabel`
/// labels the score axis.
pub fn interval_estimates_svg(
    methods: &[MethodIntervals],
    cfg: &PlotConfig,
    subtitle_text: Option<String>,
) -> Result<String, RenderError> {
    cfg.validate()?;
    let mut aggregators: Vec<String> = Vec::new();
    for e in methods.iter().flat_map(|m| &m.estimates) {
        let name = e.method.name().to_string();
        if !aggregators.contains(&name) {
            aggregators.push(name);
        }
    }
    if aggregators.is_empty() {
        return Err(RenderError::EmptyFigure);
    }
    let labels: Vec<String> = methods.iter().map(|m| m.label.clone()).collect();
    let colors = colors_for(labels.iter().map(String::as_str), &cfg.colors);
    let l = layout(aggregators.len(), labels.len(), cfg, subtitle_text.is_some());
    let mut svg = Svg::begin(l.width, l.height);
    subtitle(&mut svg, &subtitle_text, l.width);
    let rows = methods.len() as f64;
    for (i, agg) in aggregators.iter().enumerate() {
        let bars: Vec<(&str, &IntervalEstimate)> = methods
            .iter()
            .filter_map(|m| {
                m.estimates
                    .iter()
                    .find(|e| e.method.name() == agg)
                    .map(|e| (m.label.as_str(), e))
            })
            .collect();
        let (lo, hi) = bars.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (_, e)| {
            (a.min(e.lo).min(e.point), b.max(e.hi).max(e.point))
        });
        let f = plot_frame(&l, i, cfg.ncols, padded_range(lo, hi, 0.08), (0.0, rows));
        svg.open_panel(agg, &f);
        svg.axes(&f, &cfg.xlabel, "", false);
        for (label, e) in bars {
            let row = methods.iter().position(|m| m.label == label).unwrap() as f64;
            let center = rows - row - 0.5;
            let (top, bottom) = (f.py(center + 0.3), f.py(center - 0.3));
            let color = &colors[label];
            if e.hi > e.lo {
                svg.raw(&format!(
                    r#"<rect class="interval" data-series="{}" x="{}" y="{}" width="{}" height="{}" fill="{color}" fill-opacity="0.75"/>"#,
                    svg::escape(label),
                    svg::f2(f.px(e.lo)),
                    svg::f2(top),
                    svg::f2(f.px(e.hi) - f.px(e.lo)),
                    svg::f2(bottom - top)
                ));
                svg.raw(&format!(
                    r##"<line class="point" data-series="{}" x1="{x}" y1="{}" x2="{x}" y2="{}" stroke="#111111" stroke-width="1.5"/>"##,
                    svg::escape(label),
                    svg::f2(top),
                    svg::f2(bottom),
                    x = svg::f2(f.px(e.point)),
                ));
            } else {
                svg.raw(&format!(
                    r##"<circle class="point" data-series="{}" cx="{}" cy="{}" r="4" fill="{color}" stroke="#111111" stroke-width="1"/>"##,
                    svg::escape(label),
                    svg::f2(f.px(e.point)),
                    svg::f2(f.py(center))
                ));
            }
        }
        svg.close_panel();
    }
    svg.legend(&labels, &colors, l.width, l.legend_top, cfg.ncols_legend);
    Ok(svg.finish())
}

pub fn render_interval_estimates(
    methods: &[MethodIntervals],
    cfg: &PlotConfig,
    subtitle_text: Option<String>,
    out_base: &Path,
) -> Result<Vec<PathBuf>, RenderError> {
    write_figure(&interval_estimates_svg(methods, cfg, subtitle_text)?, out_base)
}

/// Step-function form: each value holds until the next threshold.
fn steps(taus: &[f64], values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(taus.len() * 2);
    let mut y = Vec::with_capacity(taus.len() * 2);
    for (i, (&t, &v)) in taus.iter().zip(values).enumerate() {
        if i > 0 {
            x.push(t);
            y.push(values[i - 1]);
        }
        x.push(t);
        y.push(v);
    }
    (x, y)
}

/// Performance profiles of every method in one panel. `score_label` names the
/// normalization, e.g. "Min-max normalized score".
pub fn performance_profiles_svg(
    profiles: &[(String, ProfileCurve)],
    score_label: &str,
    cfg: &PlotConfig,
    subtitle_text: Option<String>,
) -> Result<String, RenderError> {
    if profiles.is_empty() {
        return Err(RenderError::EmptyFigure);
    }
    let series = profiles
        .iter()
        .map(|(label, p)| {
            let (x, y) = steps(&p.taus, &p.fractions);
            let lo: Vec<f64> = p.bands.iter().map(|b| b.0).collect();
            let hi: Vec<f64> = p.bands.iter().map(|b| b.1).collect();
            let (_, lo) = steps(&p.taus, &lo);
            let (_, hi) = steps(&p.taus, &hi);
            Series {
                label: label.clone(),
                x,
                y,
                band: Some(lo.into_iter().zip(hi).collect()),
            }
        })
        .collect();
    let mut panel = Panel::new("Performance profile", series);
    panel.y_range = Some((-0.02, 1.02));
    let cfg = PlotConfig {
        xlabel: format!("{score_label} (τ)"),
        ylabel: "Fraction of runs with score > τ".into(),
        ncols: 1,
        ..cfg.clone()
    };
    curve_grid_svg(
        &FigureSpec {
            panels: vec![panel],
            subtitle: subtitle_text,
        },
        &cfg,
    )
}

pub fn render_performance_profiles(
    profiles: &[(String, ProfileCurve)],
    score_label: &str,
    cfg: &PlotConfig,
    subtitle_text: Option<String>,
    out_base: &Path,
) -> Result<Vec<PathBuf>, RenderError> {
    write_figure(&performance_profiles_svg(profiles, score_label, cfg, subtitle_text)?, out_base)
}
