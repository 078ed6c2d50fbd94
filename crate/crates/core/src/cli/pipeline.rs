use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::args::{NormalizationChoice, RlopsArgs};
use super::{open_source, CliError, Env};
use crate::curves::{align_runs, even_indices, linspace, rolling_mean_dense, AlignSpec, AlignedCurve, XAxis};
use crate::ingest::{cached_fetch, fetch_history, query_runs, HistoryFetch, IngestError, RunSource};
use crate::model::{load_normalization_table, MetricSeries, RunRecord, ScoreMatrix};
use crate::render::{
    interval_estimates_svg, performance_profiles_svg, summary_csv, summary_markdown, with_suffix, write_figure,
    curve_grid_svg, FigureSpec, MethodIntervals, Panel, PlotConfig, Series, ShadeKind, SummaryRow,
};
use crate::rlstats::{
    performance_profile, sample_efficiency_curve, stratified_bootstrap_ci, AggregateMethod, BootstrapConfig,
    DEFAULT_CONFIDENCE,
};
use crate::rng::ALGORITHM_ID;
use crate::scores::{
    build_score_matrices, clamp_scores, final_scores, normalize_atari, MethodScores, MinMaxBounds,
    NormalizationMethod, DEFAULT_TAIL_FRACTION,
};

const DISPLAY_POINTS: usize = 1_000;
const EFFICIENCY_POINTS: usize = 101;
const PROFILE_POINTS: usize = 101;
const SHADE_CI_REPS: usize = 1_000;

/// Everything a pipeline run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
    pub summary: Vec<SummaryRow>,
    /// Normalized (and clamped) score matrices, one per method.
    pub matrices: Vec<ScoreMatrix>,
    /// `(label, env_id, runs used)` for every queried pair.
    pub run_counts: Vec<(String, String, usize)>,
}

/// One experiment spec on one environment.
struct Cell {
    group: usize,
    spec: usize,
    env_pos: usize,
    env_id: String,
    label: String,
    runs: Vec<RunRecord>,
    /// `series[metric][run]`
    series: Vec<Vec<MetricSeries>>,
}

/// `base` with `tail` appended to its file name.
fn sibling(base: &Path, tail: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(tail);
    PathBuf::from(s)
}

fn failed(context: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Failed(format!("{context}: {e}"))
}

fn metric_keys(args: &RlopsArgs, multi: bool) -> Result<Vec<Vec<String>>, CliError> {
    args.filter_groups
        .iter()
        .map(|g| {
            let metrics = &g.query.metrics;
            if metrics.is_empty() {
                return Err(CliError::Usage(format!(
                    "filter query for {}/{} names no metric",
                    g.query.entity, g.query.project
                )));
            }
            if !multi && metrics.len() > 1 {
                log::warn!("rlops plots one metric per query; using `{}`", metrics[0]);
                return Ok(vec![metrics[0].clone()]);
            }
            Ok(metrics.clone())
        })
        .collect()
}

fn query_cells(source: &dyn RunSource, args: &RlopsArgs) -> Result<Vec<Cell>, CliError> {
    let mut cells = Vec::new();
    for (gi, group) in args.filter_groups.iter().enumerate() {
        for (si, spec) in group.specs.iter().enumerate() {
            for (ji, env_id) in group.env_ids.iter().enumerate() {
                let runs = match query_runs(source, &group.query, spec, env_id) {
                    Ok(runs) => runs,
                    Err(e @ (IngestError::NoRunsFound { .. } | IngestError::ProjectNotFound { .. })) => {
                        if args.check_empty_runs {
                            return Err(CliError::NoRuns(format!(
                                "{e} (spec `{}`); pass --no-check-empty-runs to skip it",
                                spec.label
                            )));
                        }
                        log::warn!("{e}; skipping `{}` on {env_id}", spec.label);
                        Vec::new()
                    }
                    Err(e) => return Err(e.into()),
                };
                cells.push(Cell {
                    group: gi,
                    spec: si,
                    env_pos: ji,
                    env_id: env_id.clone(),
                    label: spec.label.clone(),
                    runs,
                    series: Vec::new(),
                });
            }
        }
    }
    Ok(cells)
}

fn fetch_cells(
    source: &dyn RunSource,
    cache_dir: Option<&Path>,
    cells: &mut [Cell],
    keys: &[Vec<String>],
    args: &RlopsArgs,
) -> Result<(), CliError> {
    let tasks: Vec<(usize, &RunRecord)> = cells
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| c.runs.iter().map(move |r| (ci, r)))
        .collect();
    let fetch = |&(ci, run): &(usize, &RunRecord)| -> Result<HistoryFetch, IngestError> {
        let metric_keys = &keys[cells[ci].group];
        match cache_dir {
            Some(dir) => cached_fetch(source, run, metric_keys, args.scan_history, dir),
            None => fetch_history(source, run, metric_keys, args.scan_history),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| failed("thread pool", e))?;
    let results: Vec<Result<HistoryFetch, IngestError>> = pool.install(|| tasks.par_iter().map(fetch).collect());

    let mut per_cell: Vec<Vec<Vec<MetricSeries>>> =
        cells.iter().map(|c| vec![Vec::new(); keys[c.group].len()]).collect();
    for (&(ci, run), result) in tasks.iter().zip(results) {
        match result {
            Ok(h) => {
                for (mi, key) in keys[cells[ci].group].iter().enumerate() {
                    match h.get(key) {
                        Some(s) if s.present().nth(1).is_some() => per_cell[ci][mi].push(s.clone()),
                        Some(_) => log::warn!("run {}: `{key}` has fewer than 2 values; skipped", run.reference()),
                        None => {}
                    }
                }
            }
            Err(e @ (IngestError::MetricNotFound { .. } | IngestError::RunNotFound(_))) => {
                log::warn!("skipping run {}: {e}", run.reference());
            }
            Err(e) => return Err(e.into()),
        }
    }
    for (cell, series) in cells.iter_mut().zip(per_cell) {
        cell.series = series;
    }
    Ok(())
}

fn align(series: &[MetricSeries], x_axis: XAxis, grid_size: usize, max_steps: Option<f64>) -> Result<AlignedCurve, CliError> {
    align_runs(
        series,
        &AlignSpec {
            grid_size,
            max_steps,
            x_axis,
        },
    )
    .map_err(|e| failed("aligning runs", e))
}

fn smooth(curve: AlignedCurve, window: usize) -> AlignedCurve {
    if window <= 1 {
        return curve;
    }
    AlignedCurve {
        values: curve
            .values
            .iter()
            .map(|row| rolling_mean_dense(row, window).expect("window >= 1"))
            .collect(),
        ..curve
    }
}

/// Mean line with a std or bootstrap-CI band, decimated for display.
fn display_series(label: &str, task_id: &str, curve: &AlignedCurve, shade: ShadeKind, seed: u64) -> Result<Series, CliError> {
    let curve = curve.select(&even_indices(curve.grid.len(), DISPLAY_POINTS));
    let n = curve.num_runs() as f64;
    let mut mean = Vec::with_capacity(curve.grid.len());
    let mut band = Vec::with_capacity(curve.grid.len());
    match shade {
        ShadeKind::Std => {
            for g in 0..curve.grid.len() {
                let col = curve.column(g);
                let m = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
                mean.push(m);
                band.push((m - sd, m + sd));
            }
        }
        ShadeKind::Ci => {
            let cfg = BootstrapConfig::new(SHADE_CI_REPS, DEFAULT_CONFIDENCE, seed).expect("valid config");
            let e = sample_efficiency_curve(&[(task_id.to_string(), curve.clone())], AggregateMethod::Mean, &cfg)
                .map_err(|e| failed("bootstrap band", e))?;
            mean = e.point;
            band = e.bands;
        }
    }
    Ok(Series {
        label: label.to_string(),
        x: curve.grid.clone(),
        y: mean,
        band: Some(band),
    })
}

fn env_title(args: &RlopsArgs, j: usize) -> String {
    let mut ids: Vec<&str> = Vec::new();
    for g in &args.filter_groups {
        if !ids.contains(&g.env_ids[j].as_str()) {
            ids.push(&g.env_ids[j]);
        }
    }
    ids.join(" / ")
}

fn curve_figures(
    args: &RlopsArgs,
    cells: &[Cell],
    keys: &[Vec<String>],
    multi: bool,
    files: &mut Vec<PathBuf>,
) -> Result<(), CliError> {
    let n_envs = args.filter_groups[0].env_ids.len();
    let n_metrics = if multi { keys[0].len() } else { 1 };
    let mut subtitle = args.shade.describe().to_string();
    if args.smoothing_window > 1 {
        subtitle.push_str(&format!("; rolling mean over {} points", args.smoothing_window));
    }
    for (x_axis, tail) in [(XAxis::GlobalStep, ""), (XAxis::WallTime, "-time")] {
        let mut panels = Vec::with_capacity(n_metrics * n_envs);
        for mi in 0..n_metrics {
            for j in 0..n_envs {
                let title = if n_metrics > 1 {
                    format!("{} ({})", keys[0][mi], env_title(args, j))
                } else {
                    env_title(args, j)
                };
                let mut series = Vec::new();
                for cell in cells.iter().filter(|c| c.env_pos == j && !c.series[mi].is_empty()) {
                    let max = if x_axis == XAxis::GlobalStep { args.plot.max_steps } else { None };
                    let curve = smooth(align(&cell.series[mi], x_axis, crate::curves::DEFAULT_GRID_SIZE, max)?, args.smoothing_window);
                    series.push(display_series(&cell.label, &cell.env_id, &curve, args.shade, args.seed)?);
                }
                panels.push(Panel::new(title, series));
            }
        }
        let mut cfg = args.plot.clone();
        if x_axis == XAxis::WallTime {
            cfg.xlabel = "Wall time (s)".into();
        }
        let spec = FigureSpec {
            panels,
            subtitle: Some(subtitle.clone()),
        };
        let svg = curve_grid_svg(&spec, &cfg).map_err(|e| failed("rendering learning curves", e))?;
        files.extend(write_figure(&svg, &sibling(&args.output_filename, tail)).map_err(|e| failed("writing figure", e))?);
    }
    Ok(())
}

/// A method in the aggregate comparison and its cells, one per kept task.
struct Method<'a> {
    label: String,
    cells: Vec<&'a Cell>,
}

fn methods<'a>(args: &RlopsArgs, cells: &'a [Cell]) -> Result<Vec<Method<'a>>, CliError> {
    let n_envs = args.filter_groups[0].env_ids.len();
    let complete: Vec<usize> = (0..n_envs)
        .filter(|&j| cells.iter().filter(|c| c.env_pos == j).all(|c| !c.series[0].is_empty()))
        .collect();
    for j in (0..n_envs).filter(|j| !complete.contains(j)) {
        log::warn!("leaving {} out of the aggregate statistics: some method has no runs there", env_title(args, j));
    }
    if complete.is_empty() {
        return Err(CliError::NoRuns("no environment has runs for every method".into()));
    }
    let mut out = Vec::new();
    for (gi, g) in args.filter_groups.iter().enumerate() {
        for (si, spec) in g.specs.iter().enumerate() {
            let mine = complete
                .iter()
                .map(|&j| {
                    cells
                        .iter()
                        .find(|c| c.group == gi && c.spec == si && c.env_pos == j)
                        .expect("one cell per (group, spec, env)")
                })
                .collect();
            out.push(Method {
                label: spec.label.clone(),
                cells: mine,
            });
        }
    }
    Ok(out)
}

fn normalization(args: &RlopsArgs, env: &Env) -> Result<NormalizationMethod, CliError> {
    Ok(match args.rc.normalization {
        NormalizationChoice::MinMax => NormalizationMethod::MinMax,
        NormalizationChoice::None => NormalizationMethod::None,
        NormalizationChoice::Atari => {
            let path = args
                .rc
                .normalization_table
                .clone()
                .or_else(|| env.normalization_table.clone())
                .ok_or_else(|| {
                    CliError::Usage(format!(
                        "--rc.score_normalization_method atari needs a reference table: pass --rc.normalization_table or set {}",
                        super::NORMALIZATION_TABLE_ENV
                    ))
                })?;
            NormalizationMethod::Atari(load_normalization_table(&path).map_err(|e| CliError::Usage(e.to_string()))?)
        }
    })
}

fn bootstrap(reps: usize, seed: u64) -> BootstrapConfig {
    BootstrapConfig::new(reps, DEFAULT_CONFIDENCE, seed).expect("reps validated at parse time")
}

fn stat_err(e: impl std::fmt::Display) -> CliError {
    failed("statistics", e)
}

fn rliable_outputs(
    args: &RlopsArgs,
    env: &Env,
    cells: &[Cell],
    files: &mut Vec<PathBuf>,
) -> Result<(Vec<SummaryRow>, Vec<ScoreMatrix>), CliError> {
    let rc = &args.rc;
    let norm = normalization(args, env)?;
    let methods = methods(args, cells)?;

    let step_curves: Vec<Vec<AlignedCurve>> = methods
        .iter()
        .map(|m| {
            m.cells
                .iter()
                .map(|c| align(&c.series[0], XAxis::GlobalStep, crate::curves::DEFAULT_GRID_SIZE, args.plot.max_steps))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let raw: Vec<MethodScores> = methods
        .iter()
        .zip(&step_curves)
        .map(|(m, curves)| {
            Ok(MethodScores {
                label: m.label.clone(),
                tasks: m
                    .cells
                    .iter()
                    .zip(curves)
                    .map(|(c, curve)| Ok((c.env_id.clone(), final_scores(curve, DEFAULT_TAIL_FRACTION)?)))
                    .collect::<Result<_, crate::scores::ScoreError>>()?,
            })
        })
        .collect::<Result<_, crate::scores::ScoreError>>()
        .map_err(stat_err)?;
    let normalized = build_score_matrices(&raw, &norm).map_err(|e| CliError::Failed(e.to_string()))?;
    for w in &normalized.warnings {
        eprintln!("warning: {w}");
    }
    let matrices: Vec<ScoreMatrix> = match rc.threshold {
        Some(t) => normalized
            .matrices
            .iter()
            .map(|m| clamp_scores(m, t))
            .collect::<Result<_, _>>()
            .map_err(stat_err)?,
        None => normalized.matrices,
    };

    eprintln!("bootstrap seed: {} ({ALGORITHM_ID})", args.seed);
    let score_label = norm.score_label();
    let clamp_note = rc.threshold.map(|t| format!("; scores clamped at {t}")).unwrap_or_default();
    let ci_note = |reps: usize| format!("95% stratified bootstrap CIs, {reps} replicates, seed {}", args.seed);

    let interval_cfg = bootstrap(rc.interval_estimates_reps, args.seed);
    let mut intervals = Vec::with_capacity(matrices.len());
    let mut summary = Vec::new();
    for m in &matrices {
        let estimates = AggregateMethod::standard_set()
            .into_iter()
            .map(|agg| stratified_bootstrap_ci(m, agg, &interval_cfg))
            .collect::<Result<Vec<_>, _>>()
            .map_err(stat_err)?;
        for e in &estimates {
            summary.push(SummaryRow {
                method: m.method_label().to_string(),
                aggregator: e.method.name().to_string(),
                point: e.point,
                lo: e.lo,
                hi: e.hi,
            });
        }
        intervals.push(MethodIntervals {
            label: m.method_label().to_string(),
            estimates,
        });
    }

    let any_selected = rc.aggregate_metrics_plots || rc.performance_profile_plots || rc.sample_efficiency_plots;
    if rc.aggregate_metrics_plots || !any_selected {
        let cfg = PlotConfig {
            xlabel: score_label.to_string(),
            ..args.plot.clone()
        };
        let svg = interval_estimates_svg(&intervals, &cfg, Some(format!("{}{clamp_note}", ci_note(rc.interval_estimates_reps))))
            .map_err(|e| failed("rendering interval estimates", e))?;
        files.extend(write_figure(&svg, &sibling(&args.output_filename, "-aggregate")).map_err(|e| failed("writing figure", e))?);
    }

    if rc.performance_profile_plots {
        let top = match rc.threshold {
            Some(t) if t > 0.0 => t,
            _ => {
                let max = matrices.iter().flat_map(|m| m.pooled()).fold(f64::NEG_INFINITY, f64::max);
                if max > 0.0 {
                    max
                } else {
                    1.0
                }
            }
        };
        let taus = linspace(0.0, top, PROFILE_POINTS);
        let cfg = bootstrap(rc.performance_profile_reps, args.seed);
        let profiles = matrices
            .iter()
            .map(|m| Ok((m.method_label().to_string(), performance_profile(m, &taus, &cfg)?)))
            .collect::<Result<Vec<_>, crate::rlstats::StatsError>>()
            .map_err(stat_err)?;
        let svg = performance_profiles_svg(
            &profiles,
            score_label,
            &args.plot,
            Some(format!("{}{clamp_note}", ci_note(rc.performance_profile_reps))),
        )
        .map_err(|e| failed("rendering performance profiles", e))?;
        files.extend(write_figure(&svg, &sibling(&args.output_filename, "-profile")).map_err(|e| failed("writing figure", e))?);
    }

    if rc.sample_efficiency_plots {
        let raw_matrices = build_score_matrices(&raw, &NormalizationMethod::None).map_err(stat_err)?.matrices;
        let refs: Vec<&ScoreMatrix> = raw_matrices.iter().collect();
        let bounds = MinMaxBounds::from_matrices(&refs).map_err(stat_err)?;
        let normalize = |task: usize, env_id: &str, v: f64| -> Result<f64, CliError> {
            let x = match &norm {
                NormalizationMethod::MinMax => bounds.apply(task, v),
                NormalizationMethod::Atari(table) => normalize_atari(v, env_id, table).map_err(stat_err)?,
                NormalizationMethod::None => v,
            };
            Ok(rc.threshold.map_or(x, |t| x.min(t)))
        };
        let cfg = bootstrap(rc.sample_efficiency_reps, args.seed);
        for (x_axis, tail, xlabel) in [
            (XAxis::GlobalStep, "-sample-efficiency", args.plot.xlabel.clone()),
            (XAxis::WallTime, "-walltime-efficiency", "Wall time (s)".to_string()),
        ] {
            let mut series = Vec::with_capacity(methods.len());
            for m in &methods {
                let max = if x_axis == XAxis::GlobalStep { args.plot.max_steps } else { None };
                let full: Vec<AlignedCurve> = m
                    .cells
                    .iter()
                    .map(|c| align(&c.series[0], x_axis, crate::curves::DEFAULT_GRID_SIZE, max))
                    .collect::<Result<_, _>>()?;
                let common = full.iter().map(|c| *c.grid.last().unwrap()).fold(f64::INFINITY, f64::min);
                let mut per_task = Vec::with_capacity(m.cells.len());
                for (t, c) in m.cells.iter().enumerate() {
                    let curve = align(&c.series[0], x_axis, EFFICIENCY_POINTS, Some(common))?;
                    let mut values = Vec::with_capacity(curve.values.len());
                    for row in &curve.values {
                        values.push(row.iter().map(|&v| normalize(t, &c.env_id, v)).collect::<Result<Vec<_>, _>>()?);
                    }
                    per_task.push((c.env_id.clone(), AlignedCurve { values, ..curve }));
                }
                let e = sample_efficiency_curve(&per_task, rc.efficiency_method, &cfg).map_err(stat_err)?;
                series.push(Series {
                    label: m.label.clone(),
                    x: e.x,
                    y: e.point,
                    band: Some(e.bands),
                });
            }
            let plot = PlotConfig {
                ncols: 1,
                xlabel,
                ylabel: format!("{} {score_label}", rc.efficiency_method.name()),
                figsize: rc.sample_efficiency_figsize,
                ..args.plot.clone()
            };
            let title = if x_axis == XAxis::GlobalStep { "Sample efficiency" } else { "Walltime efficiency" };
            let spec = FigureSpec {
                panels: vec![Panel::new(title, series)],
                subtitle: Some(format!("{}{clamp_note}", ci_note(rc.sample_efficiency_reps))),
            };
            let svg = curve_grid_svg(&spec, &plot).map_err(|e| failed("rendering efficiency curves", e))?;
            files.extend(write_figure(&svg, &sibling(&args.output_filename, tail)).map_err(|e| failed("writing figure", e))?);
        }
    }

    let write = |path: PathBuf, text: String, files: &mut Vec<PathBuf>| -> Result<(), CliError> {
        std::fs::write(&path, text).map_err(|e| failed(&path.display().to_string(), e))?;
        files.push(path);
        Ok(())
    };
    let base = sibling(&args.output_filename, "-summary");
    write(with_suffix(&base, "csv"), summary_csv(&summary).map_err(stat_err)?, files)?;
    write(with_suffix(&base, "md"), summary_markdown(&summary).map_err(stat_err)?, files)?;
    let meta = serde_json::json!({
        "seed": args.seed,
        "rng_algorithm": ALGORITHM_ID,
        "confidence": DEFAULT_CONFIDENCE,
        "normalization": norm.name(),
        "normalized_score_threshold": rc.threshold,
        "final_score_tail_fraction": DEFAULT_TAIL_FRACTION,
        "interval_estimates_num_bootstrap_reps": rc.interval_estimates_reps,
        "performance_profile_num_bootstrap_reps": rc.performance_profile_reps,
        "sample_efficiency_num_bootstrap_reps": rc.sample_efficiency_reps,
        "efficiency_method": rc.efficiency_method.name(),
        "methods": methods.iter().map(|m| serde_json::json!({
            "label": m.label,
            "tasks": m.cells.iter().map(|c| c.env_id.clone()).collect::<Vec<_>>(),
            "runs": m.cells.iter().map(|c| c.series[0].len()).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    write(
        with_suffix(&base, "meta.json"),
        serde_json::to_string_pretty(&meta).expect("json") + "\n",
        files,
    )?;
    Ok((summary, matrices))
}

/// Runs a parsed command against the configured source.
pub fn run_pipeline(args: &RlopsArgs, env: &Env, multi: bool) -> Result<Outputs, CliError> {
    let keys = metric_keys(args, multi)?;
    let (source, cache_dir) = open_source(env, args.api_url.as_deref())?;
    let mut cells = query_cells(source.as_ref(), args)?;
    fetch_cells(source.as_ref(), cache_dir.as_deref(), &mut cells, &keys, args)?;

    let mut run_counts = Vec::with_capacity(cells.len());
    for c in &cells {
        let used = c.series[0].len();
        eprintln!("{} on {}: {} runs", c.label, c.env_id, used);
        if used == 0 && !c.runs.is_empty() {
            let msg = format!("`{}` on {} has runs but none with usable `{}` history", c.label, c.env_id, keys[c.group][0]);
            if args.check_empty_runs {
                return Err(CliError::NoRuns(msg));
            }
            log::warn!("{msg}");
        }
        run_counts.push((c.label.clone(), c.env_id.clone(), used));
    }
    if args.shade == ShadeKind::Ci && !args.rliable {
        eprintln!("bootstrap seed: {} ({ALGORITHM_ID})", args.seed);
    }

    let mut files = Vec::new();
    curve_figures(args, &cells, &keys, multi, &mut files)?;
    let (summary, matrices) = if args.rliable {
        rliable_outputs(args, env, &cells, &mut files)?
    } else {
        (Vec::new(), Vec::new())
    };
    Ok(Outputs {
        files,
        summary,
        matrices,
        run_counts,
    })
}
