//! Aggregate statistics over score matrices with stratified bootstrap
//! confidence intervals: point aggregates, interval estimates, performance
//! profiles and sample/walltime efficiency curves.
//!
//! Each replicate resamples every task's runs with replacement (same count),
//! independently per task, then recomputes the statistic on the pooled
//! resample. Intervals are percentile intervals with linearly interpolated
//! quantiles. Replicates draw from per-(task, replicate) streams (see
//! [`crate::rng`]), so results are bit-identical whatever the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::curves::{AlignedCurve, XAxis};
use crate::model::ScoreMatrix;
use crate::rng::{resample_indices, TaskStreams};

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_REPS: usize = 2_000;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no finite scores to aggregate")]
    EmptyMatrix,
    #[error("bootstrap needs at least one replicate")]
    ZeroReps,
    #[error("confidence must be in (0, 1), got {0}")]
    BadConfidence(f64),
    #[error("optimality-gap threshold must be finite")]
    BadThreshold,
    #[error("profile thresholds must be strictly increasing")]
    NonIncreasingTaus,
    #[error("curves do not share one grid")]
    GridMismatch,
    #[error("unknown aggregate `{0}` (expected Mean, Median, IQM or Optimality Gap)")]
    UnknownAggregate(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AggregateMethod {
    Mean,
    Median,
    Iqm,
    /// Mean shortfall below the threshold.
    OptimalityGap(f64),
}

impl AggregateMethod {
    pub const DEFAULT_GAP_THRESHOLD: f64 = 1.0;

    /// The four aggregates reported in interval-estimate figures, in display order.
    pub fn standard_set() -> [AggregateMethod; 4] {
        [
            AggregateMethod::Median,
            AggregateMethod::Iqm,
            AggregateMethod::Mean,
            AggregateMethod::OptimalityGap(Self::DEFAULT_GAP_THRESHOLD),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            AggregateMethod::Mean => "Mean",
            AggregateMethod::Median => "Median",
            AggregateMethod::Iqm => "IQM",
            AggregateMethod::OptimalityGap(_) => "Optimality Gap",
        }
    }
}

impl fmt::Display for AggregateMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AggregateMethod {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "mean" => Ok(AggregateMethod::Mean),
            "median" => Ok(AggregateMethod::Median),
            "iqm" | "interquartilemean" => Ok(AggregateMethod::Iqm),
            "optimalitygap" | "og" => Ok(AggregateMethod::OptimalityGap(
                Self::DEFAULT_GAP_THRESHOLD,
            )),
            _ => Err(StatsError::UnknownAggregate(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub reps: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(reps: usize, confidence: f64, seed: u64) -> Result<Self, StatsError> {
        let cfg = Self {
            reps,
            confidence,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), StatsError> {
        if self.reps == 0 {
            return Err(StatsError::ZeroReps);
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(StatsError::BadConfidence(self.confidence));
        }
        Ok(())
    }

    fn quantile_levels(&self) -> (f64, f64) {
        let tail = (1.0 - self.confidence) / 2.0;
        (tail, 1.0 - tail)
    }
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            reps: DEFAULT_REPS,
            confidence: DEFAULT_CONFIDENCE,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub method: AggregateMethod,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub taus: Vec<f64>,
    pub fractions: Vec<f64>,
    pub bands: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyCurve {
    pub x_axis: XAxis,
    pub x: Vec<f64>,
    pub point: Vec<f64>,
    pub bands: Vec<(f64, f64)>,
    pub method: AggregateMethod,
}

/// Mean computed as offsets from the first element; exact on constant data.
fn anchored_mean(xs: &[f64]) -> f64 {
    let anchor = xs[0];
    anchor + xs.iter().map(|x| x - anchor).sum::<f64>() / xs.len() as f64
}

/// Aggregate of an already sorted, non-empty slice.
fn aggregate_sorted(sorted: &[f64], method: AggregateMethod) -> f64 {
    let n = sorted.len();
    match method {
        AggregateMethod::Mean => anchored_mean(sorted),
        AggregateMethod::Median => {
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
                a + (b - a) / 2.0
            }
        }
        AggregateMethod::Iqm => {
            let trim = n / 4;
            anchored_mean(&sorted[trim..n - trim])
        }
        AggregateMethod::OptimalityGap(threshold) => {
            sorted.iter().map(|&x| threshold - x.min(threshold)).sum::<f64>() / n as f64
        }
    }
}

/// Aggregates arbitrary values; non-finite entries are ignored.
pub fn aggregate_values(values: &[f64], method: AggregateMethod) -> Result<f64, StatsError> {
    if let AggregateMethod::OptimalityGap(t) = method {
        if !t.is_finite() {
            return Err(StatsError::BadThreshold);
        }
    }
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return Err(StatsError::EmptyMatrix);
    }
    sorted.sort_by(f64::total_cmp);
    Ok(aggregate_sorted(&sorted, method))
}

/// Aggregate over all pooled (task, run) scores.
pub fn aggregate(matrix: &ScoreMatrix, method: AggregateMethod) -> Result<f64, StatsError> {
    aggregate_values(&matrix.pooled(), method)
}

/// Linearly interpolated quantile of sorted data (`(n − 1)·q` positioning).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 || sorted[lo] == sorted[hi] {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

fn percentile_interval(mut stats: Vec<f64>, cfg: &BootstrapConfig) -> (f64, f64) {
    stats.sort_by(f64::total_cmp);
    let (qlo, qhi) = cfg.quantile_levels();
    (quantile_sorted(&stats, qlo), quantile_sorted(&stats, qhi))
}

/// Runs `cfg.reps` stratified replicates. `statistic` receives, per task, the
/// resampled run indices and returns `k` values; the result is `k` columns of
/// `reps` values each.
fn replicate<F>(task_ids: &[String], run_counts: &[usize], cfg: &BootstrapConfig, k: usize, statistic: F) -> Vec<Vec<f64>>
where
    F: Fn(&[Vec<usize>], &mut Vec<f64>) + Sync,
{
    let streams: Vec<TaskStreams> = task_ids.iter().map(|t| TaskStreams::new(cfg.seed, t)).collect();
    let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map_init(
            || vec![Vec::new(); run_counts.len()],
            |indices, rep| {
                for ((stream, &n), idx) in streams.iter().zip(run_counts).zip(indices.iter_mut()) {
                    let mut rng = stream.replicate(rep as u64);
                    resample_indices(&mut rng, n, idx);
                }
                let mut out = Vec::with_capacity(k);
                statistic(indices, &mut out);
                out
            },
        )
        .collect();
    (0..k)
        .map(|j| per_rep.iter().map(|row| row[j]).collect())
        .collect()
}

fn pooled_resample(rows: &[&[f64]], indices: &[Vec<usize>], buf: &mut Vec<f64>) {
    buf.clear();
    for (row, idx) in rows.iter().zip(indices) {
        buf.extend(idx.iter().map(|&i| row[i]));
    }
    buf.retain(|v| v.is_finite());
    buf.sort_by(f64::total_cmp);
}

pub fn stratified_bootstrap_ci(
    matrix: &ScoreMatrix,
    method: AggregateMethod,
    cfg: &BootstrapConfig,
) -> Result<IntervalEstimate, StatsError> {
    cfg.validate()?;
    let point = aggregate(matrix, method)?;
    let rows: Vec<&[f64]> = matrix.rows().iter().map(Vec::as_slice).collect();
    let counts: Vec<usize> = rows.iter().map(|r| r.len()).collect();
    let stats = replicate(matrix.task_ids(), &counts, cfg, 1, |indices, out| {
        let mut buf = Vec::new();
        pooled_resample(&rows, indices, &mut buf);
        out.push(aggregate_sorted(&buf, method));
    })
    .remove(0);
    let (lo, hi) = percentile_interval(stats, cfg);
    Ok(IntervalEstimate { point, lo, hi, method })
}

/// Mean over tasks of the fraction of runs scoring above `tau`.
fn profile_value(rows: &[&[f64]], indices: Option<&[Vec<usize>]>, tau: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    for (m, row) in rows.iter().enumerate() {
        let (above, total) = match indices {
            Some(idx) => (idx[m].iter().filter(|&&i| row[i] > tau).count(), idx[m].len()),
            None => (row.iter().filter(|&&x| x > tau).count(), row.len()),
        };
        scratch.push(above as f64 / total as f64);
    }
    scratch.sort_by(f64::total_cmp);
    anchored_mean(scratch)
}

pub fn performance_profile(
    matrix: &ScoreMatrix,
    taus: &[f64],
    cfg: &BootstrapConfig,
) -> Result<ProfileCurve, StatsError> {
    cfg.validate()?;
    if taus.is_empty() {
        return Err(StatsError::EmptyMatrix);
    }
    if taus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StatsError::NonIncreasingTaus);
    }
    let rows: Vec<&[f64]> = matrix.rows().iter().map(Vec::as_slice).collect();
    let mut scratch = Vec::new();
    let fractions: Vec<f64> = taus
        .iter()
        .map(|&t| profile_value(&rows, None, t, &mut scratch))
        .collect();
    let counts: Vec<usize> = rows.iter().map(|r| r.len()).collect();
    let columns = replicate(matrix.task_ids(), &counts, cfg, taus.len(), |indices, out| {
        let mut scratch = Vec::with_capacity(rows.len());
        out.extend(taus.iter().map(|&t| profile_value(&rows, Some(indices), t, &mut scratch)));
    });
    let bands = columns
        .into_iter()
        .map(|c| percentile_interval(c, cfg))
        .collect();
    Ok(ProfileCurve {
        taus: taus.to_vec(),
        fractions,
        bands,
    })
}

/// Aggregate and interval at every grid point. All curves must share one grid;
/// each replicate resamples runs once and reuses the draw at every grid point.
pub fn sample_efficiency_curve(
    curves_per_task: &[(String, AlignedCurve)],
    method: AggregateMethod,
    cfg: &BootstrapConfig,
) -> Result<EfficiencyCurve, StatsError> {
    cfg.validate()?;
    let (_, first) = curves_per_task.first().ok_or(StatsError::EmptyMatrix)?;
    if curves_per_task
        .iter()
        .any(|(_, c)| c.grid != first.grid || c.x_axis != first.x_axis)
    {
        return Err(StatsError::GridMismatch);
    }
    if curves_per_task.iter().any(|(_, c)| c.values.is_empty()) {
        return Err(StatsError::EmptyMatrix);
    }
    let grid_len = first.grid.len();
    // columns[g][m] = values of task m's runs at grid point g
    let columns: Vec<Vec<Vec<f64>>> = (0..grid_len)
        .map(|g| curves_per_task.iter().map(|(_, c)| c.column(g)).collect())
        .collect();

    let point = columns
        .iter()
        .map(|col| aggregate_values(&col.concat(), method))
        .collect::<Result<Vec<_>, _>>()?;

    let task_ids: Vec<String> = curves_per_task.iter().map(|(t, _)| t.clone()).collect();
    let counts: Vec<usize> = curves_per_task.iter().map(|(_, c)| c.num_runs()).collect();
    let stats = replicate(&task_ids, &counts, cfg, grid_len, |indices, out| {
        let mut buf = Vec::new();
        for col in &columns {
            let rows: Vec<&[f64]> = col.iter().map(Vec::as_slice).collect();
            pooled_resample(&rows, indices, &mut buf);
            out.push(if buf.is_empty() { f64::NAN } else { aggregate_sorted(&buf, method) });
        }
    });
    let bands = stats.into_iter().map(|c| percentile_interval(c, cfg)).collect();
    Ok(EfficiencyCurve {
        x_axis: first.x_axis,
        x: first.grid.clone(),
        point,
        bands,
        method,
    })
}
