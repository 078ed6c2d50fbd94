//! Resampling, smoothing and alignment of metric series.

use thiserror::Error;

use crate::model::{MetricPoint, MetricSeries, ModelError};

pub const DEFAULT_GRID_SIZE: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum CurveError {
    #[error("series `{series}` needs at least 2 valued points, found {found}")]
    TooFewPoints { series: String, found: usize },
    #[error("rolling window must be at least 1")]
    NonPositiveWindow,
    #[error("no runs to align")]
    EmptyInput,
    #[error("runs do not overlap: common x extent is {0}")]
    NoOverlap(f64),
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum XAxis {
    GlobalStep,
    WallTime,
}

impl XAxis {
    pub fn name(self) -> &'static str {
        match self {
            XAxis::GlobalStep => "global_step",
            XAxis::WallTime => "wall_time_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignSpec {
    pub grid_size: usize,
    pub max_steps: Option<f64>,
    pub x_axis: XAxis,
}

impl Default for AlignSpec {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            max_steps: None,
            x_axis: XAxis::GlobalStep,
        }
    }
}

/// Several runs resampled onto one shared grid; `values[r][g]` is run `r` at `grid[g]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedCurve {
    pub x_axis: XAxis,
    pub grid: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub run_ids: Vec<String>,
}

impl AlignedCurve {
    pub fn num_runs(&self) -> usize {
        self.values.len()
    }

    /// Values of every run at grid index `g`.
    pub fn column(&self, g: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[g]).collect()
    }

    /// Keeps only the grid indices in `indices` (must be increasing).
    pub fn select(&self, indices: &[usize]) -> AlignedCurve {
        AlignedCurve {
            x_axis: self.x_axis,
            grid: indices.iter().map(|&i| self.grid[i]).collect(),
            values: self
                .values
                .iter()
                .map(|row| indices.iter().map(|&i| row[i]).collect())
                .collect(),
            run_ids: self.run_ids.clone(),
        }
    }

    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> AlignedCurve {
        AlignedCurve {
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|&v| f(v)).collect())
                .collect(),
            ..self.clone()
        }
    }
}

/// `n` evenly spaced values from `lo` to `hi`, both included exactly.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let span = hi - lo;
            let last = (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { hi } else { lo + span * (i as f64 / last) })
                .collect()
        }
    }
}

/// Up to `max` evenly spaced indices into `0..len`, first and last included.
pub fn even_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max || max < 2 {
        return (0..len).collect();
    }
    (0..max).map(|i| i * (len - 1) / (max - 1)).collect()
}

/// Strictly increasing knots for linear interpolation. When several points
/// share an x-value, the last one logged wins.
struct Knots {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Knots {
    fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for (x, y) in pairs {
            if xs.last() == Some(&x) {
                *ys.last_mut().unwrap() = y;
            } else {
                xs.push(x);
                ys.push(y);
            }
        }
        Self { xs, ys }
    }

    /// Linear interpolation; below the first knot the first value is returned,
    /// above the last knot the last value.
    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        // first knot strictly greater than x
        let hi = self.xs.partition_point(|&k| k <= x);
        let lo = hi - 1;
        let (x0, x1) = (self.xs[lo], self.xs[hi]);
        let (y0, y1) = (self.ys[lo], self.ys[hi]);
        if x == x0 {
            return y0;
        }
        y0 + (y1 - y0) * ((x - x0) / (x1 - x0))
    }
}

fn too_few(series: &MetricSeries, found: usize) -> CurveError {
    CurveError::TooFewPoints {
        series: format!("{}:{}", series.run_id(), series.metric_key()),
        found,
    }
}

/// Resamples onto `n` evenly spaced integer steps from the first to the last
/// valued step. Missing values are skipped, not interpolated through as zero.
pub fn subsample_interpolate(series: &MetricSeries, n: usize) -> Result<MetricSeries, CurveError> {
    let present: Vec<(u64, f64, f64)> = series.present().collect();
    if present.len() < 2 {
        return Err(too_few(series, present.len()));
    }
    if n < 2 {
        return Err(CurveError::GridTooSmall(n));
    }
    let first = present[0].0;
    let last = present[present.len() - 1].0;
    let values = Knots::from_pairs(present.iter().map(|&(s, _, v)| (s as f64, v)));
    let times = Knots::from_pairs(present.iter().map(|&(s, t, _)| (s as f64, t)));

    let span = (last - first) as f64;
    let points = (0..n)
        .map(|i| {
            let step = if i + 1 == n {
                last
            } else {
                first + (span * (i as f64 / (n - 1) as f64)).round() as u64
            };
            let x = step as f64;
            MetricPoint::new(step, times.eval(x), values.eval(x))
        })
        .collect();
    Ok(MetricSeries::new(series.run_id(), series.metric_key(), points)?)
}

/// Trailing mean over `window` points; the first points average whatever is
/// available. Missing values are left out of the mean; a window with no
/// values at all stays missing.
pub fn rolling_average(series: &MetricSeries, window: usize) -> Result<MetricSeries, CurveError> {
    let values: Vec<Option<f64>> = series.points().iter().map(|p| p.value).collect();
    let smoothed = rolling_mean(&values, window)?;
    let points = series
        .points()
        .iter()
        .zip(smoothed)
        .map(|(p, value)| MetricPoint { value, ..*p })
        .collect();
    Ok(MetricSeries::new(series.run_id(), series.metric_key(), points)?)
}

pub fn rolling_mean(values: &[Option<f64>], window: usize) -> Result<Vec<Option<f64>>, CurveError> {
    if window == 0 {
        return Err(CurveError::NonPositiveWindow);
    }
    Ok((0..values.len())
        .map(|i| {
            let start = (i + 1).saturating_sub(window);
            let mut present = values[start..=i].iter().flatten();
            // offsets from the first value, so a constant window is returned exactly
            let anchor = *present.next()?;
            let (sum, count) = present.fold((0.0, 1usize), |(s, c), v| (s + (v - anchor), c + 1));
            Some(anchor + sum / count as f64)
        })
        .collect())
}

/// Dense-row version used on aligned curves.
pub fn rolling_mean_dense(values: &[f64], window: usize) -> Result<Vec<f64>, CurveError> {
    let wrapped: Vec<Option<f64>> = values.iter().map(|&v| v.is_finite().then_some(v)).collect();
    Ok(rolling_mean(&wrapped, window)?
        .into_iter()
        .map(|v| v.unwrap_or(f64::NAN))
        .collect())
}

fn run_knots(series: &MetricSeries, x_axis: XAxis) -> Result<Knots, CurveError> {
    let present: Vec<(u64, f64, f64)> = series.present().collect();
    if present.len() < 2 {
        return Err(too_few(series, present.len()));
    }
    // relative elapsed time from the first logged point, valued or not
    let t0 = series.points()[0].wall_time_s;
    Ok(Knots::from_pairs(present.iter().map(|&(s, t, v)| match x_axis {
        XAxis::GlobalStep => (s as f64, v),
        XAxis::WallTime => (t - t0, v),
    })))
}

/// Interpolates every run onto `grid_size` points from 0 to the shortest
/// run's extent (clamped by `max_steps`). Grid points before a run's first
/// observation take its first value.
pub fn align_runs(series_per_run: &[MetricSeries], spec: &AlignSpec) -> Result<AlignedCurve, CurveError> {
    if series_per_run.is_empty() {
        return Err(CurveError::EmptyInput);
    }
    if spec.grid_size < 2 {
        return Err(CurveError::GridTooSmall(spec.grid_size));
    }
    let knots = series_per_run
        .iter()
        .map(|s| run_knots(s, spec.x_axis))
        .collect::<Result<Vec<_>, _>>()?;
    let mut upper = knots
        .iter()
        .map(|k| *k.xs.last().unwrap())
        .fold(f64::INFINITY, f64::min);
    if let Some(max) = spec.max_steps {
        upper = upper.min(max);
    }
    if !(upper > 0.0) {
        return Err(CurveError::NoOverlap(upper));
    }
    let grid = linspace(0.0, upper, spec.grid_size);
    let values = knots
        .iter()
        .map(|k| grid.iter().map(|&x| k.eval(x)).collect())
        .collect();
    Ok(AlignedCurve {
        x_axis: spec.x_axis,
        grid,
        values,
        run_ids: series_per_run.iter().map(|s| s.run_id().to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(run: &str, pts: &[(u64, f64)]) -> MetricSeries {
        MetricSeries::new(
            run,
            "charts/episodic_return",
            pts.iter()
                .map(|&(s, v)| MetricPoint::new(s, s as f64 / 100.0, v))
                .collect(),
        )
        .unwrap()
    }

    fn values(s: &MetricSeries) -> Vec<f64> {
        s.points().iter().map(|p| p.value.unwrap()).collect()
    }

    #[test]
    fn subsample_affine_is_exact() {
        let pts: Vec<(u64, f64)> = (0..=100_000u64).step_by(10).map(|s| (s, 2.0 * s as f64)).collect();
        let out = subsample_interpolate(&series("r", &pts), 10_000).unwrap();
        assert_eq!(out.len(), 10_000);
        assert_eq!(out.points()[0].global_step, 0);
        assert_eq!(out.points()[9_999].global_step, 100_000);
        for p in out.points() {
            let want = 2.0 * p.global_step as f64;
            assert!((p.value.unwrap() - want).abs() <= 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn subsample_identity_on_even_grid() {
        let pts: Vec<(u64, f64)> = (0..50u64).map(|i| (i * 20, (i as f64).sin())).collect();
        let s = series("r", &pts);
        assert_eq!(subsample_interpolate(&s, 50).unwrap(), s);
    }

    #[test]
    fn subsample_rejects_single_point() {
        assert!(matches!(
            subsample_interpolate(&series("r", &[(0, 1.0)]), 10),
            Err(CurveError::TooFewPoints { found: 1, .. })
        ));
    }

    #[test]
    fn subsample_skips_gaps() {
        let s = MetricSeries::new(
            "r",
            "m",
            vec![
                MetricPoint::new(0, 0.0, 0.0),
                MetricPoint::missing(5, 0.5),
                MetricPoint::new(10, 1.0, 10.0),
            ],
        )
        .unwrap();
        let out = subsample_interpolate(&s, 3).unwrap();
        assert_eq!(values(&out), vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn rolling_examples() {
        let s = series("r", &[(0, 0.0), (1, 10.0)]);
        assert_eq!(values(&rolling_average(&s, 2).unwrap()), vec![0.0, 5.0]);
        assert_eq!(rolling_average(&s, 1).unwrap(), s);
        assert_eq!(rolling_average(&s, 0), Err(CurveError::NonPositiveWindow));
        let c = series("r", &[(0, 3.0), (1, 3.0), (2, 3.0)]);
        assert_eq!(rolling_average(&c, 100).unwrap(), c);
    }

    #[test]
    fn align_uses_shortest_run() {
        let a = series("a", &[(0, 0.0), (1_000_000, 1.0)]);
        let b = series("b", &[(0, 0.0), (800_000, 1.0)]);
        let c = align_runs(&[a.clone(), b.clone()], &AlignSpec { grid_size: 5, ..Default::default() }).unwrap();
        assert_eq!(*c.grid.last().unwrap(), 800_000.0);
        let capped = align_runs(
            &[a, b],
            &AlignSpec { grid_size: 5, max_steps: Some(400_000.0), ..Default::default() },
        )
        .unwrap();
        assert_eq!(*capped.grid.last().unwrap(), 400_000.0);
    }

    #[test]
    fn align_single_run_two_points() {
        // first observation at step 100: grid point 0 clamps to the first value
        let a = series("a", &[(100, 4.0), (200, 6.0), (300, 10.0)]);
        let c = align_runs(&[a], &AlignSpec { grid_size: 2, ..Default::default() }).unwrap();
        assert_eq!(c.grid, vec![0.0, 300.0]);
        assert_eq!(c.values, vec![vec![4.0, 10.0]]);
    }

    #[test]
    fn align_interior_matches_hand_interpolation() {
        let a = series("a", &[(0, 0.0), (100, 10.0), (300, 30.0)]);
        let c = align_runs(&[a], &AlignSpec { grid_size: 4, ..Default::default() }).unwrap();
        assert_eq!(c.grid, vec![0.0, 100.0, 200.0, 300.0]);
        assert_eq!(c.values[0], vec![0.0, 10.0, 20.0, 30.0]);
    }

    #[test]
    fn align_wall_time_is_relative() {
        let s = MetricSeries::new(
            "a",
            "m",
            vec![
                MetricPoint::new(0, 1000.0, 1.0),
                MetricPoint::new(10, 1010.0, 2.0),
            ],
        )
        .unwrap();
        let c = align_runs(
            &[s],
            &AlignSpec { grid_size: 3, max_steps: None, x_axis: XAxis::WallTime },
        )
        .unwrap();
        assert_eq!(c.grid, vec![0.0, 5.0, 10.0]);
        assert_eq!(c.values[0], vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn align_errors() {
        assert_eq!(align_runs(&[], &AlignSpec::default()), Err(CurveError::EmptyInput));
        let flat = series("a", &[(0, 1.0), (0, 2.0)]);
        assert!(matches!(
            align_runs(&[flat], &AlignSpec::default()),
            Err(CurveError::TooFewPoints { .. }) | Err(CurveError::NoOverlap(_))
        ));
        let a = series("a", &[(0, 0.0), (10, 1.0)]);
        assert!(matches!(
            align_runs(&[a], &AlignSpec { max_steps: Some(0.0), ..Default::default() }),
            Err(CurveError::NoOverlap(_))
        ));
    }

    fn arb_series() -> impl Strategy<Value = Vec<(u64, f64)>> {
        (proptest::collection::btree_set(0u64..1_000_000, 2..60), proptest::collection::vec(-1e3f64..1e3, 60))
            .prop_map(|(steps, vals)| steps.into_iter().zip(vals).collect())
    }

    proptest! {
        #[test]
        fn subsample_reproduces_affine(a in -10.0f64..10.0, b in -1e3f64..1e3,
            steps in proptest::collection::btree_set(0u64..1_000_000, 2..50), n in 2usize..300) {
            let pts: Vec<(u64, f64)> = steps.into_iter().map(|s| (s, a * s as f64 + b)).collect();
            let out = subsample_interpolate(&series("r", &pts), n).unwrap();
            for p in out.points() {
                let want = a * p.global_step as f64 + b;
                prop_assert!((p.value.unwrap() - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }

        #[test]
        fn rolling_stays_within_range_and_is_affine(pts in arb_series(), window in 1usize..30,
            shift in -100.0f64..100.0, scale in -5.0f64..5.0) {
            let s = series("r", &pts);
            let out = values(&rolling_average(&s, window).unwrap());
            let vals = values(&s);
            let (lo, hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            for &v in &out {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
            let shifted: Vec<(u64, f64)> = pts.iter().map(|&(st, v)| (st, v * scale + shift)).collect();
            let out2 = values(&rolling_average(&series("r", &shifted), window).unwrap());
            for (x, y) in out.iter().zip(out2) {
                prop_assert!((x * scale + shift - y).abs() <= 1e-6 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn align_grid_and_row_permutation(a in arb_series(), b in arb_series(), g in 2usize..200) {
            let sa = series("a", &a);
            let sb = series("b", &b);
            let spec = AlignSpec { grid_size: g, ..Default::default() };
            match (align_runs(&[sa.clone(), sb.clone()], &spec), align_runs(&[sb, sa], &spec)) {
                (Ok(x), Ok(y)) => {
                    prop_assert!(x.grid.windows(2).all(|w| w[0] < w[1]));
                    prop_assert_eq!(&x.grid, &y.grid);
                    prop_assert_eq!(&x.values[0], &y.values[1]);
                    prop_assert_eq!(&x.values[1], &y.values[0]);
                }
                (Err(e1), Err(e2)) => prop_assert_eq!(e1, e2),
                _ => prop_assert!(false, "permutation changed success"),
            }
        }

        #[test]
        fn monotone_input_stays_monotone(steps in proptest::collection::btree_set(0u64..100_000, 2..40), n in 2usize..500) {
            let pts: Vec<(u64, f64)> = steps.into_iter().enumerate().map(|(i, s)| (s, i as f64 * 1.5)).collect();
            let out = values(&subsample_interpolate(&series("r", &pts), n).unwrap());
            prop_assert!(out.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
