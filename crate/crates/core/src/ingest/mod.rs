//! Run retrieval from a local archive or a tracking-service HTTP API, plus a
//! content-addressed history cache.

mod archive;
mod cache;
mod remote;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::filterdsl::{ExperimentSpec, FilterQuery};
use crate::model::{MetricPoint, MetricSeries, ModelError, RunRecord};

pub use archive::{load_archive, save_archive, ArchiveSource};
pub use cache::{cached_fetch, CacheKey};
pub use remote::RemoteSource;

/// Maximum number of points in a sampled (non-scan) history.
pub const SAMPLED_HISTORY_POINTS: usize = 500;
pub const API_KEY_ENV: &str = "RLOPS_API_KEY";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source unreachable: {0}")]
    SourceUnreachable(String),
    #[error("project `{entity}/{project}` not found")]
    ProjectNotFound { entity: String, project: String },
    #[error("no runs found for env `{env_id}` and experiment `{exp_name}` in {entity}/{project}")]
    NoRunsFound {
        entity: String,
        project: String,
        env_id: String,
        exp_name: String,
    },
    #[error("run `{0}` not found")]
    RunNotFound(String),
    #[error("metric `{metric_key}` not found for run `{run_id}`")]
    MetricNotFound { run_id: String, metric_key: String },
    #[error("malformed archive file {}{}: {reason}", file.display(), line.map(|l| format!(" line {l}")).unwrap_or_default())]
    MalformedArchive {
        file: PathBuf,
        line: Option<u64>,
        reason: String,
    },
    #[error("malformed response from {url}: {reason}")]
    MalformedResponse { url: String, reason: String },
    #[error("request to {url} failed with HTTP {status}: {body}")]
    HttpStatus { url: String, status: u16, body: String },
    #[error("metric keys `{0}` and `{1}` map to the same archive file")]
    KeyCollision(String, String),
    #[error("history for run `{0}` does not match exactly one run record")]
    OrphanHistory(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Read access to tracked runs. Implementations must be safe for concurrent use.
pub trait RunSource: Sync {
    /// Runs in `entity/project` whose config matches every `filters` pair.
    /// Order is unspecified; [`query_runs`] sorts.
    fn list_runs(
        &self,
        entity: &str,
        project: &str,
        filters: &BTreeMap<String, String>,
    ) -> Result<Vec<RunRecord>, IngestError>;

    /// One metric of one run; full fidelity when `scan`, otherwise at most
    /// [`SAMPLED_HISTORY_POINTS`] points picked by [`sample_indices`].
    fn fetch_metric(&self, run: &RunRecord, metric_key: &str, scan: bool) -> Result<MetricSeries, IngestError>;

    fn describe(&self) -> String;

    /// POSIX shell line that copies the run's stored files into `dest`.
    fn download_command(&self, run: &RunRecord, dest: &str) -> String;

    fn get_run(&self, entity: &str, project: &str, run_id: &str) -> Result<RunRecord, IngestError> {
        self.list_runs(entity, project, &BTreeMap::new())?
            .into_iter()
            .find(|r| r.run_id == run_id)
            .ok_or_else(|| IngestError::RunNotFound(format!("{entity}/{project}/{run_id}")))
    }
}

/// Config filters selecting one experiment on one environment.
pub fn run_filters(query: &FilterQuery, spec: &ExperimentSpec, env_id: &str) -> BTreeMap<String, String> {
    let mut filters = spec.extra_filters.clone();
    filters.insert(query.env_id_key.clone(), env_id.to_string());
    filters.insert(query.exp_name_key.clone(), spec.name.clone());
    filters
}

pub fn config_matches(run: &RunRecord, filters: &BTreeMap<String, String>) -> bool {
    filters
        .iter()
        .all(|(k, v)| run.config.get(k).is_some_and(|c| c.matches_text(v)))
}

/// Runs of `spec` on `env_id`, oldest first (ties by run id).
/// An empty result is [`IngestError::NoRunsFound`].
pub fn query_runs(
    source: &dyn RunSource,
    query: &FilterQuery,
    spec: &ExperimentSpec,
    env_id: &str,
) -> Result<Vec<RunRecord>, IngestError> {
    let filters = run_filters(query, spec, env_id);
    let mut runs: Vec<RunRecord> = source
        .list_runs(&query.entity, &query.project, &filters)?
        .into_iter()
        .filter(|r| config_matches(r, &filters))
        .collect();
    if runs.is_empty() {
        return Err(IngestError::NoRunsFound {
            entity: query.entity.clone(),
            project: query.project.clone(),
            env_id: env_id.to_string(),
            exp_name: spec.name.clone(),
        });
    }
    sort_runs(&mut runs);
    Ok(runs)
}

pub fn sort_runs(runs: &mut [RunRecord]) {
    runs.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.run_id.cmp(&b.run_id)));
}

/// Indices kept when sampling `len` points: all of them up to the cap,
/// otherwise evenly spaced by index including both ends.
pub fn sample_indices(len: usize) -> Vec<usize> {
    if len <= SAMPLED_HISTORY_POINTS {
        return (0..len).collect();
    }
    let last = SAMPLED_HISTORY_POINTS - 1;
    (0..SAMPLED_HISTORY_POINTS)
        .map(|i| ((i as u128 * (len - 1) as u128) / last as u128) as usize)
        .collect()
}

pub fn sample_series(series: MetricSeries) -> MetricSeries {
    if series.len() <= SAMPLED_HISTORY_POINTS {
        return series;
    }
    let run_id = series.run_id().to_string();
    let key = series.metric_key().to_string();
    let points = series.into_points();
    let kept = sample_indices(points.len()).into_iter().map(|i| points[i]).collect();
    MetricSeries::new(run_id, key, kept).expect("subsequence of a valid series")
}

/// Series that were fetched, and keys that do not exist for the run.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryFetch {
    pub series: Vec<MetricSeries>,
    pub missing: Vec<String>,
}

impl HistoryFetch {
    pub fn get(&self, metric_key: &str) -> Option<&MetricSeries> {
        self.series.iter().find(|s| s.metric_key() == metric_key)
    }
}

/// Fetches every key. A missing key is recorded in `missing`; it becomes an
/// error only when no key could be fetched.
pub fn fetch_history(
    source: &dyn RunSource,
    run: &RunRecord,
    metric_keys: &[String],
    scan: bool,
) -> Result<HistoryFetch, IngestError> {
    collect_history(run, metric_keys, |key| source.fetch_metric(run, key, scan))
}

fn collect_history(
    run: &RunRecord,
    metric_keys: &[String],
    mut fetch: impl FnMut(&str) -> Result<MetricSeries, IngestError>,
) -> Result<HistoryFetch, IngestError> {
    let mut out = HistoryFetch {
        series: Vec::new(),
        missing: Vec::new(),
    };
    for key in metric_keys {
        match fetch(key) {
            Ok(s) => out.series.push(s),
            Err(IngestError::MetricNotFound { metric_key, .. }) => {
                log::warn!("run {}: metric `{metric_key}` not found", run.reference());
                out.missing.push(metric_key);
            }
            Err(e) => return Err(e),
        }
    }
    if out.series.is_empty() && !metric_keys.is_empty() {
        return Err(IngestError::MetricNotFound {
            run_id: run.run_id.clone(),
            metric_key: out.missing.join(", "),
        });
    }
    Ok(out)
}

/// Fetches histories for many runs on a pool of `jobs` threads; results keep
/// the order of `runs`.
pub fn fetch_many(
    source: &dyn RunSource,
    runs: &[RunRecord],
    metric_keys: &[String],
    scan: bool,
    cache_dir: Option<&std::path::Path>,
    jobs: usize,
) -> Vec<Result<HistoryFetch, IngestError>> {
    let fetch_one = |run: &RunRecord| match cache_dir {
        Some(dir) => cached_fetch(source, run, metric_keys, scan, dir),
        None => fetch_history(source, run, metric_keys, scan),
    };
    match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(|| runs.par_iter().map(fetch_one).collect()),
        Err(_) => runs.iter().map(fetch_one).collect(),
    }
}

/// Single-quotes `s` for a POSIX shell.
pub fn shell_quote(s: &str) -> String {
    if !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b"-_./=:@%+,".contains(&b)) {
        return s.to_string();
    }
    format!("'{}'", s.replace('\'', "'\\''"))
}

/// File-name form of a metric key or run id.
pub fn sanitize_key(key: &str) -> String {
    key.replace('/', "__")
}

pub const HISTORY_HEADER: &str = "global_step,wall_time_s,value";

/// History CSV text with the standard header; missing values are empty cells.
pub fn write_history_csv(series: &MetricSeries) -> String {
    let mut out = Vec::with_capacity(series.len() * 24 + 32);
    writeln!(out, "{HISTORY_HEADER}").unwrap();
    for p in series.points() {
        match p.value {
            Some(v) => writeln!(out, "{},{},{}", p.global_step, p.wall_time_s, v).unwrap(),
            None => writeln!(out, "{},{},", p.global_step, p.wall_time_s).unwrap(),
        }
    }
    String::from_utf8(out).unwrap()
}

/// Why a history CSV could not be read, with the 1-based line where known.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvProblem {
    pub line: Option<u64>,
    pub reason: String,
}

pub fn parse_history_csv(text: &str, run_id: &str, metric_key: &str) -> Result<MetricSeries, CsvProblem> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CsvProblem {
            line: Some(1),
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| CsvProblem {
            line: Some(1),
            reason: format!("missing column `{name}`"),
        })
    };
    let (step_col, time_col, value_col) = (col("global_step")?, col("wall_time_s")?, col("value")?);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CsvProblem {
            line: e.position().map(|p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line());
        let bad = |what: &str, raw: &str| CsvProblem {
            line,
            reason: format!("invalid {what} `{raw}`"),
        };
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let step = field(step_col)
            .parse::<u64>()
            .map_err(|_| bad("global_step", field(step_col)))?;
        let time = field(time_col)
            .parse::<f64>()
            .map_err(|_| bad("wall_time_s", field(time_col)))?;
        let raw_value = field(value_col);
        let point = if raw_value.is_empty() {
            MetricPoint::missing(step, time)
        } else {
            let v = raw_value.parse::<f64>().map_err(|_| bad("value", raw_value))?;
            if v.is_finite() {
                MetricPoint::new(step, time, v)
            } else {
                MetricPoint::missing(step, time)
            }
        };
        points.push(point);
    }
    MetricSeries::new(run_id, metric_key, points).map_err(|e| CsvProblem {
        line: None,
        reason: e.to_string(),
    })
}
