//! Python bindings: `import rlops`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use rlops_core::cli::reproduce::reproduction_script;
use rlops_core::curves;
use rlops_core::estimators::{self, EstimatorParams, Trajectory};
use rlops_core::filterdsl;
use rlops_core::ingest::{self, ArchiveSource, RunSource};
use rlops_core::model::{self, MetricPoint, MetricSeries};
use rlops_core::rlstats::{self, AggregateMethod, BootstrapConfig};

create_exception!(rlops, RlopsError, PyException, "Raised when a data source or pipeline step fails.");

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rlops_err(e: impl std::fmt::Display) -> PyErr {
    RlopsError::new_err(e.to_string())
}

fn method(name: &str) -> PyResult<AggregateMethod> {
    name.parse().map_err(value_err)
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rlops")]
#[derive(Clone)]
struct FilterQuery {
    entity: String,
    project: String,
    env_id_key: String,
    exp_name_key: String,
    metrics: Vec<String>,
}

#[pymethods]
impl FilterQuery {
    fn render(&self) -> String {
        filterdsl::render_filter_query(&self.to_core())
    }

    fn __repr__(&self) -> String {
        format!("FilterQuery({:?})", self.render())
    }
}

impl FilterQuery {
    fn to_core(&self) -> filterdsl::FilterQuery {
        filterdsl::FilterQuery {
            entity: self.entity.clone(),
            project: self.project.clone(),
            env_id_key: self.env_id_key.clone(),
            exp_name_key: self.exp_name_key.clone(),
            metrics: self.metrics.clone(),
        }
    }
}

#[pyclass(frozen, get_all, skip_from_py_object, module = "rlops")]
#[derive(Clone)]
struct ExperimentSpec {
    name: String,
    label: String,
    extra_filters: BTreeMap<String, String>,
}

#[pymethods]
impl ExperimentSpec {
    fn render(&self) -> String {
        filterdsl::render_experiment_spec(&filterdsl::ExperimentSpec {
            name: self.name.clone(),
            label: self.label.clone(),
            extra_filters: self.extra_filters.clone(),
        })
    }

    fn __repr__(&self) -> String {
        format!("ExperimentSpec({:?})", self.render())
    }
}

#[pyfunction]
fn parse_filter_query(text: &str) -> PyResult<FilterQuery> {
    let q = filterdsl::parse_filter_query(text).map_err(value_err)?;
    Ok(FilterQuery {
        entity: q.entity,
        project: q.project,
        env_id_key: q.env_id_key,
        exp_name_key: q.exp_name_key,
        metrics: q.metrics,
    })
}

#[pyfunction]
fn parse_experiment_spec(text: &str) -> PyResult<ExperimentSpec> {
    let s = filterdsl::parse_experiment_spec(text).map_err(value_err)?;
    Ok(ExperimentSpec {
        name: s.name,
        label: s.label,
        extra_filters: s.extra_filters,
    })
}

/// Final scores of one method: one row of run scores per task.
#[pyclass(frozen, module = "rlops")]
struct ScoreMatrix(model::ScoreMatrix);

#[pymethods]
impl ScoreMatrix {
    #[new]
    #[pyo3(signature = (task_ids, scores, label = "method"))]
    fn new(task_ids: Vec<String>, scores: Vec<Vec<f64>>, label: &str) -> PyResult<Self> {
        model::ScoreMatrix::new(task_ids, scores, label).map(Self).map_err(value_err)
    }

    #[getter]
    fn task_ids(&self) -> Vec<String> {
        self.0.task_ids().to_vec()
    }

    #[getter]
    fn scores(&self) -> Vec<Vec<f64>> {
        self.0.rows().to_vec()
    }

    #[getter]
    fn label(&self) -> String {
        self.0.method_label().to_string()
    }

    fn __len__(&self) -> usize {
        self.0.num_tasks()
    }

    fn __repr__(&self) -> String {
        format!("ScoreMatrix({:?}, {} tasks)", self.0.method_label(), self.0.num_tasks())
    }
}

#[pyclass(frozen, get_all, module = "rlops")]
struct IntervalEstimate {
    point: f64,
    lo: f64,
    hi: f64,
    method: String,
}

#[pymethods]
impl IntervalEstimate {
    fn __repr__(&self) -> String {
        format!("IntervalEstimate({}: {} [{}, {}])", self.method, self.point, self.lo, self.hi)
    }
}

#[pyclass(frozen, get_all, module = "rlops")]
struct ProfileCurve {
    taus: Vec<f64>,
    fractions: Vec<f64>,
    bands: Vec<(f64, f64)>,
}

fn bootstrap(reps: usize, confidence: f64, seed: u64) -> PyResult<BootstrapConfig> {
    BootstrapConfig::new(reps, confidence, seed).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (matrix, method = "IQM"))]
fn aggregate(matrix: &ScoreMatrix, method: &str) -> PyResult<f64> {
    rlstats::aggregate(&matrix.0, self::method(method)?).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (matrix, method = "IQM", reps = rlstats::DEFAULT_REPS, confidence = rlstats::DEFAULT_CONFIDENCE, seed = rlstats::DEFAULT_SEED))]
fn stratified_bootstrap_ci(
    py: Python<'_>,
    matrix: &ScoreMatrix,
    method: &str,
    reps: usize,
    confidence: f64,
    seed: u64,
) -> PyResult<IntervalEstimate> {
    let (method, cfg) = (self::method(method)?, bootstrap(reps, confidence, seed)?);
    let e = py
        .detach(|| rlstats::stratified_bootstrap_ci(&matrix.0, method, &cfg))
        .map_err(value_err)?;
    Ok(IntervalEstimate {
        point: e.point,
        lo: e.lo,
        hi: e.hi,
        method: e.method.name().to_string(),
    })
}

#[pyfunction]
#[pyo3(signature = (matrix, taus, reps = rlstats::DEFAULT_REPS, confidence = rlstats::DEFAULT_CONFIDENCE, seed = rlstats::DEFAULT_SEED))]
fn performance_profile(
    py: Python<'_>,
    matrix: &ScoreMatrix,
    taus: Vec<f64>,
    reps: usize,
    confidence: f64,
    seed: u64,
) -> PyResult<ProfileCurve> {
    let cfg = bootstrap(reps, confidence, seed)?;
    let p = py
        .detach(|| rlstats::performance_profile(&matrix.0, &taus, &cfg))
        .map_err(value_err)?;
    Ok(ProfileCurve {
        taus: p.taus,
        fractions: p.fractions,
        bands: p.bands,
    })
}

fn trajectory(rewards: Vec<f64>, values: Vec<f64>, terminal: bool) -> PyResult<Trajectory> {
    Trajectory::new(rewards, values, terminal).map_err(value_err)
}

/// `values` holds one more entry than `rewards`: the bootstrap value last.
#[pyfunction]
#[pyo3(signature = (rewards, values, gamma, lam, terminal = false))]
fn gae_advantages(rewards: Vec<f64>, values: Vec<f64>, gamma: f64, lam: f64, terminal: bool) -> PyResult<Vec<f64>> {
    let params = EstimatorParams::new(gamma, lam).map_err(value_err)?;
    Ok(estimators::gae_advantages(&trajectory(rewards, values, terminal)?, params))
}

#[pyfunction]
#[pyo3(signature = (rewards, values, gamma, lam, terminal = false))]
fn td_lambda_returns(rewards: Vec<f64>, values: Vec<f64>, gamma: f64, lam: f64, terminal: bool) -> PyResult<Vec<f64>> {
    let params = EstimatorParams::new(gamma, lam).map_err(value_err)?;
    Ok(estimators::td_lambda_returns(&trajectory(rewards, values, terminal)?, params))
}

#[pyfunction]
#[pyo3(signature = (rewards, values, t, n, gamma, terminal = false))]
fn n_step_return(rewards: Vec<f64>, values: Vec<f64>, t: usize, n: usize, gamma: f64, terminal: bool) -> PyResult<f64> {
    estimators::n_step_return(&trajectory(rewards, values, terminal)?, t, n, gamma).map_err(value_err)
}

fn series_from(steps: Vec<u64>, values: Vec<Option<f64>>) -> PyResult<MetricSeries> {
    if steps.len() != values.len() {
        return Err(PyValueError::new_err("steps and values differ in length"));
    }
    let points = steps
        .into_iter()
        .zip(values)
        .map(|(s, v)| match v {
            Some(v) => MetricPoint::new(s, 0.0, v),
            None => MetricPoint::missing(s, 0.0),
        })
        .collect();
    MetricSeries::new("", "", points).map_err(value_err)
}

/// Resamples to `n` evenly spaced steps; returns `(steps, values)`.
#[pyfunction]
#[pyo3(signature = (steps, values, n = curves::DEFAULT_GRID_SIZE))]
fn subsample_interpolate(steps: Vec<u64>, values: Vec<Option<f64>>, n: usize) -> PyResult<(Vec<u64>, Vec<Option<f64>>)> {
    let out = curves::subsample_interpolate(&series_from(steps, values)?, n).map_err(value_err)?;
    Ok(out.points().iter().map(|p| (p.global_step, p.value)).unzip())
}

#[pyfunction]
fn rolling_average(values: Vec<Option<f64>>, window: usize) -> PyResult<Vec<Option<f64>>> {
    curves::rolling_mean(&values, window).map_err(value_err)
}

/// A run archive on disk.
#[pyclass(frozen, module = "rlops")]
struct Archive(ArchiveSource);

fn split_ref(run_ref: &str) -> PyResult<(&str, &str, &str)> {
    let parts: Vec<&str> = run_ref.split('/').collect();
    match parts.as_slice() {
        [e, p, r] => Ok((e, p, r)),
        _ => Err(PyValueError::new_err(format!("`{run_ref}` is not entity/project/run_id"))),
    }
}

#[pymethods]
impl Archive {
    #[new]
    fn new(root: PathBuf) -> PyResult<Self> {
        ingest::load_archive(&root).map(Self).map_err(rlops_err)
    }

    /// Runs in `entity/project` as dicts, oldest first.
    #[pyo3(signature = (entity, project, filters = None))]
    fn runs<'py>(
        &self,
        py: Python<'py>,
        entity: &str,
        project: &str,
        filters: Option<BTreeMap<String, String>>,
    ) -> PyResult<Vec<Bound<'py, PyAny>>> {
        let filters = filters.unwrap_or_default();
        let mut runs = self.0.list_runs(entity, project, &filters).map_err(rlops_err)?;
        ingest::sort_runs(&mut runs);
        let loads = py.import("json")?.getattr("loads")?;
        runs.iter()
            .map(|r| loads.call1((serde_json::to_string(r).map_err(rlops_err)?,)))
            .collect()
    }

    /// Columns for `keys`, in the style of `run.history(keys=[...])`:
    /// `global_step` and `wall_time_s` come from the first metric key.
    #[pyo3(signature = (run_ref, keys, scan = true))]
    fn history(&self, run_ref: &str, keys: Vec<String>, scan: bool) -> PyResult<BTreeMap<String, Vec<Option<f64>>>> {
        let (e, p, id) = split_ref(run_ref)?;
        let run = self.0.get_run(e, p, id).map_err(rlops_err)?;
        let metrics: Vec<String> = keys
            .iter()
            .filter(|k| !matches!(k.as_str(), "global_step" | "wall_time_s"))
            .cloned()
            .collect();
        let fetched = ingest::fetch_history(&self.0, &run, &metrics, scan).map_err(rlops_err)?;
        let mut out = BTreeMap::new();
        for key in &keys {
            let column = match key.as_str() {
                "global_step" | "wall_time_s" => {
                    let Some(first) = fetched.series.first() else { continue };
                    first
                        .points()
                        .iter()
                        .map(|pt| Some(if key == "global_step" { pt.global_step as f64 } else { pt.wall_time_s }))
                        .collect()
                }
                k => match fetched.get(k) {
                    Some(s) => s.points().iter().map(|pt| pt.value).collect(),
                    None => continue,
                },
            };
            out.insert(key.clone(), column);
        }
        Ok(out)
    }

    fn reproduction_script(&self, run_ref: &str) -> PyResult<String> {
        let (e, p, id) = split_ref(run_ref)?;
        let run = self.0.get_run(e, p, id).map_err(rlops_err)?;
        reproduction_script(&self.0, &run).map_err(rlops_err)
    }
}

/// Runs the `rlops` command line with `argv` (without the program name).
#[pyfunction]
fn run_rlops(py: Python<'_>, argv: Vec<String>) -> i32 {
    py.detach(|| rlops_core::cli::run_rlops(&argv))
}

#[pyfunction]
fn run_rlops_multi_metrics(py: Python<'_>, argv: Vec<String>) -> i32 {
    py.detach(|| rlops_core::cli::run_rlops_multi_metrics(&argv))
}

#[pymodule]
fn rlops(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RlopsError", m.py().get_type::<RlopsError>())?;
    m.add("ALGORITHM_ID", rlops_core::rng::ALGORITHM_ID)?;
    m.add_class::<FilterQuery>()?;
    m.add_class::<ExperimentSpec>()?;
    m.add_class::<ScoreMatrix>()?;
    m.add_class::<IntervalEstimate>()?;
    m.add_class::<ProfileCurve>()?;
    m.add_class::<Archive>()?;
    m.add_function(wrap_pyfunction!(parse_filter_query, m)?)?;
    m.add_function(wrap_pyfunction!(parse_experiment_spec, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(performance_profile, m)?)?;
    m.add_function(wrap_pyfunction!(gae_advantages, m)?)?;
    m.add_function(wrap_pyfunction!(td_lambda_returns, m)?)?;
    m.add_function(wrap_pyfunction!(n_step_return, m)?)?;
    m.add_function(wrap_pyfunction!(subsample_interpolate, m)?)?;
    m.add_function(wrap_pyfunction!(rolling_average, m)?)?;
    m.add_function(wrap_pyfunction!(run_rlops, m)?)?;
    m.add_function(wrap_pyfunction!(run_rlops_multi_metrics, m)?)?;
    Ok(())
}
