//! Domain types shared across the toolkit: tracked runs, metric series,
//! score matrices and the score-normalization reference table.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ModelError {
    #[error("run_id must not be empty")]
    EmptyRunId,
    #[error("config keys must be non-empty strings")]
    MalformedConfigKey,
    #[error("normalization table not found: {0}")]
    MissingFile(String),
    #[error("duplicate env_id `{env_id}` in normalization table (line {line})")]
    DuplicateEnv { env_id: String, line: usize },
    #[error("degenerate reference for `{0}`: human score equals random score")]
    DegenerateReference(String),
    #[error("malformed normalization table at line {line}: {reason}")]
    MalformedTable { line: usize, reason: String },
    #[error("metric series `{metric_key}` of run `{run_id}` is not sorted at point {index}")]
    UnsortedSeries {
        run_id: String,
        metric_key: String,
        index: usize,
    },
    #[error("metric point {index} is invalid: {reason}")]
    InvalidPoint { index: usize, reason: String },
    #[error("score matrix needs at least one task")]
    EmptyScoreMatrix,
    #[error("task `{0}` has no finite score")]
    EmptyTask(String),
    #[error("score matrix has {tasks} task ids but {rows} score rows")]
    ShapeMismatch { tasks: usize, rows: usize },
}

/// A scalar run-configuration value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl ConfigValue {
    /// Compares against the literal text used in filters (`seed=1` matches both `1` and `"1"`).
    pub fn matches_text(&self, text: &str) -> bool {
        self.to_string() == text
    }
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigValue::Bool(b) => write!(f, "{b}"),
            ConfigValue::Int(i) => write!(f, "{i}"),
            ConfigValue::Float(x) => write!(f, "{x}"),
            ConfigValue::Str(s) => f.write_str(s),
        }
    }
}

impl From<&str> for ConfigValue {
    fn from(s: &str) -> Self {
        ConfigValue::Str(s.to_string())
    }
}

impl From<i64> for ConfigValue {
    fn from(i: i64) -> Self {
        ConfigValue::Int(i)
    }
}

/// One tracked experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub entity: String,
    pub project: String,
    pub name: String,
    #[serde(default)]
    pub config: BTreeMap<String, ConfigValue>,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub git_commit: Option<String>,
    #[serde(default)]
    pub dependency_snapshot: Option<String>,
    #[serde(default)]
    pub seed: Option<i64>,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Fields this version does not know about, kept so records re-save unchanged.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl RunRecord {
    /// `entity/project/run_id`
    pub fn reference(&self) -> String {
        format!("{}/{}/{}", self.entity, self.project, self.run_id)
    }
}

pub fn validate_run_record(record: RunRecord) -> Result<RunRecord, ModelError> {
    if record.run_id.is_empty() {
        return Err(ModelError::EmptyRunId);
    }
    if record.config.keys().any(|k| k.is_empty()) {
        return Err(ModelError::MalformedConfigKey);
    }
    Ok(record)
}

/// One logged observation. `value` is `None` for an explicit gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricPoint {
    pub global_step: u64,
    pub wall_time_s: f64,
    pub value: Option<f64>,
}

impl MetricPoint {
    pub fn new(global_step: u64, wall_time_s: f64, value: f64) -> Self {
        Self {
            global_step,
            wall_time_s,
            value: Some(value),
        }
    }

    pub fn missing(global_step: u64, wall_time_s: f64) -> Self {
        Self {
            global_step,
            wall_time_s,
            value: None,
        }
    }
}

/// A single metric's history for one run.
///
/// Points are sorted by `global_step` and `wall_time_s`, both non-decreasing.
/// The only way to build one is [`MetricSeries::new`], which checks this.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    run_id: String,
    metric_key: String,
    points: Vec<MetricPoint>,
}

impl MetricSeries {
    pub fn new(
        run_id: impl Into<String>,
        metric_key: impl Into<String>,
        points: Vec<MetricPoint>,
    ) -> Result<Self, ModelError> {
        let run_id = run_id.into();
        let metric_key = metric_key.into();
        for (index, p) in points.iter().enumerate() {
            if !(p.wall_time_s.is_finite() && p.wall_time_s >= 0.0) {
                return Err(ModelError::InvalidPoint {
                    index,
                    reason: format!("wall_time_s must be finite and >= 0, got {}", p.wall_time_s),
                });
            }
            if let Some(v) = p.value {
                if !v.is_finite() {
                    return Err(ModelError::InvalidPoint {
                        index,
                        reason: format!("value must be finite or missing, got {v}"),
                    });
                }
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].global_step < w[0].global_step || w[1].wall_time_s < w[0].wall_time_s {
                return Err(ModelError::UnsortedSeries {
                    run_id,
                    metric_key,
                    index: i + 1,
                });
            }
        }
        Ok(Self {
            run_id,
            metric_key,
            points,
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn metric_key(&self) -> &str {
        &self.metric_key
    }

    pub fn points(&self) -> &[MetricPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points that carry a value, as `(global_step, wall_time_s, value)`.
    pub fn present(&self) -> impl Iterator<Item = (u64, f64, f64)> + '_ {
        self.points
            .iter()
            .filter_map(|p| p.value.map(|v| (p.global_step, p.wall_time_s, v)))
    }

    pub fn into_points(self) -> Vec<MetricPoint> {
        self.points
    }
}

/// Tasks × runs matrix of final scores. Rows may be ragged.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    task_ids: Vec<String>,
    scores: Vec<Vec<f64>>,
    method_label: String,
}

impl ScoreMatrix {
    /// Builds a matrix; non-finite entries are gaps and are dropped.
    pub fn new(
        task_ids: Vec<String>,
        scores: Vec<Vec<f64>>,
        method_label: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if task_ids.is_empty() {
            return Err(ModelError::EmptyScoreMatrix);
        }
        if task_ids.len() != scores.len() {
            return Err(ModelError::ShapeMismatch {
                tasks: task_ids.len(),
                rows: scores.len(),
            });
        }
        let mut rows = Vec::with_capacity(scores.len());
        for (task, row) in task_ids.iter().zip(scores) {
            let row: Vec<f64> = row.into_iter().filter(|v| v.is_finite()).collect();
            if row.is_empty() {
                return Err(ModelError::EmptyTask(task.clone()));
            }
            rows.push(row);
        }
        Ok(Self {
            task_ids,
            scores: rows,
            method_label: method_label.into(),
        })
    }

    pub fn task_ids(&self) -> &[String] {
        &self.task_ids
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn method_label(&self) -> &str {
        &self.method_label
    }

    pub fn num_tasks(&self) -> usize {
        self.task_ids.len()
    }

    /// All scores, task by task.
    pub fn pooled(&self) -> Vec<f64> {
        self.scores.iter().flatten().copied().collect()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.method_label = label.into();
        self
    }

    /// Applies `f(task_index, score)` to every entry.
    pub fn map(&self, mut f: impl FnMut(usize, f64) -> f64) -> Result<Self, ModelError> {
        let scores = self
            .scores
            .iter()
            .enumerate()
            .map(|(m, row)| row.iter().map(|&x| f(m, x)).collect())
            .collect();
        ScoreMatrix::new(self.task_ids.clone(), scores, self.method_label.clone())
    }
}

/// Random and human reference scores for one environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceScores {
    pub random_score: f64,
    pub human_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizationTable {
    entries: BTreeMap<String, ReferenceScores>,
}

impl NormalizationTable {
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, ReferenceScores)>,
    ) -> Result<Self, ModelError> {
        let mut table = BTreeMap::new();
        for (line, (env_id, r)) in entries.into_iter().enumerate() {
            if r.human_score == r.random_score {
                return Err(ModelError::DegenerateReference(env_id));
            }
            if table.insert(env_id.clone(), r).is_some() {
                return Err(ModelError::DuplicateEnv {
                    env_id,
                    line: line + 1,
                });
            }
        }
        Ok(Self { entries: table })
    }

    pub fn get(&self, env_id: &str) -> Option<ReferenceScores> {
        self.entries.get(env_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn env_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Reads a `env_id,random_score,human_score` CSV.
pub fn load_normalization_table(path: &Path) -> Result<NormalizationTable, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| ModelError::MissingFile(path.display().to_string()))?;
    parse_normalization_table(&text)
}

pub fn parse_normalization_table(text: &str) -> Result<NormalizationTable, ModelError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| ModelError::MalformedTable {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ModelError::MalformedTable {
                line: 1,
                reason: format!("missing column `{name}`"),
            })
    };
    let (env_col, random_col, human_col) = (col("env_id")?, col("random_score")?, col("human_score")?);

    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| ModelError::MalformedTable {
            line,
            reason: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let number = |c: usize| {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ModelError::MalformedTable {
                    line,
                    reason: format!("`{}` is not a finite number", field(c)),
                })
        };
        let env_id = field(env_col).to_string();
        if env_id.is_empty() {
            return Err(ModelError::MalformedTable {
                line,
                reason: "empty env_id".into(),
            });
        }
        if !seen.insert(env_id.clone()) {
            return Err(ModelError::DuplicateEnv { env_id, line });
        }
        let r = ReferenceScores {
            random_score: number(random_col)?,
            human_score: number(human_col)?,
        };
        if r.human_score == r.random_score {
            return Err(ModelError::DegenerateReference(env_id));
        }
        entries.push((env_id, r));
    }
    NormalizationTable::from_entries(entries)
}
