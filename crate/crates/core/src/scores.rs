//! Score normalization and reduction of aligned curves to final scores.

use std::fmt;

use thiserror::Error;

use crate::curves::AlignedCurve;
use crate::model::{ModelError, NormalizationTable, ScoreMatrix};

pub const DEFAULT_TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("environment `{0}` is not in the normalization table")]
    EnvNotInTable(String),
    #[error("task `{0}` has no scores")]
    EmptyTask(String),
    #[error("tail fraction must be in (0, 1], got {0}")]
    BadTailFraction(f64),
    #[error("matrices in one comparison must have the same number of tasks")]
    TaskCountMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormalizationMethod {
    /// `(raw − random) / (human − random)` from a reference table.
    Atari(NormalizationTable),
    /// Per task, study-wide min-max over every compared experiment.
    MinMax,
    None,
}

impl NormalizationMethod {
    pub fn name(&self) -> &'static str {
        match self {
            NormalizationMethod::Atari(_) => "atari",
            NormalizationMethod::MinMax => "minmax",
            NormalizationMethod::None => "none",
        }
    }

    /// Axis/legend wording for the normalized quantity.
    pub fn score_label(&self) -> &'static str {
        match self {
            NormalizationMethod::Atari(_) => "Human Normalized Score",
            NormalizationMethod::MinMax => "Min-Max Normalized Score",
            NormalizationMethod::None => "Score",
        }
    }
}

impl fmt::Display for NormalizationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn normalize_atari(raw: f64, env_id: &str, table: &NormalizationTable) -> Result<f64, ScoreError> {
    let r = table
        .get(env_id)
        .ok_or_else(|| ScoreError::EnvNotInTable(env_id.to_string()))?;
    Ok((raw - r.random_score) / (r.human_score - r.random_score))
}

/// Per-task `(min, max)` over every matrix in a comparison.
/// Tasks are matched by position.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxBounds {
    pub bounds: Vec<(f64, f64)>,
}

impl MinMaxBounds {
    pub fn from_rows<'a>(
        num_tasks: usize,
        rows: impl IntoIterator<Item = (usize, &'a [f64])>,
    ) -> Self {
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); num_tasks];
        for (m, row) in rows {
            for &x in row.iter().filter(|x| x.is_finite()) {
                let b = &mut bounds[m];
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
            }
        }
        Self { bounds }
    }

    pub fn from_matrices(matrices: &[&ScoreMatrix]) -> Result<Self, ScoreError> {
        let num_tasks = matrices.first().map_or(0, |m| m.num_tasks());
        if matrices.iter().any(|m| m.num_tasks() != num_tasks) {
            return Err(ScoreError::TaskCountMismatch);
        }
        Ok(Self::from_rows(
            num_tasks,
            matrices
                .iter()
                .flat_map(|m| m.rows().iter().enumerate().map(|(i, r)| (i, r.as_slice()))),
        ))
    }

    /// Maps `x` for task `m`; a degenerate task maps everything to 0.5.
    pub fn apply(&self, m: usize, x: f64) -> f64 {
        let (lo, hi) = self.bounds[m];
        if hi > lo {
            (x - lo) / (hi - lo)
        } else {
            0.5
        }
    }

    /// Indices of tasks whose min equals their max.
    pub fn degenerate_tasks(&self) -> Vec<usize> {
        self.bounds
            .iter()
            .enumerate()
            .filter(|(_, (lo, hi))| lo == hi)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxOutput {
    pub matrices: Vec<ScoreMatrix>,
    pub warnings: Vec<String>,
}

/// Min-max normalizes a set of matrices jointly: each task's bounds pool the
/// scores of every matrix.
pub fn normalize_minmax_study(matrices: &[ScoreMatrix]) -> Result<MinMaxOutput, ScoreError> {
    let refs: Vec<&ScoreMatrix> = matrices.iter().collect();
    let bounds = MinMaxBounds::from_matrices(&refs)?;
    let task_ids = matrices.first().map(|m| m.task_ids().to_vec()).unwrap_or_default();
    let warnings = bounds
        .degenerate_tasks()
        .into_iter()
        .map(|m| {
            let msg = format!(
                "task `{}` has identical min and max score; its normalized scores are set to 0.5",
                task_ids[m]
            );
            log::warn!("{msg}");
            msg
        })
        .collect();
    let matrices = matrices
        .iter()
        .map(|mat| mat.map(|m, x| bounds.apply(m, x)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MinMaxOutput { matrices, warnings })
}

pub fn normalize_minmax(matrix: &ScoreMatrix) -> Result<MinMaxOutput, ScoreError> {
    normalize_minmax_study(std::slice::from_ref(matrix))
}

/// Mean of each run's last `ceil(tail_fraction · G)` grid values.
pub fn final_scores(curve: &AlignedCurve, tail_fraction: f64) -> Result<Vec<f64>, ScoreError> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(ScoreError::BadTailFraction(tail_fraction));
    }
    let g = curve.grid.len();
    let tail = ((tail_fraction * g as f64).ceil() as usize).clamp(1, g.max(1));
    Ok(curve
        .values
        .iter()
        .map(|row| {
            let window = &row[g - tail..];
            let anchor = window[0];
            anchor + window.iter().map(|v| v - anchor).sum::<f64>() / tail as f64
        })
        .collect())
}

/// Raw final scores for one method: one `(task_id, runs)` entry per task.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodScores {
    pub label: String,
    pub tasks: Vec<(String, Vec<f64>)>,
}

/// Normalizes every method's raw scores. With min-max the bounds are pooled
/// over all methods, matching tasks by position.
pub fn build_score_matrices(
    methods: &[MethodScores],
    method: &NormalizationMethod,
) -> Result<MinMaxOutput, ScoreError> {
    let raw = methods
        .iter()
        .map(|ms| {
            if let Some((task, _)) = ms.tasks.iter().find(|(_, runs)| runs.is_empty()) {
                return Err(ScoreError::EmptyTask(task.clone()));
            }
            let (ids, rows): (Vec<String>, Vec<Vec<f64>>) = ms.tasks.iter().cloned().unzip();
            Ok(ScoreMatrix::new(ids, rows, ms.label.clone())?)
        })
        .collect::<Result<Vec<_>, ScoreError>>()?;
    match method {
        NormalizationMethod::None => Ok(MinMaxOutput {
            matrices: raw,
            warnings: Vec::new(),
        }),
        NormalizationMethod::Atari(table) => {
            let matrices = raw
                .iter()
                .map(|mat| {
                    let mut scores = Vec::with_capacity(mat.num_tasks());
                    for (task, row) in mat.task_ids().iter().zip(mat.rows()) {
                        scores.push(
                            row.iter()
                                .map(|&x| normalize_atari(x, task, table))
                                .collect::<Result<Vec<_>, _>>()?,
                        );
                    }
                    Ok(ScoreMatrix::new(mat.task_ids().to_vec(), scores, mat.method_label())?)
                })
                .collect::<Result<Vec<_>, ScoreError>>()?;
            Ok(MinMaxOutput {
                matrices,
                warnings: Vec::new(),
            })
        }
        NormalizationMethod::MinMax => normalize_minmax_study(&raw),
    }
}

pub fn build_score_matrix(
    scores: &MethodScores,
    method: &NormalizationMethod,
) -> Result<ScoreMatrix, ScoreError> {
    Ok(build_score_matrices(std::slice::from_ref(scores), method)?
        .matrices
        .remove(0))
}

/// Caps every score at `threshold`.
pub fn clamp_scores(matrix: &ScoreMatrix, threshold: f64) -> Result<ScoreMatrix, ScoreError> {
    Ok(matrix.map(|_, x| x.min(threshold))?)
}
