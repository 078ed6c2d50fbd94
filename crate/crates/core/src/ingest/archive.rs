use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use super::{
    config_matches, parse_history_csv, sample_series, sanitize_key, sort_runs, write_history_csv, IngestError,
    RunSource,
};
use crate::model::{validate_run_record, MetricSeries, RunRecord};

const RUNS_FILE: &str = "runs.jsonl";
const HISTORY_DIR: &str = "history";

/// A directory of exported runs:
/// `<root>/<entity>/<project>/runs.jsonl` and
/// `<root>/<entity>/<project>/history/<run_id>/<metric>.csv`.
///
/// Run records are read when the archive is opened; histories on demand.
#[derive(Debug, Clone)]
pub struct ArchiveSource {
    root: PathBuf,
    projects: BTreeMap<(String, String), Vec<RunRecord>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IngestError + '_ {
    move |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sorted_dirs(path: &Path) -> Result<Vec<(String, PathBuf)>, IngestError> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(path).map_err(io_err(path))? {
        let entry = entry.map_err(io_err(path))?;
        if entry.file_type().map_err(io_err(path))?.is_dir() {
            dirs.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn load_archive(root: &Path) -> Result<ArchiveSource, IngestError> {
    let mut projects = BTreeMap::new();
    for (entity, entity_dir) in sorted_dirs(root)? {
        for (project, project_dir) in sorted_dirs(&entity_dir)? {
            let file = project_dir.join(RUNS_FILE);
            if !file.is_file() {
                continue;
            }
            let runs = read_runs(&file, &entity, &project)?;
            projects.insert((entity.clone(), project), runs);
        }
    }
    Ok(ArchiveSource {
        root: root.to_path_buf(),
        projects,
    })
}

fn read_runs(file: &Path, entity: &str, project: &str) -> Result<Vec<RunRecord>, IngestError> {
    let text = fs::read_to_string(file).map_err(io_err(file))?;
    let malformed = |line: usize, reason: String| IngestError::MalformedArchive {
        file: file.to_path_buf(),
        line: Some(line as u64),
        reason,
    };
    let mut seen = BTreeSet::new();
    let mut runs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(line).map_err(|e| malformed(i + 1, e.to_string()))?;
        let record = validate_run_record(record).map_err(|e| malformed(i + 1, e.to_string()))?;
        if record.entity != entity || record.project != project {
            return Err(malformed(
                i + 1,
                format!("record belongs to {}/{}", record.entity, record.project),
            ));
        }
        if !seen.insert(record.run_id.clone()) {
            return Err(malformed(i + 1, format!("duplicate run_id `{}`", record.run_id)));
        }
        runs.push(record);
    }
    Ok(runs)
}

impl ArchiveSource {
    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Every run in the archive, grouped by project.
    pub fn runs(&self) -> impl Iterator<Item = &RunRecord> {
        self.projects.values().flatten()
    }

    fn history_path(&self, run: &RunRecord, metric_key: &str) -> PathBuf {
        history_path(&self.root, run, metric_key)
    }
}

fn project_dir(root: &Path, entity: &str, project: &str) -> PathBuf {
    root.join(entity).join(project)
}

fn history_path(root: &Path, run: &RunRecord, metric_key: &str) -> PathBuf {
    project_dir(root, &run.entity, &run.project)
        .join(HISTORY_DIR)
        .join(sanitize_key(&run.run_id))
        .join(format!("{}.csv", sanitize_key(metric_key)))
}

impl RunSource for ArchiveSource {
    fn list_runs(
        &self,
        entity: &str,
        project: &str,
        filters: &BTreeMap<String, String>,
    ) -> Result<Vec<RunRecord>, IngestError> {
        let runs = self
            .projects
            .get(&(entity.to_string(), project.to_string()))
            .ok_or_else(|| IngestError::ProjectNotFound {
                entity: entity.to_string(),
                project: project.to_string(),
            })?;
        let mut out: Vec<RunRecord> = runs.iter().filter(|r| config_matches(r, filters)).cloned().collect();
        sort_runs(&mut out);
        Ok(out)
    }

    fn fetch_metric(&self, run: &RunRecord, metric_key: &str, scan: bool) -> Result<MetricSeries, IngestError> {
        let known = self
            .projects
            .get(&(run.entity.clone(), run.project.clone()))
            .is_some_and(|runs| runs.iter().any(|r| r.run_id == run.run_id));
        if !known {
            return Err(IngestError::RunNotFound(run.reference()));
        }
        let path = self.history_path(run, metric_key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(IngestError::MetricNotFound {
                    run_id: run.run_id.clone(),
                    metric_key: metric_key.to_string(),
                })
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let series = parse_history_csv(&text, &run.run_id, metric_key).map_err(|p| IngestError::MalformedArchive {
            file: path.clone(),
            line: p.line,
            reason: p.reason,
        })?;
        Ok(if scan { series } else { sample_series(series) })
    }

    fn describe(&self) -> String {
        format!("archive {}", self.root.display())
    }

    fn download_command(&self, run: &RunRecord, dest: &str) -> String {
        let dir = project_dir(&self.root, &run.entity, &run.project)
            .join(HISTORY_DIR)
            .join(sanitize_key(&run.run_id));
        format!(
            "mkdir -p {d} && cp -R {src}/. {d}/",
            d = super::shell_quote(dest),
            src = super::shell_quote(&dir.display().to_string())
        )
    }
}

/// Writes runs and their histories under `root`, replacing any existing
/// `runs.jsonl` of the touched projects.
pub fn save_archive(root: &Path, runs: &[RunRecord], histories: &[MetricSeries]) -> Result<(), IngestError> {
    fs::create_dir_all(root).map_err(io_err(root))?;
    let mut projects: BTreeMap<(&str, &str), Vec<&RunRecord>> = BTreeMap::new();
    let mut by_id: BTreeMap<&str, Vec<&RunRecord>> = BTreeMap::new();
    for run in runs {
        validate_run_record(run.clone())?;
        let group = projects.entry((&run.entity, &run.project)).or_default();
        if group.iter().any(|r| r.run_id == run.run_id) {
            return Err(IngestError::MalformedArchive {
                file: project_dir(root, &run.entity, &run.project).join(RUNS_FILE),
                line: None,
                reason: format!("duplicate run_id `{}`", run.run_id),
            });
        }
        group.push(run);
        by_id.entry(&run.run_id).or_default().push(run);
    }

    let mut files: BTreeMap<PathBuf, &str> = BTreeMap::new();
    let mut planned = Vec::with_capacity(histories.len());
    for series in histories {
        let run = match by_id.get(series.run_id()).map(Vec::as_slice) {
            Some([run]) => *run,
            _ => return Err(IngestError::OrphanHistory(series.run_id().to_string())),
        };
        let path = history_path(root, run, series.metric_key());
        if let Some(other) = files.insert(path.clone(), series.metric_key()) {
            return Err(IngestError::KeyCollision(other.to_string(), series.metric_key().to_string()));
        }
        planned.push((path, series));
    }

    for ((entity, project), group) in &projects {
        let dir = project_dir(root, entity, project);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut text = String::new();
        for run in group {
            text.push_str(&serde_json::to_string(run).expect("run records serialize"));
            text.push('\n');
        }
        let file = dir.join(RUNS_FILE);
        fs::write(&file, text).map_err(io_err(&file))?;
    }
    for (path, series) in planned {
        let dir = path.parent().expect("history files live in a run directory");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        fs::write(&path, write_history_csv(series)).map_err(io_err(&path))?;
    }
    Ok(())
}
