//! Command-line entry points: `rlops`, `rlops-multi-metrics` and
//! `rlops reproduce <entity/project/run_id>`.
//!
//! Exit codes: 0 success, 1 other failure, 2 bad arguments, 3 no runs
//! found, 4 data source unreachable.

pub mod args;
mod pipeline;
pub mod reproduce;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ingest::{load_archive, IngestError, RemoteSource, RunSource};

pub use args::{parse_args, NormalizationChoice, RliableOptions, RlopsArgs};
pub use pipeline::{run_pipeline, Outputs};
pub use reproduce::{generate_reproduction_script, ReproError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NO_RUNS: i32 = 3;
pub const EXIT_UNREACHABLE: i32 = 4;

pub const ARCHIVE_ENV: &str = "RLOPS_ARCHIVE";
pub const API_URL_ENV: &str = "RLOPS_API_URL";
pub const CACHE_DIR_ENV: &str = "RLOPS_CACHE_DIR";
pub const NORMALIZATION_TABLE_ENV: &str = "RLOPS_NORMALIZATION_TABLE";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    NoRuns(String),
    #[error("{0}")]
    Unreachable(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) if !e.use_stderr() => EXIT_OK,
            CliError::Clap(_) | CliError::Usage(_) => EXIT_USAGE,
            CliError::NoRuns(_) => EXIT_NO_RUNS,
            CliError::Unreachable(_) => EXIT_UNREACHABLE,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }

    fn report(&self) {
        match self {
            CliError::Clap(e) => {
                let _ = e.print();
            }
            other => eprintln!("error: {other}"),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::SourceUnreachable(_) => CliError::Unreachable(e.to_string()),
            IngestError::NoRunsFound { .. } | IngestError::ProjectNotFound { .. } => CliError::NoRuns(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

/// Settings normally read from the process environment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Env {
    pub archive: Option<PathBuf>,
    pub api_url: Option<String>,
    pub api_key: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub normalization_table: Option<PathBuf>,
}

impl Env {
    pub fn from_process() -> Self {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let cache_dir = var(CACHE_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| var("HOME").map(|h| Path::new(&h).join(".cache").join("rlops")));
        Self {
            archive: var(ARCHIVE_ENV).map(PathBuf::from),
            api_url: var(API_URL_ENV),
            api_key: var(crate::ingest::API_KEY_ENV),
            cache_dir,
            normalization_table: var(NORMALIZATION_TABLE_ENV).map(PathBuf::from),
        }
    }
}

/// The configured run source and, for remote sources, the cache directory.
/// An explicit `api_url` wins over the archive, which wins over the API URL variable.
pub fn open_source(env: &Env, api_url: Option<&str>) -> Result<(Box<dyn RunSource>, Option<PathBuf>), CliError> {
    if let (None, Some(root)) = (api_url, &env.archive) {
        let archive = load_archive(root).map_err(|e| match e {
            IngestError::Io { .. } => CliError::Unreachable(format!("cannot read archive: {e}")),
            other => CliError::from(other),
        })?;
        return Ok((Box::new(archive), None));
    }
    let url = api_url.map(str::to_string).or_else(|| env.api_url.clone()).ok_or_else(|| {
        CliError::Unreachable(format!(
            "no data source: set {ARCHIVE_ENV} to an archive directory, or {API_URL_ENV} / --api-url to a tracking server"
        ))
    })?;
    Ok((Box::new(RemoteSource::new(url, env.api_key.clone())), env.cache_dir.clone()))
}

fn finish(result: Result<(), CliError>) -> i32 {
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            e.report();
            e.exit_code()
        }
    }
}

/// `rlops` with arguments after the program name, reading the process environment.
pub fn run_rlops(args: &[String]) -> i32 {
    run_rlops_with(args, &Env::from_process())
}

pub fn run_rlops_with(args: &[String], env: &Env) -> i32 {
    if args.first().map(String::as_str) == Some("reproduce") {
        return finish(reproduce::run_reproduce(&args[1..], env));
    }
    finish(parse_args(args, false).and_then(|a| run_pipeline(&a, env, false).map(|_| ())))
}

pub fn run_rlops_multi_metrics(args: &[String]) -> i32 {
    run_rlops_multi_metrics_with(args, &Env::from_process())
}

pub fn run_rlops_multi_metrics_with(args: &[String], env: &Env) -> i32 {
    finish(parse_args(args, true).and_then(|a| run_pipeline(&a, env, true).map(|_| ())))
}
