//! `rlops reproduce <entity/project/run_id>`: prints a shell script that
//! rebuilds a tracked run from its recorded provenance. Nothing is executed.

use std::path::PathBuf;

use clap::{Arg, Command};
use thiserror::Error;

use super::{open_source, CliError, Env};
use crate::ingest::{shell_quote, IngestError, RunSource};
use crate::model::RunRecord;

const SNAPSHOT_FILE: &str = "requirements.lock";
const FILES_DIR: &str = "run-files";

#[derive(Debug, Error)]
pub enum ReproError {
    #[error("run reference `{0}` is not of the form entity/project/run_id")]
    BadRef(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("run {run} lacks provenance needed to reproduce it: missing {}", missing.join(", "))]
    IncompleteProvenance { run: String, missing: Vec<&'static str> },
}

impl From<ReproError> for CliError {
    fn from(e: ReproError) -> Self {
        match e {
            ReproError::BadRef(_) => CliError::Usage(e.to_string()),
            ReproError::Ingest(IngestError::RunNotFound(_)) => CliError::NoRuns(e.to_string()),
            ReproError::Ingest(inner) => inner.into(),
            ReproError::IncompleteProvenance { .. } => CliError::Failed(e.to_string()),
        }
    }
}

fn parse_ref(run_ref: &str) -> Result<(&str, &str, &str), ReproError> {
    let parts: Vec<&str> = run_ref.split('/').collect();
    match parts.as_slice() {
        [e, p, r] if !e.is_empty() && !p.is_empty() && !r.is_empty() => Ok((e, p, r)),
        _ => Err(ReproError::BadRef(run_ref.to_string())),
    }
}

fn present(field: &Option<String>) -> Option<&str> {
    field.as_deref().filter(|s| !s.trim().is_empty())
}

/// Heredoc terminator that does not occur as a line of `body`.
fn delimiter(body: &str) -> String {
    let mut d = String::from("RLOPS_SNAPSHOT");
    while body.lines().any(|l| l == d) {
        d.push('_');
    }
    d
}

/// Script text for one run record.
pub fn reproduction_script(source: &dyn RunSource, run: &RunRecord) -> Result<String, ReproError> {
    let command = present(&run.command);
    let commit = present(&run.git_commit);
    let snapshot = present(&run.dependency_snapshot);
    let missing: Vec<&'static str> = [
        ("command", command.is_none()),
        ("git_commit", commit.is_none()),
        ("dependency_snapshot", snapshot.is_none()),
    ]
    .into_iter()
    .filter_map(|(name, absent)| absent.then_some(name))
    .collect();
    let (Some(command), Some(commit), Some(snapshot)) = (command, commit, snapshot) else {
        return Err(ReproError::IncompleteProvenance {
            run: run.reference(),
            missing,
        });
    };

    let mut s = String::new();
    s.push_str("#!/bin/sh\n");
    s.push_str(&format!("# Reproduces {}\n", run.reference()));
    if let Some(seed) = run.seed {
        s.push_str(&format!("# seed: {seed}\n"));
    }
    s.push_str("set -eu\n\n");

    s.push_str("# 1. Source at the recorded commit (run from a clone of the training code)\n");
    s.push_str(&format!("git checkout --detach {}\n\n", shell_quote(commit)));

    s.push_str("# 2. Environment with the frozen dependencies\n");
    let snapshot = if snapshot.ends_with('\n') { snapshot.to_string() } else { format!("{snapshot}\n") };
    let d = delimiter(&snapshot);
    s.push_str(&format!("cat > {SNAPSHOT_FILE} <<'{d}'\n{snapshot}{d}\n"));
    s.push_str(&format!(
        "python -m venv .venv && . .venv/bin/activate && python -m pip install -r {SNAPSHOT_FILE}\n\n"
    ));

    s.push_str("# 3. Files stored with the run\n");
    s.push_str(&source.download_command(run, FILES_DIR));
    s.push_str("\n\n");

    s.push_str("# 4. Original command\n");
    s.push_str(command.trim_end_matches('\n'));
    s.push('\n');
    Ok(s)
}

/// Looks up `entity/project/run_id` and builds its script.
pub fn generate_reproduction_script(source: &dyn RunSource, run_ref: &str) -> Result<String, ReproError> {
    let (entity, project, run_id) = parse_ref(run_ref)?;
    let run = source.get_run(entity, project, run_id)?;
    reproduction_script(source, &run)
}

fn command() -> Command {
    Command::new("rlops reproduce")
        .about("Print a shell script that reproduces a tracked run")
        .arg(Arg::new("run_ref").required(true).value_name("ENTITY/PROJECT/RUN_ID"))
        .arg(
            Arg::new("output")
                .long("output")
                .short('o')
                .value_name("PATH")
                .value_parser(clap::value_parser!(PathBuf))
                .help("Write the script here instead of stdout"),
        )
        .arg(Arg::new("api-url").long("api-url").value_name("URL"))
}

pub fn run_reproduce(args: &[String], env: &Env) -> Result<(), CliError> {
    let m = command().try_get_matches_from(std::iter::once("rlops reproduce".to_string()).chain(args.iter().cloned()))?;
    let run_ref = m.get_one::<String>("run_ref").expect("required");
    parse_ref(run_ref)?;
    let (source, _) = open_source(env, m.get_one::<String>("api-url").map(String::as_str))?;
    let script = generate_reproduction_script(source.as_ref(), run_ref)?;
    match m.get_one::<PathBuf>("output") {
        Some(path) => std::fs::write(path, &script).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?,
        None => print!("{script}"),
    }
    Ok(())
}
