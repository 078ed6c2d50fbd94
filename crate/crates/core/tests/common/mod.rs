#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{TimeZone, Utc};
use rlops_core::ingest::save_archive;
use rlops_core::model::{ConfigValue, MetricPoint, MetricSeries, RunRecord};

pub const ENTITY: &str = "openrlbenchmark";
pub const PROJECT: &str = "synthetic";
pub const METRIC: &str = "charts/episodic_return";

pub fn run(run_id: &str, exp_name: &str, env_id: &str, seed: i64, minute: u32) -> RunRecord {
    let mut config = BTreeMap::new();
    config.insert("env_id".to_string(), ConfigValue::from(env_id));
    config.insert("exp_name".to_string(), ConfigValue::from(exp_name));
    config.insert("seed".to_string(), ConfigValue::from(seed));
    RunRecord {
        run_id: run_id.to_string(),
        entity: ENTITY.to_string(),
        project: PROJECT.to_string(),
        name: format!("{exp_name}__{env_id}__{seed}"),
        config,
        created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, minute, 0).unwrap(),
        command: Some(format!("python {exp_name}.py --env-id {env_id} --seed {seed}")),
        git_commit: Some("0123456789abcdef0123456789abcdef01234567".to_string()),
        dependency_snapshot: Some("numpy==1.26.4\ntorch==2.2.1\n".to_string()),
        seed: Some(seed),
        tags: Vec::new(),
        extra: BTreeMap::new(),
    }
}

/// `n` points at steps 0, 1000, ... with values `f(step)`; wall time is step / 500.
pub fn series(run_id: &str, key: &str, n: usize, f: impl Fn(f64) -> f64) -> MetricSeries {
    let points = (0..n)
        .map(|i| {
            let step = i as u64 * 1000;
            MetricPoint::new(step, step as f64 / 500.0, f(step as f64))
        })
        .collect();
    MetricSeries::new(run_id, key, points).unwrap()
}

/// Methods × envs × seeds runs of `points` points; the value of
/// (method m, env e, seed s) at step x is `curve(m, e, s, x)`.
pub fn synthetic_archive(
    root: &Path,
    methods: &[&str],
    envs: &[&str],
    seeds: usize,
    points: usize,
    curve: impl Fn(usize, usize, usize, f64) -> f64,
) -> Vec<RunRecord> {
    let mut runs = Vec::new();
    let mut histories = Vec::new();
    let mut minute = 0;
    for (m, method) in methods.iter().enumerate() {
        for (e, env) in envs.iter().enumerate() {
            for s in 0..seeds {
                let id = format!("{method}-{e}-{s}");
                runs.push(run(&id, method, env, s as i64 + 1, minute % 60));
                minute += 1;
                histories.push(series(&id, METRIC, points, |x| curve(m, e, s, x)));
            }
        }
    }
    save_archive(root, &runs, &histories).unwrap();
    runs
}

pub fn argv(tokens: &[&str]) -> Vec<String> {
    tokens.iter().map(|s| s.to_string()).collect()
}

/// Splits a shell listing into tokens: backslash-newlines join, single quotes
/// group, and `@` highlight delimiters are removed.
pub fn shell_words(listing: &str) -> Vec<String> {
    let text = listing.replace("\\\n", " ").replace('@', "");
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_word = false;
    let mut quoted = false;
    for c in text.chars() {
        match c {
            '\'' => {
                quoted = !quoted;
                in_word = true;
            }
            c if c.is_whitespace() && !quoted => {
                if in_word {
                    out.push(std::mem::take(&mut cur));
                    in_word = false;
                }
            }
            c => {
                cur.push(c);
                in_word = true;
            }
        }
    }
    if in_word {
        out.push(cur);
    }
    out
}
