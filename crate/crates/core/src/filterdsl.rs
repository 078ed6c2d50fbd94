//! Parser and renderer for the run-selection strings used on the command line.
//!
//! A filter query selects a project and the metrics to plot:
//!
//! ```text
//! ?we=openrlbenchmark&wpn=sb3&ceik=env&cen=algo&metric=eval/mean_reward
//! ```
//!
//! An experiment spec selects one algorithm within that project and optionally
//! relabels it: `ppo?cl=PPO`. Values are taken literally between `=` and `&`;
//! nothing is percent-decoded because metric keys contain `/`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub const DEFAULT_ENV_ID_KEY: &str = "env";
pub const DEFAULT_EXP_NAME_KEY: &str = "exp_name";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DslError {
    #[error("filter query `{0}` must start with '?'")]
    MissingQueryPrefix(String),
    #[error("filter query `{query}` is missing required key `{key}`")]
    MissingRequiredKey { query: String, key: &'static str },
    #[error("empty value for key `{key}` in `{text}`")]
    EmptyValue { text: String, key: String },
    #[error("unknown key `{key}` in filter query `{query}`")]
    UnknownKey { query: String, key: String },
    #[error("`{pair}` in `{text}` is not a key=value pair")]
    MalformedPair { text: String, pair: String },
    #[error("experiment spec `{0}` has an empty name")]
    EmptyName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown keys are errors.
    Strict,
    /// Unknown keys are ignored with a warning.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DslWarning {
    UnknownKey(String),
    DuplicateKey(String),
}

impl fmt::Display for DslWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DslWarning::UnknownKey(k) => write!(f, "ignoring unknown filter key `{k}`"),
            DslWarning::DuplicateKey(k) => write!(f, "key `{k}` given more than once; last value wins"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterQuery {
    /// `we`
    pub entity: String,
    /// `wpn`
    pub project: String,
    /// `ceik`: the config key holding the environment id.
    pub env_id_key: String,
    /// `cen`: the config key holding the experiment name.
    pub exp_name_key: String,
    pub metrics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub name: String,
    /// `cl`
    pub label: String,
    pub extra_filters: BTreeMap<String, String>,
}

impl ExperimentSpec {
    pub fn named(name: impl Into<String>) -> Self {
        let name = name.into();
        Self {
            label: name.clone(),
            name,
            extra_filters: BTreeMap::new(),
        }
    }
}

/// A parsed filter query, the experiment specs that follow it and the
/// environments to compare them on.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterGroup {
    pub query: FilterQuery,
    pub specs: Vec<ExperimentSpec>,
    pub env_ids: Vec<String>,
}

/// Splits an `&`-separated body into `(key, value)` pairs.
pub fn split_pairs(text: &str, body: &str) -> Result<Vec<(String, String)>, DslError> {
    if body.is_empty() {
        return Ok(Vec::new());
    }
    body.split('&')
        .map(|pair| {
            let (k, v) = pair.split_once('=').ok_or_else(|| DslError::MalformedPair {
                text: text.to_string(),
                pair: pair.to_string(),
            })?;
            if k.is_empty() {
                return Err(DslError::MalformedPair {
                    text: text.to_string(),
                    pair: pair.to_string(),
                });
            }
            if v.is_empty() {
                return Err(DslError::EmptyValue {
                    text: text.to_string(),
                    key: k.to_string(),
                });
            }
            Ok((k.to_string(), v.to_string()))
        })
        .collect()
}

/// Parses leniently, logging any warnings.
pub fn parse_filter_query(text: &str) -> Result<FilterQuery, DslError> {
    let (query, warnings) = parse_filter_query_with(text, ParseMode::Lenient)?;
    for w in warnings {
        log::warn!("{w} (in `{text}`)");
    }
    Ok(query)
}

pub fn parse_filter_query_with(
    text: &str,
    mode: ParseMode,
) -> Result<(FilterQuery, Vec<DslWarning>), DslError> {
    let body = text
        .strip_prefix('?')
        .ok_or_else(|| DslError::MissingQueryPrefix(text.to_string()))?;

    let mut warnings = Vec::new();
    let mut entity = None;
    let mut project = None;
    let mut env_id_key = None;
    let mut exp_name_key = None;
    let mut metrics: Vec<String> = Vec::new();

    for (key, value) in split_pairs(text, body)? {
        let slot = match key.as_str() {
            "we" => &mut entity,
            "wpn" => &mut project,
            "ceik" => &mut env_id_key,
            "cen" => &mut exp_name_key,
            "metric" | "metrics" => {
                metrics.push(value);
                continue;
            }
            _ => {
                match mode {
                    ParseMode::Strict => {
                        return Err(DslError::UnknownKey {
                            query: text.to_string(),
                            key,
                        })
                    }
                    ParseMode::Lenient => warnings.push(DslWarning::UnknownKey(key)),
                }
                continue;
            }
        };
        if slot.replace(value).is_some() {
            warnings.push(DslWarning::DuplicateKey(key));
        }
    }

    let missing = |key| DslError::MissingRequiredKey {
        query: text.to_string(),
        key,
    };
    if metrics.is_empty() {
        return Err(missing("metric"));
    }
    let query = FilterQuery {
        entity: entity.ok_or_else(|| missing("we"))?,
        project: project.ok_or_else(|| missing("wpn"))?,
        env_id_key: env_id_key.unwrap_or_else(|| DEFAULT_ENV_ID_KEY.to_string()),
        exp_name_key: exp_name_key.unwrap_or_else(|| DEFAULT_EXP_NAME_KEY.to_string()),
        metrics,
    };
    Ok((query, warnings))
}

/// True when the query text selects metrics with the singular `metric=` key.
pub fn uses_singular_metric_key(text: &str) -> bool {
    text.strip_prefix('?')
        .map(|body| {
            body.split('&')
                .any(|pair| pair.split_once('=').map(|(k, _)| k) == Some("metric"))
        })
        .unwrap_or(false)
}

pub fn parse_experiment_spec(text: &str) -> Result<ExperimentSpec, DslError> {
    let (name, rest) = match text.split_once('?') {
        Some((name, rest)) => (name, Some(rest)),
        None => (text, None),
    };
    if name.is_empty() {
        return Err(DslError::EmptyName(text.to_string()));
    }
    let mut spec = ExperimentSpec::named(name);
    if let Some(rest) = rest {
        for (key, value) in split_pairs(text, rest)? {
            if key == "cl" {
                spec.label = value;
            } else {
                spec.extra_filters.insert(key, value);
            }
        }
    }
    Ok(spec)
}

/// Canonical form: `we`, `wpn`, `ceik`, `cen`, then one `metrics=` per metric.
/// Defaults are written out explicitly.
pub fn render_filter_query(query: &FilterQuery) -> String {
    let mut out = format!(
        "?we={}&wpn={}&ceik={}&cen={}",
        query.entity, query.project, query.env_id_key, query.exp_name_key
    );
    for m in &query.metrics {
        out.push_str("&metrics=");
        out.push_str(m);
    }
    out
}

pub fn render_experiment_spec(spec: &ExperimentSpec) -> String {
    let mut out = spec.name.clone();
    let mut pairs = Vec::new();
    if spec.label != spec.name {
        pairs.push(format!("cl={}", spec.label));
    }
    pairs.extend(spec.extra_filters.iter().map(|(k, v)| format!("{k}={v}")));
    if !pairs.is_empty() {
        out.push('?');
        out.push_str(&pairs.join("&"));
    }
    out
}

impl fmt::Display for FilterQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_filter_query(self))
    }
}
