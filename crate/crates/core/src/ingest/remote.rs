use std::collections::BTreeMap;
use std::time::Duration;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};

use super::{parse_history_csv, IngestError, RunSource, API_KEY_ENV};
use crate::model::{validate_run_record, MetricSeries, RunRecord};

const BODY_LIMIT: u64 = 1 << 30;

/// Client for the JSON-over-HTTP tracking API:
///
/// * `GET {base}/api/v1/{entity}/{project}/runs?{config filters}` returns a JSON array of runs
/// * `GET {base}/api/v1/{entity}/{project}/runs/{run_id}/history?metric={key}&scan={bool}` returns history CSV
pub struct RemoteSource {
    base_url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl RemoteSource {
    pub fn new(base_url: impl Into<String>, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            token,
            agent,
        }
    }

    /// Token taken from `RLOPS_API_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Self {
        Self::new(base_url, std::env::var(API_KEY_ENV).ok().filter(|t| !t.is_empty()))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn project_url(&self, entity: &str, project: &str) -> String {
        format!("{}/api/v1/{}/{}", self.base_url, segment(entity), segment(project))
    }

    /// Returns (status, body); transport failures become `SourceUnreachable`.
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<(u16, String), IngestError> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, *v);
        }
        if let Some(token) = &self.token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.call().map_err(|e| unreachable(url, e))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(BODY_LIMIT)
            .read_to_string()
            .map_err(|e| unreachable(url, e))?;
        Ok((status, body))
    }
}

fn segment(s: &str) -> String {
    utf8_percent_encode(s, NON_ALPHANUMERIC).to_string()
}

fn unreachable(url: &str, e: ureq::Error) -> IngestError {
    IngestError::SourceUnreachable(format!("{url}: {e}"))
}

fn status_error(url: &str, status: u16, body: String) -> IngestError {
    IngestError::HttpStatus {
        url: url.to_string(),
        status,
        body: body.chars().take(200).collect(),
    }
}

impl RunSource for RemoteSource {
    fn list_runs(
        &self,
        entity: &str,
        project: &str,
        filters: &BTreeMap<String, String>,
    ) -> Result<Vec<RunRecord>, IngestError> {
        let url = format!("{}/runs", self.project_url(entity, project));
        let query: Vec<(&str, &str)> = filters.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let (status, body) = self.get(&url, &query)?;
        match status {
            200 => {}
            404 => {
                return Err(IngestError::ProjectNotFound {
                    entity: entity.to_string(),
                    project: project.to_string(),
                })
            }
            _ => return Err(status_error(&url, status, body)),
        }
        let runs: Vec<RunRecord> = serde_json::from_str(&body).map_err(|e| IngestError::MalformedResponse {
            url: url.clone(),
            reason: e.to_string(),
        })?;
        runs.into_iter()
            .map(|r| validate_run_record(r).map_err(IngestError::from))
            .collect()
    }

    fn fetch_metric(&self, run: &RunRecord, metric_key: &str, scan: bool) -> Result<MetricSeries, IngestError> {
        let url = format!(
            "{}/runs/{}/history",
            self.project_url(&run.entity, &run.project),
            segment(&run.run_id)
        );
        let scan_text = if scan { "true" } else { "false" };
        let (status, body) = self.get(&url, &[("metric", metric_key), ("scan", scan_text)])?;
        match status {
            200 => {}
            404 if body.trim_start().starts_with("run not found") => {
                return Err(IngestError::RunNotFound(run.reference()))
            }
            404 => {
                return Err(IngestError::MetricNotFound {
                    run_id: run.run_id.clone(),
                    metric_key: metric_key.to_string(),
                })
            }
            _ => return Err(status_error(&url, status, body)),
        }
        parse_history_csv(&body, &run.run_id, metric_key).map_err(|p| IngestError::MalformedResponse {
            url,
            reason: match p.line {
                Some(l) => format!("line {l}: {}", p.reason),
                None => p.reason,
            },
        })
    }

    fn describe(&self) -> String {
        format!("tracking server {}", self.base_url)
    }

    fn download_command(&self, run: &RunRecord, dest: &str) -> String {
        let url = format!("{}/runs/{}/files", self.project_url(&run.entity, &run.project), segment(&run.run_id));
        let d = super::shell_quote(dest);
        format!(
            "mkdir -p {d} && curl -fsSL -H \"Authorization: Bearer ${{{API_KEY_ENV}}}\" {} | tar -x -C {d}",
            super::shell_quote(&url)
        )
    }
}
