use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{collect_history, parse_history_csv, write_history_csv, HistoryFetch, IngestError, RunSource};
use crate::model::{MetricSeries, RunRecord};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub entity: String,
    pub project: String,
    pub run_id: String,
    pub metric_key: String,
    pub scan_mode: bool,
}

impl CacheKey {
    pub fn new(run: &RunRecord, metric_key: &str, scan_mode: bool) -> Self {
        Self {
            entity: run.entity.clone(),
            project: run.project.clone(),
            run_id: run.run_id.clone(),
            metric_key: metric_key.to_string(),
            scan_mode,
        }
    }

    /// Hex SHA-256 over the length-prefixed fields.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for field in [&self.entity, &self.project, &self.run_id, &self.metric_key] {
            h.update((field.len() as u64).to_le_bytes());
            h.update(field.as_bytes());
        }
        h.update([u8::from(self.scan_mode)]);
        hex::encode(h.finalize())
    }

    pub fn path_in(&self, cache_dir: &Path) -> PathBuf {
        cache_dir.join(format!("{}.csv", self.digest()))
    }
}

fn read_entry(path: &Path, key: &CacheKey) -> Option<MetricSeries> {
    let text = fs::read_to_string(path).ok()?;
    match parse_history_csv(&text, &key.run_id, &key.metric_key) {
        Ok(series) => Some(series),
        Err(p) => {
            log::warn!("discarding corrupt cache entry {}: {}", path.display(), p.reason);
            None
        }
    }
}

fn write_entry(cache_dir: &Path, path: &Path, series: &MetricSeries) -> std::io::Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(cache_dir)?;
    tmp.write_all(write_history_csv(series).as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// [`super::fetch_history`] through an on-disk cache. Hits never touch the
/// source; unreadable entries are refetched and rewritten.
pub fn cached_fetch(
    source: &dyn RunSource,
    run: &RunRecord,
    metric_keys: &[String],
    scan: bool,
    cache_dir: &Path,
) -> Result<HistoryFetch, IngestError> {
    fs::create_dir_all(cache_dir).map_err(|e| IngestError::Io {
        path: cache_dir.to_path_buf(),
        source: e,
    })?;
    collect_history(run, metric_keys, |metric_key| {
        let key = CacheKey::new(run, metric_key, scan);
        let path = key.path_in(cache_dir);
        if let Some(series) = read_entry(&path, &key) {
            return Ok(series);
        }
        let series = source.fetch_metric(run, metric_key, scan)?;
        if let Err(e) = write_entry(cache_dir, &path, &series) {
            log::warn!("could not write cache entry {}: {e}", path.display());
        }
        Ok(series)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(scan: bool) -> CacheKey {
        CacheKey {
            entity: "e".into(),
            project: "p".into(),
            run_id: "r".into(),
            metric_key: "charts/episodic_return".into(),
            scan_mode: scan,
        }
    }

    #[test]
    fn digest_is_stable_and_depends_on_scan() {
        assert_eq!(key(true).digest(), key(true).digest());
        assert_ne!(key(true).digest(), key(false).digest());
        assert_eq!(key(true).digest().len(), 64);
        let shifted = CacheKey {
            entity: "ep".into(),
            project: "".into(),
            ..key(true)
        };
        assert_ne!(shifted.digest(), key(true).digest());
    }
}
