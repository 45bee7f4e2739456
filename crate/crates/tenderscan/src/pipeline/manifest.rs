//! The persisted JSON record of one extraction run.

use crate::imagecore::BBox;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io error for {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
}

/// One confirmed tender notice: passed both the classifier and the keyword
/// rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoticeRecord {
    pub source: String,
    /// Publication date, ISO 8601 day.
    pub date: String,
    pub page: usize,
    pub bbox: BBox,
    pub crop_path: PathBuf,
    /// Classifier positive-class score in [0, 1].
    pub score: f64,
    pub matched_keywords: Vec<String>,
    pub common_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub run_id: String,
    /// ISO 8601 UTC second resolution.
    pub created_at: String,
    pub config_hash: String,
    pub records: Vec<NoticeRecord>,
}

impl Manifest {
    pub fn new(run_id: String, config_hash: String, records: Vec<NoticeRecord>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            run_id,
            created_at: now_utc_iso(),
            config_hash,
            records,
        }
    }

    /// Equality ignoring the per-invocation fields, for determinism checks.
    pub fn same_content(&self, other: &Manifest) -> bool {
        self.schema_version == other.schema_version
            && self.config_hash == other.config_hash
            && self.records == other.records
    }
}

/// Unique per invocation: timestamp plus a random suffix.
pub fn new_run_id() -> String {
    use rand::RngCore;
    let mut rng = rand::thread_rng();
    format!("run-{}-{:08x}", now_compact(), rng.next_u32())
}

#[cfg(test)]
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    // Howard Hinnant's algorithm, inverse below
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn utc_parts() -> (i64, i64, i64, i64, i64, i64) {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    let days = secs.div_euclid(86400);
    let rem = secs.rem_euclid(86400);
    let (y, m, d) = civil_from_days(days);
    (y, m, d, rem / 3600, (rem % 3600) / 60, rem % 60)
}

fn now_utc_iso() -> String {
    let (y, m, d, hh, mm, ss) = utc_parts();
    format!("{y:04}-{m:02}-{d:02}T{hh:02}:{mm:02}:{ss:02}Z")
}

fn now_compact() -> String {
    let (y, m, d, hh, mm, ss) = utc_parts();
    format!("{y:04}{m:02}{d:02}{hh:02}{mm:02}{ss:02}")
}

/// Pretty-printed JSON, written via temp file + rename.
pub fn export_manifest(manifest: &Manifest, path: &Path) -> Result<(), ManifestError> {
    let json = serde_json::to_string_pretty(manifest)?;
    let tmp = path.with_extension("json.tmp");
    let write = |p: &Path, body: &str| -> Result<(), ManifestError> {
        std::fs::write(p, body).map_err(|source| ManifestError::Io { path: p.to_path_buf(), source })
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|source| ManifestError::Io { path: parent.to_path_buf(), source })?;
        }
    }
    write(&tmp, &json)?;
    std::fs::rename(&tmp, path)
        .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let m: Manifest = serde_json::from_str(&text)?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(ManifestError::SchemaVersion(m.schema_version));
    }
    Ok(m)
}
