//! Report envelope, sidecar metadata, CSV tables and the result cache.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const CACHE_ENV: &str = "MZLAB_CACHE_DIR";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub pass: bool,
    pub result: Value,
}

impl Report {
    pub fn new(config: &RunConfig, pass: bool, result: Value) -> Self {
        Self { schema_version: SCHEMA_VERSION, command: config.command.clone(), config: config.clone(), pass, result }
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal reports.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    report: &'a str,
    sha256: String,
    created_unix: u64,
    elapsed_ms: u128,
    cache_hit: bool,
    tool_version: &'static str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

/// Writes `report` to `path` and timing data to `path.meta.json`.
pub fn write_report(path: &Path, json: &str, elapsed_ms: u128, cache_hit: bool) -> Result<()> {
    write_atomic(path, json.as_bytes())?;
    let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let report = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let meta = Meta {
        report: &report,
        sha256: sha256_hex(json.as_bytes()),
        created_unix,
        elapsed_ms,
        cache_hit,
        tool_version: env!("CARGO_PKG_VERSION"),
    };
    write_atomic(&sidecar_path(path), (serde_json::to_string_pretty(&meta)? + "\n").as_bytes())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CsvRow {
    pub n: usize,
    pub lower_bound: f64,
    pub norm_upper: f64,
    pub lhs: f64,
    pub rhs_product: f64,
    pub seed: u64,
}

pub fn write_csv(path: &Path, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(vec![]);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(["n", "lower_bound", "norm_upper", "lhs", "rhs_product", "seed"])?;
    }
    write_atomic(path, &w.into_inner()?)
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    /// `explicit` wins over the environment, which wins over the user cache dir.
    pub fn resolve(explicit: Option<&Path>) -> Option<Self> {
        let dir = explicit
            .map(Path::to_path_buf)
            .or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
            .or_else(|| std::env::var_os("XDG_CACHE_HOME").map(|d| PathBuf::from(d).join("mzlab")))
            .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache").join("mzlab")))?;
        Some(Self { dir })
    }

    /// Stable key: sha256 of the canonical config JSON (sorted keys) and tool version.
    pub fn key(config: &RunConfig) -> Result<String> {
        let canonical = serde_json::to_string(&serde_json::json!({
            "tool_version": env!("CARGO_PKG_VERSION"),
            "schema_version": SCHEMA_VERSION,
            "config": serde_json::to_value(config)?,
        }))?;
        Ok(sha256_hex(canonical.as_bytes()))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        // a corrupt entry counts as a miss
        serde_json::from_str::<Report>(&text).ok().map(|_| text)
    }

    pub fn put(&self, key: &str, json: &str) -> Result<()> {
        write_atomic(&self.path(key), json.as_bytes())
    }
}
