//! Shared command plumbing: key=value config files, worker-pool setup,
//! and the per-run artifact manifest.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

/// Version stamp written into every JSON artifact and the manifest.
pub const SCHEMA_VERSION: u32 = 1;

pub type CmdResult = Result<(), Box<dyn std::error::Error>>;

/// Defaults from a `key = value` file; command-line flags take precedence.
/// Keys use the long flag names without the leading dashes.
pub struct FileConfig {
    values: HashMap<String, String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut values = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(format!(
                        "{}:{}: expected key=value, got {line:?}",
                        path.display(),
                        lineno + 1
                    ));
                };
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(Self { values })
    }

    /// Flag value if given, else the config entry, else the default.
    pub fn resolve<T: FromStr + Clone>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, String> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map_err(|_| format!("config key {key}: cannot parse {raw:?}")),
            None => Ok(default),
        }
    }

    pub fn resolve_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, String> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| format!("config key {key}: cannot parse {raw:?}")),
            None => Ok(None),
        }
    }
}

/// Sizes the global worker pool; silently keeps the default when a pool
/// already exists (tests invoke commands in-process).
pub fn init_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    artifacts: &'a [String],
}

/// Writes `manifest.json` into the output directory, listing what this
/// run produced.
pub fn write_manifest(dir: &Path, command: &str, artifacts: &[String]) -> std::io::Result<PathBuf> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        artifacts,
    };
    let path = dir.join("manifest.json");
    fs::write(
        &path,
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;
    Ok(path)
}

/// Creates the output directory (and parents) if needed.
pub fn ensure_out_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))
}
