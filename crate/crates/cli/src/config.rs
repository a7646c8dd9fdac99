//! Flat `key = value` run-config files and resolved-config snapshots.
//!
//! Snapshots contain only values derived from inputs and flags, never
//! timestamps, so re-runs write byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use trialmine::{Error, Result};

/// Parse a flat TOML-style config: one `key = value` per line, `#`
/// comments, optional double quotes around values.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (idx, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::invalid(
                "config file",
                format!("{}:{}: expected key = value", path.display(), idx + 1),
            ));
        };
        let value = value.trim().trim_matches('"').to_string();
        out.insert(key.trim().to_string(), value);
    }
    Ok(out)
}

pub fn get_parsed<T: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            Error::invalid("config file", format!("bad value {raw:?} for key {key:?}"))
        }),
    }
}

/// A builder for the resolved-config snapshot written next to each
/// command's primary output.
#[derive(Default)]
pub struct Snapshot {
    entries: BTreeMap<String, String>,
}

impl Snapshot {
    pub fn new(command: &str) -> Snapshot {
        let mut s = Snapshot::default();
        s.put("command", command);
        s
    }

    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn put_opt(&mut self, key: &str, value: &Option<impl ToString>) {
        if let Some(v) = value {
            self.put(key, v.to_string());
        }
    }

    /// Write `<output>.config` beside the primary output.
    pub fn write_beside(&self, output: &Path) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let path = snapshot_path(output);
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn snapshot_path(output: &Path) -> std::path::PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".config");
    output.with_file_name(name)
}
