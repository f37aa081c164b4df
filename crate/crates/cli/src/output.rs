//! Artifact writers. Every file starts with, or carries, the artifact
//! version and the config hash.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(config_hash: String) -> Self {
        Self { version: VERSION.to_string(), config_hash }
    }

    pub fn csv_line(&self) -> String {
        format!("# selfsim {} config {}", self.version, self.config_hash)
    }
}

/// JSON document with the provenance fields at the top level.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    #[serde(flatten)]
    pub provenance: &'a Provenance,
    #[serde(flatten)]
    pub body: T,
}

pub fn json_string<T: Serialize>(prov: &Provenance, body: T) -> String {
    let mut s = serde_json::to_string_pretty(&Stamped { provenance: prov, body }).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, prov: &Provenance, body: T) -> Result<(), CliError> {
    std::fs::write(path, json_string(prov, body)).map_err(|e| CliError::io(path, e))
}

/// In-memory CSV table; written in one go so a failed run leaves no
/// partial file behind.
pub struct Csv {
    text: String,
    width: usize,
}

impl Csv {
    pub fn new(prov: &Provenance, columns: &[String]) -> Self {
        let mut text = prov.csv_line();
        text.push('\n');
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text, width: columns.len() }
    }

    pub fn with_columns(prov: &Provenance, columns: &[&str]) -> Self {
        Self::new(prov, &columns.iter().map(|c| c.to_string()).collect::<Vec<_>>())
    }

    pub fn row(&mut self, values: &[f64]) {
        self.row_with_ints(values, &[]);
    }

    /// Real columns followed by integer columns (flags, counts).
    pub fn row_with_ints(&mut self, values: &[f64], ints: &[i64]) {
        debug_assert_eq!(values.len() + ints.len(), self.width);
        let reals = values.iter().map(|v| format!("{v:.16e}"));
        let line: Vec<String> = reals.chain(ints.iter().map(|i| i.to_string())).collect();
        writeln!(self.text, "{}", line.join(",")).unwrap();
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

/// `q.csv` -> `q.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stamped_json_is_flat() {
        let prov = Provenance::new("abc".into());
        #[derive(Serialize)]
        struct Body {
            x: f64,
        }
        let v: serde_json::Value = serde_json::from_str(&json_string(&prov, Body { x: 1.5 })).unwrap();
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["version"], VERSION);
        assert_eq!(v["x"], 1.5);
    }

    #[test]
    fn csv_layout() {
        let prov = Provenance::new("h".into());
        let mut c = Csv::with_columns(&prov, &["a", "b"]);
        c.row(&[1.0, -0.25]);
        let lines: Vec<&str> = c.text.lines().collect();
        assert_eq!(lines[0], format!("# selfsim {VERSION} config h"));
        assert_eq!(lines[1], "a,b");
        let back: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(back, vec![1.0, -0.25]);
    }
}
