use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::Command;

/// Rows of a CSV file: header first, `\n` endings, floats in shortest
/// round-trip form.
pub struct Csv {
    buf: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Self {
            buf,
            columns: header.len(),
        }
    }

    pub fn row(&mut self, fields: &[Field]) {
        assert_eq!(fields.len(), self.columns, "csv row width");
        let line: Vec<String> = fields.iter().map(Field::render).collect();
        self.buf.push_str(&line.join(","));
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }
}

pub enum Field {
    Text(String),
    Int(u64),
    Float(f64),
    Empty,
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Text(s) => s.clone(),
            Field::Int(v) => v.to_string(),
            Field::Float(v) => format!("{v:?}"),
            Field::Empty => String::new(),
        }
    }

    pub fn opt(v: Option<f64>) -> Field {
        v.map_or(Field::Empty, Field::Float)
    }
}

impl From<&str> for Field {
    fn from(s: &str) -> Self {
        Field::Text(s.to_string())
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

/// Everything needed to rerun a command. No timestamps, so reruns produce
/// identical manifests too.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub command: Command,
    pub outputs: Vec<PathBuf>,
    #[serde(default)]
    pub summary: serde_json::Map<String, serde_json::Value>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn write_file(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(contents)?;
    f.flush()
}

pub fn write_manifest(out: &Path, manifest: &RunManifest) -> std::io::Result<PathBuf> {
    let path = manifest_path(out);
    let mut json = serde_json::to_string_pretty(manifest).map_err(std::io::Error::other)?;
    json.push('\n');
    write_file(&path, json.as_bytes())?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: not a run manifest: {e}", path.display()))
}
