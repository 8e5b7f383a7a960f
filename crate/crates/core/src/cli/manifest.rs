use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

static STARTED: OnceLock<Instant> = OnceLock::new();

/// Marks the start of the run; durations in manifests count from here.
pub fn mark_start() {
    STARTED.get_or_init(Instant::now);
}

pub fn version() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        write!(out, "{b:02x}").expect("write to string");
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub defaults: Vec<String>,
    pub duration_seconds: f64,
    pub outputs: Vec<OutputEntry>,
    pub headline: Map<String, Value>,
}

/// Collects written files and headline numbers, then writes
/// `manifest.json` into `root`.
pub struct Outputs {
    root: PathBuf,
    command: String,
    started: Instant,
    entries: Vec<OutputEntry>,
    headline: Map<String, Value>,
}

impl Outputs {
    pub fn new(root: impl Into<PathBuf>, command: &str) -> std::io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self {
            root,
            command: command.into(),
            started: *STARTED.get_or_init(Instant::now),
            entries: Vec::new(),
            headline: Map::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `name` relative to the root.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes)?;
        self.entries.retain(|e| e.path != name);
        self.entries.push(OutputEntry {
            path: name.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn headline(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.headline.insert(key.into(), v);
    }

    pub fn finish(self, config: Value, defaults: Vec<String>) -> std::io::Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command,
            version: version(),
            config,
            defaults,
            duration_seconds: self.started.elapsed().as_secs_f64(),
            outputs: self.entries,
            headline: self.headline,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        text.push('\n');
        std::fs::write(self.root.join("manifest.json"), text)?;
        Ok(manifest)
    }
}

/// CSV with a header row and one line per record.
pub fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").expect("write to string");
        }
        out.push('\n');
    }
    out
}
