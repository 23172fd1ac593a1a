//! Artifact writers. Every CSV starts with a `#` line carrying the tool version
//! and config hash; every JSON file is an [`Envelope`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const TOOL: &str = "boundstate";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<D> {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub command: String,
    pub data: D,
}

#[derive(Debug)]
pub struct WriteError {
    pub path: PathBuf,
    pub message: String,
}

impl std::fmt::Display for WriteError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

/// Writes the files of one command into `dir`.
pub struct Writer {
    dir: PathBuf,
    hash: String,
    command: String,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path, hash: &str, command: &str) -> Result<Self, WriteError> {
        fs::create_dir_all(dir).map_err(|e| WriteError { path: dir.to_path_buf(), message: e.to_string() })?;
        Ok(Writer { dir: dir.to_path_buf(), hash: hash.to_string(), command: command.to_string(), written: Vec::new() })
    }

    pub fn header_line(&self) -> String {
        format!("# {TOOL} {VERSION} config_hash={}", self.hash)
    }

    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R], columns: &[&str]) -> Result<(), WriteError> {
        let path = self.dir.join(name);
        let fail = |e: &dyn std::fmt::Display| WriteError { path: path.clone(), message: e.to_string() };
        let mut buf = Vec::new();
        writeln!(buf, "{}", self.header_line()).map_err(|e| fail(&e))?;
        {
            // Headers come from `columns` so an empty table still documents its schema.
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            w.write_record(columns).map_err(|e| fail(&e))?;
            for r in rows {
                w.serialize(r).map_err(|e| fail(&e))?;
            }
            w.flush().map_err(|e| fail(&e))?;
        }
        fs::write(&path, buf).map_err(|e| fail(&e))?;
        self.written.push(path);
        Ok(())
    }

    pub fn json<D: Serialize>(&mut self, name: &str, data: &D) -> Result<(), WriteError> {
        let path = self.dir.join(name);
        let env = Envelope {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            config_hash: self.hash.clone(),
            command: self.command.clone(),
            data,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(|e| WriteError { path: path.clone(), message: e.to_string() })?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| WriteError { path: path.clone(), message: e.to_string() })?;
        self.written.push(path);
        Ok(())
    }
}

pub fn read_json<D: DeserializeOwned>(path: &Path) -> Result<Envelope<D>, WriteError> {
    let err = |m: String| WriteError { path: path.to_path_buf(), message: m };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Splits a CSV artifact into its `#` header line and the body.
pub fn split_csv(text: &str) -> (&str, &str) {
    match text.split_once('\n') {
        Some((h, body)) if h.starts_with('#') => (h, body),
        _ => ("", text),
    }
}
