//! Output directory handling: CSV files, DOT files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

/// Shortest decimal that round-trips to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn unix_millis() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

#[derive(Debug, Serialize)]
struct FileDigest {
    file: String,
    bytes: u64,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    seed: u64,
    config: &'a serde_json::Value,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    outputs: Vec<FileDigest>,
}

/// Collects the files written for one subcommand run.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
    started: u128,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new(), started: unix_millis() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> Result<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header)?;
        for row in rows {
            writer.write_record(row.into_iter().collect::<Vec<_>>())?;
        }
        let bytes = writer.into_inner().map_err(|e| anyhow::anyhow!("flushing {name}: {e}"))?;
        self.write_text(name, std::str::from_utf8(&bytes)?)
    }

    /// Writes `manifest.json` with digests of every file written so far.
    pub fn finish(self, subcommand: &str, seed: u64, config: &serde_json::Value) -> Result<PathBuf> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for file in &self.files {
            let bytes = fs::read(self.root.join(file))?;
            outputs.push(FileDigest {
                file: file.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = Manifest {
            tool: "skg",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            seed,
            config,
            started_unix_ms: self.started,
            finished_unix_ms: unix_millis(),
            outputs,
        };
        let path = self.root.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(path)
    }
}
