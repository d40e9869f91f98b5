//! Run directories, manifests, and deterministic data emission.
//!
//! Every command writes its data files into a fresh directory
//! `<out>/<command>/<timestamp>/` and records a `manifest.json` next to them
//! with the full resolved parameter set and a SHA-256 digest per data file.
//! Data files depend only on the parameters — never on the clock, the path,
//! or the worker count — so re-executing a manifest must reproduce every
//! data file bit for bit.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Floats rendered with 17 significant digits: enough to round-trip any
/// `f64` exactly, so text outputs are as reproducible as the binary values.
pub fn f17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Comma-separated rows with a single header line.
    Csv,
    /// The same rows as an array of JSON objects.
    Json,
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}

/// Digest record of one emitted data file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// The reproducibility record of a run: command, resolved parameters, and
/// the digests of everything the run wrote.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub timestamp: String,
    /// Worker-thread count the run was launched with (0 = library default).
    /// Recorded for the log only; outputs never depend on it.
    pub threads: usize,
    pub params: serde_json::Value,
    pub outputs: Vec<OutputDigest>,
}

pub fn read_manifest(path: &Path) -> io::Result<Manifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(io_other)
}

/// A per-run output directory collecting data files and their digests.
pub struct RunDir {
    pub dir: PathBuf,
    outputs: Vec<OutputDigest>,
}

impl RunDir {
    pub fn create(out_base: &Path, command: &str) -> io::Result<RunDir> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let parent = out_base.join(command);
        fs::create_dir_all(&parent)?;
        let mut dir = parent.join(&stamp);
        let mut k = 0u32;
        while dir.exists() {
            k += 1;
            dir = parent.join(format!("{stamp}-{k}"));
        }
        fs::create_dir(&dir)?;
        Ok(RunDir {
            dir,
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        let mut h = Sha256::new();
        h.update(bytes);
        self.outputs.push(OutputDigest {
            file: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(h.finalize()),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(io_other)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Emit a per-row table as `<name>.csv` (one header line, fields joined
    /// by commas) or `<name>.json` (array of objects), per the run format.
    pub fn write_rows(
        &mut self,
        name: &str,
        format: Format,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> io::Result<()> {
        match format {
            Format::Csv => {
                let mut text = String::with_capacity(32 * (rows.len() + 1));
                text.push_str(&header.join(","));
                text.push('\n');
                for row in rows {
                    debug_assert_eq!(row.len(), header.len());
                    text.push_str(&row.join(","));
                    text.push('\n');
                }
                self.write(&format!("{name}.csv"), text.as_bytes())
            }
            Format::Json => {
                let objs: Vec<serde_json::Value> = rows
                    .iter()
                    .map(|row| {
                        let mut m = serde_json::Map::new();
                        for (k, v) in header.iter().zip(row) {
                            m.insert(k.to_string(), cell_value(v));
                        }
                        serde_json::Value::Object(m)
                    })
                    .collect();
                self.write_json(&format!("{name}.json"), &objs)
            }
        }
    }

    /// Write the manifest and hand back its path plus the digest list.
    pub fn finish(
        self,
        command: &str,
        threads: usize,
        params: serde_json::Value,
    ) -> io::Result<(PathBuf, Vec<OutputDigest>)> {
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            threads,
            params,
            outputs: self.outputs.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io_other)?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text)?;
        Ok((path, self.outputs))
    }
}

/// Map a pre-formatted cell back to a JSON value: integers stay integers,
/// finite floats become numbers (the 17-digit text parses back exactly),
/// non-finite floats become null, anything else stays a string.
fn cell_value(cell: &str) -> serde_json::Value {
    if let Ok(u) = cell.parse::<u64>() {
        return serde_json::Value::from(u);
    }
    if let Ok(i) = cell.parse::<i64>() {
        return serde_json::Value::from(i);
    }
    if let Ok(f) = cell.parse::<f64>() {
        return if f.is_finite() {
            serde_json::Value::from(f)
        } else {
            serde_json::Value::Null
        };
    }
    serde_json::Value::from(cell)
}

fn io_other<E: Into<Box<dyn std::error::Error + Send + Sync>>>(e: E) -> io::Error {
    io::Error::new(io::ErrorKind::Other, e)
}
