//! Report writers: aligned text tables, JSON, CSV, and run manifests.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::pipeline::PipelineError;
use crate::stats::MetricWithCI;

/// Tracks files read and written by a command for its manifest.
#[derive(Debug, Default)]
pub struct Outputs {
    pub root: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(root: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(root).map_err(|e| PipelineError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            ..Self::default()
        })
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    /// Records a file written elsewhere (model artifacts).
    pub fn record(&mut self, path: &Path) {
        if !self.written.iter().any(|p| p == path) {
            self.written.push(path.to_path_buf());
        }
    }

    pub fn write_bytes(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf, PipelineError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))?;
        self.record(&path);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: impl AsRef<Path>, value: &T) -> Result<PathBuf, PipelineError> {
        let mut s = serde_json::to_string_pretty(value).expect("report serializes");
        s.push('\n');
        self.write_bytes(rel, s.as_bytes())
    }

    pub fn write_text(&mut self, rel: impl AsRef<Path>, text: &str) -> Result<PathBuf, PipelineError> {
        self.write_bytes(rel, text.as_bytes())
    }

    pub fn write_csv(&mut self, rel: impl AsRef<Path>, headers: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| PipelineError::Data(e.to_string());
        w.write_record(headers).map_err(csv_err)?;
        for r in rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Data(e.to_string()))?;
        self.write_bytes(rel, &bytes)
    }

    /// Writes `manifest-<command>.json` and returns its path.
    pub fn finish(mut self, command: &str, config_hash: Option<String>, config: Option<serde_json::Value>, wall: Duration) -> Result<PathBuf, PipelineError> {
        let hash_list = |paths: &[PathBuf]| -> Result<Vec<FileDigest>, PipelineError> {
            paths
                .iter()
                .map(|p| {
                    let bytes = std::fs::read(p).map_err(|e| PipelineError::io(p, e))?;
                    Ok(FileDigest {
                        path: p.display().to_string(),
                        sha256: hex::encode(Sha256::digest(&bytes)),
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            parallel: crate::par::is_parallel(),
            config_hash,
            config,
            inputs: hash_list(&self.inputs)?,
            artifacts: hash_list(&self.written)?,
            wall_time_secs: wall.as_secs_f64(),
        };
        self.write_json(format!("manifest-{command}.json"), &manifest)
    }
}

#[derive(Debug, Serialize)]
struct FileDigest {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    parallel: bool,
    config_hash: Option<String>,
    config: Option<serde_json::Value>,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
    wall_time_secs: f64,
}

/// Plain-text table: first column left-aligned, the rest right-aligned.
pub fn render_table(title: &str, headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            let pad = w - c.chars().count();
            if i == 0 {
                s.push_str(c);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str(&" ".repeat(pad));
                s.push_str(c);
            }
        }
        s.trim_end().to_string()
    };
    let total: usize = widths.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    let mut out = format!("{title}\n{}\n{}\n", "=".repeat(title.chars().count()), line(headers));
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn f3(x: f64) -> String {
    format!("{x:.3}")
}

pub fn opt3(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), f3)
}

pub fn pm(m: &MetricWithCI) -> String {
    format!("{:.3} ± {:.3}", m.mean, m.halfwidth)
}

pub fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}
