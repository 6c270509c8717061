//! Run manifest written beside every set of output files.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub input: Option<String>,
    pub seed: Option<u64>,
    pub b: Option<usize>,
    /// Command line after the program name.
    pub flags: Vec<String>,
    pub threads: usize,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    /// Files written by the run, relative to the output directory.
    pub outputs: Vec<String>,
}

pub struct Recorder {
    start: Instant,
    manifest: RunManifest,
}

impl Recorder {
    pub fn start(subcommand: &str, input: Option<&Path>, threads: usize) -> Self {
        Self {
            start: Instant::now(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                input: input.map(|p| p.display().to_string()),
                seed: None,
                b: None,
                flags: std::env::args().skip(1).collect(),
                threads,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                wall_time_seconds: 0.0,
                outputs: Vec::new(),
            },
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn draws(&mut self, b: usize) {
        self.manifest.b = Some(b);
    }

    /// Snapshot with the elapsed time so far.
    pub fn finish(&mut self) -> RunManifest {
        self.manifest.wall_time_seconds = self.start.elapsed().as_secs_f64();
        self.manifest.clone()
    }

    /// Writes `name` into `dir` through `write` and records it.
    pub fn write_file<F>(&mut self, dir: &Path, name: &str, write: F) -> Result<()>
    where
        F: FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>,
    {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write(std::io::BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    /// Writes `value` as pretty JSON with the manifest under the key `manifest`.
    pub fn write_json<T: Serialize>(&mut self, dir: &Path, name: &str, value: &T) -> Result<()> {
        self.manifest.outputs.push(name.to_string());
        let body = with_manifest(value, &self.finish())?;
        self.manifest.outputs.pop();
        self.write_file(dir, name, |mut w| {
            serde_json::to_writer_pretty(&mut w, &body)?;
            std::io::Write::write_all(&mut w, b"\n")?;
            Ok(())
        })
    }

    /// Writes `manifest.json` listing every file recorded so far.
    pub fn write_manifest(&mut self, dir: &Path) -> Result<()> {
        let manifest = self.finish();
        self.write_file(dir, FILE_NAME, |mut w| {
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            std::io::Write::write_all(&mut w, b"\n")?;
            Ok(())
        })
    }
}

/// `value` serialized as an object with an added `manifest` field.
pub fn with_manifest<T: Serialize>(value: &T, manifest: &RunManifest) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("manifest".into(), serde_json::to_value(manifest)?);
    }
    Ok(v)
}
