//! Atomic file output and the per-run manifest.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

/// Collects the files of one run; everything is written through a temp
/// file in the target directory and renamed into place.
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<String>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        let path = self.dir.join(name);
        tmp.persist(&path).map_err(|e| e.error)?;
        self.files.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> std::io::Result<PathBuf> {
        let mut text = serde_json::to_vec_pretty(value).map_err(std::io::Error::other)?;
        text.push(b'\n');
        self.write_bytes(name, &text)
    }

    /// Writes a header and rows of already formatted fields.
    pub fn write_csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> std::io::Result<PathBuf>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.write_bytes(name, &bytes)
    }

    /// Written last so its presence marks a complete run.
    pub fn finish(mut self, manifest: Manifest) -> std::io::Result<PathBuf> {
        let manifest = ManifestFile {
            files: self.files.clone(),
            ..manifest.into()
        };
        self.write_json("manifest.json", &manifest)
    }
}

pub struct Manifest {
    pub command: &'static str,
    pub seed: u64,
    pub workers: usize,
    pub config: Value,
    pub summary: Value,
}

#[derive(Serialize)]
struct ManifestFile {
    command: &'static str,
    version: &'static str,
    seed: u64,
    workers: usize,
    files: Vec<String>,
    summary: Value,
    config: Value,
}

impl From<Manifest> for ManifestFile {
    fn from(m: Manifest) -> Self {
        Self {
            command: m.command,
            version: env!("CARGO_PKG_VERSION"),
            seed: m.seed,
            workers: m.workers,
            files: Vec::new(),
            summary: m.summary,
            config: m.config,
        }
    }
}

/// Round-trip float formatting; NaN and infinities as `NaN`, `inf`, `-inf`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:e}")
    }
}
