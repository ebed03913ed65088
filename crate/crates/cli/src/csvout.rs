//! Output directory handling. Every file optionally starts with a timestamp
//! comment; suppressing it (`--no-timestamp`) makes reruns byte-identical.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

#[derive(Debug, Clone)]
pub struct OutDir {
    dir: PathBuf,
    timestamp: bool,
}

impl OutDir {
    pub fn new(dir: impl Into<PathBuf>, timestamp: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir, timestamp })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        if self.timestamp {
            writeln!(w, "# generated {}", chrono::Utc::now().to_rfc3339())?;
        }
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

/// Shortest round-trip representation of a double.
pub fn fmt(v: f64) -> String {
    format!("{v}")
}
