//! Output directory with a manifest of every file written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;
use crate::report::{sha256_hex, ManifestEntry};

/// One CSV cell. Floats use the shortest round-trip representation, so equal
/// values always print to equal bytes.
pub enum Cell {
    F(f64),
    U(usize),
    S(String),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => format!("{x:?}"),
            Cell::U(n) => n.to_string(),
            Cell::S(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}

impl From<usize> for Cell {
    fn from(n: usize) -> Self {
        Cell::U(n)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Missing, Cell::F)
    }
}

pub struct OutputDir {
    root: PathBuf,
    prefix: String,
    manifest: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            prefix: String::new(),
            manifest: Vec::new(),
        })
    }

    /// Subdirectory whose manifest paths carry the `name/` prefix.
    pub fn subdir(&self, name: &str) -> Result<Self, CliError> {
        let root = self.root.join(name);
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(Self {
            root,
            prefix: format!("{}{name}/", self.prefix),
            manifest: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &[ManifestEntry] {
        &self.manifest
    }

    pub fn into_manifest(self) -> Vec<ManifestEntry> {
        self.manifest
    }

    pub fn absorb(&mut self, entries: Vec<ManifestEntry>) {
        self.manifest.extend(entries);
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.manifest.push(ManifestEntry {
            path: format!("{}{name}", self.prefix),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<(), CliError> {
        let csv_err = |e: csv::Error| CliError::Csv {
            path: self.root.join(name).display().to_string(),
            source: e,
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io {
            path: name.to_string(),
            source: e.into_error(),
        })?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("results serialize");
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source: e,
    }
}
