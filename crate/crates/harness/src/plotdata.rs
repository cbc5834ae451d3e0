//! Plot-ready matrices and the manifest that indexes every emitted file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_CONVENTION: &str = "Error = (Kn*H + sigma*<u1 v1>) / (sigma*<u1 v1>)";
pub const MATRIX_LAYOUT: &str = "ny rows by nx columns; row r holds y-index r (bottom row first), column c holds x-index c";

/// A `(nx, ny)` field as `ny` comma-separated rows of `nx` values. Masked
/// cells (`NaN`) are written as `nan`.
pub fn matrix_csv(field: &Array2<f64>) -> String {
    let (nx, ny) = field.dim();
    let mut s = String::with_capacity(nx * ny * 24);
    for j in 0..ny {
        for i in 0..nx {
            if i > 0 {
                s.push(',');
            }
            let v = field[[i, j]];
            if v.is_nan() {
                s.push_str("nan");
            } else {
                let _ = write!(s, "{v:e}");
            }
        }
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output root, `/`-separated.
    pub path: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kn: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 2]>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub config_sha256: String,
    pub error_convention: String,
    pub matrix_layout: String,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::io(path, std::io::Error::other(e)))
    }
}

/// Where a field sits in the sweep, for the manifest.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tag {
    pub kn: Option<f64>,
    pub h: Option<f64>,
}

/// Single writer for one output tree; artifacts are listed in write order.
pub struct Collector {
    root: PathBuf,
    config_hash: String,
    artifacts: Vec<Artifact>,
}

impl Collector {
    /// Creates `root` and records the effective config as the first artifact.
    pub fn new(root: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        let mut c = Self {
            root: root.to_path_buf(),
            config_hash: cfg.hash(),
            artifacts: Vec::new(),
        };
        let mut stored = cfg.clone();
        stored.output_dir = None;
        c.write_text("config.json", "config", Tag::default(), None, &(stored.to_json() + "\n"))?;
        Ok(c)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_text(&mut self, rel: &str, kind: &str, tag: Tag, shape: Option<[usize; 2]>, text: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        self.artifacts.push(Artifact {
            path: rel.to_string(),
            kind: kind.to_string(),
            kn: tag.kn,
            h: tag.h,
            shape,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
        Ok(())
    }

    pub fn write_matrix(&mut self, rel: &str, kind: &str, tag: Tag, field: &Array2<f64>) -> Result<()> {
        let (nx, ny) = field.dim();
        self.write_text(rel, kind, tag, Some([ny, nx]), &matrix_csv(field))
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, kind: &str, value: &S) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("serializable report") + "\n";
        self.write_text(rel, kind, Tag::default(), None, &text)
    }

    pub fn finish(self) -> Result<Manifest> {
        let m = Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: self.config_hash,
            error_convention: ERROR_CONVENTION.to_string(),
            matrix_layout: MATRIX_LAYOUT.to_string(),
            artifacts: self.artifacts,
        };
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&m).expect("serializable manifest") + "\n";
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        Ok(m)
    }
}

/// One named scalar field of a field set.
pub struct NamedField<'a> {
    pub name: &'a str,
    pub values: &'a Array2<f64>,
}

/// Writes each field of a set as `<dir>/<name>.csv`.
pub fn emit_plotdata(c: &mut Collector, dir: &str, tag: Tag, fields: &[NamedField<'_>]) -> Result<()> {
    for f in fields {
        c.write_matrix(&format!("{dir}/{}.csv", f.name), f.name, tag, f.values)?;
    }
    Ok(())
}
