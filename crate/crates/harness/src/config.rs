//! Versioned JSON experiment configuration.
//!
//! Every key is optional except `schema_version`; omitted keys take the
//! reference-study defaults. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use aoi_core::geometry::{AngularGrid, Geometry, Side, SpatialGrid};
use aoi_core::media::{make_beam, read_field_csv, EntryRegion, MediaCoefficients, Profile};
use aoi_core::transport::{Acceleration, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const SCHEMA_VERSION: u32 = 1;
/// Smallest admissible Knudsen number.
pub const KN_MIN: f64 = 1.0 / 256.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// Side lengths of the rectangle `[0, Lx] x [0, Ly]`.
    pub extent: [f64; 2],
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            ny: 64,
            extent: [1.0, 1.0],
        }
    }
}

/// One coefficient field, analytic or read from a grid file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    GaussianBump {
        base: f64,
        amplitude: f64,
        center: [f64; 2],
        width: f64,
    },
    TwoInclusions {
        base: f64,
        contrast: f64,
        radius: f64,
        centers: [[f64; 2]; 2],
    },
    /// Relative paths resolve against the config file's directory.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediaConfig {
    pub sigma_s: CoefficientSpec,
    pub sigma_a: CoefficientSpec,
}

impl Default for MediaConfig {
    fn default() -> Self {
        Self {
            sigma_s: CoefficientSpec::Constant { value: 1.0 },
            sigma_a: CoefficientSpec::Constant { value: 0.0 },
        }
    }
}

/// Boundary patch carrying the beam: `"all"`, `{"side": "left"}` or `{"point": [x, y]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EntrySpec {
    All,
    Side(String),
    Point([f64; 2]),
}

/// Source of the internal functional `H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum HMode {
    /// From full forward and adjoint solves.
    Direct,
    /// From the exact ballistic parts plus the scattered remainders.
    Assembled,
    /// From modulated boundary measurements.
    Fourier,
}

impl HMode {
    pub fn name(self) -> &'static str {
        match self {
            HMode::Direct => "direct",
            HMode::Assembled => "assembled",
            HMode::Fourier => "fourier",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub acceleration: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::<f64>::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            restart: d.restart,
            acceleration: true,
        }
    }
}

/// The single (Kn, h) point used by the end-to-end pipeline commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub kn: f64,
    pub h: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { kn: 1.0, h: 2.0 * PI / 25.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    pub n_dirs: usize,
    pub media: MediaConfig,
    pub kn_list: Vec<f64>,
    /// Beam widths of the error sweep.
    pub h_list: Vec<f64>,
    /// Beam widths of the field-set outputs.
    pub figure_h: Vec<f64>,
    pub theta0: [f64; 2],
    /// Illumination patch for the error sweep and the pipeline.
    pub entry: EntrySpec,
    /// Detection patch of the adjoint datum `g`.
    pub detect: EntrySpec,
    /// Illumination patch for the field-set outputs.
    pub figure_entry: EntrySpec,
    pub eps: f64,
    /// Fourier order: lattice indices `|a|, |b| <= k_max`.
    pub k_max: usize,
    pub solver: SolverConfig,
    pub mode: HMode,
    pub pipeline: PipelineConfig,
    /// Largest admissible masked fraction of a reconstruction.
    pub masked_threshold: f64,
    pub output_dir: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            grid: GridConfig::default(),
            n_dirs: 50,
            media: MediaConfig::default(),
            kn_list: (0..5).map(|k| 2f64.powi(-k)).collect(),
            h_list: [2.0, 6.0, 10.0, 14.0].iter().map(|c| c * PI / 25.0).collect(),
            figure_h: vec![2.0 * PI / 25.0, 14.0 * PI / 25.0],
            theta0: [1.0, 0.0],
            entry: EntrySpec::All,
            detect: EntrySpec::All,
            figure_entry: EntrySpec::Point([0.0, 0.5]),
            eps: 1e-2,
            k_max: 8,
            solver: SolverConfig::default(),
            mode: HMode::Assembled,
            pipeline: PipelineConfig::default(),
            masked_threshold: 0.05,
            output_dir: None,
            base_dir: PathBuf::new(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ExperimentConfig {
    /// Parses and validates a config document.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        match raw.get("schema_version") {
            None => return Err(cfg_err("missing schema_version")),
            Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
                return Err(cfg_err(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}")))
            }
            _ => {}
        }
        let cfg: Self = serde_json::from_value(raw).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigFile {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::ConfigFile {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, excluding `output_dir`.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!("unsupported schema_version {}", self.schema_version)));
        }
        let geom = self.geometry()?;
        if self.kn_list.is_empty() {
            return Err(cfg_err("kn_list is empty"));
        }
        for &kn in self.kn_list.iter().chain([&self.pipeline.kn]) {
            check_kn(kn)?;
        }
        if self.h_list.is_empty() {
            return Err(cfg_err("h_list is empty"));
        }
        if self.figure_h.is_empty() {
            return Err(cfg_err("figure_h is empty"));
        }
        for &h in self.h_list.iter().chain(&self.figure_h).chain([&self.pipeline.h]) {
            self.check_h(&geom, h)?;
        }
        if !(self.theta0[0].hypot(self.theta0[1]) > 0.0) {
            return Err(cfg_err("theta0 must be a nonzero vector"));
        }
        for e in [&self.entry, &self.detect, &self.figure_entry] {
            self.region(&geom, e)?;
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(cfg_err(format!("eps = {} outside (0, 1)", self.eps)));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return Err(cfg_err(format!("solver.tol = {} outside (0, 1)", self.solver.tol)));
        }
        if self.solver.max_iter == 0 || self.solver.restart == 0 {
            return Err(cfg_err("solver.max_iter and solver.restart must be positive"));
        }
        if !(0.0..=1.0).contains(&self.masked_threshold) {
            return Err(cfg_err(format!("masked_threshold = {} outside [0, 1]", self.masked_threshold)));
        }
        Ok(())
    }

    fn check_h(&self, geom: &Geometry<f64>, h: f64) -> Result<()> {
        if !(h <= PI) {
            return Err(cfg_err(format!("beam width h = {h} exceeds pi")));
        }
        make_beam(self.theta0, h, &geom.angles, EntryRegion::All)
            .map(|_| ())
            .map_err(|e| cfg_err(e.to_string()))
    }

    pub fn geometry(&self) -> Result<Geometry<f64>> {
        let grid = SpatialGrid::new([0.0; 2], self.grid.extent, self.grid.nx, self.grid.ny)
            .map_err(|e| cfg_err(e.to_string()))?;
        let angles = AngularGrid::new(self.n_dirs).map_err(|e| cfg_err(e.to_string()))?;
        Geometry::new(grid, angles).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn region(&self, geom: &Geometry<f64>, e: &EntrySpec) -> Result<EntryRegion> {
        match e {
            EntrySpec::All => Ok(EntryRegion::All),
            EntrySpec::Side(s) => Side::from_name(s)
                .map(EntryRegion::Side)
                .ok_or_else(|| cfg_err(format!("unknown side {s:?}"))),
            EntrySpec::Point(p) => EntryRegion::point(geom, *p).map_err(|e| cfg_err(e.to_string())),
        }
    }

    pub fn solver_options(&self) -> SolverOptions<f64> {
        let acc = if self.solver.acceleration {
            Acceleration::Krylov
        } else {
            Acceleration::None
        };
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
            acceleration: acc,
            restart: self.solver.restart,
        }
    }

    fn coefficient(&self, geom: &Geometry<f64>, spec: &CoefficientSpec) -> Result<ndarray::Array2<f64>> {
        let profile = match *spec {
            CoefficientSpec::Constant { value } => Profile::Constant(value),
            CoefficientSpec::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => Profile::GaussianBump {
                base,
                amplitude,
                center,
                width,
            },
            CoefficientSpec::TwoInclusions {
                base,
                contrast,
                radius,
                centers,
            } => Profile::TwoInclusions {
                base,
                contrast,
                radius,
                centers,
            },
            CoefficientSpec::File { ref path } => {
                let full = self.base_dir.join(path);
                let (grid, field) = read_field_csv::<f64>(&full).map_err(|e| HarnessError::ConfigFile {
                    path: full.clone(),
                    msg: e.to_string(),
                })?;
                if grid.shape() != geom.grid.shape() || grid.extent() != geom.grid.extent() {
                    return Err(HarnessError::ConfigFile {
                        path: full,
                        msg: format!(
                            "grid {:?} with extent {:?} does not match the configured {:?} with extent {:?}",
                            grid.shape(),
                            grid.extent(),
                            geom.grid.shape(),
                            geom.grid.extent()
                        ),
                    });
                }
                return Ok(field);
            }
        };
        Ok(profile.sample(&geom.grid))
    }

    /// Coefficients at Knudsen number `kn`.
    pub fn media(&self, geom: &Geometry<f64>, kn: f64) -> Result<MediaCoefficients<f64>> {
        check_kn(kn)?;
        let ss = self.coefficient(geom, &self.media.sigma_s)?;
        let sa = self.coefficient(geom, &self.media.sigma_a)?;
        MediaCoefficients::new(sa, ss, kn).map_err(|e| cfg_err(e.to_string()))
    }
}

fn check_kn(kn: f64) -> Result<()> {
    if !(KN_MIN..=1.0).contains(&kn) {
        return Err(cfg_err(format!("Kn = {kn} outside [2^-8, 1]")));
    }
    Ok(())
}
