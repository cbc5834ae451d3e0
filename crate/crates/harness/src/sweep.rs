//! The (Kn, h) scaling study: error sweep, field sets and fits.

use std::fmt::Write as _;
use std::path::Path;

use aoi_core::decomposition::ballistic_product;
use aoi_core::geometry::Geometry;
use aoi_core::reconstruct::{fit_scalings, relative_error_field, ScalingFits, SweepPoint};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{EntrySpec, ExperimentConfig};
use crate::error::{HarnessError, Result, Stage};
use crate::pipeline::{decompositions, internal_field, PointSetup, SolveSummary};
use crate::plotdata::{emit_plotdata, Collector, NamedField, Tag, ERROR_CONVENTION};

pub const ERRORS_HEADER: &str = "kn,h,l2_error,log_error,masked_cells,converged,iterations,residual,slope_inv_kn,slope_h,status";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kn: f64,
    pub h: f64,
    /// `NaN` when the point failed.
    pub l2_error: f64,
    pub log_error: f64,
    pub masked_cells: usize,
    pub converged: bool,
    /// Largest iteration count over the point's solves.
    pub iterations: usize,
    /// Largest final residual over the point's solves.
    pub residual: f64,
    pub slope_inv_kn: Option<f64>,
    pub slope_h: Option<f64>,
    pub status: String,
}

fn worst(solves: &[SolveSummary]) -> (bool, usize, f64) {
    (
        solves.iter().all(|s| s.converged),
        solves.iter().map(|s| s.iterations).max().unwrap_or(0),
        solves.iter().map(|s| s.residual).fold(0.0, f64::max),
    )
}

/// Relative error norm at one point; unconverged solves yield a failure row.
pub fn error_point(cfg: &ExperimentConfig, geom: &Geometry<f64>, kn: f64, h: f64) -> Result<SweepRow> {
    let opts = cfg.solver_options();
    let p = PointSetup::new(cfg, geom, kn, h, &cfg.entry)?;
    let decomp = decompositions(geom, &p, &opts)?;
    let internal = internal_field(geom, &p, cfg.mode, cfg, &opts, Some(&decomp))?;
    let mut solves = vec![
        SolveSummary::new("forward remainder", &decomp.0.remainder.report),
        SolveSummary::new("adjoint remainder", &decomp.1.remainder.report),
    ];
    solves.extend(internal.solves);
    let (converged, iterations, residual) = worst(&solves);
    let mut row = SweepRow {
        kn,
        h,
        l2_error: f64::NAN,
        log_error: f64::NAN,
        masked_cells: 0,
        converged,
        iterations,
        residual,
        slope_inv_kn: None,
        slope_h: None,
        status: "ok".into(),
    };
    if let Some(s) = solves.iter().find(|s| !s.converged) {
        row.status = format!("non-converged: {}", s.stage);
        return Ok(row);
    }
    let u1v1 = ballistic_product(geom, &p.media, &p.f_beam, &p.g_beam).stage("ballistic product")?;
    let err = relative_error_field(geom, &internal.field.values, &u1v1, &p.media).stage("error field")?;
    row.l2_error = err.l2;
    row.log_error = err.l2.ln();
    row.masked_cells = err.field.n_masked();
    Ok(row)
}

/// Error rows in `kn_list` by `h_list` order.
pub fn run_error_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let geom = cfg.geometry()?;
    let jobs: Vec<(f64, f64)> = cfg
        .kn_list
        .iter()
        .flat_map(|&kn| cfg.h_list.iter().map(move |&h| (kn, h)))
        .collect();
    jobs.par_iter().map(|&(kn, h)| error_point(cfg, &geom, kn, h)).collect()
}

/// Fits over the successful rows; fills the slope columns when both fits succeed.
pub fn fit_rows(rows: &mut [SweepRow]) -> std::result::Result<ScalingFits, String> {
    let points: Vec<SweepPoint> = rows
        .iter()
        .filter(|r| r.l2_error.is_finite() && r.l2_error > 0.0)
        .map(|r| SweepPoint {
            kn: r.kn,
            h: r.h,
            l2_error: r.l2_error,
        })
        .collect();
    let fits = fit_scalings(&points).map_err(|e| e.to_string())?;
    for r in rows.iter_mut() {
        r.slope_inv_kn = fits.vs_inv_kn.iter().find(|(h, _)| *h == r.h).map(|(_, f)| f.slope);
        r.slope_h = fits.vs_h.iter().find(|(kn, _)| *kn == r.kn).map(|(_, f)| f.slope);
    }
    Ok(fits)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn errors_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(ERRORS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{},{},{},{:e},{},{},{}",
            r.kn,
            r.h,
            r.l2_error,
            r.log_error,
            r.masked_cells,
            r.converged,
            r.iterations,
            r.residual,
            opt(r.slope_inv_kn),
            opt(r.slope_h),
            r.status
        );
    }
    s
}

pub fn read_errors_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let bad = |msg: String| HarnessError::ConfigFile {
        path: path.to_path_buf(),
        msg,
    };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header = rdr.headers().map_err(|e| bad(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != ERRORS_HEADER {
        return Err(bad(format!("header must be {ERRORS_HEADER}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        let row: SweepRow = rec.map_err(|e| bad(e.to_string()))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitRow {
    /// `log_error_vs_inv_kn` (fixed h) or `error_vs_h` (fixed Kn).
    pub axis: String,
    pub fixed: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn fit_table(fits: &ScalingFits) -> Vec<FitRow> {
    let mk = |axis: &str, (fixed, f): &(f64, aoi_core::reconstruct::LinearFit)| FitRow {
        axis: axis.into(),
        fixed: *fixed,
        slope: f.slope,
        intercept: f.intercept,
        r2: f.r2,
        n: f.n,
    };
    fits.vs_inv_kn
        .iter()
        .map(|x| mk("log_error_vs_inv_kn", x))
        .chain(fits.vs_h.iter().map(|x| mk("error_vs_h", x)))
        .collect()
}

pub fn fits_csv(rows: &[FitRow]) -> String {
    let mut s = String::from("axis,fixed,slope,intercept,r2,n\n");
    for r in rows {
        let _ = writeln!(s, "{},{:e},{:e},{:e},{:e},{}", r.axis, r.fixed, r.slope, r.intercept, r.r2, r.n);
    }
    s
}

/// Scalar maps of one figure point.
pub struct FieldSet {
    pub kn: f64,
    pub h: f64,
    pub u1_mean: Array2<f64>,
    pub u2_mean: Array2<f64>,
    pub u1v1: Array2<f64>,
    /// `Kn H + sigma <u1 v1>`, the part of `Kn H` beyond the ballistic term.
    pub remainder: Array2<f64>,
    pub solves: Vec<SolveSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldSetStats {
    pub kn: f64,
    pub h: f64,
    /// Fraction of cells where `<u1>` exceeds `1e-3` of its maximum.
    pub u1_support_fraction: f64,
    /// `int <u1> dx`
    pub u1_mass: f64,
    pub converged: bool,
}

impl FieldSet {
    pub fn stats(&self, cell_area: f64) -> FieldSetStats {
        let max = self.u1_mean.iter().fold(0.0f64, |m, v| m.max(*v));
        let above = self.u1_mean.iter().filter(|v| **v > 1e-3 * max).count();
        FieldSetStats {
            kn: self.kn,
            h: self.h,
            u1_support_fraction: above as f64 / self.u1_mean.len() as f64,
            u1_mass: self.u1_mean.sum() * cell_area,
            converged: self.solves.iter().all(|s| s.converged),
        }
    }
}

pub fn field_set(cfg: &ExperimentConfig, geom: &Geometry<f64>, kn: f64, h: f64, entry: &EntrySpec) -> Result<FieldSet> {
    let opts = cfg.solver_options();
    let p = PointSetup::new(cfg, geom, kn, h, entry)?;
    let decomp = decompositions(geom, &p, &opts)?;
    let internal = internal_field(geom, &p, cfg.mode, cfg, &opts, Some(&decomp))?;
    let u1v1 = ballistic_product(geom, &p.media, &p.f_beam, &p.g_beam).stage("ballistic product")?;
    let sig = p.media.total_sigma();
    let remainder = &internal.field.values * kn + &(&sig * &u1v1.value);
    let mut solves = vec![
        SolveSummary::new("forward remainder", &decomp.0.remainder.report),
        SolveSummary::new("adjoint remainder", &decomp.1.remainder.report),
    ];
    solves.extend(internal.solves);
    let (du, _) = decomp;
    Ok(FieldSet {
        kn,
        h,
        u1_mean: du.ballistic.average(&geom.angles),
        u2_mean: du.remainder.field.average(&geom.angles),
        u1v1: u1v1.value,
        remainder,
        solves,
    })
}

/// Field sets in `kn_list` by `figure_h` order.
pub fn run_field_sets(cfg: &ExperimentConfig) -> Result<Vec<FieldSet>> {
    let geom = cfg.geometry()?;
    let jobs: Vec<(f64, f64)> = cfg
        .kn_list
        .iter()
        .flat_map(|&kn| cfg.figure_h.iter().map(move |&h| (kn, h)))
        .collect();
    jobs.par_iter()
        .map(|&(kn, h)| field_set(cfg, &geom, kn, h, &cfg.figure_entry))
        .collect()
}

/// True when `key` strictly orders `value` within every group.
fn monotone(stats: &[FieldSetStats], group: impl Fn(&FieldSetStats) -> f64, key: impl Fn(&FieldSetStats) -> f64, value: impl Fn(&FieldSetStats) -> f64) -> bool {
    let mut groups: Vec<f64> = stats.iter().map(&group).collect();
    groups.sort_by(f64::total_cmp);
    groups.dedup();
    groups.iter().all(|g| {
        let mut sel: Vec<&FieldSetStats> = stats.iter().filter(|s| group(s) == *g).collect();
        sel.sort_by(|a, b| key(a).total_cmp(&key(b)));
        sel.windows(2).all(|w| value(w[0]) < value(w[1]))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub n_points: usize,
    pub n_failed: usize,
    pub fits: Vec<FitRow>,
    pub fit_error: Option<String>,
    pub field_sets: Vec<FieldSetStats>,
    /// `<u1>` support widens with `h` at every Kn.
    pub u1_spread_grows_with_h: bool,
    /// `<u1>` mass shrinks as Kn decreases at every h.
    pub u1_decays_as_kn_decreases: bool,
    pub mode: String,
    pub error_convention: String,
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub fits: Option<ScalingFits>,
    pub summary: SweepSummary,
}

/// Runs the error sweep and the field sets, then writes every artifact through `c`.
pub fn run_figure_sweep(cfg: &ExperimentConfig, c: &mut Collector) -> Result<SweepOutcome> {
    let geom = cfg.geometry()?;
    let mut rows = run_error_sweep(cfg)?;
    let fits = fit_rows(&mut rows);
    let sets = run_field_sets(cfg)?;

    for (n, s) in sets.iter().enumerate() {
        let (ik, ih) = (n / cfg.figure_h.len(), n % cfg.figure_h.len());
        emit_plotdata(
            c,
            &format!("fields/kn{ik}_h{ih}"),
            Tag { kn: Some(s.kn), h: Some(s.h) },
            &[
                NamedField { name: "u1_mean", values: &s.u1_mean },
                NamedField { name: "u2_mean", values: &s.u2_mean },
                NamedField { name: "u1v1", values: &s.u1v1 },
                NamedField { name: "remainder", values: &s.remainder },
            ],
        )?;
    }
    c.write_text("sweep/errors.csv", "errors", Tag::default(), None, &errors_csv(&rows))?;
    let table = fits.as_ref().map(fit_table).unwrap_or_default();
    c.write_text("sweep/fits.csv", "fits", Tag::default(), None, &fits_csv(&table))?;

    let stats: Vec<FieldSetStats> = sets.iter().map(|s| s.stats(geom.grid.cell_area())).collect();
    let summary = SweepSummary {
        n_points: rows.len(),
        n_failed: rows.iter().filter(|r| !r.l2_error.is_finite()).count(),
        fits: table,
        fit_error: fits.as_ref().err().cloned(),
        u1_spread_grows_with_h: monotone(&stats, |s| s.kn, |s| s.h, |s| s.u1_support_fraction),
        u1_decays_as_kn_decreases: monotone(&stats, |s| s.h, |s| s.kn, |s| s.u1_mass),
        field_sets: stats,
        mode: cfg.mode.name().into(),
        error_convention: ERROR_CONVENTION.into(),
    };
    c.write_json("sweep/summary.json", "summary", &summary)?;
    Ok(SweepOutcome {
        rows,
        fits: fits.ok(),
        summary,
    })
}
