//! Command-line front end; every subcommand writes into `--out` and refreshes
//! the manifest there.

use std::path::{Path, PathBuf};

use aoi_core::acousto::{measure, recover_h, BtContext, MeasurementSet};
use aoi_core::decomposition::ballistic_product;
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{ExperimentConfig, HMode};
use crate::error::{HarnessError, Result, Stage};
use crate::pipeline::{
    decompositions, emit_pipeline, internal_field, require_converged, run_pipeline, solve_forward, PointSetup,
    SolveSummary,
};
use crate::plotdata::{Collector, Tag};
use crate::sweep::{fit_rows, fit_table, fits_csv, read_errors_csv, run_figure_sweep};

#[derive(Debug, Parser)]
#[command(name = "aoi", version, about = "Acousto-optic transport experiments")]
pub struct Cli {
    /// Experiment config (JSON); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; all cores when omitted.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Plain source iteration without Krylov acceleration.
    #[arg(long, global = true)]
    pub no_accel: bool,
    /// How the internal functional is obtained.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<HMode>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward solve at the pipeline point.
    Solve,
    /// Ballistic / scattered split of the forward and adjoint solutions.
    Decompose,
    /// Internal functional H at the pipeline point.
    Internal,
    /// Boundary-term measurements over the Fourier lattice.
    Measure,
    /// Fourier recovery of H from a measurement file.
    Recover {
        /// Defaults to `<out>/measure/measurements.csv`.
        #[arg(long)]
        measurements: Option<PathBuf>,
    },
    /// End-to-end reconstruction of sigma / Kn.
    Reconstruct,
    /// Error sweep over (Kn, h) plus the field sets.
    Sweep,
    /// Scaling fits of an existing error table.
    Fit {
        /// Defaults to `<out>/sweep/errors.csv`.
        #[arg(long)]
        errors: Option<PathBuf>,
    },
}

/// Config with the command-line overrides applied.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.no_accel {
        cfg.solver.acceleration = false;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    match &cfg.output_dir {
        Some(p) if p.is_relative() => cfg.base_dir.join(p),
        Some(p) => p.clone(),
        None => PathBuf::from("aoi-out"),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.workers {
            if n == 0 {
                return Err(HarnessError::Config("--workers must be positive".into()));
            }
            b = b.num_threads(n);
        }
        b.build().map_err(|e| HarnessError::Config(e.to_string()))?
    };
    let root = out_dir(&cfg);
    pool.install(|| dispatch(&cli.command, &cfg, &root))
}

#[derive(Serialize)]
struct StageReport {
    kn: f64,
    h: f64,
    mode: String,
    solves: Vec<SolveSummary>,
}

fn dispatch(cmd: &Command, cfg: &ExperimentConfig, root: &Path) -> Result<()> {
    let mut c = Collector::new(root, cfg)?;
    let geom = cfg.geometry()?;
    let opts = cfg.solver_options();
    let (kn, h) = (cfg.pipeline.kn, cfg.pipeline.h);
    let tag = Tag { kn: Some(kn), h: Some(h) };
    let point = || PointSetup::new(cfg, &geom, kn, h, &cfg.entry);
    let report = |solves: Vec<SolveSummary>| StageReport {
        kn,
        h,
        mode: cfg.mode.name().into(),
        solves,
    };
    let outcome = match cmd {
        Command::Solve => {
            let p = point()?;
            let u = solve_forward(&geom, &p, &opts)?;
            let solves = vec![SolveSummary::new("forward", &u.report)];
            c.write_matrix("solve/u_mean.csv", "u_mean", tag, &u.field.average(&geom.angles))?;
            c.write_text("solve/u.csv", "phase_space_dump", tag, None, &u.field.to_csv_string())?;
            c.write_json("solve/report.json", "report", &report(solves.clone()))?;
            require_converged(&solves)
        }
        Command::Decompose => {
            let p = point()?;
            let (du, dv) = decompositions(&geom, &p, &opts)?;
            let a = &geom.angles;
            let u1v1 = ballistic_product(&geom, &p.media, &p.f_beam, &p.g_beam).stage("ballistic product")?;
            c.write_matrix("decompose/u1_mean.csv", "u1_mean", tag, &du.ballistic.average(a))?;
            c.write_matrix("decompose/u2_mean.csv", "u2_mean", tag, &du.remainder.field.average(a))?;
            c.write_matrix("decompose/v1_mean.csv", "v1_mean", tag, &dv.ballistic.average(a))?;
            c.write_matrix("decompose/v2_mean.csv", "v2_mean", tag, &dv.remainder.field.average(a))?;
            c.write_matrix("decompose/u1v1.csv", "u1v1", tag, &u1v1.value)?;
            let solves = vec![
                SolveSummary::new("forward remainder", &du.remainder.report),
                SolveSummary::new("adjoint remainder", &dv.remainder.report),
            ];
            c.write_json("decompose/report.json", "report", &report(solves.clone()))?;
            require_converged(&solves)
        }
        Command::Internal => {
            let p = point()?;
            let int = internal_field(&geom, &p, cfg.mode, cfg, &opts, None)?;
            c.write_matrix("internal/internal_h.csv", "internal_h", tag, &int.field.values)?;
            if let Some(fd) = &int.fourier {
                c.write_text("internal/measurements.csv", "measurements", tag, None, &fd.measurements.to_csv_string())?;
            }
            c.write_json("internal/report.json", "report", &report(int.solves.clone()))?;
            require_converged(&int.solves)
        }
        Command::Measure => {
            let p = point()?;
            let ctx = BtContext::new(&geom, p.media.clone(), p.f.clone(), p.g.clone(), opts).stage("adjoint solve")?;
            let (ms, values) = measure(&ctx, cfg.k_max, cfg.eps).stage("boundary measurements")?;
            let mut solves = vec![SolveSummary::new("adjoint", &ctx.adjoint_report)];
            solves.extend(values.iter().map(|v| SolveSummary::new("modulated forward", &v.report)));
            c.write_text("measure/measurements.csv", "measurements", tag, None, &ms.to_csv_string())?;
            c.write_json("measure/report.json", "report", &report(solves.clone()))?;
            require_converged(&solves)
        }
        Command::Recover { measurements } => {
            let path = measurements.clone().unwrap_or_else(|| root.join("measure/measurements.csv"));
            let ms = MeasurementSet::<f64>::read_csv(&path).map_err(|e| HarnessError::ConfigFile {
                path: path.clone(),
                msg: e.to_string(),
            })?;
            let rec = recover_h(&ms, &geom.grid, cfg.k_max).stage("Fourier recovery")?;
            c.write_matrix("recover/internal_h.csv", "internal_h", tag, &rec.field.values)?;
            #[derive(Serialize)]
            struct RecoverReport {
                k_max: usize,
                n_measurements: usize,
                imag_residue: f64,
            }
            c.write_json(
                "recover/report.json",
                "report",
                &RecoverReport {
                    k_max: cfg.k_max,
                    n_measurements: ms.entries.len(),
                    imag_residue: rec.imag_residue,
                },
            )
        }
        Command::Reconstruct => {
            let out = run_pipeline(cfg)?;
            emit_pipeline(&mut c, cfg, &out)
        }
        Command::Sweep => {
            let out = run_figure_sweep(cfg, &mut c)?;
            match out.rows.iter().find(|r| !r.converged) {
                Some(r) => Err(HarnessError::NonConvergence {
                    stage: format!("sweep point Kn = {}, h = {}", r.kn, r.h),
                    detail: r.status.clone(),
                }),
                None => Ok(()),
            }
        }
        Command::Fit { errors } => {
            let path = errors.clone().unwrap_or_else(|| root.join("sweep/errors.csv"));
            let mut rows = read_errors_csv(&path)?;
            let fits = fit_rows(&mut rows).map_err(|msg| HarnessError::ConfigFile { path: path.clone(), msg })?;
            c.write_text("fit/fits.csv", "fits", Tag::default(), None, &fits_csv(&fit_table(&fits)))
        }
    };
    // the manifest is written even when the command reports a failure
    c.finish()?;
    outcome
}
