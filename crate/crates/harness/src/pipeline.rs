//! Composition of the core stages: beams, solves, internal functional,
//! reconstruction and its error report.

use aoi_core::acousto::{
    internal_direct, internal_from_parts, measure, recover_h, BtContext, InternalField, MeasurementSet,
};
use aoi_core::decomposition::{angular_products, beam_data, decompose, BallisticMode, Decomposition};
use aoi_core::field::{l2_norm, BoundaryTrace};
use aoi_core::geometry::{trace_ray, Geometry};
use aoi_core::media::{make_beam, BeamSource, MediaCoefficients};
use aoi_core::reconstruct::{reconstruct_sigma, MaskedField};
use aoi_core::transport::{solve, Direction, SolveReport, Solution, SolverOptions, TransportProblem};
use serde::Serialize;

use crate::config::{EntrySpec, ExperimentConfig, HMode};
use crate::error::{HarnessError, Result, Stage};
use crate::plotdata::{Collector, Tag, ERROR_CONVENTION};

/// Medium, beams and boundary data for one `(Kn, h)` point.
pub struct PointSetup {
    pub kn: f64,
    pub h: f64,
    pub media: MediaCoefficients<f64>,
    pub f_beam: BeamSource<f64>,
    pub g_beam: BeamSource<f64>,
    pub f: BoundaryTrace<f64>,
    pub g: BoundaryTrace<f64>,
}

impl PointSetup {
    pub fn new(cfg: &ExperimentConfig, geom: &Geometry<f64>, kn: f64, h: f64, entry: &EntrySpec) -> Result<Self> {
        let media = cfg.media(geom, kn)?;
        let f_region = cfg.region(geom, entry)?;
        let g_region = cfg.region(geom, &cfg.detect)?;
        let f_beam = make_beam(cfg.theta0, h, &geom.angles, f_region).stage("beam")?;
        let g_beam = f_beam.with_region(g_region);
        let f = beam_data(geom, &f_beam, Direction::Forward).stage("beam")?;
        let g = beam_data(geom, &g_beam, Direction::Adjoint).stage("beam")?;
        Ok(Self {
            kn,
            h,
            media,
            f_beam,
            g_beam,
            f,
            g,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveSummary {
    pub stage: String,
    pub iterations: usize,
    pub sweeps: usize,
    pub residual: f64,
    pub threshold: f64,
    pub converged: bool,
    pub acceleration: String,
}

impl SolveSummary {
    pub fn new(stage: &str, r: &SolveReport) -> Self {
        Self {
            stage: stage.to_string(),
            iterations: r.iterations,
            sweeps: r.sweeps,
            residual: r.final_residual,
            threshold: r.threshold,
            converged: r.converged,
            acceleration: r.acceleration_used.name().to_string(),
        }
    }
}

/// Fails with `NonConvergence` on the first unconverged solve.
pub fn require_converged(solves: &[SolveSummary]) -> Result<()> {
    match solves.iter().find(|s| !s.converged) {
        None => Ok(()),
        Some(s) => Err(HarnessError::NonConvergence {
            stage: s.stage.clone(),
            detail: format!(
                "{} iterations, residual {:e} above {:e}",
                s.iterations, s.residual, s.threshold
            ),
        }),
    }
}

pub fn solve_forward(geom: &Geometry<f64>, p: &PointSetup, opts: &SolverOptions<f64>) -> Result<Solution<f64>> {
    solve(geom, &TransportProblem::forward(p.media.clone(), p.f.clone()), opts).stage("forward solve")
}

pub fn solve_adjoint(geom: &Geometry<f64>, p: &PointSetup, opts: &SolverOptions<f64>) -> Result<Solution<f64>> {
    solve(geom, &TransportProblem::adjoint(p.media.clone(), p.g.clone()), opts).stage("adjoint solve")
}

/// Forward and adjoint decompositions with the exact ballistic parts.
pub fn decompositions(
    geom: &Geometry<f64>,
    p: &PointSetup,
    opts: &SolverOptions<f64>,
) -> Result<(Decomposition<f64>, Decomposition<f64>)> {
    let du = decompose(geom, &p.media, &p.f_beam, Direction::Forward, BallisticMode::Exact, opts)
        .stage("forward decomposition")?;
    let dv = decompose(geom, &p.media, &p.g_beam, Direction::Adjoint, BallisticMode::Exact, opts)
        .stage("adjoint decomposition")?;
    Ok((du, dv))
}

pub struct FourierDetails {
    pub measurements: MeasurementSet<f64>,
    pub imag_residue: f64,
    pub unreliable: usize,
}

pub struct Internal {
    pub field: InternalField<f64>,
    pub solves: Vec<SolveSummary>,
    pub fourier: Option<FourierDetails>,
}

/// `H` by the requested route. `decomp` is reused by the assembled route when given.
pub fn internal_field(
    geom: &Geometry<f64>,
    p: &PointSetup,
    mode: HMode,
    cfg: &ExperimentConfig,
    opts: &SolverOptions<f64>,
    decomp: Option<&(Decomposition<f64>, Decomposition<f64>)>,
) -> Result<Internal> {
    match mode {
        HMode::Direct => {
            let u = solve_forward(geom, p, opts)?;
            let v = solve_adjoint(geom, p, opts)?;
            let field = internal_direct(geom, &u.field, &v.field, &p.media).stage("internal functional")?;
            Ok(Internal {
                field,
                solves: vec![SolveSummary::new("forward", &u.report), SolveSummary::new("adjoint", &v.report)],
                fourier: None,
            })
        }
        HMode::Assembled => {
            let owned;
            let (du, dv) = match decomp {
                Some(d) => d,
                None => {
                    owned = decompositions(geom, p, opts)?;
                    &owned
                }
            };
            let parts = angular_products(geom, &du.ballistic, &du.remainder.field, &dv.ballistic, &dv.remainder.field)
                .stage("angular products")?;
            let field = internal_from_parts(&p.media, &parts).stage("internal functional")?;
            Ok(Internal {
                field,
                solves: vec![
                    SolveSummary::new("forward remainder", &du.remainder.report),
                    SolveSummary::new("adjoint remainder", &dv.remainder.report),
                ],
                fourier: None,
            })
        }
        HMode::Fourier => {
            let ctx = BtContext::new(geom, p.media.clone(), p.f.clone(), p.g.clone(), *opts).stage("adjoint solve")?;
            let (ms, values) = measure(&ctx, cfg.k_max, cfg.eps).stage("boundary measurements")?;
            let rec = recover_h(&ms, &geom.grid, cfg.k_max).stage("Fourier recovery")?;
            let mut solves = vec![SolveSummary::new("adjoint", &ctx.adjoint_report)];
            if let Some(worst) = values
                .iter()
                .max_by(|a, b| a.report.iterations.cmp(&b.report.iterations))
            {
                solves.push(SolveSummary::new("modulated forward (max iterations)", &worst.report));
            }
            if let Some(bad) = values.iter().find(|v| !v.report.converged) {
                solves.push(SolveSummary::new("modulated forward", &bad.report));
            }
            Ok(Internal {
                field: rec.field,
                solves,
                fourier: Some(FourierDetails {
                    unreliable: values.iter().filter(|v| !v.reliable).count(),
                    measurements: ms,
                    imag_residue: rec.imag_residue,
                }),
            })
        }
    }
}

/// Cells crossed by the central `fraction` of the beam line: the chord along
/// `theta0` through the entry point (or the domain center for non-point entries).
pub fn beam_line_cells(geom: &Geometry<f64>, region: &EntrySpec, theta0: [f64; 2], fraction: f64) -> Result<Vec<(usize, usize)>> {
    let grid = &geom.grid;
    let o = grid.origin();
    let e = grid.extent();
    let center = [o[0] + 0.5 * e[0], o[1] + 0.5 * e[1]];
    let n = theta0[0].hypot(theta0[1]);
    let t = [theta0[0] / n, theta0[1] / n];
    let anchor = match region {
        EntrySpec::Point(p) => {
            let step = 1e-9 * grid.diameter();
            [p[0] + step * t[0], p[1] + step * t[1]]
        }
        EntrySpec::Side(_) | EntrySpec::All => center,
    };
    let ray = trace_ray(grid, anchor, t).stage("beam line")?;
    let len = ray.chord_total();
    let start = [anchor[0] - ray.tau_minus * t[0], anchor[1] - ray.tau_minus * t[1]];
    let lo = 0.5 * (1.0 - fraction) * len;
    let hi = len - lo;
    let samples = 8 * grid.nx().max(grid.ny());
    let mut cells: Vec<(usize, usize)> = Vec::new();
    for s in 0..=samples {
        let d = lo + (hi - lo) * s as f64 / samples as f64;
        let c = grid.cell_containing([start[0] + d * t[0], start[1] + d * t[1]]);
        if cells.last() != Some(&c) && !cells.contains(&c) {
            cells.push(c);
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FourierSummary {
    pub k_max: usize,
    pub eps: f64,
    pub n_measurements: usize,
    pub unreliable_measurements: usize,
    pub imag_residue: f64,
    /// `||H_fourier - H_direct||_2 / ||H_direct||_2`
    pub relative_l2_vs_direct: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub kn: f64,
    pub h: f64,
    pub mode: String,
    pub grid: [usize; 2],
    pub n_dirs: usize,
    pub solves: Vec<SolveSummary>,
    pub masked_cells: usize,
    pub masked_fraction: f64,
    /// `||sigma^ - sigma/Kn||_2 / ||sigma/Kn||_2` over unmasked cells.
    pub sigma_relative_l2: f64,
    pub sigma_relative_sup: f64,
    /// Sup relative error on the central 80% of the beam line.
    pub beam_line_relative_sup: f64,
    pub beam_line_cells: usize,
    pub beam_line_masked: usize,
    pub fourier: Option<FourierSummary>,
    pub error_convention: String,
}

pub struct PipelineOutcome {
    pub report: PipelineReport,
    pub internal: InternalField<f64>,
    pub sigma_hat: MaskedField<f64>,
    pub truth: ndarray::Array2<f64>,
    pub measurements: Option<MeasurementSet<f64>>,
}

/// solves, then `H` by `cfg.mode`, then `sigma^ / Kn`, scored against the true medium.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutcome> {
    let geom = cfg.geometry()?;
    let opts = cfg.solver_options();
    let p = PointSetup::new(cfg, &geom, cfg.pipeline.kn, cfg.pipeline.h, &cfg.entry)?;

    let u = solve_forward(&geom, &p, &opts)?;
    let mut solves = vec![SolveSummary::new("forward", &u.report)];
    let internal = internal_field(&geom, &p, cfg.mode, cfg, &opts, None)?;
    solves.extend(internal.solves.iter().cloned());
    require_converged(&solves)?;

    let fourier = match &internal.fourier {
        None => None,
        Some(fd) => {
            let v = solve_adjoint(&geom, &p, &opts)?;
            require_converged(&[SolveSummary::new("adjoint", &v.report)])?;
            let hd = internal_direct(&geom, &u.field, &v.field, &p.media).stage("internal functional")?;
            let da = geom.grid.cell_area();
            let rel = l2_norm(&(&internal.field.values - &hd.values), da) / l2_norm(&hd.values, da);
            Some(FourierSummary {
                k_max: cfg.k_max,
                eps: cfg.eps,
                n_measurements: fd.measurements.entries.len(),
                unreliable_measurements: fd.unreliable,
                imag_residue: fd.imag_residue,
                relative_l2_vs_direct: rel,
            })
        }
    };

    let af = u.albedo(&geom);
    let sigma_hat = reconstruct_sigma(&geom, &internal.field.values, &p.f, &af, p.f_beam.dir0).stage("reconstruction")?;
    let truth = p.media.total_sigma().mapv(|s| s / p.kn);

    let (mut num, mut den, mut sup) = (0.0, 0.0, 0.0f64);
    for ((idx, r), t) in sigma_hat.values.indexed_iter().zip(truth.iter()) {
        if sigma_hat.mask[idx] {
            continue;
        }
        num += (r - t).powi(2);
        den += t * t;
        sup = sup.max((r - t).abs() / t);
    }
    let line = beam_line_cells(&geom, &cfg.entry, p.f_beam.theta0, 0.8)?;
    let mut line_sup = 0.0f64;
    let mut line_masked = 0;
    for &c in &line {
        if sigma_hat.mask[c] {
            line_masked += 1;
        } else {
            line_sup = line_sup.max((sigma_hat.values[c] - truth[c]).abs() / truth[c]);
        }
    }

    let report = PipelineReport {
        kn: p.kn,
        h: p.h,
        mode: cfg.mode.name().to_string(),
        grid: [geom.grid.nx(), geom.grid.ny()],
        n_dirs: geom.n_dirs(),
        solves,
        masked_cells: sigma_hat.n_masked(),
        masked_fraction: sigma_hat.masked_fraction(),
        sigma_relative_l2: if den > 0.0 { (num / den).sqrt() } else { f64::NAN },
        sigma_relative_sup: sup,
        beam_line_relative_sup: line_sup,
        beam_line_cells: line.len(),
        beam_line_masked: line_masked,
        fourier,
        error_convention: ERROR_CONVENTION.to_string(),
    };
    Ok(PipelineOutcome {
        report,
        internal: internal.field,
        sigma_hat,
        truth,
        measurements: internal.fourier.map(|f| f.measurements),
    })
}

/// Writes the pipeline artifacts, then enforces the masked-cell threshold.
pub fn emit_pipeline(c: &mut Collector, cfg: &ExperimentConfig, out: &PipelineOutcome) -> Result<()> {
    let tag = Tag {
        kn: Some(out.report.kn),
        h: Some(out.report.h),
    };
    c.write_matrix("pipeline/internal_h.csv", "internal_h", tag, &out.internal.values)?;
    c.write_matrix("pipeline/sigma_hat.csv", "sigma_hat", tag, &out.sigma_hat.values)?;
    c.write_matrix("pipeline/sigma_true.csv", "sigma_true", tag, &out.truth)?;
    if let Some(ms) = &out.measurements {
        c.write_text("pipeline/measurements.csv", "measurements", tag, None, &ms.to_csv_string())?;
    }
    c.write_json("pipeline/report.json", "report", &out.report)?;
    check_masked(out.sigma_hat.masked_fraction(), cfg.masked_threshold)
}

pub fn check_masked(fraction: f64, threshold: f64) -> Result<()> {
    if fraction > threshold {
        return Err(HarnessError::MaskedThreshold { fraction, threshold });
    }
    Ok(())
}
