//! Acousto-optic measurements: modulated solves, the boundary term `BT`, the
//! internal functional `H`, and Fourier recovery of `H` from `BT` samples.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use crate::decomposition::AngularProducts;
use crate::field::{boundary_integral, BoundaryTrace, PhaseSpaceField, ScalarField};
use crate::geometry::{Geometry, SpatialGrid};
use crate::media::{modulate, MediaCoefficients, ModulationParams, Phase};
use crate::transport::{self, apply_l, SolveReport, SolverOptions, TransportProblem};
use crate::{Error, Real, Result};

/// How an internal field was obtained.
#[derive(Clone, Debug, PartialEq)]
pub enum Provenance {
    /// From converged forward and adjoint solutions.
    Direct,
    /// From decomposition pieces (ballistic plus remainder).
    Assembled,
    /// From boundary measurements by truncated Fourier synthesis.
    Fourier { eps: f64, k_max: usize, n_measurements: usize },
}

impl Provenance {
    pub fn name(&self) -> &'static str {
        match self {
            Provenance::Direct => "direct",
            Provenance::Assembled => "assembled",
            Provenance::Fourier { .. } => "fourier",
        }
    }
}

#[derive(Clone, Debug)]
pub struct InternalField<T> {
    pub values: ScalarField<T>,
    pub provenance: Provenance,
}

/// `H = (sigma_s / Kn) <u><v> - (sigma / Kn) <uv>` from the two averages.
pub fn internal_from_averages<T: Real>(
    media: &MediaCoefficients<T>,
    mean_product: &ScalarField<T>,
    product_mean: &ScalarField<T>,
    provenance: Provenance,
) -> Result<InternalField<T>> {
    let shape = media.shape();
    for f in [mean_product, product_mean] {
        if f.dim() != shape {
            return Err(Error::GridMismatch {
                expected: (shape.0, shape.1, 0),
                got: (f.dim().0, f.dim().1, 0),
            });
        }
    }
    let kn = media.kn();
    let sig = media.total_sigma();
    let mut values = Array2::zeros(shape);
    ndarray::Zip::from(&mut values)
        .and(media.sigma_s())
        .and(&sig)
        .and(mean_product)
        .and(product_mean)
        .for_each(|h, &ss, &s, &mp, &pm| *h = (ss * mp - s * pm) / kn);
    if values.iter().any(|v: &T| !v.is_finite()) {
        return Err(Error::NonFinite("internal field"));
    }
    Ok(InternalField { values, provenance })
}

pub fn internal_direct<T: Real>(
    geom: &Geometry<T>,
    u: &PhaseSpaceField<T>,
    v: &PhaseSpaceField<T>,
    media: &MediaCoefficients<T>,
) -> Result<InternalField<T>> {
    u.check(geom)?;
    v.check(geom)?;
    let mp = &u.average(&geom.angles) * &v.average(&geom.angles);
    let pm = u.product_average(v, &geom.angles);
    internal_from_averages(media, &mp, &pm, Provenance::Direct)
}

pub fn internal_from_parts<T: Real>(
    media: &MediaCoefficients<T>,
    parts: &AngularProducts<T>,
) -> Result<InternalField<T>> {
    internal_from_averages(
        media,
        &parts.total_mean_product(),
        &parts.total_product_mean(),
        Provenance::Assembled,
    )
}

#[derive(Clone, Copy, Debug)]
pub struct BtValue<T> {
    pub value: T,
    /// False when `|BT|` is within ten solver tolerances of zero.
    pub reliable: bool,
    pub report: SolveReport,
}

/// Fixed illumination `f`, detection `g` and background medium; caches the
/// unmodulated adjoint solve shared by every modulation.
pub struct BtContext<'a, T> {
    pub geom: &'a Geometry<T>,
    pub media: MediaCoefficients<T>,
    pub f: BoundaryTrace<T>,
    pub g: BoundaryTrace<T>,
    pub opts: SolverOptions<T>,
    /// Adjoint boundary values: `A~ g` on the inflow set, `g` on the outflow set.
    v_trace: BoundaryTrace<T>,
    pub adjoint_report: SolveReport,
}

impl<'a, T: Real> BtContext<'a, T> {
    pub fn new(
        geom: &'a Geometry<T>,
        media: MediaCoefficients<T>,
        f: BoundaryTrace<T>,
        g: BoundaryTrace<T>,
        opts: SolverOptions<T>,
    ) -> Result<Self> {
        let sol = transport::solve(geom, &TransportProblem::adjoint(media.clone(), g.clone()), &opts)?;
        let v_trace = sol.boundary_values(geom, &g);
        Ok(Self {
            geom,
            media,
            f,
            g,
            opts,
            v_trace,
            adjoint_report: sol.report,
        })
    }

    /// `BT = int_{Gamma_-} (theta.n) f A~g + int_{Gamma_+} (theta.n) A_eps f g`.
    pub fn boundary_term(&self, p: &ModulationParams<T>) -> Result<BtValue<T>> {
        let m_eps = modulate(&self.media, &self.geom.grid, p)?;
        let sol = transport::solve(
            self.geom,
            &TransportProblem::forward(m_eps, self.f.clone()),
            &self.opts,
        )?;
        let u_trace = sol.boundary_values(self.geom, &self.f);
        let value = boundary_integral(self.geom, &u_trace, &self.v_trace);
        let floor = T::lit(10.0) * self.opts.tol * self.f.sup_norm() * self.g.sup_norm();
        Ok(BtValue {
            value,
            reliable: value.abs() > floor,
            report: sol.report,
        })
    }
}

pub fn boundary_term<T: Real>(
    geom: &Geometry<T>,
    f: &BoundaryTrace<T>,
    g: &BoundaryTrace<T>,
    p: &ModulationParams<T>,
    media: &MediaCoefficients<T>,
    opts: &SolverOptions<T>,
) -> Result<BtValue<T>> {
    BtContext::new(geom, media.clone(), f.clone(), g.clone(), *opts)?.boundary_term(p)
}

/// `eps * 2 pi * sum_cells dA osc(q.x) <v L u_eps>`: the exact discrete value
/// of `BT` given the two solutions.
pub fn bt_volume_form<T: Real>(
    geom: &Geometry<T>,
    u_eps: &PhaseSpaceField<T>,
    v: &PhaseSpaceField<T>,
    media: &MediaCoefficients<T>,
    p: &ModulationParams<T>,
) -> Result<T> {
    let lu = apply_l(geom, u_eps, media)?;
    let vlu = v.product_average(&lu, &geom.angles);
    let two_pi = T::lit(2.0) * T::PI();
    let grid = &geom.grid;
    let mut acc = T::zero();
    for ((i, j), val) in vlu.indexed_iter() {
        acc += p.osc(grid.cell_center(i, j)) * *val;
    }
    Ok(p.eps * two_pi * grid.cell_area() * acc)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement<T> {
    pub q: [T; 2],
    pub phase: Phase,
    pub eps: T,
    pub bt: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet<T> {
    pub eps: T,
    pub entries: Vec<Measurement<T>>,
    pub f_id: String,
    pub g_id: String,
}

impl<T: Real> MeasurementSet<T> {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("qx,qy,phase,eps,bt_value\n");
        for m in &self.entries {
            let _ = writeln!(s, "{},{},{},{},{}", m.q[0], m.q[1], m.phase.name(), m.eps, m.bt);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::io(path, io),
                other => Error::parse(path, format!("{other:?}")),
            })?;
        let headers = rdr.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
        let expected = ["qx", "qy", "phase", "eps", "bt_value"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::parse(path, "columns must be qx,qy,phase,eps,bt_value"));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map(T::lit)
                .map_err(|e| Error::parse(path, format!("{s:?}: {e}")))
        };
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
            let phase = Phase::from_name(&rec[2])
                .ok_or_else(|| Error::parse(path, format!("unknown phase {:?}", &rec[2])))?;
            entries.push(Measurement {
                q: [num(&rec[0])?, num(&rec[1])?],
                phase,
                eps: num(&rec[3])?,
                bt: num(&rec[4])?,
            });
        }
        let eps = entries
            .first()
            .map(|m| m.eps)
            .ok_or_else(|| Error::parse(path, "no measurements"))?;
        Ok(Self {
            eps,
            entries,
            f_id: "csv".into(),
            g_id: "csv".into(),
        })
    }
}

/// Lattice wave vector `2 pi (a / Lx, b / Ly)`.
pub fn lattice_q<T: Real>(grid: &SpatialGrid<T>, a: i64, b: i64) -> [T; 2] {
    let two_pi = T::lit(2.0) * T::PI();
    let e = grid.extent();
    [two_pi * T::lit(a as f64) / e[0], two_pi * T::lit(b as f64) / e[1]]
}

/// Measurements needed for order `k_max`: `q = 0` with cos phase, and both
/// phases on the half lattice `a > 0` or `a = 0, b > 0`. The other half
/// follows from parity.
pub fn measurement_plan(k_max: usize) -> Vec<(i64, i64, Phase)> {
    let k = k_max as i64;
    let mut plan = vec![(0, 0, Phase::Cos)];
    for a in 0..=k {
        for b in -k..=k {
            if a > 0 || b > 0 {
                plan.push((a, b, Phase::Cos));
                plan.push((a, b, Phase::Sin));
            }
        }
    }
    plan
}

/// Runs every planned measurement; entries are in plan order.
pub fn measure<T: Real>(ctx: &BtContext<'_, T>, k_max: usize, eps: T) -> Result<(MeasurementSet<T>, Vec<BtValue<T>>)> {
    let plan = measurement_plan(k_max);
    let grid = &ctx.geom.grid;
    let values: Vec<BtValue<T>> = plan
        .par_iter()
        .map(|&(a, b, phase)| ctx.boundary_term(&ModulationParams::new(eps, lattice_q(grid, a, b), phase)))
        .collect::<Result<_>>()?;
    let entries = plan
        .iter()
        .zip(&values)
        .map(|(&(a, b, phase), v)| Measurement {
            q: lattice_q(grid, a, b),
            phase,
            eps,
            bt: v.value,
        })
        .collect();
    Ok((
        MeasurementSet {
            eps,
            entries,
            f_id: "f".into(),
            g_id: "g".into(),
        },
        values,
    ))
}

/// Leading-order `BT = 2 pi eps int osc(q.x) H dx` with cell-center quadrature.
pub fn synthesize_bt<T: Real>(
    grid: &SpatialGrid<T>,
    h: &ScalarField<T>,
    plan: &[(i64, i64, Phase)],
    eps: T,
) -> Result<MeasurementSet<T>> {
    grid.check_field(h)?;
    let two_pi = T::lit(2.0) * T::PI();
    let entries = plan
        .iter()
        .map(|&(a, b, phase)| {
            let p = ModulationParams::new(eps, lattice_q(grid, a, b), phase);
            let mut acc = T::zero();
            for ((i, j), v) in h.indexed_iter() {
                acc += p.osc(grid.cell_center(i, j)) * *v;
            }
            Measurement {
                q: p.q,
                phase,
                eps,
                bt: two_pi * eps * grid.cell_area() * acc,
            }
        })
        .collect();
    Ok(MeasurementSet {
        eps,
        entries,
        f_id: "synthetic".into(),
        g_id: "synthetic".into(),
    })
}

#[derive(Clone, Debug)]
pub struct Recovery<T> {
    pub field: InternalField<T>,
    /// `sup |Im| / sup |Re|` of the assembled complex series.
    pub imag_residue: T,
}

/// Truncated Fourier synthesis of `H` from lattice measurements of order `k_max`.
///
/// Cos and sin coefficients are `BT / (2 pi eps)`; a missing `-q` entry is
/// filled by parity (cos even, sin odd), and duplicate entries are averaged.
pub fn recover_h<T: Real>(ms: &MeasurementSet<T>, grid: &SpatialGrid<T>, k_max: usize) -> Result<Recovery<T>> {
    let k = k_max as i64;
    let side = (2 * k + 1) as usize;
    let idx = |a: i64, b: i64| ((a + k) as usize) * side + (b + k) as usize;
    let mut sums = vec![[T::zero(); 2]; side * side];
    let mut counts = vec![[0usize; 2]; side * side];
    let two_pi = T::lit(2.0) * T::PI();
    let e = grid.extent();
    for m in &ms.entries {
        if m.eps <= T::zero() {
            return Err(Error::InvalidArgument("measurement with nonpositive eps".into()));
        }
        let fa = (m.q[0] * e[0] / two_pi).as_f64();
        let fb = (m.q[1] * e[1] / two_pi).as_f64();
        let (a, b) = (fa.round(), fb.round());
        if (fa - a).abs() > 1e-6 || (fb - b).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("q = ({}, {}) is off the lattice", m.q[0], m.q[1])));
        }
        let (a, b) = (a as i64, b as i64);
        if a.abs() > k || b.abs() > k {
            continue;
        }
        let coef = m.bt / (two_pi * m.eps);
        let p = match m.phase {
            Phase::Cos => 0,
            Phase::Sin => 1,
        };
        sums[idx(a, b)][p] += coef;
        counts[idx(a, b)][p] += 1;
    }
    let mut c = vec![[T::zero(); 2]; side * side];
    for a in -k..=k {
        for b in -k..=k {
            for (p, phase) in [(0, Phase::Cos), (1, Phase::Sin)] {
                let here = idx(a, b);
                let there = idx(-a, -b);
                let parity = if p == 0 { T::one() } else { -T::one() };
                let val = if counts[here][p] > 0 {
                    sums[here][p] / T::from_usize_lossy(counts[here][p])
                } else if counts[there][p] > 0 {
                    parity * sums[there][p] / T::from_usize_lossy(counts[there][p])
                } else if p == 1 && a == 0 && b == 0 {
                    T::zero()
                } else {
                    return Err(Error::MissingMeasurement(a, b, phase.name()));
                };
                c[here][p] = val;
            }
        }
    }
    let (nx, ny) = grid.shape();
    let area = grid.area();
    let mut re = Array2::zeros((nx, ny));
    let mut im = Array2::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            let x = grid.cell_center(i, j);
            let (mut acc_r, mut acc_i) = (T::zero(), T::zero());
            for a in -k..=k {
                for b in -k..=k {
                    let q = lattice_q(grid, a, b);
                    let arg = q[0] * x[0] + q[1] * x[1];
                    let [cc, ss] = c[idx(a, b)];
                    // (C - i S) e^{i q.x}
                    acc_r += cc * arg.cos() + ss * arg.sin();
                    acc_i += cc * arg.sin() - ss * arg.cos();
                }
            }
            re[[i, j]] = acc_r / area;
            im[[i, j]] = acc_i / area;
        }
    }
    let sup_re = crate::field::sup_norm(&re);
    let imag_residue = if sup_re > T::zero() {
        crate::field::sup_norm(&im) / sup_re
    } else {
        crate::field::sup_norm(&im)
    };
    Ok(Recovery {
        field: InternalField {
            values: re,
            provenance: Provenance::Fourier {
                eps: ms.eps.as_f64(),
                k_max,
                n_measurements: ms.entries.len(),
            },
        },
        imag_residue,
    })
}

/// `||u_eps - u||_inf / (eps ||u_eps||_inf)` for each `eps`.
pub fn first_order_check<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    f: &BoundaryTrace<T>,
    eps_list: &[T],
    q: [T; 2],
    phase: Phase,
    opts: &SolverOptions<T>,
) -> Result<Vec<T>> {
    let u = transport::solve(geom, &TransportProblem::forward(media.clone(), f.clone()), opts)?;
    eps_list
        .iter()
        .map(|&eps| {
            let m = modulate(media, &geom.grid, &ModulationParams::new(eps, q, phase))?;
            let ue = transport::solve(geom, &TransportProblem::forward(m, f.clone()), opts)?;
            let diff = ue.field.scaled_add(-T::one(), &u.field).sup_norm();
            if eps == T::zero() {
                return Ok(diff);
            }
            Ok(diff / (eps * ue.field.sup_norm()))
        })
        .collect()
}
