//! Discrete-ordinates solve of the steady transport equation
//!
//! ```text
//! theta . grad u = (sigma_s / Kn) (<u> - u) - Kn sigma_a u + S,   u = f on Gamma_-
//! ```
//!
//! Each direction is swept with first-order upwind (step) differencing; the
//! scattering source is converged by source iteration on the angular average,
//! by default wrapped in restarted GMRES. Adjoint problems
//! (`-theta . grad v = L v + S`, data on `Gamma_+`) are solved by reflecting
//! directions, running the forward solver and reflecting back.

use ndarray::{Array2, Array3, Zip};
use rayon::prelude::*;

use crate::field::{BoundaryTrace, PhaseSpaceField, ScalarField};
use crate::geometry::{Geometry, Side};
use crate::krylov::gmres;
use crate::media::MediaCoefficients;
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `+theta . grad`, data on the inflow set.
    Forward,
    /// `-theta . grad`, data on the outflow set.
    Adjoint,
}

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeSource<T> {
    Zero,
    Isotropic(ScalarField<T>),
    Full(PhaseSpaceField<T>),
}

impl<T: Real> VolumeSource<T> {
    pub fn sup_norm(&self) -> T {
        match self {
            VolumeSource::Zero => T::zero(),
            VolumeSource::Isotropic(s) => crate::field::sup_norm(s),
            VolumeSource::Full(s) => s.sup_norm(),
        }
    }

    fn at(&self, k: usize, i: usize, j: usize) -> T {
        match self {
            VolumeSource::Zero => T::zero(),
            VolumeSource::Isotropic(s) => s[[i, j]],
            VolumeSource::Full(s) => s.data()[[k, i, j]],
        }
    }

    fn reflect(&self, geom: &Geometry<T>) -> Self {
        match self {
            VolumeSource::Full(s) => VolumeSource::Full(s.reflect(&geom.angles)),
            other => other.clone(),
        }
    }

    fn check(&self, geom: &Geometry<T>) -> Result<()> {
        match self {
            VolumeSource::Zero => Ok(()),
            VolumeSource::Isotropic(s) => geom.check_field(s),
            VolumeSource::Full(s) => s.check(geom),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportProblem<T> {
    pub media: MediaCoefficients<T>,
    /// Inflow data `f` for forward problems, outflow data `g` for adjoint ones.
    pub boundary: BoundaryTrace<T>,
    pub source: VolumeSource<T>,
    pub direction: Direction,
}

impl<T: Real> TransportProblem<T> {
    pub fn forward(media: MediaCoefficients<T>, inflow: BoundaryTrace<T>) -> Self {
        Self {
            media,
            boundary: inflow,
            source: VolumeSource::Zero,
            direction: Direction::Forward,
        }
    }

    pub fn adjoint(media: MediaCoefficients<T>, outflow_data: BoundaryTrace<T>) -> Self {
        Self {
            media,
            boundary: outflow_data,
            source: VolumeSource::Zero,
            direction: Direction::Adjoint,
        }
    }

    pub fn with_source(mut self, source: VolumeSource<T>) -> Self {
        self.source = source;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Acceleration {
    None,
    Krylov,
}

impl Acceleration {
    pub fn name(self) -> &'static str {
        match self {
            Acceleration::None => "none",
            Acceleration::Krylov => "krylov",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    /// Sup-norm tolerance on successive angular averages, relative to the
    /// uncollided average.
    pub tol: T,
    pub max_iter: usize,
    pub acceleration: Acceleration,
    pub restart: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iter: 5000,
            acceleration: Acceleration::Krylov,
            restart: 80,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn with_tol(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_acceleration(mut self, a: Acceleration) -> Self {
        self.acceleration = a;
        self
    }

    pub fn with_max_iter(mut self, n: usize) -> Self {
        self.max_iter = n;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    /// Source iterations, or Krylov steps when accelerated.
    pub iterations: usize,
    /// Transport sweeps over all directions, including the final one.
    pub sweeps: usize,
    /// `||<u>_{n+1} - <u>_n||_inf` for the returned iterate.
    pub final_residual: f64,
    /// The absolute threshold `final_residual` was compared against.
    pub threshold: f64,
    pub converged: bool,
    pub acceleration_used: Acceleration,
}

#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub field: PhaseSpaceField<T>,
    pub report: SolveReport,
    pub direction: Direction,
}

impl<T: Real> Solution<T> {
    /// `A f = u|_{Gamma_+}` for forward solutions, `A~ g = v|_{Gamma_-}` for adjoint ones.
    pub fn albedo(&self, geom: &Geometry<T>) -> BoundaryTrace<T> {
        let set = match self.direction {
            Direction::Forward => &geom.outflow,
            Direction::Adjoint => &geom.inflow,
        };
        let mut out = BoundaryTrace::zeros(geom);
        for e in &set.entries {
            let (i, j) = geom.face_cell(e.face);
            out.set(e.face, e.dir, self.field.data()[[e.dir, i, j]]);
        }
        out
    }

    /// Boundary values on both sets: the prescribed data plus the albedo.
    pub fn boundary_values(&self, geom: &Geometry<T>, data: &BoundaryTrace<T>) -> BoundaryTrace<T> {
        let mut out = self.albedo(geom);
        let set = match self.direction {
            Direction::Forward => &geom.inflow,
            Direction::Adjoint => &geom.outflow,
        };
        for e in &set.entries {
            out.set(e.face, e.dir, data.get(e.face, e.dir));
        }
        out
    }
}

/// `L u = (sigma_s / Kn) <u> - (sigma / Kn) u`
pub fn apply_l<T: Real>(
    geom: &Geometry<T>,
    u: &PhaseSpaceField<T>,
    media: &MediaCoefficients<T>,
) -> Result<PhaseSpaceField<T>> {
    u.check(geom)?;
    media.check_grid(&geom.grid)?;
    let avg = u.average(&geom.angles);
    let kn = media.kn();
    let sig = media.total_sigma();
    let ss = media.sigma_s();
    let mut out = u.data().clone();
    for mut slab in out.outer_iter_mut() {
        Zip::from(&mut slab)
            .and(&avg)
            .and(ss)
            .and(&sig)
            .for_each(|v, &a, &s, &t| *v = (s * a - t * *v) / kn);
    }
    Ok(PhaseSpaceField::from_array(out))
}

/// Per-direction upwind sweeps for one forward problem.
struct Sweeper<'a, T> {
    geom: &'a Geometry<T>,
    /// `sigma / Kn`
    sig_t: Array2<T>,
    /// `sigma_s / Kn`
    sig_s: Array2<T>,
    inflow: &'a BoundaryTrace<T>,
    source: &'a VolumeSource<T>,
}

impl<'a, T: Real> Sweeper<'a, T> {
    fn new(geom: &'a Geometry<T>, media: &MediaCoefficients<T>, inflow: &'a BoundaryTrace<T>, source: &'a VolumeSource<T>) -> Self {
        let kn = media.kn();
        Self {
            geom,
            sig_t: media.total_sigma().mapv(|v| v / kn),
            sig_s: media.sigma_s().mapv(|v| v / kn),
            inflow,
            source,
        }
    }

    /// Sweeps direction `k` with isotropic scattering source `sig_s * phi`
    /// plus, if `external`, the volume source and boundary inflow.
    fn sweep_direction(&self, k: usize, phi: Option<&Array2<T>>, external: bool) -> Array2<T> {
        let grid = &self.geom.grid;
        let (nx, ny) = grid.shape();
        let d = self.geom.angles.direction(k);
        let ax = d[0].abs() / grid.dx();
        let ay = d[1].abs() / grid.dy();
        // zero components sweep as positive
        let x_pos = d[0] >= T::zero();
        let y_pos = d[1] >= T::zero();
        let x_face = if x_pos { Side::Left } else { Side::Right };
        let y_face = if y_pos { Side::Bottom } else { Side::Top };

        let mut psi = vec![T::zero(); nx * ny];
        let sig_t = self.sig_t.as_slice().expect("standard layout");
        let sig_s = self.sig_s.as_slice().expect("standard layout");
        let phi = phi.map(|p| p.as_slice().expect("standard layout"));

        for step_i in 0..nx {
            let i = if x_pos { step_i } else { nx - 1 - step_i };
            for step_j in 0..ny {
                let j = if y_pos { step_j } else { ny - 1 - step_j };
                let idx = i * ny + j;
                let up_x = if step_i == 0 {
                    if external {
                        self.inflow.get(self.geom.face_id(x_face, j), k)
                    } else {
                        T::zero()
                    }
                } else {
                    let ip = if x_pos { i - 1 } else { i + 1 };
                    psi[ip * ny + j]
                };
                let up_y = if step_j == 0 {
                    if external {
                        self.inflow.get(self.geom.face_id(y_face, i), k)
                    } else {
                        T::zero()
                    }
                } else {
                    let jp = if y_pos { j - 1 } else { j + 1 };
                    psi[i * ny + jp]
                };
                let mut q = T::zero();
                if let Some(phi) = phi {
                    q += sig_s[idx] * phi[idx];
                }
                if external {
                    q += self.source.at(k, i, j);
                }
                psi[idx] = (ax * up_x + ay * up_y + q) / (ax + ay + sig_t[idx]);
            }
        }
        Array2::from_shape_vec((nx, ny), psi).expect("shape")
    }

    /// All directions, computed concurrently and kept in direction order.
    fn sweep_all(&self, phi: Option<&Array2<T>>, external: bool) -> Vec<Array2<T>> {
        (0..self.geom.n_dirs())
            .into_par_iter()
            .map(|k| self.sweep_direction(k, phi, external))
            .collect()
    }

    /// Angular average of a full sweep, reduced in fixed direction order.
    fn sweep_average(&self, phi: Option<&Array2<T>>, external: bool) -> Result<Array2<T>> {
        let slabs = self.sweep_all(phi, external);
        let (nx, ny) = self.geom.grid.shape();
        let mut acc: Array2<T> = Array2::zeros((nx, ny));
        for (k, s) in slabs.iter().enumerate() {
            let w = self.geom.angles.weight(k);
            Zip::from(&mut acc).and(s).for_each(|a, &v| *a += w * v);
        }
        if acc.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("transport sweep"));
        }
        Ok(acc)
    }
}

fn sup_diff<T: Real>(a: &Array2<T>, b: &Array2<T>) -> T {
    Zip::from(a)
        .and(b)
        .fold(T::zero(), |m, &x, &y| m.max((x - y).abs()))
}

/// Solves a forward or adjoint problem. Non-convergence is reported through
/// `report.converged`, not as an error; non-finite values abort.
pub fn solve<T: Real>(
    geom: &Geometry<T>,
    problem: &TransportProblem<T>,
    opts: &SolverOptions<T>,
) -> Result<Solution<T>> {
    problem.media.check_grid(&geom.grid)?;
    problem.boundary.check(geom)?;
    problem.source.check(geom)?;
    if !(opts.tol > T::zero()) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    if !problem.boundary.is_finite() {
        return Err(Error::NonFinite("boundary data"));
    }
    match problem.direction {
        Direction::Forward => {
            let (field, report) = solve_forward(geom, &problem.media, &problem.boundary, &problem.source, opts)?;
            Ok(Solution {
                field,
                report,
                direction: Direction::Forward,
            })
        }
        Direction::Adjoint => {
            // v~(x, theta) = v(x, -theta) solves the forward equation with reflected data
            let inflow = problem.boundary.reflect(&geom.angles);
            let source = problem.source.reflect(geom);
            let (field, report) = solve_forward(geom, &problem.media, &inflow, &source, opts)?;
            Ok(Solution {
                field: field.reflect(&geom.angles),
                report,
                direction: Direction::Adjoint,
            })
        }
    }
}

fn solve_forward<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    inflow: &BoundaryTrace<T>,
    source: &VolumeSource<T>,
    opts: &SolverOptions<T>,
) -> Result<(PhaseSpaceField<T>, SolveReport)> {
    let sweeper = Sweeper::new(geom, media, inflow, source);
    let (nx, ny) = geom.grid.shape();

    // uncollided average b; the fixed point is phi = K phi + b
    let b = sweeper.sweep_average(None, true)?;
    let mut sweeps = 1;
    let scale = crate::field::sup_norm(&b);
    let threshold = opts.tol * scale;

    let mut phi = b.clone();
    let mut residual = T::zero();
    let mut iterations = 0;
    let mut converged = scale == T::zero();

    if !converged {
        match opts.acceleration {
            Acceleration::None => {
                while iterations < opts.max_iter {
                    let next = sweeper.sweep_average(Some(&phi), true)?;
                    sweeps += 1;
                    iterations += 1;
                    residual = sup_diff(&next, &phi);
                    phi = next;
                    if residual <= threshold {
                        converged = true;
                        break;
                    }
                }
            }
            Acceleration::Krylov => {
                let rhs: Vec<T> = b.iter().copied().collect();
                while iterations < opts.max_iter {
                    let mut matvecs = 0;
                    let out = gmres(
                        |x: &[T]| {
                            matvecs += 1;
                            let xa = Array2::from_shape_vec((nx, ny), x.to_vec()).expect("shape");
                            let kx = sweeper.sweep_average(Some(&xa), false)?;
                            Ok(x.iter().zip(kx.iter()).map(|(a, b)| *a - *b).collect())
                        },
                        &rhs,
                        phi.iter().copied().collect(),
                        // 2-norm bound implies the sup-norm one
                        threshold,
                        opts.restart,
                        opts.max_iter - iterations,
                    )?;
                    sweeps += matvecs;
                    iterations += out.iterations;
                    phi = Array2::from_shape_vec((nx, ny), out.x).expect("shape");
                    // true successive-iterate difference
                    let next = sweeper.sweep_average(Some(&phi), true)?;
                    sweeps += 1;
                    residual = sup_diff(&next, &phi);
                    if residual <= threshold {
                        converged = true;
                        break;
                    }
                    if out.iterations == 0 {
                        break;
                    }
                }
            }
        }
    }

    let slabs = sweeper.sweep_all(Some(&phi), true);
    sweeps += 1;
    let mut data = Array3::zeros((geom.n_dirs(), nx, ny));
    for (k, s) in slabs.into_iter().enumerate() {
        data.index_axis_mut(ndarray::Axis(0), k).assign(&s);
    }
    let field = PhaseSpaceField::from_array(data);
    if !field.is_finite() {
        return Err(Error::NonFinite("transport solution"));
    }
    Ok((
        field,
        SolveReport {
            iterations,
            sweeps,
            final_residual: residual.as_f64(),
            threshold: threshold.as_f64(),
            converged,
            acceleration_used: opts.acceleration,
        },
    ))
}

/// One pure-attenuation sweep per direction: the scheme's own uncollided
/// field `theta . grad u = -(sigma / Kn) u`, `u = data` on the inflow set
/// (outflow set and `-theta` for adjoint data).
pub fn uncollided<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    data: &BoundaryTrace<T>,
    direction: Direction,
) -> Result<PhaseSpaceField<T>> {
    media.check_grid(&geom.grid)?;
    data.check(geom)?;
    if !data.is_finite() {
        return Err(Error::NonFinite("boundary data"));
    }
    let reflected;
    let inflow = match direction {
        Direction::Forward => data,
        Direction::Adjoint => {
            reflected = data.reflect(&geom.angles);
            &reflected
        }
    };
    let zero = VolumeSource::Zero;
    let sweeper = Sweeper::new(geom, media, inflow, &zero);
    let (nx, ny) = geom.grid.shape();
    let mut data3 = Array3::zeros((geom.n_dirs(), nx, ny));
    for (k, s) in sweeper.sweep_all(None, true).into_iter().enumerate() {
        data3.index_axis_mut(ndarray::Axis(0), k).assign(&s);
    }
    let field = PhaseSpaceField::from_array(data3);
    Ok(match direction {
        Direction::Forward => field,
        Direction::Adjoint => field.reflect(&geom.angles),
    })
}

/// Solves and returns the outgoing trace (`A f` on `Gamma_+`, or `A~ g` on `Gamma_-`).
pub fn albedo<T: Real>(
    geom: &Geometry<T>,
    problem: &TransportProblem<T>,
    opts: &SolverOptions<T>,
) -> Result<(BoundaryTrace<T>, SolveReport)> {
    let sol = solve(geom, problem, opts)?;
    Ok((sol.albedo(geom), sol.report))
}

/// `||u||_inf / ((1/Kn)(||S||_inf + ||f||_inf / Kn))`, the ratio bounded by the
/// a-priori estimate.
pub fn check_apriori_bound<T: Real>(u: &PhaseSpaceField<T>, problem: &TransportProblem<T>) -> T {
    let kn = problem.media.kn();
    let denom = (problem.source.sup_norm() + problem.boundary.sup_norm() / kn) / kn;
    u.sup_norm() / denom
}

/// Residual of the discrete equations at every (direction, cell), evaluated
/// from explicit stencils. Adjoint problems use the stencil upwind along
/// `-theta` with data on the outflow set, without any reflection.
pub fn residual<T: Real>(
    geom: &Geometry<T>,
    problem: &TransportProblem<T>,
    u: &PhaseSpaceField<T>,
) -> Result<PhaseSpaceField<T>> {
    u.check(geom)?;
    let grid = &geom.grid;
    let (nx, ny) = grid.shape();
    let kn = problem.media.kn();
    let sig = problem.media.total_sigma();
    let ss = problem.media.sigma_s();
    let avg = u.average(&geom.angles);
    let data = u.data();
    let sign = match problem.direction {
        Direction::Forward => T::one(),
        Direction::Adjoint => -T::one(),
    };
    let mut out = Array3::zeros((geom.n_dirs(), nx, ny));
    for k in 0..geom.n_dirs() {
        let t = geom.angles.direction(k);
        let d = [sign * t[0], sign * t[1]];
        let ax = d[0].abs() / grid.dx();
        let ay = d[1].abs() / grid.dy();
        let x_pos = d[0] >= T::zero();
        let y_pos = d[1] >= T::zero();
        for i in 0..nx {
            for j in 0..ny {
                let up_x = match (x_pos, i, nx - 1 - i) {
                    (true, 0, _) => problem.boundary.get(geom.face_id(Side::Left, j), k),
                    (true, _, _) => data[[k, i - 1, j]],
                    (false, _, 0) => problem.boundary.get(geom.face_id(Side::Right, j), k),
                    (false, _, _) => data[[k, i + 1, j]],
                };
                let up_y = match (y_pos, j, ny - 1 - j) {
                    (true, 0, _) => problem.boundary.get(geom.face_id(Side::Bottom, i), k),
                    (true, _, _) => data[[k, i, j - 1]],
                    (false, _, 0) => problem.boundary.get(geom.face_id(Side::Top, i), k),
                    (false, _, _) => data[[k, i, j + 1]],
                };
                let uk = data[[k, i, j]];
                let transport = ax * (uk - up_x) + ay * (uk - up_y);
                let collision = (ss[[i, j]] * avg[[i, j]] - sig[[i, j]] * uk) / kn;
                out[[k, i, j]] = transport - collision - problem.source.at(k, i, j);
            }
        }
    }
    Ok(PhaseSpaceField::from_array(out))
}
