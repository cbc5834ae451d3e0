//! Singular decomposition `u = u1 + u2`, `v = v1 + v2`.
//!
//! `u1` is the ballistic part, computed exactly by ray tracing (or, for
//! consistency checks against the discrete solver, by one pure-attenuation
//! sweep). `u2` solves the transport problem with zero boundary data and the
//! isotropic source `(sigma_s / Kn) <u1>`.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::field::{BoundaryTrace, PhaseSpaceField, ScalarField};
use crate::geometry::{line_integral, trace_ray, Geometry, RaySide, RayTrace};
use crate::media::{beam_trace, BeamSource, MediaCoefficients};
use crate::transport::{self, Direction, Solution, SolverOptions, TransportProblem, VolumeSource};
use crate::{Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BallisticMode {
    /// Exact attenuation along ray-traced chords.
    Exact,
    /// The upwind scheme's own uncollided field.
    Discrete,
}

impl BallisticMode {
    pub fn name(self) -> &'static str {
        match self {
            BallisticMode::Exact => "exact",
            BallisticMode::Discrete => "discrete",
        }
    }
}

/// Boundary face hit by the ray from `ray.origin` along `-theta` (forward) or `+theta` (adjoint).
fn boundary_face<T: Real>(geom: &Geometry<T>, ray: &RayTrace<T>, sign: Direction) -> usize {
    let hit = match sign {
        Direction::Forward => &ray.exit_minus,
        Direction::Adjoint => &ray.exit_plus,
    };
    geom.face_at(hit.side, hit.point)
}

fn ray_side(sign: Direction) -> RaySide {
    match sign {
        Direction::Forward => RaySide::Minus,
        Direction::Adjoint => RaySide::Plus,
    }
}

/// Log of the ballistic value at every cell for direction `k`; `-inf` where the
/// beam datum vanishes.
fn ballistic_log_slab<T: Real>(
    geom: &Geometry<T>,
    sigma_kn: &Array2<T>,
    beam: &BeamSource<T>,
    k: usize,
    sign: Direction,
) -> Result<Array2<T>> {
    let (nx, ny) = geom.grid.shape();
    let theta = geom.angles.direction(k);
    let amp = beam.angular_value(k);
    let cells: Vec<T> = (0..nx * ny)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / ny, c % ny);
            let ray = trace_ray(&geom.grid, geom.grid.cell_center(i, j), theta)?;
            let face = boundary_face(geom, &ray, sign);
            if !beam.region.contains(geom, face) || amp == T::zero() {
                return Ok(T::neg_infinity());
            }
            let tau = line_integral(sigma_kn, &ray, ray_side(sign))?;
            Ok(amp.ln() - tau)
        })
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((nx, ny), cells).expect("shape"))
}

/// Ballistic part `u1` (forward) or `v1` (adjoint) from exact ray tracing.
pub fn ballistic<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    beam: &BeamSource<T>,
    sign: Direction,
) -> Result<PhaseSpaceField<T>> {
    media.check_grid(&geom.grid)?;
    let kn = media.kn();
    let sigma_kn = media.total_sigma().mapv(|s| s / kn);
    let (nx, ny) = geom.grid.shape();
    let mut data = Array3::zeros((geom.n_dirs(), nx, ny));
    for &k in &beam.support {
        let lg = ballistic_log_slab(geom, &sigma_kn, beam, k, sign)?;
        data.index_axis_mut(ndarray::Axis(0), k)
            .assign(&lg.mapv(|v| v.exp()));
    }
    Ok(PhaseSpaceField::from_array(data))
}

/// The beam as boundary data on the set matching `sign`.
pub fn beam_data<T: Real>(geom: &Geometry<T>, beam: &BeamSource<T>, sign: Direction) -> Result<BoundaryTrace<T>> {
    match sign {
        Direction::Forward => beam_trace(beam, geom, &geom.inflow),
        Direction::Adjoint => beam_trace(beam, geom, &geom.outflow),
    }
}

pub fn ballistic_with<T: Real>(
    mode: BallisticMode,
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    beam: &BeamSource<T>,
    sign: Direction,
) -> Result<PhaseSpaceField<T>> {
    match mode {
        BallisticMode::Exact => ballistic(geom, media, beam, sign),
        BallisticMode::Discrete => {
            let data = beam_data(geom, beam, sign)?;
            transport::uncollided(geom, media, &data, sign)
        }
    }
}

/// Remainder `u2` (or `v2`): zero boundary data, source `(sigma_s / Kn) <u1>`.
pub fn remainder<T: Real>(
    geom: &Geometry<T>,
    u1: &PhaseSpaceField<T>,
    media: &MediaCoefficients<T>,
    sign: Direction,
    opts: &SolverOptions<T>,
) -> Result<Solution<T>> {
    u1.check(geom)?;
    media.check_grid(&geom.grid)?;
    let kn = media.kn();
    let mut src = u1.average(&geom.angles);
    src.zip_mut_with(media.sigma_s(), |a, &s| *a = *a * s / kn);
    let problem = TransportProblem {
        media: media.clone(),
        boundary: BoundaryTrace::zeros(geom),
        source: VolumeSource::Isotropic(src),
        direction: sign,
    };
    transport::solve(geom, &problem, opts)
}

#[derive(Clone, Debug)]
pub struct Decomposition<T> {
    pub ballistic: PhaseSpaceField<T>,
    pub remainder: Solution<T>,
    pub mode: BallisticMode,
}

impl<T: Real> Decomposition<T> {
    pub fn total(&self) -> PhaseSpaceField<T> {
        self.ballistic.scaled_add(T::one(), &self.remainder.field)
    }
}

pub fn decompose<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    beam: &BeamSource<T>,
    sign: Direction,
    mode: BallisticMode,
    opts: &SolverOptions<T>,
) -> Result<Decomposition<T>> {
    let b = ballistic_with(mode, geom, media, beam, sign)?;
    let r = remainder(geom, &b, media, sign, opts)?;
    Ok(Decomposition {
        ballistic: b,
        remainder: r,
        mode,
    })
}

/// `<u_j>`, `<v_k>`, `<u_j><v_k>` and `<u_j v_k>` for `j, k` in `{1, 2}` (stored at index 0, 1).
#[derive(Clone, Debug)]
pub struct AngularProducts<T> {
    pub avg_u: [ScalarField<T>; 2],
    pub avg_v: [ScalarField<T>; 2],
    /// `mean_product[j][k] = <u_j><v_k>`
    pub mean_product: [[ScalarField<T>; 2]; 2],
    /// `product_mean[j][k] = <u_j v_k>`
    pub product_mean: [[ScalarField<T>; 2]; 2],
}

impl<T: Real> AngularProducts<T> {
    /// `<u><v>` summed over all pieces.
    pub fn total_mean_product(&self) -> ScalarField<T> {
        let mut out = self.mean_product[0][0].clone();
        for (j, k) in [(0, 1), (1, 0), (1, 1)] {
            out += &self.mean_product[j][k];
        }
        out
    }

    /// `<uv>` summed over all pieces.
    pub fn total_product_mean(&self) -> ScalarField<T> {
        let mut out = self.product_mean[0][0].clone();
        for (j, k) in [(0, 1), (1, 0), (1, 1)] {
            out += &self.product_mean[j][k];
        }
        out
    }
}

pub fn angular_products<T: Real>(
    geom: &Geometry<T>,
    u1: &PhaseSpaceField<T>,
    u2: &PhaseSpaceField<T>,
    v1: &PhaseSpaceField<T>,
    v2: &PhaseSpaceField<T>,
) -> Result<AngularProducts<T>> {
    for f in [u1, u2, v1, v2] {
        f.check(geom)?;
    }
    let a = &geom.angles;
    let avg_u = [u1.average(a), u2.average(a)];
    let avg_v = [v1.average(a), v2.average(a)];
    let us = [u1, u2];
    let vs = [v1, v2];
    let mp = |j: usize, k: usize| &avg_u[j] * &avg_v[k];
    let pm = |j: usize, k: usize| us[j].product_average(vs[k], a);
    Ok(AngularProducts {
        mean_product: [[mp(0, 0), mp(0, 1)], [mp(1, 0), mp(1, 1)]],
        product_mean: [[pm(0, 0), pm(0, 1)], [pm(1, 0), pm(1, 1)]],
        avg_u,
        avg_v,
    })
}

/// Closed-form `<u1 v1>` with its logarithm; `log` is `-inf` where the
/// product vanishes identically.
#[derive(Clone, Debug)]
pub struct BallisticProduct<T> {
    pub value: ScalarField<T>,
    pub log: ScalarField<T>,
}

/// `<u1 v1>(x) = sum_k w_k f(entry_k, k) g(exit_k, k) exp(-(1/Kn) int_l sigma)`,
/// accumulated by log-sum-exp over the directions where both beams are nonzero.
pub fn ballistic_product<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    f: &BeamSource<T>,
    g: &BeamSource<T>,
) -> Result<BallisticProduct<T>> {
    media.check_grid(&geom.grid)?;
    let kn = media.kn();
    let sigma_kn = media.total_sigma().mapv(|s| s / kn);
    let dirs: Vec<usize> = f.support.iter().copied().filter(|&k| g.in_cone(k)).collect();
    let mut terms = Vec::with_capacity(dirs.len());
    for &k in &dirs {
        let lf = ballistic_log_slab(geom, &sigma_kn, f, k, Direction::Forward)?;
        let lg = ballistic_log_slab(geom, &sigma_kn, g, k, Direction::Adjoint)?;
        let lw = geom.angles.weight(k).ln();
        terms.push(&lf + &lg + lw);
    }
    let (nx, ny) = geom.grid.shape();
    let mut log = Array2::from_elem((nx, ny), T::neg_infinity());
    for ((i, j), out) in log.indexed_iter_mut() {
        let m = terms.iter().fold(T::neg_infinity(), |m, t| m.max(t[[i, j]]));
        if m == T::neg_infinity() {
            continue;
        }
        let s = terms.iter().fold(T::zero(), |s, t| s + (t[[i, j]] - m).exp());
        *out = m + s.ln();
    }
    let value = log.mapv(|v| v.exp());
    Ok(BallisticProduct { value, log })
}

/// `-(1/Kn) int_{l(x, theta_k)} sigma ds` at every cell center, over the full chord.
pub fn chord_log_attenuation<T: Real>(
    geom: &Geometry<T>,
    media: &MediaCoefficients<T>,
    k: usize,
) -> Result<ScalarField<T>> {
    media.check_grid(&geom.grid)?;
    let kn = media.kn();
    let sigma_kn = media.total_sigma().mapv(|s| s / kn);
    let theta = geom.angles.direction(k);
    let (nx, ny) = geom.grid.shape();
    let cells: Vec<T> = (0..nx * ny)
        .into_par_iter()
        .map(|c| {
            let ray = trace_ray(&geom.grid, geom.grid.cell_center(c / ny, c % ny), theta)?;
            Ok(-line_integral(&sigma_kn, &ray, RaySide::Full)?)
        })
        .collect::<Result<_>>()?;
    Ok(Array2::from_shape_vec((nx, ny), cells).expect("shape"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grids, Side};
    use crate::media::{make_beam, EntryRegion};
    use approx::assert_relative_eq;

    fn tau_pi(cells: usize, n: usize) -> f64 {
        cells as f64 * 2.0 * std::f64::consts::PI / n as f64
    }

    #[test]
    fn centre_value_on_axis() {
        let g = build_grids::<f64>(5, 5, 16).unwrap();
        let m = MediaCoefficients::constant(&g.grid, 0.0, 1.0, 1.0).unwrap();
        let b = make_beam([1.0, 0.0], tau_pi(2, 16), &g.angles, EntryRegion::Side(Side::Left)).unwrap();
        let u1 = ballistic(&g, &m, &b, Direction::Forward).unwrap();
        assert_relative_eq!(u1.data()[[0, 2, 2]], (-0.5f64).exp() * b.amplitude(), epsilon = 1e-14);
        // outside the cone
        assert_eq!(u1.data()[[4, 2, 2]], 0.0);
        assert!(u1.data().index_axis(ndarray::Axis(0), 8).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn smooth_medium_matches_projected_quadrature() {
        // sigma depends on x only, so the attenuation integral is the x-integral divided by |cos|
        let g = build_grids::<f64>(32, 8, 40).unwrap();
        let sig = g.grid.sample(|p| 1.0 + 0.5 * (std::f64::consts::PI * p[0]).sin());
        let m = MediaCoefficients::new(Array2::zeros((32, 8)), sig.clone(), 1.0).unwrap();
        let b = make_beam([1.0, 0.0], tau_pi(3, 40), &g.angles, EntryRegion::All).unwrap();
        let u1 = ballistic(&g, &m, &b, Direction::Forward).unwrap();
        let dx = g.grid.dx();
        for (i, j, k) in [(3, 4, 0), (10, 2, 1), (20, 5, 39), (31, 7, 2), (16, 4, 38)] {
            let th = g.angles.direction(k);
            let x = g.grid.cell_center(i, j);
            // x-extent reached going backwards before leaving through any side
            let t_left = (x[0]) / th[0];
            let t_y = if th[1] > 0.0 { x[1] / th[1] } else if th[1] < 0.0 { (x[1] - 1.0) / th[1] } else { f64::INFINITY };
            let t = t_left.min(t_y);
            let x_start = x[0] - t * th[0];
            let mut integral = 0.0;
            for c in 0..32 {
                let lo = (c as f64 * dx).max(x_start);
                let hi = ((c + 1) as f64 * dx).min(x[0]);
                if hi > lo {
                    integral += sig[[c, 0]] * (hi - lo);
                }
            }
            let expect = (-integral / th[0]).exp() * b.amplitude();
            assert!((u1.data()[[k, i, j]] - expect).abs() < 1e-6, "({i},{j},{k})");
        }
    }

    #[test]
    fn vanishing_scattering_leaves_tiny_remainder() {
        let g = build_grids::<f64>(12, 12, 16).unwrap();
        let m = MediaCoefficients::constant(&g.grid, 0.0, 1e-8, 1.0).unwrap();
        let b = make_beam([1.0, 0.0], tau_pi(2, 16), &g.angles, EntryRegion::Side(Side::Left)).unwrap();
        let opts = SolverOptions::default();
        let d = decompose(&g, &m, &b, Direction::Forward, BallisticMode::Exact, &opts).unwrap();
        assert!(d.remainder.field.sup_norm() <= 1e-6 * d.ballistic.sup_norm());
    }

    #[test]
    fn discrete_split_reproduces_direct_solve() {
        let g = build_grids::<f64>(10, 9, 16).unwrap();
        let sa = g.grid.sample(|p| 0.3 * p[1]);
        let ss = g.grid.sample(|p| 1.0 + 0.4 * p[0]);
        let m = MediaCoefficients::new(sa, ss, 0.5).unwrap();
        let opts = SolverOptions::default();
        let b = make_beam([0.0, 1.0], tau_pi(3, 16), &g.angles, EntryRegion::All).unwrap();
        for sign in [Direction::Forward, Direction::Adjoint] {
            let d = decompose(&g, &m, &b, sign, BallisticMode::Discrete, &opts).unwrap();
            let data = beam_data(&g, &b, sign).unwrap();
            let p = TransportProblem { media: m.clone(), boundary: data.clone(), source: VolumeSource::Zero, direction: sign };
            let direct = transport::solve(&g, &p, &opts).unwrap();
            let diff = d.total().scaled_add(-1.0, &direct.field).sup_norm();
            assert!(diff <= 10.0 * opts.tol * data.sup_norm(), "{sign:?}: {diff}");
        }
    }

    #[test]
    fn zero_adjoint_remainder_gives_zero_products() {
        let g = build_grids::<f64>(6, 6, 8).unwrap();
        let u = PhaseSpaceField::from_fn(&g, |k, i, j| (k + i + j) as f64);
        let z = PhaseSpaceField::zeros(&g);
        let p = angular_products(&g, &u, &u, &u, &z).unwrap();
        for j in 0..2 {
            assert!(p.mean_product[j][1].iter().all(|v| *v == 0.0));
            assert!(p.product_mean[j][1].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn closed_form_product_matches_field_product() {
        let g = build_grids::<f64>(9, 7, 24).unwrap();
        let ss = g.grid.sample(|p| 1.0 + 0.5 * p[0] * p[1]);
        let m = MediaCoefficients::new(Array2::zeros((9, 7)), ss, 0.5).unwrap();
        let b = make_beam([1.0, 0.0], tau_pi(3, 24), &g.angles, EntryRegion::All).unwrap();
        let u1 = ballistic(&g, &m, &b, Direction::Forward).unwrap();
        let v1 = ballistic(&g, &m, &b, Direction::Adjoint).unwrap();
        let direct = u1.product_average(&v1, &g.angles);
        let closed = ballistic_product(&g, &m, &b, &b).unwrap();
        for (a, c) in direct.iter().zip(closed.value.iter()) {
            assert_relative_eq!(*a, *c, max_relative = 1e-12);
        }
    }

    #[test]
    fn product_tends_to_chord_attenuation() {
        let n = 400;
        let g = build_grids::<f64>(5, 5, n).unwrap();
        let m = MediaCoefficients::constant(&g.grid, 0.0, 1.0, 1.0).unwrap();
        let b = make_beam([1.0, 0.0], tau_pi(2, n), &g.angles, EntryRegion::All).unwrap();
        let p = ballistic_product(&g, &m, &b, &b).unwrap();
        assert!((p.value[[2, 2]] - (-1.0f64).exp()).abs() < 1e-3);
        let lg = chord_log_attenuation(&g, &m, b.dir0).unwrap();
        assert_relative_eq!(lg[[2, 2]], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn average_ballistic_scales_like_root_h() {
        let n = 50;
        let g = build_grids::<f64>(32, 32, n).unwrap();
        let m = MediaCoefficients::constant(&g.grid, 0.0, 1.0, 1.0).unwrap();
        let sup = |cells: usize| {
            let b = make_beam([1.0, 0.0], tau_pi(cells, n), &g.angles, EntryRegion::All).unwrap();
            let u1 = ballistic(&g, &m, &b, Direction::Forward).unwrap();
            crate::field::sup_norm(&u1.average(&g.angles))
        };
        let ratio = sup(8) / sup(4);
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn adjoint_ballistic_mirrors_forward() {
        let (nx, ny, n) = (8, 6, 24);
        let g = build_grids::<f64>(nx, ny, n).unwrap();
        // symmetric under x -> 1 - x
        let ss = g.grid.sample(|p| 1.0 + (p[0] - 0.5).powi(2) + 0.3 * p[1]);
        let m = MediaCoefficients::new(Array2::zeros((nx, ny)), ss, 0.5).unwrap();
        let b = make_beam([1.0, 0.0], tau_pi(3, n), &g.angles, EntryRegion::All).unwrap();
        let u1 = ballistic(&g, &m, &b, Direction::Forward).unwrap();
        let v1 = ballistic(&g, &m, &b, Direction::Adjoint).unwrap();
        for k in 0..n {
            for i in 0..nx {
                for j in 0..ny {
                    let a = v1.data()[[k, i, j]];
                    let c = u1.data()[[(n - k) % n, nx - 1 - i, j]];
                    assert_relative_eq!(a, c, max_relative = 1e-12);
                }
            }
        }
    }
}
