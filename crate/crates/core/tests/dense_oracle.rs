//! The sweep/source-iteration solver against a dense direct solve of the
//! same discrete system, assembled entry by entry.

use aoi_core::field::{BoundaryTrace, PhaseSpaceField};
use aoi_core::geometry::{build_grids, Geometry, Side};
use aoi_core::media::MediaCoefficients;
use aoi_core::transport::{apply_l, solve, Acceleration, Direction, SolverOptions, TransportProblem, VolumeSource};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn idx(nx: usize, ny: usize, k: usize, i: usize, j: usize) -> usize {
    (k * nx + i) * ny + j
}

/// Upwind discretization written out directly: for direction `d` (which is
/// `-theta` for adjoint problems), the upwind neighbour lies against `d`.
fn dense_solve(geom: &Geometry<f64>, p: &TransportProblem<f64>, src: &PhaseSpaceField<f64>) -> PhaseSpaceField<f64> {
    let (nx, ny) = geom.grid.shape();
    let nd = geom.n_dirs();
    let n = nd * nx * ny;
    let kn = p.media.kn();
    let (dx, dy) = (geom.grid.dx(), geom.grid.dy());
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let sign = if p.direction == Direction::Forward { 1.0 } else { -1.0 };
    for k in 0..nd {
        let t = geom.angles.direction(k);
        let d = [sign * t[0], sign * t[1]];
        let (ax, ay) = (d[0].abs() / dx, d[1].abs() / dy);
        for i in 0..nx {
            for j in 0..ny {
                let r = idx(nx, ny, k, i, j);
                let ss = p.media.sigma_s()[[i, j]];
                let sig = ss + kn * kn * p.media.sigma_a()[[i, j]];
                a[(r, r)] += ax + ay + sig / kn;
                for kk in 0..nd {
                    a[(r, idx(nx, ny, kk, i, j))] -= ss / kn / nd as f64;
                }
                rhs[r] += src.data()[[k, i, j]];
                let (ni, face_x) = if d[0] >= 0.0 {
                    (i.checked_sub(1), (Side::Left, j))
                } else {
                    ((i + 1 < nx).then_some(i + 1), (Side::Right, j))
                };
                match ni {
                    Some(ni) => a[(r, idx(nx, ny, k, ni, j))] -= ax,
                    None => rhs[r] += ax * p.boundary.get(geom.face_id(face_x.0, face_x.1), k),
                }
                let (nj, face_y) = if d[1] >= 0.0 {
                    (j.checked_sub(1), (Side::Bottom, i))
                } else {
                    ((j + 1 < ny).then_some(j + 1), (Side::Top, i))
                };
                match nj {
                    Some(nj) => a[(r, idx(nx, ny, k, i, nj))] -= ay,
                    None => rhs[r] += ay * p.boundary.get(geom.face_id(face_y.0, face_y.1), k),
                }
            }
        }
    }
    let x = a.lu().solve(&rhs).expect("nonsingular");
    PhaseSpaceField::from_fn(geom, |k, i, j| x[idx(nx, ny, k, i, j)])
}

fn random_problem(geom: &Geometry<f64>, rng: &mut ChaCha8Rng, direction: Direction) -> (TransportProblem<f64>, PhaseSpaceField<f64>) {
    let (nx, ny) = geom.grid.shape();
    let sa = ndarray::Array2::from_shape_fn((nx, ny), |_| rng.random_range(0.0..1.0));
    let ss = ndarray::Array2::from_shape_fn((nx, ny), |_| rng.random_range(0.5..2.0));
    let kn = rng.random_range(0.2..1.0);
    let media = MediaCoefficients::new(sa, ss, kn).unwrap();
    let set = if direction == Direction::Forward { &geom.inflow } else { &geom.outflow };
    let mut data = BoundaryTrace::zeros(geom);
    for e in &set.entries {
        data.set(e.face, e.dir, rng.random_range(0.0..1.0));
    }
    let (nx, ny, nd) = (nx, ny, geom.n_dirs());
    let src = PhaseSpaceField::from_array(ndarray::Array3::from_shape_fn((nd, nx, ny), |_| rng.random_range(0.0..0.5)));
    let p = TransportProblem { media, boundary: data, source: VolumeSource::Full(src.clone()), direction };
    (p, src)
}

#[test]
fn sweeps_match_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (nx, ny, nd) in [(4, 4, 8), (6, 6, 8), (5, 3, 12), (6, 5, 8)] {
        let geom = build_grids::<f64>(nx, ny, nd).unwrap();
        for direction in [Direction::Forward, Direction::Adjoint] {
            let (p, src) = random_problem(&geom, &mut rng, direction);
            let oracle = dense_solve(&geom, &p, &src);
            for acc in [Acceleration::Krylov, Acceleration::None] {
                let opts = SolverOptions::default().with_acceleration(acc).with_tol(1e-13);
                let sol = solve(&geom, &p, &opts).unwrap();
                assert!(sol.report.converged);
                let err = sol.field.scaled_add(-1.0, &oracle).sup_norm();
                assert!(err < 1e-8, "{nx}x{ny}x{nd} {direction:?} {acc:?}: {err}");
            }
        }
    }
}

#[test]
fn collision_operator_matches_dense_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let geom = build_grids::<f64>(4, 4, 8).unwrap();
    let (p, _) = random_problem(&geom, &mut rng, Direction::Forward);
    let u = PhaseSpaceField::from_array(ndarray::Array3::from_shape_fn((8, 4, 4), |_| rng.random_range(-0.1..0.1)));
    let (nx, ny, nd) = (4, 4, 8);
    let n = nd * nx * ny;
    let kn = p.media.kn();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for k in 0..nd {
        for i in 0..nx {
            for j in 0..ny {
                let r = idx(nx, ny, k, i, j);
                let ss = p.media.sigma_s()[[i, j]];
                let sig = ss + kn * kn * p.media.sigma_a()[[i, j]];
                l[(r, r)] -= sig / kn;
                for kk in 0..nd {
                    l[(r, idx(nx, ny, kk, i, j))] += ss / kn / nd as f64;
                }
            }
        }
    }
    let uv = DVector::from_fn(n, |r, _| {
        let (k, rest) = (r / (nx * ny), r % (nx * ny));
        u.data()[[k, rest / ny, rest % ny]]
    });
    let dense = &l * uv;
    let lu = apply_l(&geom, &u, &p.media).unwrap();
    for k in 0..nd {
        for i in 0..nx {
            for j in 0..ny {
                assert!((lu.data()[[k, i, j]] - dense[idx(nx, ny, k, i, j)]).abs() < 1e-14);
            }
        }
    }
}
