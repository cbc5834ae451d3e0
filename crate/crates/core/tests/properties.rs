use aoi_core::field::{boundary_integral, inflow_power, BoundaryTrace};
use aoi_core::geometry::{build_grids, line_integral, trace_ray, Geometry, RaySide, SpatialGrid};
use aoi_core::media::{modulate, MediaCoefficients, ModulationParams, Phase};
use aoi_core::transport::{residual, solve, SolverOptions, TransportProblem};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_media(geom: &Geometry<f64>, seed: u64, absorbing: bool) -> MediaCoefficients<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = geom.grid.shape();
    let sa = Array2::from_shape_fn(shape, |_| if absorbing { rng.random_range(0.0..1.0) } else { 0.0 });
    let ss = Array2::from_shape_fn(shape, |_| rng.random_range(0.5..2.0));
    MediaCoefficients::new(sa, ss, rng.random_range(0.25..1.0)).unwrap()
}

fn random_data(geom: &Geometry<f64>, seed: u64, inflow: bool) -> BoundaryTrace<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let set = if inflow { &geom.inflow } else { &geom.outflow };
    let mut t = BoundaryTrace::zeros(geom);
    for e in &set.entries {
        t.set(e.face, e.dir, rng.random_range(0.0..1.0));
    }
    t
}

fn unit_vec(phi: f64) -> [f64; 2] {
    [phi.cos(), phi.sin()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversal_symmetry(x in 0.01f64..0.99, y in 0.01f64..0.99, phi in 0.0f64..std::f64::consts::TAU) {
        let grid = SpatialGrid::<f64>::unit_square(13, 9).unwrap();
        let t = unit_vec(phi);
        let a = trace_ray(&grid, [x, y], t).unwrap();
        let b = trace_ray(&grid, [x, y], [-t[0], -t[1]]).unwrap();
        prop_assert!((a.tau_plus - b.tau_minus).abs() <= 1e-12);
        prop_assert!((a.tau_minus - b.tau_plus).abs() <= 1e-12);
    }

    #[test]
    fn constant_line_integral_is_chord(x in 0.01f64..0.99, y in 0.01f64..0.99, phi in 0.0f64..std::f64::consts::TAU, c in 0.1f64..5.0) {
        let grid = SpatialGrid::<f64>::unit_square(11, 17).unwrap();
        let ray = trace_ray(&grid, [x, y], unit_vec(phi)).unwrap();
        let field = Array2::from_elem((11, 17), c);
        let full = line_integral(&field, &ray, RaySide::Full).unwrap();
        prop_assert!((full - c * ray.chord_total()).abs() <= 1e-12 * c * ray.chord_total().max(1.0));
        for segs in [&ray.segments_plus, &ray.segments_minus] {
            prop_assert!(segs.iter().all(|s| s.length >= 0.0));
        }
    }

    #[test]
    fn modulation_is_linear_in_eps(e1 in 0.0f64..0.1, e2 in 0.0f64..0.1, a in -3i32..=3, b in -3i32..=3, sin in any::<bool>()) {
        let geom = build_grids::<f64>(6, 5, 8).unwrap();
        let m = random_media(&geom, 3, true);
        let tp = std::f64::consts::TAU;
        let phase = if sin { Phase::Sin } else { Phase::Cos };
        let q = [tp * a as f64, tp * b as f64];
        let p = ModulationParams::new(e1 + e2, q, phase);
        let out = modulate(&m, &geom.grid, &p).unwrap();
        for ((i, j), v) in out.sigma_s().indexed_iter() {
            let osc = p.osc(geom.grid.cell_center(i, j));
            prop_assert!((v - m.sigma_s()[[i, j]] * (1.0 + (e1 + e2) * osc)).abs() <= 1e-15 * v.abs().max(1.0));
            let va = out.sigma_a()[[i, j]];
            prop_assert!((va - m.sigma_a()[[i, j]] * (1.0 + (e1 + e2) * osc)).abs() <= 1e-15 * va.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn solver_is_linear(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        let geom = build_grids::<f64>(7, 6, 12).unwrap();
        let m = random_media(&geom, seed, true);
        let f1 = random_data(&geom, seed ^ 1, true);
        let f2 = random_data(&geom, seed ^ 2, true);
        let opts = SolverOptions::default();
        let s = |f: BoundaryTrace<f64>| solve(&geom, &TransportProblem::forward(m.clone(), f), &opts).unwrap().field;
        let combined = s(f1.scale(alpha).add(&f2.scale(beta)));
        let lin = s(f1).data() * alpha + &(s(f2).data() * beta);
        let err = (combined.data() - &lin).iter().fold(0f64, |a, v| a.max(v.abs()));
        prop_assert!(err <= 1e-8 * (alpha.abs() + beta.abs()).max(1.0), "{}", err);
    }

    #[test]
    fn maximum_principle(seed in any::<u64>()) {
        let geom = build_grids::<f64>(8, 7, 16).unwrap();
        let m = random_media(&geom, seed, true);
        let f = random_data(&geom, seed ^ 5, true);
        let u = solve(&geom, &TransportProblem::forward(m, f.clone()), &SolverOptions::default()).unwrap();
        let top = f.sup_norm();
        prop_assert!(u.field.data().iter().all(|v| *v >= -1e-12 && *v <= top * (1.0 + 1e-9)));
    }

    #[test]
    fn green_identity_and_adjoint_residual(seed in any::<u64>()) {
        let geom = build_grids::<f64>(8, 7, 16).unwrap();
        let m = random_media(&geom, seed, true);
        let f = random_data(&geom, seed ^ 7, true);
        let g = random_data(&geom, seed ^ 9, false);
        let opts = SolverOptions::default();
        let fp = TransportProblem::forward(m.clone(), f.clone());
        let ap = TransportProblem::adjoint(m, g.clone());
        let u = solve(&geom, &fp, &opts).unwrap();
        let v = solve(&geom, &ap, &opts).unwrap();
        let pairing = boundary_integral(&geom, &u.boundary_values(&geom, &f), &v.boundary_values(&geom, &g));
        prop_assert!(pairing.abs() <= 10.0 * opts.tol * f.sup_norm() * g.sup_norm(), "{}", pairing);
        let r = residual(&geom, &ap, &v.field).unwrap();
        prop_assert!(r.sup_norm() <= 1e-7, "{}", r.sup_norm());
    }

    #[test]
    fn conservation_without_absorption(seed in any::<u64>()) {
        let geom = build_grids::<f64>(8, 7, 16).unwrap();
        let m = random_media(&geom, seed, false);
        let f = random_data(&geom, seed ^ 3, true);
        let u = solve(&geom, &TransportProblem::forward(m, f.clone()), &SolverOptions::default()).unwrap();
        let mut ones = BoundaryTrace::zeros(&geom);
        for set in [&geom.inflow, &geom.outflow] {
            for e in &set.entries {
                ones.set(e.face, e.dir, 1.0);
            }
        }
        let net = boundary_integral(&geom, &u.boundary_values(&geom, &f), &ones);
        prop_assert!(net.abs() <= 1e-8 * inflow_power(&geom, &f), "{}", net);
    }
}
