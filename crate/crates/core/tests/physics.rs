//! Scaling and limit behaviour on moderately sized grids.

use std::f64::consts::PI;

use aoi_core::decomposition::{angular_products, ballistic_product, beam_data, chord_log_attenuation, decompose, BallisticMode};
use aoi_core::field::{sup_norm, BoundaryTrace};
use aoi_core::geometry::{build_grids, Geometry, Side};
use aoi_core::media::{make_beam, EntryRegion, MediaCoefficients, Profile};
use aoi_core::reconstruct::attenuation_ratio;
use aoi_core::transport::{check_apriori_bound, solve, Direction, SolverOptions, TransportProblem, VolumeSource};

fn cells(c: usize, nd: usize) -> f64 {
    c as f64 * 2.0 * PI / nd as f64
}

fn aligned_deviation(geom: &Geometry<f64>, kn: f64, h: f64) -> f64 {
    let m = MediaCoefficients::constant(&geom.grid, 0.0, 1.0, kn).unwrap();
    let b = make_beam([1.0, 0.0], h, &geom.angles, EntryRegion::All).unwrap();
    let f = beam_data(geom, &b, Direction::Forward).unwrap();
    let u = solve(geom, &TransportProblem::forward(m, f.clone()), &SolverOptions::default()).unwrap();
    let r = attenuation_ratio(geom, &f, &u.albedo(geom), b.dir0).unwrap();
    let n = geom.grid.nx();
    (r.values[[n / 2, n / 2]] - (-1.0 / kn).exp()).abs()
}

#[test]
fn aligned_attenuation_ratio_deviation_is_first_order_in_h() {
    let nd = 100;
    let geom = build_grids::<f64>(64, 64, nd).unwrap();
    for kn in [1.0, 0.5] {
        let devs: Vec<f64> = [2, 4, 8].iter().map(|&c| aligned_deviation(&geom, kn, cells(c, nd))).collect();
        for (d, c) in devs.iter().zip([2, 4, 8]) {
            assert!(*d <= 0.25 * cells(c, nd) / (kn * kn), "Kn {kn}, {c} cells: {d}");
        }
        for w in devs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((0.375..=0.625).contains(&ratio), "Kn {kn}: halving ratio {ratio}");
        }
    }
}

#[test]
fn near_void_medium_transmits_the_beam() {
    let geom = build_grids::<f64>(32, 32, 40).unwrap();
    let m = MediaCoefficients::constant(&geom.grid, 0.0, 1e-6, 1.0).unwrap();
    let b = make_beam([1.0, 0.0], cells(2, 40), &geom.angles, EntryRegion::Side(Side::Left)).unwrap();
    let f = beam_data(&geom, &b, Direction::Forward).unwrap();
    let u = solve(&geom, &TransportProblem::forward(m, f.clone()), &SolverOptions::default()).unwrap();
    let af = u.albedo(&geom);
    for j in 0..32 {
        let exit = af.get(geom.face_id(Side::Right, j), b.dir0);
        assert!((exit / b.amplitude() - 1.0).abs() < 1e-5, "row {j}: {exit}");
    }
}

#[test]
fn apriori_ratio_stays_bounded_across_kn() {
    let nd = 50;
    let geom = build_grids::<f64>(32, 32, nd).unwrap();
    let b = make_beam([1.0, 0.0], cells(2, nd), &geom.angles, EntryRegion::All).unwrap();
    let f = beam_data(&geom, &b, Direction::Forward).unwrap();
    let mut ratios = Vec::new();
    for k in 0..5 {
        let kn = 2f64.powi(-k);
        let m = MediaCoefficients::constant(&geom.grid, 0.0, 1.0, kn).unwrap();
        let p = TransportProblem::forward(m, f.clone());
        let u = solve(&geom, &p, &SolverOptions::default()).unwrap();
        assert!(u.report.converged);
        ratios.push(check_apriori_bound(&u.field, &p));
    }
    // with S = 0 the maximum principle gives ratio <= Kn^2
    for (k, r) in ratios.iter().enumerate() {
        assert!(*r <= 4f64.powi(-(k as i32)) * (1.0 + 1e-9), "{ratios:?}");
    }

    let m = MediaCoefficients::constant(&geom.grid, 0.1, 1.0, 0.5).unwrap();
    let src = VolumeSource::Isotropic(ndarray::Array2::from_elem((32, 32), 1.0));
    let p = TransportProblem::forward(m, BoundaryTrace::zeros(&geom)).with_source(src);
    let u = solve(&geom, &p, &SolverOptions::default()).unwrap();
    let r = check_apriori_bound(&u.field, &p);
    assert!(r.is_finite() && r > 0.0);
}

#[test]
fn accelerated_iterations_stay_small_in_diffusive_regime() {
    let geom = build_grids::<f64>(64, 64, 50).unwrap();
    let m = MediaCoefficients::constant(&geom.grid, 0.0, 1.0, 1.0 / 16.0).unwrap();
    let b = make_beam([1.0, 0.0], cells(2, 50), &geom.angles, EntryRegion::point(&geom, [0.0, 0.5]).unwrap()).unwrap();
    let f = beam_data(&geom, &b, Direction::Forward).unwrap();
    let u = solve(&geom, &TransportProblem::forward(m, f), &SolverOptions::default()).unwrap();
    assert!(u.report.converged);
    assert!(u.report.iterations <= 200, "{}", u.report.iterations);
}

#[test]
fn plain_iteration_count_grows_as_kn_decreases() {
    let geom = build_grids::<f64>(16, 16, 16).unwrap();
    let b = make_beam([1.0, 0.0], cells(2, 16), &geom.angles, EntryRegion::All).unwrap();
    let f = beam_data(&geom, &b, Direction::Forward).unwrap();
    let opts = SolverOptions::default().with_acceleration(aoi_core::transport::Acceleration::None);
    let counts: Vec<usize> = [1.0, 0.5, 0.25]
        .iter()
        .map(|&kn| {
            let m = MediaCoefficients::constant(&geom.grid, 0.0, 1.0, kn).unwrap();
            solve(&geom, &TransportProblem::forward(m, f.clone()), &opts).unwrap().report.iterations
        })
        .collect();
    assert!(counts[0] < counts[1] && counts[1] < counts[2], "{counts:?}");
}

/// `|<u1 v1> - e^{-int sigma / Kn}| <= C (h / Kn) e^{-int sigma / Kn}` on the
/// central beam row for a smooth bump medium; `C` frozen from a first run.
#[test]
fn ballistic_product_follows_chord_attenuation() {
    const C_FROZEN: f64 = 0.08;
    let nd = 100;
    let geom = build_grids::<f64>(64, 64, nd).unwrap();
    let bump = Profile::GaussianBump { base: 1.0, amplitude: 0.5, center: [0.5, 0.5], width: 0.2 };
    let ss = bump.sample(&geom.grid);
    let mut worst: f64 = 0.0;
    for kn in [1.0, 0.5, 0.25] {
        let m = MediaCoefficients::new(ndarray::Array2::zeros((64, 64)), ss.clone(), kn).unwrap();
        for c in [2, 4, 8] {
            let h = cells(c, nd);
            let b = make_beam([1.0, 0.0], h, &geom.angles, EntryRegion::All).unwrap();
            let p = ballistic_product(&geom, &m, &b, &b).unwrap();
            let lg = chord_log_attenuation(&geom, &m, b.dir0).unwrap();
            for i in 7..57 {
                let rel = ((p.log[[i, 32]] - lg[[i, 32]]).exp() - 1.0).abs();
                worst = worst.max(rel / (h / kn));
            }
        }
    }
    assert!(worst <= C_FROZEN, "fitted constant {worst}");
}

#[test]
fn remainder_products_scale_linearly_in_h() {
    let nd = 100;
    let geom = build_grids::<f64>(48, 48, nd).unwrap();
    let opts = SolverOptions::default();
    for kn in [1.0, 0.25] {
        let m = MediaCoefficients::constant(&geom.grid, 0.0, 1.0, kn).unwrap();
        let sups: Vec<(f64, f64)> = [2, 4]
            .iter()
            .map(|&c| {
                let b = make_beam([1.0, 0.0], cells(c, nd), &geom.angles, EntryRegion::All).unwrap();
                let du = decompose(&geom, &m, &b, Direction::Forward, BallisticMode::Exact, &opts).unwrap();
                let dv = decompose(&geom, &m, &b, Direction::Adjoint, BallisticMode::Exact, &opts).unwrap();
                let p = angular_products(&geom, &du.ballistic, &du.remainder.field, &dv.ballistic, &dv.remainder.field).unwrap();
                (sup_norm(&p.product_mean[1][1]), sup_norm(&p.product_mean[0][1]))
            })
            .collect();
        let r22 = sups[0].0 / sups[1].0;
        let r12 = sups[0].1 / sups[1].1;
        assert!((0.375..=0.625).contains(&r22), "Kn {kn}: {r22}");
        assert!((0.375..=0.625).contains(&r12), "Kn {kn}: {r12}");
    }
}
