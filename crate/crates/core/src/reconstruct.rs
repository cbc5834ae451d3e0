//! Recovery of `sigma / Kn` from the internal functional and the error
//! diagnostics of the scaling study.

use ndarray::Array2;

use crate::decomposition::BallisticProduct;
use crate::field::{BoundaryTrace, ScalarField};
use crate::geometry::{trace_ray, Geometry};
use crate::media::MediaCoefficients;
use crate::{Error, Real, Result};

/// Exponents below this are treated as underflow.
pub const LOG_FLOOR: f64 = -700.0;

/// A cellwise result with the cells that could not be evaluated.
#[derive(Clone, Debug)]
pub struct MaskedField<T> {
    /// `NaN` at masked cells.
    pub values: ScalarField<T>,
    pub mask: Array2<bool>,
}

impl<T: Real> MaskedField<T> {
    pub fn n_masked(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.n_masked() as f64 / self.mask.len() as f64
    }
}

/// Entry and exit faces of the line through cell `(i, j)` along direction `k`.
fn chord_faces<T: Real>(geom: &Geometry<T>, i: usize, j: usize, k: usize) -> Result<(usize, usize)> {
    let ray = trace_ray(&geom.grid, geom.grid.cell_center(i, j), geom.angles.direction(k))?;
    Ok((
        geom.face_at(ray.exit_minus.side, ray.exit_minus.point),
        geom.face_at(ray.exit_plus.side, ray.exit_plus.point),
    ))
}

/// `sign(a) exp(ln|a| + lg)` with the exponent floored; `None` on underflow of `lg`.
fn scaled<T: Real>(a: T, lg: T) -> Option<T> {
    if !(lg > T::lit(LOG_FLOOR)) {
        return None;
    }
    if a == T::zero() {
        return Some(T::zero());
    }
    let e = (a.abs().ln() + lg).max(T::lit(LOG_FLOOR)).min(T::lit(-LOG_FLOOR));
    Some(a.signum() * e.exp())
}

/// `sigma^ / Kn = -f(x - tau_- theta0, theta0) / A(f)(x + tau_+ theta0, theta0) * H(x)`.
///
/// `f` is the inflow trace, `af` the outflow trace of the forward solve and
/// `dir0` the quadrature index of `theta0`. Cells whose chord has no beam at
/// entry or an underflowing exit value are masked.
pub fn reconstruct_sigma<T: Real>(
    geom: &Geometry<T>,
    h: &ScalarField<T>,
    f: &BoundaryTrace<T>,
    af: &BoundaryTrace<T>,
    dir0: usize,
) -> Result<MaskedField<T>> {
    geom.check_field(h)?;
    f.check(geom)?;
    af.check(geom)?;
    let (nx, ny) = geom.grid.shape();
    let mut values = Array2::from_elem((nx, ny), T::nan());
    let mut mask = Array2::from_elem((nx, ny), true);
    for i in 0..nx {
        for j in 0..ny {
            let (entry, exit) = chord_faces(geom, i, j, dir0)?;
            let fin = f.get(entry, dir0);
            let out = af.get(exit, dir0);
            if !(fin > T::zero()) || !(out > T::zero()) || out.ln() < T::lit(LOG_FLOOR) {
                continue;
            }
            let lg = fin.ln() - out.ln();
            if let Some(v) = scaled(h[[i, j]], lg) {
                values[[i, j]] = -v;
                mask[[i, j]] = false;
            }
        }
    }
    Ok(MaskedField { values, mask })
}

/// `A(f)(exit) / f(entry)` along direction `dir0` through every cell.
pub fn attenuation_ratio<T: Real>(
    geom: &Geometry<T>,
    f: &BoundaryTrace<T>,
    af: &BoundaryTrace<T>,
    dir0: usize,
) -> Result<MaskedField<T>> {
    f.check(geom)?;
    af.check(geom)?;
    let (nx, ny) = geom.grid.shape();
    let mut values = Array2::from_elem((nx, ny), T::nan());
    let mut mask = Array2::from_elem((nx, ny), true);
    for i in 0..nx {
        for j in 0..ny {
            let (entry, exit) = chord_faces(geom, i, j, dir0)?;
            let fin = f.get(entry, dir0);
            if fin > T::zero() {
                values[[i, j]] = af.get(exit, dir0) / fin;
                mask[[i, j]] = false;
            }
        }
    }
    Ok(MaskedField { values, mask })
}

/// Relative error field and its L2 norm over the unmasked cells.
#[derive(Clone, Debug)]
pub struct ErrorReport<T> {
    pub field: MaskedField<T>,
    pub l2: T,
}

/// `Error = (Kn H + sigma <u1 v1>) / (sigma <u1 v1>)`, the leading term of
/// `Kn H` being `-sigma <u1 v1>`. The quotient is taken in log space.
pub fn relative_error_field<T: Real>(
    geom: &Geometry<T>,
    h: &ScalarField<T>,
    u1v1: &BallisticProduct<T>,
    media: &MediaCoefficients<T>,
) -> Result<ErrorReport<T>> {
    geom.check_field(h)?;
    geom.check_field(&u1v1.log)?;
    media.check_grid(&geom.grid)?;
    let kn = media.kn();
    let sig = media.total_sigma();
    let (nx, ny) = geom.grid.shape();
    let mut values = Array2::from_elem((nx, ny), T::nan());
    let mut mask = Array2::from_elem((nx, ny), true);
    let mut sum = T::zero();
    for i in 0..nx {
        for j in 0..ny {
            let lg = -(sig[[i, j]].ln() + u1v1.log[[i, j]]);
            if let Some(r) = scaled(kn * h[[i, j]], lg) {
                let e = r + T::one();
                values[[i, j]] = e;
                mask[[i, j]] = false;
                sum += e * e;
            }
        }
    }
    let l2 = (sum * geom.grid.cell_area()).sqrt();
    Ok(ErrorReport {
        field: MaskedField { values, mask },
        l2,
    })
}

/// `sup |s1 - s2| / sup |h1 - h2|` over cells unmasked in both reconstructions.
pub fn perturbation_ratio<T: Real>(
    s1: &MaskedField<T>,
    s2: &MaskedField<T>,
    h1: &ScalarField<T>,
    h2: &ScalarField<T>,
) -> Result<T> {
    if s1.values.dim() != s2.values.dim() || h1.dim() != h2.dim() || h1.dim() != s1.values.dim() {
        return Err(Error::InvalidArgument("fields of different shapes".into()));
    }
    let mut ds = T::zero();
    let mut dh = T::zero();
    for ((idx, a), b) in s1.values.indexed_iter().zip(s2.values.iter()) {
        if s1.mask[idx] || s2.mask[idx] {
            continue;
        }
        ds = ds.max((*a - *b).abs());
        dh = dh.max((h1[idx] - h2[idx]).abs());
    }
    if dh == T::zero() {
        return Err(Error::DegenerateFit("internal fields coincide".into()));
    }
    Ok(ds / dh)
}

/// Ordinary least squares `y = slope x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::DegenerateFit("x and y lengths differ".into()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::DegenerateFit(format!("{n} points")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite sample".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx <= f64::EPSILON * xs.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateFit("abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        n,
    })
}

/// One point of the (Kn, h) sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub kn: f64,
    pub h: f64,
    pub l2_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFits {
    /// `log ||Error||_2` against `1/Kn`, one fit per `h`.
    pub vs_inv_kn: Vec<(f64, LinearFit)>,
    /// `||Error||_2` against `h`, one fit per `Kn`.
    pub vs_h: Vec<(f64, LinearFit)>,
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup();
    v
}

/// Fits both scaling laws; every axis needs at least four points.
pub fn fit_scalings(points: &[SweepPoint]) -> Result<ScalingFits> {
    let hs = distinct(points.iter().map(|p| p.h));
    let kns = distinct(points.iter().map(|p| p.kn));
    let mut vs_inv_kn = Vec::new();
    for &h in &hs {
        let sel: Vec<&SweepPoint> = points.iter().filter(|p| p.h == h).collect();
        if sel.len() < 4 {
            return Err(Error::DegenerateFit(format!("h = {h}: {} Kn values, need 4", sel.len())));
        }
        let xs: Vec<f64> = sel.iter().map(|p| 1.0 / p.kn).collect();
        let ys: Vec<f64> = sel.iter().map(|p| p.l2_error.ln()).collect();
        vs_inv_kn.push((h, linear_fit(&xs, &ys)?));
    }
    let mut vs_h = Vec::new();
    for &kn in &kns {
        let sel: Vec<&SweepPoint> = points.iter().filter(|p| p.kn == kn).collect();
        if sel.len() < 4 {
            return Err(Error::DegenerateFit(format!("Kn = {kn}: {} h values, need 4", sel.len())));
        }
        let xs: Vec<f64> = sel.iter().map(|p| p.h).collect();
        let ys: Vec<f64> = sel.iter().map(|p| p.l2_error).collect();
        vs_h.push((kn, linear_fit(&xs, &ys)?));
    }
    Ok(ScalingFits { vs_inv_kn, vs_h })
}
