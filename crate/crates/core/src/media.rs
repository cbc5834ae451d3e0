//! Optical coefficients, acoustic modulation of them, and the angularly
//! concentrated beam used as boundary illumination.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Zip};

use crate::field::BoundaryTrace;
use crate::geometry::{AngularGrid, BoundarySet, Geometry, Side, SpatialGrid};
use crate::{Error, Real, Result};

/// Absorption and scattering sampled at cell centers (cellwise constant),
/// together with the Knudsen number.
#[derive(Clone, Debug, PartialEq)]
pub struct MediaCoefficients<T> {
    sigma_a: Array2<T>,
    sigma_s: Array2<T>,
    kn: T,
}

impl<T: Real> MediaCoefficients<T> {
    pub fn new(sigma_a: Array2<T>, sigma_s: Array2<T>, kn: T) -> Result<Self> {
        if sigma_a.dim() != sigma_s.dim() {
            let (a, b) = sigma_a.dim();
            let (c, d) = sigma_s.dim();
            return Err(Error::GridMismatch {
                expected: (a, b, 0),
                got: (c, d, 0),
            });
        }
        if !(kn > T::zero()) || !kn.is_finite() {
            return Err(Error::InvalidArgument(format!("Knudsen number must be positive, got {kn}")));
        }
        if sigma_s.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::Positivity("scattering must be finite and positive".into()));
        }
        if sigma_a.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::Positivity("absorption must be finite and nonnegative".into()));
        }
        Ok(Self {
            sigma_a,
            sigma_s,
            kn,
        })
    }

    pub fn constant(grid: &SpatialGrid<T>, sigma_a: T, sigma_s: T, kn: T) -> Result<Self> {
        let shape = grid.shape();
        Self::new(
            Array2::from_elem(shape, sigma_a),
            Array2::from_elem(shape, sigma_s),
            kn,
        )
    }

    pub fn sigma_a(&self) -> &Array2<T> {
        &self.sigma_a
    }

    pub fn sigma_s(&self) -> &Array2<T> {
        &self.sigma_s
    }

    pub fn kn(&self) -> T {
        self.kn
    }

    pub fn shape(&self) -> (usize, usize) {
        self.sigma_s.dim()
    }

    pub fn with_kn(&self, kn: T) -> Result<Self> {
        Self::new(self.sigma_a.clone(), self.sigma_s.clone(), kn)
    }

    /// `sigma = sigma_s + Kn^2 sigma_a`, recomputed on every call.
    pub fn total_sigma(&self) -> Array2<T> {
        let kn2 = self.kn * self.kn;
        Zip::from(&self.sigma_s)
            .and(&self.sigma_a)
            .map_collect(|&s, &a| s + kn2 * a)
    }

    pub fn sigma_s_min(&self) -> T {
        self.sigma_s.iter().fold(T::infinity(), |m, v| m.min(*v))
    }

    pub fn sigma_s_max(&self) -> T {
        self.sigma_s.iter().fold(T::zero(), |m, v| m.max(*v))
    }

    pub fn check_grid(&self, grid: &SpatialGrid<T>) -> Result<()> {
        grid.check_field(&self.sigma_s)
    }
}

pub fn total_sigma<T: Real>(m: &MediaCoefficients<T>) -> Array2<T> {
    m.total_sigma()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Cos,
    /// Quarter-period shifted acoustic wave; needed for the odd part of the spectrum.
    Sin,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Cos => "cos",
            Phase::Sin => "sin",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "cos" => Some(Phase::Cos),
            "sin" => Some(Phase::Sin),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulationParams<T> {
    pub eps: T,
    pub q: [T; 2],
    pub phase: Phase,
}

impl<T: Real> ModulationParams<T> {
    pub fn new(eps: T, q: [T; 2], phase: Phase) -> Self {
        Self { eps, q, phase }
    }

    /// `cos(q . x)` or `sin(q . x)`.
    pub fn osc(&self, x: [T; 2]) -> T {
        let arg = self.q[0] * x[0] + self.q[1] * x[1];
        match self.phase {
            Phase::Cos => arg.cos(),
            Phase::Sin => arg.sin(),
        }
    }

    /// `1 + eps osc(q . x)` at every cell center.
    pub fn factor(&self, grid: &SpatialGrid<T>) -> Array2<T> {
        grid.sample(|x| T::one() + self.eps * self.osc(x))
    }
}

/// Multiplies both coefficients by `1 + eps osc(q . x)`.
pub fn modulate<T: Real>(
    m: &MediaCoefficients<T>,
    grid: &SpatialGrid<T>,
    p: &ModulationParams<T>,
) -> Result<MediaCoefficients<T>> {
    m.check_grid(grid)?;
    if !(p.eps >= T::zero()) {
        return Err(Error::InvalidArgument(format!("eps must be nonnegative, got {}", p.eps)));
    }
    let guard = m.sigma_s_min() / m.sigma_s_max();
    if p.eps > T::zero() && p.eps >= guard {
        return Err(Error::Positivity(format!(
            "eps = {} must stay below min/max scattering ratio {guard}",
            p.eps
        )));
    }
    let factor = p.factor(grid);
    let sigma_a = &factor * m.sigma_a();
    let sigma_s = &factor * m.sigma_s();
    MediaCoefficients::new(sigma_a, sigma_s, m.kn())
}

/// Analytic coefficient profiles addressable by name from configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum Profile<T> {
    Constant(T),
    /// `base + amplitude * exp(-|x - center|^2 / (2 width^2))`
    GaussianBump {
        base: T,
        amplitude: T,
        center: [T; 2],
        width: T,
    },
    /// `base` plus `contrast` inside two discs of radius `radius`.
    TwoInclusions {
        base: T,
        contrast: T,
        radius: T,
        centers: [[T; 2]; 2],
    },
}

impl<T: Real> Profile<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Constant(_) => "constant",
            Profile::GaussianBump { .. } => "gaussian-bump",
            Profile::TwoInclusions { .. } => "two-inclusions",
        }
    }

    pub fn eval(&self, x: [T; 2]) -> T {
        match *self {
            Profile::Constant(c) => c,
            Profile::GaussianBump {
                base,
                amplitude,
                center,
                width,
            } => {
                let r2 = (x[0] - center[0]).powi(2) + (x[1] - center[1]).powi(2);
                base + amplitude * (-r2 / (T::lit(2.0) * width * width)).exp()
            }
            Profile::TwoInclusions {
                base,
                contrast,
                radius,
                centers,
            } => {
                let inside = centers
                    .iter()
                    .any(|c| (x[0] - c[0]).hypot(x[1] - c[1]) < radius);
                if inside {
                    base + contrast
                } else {
                    base
                }
            }
        }
    }

    pub fn sample(&self, grid: &SpatialGrid<T>) -> Array2<T> {
        grid.sample(|x| self.eval(x))
    }
}

/// Reads a coefficient grid file: a header row `nx,ny,Lx,Ly`, then `ny` rows
/// of `nx` values, bottom row first.
pub fn read_field_csv<T: Real>(path: &Path) -> Result<(SpatialGrid<T>, Array2<T>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, format!("{other:?}")),
        })?;
    let mut rows = rdr.records();
    let header = rows
        .next()
        .ok_or_else(|| Error::parse(path, "empty file"))?
        .map_err(|e| Error::parse(path, e.to_string()))?;
    if header.len() != 4 {
        return Err(Error::parse(path, "header must be nx,ny,Lx,Ly"));
    }
    let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(path, format!("{s:?}: {e}")));
    let parse_f64 = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, format!("{s:?}: {e}")));
    let nx = parse_usize(&header[0])?;
    let ny = parse_usize(&header[1])?;
    let lx = parse_f64(&header[2])?;
    let ly = parse_f64(&header[3])?;
    let grid = SpatialGrid::new([T::zero(); 2], [T::lit(lx), T::lit(ly)], nx, ny)?;
    let mut values = Vec::with_capacity(nx * ny);
    for rec in rows {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        for tok in rec.iter().filter(|t| !t.is_empty()) {
            values.push(parse_f64(tok)?);
        }
    }
    if values.len() != nx * ny {
        return Err(Error::parse(
            path,
            format!("expected {} values, found {}", nx * ny, values.len()),
        ));
    }
    let field = Array2::from_shape_fn((nx, ny), |(i, j)| T::lit(values[j * nx + i]));
    Ok((grid, field))
}

pub fn write_field_csv<T: Real>(path: &Path, grid: &SpatialGrid<T>, field: &Array2<T>) -> Result<()> {
    grid.check_field(field)?;
    let e = grid.extent();
    let mut s = format!("{},{},{},{}\n", grid.nx(), grid.ny(), e[0], e[1]);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", field[[i, j]]);
        }
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Boundary faces through which a beam may enter (or, for adjoint data, be received).
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryRegion {
    All,
    Side(Side),
    Faces(Vec<usize>),
}

impl EntryRegion {
    /// The single face whose half-open extent contains the boundary point `p`.
    pub fn point<T: Real>(geom: &Geometry<T>, p: [T; 2]) -> Result<Self> {
        let o = geom.grid.origin();
        let e = geom.grid.extent();
        let tol = T::lit(1e-9) * (e[0] + e[1]);
        let side = if (p[0] - o[0]).abs() <= tol {
            Side::Left
        } else if (p[0] - o[0] - e[0]).abs() <= tol {
            Side::Right
        } else if (p[1] - o[1]).abs() <= tol {
            Side::Bottom
        } else if (p[1] - o[1] - e[1]).abs() <= tol {
            Side::Top
        } else {
            return Err(Error::InvalidArgument(format!(
                "entry point ({}, {}) is not on the boundary",
                p[0], p[1]
            )));
        };
        Ok(EntryRegion::Faces(vec![geom.face_at(side, p)]))
    }

    pub fn contains<T: Real>(&self, geom: &Geometry<T>, face: usize) -> bool {
        match self {
            EntryRegion::All => true,
            EntryRegion::Side(s) => geom.face_side(face).0 == *s,
            EntryRegion::Faces(fs) => fs.contains(&face),
        }
    }
}

/// Piecewise-constant-in-angle beam `c h^{-1/2}` on the arc `|theta - theta0| < h`.
///
/// `theta0` is snapped to the nearest quadrature direction and `c` is set from
/// the discrete quadrature so that the normalized average of `f^2` is exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamSource<T> {
    pub theta0: [T; 2],
    pub dir0: usize,
    pub h: T,
    pub c_norm: T,
    /// Direction indices inside the cone, in increasing order.
    pub support: Vec<usize>,
    pub region: EntryRegion,
    value: T,
}

impl<T: Real> BeamSource<T> {
    /// Beam amplitude `c_norm h^{-1/2}` on the cone.
    pub fn amplitude(&self) -> T {
        self.value
    }

    pub fn in_cone(&self, dir: usize) -> bool {
        self.support.binary_search(&dir).is_ok()
    }

    /// Angular profile value for direction `dir`.
    pub fn angular_value(&self, dir: usize) -> T {
        if self.in_cone(dir) {
            self.value
        } else {
            T::zero()
        }
    }

    /// Beam datum at boundary pair `(face, dir)`; callers pass pairs from the relevant set.
    pub fn value_at(&self, geom: &Geometry<T>, face: usize, dir: usize) -> T {
        if self.region.contains(geom, face) {
            self.angular_value(dir)
        } else {
            T::zero()
        }
    }

    pub fn with_region(&self, region: EntryRegion) -> Self {
        Self {
            region,
            ..self.clone()
        }
    }
}

/// Builds the beam. `h` must span at least two angular cells.
pub fn make_beam<T: Real>(
    theta0: [T; 2],
    h: T,
    angles: &AngularGrid<T>,
    region: EntryRegion,
) -> Result<BeamSource<T>> {
    let norm = theta0[0].hypot(theta0[1]);
    if !(norm > T::zero()) {
        return Err(Error::InvalidArgument("theta0 must be nonzero".into()));
    }
    let theta0 = [theta0[0] / norm, theta0[1] / norm];
    let spacing = angles.spacing();
    if !(h >= T::lit(2.0) * spacing * T::lit(1.0 - 1e-12)) {
        return Err(Error::BeamResolution(format!(
            "h = {h} spans fewer than 2 angular cells of width {spacing}; raise n_dirs to at least {}",
            (T::lit(4.0) * T::PI() / h).ceil()
        )));
    }
    let dir0 = angles.nearest(theta0);
    // arc distance on the quadrature: offset * spacing < h, with a relative guard
    // so that h equal to a whole number of cells excludes the boundary direction
    let cutoff = h * T::lit(1.0 - 1e-12);
    let support: Vec<usize> = (0..angles.len())
        .filter(|&k| T::from_usize_lossy(angles.index_distance(k, dir0)) * spacing < cutoff)
        .collect();
    let n = T::from_usize_lossy(angles.len());
    let m = T::from_usize_lossy(support.len());
    let value = (n / m).sqrt();
    Ok(BeamSource {
        theta0: angles.direction(dir0),
        dir0,
        h,
        c_norm: value * h.sqrt(),
        support,
        region,
        value,
    })
}

/// Evaluates the beam on a boundary set (inflow for `f`, outflow for `g`).
pub fn beam_trace<T: Real>(
    b: &BeamSource<T>,
    geom: &Geometry<T>,
    set: &BoundarySet<T>,
) -> Result<BoundaryTrace<T>> {
    if let EntryRegion::Faces(fs) = &b.region {
        if let Some(bad) = fs.iter().find(|&&f| f >= geom.n_faces()) {
            return Err(Error::InvalidArgument(format!("face {bad} outside grid")));
        }
    }
    let mut out = BoundaryTrace::zeros(geom);
    let mut any = false;
    for e in &set.entries {
        let v = b.value_at(geom, e.face, e.dir);
        if v != T::zero() {
            out.set(e.face, e.dir, v);
            any = true;
        }
    }
    if !any {
        return Err(Error::EmptyBeamSupport);
    }
    Ok(out)
}
