//! Spatial grid, angular quadrature on the unit circle, the boundary
//! phase-space sets and exact ray tracing through the rectangle.

use ndarray::Array2;

use crate::{Error, Real, Result};

/// Uniform cell-centered grid on an axis-aligned rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid<T> {
    origin: [T; 2],
    extent: [T; 2],
    nx: usize,
    ny: usize,
}

impl<T: Real> SpatialGrid<T> {
    pub fn new(origin: [T; 2], extent: [T; 2], nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGrid(format!(
                "cell counts must be positive, got {nx}x{ny}"
            )));
        }
        if !(extent[0] > T::zero() && extent[1] > T::zero()) {
            return Err(Error::InvalidGrid("extent must be positive".into()));
        }
        Ok(Self {
            origin,
            extent,
            nx,
            ny,
        })
    }

    /// `[0,1]^2` with `nx` by `ny` cells.
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        Self::new([T::zero(); 2], [T::one(); 2], nx, ny)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn origin(&self) -> [T; 2] {
        self.origin
    }

    pub fn extent(&self) -> [T; 2] {
        self.extent
    }

    pub fn dx(&self) -> T {
        self.extent[0] / T::from_usize_lossy(self.nx)
    }

    pub fn dy(&self) -> T {
        self.extent[1] / T::from_usize_lossy(self.ny)
    }

    pub fn cell_area(&self) -> T {
        self.dx() * self.dy()
    }

    pub fn area(&self) -> T {
        self.extent[0] * self.extent[1]
    }

    /// Largest distance between two points of the domain.
    pub fn diameter(&self) -> T {
        self.extent[0].hypot(self.extent[1])
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [T; 2] {
        let half = T::lit(0.5);
        [
            self.origin[0] + (T::from_usize_lossy(i) + half) * self.dx(),
            self.origin[1] + (T::from_usize_lossy(j) + half) * self.dy(),
        ]
    }

    pub fn contains_strict(&self, p: [T; 2]) -> bool {
        (0..2).all(|a| p[a] > self.origin[a] && p[a] < self.origin[a] + self.extent[a])
    }

    /// Cell owning `p` under the half-open convention: a cell owns its lower
    /// and left edges. Points on the upper/right boundary map to the last cell.
    pub fn cell_containing(&self, p: [T; 2]) -> (usize, usize) {
        let i = axis_index(p[0] - self.origin[0], self.dx(), self.nx);
        let j = axis_index(p[1] - self.origin[1], self.dy(), self.ny);
        (i, j)
    }

    /// Samples `f` at every cell center.
    pub fn sample(&self, f: impl Fn([T; 2]) -> T) -> Array2<T> {
        Array2::from_shape_fn((self.nx, self.ny), |(i, j)| f(self.cell_center(i, j)))
    }

    pub fn check_field(&self, field: &Array2<T>) -> Result<()> {
        let (a, b) = field.dim();
        if (a, b) != (self.nx, self.ny) {
            return Err(Error::GridMismatch {
                expected: (self.nx, self.ny, 0),
                got: (a, b, 0),
            });
        }
        Ok(())
    }
}

fn axis_index<T: Real>(offset: T, h: T, n: usize) -> usize {
    let k = (offset / h).floor();
    if k < T::zero() {
        0
    } else {
        k.to_usize().unwrap_or(n - 1).min(n - 1)
    }
}

/// Uniform quadrature on the unit circle with directions at `2 pi k / n`.
///
/// The weights realize the normalized average, so they sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct AngularGrid<T> {
    directions: Vec<[T; 2]>,
    angles: Vec<T>,
    weight: T,
}

impl<T: Real> AngularGrid<T> {
    pub fn new(n_dirs: usize) -> Result<Self> {
        if n_dirs == 0 {
            return Err(Error::InvalidGrid("direction count must be positive".into()));
        }
        if n_dirs % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "direction count must be even for the adjoint reflection, got {n_dirs}"
            )));
        }
        let mut directions = Vec::with_capacity(n_dirs);
        let mut angles = Vec::with_capacity(n_dirs);
        for k in 0..n_dirs {
            let phi = 2.0 * std::f64::consts::PI * k as f64 / n_dirs as f64;
            // exact axis directions keep tangential boundary pairs out of both sets
            let d = if (4 * k) % n_dirs == 0 {
                match (4 * k) / n_dirs {
                    0 => [1.0, 0.0],
                    1 => [0.0, 1.0],
                    2 => [-1.0, 0.0],
                    _ => [0.0, -1.0],
                }
            } else {
                [phi.cos(), phi.sin()]
            };
            directions.push([T::lit(d[0]), T::lit(d[1])]);
            angles.push(T::lit(phi));
        }
        Ok(Self {
            directions,
            angles,
            weight: T::one() / T::from_usize_lossy(n_dirs),
        })
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn direction(&self, k: usize) -> [T; 2] {
        self.directions[k]
    }

    pub fn directions(&self) -> &[[T; 2]] {
        &self.directions
    }

    pub fn angle(&self, k: usize) -> T {
        self.angles[k]
    }

    pub fn weight(&self, _k: usize) -> T {
        self.weight
    }

    /// Angular spacing `2 pi / n`.
    pub fn spacing(&self) -> T {
        T::lit(2.0) * T::PI() / T::from_usize_lossy(self.len())
    }

    /// Index of `-theta_k`.
    pub fn reflect(&self, k: usize) -> usize {
        (k + self.len() / 2) % self.len()
    }

    /// Number of angular steps between two directions, going the short way.
    pub fn index_distance(&self, a: usize, b: usize) -> usize {
        let n = self.len();
        let d = if a > b { a - b } else { b - a };
        d.min(n - d)
    }

    /// Quadrature direction closest in angle to `theta`.
    pub fn nearest(&self, theta: [T; 2]) -> usize {
        let n = self.len();
        let mut phi = theta[1].atan2(theta[0]);
        if phi < T::zero() {
            phi = phi + T::lit(2.0) * T::PI();
        }
        let k = (phi / self.spacing()).round().to_usize().unwrap_or(0);
        k % n
    }

    /// Discrete normalized average over directions of `f(k)`.
    pub fn average(&self, f: impl Fn(usize) -> T) -> T {
        let mut acc = T::zero();
        for k in 0..self.len() {
            acc += self.weight * f(k);
        }
        acc
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn normal<T: Real>(self) -> [T; 2] {
        let (o, z) = (T::one(), T::zero());
        match self {
            Side::Left => [-o, z],
            Side::Right => [o, z],
            Side::Bottom => [z, -o],
            Side::Top => [z, o],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|side| side.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlowSign {
    /// `n . theta < 0`
    Inflow,
    /// `n . theta > 0`
    Outflow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEntry<T> {
    pub face: usize,
    pub dir: usize,
    pub measure: T,
    pub n_dot_theta: T,
}

/// Boundary phase-space set, with tangential pairs excluded.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySet<T> {
    pub sign: FlowSign,
    pub entries: Vec<BoundaryEntry<T>>,
}

impl<T> BoundarySet<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Spatial grid, angular grid and the two boundary sets, built once and
/// shared read-only by every solver.
#[derive(Clone, Debug)]
pub struct Geometry<T> {
    pub grid: SpatialGrid<T>,
    pub angles: AngularGrid<T>,
    pub inflow: BoundarySet<T>,
    pub outflow: BoundarySet<T>,
}

/// Grids on the unit square. Requires `nx, ny >= 2` and an even `n_dirs >= 8`.
pub fn build_grids<T: Real>(nx: usize, ny: usize, n_dirs: usize) -> Result<Geometry<T>> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 cells per axis, got {nx}x{ny}"
        )));
    }
    if n_dirs < 8 {
        return Err(Error::InvalidGrid(format!(
            "need at least 8 directions, got {n_dirs}"
        )));
    }
    Geometry::new(SpatialGrid::unit_square(nx, ny)?, AngularGrid::new(n_dirs)?)
}

impl<T: Real> Geometry<T> {
    pub fn new(grid: SpatialGrid<T>, angles: AngularGrid<T>) -> Result<Self> {
        let mut geom = Self {
            grid,
            angles,
            inflow: BoundarySet {
                sign: FlowSign::Inflow,
                entries: Vec::new(),
            },
            outflow: BoundarySet {
                sign: FlowSign::Outflow,
                entries: Vec::new(),
            },
        };
        let mut inflow = Vec::new();
        let mut outflow = Vec::new();
        for face in 0..geom.n_faces() {
            let measure = geom.face_measure(face);
            for dir in 0..geom.angles.len() {
                let v = geom.n_dot_theta(face, dir);
                let entry = BoundaryEntry {
                    face,
                    dir,
                    measure,
                    n_dot_theta: v,
                };
                if v < T::zero() {
                    inflow.push(entry);
                } else if v > T::zero() {
                    outflow.push(entry);
                }
            }
        }
        geom.inflow.entries = inflow;
        geom.outflow.entries = outflow;
        Ok(geom)
    }

    pub fn n_dirs(&self) -> usize {
        self.angles.len()
    }

    /// Faces are numbered left (by row), right (by row), bottom (by column), top (by column).
    pub fn n_faces(&self) -> usize {
        2 * (self.grid.nx() + self.grid.ny())
    }

    pub fn face_id(&self, side: Side, index: usize) -> usize {
        let (nx, ny) = self.grid.shape();
        match side {
            Side::Left => index,
            Side::Right => ny + index,
            Side::Bottom => 2 * ny + index,
            Side::Top => 2 * ny + nx + index,
        }
    }

    pub fn face_side(&self, face: usize) -> (Side, usize) {
        let (nx, ny) = self.grid.shape();
        if face < ny {
            (Side::Left, face)
        } else if face < 2 * ny {
            (Side::Right, face - ny)
        } else if face < 2 * ny + nx {
            (Side::Bottom, face - 2 * ny)
        } else {
            (Side::Top, face - 2 * ny - nx)
        }
    }

    pub fn face_measure(&self, face: usize) -> T {
        match self.face_side(face).0 {
            Side::Left | Side::Right => self.grid.dy(),
            Side::Bottom | Side::Top => self.grid.dx(),
        }
    }

    /// Cell adjacent to a boundary face.
    pub fn face_cell(&self, face: usize) -> (usize, usize) {
        let (nx, ny) = self.grid.shape();
        match self.face_side(face) {
            (Side::Left, j) => (0, j),
            (Side::Right, j) => (nx - 1, j),
            (Side::Bottom, i) => (i, 0),
            (Side::Top, i) => (i, ny - 1),
        }
    }

    pub fn face_center(&self, face: usize) -> [T; 2] {
        let o = self.grid.origin();
        let e = self.grid.extent();
        let (i, j) = self.face_cell(face);
        let c = self.grid.cell_center(i, j);
        match self.face_side(face).0 {
            Side::Left => [o[0], c[1]],
            Side::Right => [o[0] + e[0], c[1]],
            Side::Bottom => [c[0], o[1]],
            Side::Top => [c[0], o[1] + e[1]],
        }
    }

    /// Face on `side` whose half-open extent contains `p`.
    pub fn face_at(&self, side: Side, p: [T; 2]) -> usize {
        let (i, j) = self.grid.cell_containing(p);
        match side {
            Side::Left | Side::Right => self.face_id(side, j),
            Side::Bottom | Side::Top => self.face_id(side, i),
        }
    }

    pub fn n_dot_theta(&self, face: usize, dir: usize) -> T {
        let n = self.face_side(face).0.normal::<T>();
        let t = self.angles.direction(dir);
        n[0] * t[0] + n[1] * t[1]
    }

    pub fn check_field(&self, field: &Array2<T>) -> Result<()> {
        self.grid.check_field(field)
    }
}

/// Which part of a traced line to integrate over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RaySide {
    /// From `x` to the boundary along `+theta`.
    Plus,
    /// From `x` to the boundary along `-theta`.
    Minus,
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment<T> {
    pub cell: (usize, usize),
    pub length: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryHit<T> {
    pub side: Side,
    pub point: [T; 2],
}

/// Exit distances and the cell decomposition of the line through `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct RayTrace<T> {
    pub origin: [T; 2],
    pub direction: [T; 2],
    pub tau_plus: T,
    pub tau_minus: T,
    /// Ordered from `x` outward along `+theta`.
    pub segments_plus: Vec<Segment<T>>,
    /// Ordered from `x` outward along `-theta`.
    pub segments_minus: Vec<Segment<T>>,
    pub exit_plus: BoundaryHit<T>,
    pub exit_minus: BoundaryHit<T>,
    grid_shape: (usize, usize),
}

impl<T: Real> RayTrace<T> {
    pub fn chord_total(&self) -> T {
        self.tau_plus + self.tau_minus
    }

    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid_shape
    }
}

/// Distance from `x` to the boundary along `dir`, and the side that is hit.
/// Ties at a corner go to the vertical side.
fn exit_distance<T: Real>(grid: &SpatialGrid<T>, x: [T; 2], dir: [T; 2]) -> (T, Side) {
    let o = grid.origin();
    let e = grid.extent();
    let tx = if dir[0] > T::zero() {
        (o[0] + e[0] - x[0]) / dir[0]
    } else if dir[0] < T::zero() {
        (o[0] - x[0]) / dir[0]
    } else {
        T::infinity()
    };
    let ty = if dir[1] > T::zero() {
        (o[1] + e[1] - x[1]) / dir[1]
    } else if dir[1] < T::zero() {
        (o[1] - x[1]) / dir[1]
    } else {
        T::infinity()
    };
    if tx <= ty {
        let side = if dir[0] > T::zero() {
            Side::Right
        } else {
            Side::Left
        };
        (tx, side)
    } else {
        let side = if dir[1] > T::zero() { Side::Top } else { Side::Bottom };
        (ty, side)
    }
}

/// Parameters `t in (0, tau)` where the ray crosses grid lines of one axis.
fn crossings<T: Real>(x: T, d: T, lo: T, h: T, n: usize, tau: T, out: &mut Vec<T>) {
    if d == T::zero() {
        return;
    }
    let s = (x - lo) / h;
    if d > T::zero() {
        let mut m = s.floor() + T::one();
        while m <= T::from_usize_lossy(n) {
            let t = (lo + m * h - x) / d;
            if t >= tau {
                break;
            }
            if t > T::zero() {
                out.push(t);
            }
            m = m + T::one();
        }
    } else {
        let mut m = s.ceil() - T::one();
        while m >= T::zero() {
            let t = (lo + m * h - x) / d;
            if t >= tau {
                break;
            }
            if t > T::zero() {
                out.push(t);
            }
            m = m - T::one();
        }
    }
}

fn march<T: Real>(grid: &SpatialGrid<T>, x: [T; 2], dir: [T; 2], tau: T) -> Vec<Segment<T>> {
    let o = grid.origin();
    let mut tx = Vec::new();
    let mut ty = Vec::new();
    crossings(x[0], dir[0], o[0], grid.dx(), grid.nx(), tau, &mut tx);
    crossings(x[1], dir[1], o[1], grid.dy(), grid.ny(), tau, &mut ty);

    // merge the two increasing sequences
    let mut breaks = Vec::with_capacity(tx.len() + ty.len() + 2);
    breaks.push(T::zero());
    let (mut a, mut b) = (0, 0);
    while a < tx.len() || b < ty.len() {
        let next = if b >= ty.len() || (a < tx.len() && tx[a] <= ty[b]) {
            a += 1;
            tx[a - 1]
        } else {
            b += 1;
            ty[b - 1]
        };
        breaks.push(next);
    }
    breaks.push(tau);

    let tiny = T::lit(1e-14) * (tau + T::one());
    let half = T::lit(0.5);
    let mut segments = Vec::with_capacity(breaks.len());
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        if len <= tiny {
            // corner crossing: fold the sliver into the previous segment
            if let Some(last) = segments.last_mut() {
                let last: &mut Segment<T> = last;
                last.length = last.length + len.max(T::zero());
            }
            continue;
        }
        let t = (w[0] + w[1]) * half;
        let p = [x[0] + t * dir[0], x[1] + t * dir[1]];
        segments.push(Segment {
            cell: grid.cell_containing(p),
            length: len,
        });
    }
    segments
}

/// Traces the full line through an interior point `x` along `theta`.
pub fn trace_ray<T: Real>(grid: &SpatialGrid<T>, x: [T; 2], theta: [T; 2]) -> Result<RayTrace<T>> {
    if !grid.contains_strict(x) {
        return Err(Error::NotInterior([x[0].as_f64(), x[1].as_f64()]));
    }
    let norm = theta[0].hypot(theta[1]);
    if !(norm > T::zero()) || (norm - T::one()).abs() > T::lit(1e-6) {
        return Err(Error::InvalidArgument(format!(
            "direction must be a unit vector, |theta| = {norm}"
        )));
    }
    let back = [-theta[0], -theta[1]];
    let (tau_plus, side_plus) = exit_distance(grid, x, theta);
    let (tau_minus, side_minus) = exit_distance(grid, x, back);
    let segments_plus = march(grid, x, theta, tau_plus);
    let segments_minus = march(grid, x, back, tau_minus);
    Ok(RayTrace {
        origin: x,
        direction: theta,
        tau_plus,
        tau_minus,
        segments_plus,
        segments_minus,
        exit_plus: BoundaryHit {
            side: side_plus,
            point: [x[0] + tau_plus * theta[0], x[1] + tau_plus * theta[1]],
        },
        exit_minus: BoundaryHit {
            side: side_minus,
            point: [x[0] - tau_minus * theta[0], x[1] - tau_minus * theta[1]],
        },
        grid_shape: grid.shape(),
    })
}

/// Sum of `field(cell) * length` over the requested part of the ray.
/// Exact for cellwise-constant fields.
pub fn line_integral<T: Real>(field: &Array2<T>, ray: &RayTrace<T>, side: RaySide) -> Result<T> {
    if field.dim() != ray.grid_shape {
        let (a, b) = field.dim();
        return Err(Error::GridMismatch {
            expected: (ray.grid_shape.0, ray.grid_shape.1, 0),
            got: (a, b, 0),
        });
    }
    let sum = |segs: &[Segment<T>]| {
        segs.iter()
            .fold(T::zero(), |acc, s| acc + field[[s.cell.0, s.cell.1]] * s.length)
    };
    Ok(match side {
        RaySide::Plus => sum(&ray.segments_plus),
        RaySide::Minus => sum(&ray.segments_minus),
        RaySide::Full => sum(&ray.segments_plus) + sum(&ray.segments_minus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(n: usize) -> SpatialGrid<f64> {
        SpatialGrid::unit_square(n, n).unwrap()
    }

    #[test]
    fn uniform_weights_sum_to_one() {
        let g = build_grids::<f64>(2, 2, 8).unwrap();
        let total: f64 = (0..8).map(|k| g.angles.weight(k)).sum();
        assert_eq!(g.angles.weight(3), 0.125);
        assert_relative_eq!(total, 1.0, epsilon = 1e-15);
        for k in 0..8 {
            let d = g.angles.direction(k);
            assert_relative_eq!(d[0].hypot(d[1]), 1.0, epsilon = 1e-15);
            let r = g.angles.direction(g.angles.reflect(k));
            assert_relative_eq!(r[0], -d[0], epsilon = 1e-15);
            assert_relative_eq!(r[1], -d[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(build_grids::<f64>(4, 4, 7).is_err());
        assert!(build_grids::<f64>(4, 4, 6).is_err());
        assert!(build_grids::<f64>(1, 4, 8).is_err());
        assert!(build_grids::<f64>(4, 0, 8).is_err());
        assert!(AngularGrid::<f64>::new(0).is_err());
    }

    #[test]
    fn boundary_sets_by_enumeration() {
        let g = build_grids::<f64>(64, 64, 50).unwrap();
        // brute force: every (face, direction) pair classified by sign of n.theta
        let mut per_side_in = std::collections::HashMap::new();
        let (mut n_in, mut n_out, mut n_tan) = (0, 0, 0);
        for face in 0..g.n_faces() {
            let (side, _) = g.face_side(face);
            let n: [f64; 2] = side.normal();
            let mut count = 0;
            for k in 0..50 {
                let phi = 2.0 * std::f64::consts::PI * k as f64 / 50.0;
                let v = n[0] * phi.cos() + n[1] * phi.sin();
                if v.abs() < 1e-12 {
                    n_tan += 1;
                } else if v < 0.0 {
                    n_in += 1;
                    count += 1;
                } else {
                    n_out += 1;
                }
            }
            per_side_in.insert(side, count);
        }
        assert_eq!(g.n_faces(), 64 * 4);
        assert_eq!(g.inflow.len(), n_in);
        assert_eq!(g.outflow.len(), n_out);
        assert_eq!(g.inflow.len(), g.outflow.len());
        assert_eq!(n_in + n_out + n_tan, 256 * 50);
        assert_eq!(per_side_in[&Side::Left], 25);
        assert_eq!(per_side_in[&Side::Right], 25);
        assert_eq!(per_side_in[&Side::Bottom], 24);
        assert_eq!(per_side_in[&Side::Top], 24);
        assert!(g.inflow.entries.iter().all(|e| e.n_dot_theta < 0.0));
        assert!(g.outflow.entries.iter().all(|e| e.n_dot_theta > 0.0));
    }

    #[test]
    fn tangential_pairs_are_excluded() {
        let g = build_grids::<f64>(4, 4, 8).unwrap();
        // direction 0 is (1,0): tangential on bottom and top faces
        let bottom = g.face_id(Side::Bottom, 1);
        assert_eq!(g.n_dot_theta(bottom, 0), 0.0);
        assert!(!g.inflow.entries.iter().any(|e| e.face == bottom && e.dir == 0));
        assert!(!g.outflow.entries.iter().any(|e| e.face == bottom && e.dir == 0));
    }

    #[test]
    fn midpoint_rays() {
        let g = unit(8);
        let r = trace_ray(&g, [0.5, 0.5], [1.0, 0.0]).unwrap();
        assert_relative_eq!(r.tau_plus, 0.5);
        assert_relative_eq!(r.tau_minus, 0.5);
        assert_relative_eq!(r.chord_total(), 1.0);
        assert_eq!(r.exit_plus.side, Side::Right);
        assert_eq!(r.exit_minus.side, Side::Left);

        let r = trace_ray(&g, [0.25, 0.5], [0.0, 1.0]).unwrap();
        assert_relative_eq!(r.tau_plus, 0.5);
        assert_relative_eq!(r.tau_minus, 0.5);
    }

    #[test]
    fn diagonal_chord_matches_segments() {
        let g = unit(7);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = trace_ray(&g, [0.5, 0.5], [s, s]).unwrap();
        assert_relative_eq!(r.chord_total(), 2f64.sqrt(), epsilon = 1e-14);
        let sp: f64 = r.segments_plus.iter().map(|s| s.length).sum();
        let sm: f64 = r.segments_minus.iter().map(|s| s.length).sum();
        assert_relative_eq!(sp + sm, 2f64.sqrt(), max_relative = 1e-12);
        // the diagonal through cell corners visits only diagonal cells
        assert!(r
            .segments_plus
            .iter()
            .chain(&r.segments_minus)
            .all(|s| s.cell.0 == s.cell.1));
    }

    #[test]
    fn rejects_boundary_points() {
        let g = unit(4);
        assert!(trace_ray(&g, [0.0, 0.5], [1.0, 0.0]).is_err());
        assert!(trace_ray(&g, [0.5, 1.0], [1.0, 0.0]).is_err());
        assert!(trace_ray(&g, [0.5, 0.5], [2.0, 0.0]).is_err());
    }

    #[test]
    fn ray_on_grid_line_uses_half_open_cells() {
        let g = unit(4);
        // y = 0.5 is a grid line; the cell above owns it
        let r = trace_ray(&g, [0.1, 0.5], [1.0, 0.0]).unwrap();
        assert!(r.segments_plus.iter().all(|s| s.cell.1 == 2));
        assert_eq!(r.segments_plus.len(), 4);
        assert_eq!(r.segments_minus.len(), 1);
    }

    #[test]
    fn line_integrals() {
        let g = unit(8);
        let ones = Array2::from_elem((8, 8), 1.0);
        let r = trace_ray(&g, [0.5, 0.5], [1.0, 0.0]).unwrap();
        assert_relative_eq!(line_integral(&ones, &r, RaySide::Full).unwrap(), 1.0);
        assert_relative_eq!(line_integral(&ones, &r, RaySide::Minus).unwrap(), 0.5);

        let left = g.sample(|p| if p[0] < 0.5 { 2.0 } else { 0.0 });
        let v = line_integral(&left, &r, RaySide::Full).unwrap();
        // independent fine Riemann sum along the chord
        let n = 100_000;
        let riemann: f64 = (0..n)
            .map(|m| {
                let x = (m as f64 + 0.5) / n as f64;
                if x < 0.5 {
                    2.0 / n as f64
                } else {
                    0.0
                }
            })
            .sum();
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        assert_relative_eq!(v, riemann, epsilon = 1e-9);

        let wrong = Array2::from_elem((4, 8), 1.0);
        assert!(line_integral(&wrong, &r, RaySide::Full).is_err());
    }

    #[test]
    fn nearest_direction_snaps() {
        let a = AngularGrid::<f64>::new(50).unwrap();
        assert_eq!(a.nearest([1.0, 0.0]), 0);
        assert_eq!(a.nearest([-1.0, 0.0]), 25);
        assert_eq!(a.nearest([1.0, -1e-3]), 0);
        assert_eq!(a.index_distance(1, 49), 2);
    }
}
