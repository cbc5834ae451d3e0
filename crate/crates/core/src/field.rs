//! Fields over the spatial grid, over phase space, and over the boundary.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Array3, ArrayView2, Zip};

use crate::geometry::{AngularGrid, Geometry};
use crate::{Error, Real, Result};

/// Cell-centered scalar field indexed `[i, j]` with `i` along x.
pub type ScalarField<T> = Array2<T>;

/// Photon density `u(x_cell, theta_k)`, stored as `[k, i, j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceField<T> {
    data: Array3<T>,
}

impl<T: Real> PhaseSpaceField<T> {
    pub fn zeros(geom: &Geometry<T>) -> Self {
        let (nx, ny) = geom.grid.shape();
        Self {
            data: Array3::zeros((geom.n_dirs(), nx, ny)),
        }
    }

    pub fn from_array(data: Array3<T>) -> Self {
        Self { data }
    }

    pub fn from_fn(geom: &Geometry<T>, f: impl Fn(usize, usize, usize) -> T) -> Self {
        let (nx, ny) = geom.grid.shape();
        Self {
            data: Array3::from_shape_fn((geom.n_dirs(), nx, ny), |(k, i, j)| f(k, i, j)),
        }
    }

    /// Angle-independent field.
    pub fn isotropic(geom: &Geometry<T>, values: &ScalarField<T>) -> Self {
        Self::from_fn(geom, |_, i, j| values[[i, j]])
    }

    pub fn data(&self) -> &Array3<T> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array3<T> {
        &mut self.data
    }

    pub fn into_array(self) -> Array3<T> {
        self.data
    }

    /// `(n_dirs, nx, ny)`
    pub fn dim(&self) -> (usize, usize, usize) {
        self.data.dim()
    }

    pub fn direction(&self, k: usize) -> ArrayView2<'_, T> {
        self.data.index_axis(ndarray::Axis(0), k)
    }

    pub fn check(&self, geom: &Geometry<T>) -> Result<()> {
        let (nx, ny) = geom.grid.shape();
        let expected = (geom.n_dirs(), nx, ny);
        if self.data.dim() != expected {
            return Err(Error::GridMismatch {
                expected,
                got: self.data.dim(),
            });
        }
        Ok(())
    }

    /// Discrete angular average, summed in direction order.
    pub fn average(&self, angles: &AngularGrid<T>) -> ScalarField<T> {
        let (_, nx, ny) = self.data.dim();
        let mut acc = Array2::zeros((nx, ny));
        for (k, slab) in self.data.outer_iter().enumerate() {
            let w = angles.weight(k);
            Zip::from(&mut acc).and(&slab).for_each(|a, &u| *a += w * u);
        }
        acc
    }

    /// `<u v>` over directions.
    pub fn product_average(&self, other: &Self, angles: &AngularGrid<T>) -> ScalarField<T> {
        let (_, nx, ny) = self.data.dim();
        let mut acc = Array2::zeros((nx, ny));
        for (k, (a, b)) in self.data.outer_iter().zip(other.data.outer_iter()).enumerate() {
            let w = angles.weight(k);
            Zip::from(&mut acc)
                .and(&a)
                .and(&b)
                .for_each(|s, &x, &y| *s += w * x * y);
        }
        acc
    }

    /// `u~(x, theta) = u(x, -theta)`
    pub fn reflect(&self, angles: &AngularGrid<T>) -> Self {
        let (n, nx, ny) = self.data.dim();
        let mut out = Array3::zeros((n, nx, ny));
        for k in 0..n {
            out.index_axis_mut(ndarray::Axis(0), angles.reflect(k))
                .assign(&self.data.index_axis(ndarray::Axis(0), k));
        }
        Self { data: out }
    }

    pub fn sup_norm(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled_add(&self, a: T, other: &Self) -> Self {
        Self {
            data: &self.data + &(&other.data * a),
        }
    }

    /// Writes the dump format: a first line `nx,ny,ndirs`, then one row per
    /// cell `(i, j)` (i outer) holding the values over all directions.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let (n, nx, ny) = self.data.dim();
        let mut s = format!("{nx},{ny},{n}\n");
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..n {
                    if k > 0 {
                        s.push(',');
                    }
                    let _ = write!(s, "{}", self.data[[k, i, j]]);
                }
                s.push('\n');
            }
        }
        s
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(path, "empty file"))?;
        let dims: Vec<usize> = header
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, format!("bad header: {e}")))?;
        let [nx, ny, n] = dims[..] else {
            return Err(Error::parse(path, "header must be nx,ny,ndirs"));
        };
        let mut data = Array3::zeros((n, nx, ny));
        for i in 0..nx {
            for j in 0..ny {
                let line = lines
                    .next()
                    .ok_or_else(|| Error::parse(path, format!("missing row for cell ({i},{j})")))?;
                let vals: Vec<f64> = line
                    .split(',')
                    .map(|t| t.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, format!("cell ({i},{j}): {e}")))?;
                if vals.len() != n {
                    return Err(Error::parse(
                        path,
                        format!("cell ({i},{j}) has {} values, expected {n}", vals.len()),
                    ));
                }
                for (k, v) in vals.into_iter().enumerate() {
                    data[[k, i, j]] = T::lit(v);
                }
            }
        }
        Ok(Self { data })
    }
}

/// Values on boundary phase space, stored densely as `[face, direction]`.
///
/// Which entries are meaningful depends on use: inflow data lives on
/// `Gamma_-`, albedo output on `Gamma_+`; the rest stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryTrace<T> {
    values: Array2<T>,
}

impl<T: Real> BoundaryTrace<T> {
    pub fn zeros(geom: &Geometry<T>) -> Self {
        Self {
            values: Array2::zeros((geom.n_faces(), geom.n_dirs())),
        }
    }

    pub fn from_array(values: Array2<T>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn get(&self, face: usize, dir: usize) -> T {
        self.values[[face, dir]]
    }

    pub fn set(&mut self, face: usize, dir: usize, v: T) {
        self.values[[face, dir]] = v;
    }

    pub fn check(&self, geom: &Geometry<T>) -> Result<()> {
        let expected = (geom.n_faces(), geom.n_dirs());
        if self.values.dim() != expected {
            let got = self.values.dim();
            return Err(Error::GridMismatch {
                expected: (expected.0, expected.1, 0),
                got: (got.0, got.1, 0),
            });
        }
        Ok(())
    }

    /// Moves `(face, theta)` to `(face, -theta)`, swapping inflow and outflow sets.
    pub fn reflect(&self, angles: &AngularGrid<T>) -> Self {
        let (nf, n) = self.values.dim();
        let mut out = Array2::zeros((nf, n));
        for f in 0..nf {
            for k in 0..n {
                out[[f, angles.reflect(k)]] = self.values[[f, k]];
            }
        }
        Self { values: out }
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, a: T) -> Self {
        Self {
            values: &self.values * a,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            values: &self.values + &other.values,
        }
    }
}

/// `int_{dOmega x S^1} (theta . n) a b dS dtheta` with the unnormalized angular
/// measure `2 pi w_k`, summed over every non-tangential boundary pair.
pub fn boundary_integral<T: Real>(geom: &Geometry<T>, a: &BoundaryTrace<T>, b: &BoundaryTrace<T>) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    let mut acc = T::zero();
    for set in [&geom.inflow, &geom.outflow] {
        for e in &set.entries {
            let w = two_pi * geom.angles.weight(e.dir);
            acc += e.measure * w * e.n_dot_theta * a.get(e.face, e.dir) * b.get(e.face, e.dir);
        }
    }
    acc
}

/// `int |theta . n| f dS dtheta` over the inflow set.
pub fn inflow_power<T: Real>(geom: &Geometry<T>, f: &BoundaryTrace<T>) -> T {
    let two_pi = T::lit(2.0) * T::PI();
    geom.inflow.entries.iter().fold(T::zero(), |acc, e| {
        acc + e.measure * two_pi * geom.angles.weight(e.dir) * e.n_dot_theta.abs() * f.get(e.face, e.dir)
    })
}

pub fn sup_norm<T: Real>(field: &ScalarField<T>) -> T {
    field.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// `(int |f|^2 dx)^{1/2}` with the cell-area quadrature.
pub fn l2_norm<T: Real>(field: &ScalarField<T>, cell_area: T) -> T {
    (field.iter().fold(T::zero(), |acc, v| acc + *v * *v) * cell_area).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_grids;

    #[test]
    fn average_of_constant_is_constant() {
        let g = build_grids::<f64>(3, 4, 8).unwrap();
        let u = PhaseSpaceField::from_fn(&g, |_, _, _| 2.5);
        let avg = u.average(&g.angles);
        assert!(avg.iter().all(|v| (v - 2.5).abs() < 1e-14));
    }

    #[test]
    fn reflect_is_an_involution() {
        let g = build_grids::<f64>(3, 3, 10).unwrap();
        let u = PhaseSpaceField::from_fn(&g, |k, i, j| (k * 100 + i * 10 + j) as f64);
        assert_eq!(u.reflect(&g.angles).reflect(&g.angles), u);
        assert_eq!(u.reflect(&g.angles).data()[[5, 1, 2]], u.data()[[0, 1, 2]]);
        let mut b = BoundaryTrace::zeros(&g);
        b.set(2, 1, 3.0);
        assert_eq!(b.reflect(&g.angles).get(2, 6), 3.0);
    }

    #[test]
    fn csv_dump_roundtrip() {
        let g = build_grids::<f64>(2, 3, 8).unwrap();
        let u = PhaseSpaceField::from_fn(&g, |k, i, j| 0.1 * k as f64 + i as f64 - 1.0 / (j as f64 + 3.0));
        let s = u.to_csv_string();
        assert!(s.starts_with("2,3,8\n"));
        assert_eq!(s.lines().count(), 1 + 6);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        u.write_csv(&p).unwrap();
        assert_eq!(PhaseSpaceField::<f64>::read_csv(&p).unwrap(), u);
    }

    #[test]
    fn boundary_integral_of_constants_vanishes() {
        // a closed surface has zero net flux of a constant field
        let g = build_grids::<f64>(5, 4, 12).unwrap();
        let ones = BoundaryTrace::from_array(Array2::from_elem((g.n_faces(), 12), 1.0));
        assert!(boundary_integral(&g, &ones, &ones).abs() < 1e-13);
    }
}
