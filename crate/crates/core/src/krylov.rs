//! Restarted GMRES on plain vectors, used to accelerate source iteration.

use crate::{Real, Result};

#[derive(Clone, Debug)]
pub struct GmresOutcome<T> {
    pub x: Vec<T>,
    /// Operator applications inside Arnoldi steps.
    pub iterations: usize,
    /// 2-norm of `b - A x` at exit (true residual, recomputed at each restart).
    pub residual: T,
    pub converged: bool,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves `A x = b` to `||b - A x||_2 <= tol`, restarting every `restart` steps.
pub fn gmres<T, F>(
    mut apply: F,
    b: &[T],
    x0: Vec<T>,
    tol: T,
    restart: usize,
    max_iter: usize,
) -> Result<GmresOutcome<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<Vec<T>>,
{
    let n = b.len();
    let m = restart.max(1);
    let mut x = x0;
    let mut iterations = 0;

    loop {
        let ax = apply(&x)?;
        let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        let beta = norm(&r);
        if beta <= tol || iterations >= max_iter || !beta.is_finite() {
            return Ok(GmresOutcome {
                x,
                iterations,
                residual: beta,
                converged: beta <= tol,
            });
        }

        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|v| *v / beta).collect());
        // Hessenberg columns, already rotated
        let mut hess: Vec<Vec<T>> = Vec::with_capacity(m);
        let mut cs: Vec<T> = Vec::with_capacity(m);
        let mut sn: Vec<T> = Vec::with_capacity(m);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut steps = 0;

        for j in 0..m {
            let mut w = apply(&basis[j])?;
            iterations += 1;
            let mut col = vec![T::zero(); j + 2];
            for (i, v) in basis.iter().enumerate().take(j + 1) {
                let hij = dot(&w, v);
                col[i] = hij;
                for (wk, vk) in w.iter_mut().zip(v) {
                    *wk -= hij * *vk;
                }
            }
            let hnext = norm(&w);
            col[j + 1] = hnext;

            for i in 0..j {
                let t = cs[i] * col[i] + sn[i] * col[i + 1];
                col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
                col[i] = t;
            }
            let denom = col[j].hypot(col[j + 1]);
            let (c, s) = if denom == T::zero() {
                (T::one(), T::zero())
            } else {
                (col[j] / denom, col[j + 1] / denom)
            };
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = T::zero();
            g[j + 1] = -s * g[j];
            g[j] = c * g[j];
            cs.push(c);
            sn.push(s);
            hess.push(col);
            steps = j + 1;

            let breakdown = hnext <= T::epsilon() * beta;
            if !breakdown {
                basis.push(w.iter().map(|v| *v / hnext).collect());
            }
            if g[j + 1].abs() <= tol || iterations >= max_iter || breakdown {
                break;
            }
        }

        // back substitution on the rotated triangle
        let mut y = vec![T::zero(); steps];
        for i in (0..steps).rev() {
            let mut acc = g[i];
            for (k, yk) in y.iter().enumerate().take(steps).skip(i + 1) {
                acc -= hess[k][i] * *yk;
            }
            y[i] = if hess[i][i] == T::zero() {
                T::zero()
            } else {
                acc / hess[i][i]
            };
        }
        for (yi, v) in y.iter().zip(&basis) {
            for (xk, vk) in x.iter_mut().zip(v) {
                *xk += *yi * *vk;
            }
        }
        debug_assert_eq!(x.len(), n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_system() {
        // tridiagonal, nonsymmetric, diagonally dominant
        let n = 40;
        let apply = |x: &[f64]| -> Result<Vec<f64>> {
            Ok((0..n)
                .map(|i| {
                    let mut v = 4.0 * x[i];
                    if i > 0 {
                        v -= 1.5 * x[i - 1];
                    }
                    if i + 1 < n {
                        v -= 0.5 * x[i + 1];
                    }
                    v
                })
                .collect())
        };
        let truth: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = apply(&truth).unwrap();
        let out = gmres(apply, &b, vec![0.0; n], 1e-12, 7, 500).unwrap();
        assert!(out.converged);
        for (a, t) in out.x.iter().zip(&truth) {
            assert!((a - t).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_is_immediate() {
        let out = gmres(|x: &[f64]| Ok(x.to_vec()), &[0.0; 5], vec![0.0; 5], 1e-12, 5, 10).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }
}
