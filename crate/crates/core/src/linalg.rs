//! Matrix-free preconditioned conjugate gradient.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// True residual `||b - A x||` at exit, relative to the initial residual.
    pub relative_residual: f64,
    /// True residual norm at exit.
    pub residual_norm: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from the
/// contents of `x`.
///
/// Stops once `||r|| <= max(tol * ||r0||, floor)`, where `r0` is the
/// residual of the starting guess and `floor = 1e-14 (||A|| ||x|| + ||b||)`
/// is the level rounding allows, with `||A||` estimated from the search
/// directions. The stopping test is re-checked against the true residual,
/// restarting from the current iterate if the recurrence has drifted.
pub fn pcg(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    mut precondition: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iters: usize,
) -> Result<CgStats> {
    let n = b.len();
    assert_eq!(x.len(), n);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];

    let true_residual = |apply: &mut dyn FnMut(&[f64], &mut [f64]), x: &[f64], r: &mut [f64]| {
        let mut ax = vec![0.0; n];
        apply(x, &mut ax);
        for k in 0..n {
            r[k] = b[k] - ax[k];
        }
        norm(r)
    };

    let mut rnorm = true_residual(&mut apply, x, &mut r);
    let r0 = rnorm;
    let bnorm = norm(b);
    let mut a_norm = 0.0_f64;
    let threshold = |a_norm: f64, x: &[f64]| (tol * r0).max(1e-14 * (a_norm * norm(x) + bnorm));
    let stats = |iterations, rnorm: f64| CgStats {
        iterations,
        relative_residual: if r0 > 0.0 { rnorm / r0 } else { 0.0 },
        residual_norm: rnorm,
    };
    if rnorm <= threshold(a_norm, x) {
        return Ok(stats(0, rnorm));
    }

    let mut iterations = 0;
    while iterations < max_iters {
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iters {
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                break;
            }
            a_norm = a_norm.max(norm(&q) / norm(&p));
            let alpha = rz / pq;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * q[k];
            }
            iterations += 1;
            if norm(&r) <= tol * r0 {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        rnorm = true_residual(&mut apply, x, &mut r);
        if rnorm <= threshold(a_norm, x) {
            return Ok(stats(iterations, rnorm));
        }
    }
    Err(Error::NonConvergence {
        iterations,
        residual: if r0 > 0.0 { rnorm / r0 } else { rnorm },
    })
}

/// Thomas algorithm for a tridiagonal system. `lower[0]` and
/// `upper[n - 1]` are ignored. `scratch` must have the same length.
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs_and_solution: &mut [f64],
    scratch: &mut [f64],
) {
    let n = diag.len();
    let d = rhs_and_solution;
    let c = scratch;
    c[0] = upper[0] / diag[0];
    d[0] /= diag[0];
    for k in 1..n {
        let denom = diag[k] - lower[k] * c[k - 1];
        c[k] = if k + 1 < n { upper[k] / denom } else { 0.0 };
        d[k] = (d[k] - lower[k] * d[k - 1]) / denom;
    }
    for k in (0..n - 1).rev() {
        d[k] -= c[k] * d[k + 1];
    }
}

/// Direct solver for `(T_x (x) I + I (x) B diag(eig_y) B^T) x = r` on an
/// `nx` by `ny` array stored row-major by `i`, where `T_x` is tridiagonal
/// and `B` is an orthonormal basis along `y` (rows of `basis` are the basis
/// vectors).
#[derive(Debug, Clone)]
pub(crate) struct SeparableSolver {
    nx: usize,
    ny: usize,
    basis: Array2<f64>,
    eig_y: Vec<f64>,
    lower: Vec<f64>,
    diag_x: Vec<f64>,
    upper: Vec<f64>,
}

impl SeparableSolver {
    pub(crate) fn new(basis: Array2<f64>, eig_y: Vec<f64>, lower: Vec<f64>, diag_x: Vec<f64>, upper: Vec<f64>) -> Self {
        let (k, ny) = basis.dim();
        assert_eq!(k, ny);
        assert_eq!(eig_y.len(), ny);
        let nx = diag_x.len();
        assert!(lower.len() == nx && upper.len() == nx);
        Self {
            nx,
            ny,
            basis,
            eig_y,
            lower,
            diag_x,
            upper,
        }
    }

    pub(crate) fn solve(&self, r: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        // hat[k * nx + i] = sum_j basis[k, j] r[i, j]
        let mut hat = vec![0.0; nx * ny];
        for i in 0..nx {
            let row = &r[i * ny..(i + 1) * ny];
            for k in 0..ny {
                let b = self.basis.row(k);
                hat[k * nx + i] = b.iter().zip(row).map(|(a, c)| a * c).sum();
            }
        }
        let mut diag = vec![0.0; nx];
        let mut scratch = vec![0.0; nx];
        for k in 0..ny {
            for i in 0..nx {
                diag[i] = self.diag_x[i] + self.eig_y[k];
            }
            solve_tridiagonal(&self.lower, &diag, &self.upper, &mut hat[k * nx..(k + 1) * nx], &mut scratch);
        }
        out[..nx * ny].fill(0.0);
        for k in 0..ny {
            let b = self.basis.row(k);
            for i in 0..nx {
                let h = hat[k * nx + i];
                for (o, bj) in out[i * ny..(i + 1) * ny].iter_mut().zip(b.iter()) {
                    *o += bj * h;
                }
            }
        }
    }
}

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// rows of the lower band.
#[derive(Debug, Clone)]
pub(crate) struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the matrix whose lower band is given by `entry(row, col)`
    /// for `row - bw <= col <= row`. Returns `None` if it is not positive
    /// definite.
    pub(crate) fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Option<Self> {
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        // band[k * w + (j + bw - k)] holds L[k, j]
        for k in 0..n {
            let k0 = k.saturating_sub(bw);
            for j in k0..=k {
                let j0 = j.saturating_sub(bw).max(k0);
                let mut sum = entry(k, j);
                for p in j0..j {
                    sum -= band[k * w + p + bw - k] * band[j * w + p + bw - j];
                }
                if j == k {
                    if !(sum > 0.0) {
                        return None;
                    }
                    band[k * w + bw] = sum.sqrt();
                } else {
                    band[k * w + j + bw - k] = sum / band[j * w + bw];
                }
            }
        }
        Some(Self { n, bw, band })
    }

    pub(crate) fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for k in 0..n {
            let mut s = x[k];
            for p in k.saturating_sub(bw)..k {
                s -= self.band[k * w + p + bw - k] * x[p];
            }
            x[k] = s / self.band[k * w + bw];
        }
        for k in (0..n).rev() {
            x[k] /= self.band[k * w + bw];
            let xk = x[k];
            for p in k.saturating_sub(bw)..k {
                x[p] -= self.band[k * w + p + bw - k] * xk;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // 1D Dirichlet Laplacian
        let n = 20;
        let apply = |x: &[f64], y: &mut [f64]| {
            for k in 0..n {
                let l = if k > 0 { x[k - 1] } else { 0.0 };
                let r = if k + 1 < n { x[k + 1] } else { 0.0 };
                y[k] = 2.0 * x[k] - l - r;
            }
        };
        let b: Vec<f64> = (0..n).map(|k| (k as f64).cos()).collect();
        let mut x = vec![0.0; n];
        let stats = pcg(apply, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 100).unwrap();
        assert!(stats.iterations <= n);
        assert!(stats.relative_residual <= 1e-12);

        let mut y = vec![0.0; n];
        apply(&x, &mut y);
        for k in 0..n {
            assert!((y[k] - b[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let mut x = vec![0.0; 4];
        let stats = pcg(
            |x: &[f64], y: &mut [f64]| y.copy_from_slice(x),
            |r: &[f64], z: &mut [f64]| z.copy_from_slice(r),
            &[0.0; 4],
            &mut x,
            1e-10,
            10,
        )
        .unwrap();
        assert_eq!(stats.iterations, 0);
        assert_eq!(x, vec![0.0; 4]);
    }

    #[test]
    fn reports_non_convergence() {
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for k in 0..n {
                let l = if k > 0 { x[k - 1] } else { 0.0 };
                let r = if k + 1 < n { x[k + 1] } else { 0.0 };
                y[k] = 2.0 * x[k] - l - r;
            }
        };
        let b = vec![1.0; n];
        let mut x = vec![0.0; n];
        let err = pcg(apply, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }

    #[test]
    fn separable_solver_inverts_kronecker_sum() {
        let (nx, ny) = (5, 4);
        // identity basis reduces the y operator to a diagonal
        let basis = Array2::from_shape_fn((ny, ny), |(k, j)| if k == j { 1.0 } else { 0.0 });
        let eig_y = vec![0.5, 1.0, 2.0, 3.0];
        let solver = SeparableSolver::new(basis, eig_y.clone(), vec![-1.0; nx], vec![3.0; nx], vec![-1.0; nx]);
        let x: Vec<f64> = (0..nx * ny).map(|k| (k as f64 * 0.7).sin()).collect();
        let mut r = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let mut v = (3.0 + eig_y[j]) * x[i * ny + j];
                if i > 0 {
                    v -= x[(i - 1) * ny + j];
                }
                if i + 1 < nx {
                    v -= x[(i + 1) * ny + j];
                }
                r[i * ny + j] = v;
            }
        }
        let mut out = vec![0.0; nx * ny];
        solver.solve(&r, &mut out);
        for (a, b) in out.iter().zip(&x) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn banded_cholesky_solves_pentadiagonal() {
        let n = 12;
        let entry = |r: usize, c: usize| match r - c {
            0 => 6.0,
            1 => -2.0,
            2 => 0.5,
            _ => 0.0,
        };
        let full = |r: usize, c: usize| if r >= c { entry(r, c) } else { entry(c, r) };
        let chol = BandedCholesky::factor(n, 2, entry).unwrap();
        let x: Vec<f64> = (0..n).map(|k| (k as f64).sin() + 1.0).collect();
        let mut b: Vec<f64> = (0..n)
            .map(|r| (0..n).filter(|c| r.abs_diff(*c) <= 2).map(|c| full(r, c) * x[c]).sum())
            .collect();
        chol.solve_in_place(&mut b);
        for (a, e) in b.iter().zip(&x) {
            assert!((a - e).abs() < 1e-13);
        }
        assert!(BandedCholesky::factor(2, 1, |r, c| if r == c { 1.0 } else { 2.0 }).is_none());
    }

    #[test]
    fn tridiagonal_solve() {
        let lower = [0.0, 1.0, 1.0];
        let diag = [4.0, 4.0, 4.0];
        let upper = [1.0, 1.0, 0.0];
        let mut x = [5.0, 6.0, 5.0];
        let mut s = [0.0; 3];
        solve_tridiagonal(&lower, &diag, &upper, &mut x, &mut s);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }
}
