//! Pressure-correction Poisson problem.
//!
//! The operator is `div(grad phi)` on cells with zero normal gradient on the
//! walls and the inlet and `phi = 0` on the outlet boundary (imposed through
//! a ghost value, so the outlet faces see a half-cell distance). In rigid
//! mode the faces touching the mask are closed as well and masked cells
//! drop out of the system.
//!
//! The conjugate-gradient solve is preconditioned with an exact fast solver
//! for the unmasked operator: a cosine transform across the channel
//! followed by one tridiagonal solve per mode along it.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::Result;
use crate::geometry::CellMask;
use crate::grid::{ScalarField, StaggeredGrid, VelocityField};
use crate::linalg::{pcg, CgStats, SeparableSolver};

/// Exact inverse of the negated unmasked pressure Laplacian.
#[derive(Debug, Clone)]
struct FastPoisson(SeparableSolver);

impl FastPoisson {
    fn new(grid: &StaggeredGrid) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (idx2, idy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
        // orthonormal cosine basis
        let basis = Array2::from_shape_fn((ny, ny), |(k, j)| {
            let c = if k == 0 { (1.0 / ny as f64).sqrt() } else { (2.0 / ny as f64).sqrt() };
            c * (k as f64 * PI * (j as f64 + 0.5) / ny as f64).cos()
        });
        let eig_y = (0..ny)
            .map(|k| 4.0 * idy2 * (k as f64 * PI / (2.0 * ny as f64)).sin().powi(2))
            .collect();
        let diag_x = (0..nx)
            .map(|i| {
                let west = if i > 0 { 1.0 } else { 0.0 };
                let east = if i + 1 < nx { 1.0 } else { 2.0 };
                (west + east) * idx2
            })
            .collect();
        Self(SeparableSolver::new(basis, eig_y, vec![-idx2; nx], diag_x, vec![-idx2; nx]))
    }

    /// `out = N^{-1} r` with `N = -Laplacian`, both in row-major `(i, j)`.
    fn solve(&self, r: &[f64], out: &mut [f64]) {
        self.0.solve(r, out);
    }
}

/// Discrete pressure-correction operator, optionally with closed faces
/// around a rigid mask.
#[derive(Debug, Clone)]
pub struct PressureSystem {
    grid: StaggeredGrid,
    open_x: Array2<bool>,
    open_y: Array2<bool>,
    active: Array2<bool>,
    fast: FastPoisson,
}

impl PressureSystem {
    pub fn new(grid: &StaggeredGrid, mask: Option<&CellMask>) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let masked = |i: usize, j: usize| mask.is_some_and(|m| m.get(i, j));
        let open_x = Array2::from_shape_fn(grid.u_shape(), |(i, j)| {
            i > 0 && !masked(i - 1, j) && (i == nx || !masked(i, j))
        });
        let open_y = Array2::from_shape_fn(grid.v_shape(), |(i, j)| {
            j > 0 && j < ny && !masked(i, j - 1) && !masked(i, j)
        });
        let active = Array2::from_shape_fn(grid.cell_shape(), |(i, j)| !masked(i, j));
        Self {
            grid: *grid,
            open_x,
            open_y,
            active,
            fast: FastPoisson::new(grid),
        }
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    /// `div(grad phi)` with this system's boundary conditions.
    pub fn laplacian(&self, phi: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; phi.values.len()];
        self.apply_negative(phi.values.as_slice().expect("standard layout"), &mut out);
        let g = &self.grid;
        let values = Array2::from_shape_vec(g.cell_shape(), out.into_iter().map(|v| -v).collect())
            .expect("shape follows grid");
        let mut field = ScalarField::from_array(g, values).expect("shape follows grid");
        for ((i, j), v) in field.values.indexed_iter_mut() {
            if !self.active[[i, j]] {
                *v = 0.0;
            }
        }
        field
    }

    /// Gradient matching the operator: open interior faces take the cell
    /// difference, outlet faces the half-cell difference to the zero ghost,
    /// closed and other boundary faces stay zero.
    pub fn gradient(&self, phi: &ScalarField) -> VelocityField {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (dx, dy) = (g.dx(), g.dy());
        let p = &phi.values;
        let mut out = VelocityField::zeros(g);
        for i in 1..=nx {
            for j in 0..ny {
                if !self.open_x[[i, j]] {
                    continue;
                }
                out.u[[i, j]] = if i == nx {
                    -2.0 * p[[nx - 1, j]] / dx
                } else {
                    (p[[i, j]] - p[[i - 1, j]]) / dx
                };
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                if self.open_y[[i, j]] {
                    out.v[[i, j]] = (p[[i, j]] - p[[i, j - 1]]) / dy;
                }
            }
        }
        out
    }

    fn apply_negative(&self, phi: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (idx2, idy2) = (1.0 / (g.dx() * g.dx()), 1.0 / (g.dy() * g.dy()));
        let inactive_diag = 2.0 * (idx2 + idy2);
        for i in 0..nx {
            for j in 0..ny {
                let k = i * ny + j;
                let c = phi[k];
                if !self.active[[i, j]] {
                    out[k] = inactive_diag * c;
                    continue;
                }
                let mut acc = 0.0;
                if self.open_x[[i, j]] {
                    acc += (c - phi[k - ny]) * idx2;
                }
                if self.open_x[[i + 1, j]] {
                    acc += if i + 1 == nx {
                        2.0 * c * idx2
                    } else {
                        (c - phi[k + ny]) * idx2
                    };
                }
                if self.open_y[[i, j]] {
                    acc += (c - phi[k - 1]) * idy2;
                }
                if self.open_y[[i, j + 1]] {
                    acc += (c - phi[k + 1]) * idy2;
                }
                out[k] = acc;
            }
        }
    }

    /// Fast solve restricted to the active cells; masked cells see the
    /// inverse of their identity-like diagonal. Keeps masked entries of the
    /// iterate exactly zero.
    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        if self.active.iter().all(|&a| a) {
            self.fast.solve(r, z);
            return;
        }
        let g = &self.grid;
        let inactive_diag = 2.0 / (g.dx() * g.dx()) + 2.0 / (g.dy() * g.dy());
        let restricted: Vec<f64> = r
            .iter()
            .zip(self.active.iter())
            .map(|(&v, &a)| if a { v } else { 0.0 })
            .collect();
        self.fast.solve(&restricted, z);
        for ((zk, &a), &rk) in z.iter_mut().zip(self.active.iter()).zip(r) {
            if !a {
                *zk = rk / inactive_diag;
            }
        }
    }

    /// Solves `div(grad phi) = rhs` to the given relative residual.
    pub fn solve(&self, rhs: &ScalarField, tol: f64, max_iters: usize) -> Result<(ScalarField, CgStats)> {
        let g = &self.grid;
        let b: Vec<f64> = rhs
            .values
            .indexed_iter()
            .map(|((i, j), v)| if self.active[[i, j]] { -v } else { 0.0 })
            .collect();
        let mut x = vec![0.0; b.len()];
        let stats = pcg(
            |p, q| self.apply_negative(p, q),
            |r, z| self.precondition(r, z),
            &b,
            &mut x,
            tol,
            max_iters,
        )?;
        let values = Array2::from_shape_vec(g.cell_shape(), x).expect("shape follows grid");
        Ok((ScalarField::from_array(g, values)?, stats))
    }
}

/// Solves the unmasked pressure-correction problem `div(grad phi) = rhs`
/// by preconditioned conjugate gradient, to `||A phi - rhs|| <= tol ||rhs||`.
pub fn pressure_poisson(
    rhs: &ScalarField,
    grid: &StaggeredGrid,
    tol: f64,
    max_iters: usize,
) -> Result<ScalarField> {
    PressureSystem::new(grid, None)
        .solve(rhs, tol, max_iters)
        .map(|(phi, _)| phi)
}
