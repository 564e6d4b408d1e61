//! Backward-Euler viscous solves `(I - dt S) u = rhs` on the free faces.
//!
//! The preconditioner combines two pieces. A fast separable solve of the
//! constant-viscosity operator without the `u`-`v` coupling terms handles
//! the fluid, rescaled by the ratio of diagonals. Where the viscosity is
//! much larger than the reference value, an exact banded Cholesky solve on
//! a box of faces around that region removes the stiff modes the scaled
//! fast solve misses. The two are combined as
//! `M^-1 = L + (I - L A) B (I - A L)`, which is symmetric positive definite
//! for any symmetric positive definite `B` when `L` is exact on its box.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::Result;
use crate::geometry::CellMask;
use crate::grid::{ScalarField, StaggeredGrid, VelocityField};
use crate::linalg::{pcg, BandedCholesky, CgStats, SeparableSolver};
use crate::operators::ViscousOperator;

const NONE: usize = usize::MAX;

/// Faces whose velocity is an unknown of the implicit viscous solve.
#[derive(Debug, Clone)]
pub(crate) struct FreeFaces {
    pub(crate) u: Vec<(usize, usize)>,
    pub(crate) v: Vec<(usize, usize)>,
    index_u: Array2<usize>,
    index_v: Array2<usize>,
}

impl FreeFaces {
    pub(crate) fn new(grid: &StaggeredGrid, mask: Option<&CellMask>) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let blocked_u = |i, j| mask.is_some_and(|m| m.touches_x_face(i, j));
        let blocked_v = |i, j| mask.is_some_and(|m| m.touches_y_face(i, j));
        let u: Vec<_> = (1..nx)
            .flat_map(|i| (0..ny).map(move |j| (i, j)))
            .filter(|&(i, j)| !blocked_u(i, j))
            .collect();
        let v: Vec<_> = (0..nx)
            .flat_map(|i| (1..ny).map(move |j| (i, j)))
            .filter(|&(i, j)| !blocked_v(i, j))
            .collect();
        let mut index_u = Array2::from_elem(grid.u_shape(), NONE);
        let mut index_v = Array2::from_elem(grid.v_shape(), NONE);
        for (k, &(i, j)) in u.iter().enumerate() {
            index_u[[i, j]] = k;
        }
        for (k, &(i, j)) in v.iter().enumerate() {
            index_v[[i, j]] = u.len() + k;
        }
        Self {
            u,
            v,
            index_u,
            index_v,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.u.len() + self.v.len()
    }

    pub(crate) fn gather(&self, field: &VelocityField, out: &mut [f64]) {
        let nu = self.u.len();
        for (k, &(i, j)) in self.u.iter().enumerate() {
            out[k] = field.u[[i, j]];
        }
        for (k, &(i, j)) in self.v.iter().enumerate() {
            out[nu + k] = field.v[[i, j]];
        }
    }

    pub(crate) fn scatter(&self, x: &[f64], field: &mut VelocityField) {
        let nu = self.u.len();
        for (k, &(i, j)) in self.u.iter().enumerate() {
            field.u[[i, j]] = x[k];
        }
        for (k, &(i, j)) in self.v.iter().enumerate() {
            field.v[[i, j]] = x[nu + k];
        }
    }

    /// Position in doubled index space: faces of either kind that interact
    /// through the stencil are at most 2 apart in each coordinate.
    fn position(&self, k: usize) -> (usize, usize) {
        let nu = self.u.len();
        if k < nu {
            let (i, j) = self.u[k];
            (2 * i, 2 * j + 1)
        } else {
            let (i, j) = self.v[k - nu];
            (2 * i + 1, 2 * j)
        }
    }
}

/// Exact inverse of the constant-viscosity component operators
/// `I - dt nu (d_xx + d_yy / 2)` for `u` and `I - dt nu (d_xx / 2 + d_yy)`
/// for `v`, with the channel boundary rules.
#[derive(Debug, Clone)]
struct FastComponents {
    nx: usize,
    ny: usize,
    fast_u: SeparableSolver,
    fast_v: SeparableSolver,
}

impl FastComponents {
    fn new(grid: &StaggeredGrid, dt: f64, nu: f64) -> Self {
        let (nx, ny) = (grid.nx(), grid.ny());
        let (idx2, idy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
        let nyf = ny as f64;
        let mode = |k: usize| 4.0 * idy2 * ((k + 1) as f64 * PI / (2.0 * nyf)).sin().powi(2);

        // u: Dirichlet (fixed faces) in x, mirrored wall ghosts in y
        let basis_u = Array2::from_shape_fn((ny, ny), |(k, j)| {
            let c = if k + 1 == ny { (1.0 / nyf).sqrt() } else { (2.0 / nyf).sqrt() };
            c * ((k + 1) as f64 * PI * (j as f64 + 0.5) / nyf).sin()
        });
        let eig_u = (0..ny).map(|k| dt * 0.5 * nu * mode(k)).collect();
        let off_u = -dt * nu * idx2;
        let fast_u = SeparableSolver::new(
            basis_u,
            eig_u,
            vec![off_u; nx - 1],
            vec![1.0 - 2.0 * off_u; nx - 1],
            vec![off_u; nx - 1],
        );

        // v: Dirichlet walls in y; mirrored ghost at the inlet and zero
        // shear at the outlet in x
        let basis_v = Array2::from_shape_fn((ny - 1, ny - 1), |(k, j)| {
            (2.0 / nyf).sqrt() * ((k + 1) as f64 * PI * (j + 1) as f64 / nyf).sin()
        });
        let eig_v = (0..ny - 1).map(|k| dt * nu * mode(k)).collect();
        let off_v = -dt * 0.5 * nu * idx2;
        let diag_v = (0..nx)
            .map(|i| {
                let c = if i == 0 {
                    3.0
                } else if i + 1 == nx {
                    1.0
                } else {
                    2.0
                };
                1.0 - c * off_v
            })
            .collect();
        let fast_v = SeparableSolver::new(basis_v, eig_v, vec![off_v; nx], diag_v, vec![off_v; nx]);
        Self {
            nx,
            ny,
            fast_u,
            fast_v,
        }
    }

    /// Applies the inverse to the free entries of `r` (other faces treated
    /// as zero) and returns the free entries of the result.
    fn apply(&self, free: &FreeFaces, r: &[f64], z: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        let nu = free.u.len();
        let mut bu = vec![0.0; (nx - 1) * ny];
        let mut bv = vec![0.0; nx * (ny - 1)];
        for (k, &(i, j)) in free.u.iter().enumerate() {
            bu[(i - 1) * ny + j] = r[k];
        }
        for (k, &(i, j)) in free.v.iter().enumerate() {
            bv[i * (ny - 1) + j - 1] = r[nu + k];
        }
        let mut xu = vec![0.0; bu.len()];
        let mut xv = vec![0.0; bv.len()];
        self.fast_u.solve(&bu, &mut xu);
        self.fast_v.solve(&bv, &mut xv);
        for (k, &(i, j)) in free.u.iter().enumerate() {
            z[k] = xu[(i - 1) * ny + j];
        }
        for (k, &(i, j)) in free.v.iter().enumerate() {
            z[nu + k] = xv[i * (ny - 1) + j - 1];
        }
    }
}

/// Exact solve of the system restricted to a box of faces.
#[derive(Debug, Clone)]
struct LocalSolve {
    /// Free-vector indices of the local unknowns, in band order.
    unknowns: Vec<usize>,
    chol: BandedCholesky,
}

impl LocalSolve {
    /// `z += R^T A_loc^-1 R r`.
    fn add_to(&self, r: &[f64], z: &mut [f64]) {
        let mut x: Vec<f64> = self.unknowns.iter().map(|&k| r[k]).collect();
        self.chol.solve_in_place(&mut x);
        for (&k, v) in self.unknowns.iter().zip(&x) {
            z[k] += v;
        }
    }
}

/// Local boxes beyond this many unknowns are not factored.
const MAX_LOCAL_UNKNOWNS: usize = 40_000;
/// Cells of fluid around the stiff region included in the local box.
const LOCAL_MARGIN: usize = 3;

#[derive(Debug, Clone)]
pub(crate) struct ViscousSystem {
    op: ViscousOperator,
    free: FreeFaces,
    dt: f64,
    fast: FastComponents,
    /// `sqrt(diag(F) / diag(A))` per free unknown.
    scale: Vec<f64>,
    local: Option<LocalSolve>,
}

impl ViscousSystem {
    /// `nu_ref` is the viscosity of the fast solve; cells with viscosity
    /// above `2 nu_ref` get the local correction.
    pub(crate) fn new(op: ViscousOperator, free: FreeFaces, nu: &ScalarField, dt: f64, nu_ref: f64) -> Self {
        let g = *op.grid();
        let fast = FastComponents::new(&g, dt, nu_ref);
        let reference = ViscousOperator::new(&ScalarField::constant(&g, nu_ref));
        let mut d_ref = vec![0.0; free.len()];
        free.gather(&reference.negative_diagonal(), &mut d_ref);
        let mut d_true = vec![0.0; free.len()];
        free.gather(&op.negative_diagonal(), &mut d_true);
        let scale = d_ref
            .iter()
            .zip(&d_true)
            .map(|(f, a)| ((1.0 + dt * f) / (1.0 + dt * a)).sqrt())
            .collect();
        let mut system = Self {
            op,
            free,
            dt,
            fast,
            scale,
            local: None,
        };
        system.local = system.build_local(nu, nu_ref);
        system
    }

    fn build_local(&self, nu: &ScalarField, nu_ref: f64) -> Option<LocalSolve> {
        let g = *self.op.grid();
        let (nx, ny) = (g.nx(), g.ny());
        let stiff: Vec<(usize, usize)> = nu
            .values
            .indexed_iter()
            .filter(|(_, &v)| v > 2.0 * nu_ref)
            .map(|(ij, _)| ij)
            .collect();
        if stiff.is_empty() {
            return None;
        }
        let ci0 = stiff.iter().map(|c| c.0).min()?.saturating_sub(LOCAL_MARGIN);
        let ci1 = (stiff.iter().map(|c| c.0).max()? + LOCAL_MARGIN).min(nx - 1);
        let cj0 = stiff.iter().map(|c| c.1).min()?.saturating_sub(LOCAL_MARGIN);
        let cj1 = (stiff.iter().map(|c| c.1).max()? + LOCAL_MARGIN).min(ny - 1);

        let free = &self.free;
        let inside = |k: usize| {
            let (px, py) = free.position(k);
            px >= 2 * ci0 && px <= 2 * ci1 + 2 && py >= 2 * cj0 && py <= 2 * cj1 + 2
        };
        let mut unknowns: Vec<usize> = (0..free.len()).filter(|&k| inside(k)).collect();
        if unknowns.is_empty() || unknowns.len() > MAX_LOCAL_UNKNOWNS {
            return None;
        }
        // order along the longer side of the box to keep the band narrow
        let x_major = ci1 - ci0 >= cj1 - cj0;
        unknowns.sort_by_key(|&k| {
            let (px, py) = free.position(k);
            if x_major {
                (px, py)
            } else {
                (py, px)
            }
        });
        let n = unknowns.len();
        let mut local_of = vec![NONE; free.len()];
        for (l, &k) in unknowns.iter().enumerate() {
            local_of[k] = l;
        }
        let at = |px: usize, py: usize| -> usize {
            // free index of the face at a doubled position, if any
            if px.is_multiple_of(2) && !py.is_multiple_of(2) {
                let (i, j) = (px / 2, py / 2);
                if i <= nx && j < ny {
                    return free.index_u[[i, j]];
                }
            } else if !px.is_multiple_of(2) && py.is_multiple_of(2) {
                let (i, j) = (px / 2, py / 2);
                if i < nx && j <= ny {
                    return free.index_v[[i, j]];
                }
            }
            NONE
        };

        // Probe A with colored indicator vectors: same-colored unknowns are
        // of one kind and at least 6 apart in doubled space, so each row
        // within reach 2 of a probed unknown sees only that unknown.
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut e = vec![0.0; free.len()];
        let mut y = vec![0.0; free.len()];
        for color in 0..18 {
            let members: Vec<usize> = unknowns
                .iter()
                .copied()
                .filter(|&k| {
                    let (px, py) = free.position(k);
                    9 * (px % 2) + (px / 2 % 3) * 3 + py / 2 % 3 == color
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            e.fill(0.0);
            for &k in &members {
                e[k] = 1.0;
            }
            self.apply(&e, &mut y);
            for &k in &members {
                let col = local_of[k];
                let (px, py) = free.position(k);
                for qx in px.saturating_sub(2)..=px + 2 {
                    for qy in py.saturating_sub(2)..=py + 2 {
                        let f = at(qx, qy);
                        if f == NONE || local_of[f] == NONE {
                            continue;
                        }
                        let v = y[f];
                        if v != 0.0 {
                            rows[local_of[f]].push((col, v));
                        }
                    }
                }
            }
        }
        let bw = rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, _)| r.abs_diff(c)))
            .max()
            .unwrap_or(0);
        let entry = |r: usize, c: usize| {
            rows[r]
                .iter()
                .find(|&&(cc, _)| cc == c)
                .map_or(0.0, |&(_, v)| v)
        };
        let chol = BandedCholesky::factor(n, bw, entry)?;
        Some(LocalSolve { unknowns, chol })
    }

    /// `y = (I - dt S) x` on the free faces.
    pub(crate) fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.op.grid();
        let mut vin = VelocityField::zeros(g);
        let mut vout = VelocityField::zeros(g);
        self.free.scatter(x, &mut vin);
        self.op.apply_into(&vin, &mut vout);
        self.free.gather(&vout, y);
        for (yk, xk) in y.iter_mut().zip(x) {
            *yk = xk - self.dt * *yk;
        }
    }

    fn apply_scaled_fast(&self, r: &[f64], z: &mut [f64]) {
        let scaled: Vec<f64> = r.iter().zip(&self.scale).map(|(r, s)| r * s).collect();
        self.fast.apply(&self.free, &scaled, z);
        for (zk, s) in z.iter_mut().zip(&self.scale) {
            *zk *= s;
        }
    }

    fn precondition(&self, r: &[f64], z: &mut [f64]) {
        let Some(local) = &self.local else {
            self.apply_scaled_fast(r, z);
            return;
        };
        let n = r.len();
        let mut z1 = vec![0.0; n];
        local.add_to(r, &mut z1);
        let mut w = vec![0.0; n];
        self.apply(&z1, &mut w);
        for (wk, rk) in w.iter_mut().zip(r) {
            *wk = rk - *wk;
        }
        let mut z2 = vec![0.0; n];
        self.apply_scaled_fast(&w, &mut z2);
        let mut az2 = vec![0.0; n];
        self.apply(&z2, &mut az2);
        for k in 0..n {
            z[k] = z1[k] + z2[k];
            az2[k] = -az2[k];
        }
        local.add_to(&az2, z);
    }

    /// Solves with the free faces unknown and every other face held at its
    /// value in `rhs`, starting from `guess`.
    pub(crate) fn solve(
        &self,
        rhs: &VelocityField,
        guess: &VelocityField,
        tol: f64,
        max_iters: usize,
    ) -> Result<(VelocityField, CgStats)> {
        let free = &self.free;
        // fixed data moved to the right-hand side
        let mut fixed = rhs.clone();
        for &(i, j) in &free.u {
            fixed.u[[i, j]] = 0.0;
        }
        for &(i, j) in &free.v {
            fixed.v[[i, j]] = 0.0;
        }
        let mut b_field = self.op.apply(&fixed);
        b_field.scale(self.dt);
        b_field.add_scaled(1.0, rhs);

        let n = free.len();
        let mut b = vec![0.0; n];
        free.gather(&b_field, &mut b);
        let mut x = vec![0.0; n];
        free.gather(guess, &mut x);
        let stats = pcg(
            |x, y| self.apply(x, y),
            |r, z| self.precondition(r, z),
            &b,
            &mut x,
            tol,
            max_iters,
        )?;
        let mut out = fixed;
        free.scatter(&x, &mut out);
        Ok((out, stats))
    }
}
