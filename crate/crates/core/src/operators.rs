//! Discrete differential operators on the MAC grid (see [`crate::grid`] for
//! the indexing convention).
//!
//! Operators that need data outside the grid use the channel boundary
//! conditions as ghost rules: no-slip on the walls `y = 0, ly` (tangential
//! `u` mirrored with opposite sign), `v = 0` on the inlet (mirrored), and a
//! zero normal derivative on the outlet (copied). Boundary faces are data,
//! not unknowns, so operators that produce velocities leave them at zero.
//!
//! The purely kinematic quantities ([`velocity_gradient`] and the strain
//! norms built on it) make no boundary assumption: where a corner difference
//! would leave the grid they reuse the nearest interior difference, which
//! keeps them exact for linear fields everywhere.

use ndarray::Array2;

use crate::geometry::{corner_viscosity, BoundingBox, CellMask};
use crate::grid::{ScalarField, StaggeredGrid, VelocityField};

/// Cell divergence `du/dx + dv/dy`.
pub fn divergence(vel: &VelocityField) -> ScalarField {
    let g = vel.grid();
    let (dx, dy) = (g.dx(), g.dy());
    let values = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        (vel.u[[i + 1, j]] - vel.u[[i, j]]) / dx + (vel.v[[i, j + 1]] - vel.v[[i, j]]) / dy
    });
    ScalarField::from_array(g, values).expect("shape follows grid")
}

/// Pressure gradient on interior faces; boundary faces are left at zero.
pub fn pressure_gradient(p: &ScalarField) -> VelocityField {
    let g = p.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (dx, dy) = (g.dx(), g.dy());
    let mut out = VelocityField::zeros(g);
    for i in 1..nx {
        for j in 0..ny {
            out.u[[i, j]] = (p.values[[i, j]] - p.values[[i - 1, j]]) / dx;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            out.v[[i, j]] = (p.values[[i, j]] - p.values[[i, j - 1]]) / dy;
        }
    }
    out
}

/// All four velocity derivatives at their natural MAC locations.
#[derive(Debug, Clone)]
pub struct VelocityGradient {
    /// `du/dx` at cell centers.
    pub ux: Array2<f64>,
    /// `dv/dy` at cell centers.
    pub vy: Array2<f64>,
    /// `du/dy` at corners.
    pub uy: Array2<f64>,
    /// `dv/dx` at corners.
    pub vx: Array2<f64>,
}

pub fn velocity_gradient(vel: &VelocityField) -> VelocityGradient {
    let g = vel.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (dx, dy) = (g.dx(), g.dy());
    let ux = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        (vel.u[[i + 1, j]] - vel.u[[i, j]]) / dx
    });
    let vy = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        (vel.v[[i, j + 1]] - vel.v[[i, j]]) / dy
    });
    let uy = Array2::from_shape_fn((nx + 1, ny + 1), |(i, j)| {
        let j = j.clamp(1, ny - 1);
        (vel.u[[i, j]] - vel.u[[i, j - 1]]) / dy
    });
    let vx = Array2::from_shape_fn((nx + 1, ny + 1), |(i, j)| {
        let i = i.clamp(1, nx - 1);
        (vel.v[[i, j]] - vel.v[[i - 1, j]]) / dx
    });
    VelocityGradient { ux, vy, uy, vx }
}

impl VelocityGradient {
    /// Off-diagonal strain `(du/dy + dv/dx) / 2` at corners.
    pub fn shear_strain(&self) -> Array2<f64> {
        let mut d12 = self.uy.clone();
        d12.zip_mut_with(&self.vx, |a, b| *a = 0.5 * (*a + *b));
        d12
    }

    /// Trapezoidal weight of corner `(i, j)` in units of the cell area.
    pub fn corner_weight(i: usize, j: usize, nx: usize, ny: usize) -> f64 {
        let wi = if i == 0 || i == nx { 0.5 } else { 1.0 };
        let wj = if j == 0 || j == ny { 0.5 } else { 1.0 };
        wi * wj
    }

    pub fn max_abs(&self) -> f64 {
        [&self.ux, &self.vy, &self.uy, &self.vx]
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `sum |grad u|^2 dx dy`, corners weighted by the trapezoidal rule.
    pub fn l2_norm_sq(&self, grid: &StaggeredGrid) -> f64 {
        let (nx, ny) = (grid.nx(), grid.ny());
        let centers: f64 = self
            .ux
            .iter()
            .zip(self.vy.iter())
            .map(|(a, b)| a * a + b * b)
            .sum();
        let corners: f64 = self
            .uy
            .indexed_iter()
            .map(|((i, j), a)| {
                let b = self.vx[[i, j]];
                Self::corner_weight(i, j, nx, ny) * (a * a + b * b)
            })
            .sum();
        (centers + corners) * grid.cell_area()
    }
}

fn corner_average_to_centers(corner: &Array2<f64>, grid: &StaggeredGrid) -> Array2<f64> {
    Array2::from_shape_fn(grid.cell_shape(), |(i, j)| {
        0.25 * (corner[[i, j]] + corner[[i + 1, j]] + corner[[i, j + 1]] + corner[[i + 1, j + 1]])
    })
}

/// `|D u|^2 = D11^2 + D22^2 + 2 D12^2` at cell centers, with `D12` averaged
/// from the four surrounding corners.
pub fn strain_norm_sq(vel: &VelocityField) -> ScalarField {
    let g = vel.grid();
    let grad = velocity_gradient(vel);
    let d12 = corner_average_to_centers(&grad.shear_strain(), g);
    let values = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        let (a, b, c) = (grad.ux[[i, j]], grad.vy[[i, j]], d12[[i, j]]);
        a * a + b * b + 2.0 * c * c
    });
    ScalarField::from_array(g, values).expect("shape follows grid")
}

/// `|D u|^2` for a variable-viscosity flow.
///
/// The shear stress `nu D12` is continuous across a viscosity jump while the
/// shear strain is not, so the corner stresses are averaged to the center
/// and divided by the cell's own viscosity. For constant `nu` this equals
/// [`strain_norm_sq`].
pub fn strain_norm_sq_weighted(vel: &VelocityField, nu: &ScalarField) -> ScalarField {
    let g = vel.grid();
    let grad = velocity_gradient(vel);
    let nu_k = corner_viscosity(nu, None, 1.0);
    let mut tau = grad.shear_strain();
    tau.zip_mut_with(&nu_k, |t, n| *t *= n);
    let tau_c = corner_average_to_centers(&tau, g);
    let values = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        let (a, b) = (grad.ux[[i, j]], grad.vy[[i, j]]);
        let c = tau_c[[i, j]] / nu.values[[i, j]];
        a * a + b * b + 2.0 * c * c
    });
    ScalarField::from_array(g, values).expect("shape follows grid")
}

/// Flux-form `div(nu D u)` with cell viscosities for the normal stresses and
/// harmonic corner viscosities for the shear stresses.
#[derive(Debug, Clone)]
pub struct ViscousOperator {
    grid: StaggeredGrid,
    nu_cell: Array2<f64>,
    nu_corner: Array2<f64>,
}

impl ViscousOperator {
    pub fn new(nu: &ScalarField) -> Self {
        Self::with_mask(nu, None)
    }

    /// As [`ViscousOperator::new`], treating masked cells as rigid when
    /// averaging corner viscosities (see [`corner_viscosity`]).
    pub fn with_mask(nu: &ScalarField, mask: Option<&CellMask>) -> Self {
        let fallback = nu.values.iter().cloned().fold(f64::INFINITY, f64::min);
        Self {
            grid: *nu.grid(),
            nu_cell: nu.values.clone(),
            nu_corner: corner_viscosity(nu, mask, fallback),
        }
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn max_viscosity(&self) -> f64 {
        self.nu_cell
            .iter()
            .chain(self.nu_corner.iter())
            .fold(0.0, |m: f64, v| m.max(*v))
    }

    /// Shear strain at the corners the operator needs, using the channel
    /// ghost rules.
    fn corner_shear(&self, vel: &VelocityField) -> Array2<f64> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (dx, dy) = (g.dx(), g.dy());
        let u = &vel.u;
        let v = &vel.v;
        Array2::from_shape_fn((nx + 1, ny + 1), |(i, j)| {
            let uy = if j == 0 {
                2.0 * u[[i, 0]] / dy
            } else if j == ny {
                -2.0 * u[[i, ny - 1]] / dy
            } else {
                (u[[i, j]] - u[[i, j - 1]]) / dy
            };
            let vx = if i == 0 {
                2.0 * v[[0, j]] / dx
            } else if i == nx {
                0.0
            } else {
                (v[[i, j]] - v[[i - 1, j]]) / dx
            };
            0.5 * (uy + vx)
        })
    }

    pub fn apply(&self, vel: &VelocityField) -> VelocityField {
        let mut out = VelocityField::zeros(&self.grid);
        self.apply_into(vel, &mut out);
        out
    }

    pub(crate) fn apply_into(&self, vel: &VelocityField, out: &mut VelocityField) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (dx, dy) = (g.dx(), g.dy());
        let u = &vel.u;
        let v = &vel.v;
        let mut tau = self.corner_shear(vel);
        tau.zip_mut_with(&self.nu_corner, |d, n| *d *= n);
        let nc = &self.nu_cell;

        out.u.fill(0.0);
        out.v.fill(0.0);
        for i in 1..nx {
            for j in 0..ny {
                let east = nc[[i, j]] * (u[[i + 1, j]] - u[[i, j]]) / dx;
                let west = nc[[i - 1, j]] * (u[[i, j]] - u[[i - 1, j]]) / dx;
                out.u[[i, j]] = (east - west) / dx + (tau[[i, j + 1]] - tau[[i, j]]) / dy;
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let north = nc[[i, j]] * (v[[i, j + 1]] - v[[i, j]]) / dy;
                let south = nc[[i, j - 1]] * (v[[i, j]] - v[[i, j - 1]]) / dy;
                out.v[[i, j]] = (tau[[i + 1, j]] - tau[[i, j]]) / dx + (north - south) / dy;
            }
        }
    }

    /// Diagonal of `-apply` restricted to interior faces (zero on boundary
    /// faces).
    pub fn negative_diagonal(&self) -> VelocityField {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (idx2, idy2) = (1.0 / (g.dx() * g.dx()), 1.0 / (g.dy() * g.dy()));
        let nc = &self.nu_cell;
        let nk = &self.nu_corner;
        let mut out = VelocityField::zeros(g);
        for i in 1..nx {
            for j in 0..ny {
                let below = if j == 0 { 2.0 } else { 1.0 };
                let above = if j + 1 == ny { 2.0 } else { 1.0 };
                out.u[[i, j]] = (nc[[i, j]] + nc[[i - 1, j]]) * idx2
                    + 0.5 * (above * nk[[i, j + 1]] + below * nk[[i, j]]) * idy2;
            }
        }
        for i in 0..nx {
            for j in 1..ny {
                let left = if i == 0 { 2.0 } else { 1.0 };
                let right = if i + 1 == nx { 0.0 } else { 1.0 };
                out.v[[i, j]] = (nc[[i, j]] + nc[[i, j - 1]]) * idy2
                    + 0.5 * (right * nk[[i + 1, j]] + left * nk[[i, j]]) * idx2;
            }
        }
        out
    }
}

/// `div(nu D u)` with `D u = (grad u + grad u^T) / 2`, on interior faces.
pub fn stress_divergence(vel: &VelocityField, nu: &ScalarField) -> VelocityField {
    ViscousOperator::new(nu).apply(vel)
}

/// Advective `(u . grad) u` on interior faces, central differences except
/// next to the channel boundary.
pub fn convection(vel: &VelocityField) -> VelocityField {
    convection_with_upwind_region(vel, None)
}

/// As [`convection`], additionally switching to first-order upwinding at
/// nodes inside `region` (typically the obstacle's bounding box grown by
/// one cell).
pub fn convection_with_upwind_region(
    vel: &VelocityField,
    region: Option<&BoundingBox>,
) -> VelocityField {
    let g = vel.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (dx, dy) = (g.dx(), g.dy());
    let u = &vel.u;
    let v = &vel.v;
    let in_region = |x: f64, y: f64| region.is_some_and(|b| b.contains(x, y));
    let mut out = VelocityField::zeros(g);

    for i in 1..nx {
        for j in 0..ny {
            let c = u[[i, j]];
            let vv = 0.25 * (v[[i - 1, j]] + v[[i, j]] + v[[i - 1, j + 1]] + v[[i, j + 1]]);
            let (w, e) = (u[[i - 1, j]], u[[i + 1, j]]);
            let s = if j == 0 { -c } else { u[[i, j - 1]] };
            let n = if j + 1 == ny { -c } else { u[[i, j + 1]] };
            let (x, y) = g.x_face(i, j);
            let upwind = i == 1 || i + 1 == nx || j == 0 || j + 1 == ny || in_region(x, y);
            let (ddx, ddy) = derivatives(c, w, e, s, n, c, vv, dx, dy, upwind);
            out.u[[i, j]] = c * ddx + vv * ddy;
        }
    }
    for i in 0..nx {
        for j in 1..ny {
            let c = v[[i, j]];
            let uu = 0.25 * (u[[i, j - 1]] + u[[i + 1, j - 1]] + u[[i, j]] + u[[i + 1, j]]);
            let w = if i == 0 { -c } else { v[[i - 1, j]] };
            let e = if i + 1 == nx { c } else { v[[i + 1, j]] };
            let (s, n) = (v[[i, j - 1]], v[[i, j + 1]]);
            let (x, y) = g.y_face(i, j);
            let upwind = i == 0 || i + 1 == nx || j == 1 || j + 1 == ny || in_region(x, y);
            let (ddx, ddy) = derivatives(c, w, e, s, n, uu, c, dx, dy, upwind);
            out.v[[i, j]] = uu * ddx + c * ddy;
        }
    }
    out
}

/// x and y derivatives of a node value from its four neighbours, central or
/// upwinded by the transport velocity `(a, b)`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn derivatives(
    c: f64,
    w: f64,
    e: f64,
    s: f64,
    n: f64,
    a: f64,
    b: f64,
    dx: f64,
    dy: f64,
    upwind: bool,
) -> (f64, f64) {
    if upwind {
        let ddx = if a >= 0.0 { (c - w) / dx } else { (e - c) / dx };
        let ddy = if b >= 0.0 { (c - s) / dy } else { (n - c) / dy };
        (ddx, ddy)
    } else {
        ((e - w) / (2.0 * dx), (n - s) / (2.0 * dy))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_viscosity_field, ObstacleShape, ViscositySpec};
    use crate::grid::make_grid;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interior_u(g: &StaggeredGrid) -> impl Iterator<Item = (usize, usize)> {
        let (nx, ny) = (g.nx(), g.ny());
        (2..nx - 1).flat_map(move |i| (1..ny - 1).map(move |j| (i, j)))
    }

    fn interior_v(g: &StaggeredGrid) -> impl Iterator<Item = (usize, usize)> {
        let (nx, ny) = (g.nx(), g.ny());
        (1..nx - 1).flat_map(move |i| (2..ny - 1).map(move |j| (i, j)))
    }

    /// Discretely divergence-free field from a corner stream function.
    fn from_stream(g: &StaggeredGrid, psi: impl Fn(f64, f64) -> f64) -> VelocityField {
        let (dx, dy) = (g.dx(), g.dy());
        let ps = Array2::from_shape_fn((g.nx() + 1, g.ny() + 1), |(i, j)| {
            let (x, y) = g.corner(i, j);
            psi(x, y)
        });
        let u = Array2::from_shape_fn(g.u_shape(), |(i, j)| (ps[[i, j + 1]] - ps[[i, j]]) / dy);
        let v = Array2::from_shape_fn(g.v_shape(), |(i, j)| -(ps[[i + 1, j]] - ps[[i, j]]) / dx);
        VelocityField::from_arrays(g, u, v).unwrap()
    }

    #[test]
    fn divergence_examples() {
        let g = make_grid(1.3, 0.7, 9, 7).unwrap();
        let d = divergence(&VelocityField::from_fn(&g, |_, _| 2.5, |_, _| 0.0));
        assert!(d.max_abs() < 1e-12);
        let d = divergence(&VelocityField::from_fn(&g, |x, _| x, |_, y| -y));
        assert!(d.max_abs() < 1e-12);
        let d = divergence(&VelocityField::from_fn(&g, |x, _| x, |_, y| y));
        assert!(d.values.iter().all(|v| (v - 2.0).abs() < 1e-12));
    }

    #[test]
    fn pressure_gradient_examples() {
        let g = make_grid(1.0, 1.0, 6, 5).unwrap();
        assert_eq!(pressure_gradient(&ScalarField::constant(&g, 4.0)).max_abs(), 0.0);
        let gp = pressure_gradient(&ScalarField::from_fn(&g, |x, _| x));
        for i in 1..6 {
            for j in 0..5 {
                assert_relative_eq!(gp.u[[i, j]], 1.0, epsilon = 1e-12);
            }
        }
        assert_eq!(gp.u[[0, 2]], 0.0);
        assert_eq!(gp.u[[6, 2]], 0.0);
        assert!(gp.v.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn stress_divergence_of_quadratic_shear() {
        let g = make_grid(1.0, 1.0, 12, 10).unwrap();
        let nu = ScalarField::constant(&g, 1.0);
        let s = stress_divergence(&VelocityField::from_fn(&g, |_, y| y * y, |_, _| 0.0), &nu);
        for (i, j) in interior_u(&g) {
            assert_relative_eq!(s.u[[i, j]], 1.0, epsilon = 1e-9);
        }
        for (i, j) in interior_v(&g) {
            assert!(s.v[[i, j]].abs() < 1e-9);
        }
    }

    #[test]
    fn stress_divergence_vanishes_on_linear_fields() {
        let g = make_grid(1.2, 0.8, 10, 8).unwrap();
        let nu = ScalarField::constant(&g, 3.0);
        let vel = VelocityField::from_fn(&g, |x, y| 0.3 + 2.0 * x - y, |x, y| -1.0 + 0.5 * x + 4.0 * y);
        let s = stress_divergence(&vel, &nu);
        for (i, j) in interior_u(&g) {
            assert!(s.u[[i, j]].abs() < 1e-9);
        }
        for (i, j) in interior_v(&g) {
            assert!(s.v[[i, j]].abs() < 1e-9);
        }
    }

    #[test]
    fn stress_divergence_matches_half_laplacian_for_solenoidal_fields() {
        let g = make_grid(1.0, 0.6, 14, 11).unwrap();
        let nu = 2.5;
        let vel = from_stream(&g, |x, y| (2.0 * x).sin() * (3.0 * y).cos() + x * y * y);
        assert!(divergence(&vel).max_abs() < 1e-10);
        let s = stress_divergence(&vel, &ScalarField::constant(&g, nu));
        let (dx, dy) = (g.dx(), g.dy());
        for (i, j) in interior_u(&g) {
            let u = &vel.u;
            let lap = (u[[i + 1, j]] - 2.0 * u[[i, j]] + u[[i - 1, j]]) / (dx * dx)
                + (u[[i, j + 1]] - 2.0 * u[[i, j]] + u[[i, j - 1]]) / (dy * dy);
            assert_relative_eq!(2.0 * s.u[[i, j]], nu * lap, max_relative = 1e-12, epsilon = 1e-9);
        }
        for (i, j) in interior_v(&g) {
            let v = &vel.v;
            let lap = (v[[i + 1, j]] - 2.0 * v[[i, j]] + v[[i - 1, j]]) / (dx * dx)
                + (v[[i, j + 1]] - 2.0 * v[[i, j]] + v[[i, j - 1]]) / (dy * dy);
            assert_relative_eq!(2.0 * s.v[[i, j]], nu * lap, max_relative = 1e-12, epsilon = 1e-9);
        }
    }

    fn random_interior_field(g: &StaggeredGrid, rng: &mut ChaCha8Rng) -> VelocityField {
        let mut vel = VelocityField::zeros(g);
        for i in 1..g.nx() {
            for j in 0..g.ny() {
                vel.u[[i, j]] = rng.gen_range(-1.0..1.0);
            }
        }
        for i in 0..g.nx() {
            for j in 1..g.ny() {
                vel.v[[i, j]] = rng.gen_range(-1.0..1.0);
            }
        }
        vel
    }

    #[test]
    fn viscous_operator_is_symmetric_and_negative() {
        let g = make_grid(1.0, 0.5, 9, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let shape = ObstacleShape::RectWall {
            center_x: 0.5,
            width: 0.3,
            height: 0.2,
        };
        let nu = build_viscosity_field(&g, &shape, &ViscositySpec::new(1.0, 1e3).unwrap());
        let op = ViscousOperator::new(&nu);
        for _ in 0..5 {
            let a = random_interior_field(&g, &mut rng);
            let b = random_interior_field(&g, &mut rng);
            let lab = op.apply(&a).dot(&b);
            let lba = op.apply(&b).dot(&a);
            assert_relative_eq!(lab, lba, max_relative = 1e-12);
            assert!(op.apply(&a).dot(&a) < 0.0);
        }
    }

    #[test]
    fn negative_diagonal_matches_probing() {
        let g = make_grid(1.0, 0.5, 6, 5).unwrap();
        let shape = ObstacleShape::HalfDisc {
            center_x: 0.5,
            radius: 0.25,
        };
        let nu = build_viscosity_field(&g, &shape, &ViscositySpec::new(1.0, 50.0).unwrap());
        let mask = crate::geometry::rigid_mask(&g, &shape);
        for op in [ViscousOperator::new(&nu), ViscousOperator::with_mask(&nu, Some(&mask))] {
            let diag = op.negative_diagonal();
            for i in 1..g.nx() {
                for j in 0..g.ny() {
                    let mut e = VelocityField::zeros(&g);
                    e.u[[i, j]] = 1.0;
                    assert_relative_eq!(-op.apply(&e).u[[i, j]], diag.u[[i, j]], max_relative = 1e-12);
                }
            }
            for i in 0..g.nx() {
                for j in 1..g.ny() {
                    let mut e = VelocityField::zeros(&g);
                    e.v[[i, j]] = 1.0;
                    assert_relative_eq!(-op.apply(&e).v[[i, j]], diag.v[[i, j]], max_relative = 1e-12);
                }
            }
        }
    }

    /// Thomas algorithm for a tridiagonal system.
    fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
        let n = diag.len();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for k in 1..n {
            let denom = diag[k] - lower[k] * c[k - 1];
            c[k] = if k + 1 < n { upper[k] / denom } else { 0.0 };
            d[k] = (rhs[k] - lower[k] * d[k - 1]) / denom;
        }
        let mut x = vec![0.0; n];
        x[n - 1] = d[n - 1];
        for k in (0..n - 1).rev() {
            x[k] = d[k] - c[k] * x[k + 1];
        }
        x
    }

    #[test]
    fn two_layer_shear_matches_tridiagonal_solve() {
        let ny = 32;
        let g = make_grid(1.0, 1.0, 6, ny).unwrap();
        let dy = g.dy();
        for m in [10.0, 1e4] {
            let nu_row: Vec<f64> = (0..ny)
                .map(|j| if g.cell_center(0, j).1 < 0.5 { 1.0 } else { m })
                .collect();
            // (nu u')' = rhs with u = 0 on both walls, harmonic face nu.
            let rhs: Vec<f64> = (0..ny).map(|j| 1.0 + (j as f64 * 0.37).sin()).collect();
            let face = |j: usize| {
                // face between rows j-1 and j; walls copy the adjacent row
                if j == 0 {
                    nu_row[0]
                } else if j == ny {
                    nu_row[ny - 1]
                } else {
                    2.0 * nu_row[j - 1] * nu_row[j] / (nu_row[j - 1] + nu_row[j])
                }
            };
            let mut lower = vec![0.0; ny];
            let mut diag = vec![0.0; ny];
            let mut upper = vec![0.0; ny];
            for j in 0..ny {
                let (s, n) = (face(j), face(j + 1));
                let ws = if j == 0 { 2.0 } else { 1.0 };
                let wn = if j + 1 == ny { 2.0 } else { 1.0 };
                diag[j] = -(ws * s + wn * n) / (dy * dy);
                if j > 0 {
                    lower[j] = s / (dy * dy);
                }
                if j + 1 < ny {
                    upper[j] = n / (dy * dy);
                }
            }
            let profile = solve_tridiagonal(&lower, &diag, &upper, &rhs);

            let nu = ScalarField::from_array(
                &g,
                Array2::from_shape_fn(g.cell_shape(), |(_, j)| nu_row[j]),
            )
            .unwrap();
            let mut vel = VelocityField::zeros(&g);
            for ((_, j), u) in vel.u.indexed_iter_mut() {
                *u = profile[j];
            }
            let s = stress_divergence(&vel, &nu);
            let mut err: f64 = 0.0;
            for i in 1..g.nx() {
                for j in 0..ny {
                    err = err.max((2.0 * s.u[[i, j]] - rhs[j]).abs());
                }
            }
            assert!(err < 1e-10, "m = {m}: max node error {err:e}");
        }
    }

    #[test]
    fn convection_examples() {
        let g = make_grid(1.0, 1.0, 10, 10).unwrap();
        assert!(convection(&VelocityField::from_fn(&g, |_, _| 2.0, |_, _| 0.0)).max_abs() < 1e-12);
        assert_eq!(convection(&VelocityField::zeros(&g)).max_abs(), 0.0);

        let vel = VelocityField::from_fn(&g, |x, _| x, |_, y| -y);
        let c = convection(&vel);
        for (i, j) in interior_u(&g) {
            let (x, _) = g.x_face(i, j);
            assert_relative_eq!(c.u[[i, j]], x, epsilon = 1e-12);
        }
        for (i, j) in interior_v(&g) {
            let (_, y) = g.y_face(i, j);
            assert_relative_eq!(c.v[[i, j]], y, epsilon = 1e-12);
        }
    }

    #[test]
    fn convection_is_quadratic() {
        let g = make_grid(1.0, 0.5, 8, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vel = random_interior_field(&g, &mut rng);
        let mut scaled = vel.clone();
        scaled.scale(3.0);
        let mut expect = convection(&vel);
        expect.scale(9.0);
        assert!(convection(&scaled).max_abs_diff(&expect) < 1e-12 * expect.max_abs().max(1.0));
    }

    #[test]
    fn upwind_region_switches_scheme() {
        let g = make_grid(1.0, 1.0, 10, 10).unwrap();
        let vel = VelocityField::from_fn(&g, |x, _| x * x, |_, _| 0.0);
        let everywhere = BoundingBox {
            x0: -1.0,
            x1: 2.0,
            y0: -1.0,
            y1: 2.0,
        };
        let central = convection(&vel);
        let upwind = convection_with_upwind_region(&vel, Some(&everywhere));
        let (i, j) = (5, 5);
        let (x, _) = g.x_face(i, j);
        let dx = g.dx();
        assert_relative_eq!(central.u[[i, j]], x * x * 2.0 * x, epsilon = 1e-12);
        assert_relative_eq!(upwind.u[[i, j]], x * x * (x * x - (x - dx).powi(2)) / dx, epsilon = 1e-12);
    }

    #[test]
    fn strain_examples() {
        let g = make_grid(1.0, 1.0, 7, 6).unwrap();
        let rot = strain_norm_sq(&VelocityField::from_fn(&g, |_, y| -y, |x, _| x));
        assert!(rot.max_abs() < 1e-12);
        let shear = strain_norm_sq(&VelocityField::from_fn(&g, |_, y| y, |_, _| 0.0));
        assert!(shear.values.iter().all(|v| (v - 0.5).abs() < 1e-12));
        let ext = strain_norm_sq(&VelocityField::from_fn(&g, |x, _| x, |_, y| -y));
        assert!(ext.values.iter().all(|v| (v - 2.0).abs() < 1e-12));

        let nu = ScalarField::constant(&g, 7.0);
        let vel = VelocityField::from_fn(&g, |x, y| x * y, |x, y| (x - y).sin());
        let a = strain_norm_sq(&vel);
        let b = strain_norm_sq_weighted(&vel, &nu);
        for (p, q) in a.values.iter().zip(b.values.iter()) {
            assert_relative_eq!(p, q, max_relative = 1e-12);
        }
    }

    fn manufactured_error(n: usize, op: impl Fn(&VelocityField) -> VelocityField) -> f64 {
        // error against the analytic operator over nodes in the middle of the box
        let g = make_grid(1.0, 1.0, n, n).unwrap();
        let fu = |x: f64, y: f64| (x + 0.3).sin() * (2.0 * y).cos();
        let fv = |x: f64, y: f64| (x * y + 0.2).cos();
        let vel = VelocityField::from_fn(&g, fu, fv);
        let out = op(&vel);
        // central-difference derivatives of the exact fields with tiny step
        let h = 1e-5;
        let d = |f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64, ax: bool| {
            if ax {
                (f(x + h, y) - f(x - h, y)) / (2.0 * h)
            } else {
                (f(x, y + h) - f(x, y - h)) / (2.0 * h)
            }
        };
        let mut err: f64 = 0.0;
        for ((i, j), val) in out.u.indexed_iter() {
            let (x, y) = g.x_face(i, j);
            if !(0.3..=0.7).contains(&x) || !(0.3..=0.7).contains(&y) {
                continue;
            }
            let exact = fu(x, y) * d(&fu, x, y, true) + fv(x, y) * d(&fu, x, y, false);
            err = err.max((val - exact).abs());
        }
        err
    }

    #[test]
    fn convection_converges_at_second_order() {
        let ratio = manufactured_error(32, convection) / manufactured_error(64, convection);
        assert!((ratio - 4.0).abs() <= 1.0, "ratio {ratio}");
    }

    #[test]
    fn stress_divergence_converges_at_second_order() {
        let err = |n: usize| {
            let g = make_grid(1.0, 1.0, n, n).unwrap();
            let nu_f = |x: f64, y: f64| 1.0 + 0.5 * (x + y).sin();
            let fu = |x: f64, y: f64| (x + 0.3).sin() * (2.0 * y).cos();
            let fv = |x: f64, y: f64| (x * y + 0.2).cos();
            let nu = ScalarField::from_fn(&g, nu_f);
            let out = stress_divergence(&VelocityField::from_fn(&g, fu, fv), &nu);
            // x-component of div(nu D u) by nested finite differences
            let h = 1e-4;
            let du = |x: f64, y: f64, ax: bool| {
                if ax {
                    (fu(x + h, y) - fu(x - h, y)) / (2.0 * h)
                } else {
                    (fu(x, y + h) - fu(x, y - h)) / (2.0 * h)
                }
            };
            let dvx = |x: f64, y: f64| (fv(x + h, y) - fv(x - h, y)) / (2.0 * h);
            let s11 = |x: f64, y: f64| nu_f(x, y) * du(x, y, true);
            let s12 = |x: f64, y: f64| nu_f(x, y) * 0.5 * (du(x, y, false) + dvx(x, y));
            let mut e: f64 = 0.0;
            for ((i, j), val) in out.u.indexed_iter() {
                let (x, y) = g.x_face(i, j);
                if !(0.3..=0.7).contains(&x) || !(0.3..=0.7).contains(&y) {
                    continue;
                }
                let exact = (s11(x + h, y) - s11(x - h, y)) / (2.0 * h)
                    + (s12(x, y + h) - s12(x, y - h)) / (2.0 * h);
                e = e.max((val - exact).abs());
            }
            e
        };
        let ratio = err(32) / err(64);
        assert!((ratio - 4.0).abs() <= 1.0, "ratio {ratio}");
    }
}
