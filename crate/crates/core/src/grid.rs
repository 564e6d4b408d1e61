//! Uniform marker-and-cell grid and the field containers built on it.
//!
//! Indexing convention, used by every operator in the crate:
//!
//! * cell `(i, j)` has its center at `((i + 1/2) dx, (j + 1/2) dy)`,
//!   for `i < nx`, `j < ny`;
//! * x-face `(i, j)` sits at `(i dx, (j + 1/2) dy)` for `i <= nx`, `j < ny`
//!   and carries the `u` component;
//! * y-face `(i, j)` sits at `((i + 1/2) dx, j dy)` for `i < nx`, `j <= ny`
//!   and carries the `v` component;
//! * corner `(i, j)` sits at `(i dx, j dy)` for `i <= nx`, `j <= ny`.
//!
//! Face `i = 0` / `i = nx` are the inlet / outlet, `j = 0` / `j = ny` the
//! bottom / top walls.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaggeredGrid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
}

/// Builds a grid covering `[0, lx] x [0, ly]` with `nx x ny` cells.
pub fn make_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<StaggeredGrid> {
    StaggeredGrid::new(lx, ly, nx, ny)
}

impl StaggeredGrid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx.is_finite() && lx > 0.0) || !(ly.is_finite() && ly > 0.0) {
            return Err(Error::Config(format!(
                "channel dimensions must be positive and finite (got lx = {lx}, ly = {ly})"
            )));
        }
        if nx < 2 || ny < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 cells per direction (got nx = {nx}, ny = {ny})"
            )));
        }
        Ok(Self { lx, ly, nx, ny })
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    pub fn x_face(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx(), (j as f64 + 0.5) * self.dy())
    }

    pub fn y_face(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx(), j as f64 * self.dy())
    }

    pub fn corner(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.dx(), j as f64 * self.dy())
    }

    pub fn cell_shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn u_shape(&self) -> (usize, usize) {
        (self.nx + 1, self.ny)
    }

    pub fn v_shape(&self) -> (usize, usize) {
        (self.nx, self.ny + 1)
    }
}

/// Cell-centered scalar (pressure, viscosity, strain density, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: StaggeredGrid,
    pub values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            grid: *grid,
            values: Array2::zeros(grid.cell_shape()),
        }
    }

    pub fn constant(grid: &StaggeredGrid, value: f64) -> Self {
        Self {
            grid: *grid,
            values: Array2::from_elem(grid.cell_shape(), value),
        }
    }

    pub fn from_fn(grid: &StaggeredGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = Array2::from_shape_fn(grid.cell_shape(), |(i, j)| {
            let (x, y) = grid.cell_center(i, j);
            f(x, y)
        });
        Self {
            grid: *grid,
            values,
        }
    }

    pub fn from_array(grid: &StaggeredGrid, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.cell_shape() {
            return Err(Error::Usage(format!(
                "scalar field shape {:?} does not match grid {:?}",
                values.dim(),
                grid.cell_shape()
            )));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sum of `value * dx * dy` over all cells.
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.grid.cell_area()
    }
}

/// Face-centered velocity: `u` on x-faces, `v` on y-faces.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: StaggeredGrid,
    pub u: Array2<f64>,
    pub v: Array2<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            grid: *grid,
            u: Array2::zeros(grid.u_shape()),
            v: Array2::zeros(grid.v_shape()),
        }
    }

    /// Samples an analytic velocity `(u(x, y), v(x, y))` at face positions.
    pub fn from_fn(
        grid: &StaggeredGrid,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let u = Array2::from_shape_fn(grid.u_shape(), |(i, j)| {
            let (x, y) = grid.x_face(i, j);
            fu(x, y)
        });
        let v = Array2::from_shape_fn(grid.v_shape(), |(i, j)| {
            let (x, y) = grid.y_face(i, j);
            fv(x, y)
        });
        Self { grid: *grid, u, v }
    }

    pub fn from_arrays(grid: &StaggeredGrid, u: Array2<f64>, v: Array2<f64>) -> Result<Self> {
        if u.dim() != grid.u_shape() || v.dim() != grid.v_shape() {
            return Err(Error::Usage(format!(
                "velocity shapes u {:?} / v {:?} do not match grid (expected {:?} / {:?})",
                u.dim(),
                v.dim(),
                grid.u_shape(),
                grid.v_shape()
            )));
        }
        Ok(Self { grid: *grid, u, v })
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest componentwise difference to `other`.
    pub fn max_abs_diff(&self, other: &VelocityField) -> f64 {
        let du = self
            .u
            .iter()
            .zip(other.u.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let dv = self
            .v
            .iter()
            .zip(other.v.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        du.max(dv)
    }

    /// `self + alpha * other`, componentwise.
    pub fn add_scaled(&mut self, alpha: f64, other: &VelocityField) {
        self.u.scaled_add(alpha, &other.u);
        self.v.scaled_add(alpha, &other.v);
    }

    pub fn scale(&mut self, alpha: f64) {
        self.u.mapv_inplace(|x| x * alpha);
        self.v.mapv_inplace(|x| x * alpha);
    }

    /// Euclidean inner product over all faces, weighted by cell area.
    pub fn dot(&self, other: &VelocityField) -> f64 {
        let su: f64 = self.u.iter().zip(other.u.iter()).map(|(a, b)| a * b).sum();
        let sv: f64 = self.v.iter().zip(other.v.iter()).map(|(a, b)| a * b).sum();
        (su + sv) * self.grid.cell_area()
    }
}

/// Averages each component from its two bracketing faces to the cell centers.
pub fn interpolate_velocity_to_centers(vel: &VelocityField) -> (ScalarField, ScalarField) {
    let g = vel.grid();
    let uc = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        0.5 * (vel.u[[i, j]] + vel.u[[i + 1, j]])
    });
    let vc = Array2::from_shape_fn(g.cell_shape(), |(i, j)| {
        0.5 * (vel.v[[i, j]] + vel.v[[i, j + 1]])
    });
    (
        ScalarField {
            grid: *g,
            values: uc,
        },
        ScalarField {
            grid: *g,
            values: vc,
        },
    )
}

/// Velocity magnitude at cell centers.
pub fn speed_at_centers(vel: &VelocityField) -> ScalarField {
    let (uc, vc) = interpolate_velocity_to_centers(vel);
    let mut out = uc;
    out.values.zip_mut_with(&vc.values, |a, b| *a = a.hypot(*b));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn channel_grid_spacing() {
        let g = make_grid(1.2, 0.41, 192, 64).unwrap();
        assert_relative_eq!(g.dx(), 0.00625, max_relative = 1e-14);
        assert_relative_eq!(g.dy(), 0.00640625, max_relative = 1e-14);
        let g = make_grid(1.0, 1.0, 2, 2).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.dy(), 0.5);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(matches!(make_grid(1.0, 1.0, 2, 1), Err(Error::Config(_))));
        assert!(make_grid(0.0, 1.0, 4, 4).is_err());
        assert!(make_grid(1.0, -1.0, 4, 4).is_err());
        assert!(make_grid(f64::NAN, 1.0, 4, 4).is_err());
    }

    #[test]
    fn positions_follow_convention() {
        let g = make_grid(2.0, 1.0, 4, 2).unwrap();
        assert_eq!(g.x_face(1, 0), (0.5, 0.25));
        assert_eq!(g.cell_center(1, 0), (0.75, 0.25));
        assert_eq!(g.y_face(0, 2), (0.25, 1.0));
        assert_eq!(g.corner(4, 2), (2.0, 1.0));
    }

    #[test]
    fn constructors_zero_initialize_with_matching_shapes() {
        let g = make_grid(1.0, 1.0, 5, 3).unwrap();
        let vel = VelocityField::zeros(&g);
        assert_eq!(vel.u.dim(), (6, 3));
        assert_eq!(vel.v.dim(), (5, 4));
        assert!(vel.is_finite());
        assert_eq!(vel.max_abs(), 0.0);
        let p = ScalarField::zeros(&g);
        assert_eq!(p.values.dim(), (5, 3));
        assert!(p.is_finite());
        assert!(VelocityField::from_arrays(&g, Array2::zeros((5, 3)), Array2::zeros((5, 4))).is_err());
    }

    #[test]
    fn interpolation_is_exact_for_constants_and_linears() {
        let g = make_grid(1.0, 0.5, 8, 4).unwrap();
        let vel = VelocityField::from_fn(&g, |_, _| 3.0, |_, _| 0.0);
        let (uc, vc) = interpolate_velocity_to_centers(&vel);
        assert!(uc.values.iter().all(|&x| x == 3.0));
        assert!(vc.values.iter().all(|&x| x == 0.0));

        let vel = VelocityField::from_fn(&g, |x, _| x, |_, y| 2.0 * y);
        let (uc, vc) = interpolate_velocity_to_centers(&vel);
        for ((i, j), &val) in uc.values.indexed_iter() {
            let (x, y) = g.cell_center(i, j);
            assert_relative_eq!(val, x, epsilon = 1e-15);
            assert_relative_eq!(vc.values[[i, j]], 2.0 * y, epsilon = 1e-15);
        }

        let (uc, vc) = interpolate_velocity_to_centers(&VelocityField::zeros(&g));
        assert_eq!(uc.max_abs() + vc.max_abs(), 0.0);
    }

    #[test]
    fn interpolation_converges_at_second_order() {
        let err = |n: usize| {
            let g = make_grid(1.0, 1.0, n, n).unwrap();
            let f = |x: f64, y: f64| (2.0 * x).sin() * (1.0 + y * y);
            let vel = VelocityField::from_fn(&g, f, |_, _| 0.0);
            let (uc, _) = interpolate_velocity_to_centers(&vel);
            uc.values
                .indexed_iter()
                .map(|((i, j), v)| {
                    let (x, y) = g.cell_center(i, j);
                    (v - f(x, y)).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(16) / err(32);
        assert!((ratio - 4.0).abs() <= 0.8, "ratio {ratio}");
    }
}
