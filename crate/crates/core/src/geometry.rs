//! Obstacle shapes and the two-valued viscosity field they induce.
//!
//! Obstacles sit on the bottom wall `y = 0`. A cell belongs to the obstacle
//! when its center does; the same classification drives the viscosity field,
//! the rigid mask, and the obstacle integrals in diagnostics.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{ScalarField, StaggeredGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObstacleShape {
    None,
    /// Half disc centered at `(center_x, 0)`.
    HalfDisc { center_x: f64, radius: f64 },
    /// Rectangle `[center_x - width/2, center_x + width/2] x [0, height]`.
    RectWall {
        center_x: f64,
        width: f64,
        height: f64,
    },
}

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl BoundingBox {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn expanded(&self, dx: f64, dy: f64) -> Self {
        Self {
            x0: self.x0 - dx,
            x1: self.x1 + dx,
            y0: self.y0 - dy,
            y1: self.y1 + dy,
        }
    }
}

impl ObstacleShape {
    pub fn is_none(&self) -> bool {
        matches!(self, ObstacleShape::None)
    }

    /// Checks positivity and that the shape fits strictly inside the channel
    /// horizontally and below its top wall.
    pub fn validate(&self, lx: f64, ly: f64) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("obstacle {name} must be positive, got {v}")))
            }
        };
        let Some(bb) = self.bounding_box() else {
            return Ok(());
        };
        match *self {
            ObstacleShape::HalfDisc { radius, .. } => positive("radius", radius)?,
            ObstacleShape::RectWall { width, height, .. } => {
                positive("width", width)?;
                positive("height", height)?;
            }
            ObstacleShape::None => unreachable!(),
        }
        if !(bb.x0 > 0.0 && bb.x1 < lx) {
            return Err(Error::Config(format!(
                "obstacle spans x in [{}, {}], outside the channel (0, {lx})",
                bb.x0, bb.x1
            )));
        }
        if bb.y1 > ly {
            return Err(Error::Config(format!(
                "obstacle height {} exceeds channel height {ly}",
                bb.y1
            )));
        }
        Ok(())
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        match *self {
            ObstacleShape::None => None,
            ObstacleShape::HalfDisc { center_x, radius } => Some(BoundingBox {
                x0: center_x - radius,
                x1: center_x + radius,
                y0: 0.0,
                y1: radius,
            }),
            ObstacleShape::RectWall {
                center_x,
                width,
                height,
            } => Some(BoundingBox {
                x0: center_x - 0.5 * width,
                x1: center_x + 0.5 * width,
                y0: 0.0,
                y1: height,
            }),
        }
    }

    /// Exact area of the shape.
    pub fn area(&self) -> f64 {
        match *self {
            ObstacleShape::None => 0.0,
            ObstacleShape::HalfDisc { radius, .. } => 0.5 * std::f64::consts::PI * radius * radius,
            ObstacleShape::RectWall { width, height, .. } => width * height,
        }
    }
}

/// Point membership in the obstacle.
pub fn inside(shape: &ObstacleShape, x: f64, y: f64) -> bool {
    match *shape {
        ObstacleShape::None => false,
        ObstacleShape::HalfDisc { center_x, radius } => {
            let dx = x - center_x;
            y >= 0.0 && dx * dx + y * y < radius * radius
        }
        ObstacleShape::RectWall {
            center_x,
            width,
            height,
        } => (x - center_x).abs() < 0.5 * width && (0.0..height).contains(&y),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViscositySpec {
    pub nu_fluid: f64,
    /// Viscosity assigned inside the obstacle.
    pub m: f64,
}

impl ViscositySpec {
    pub fn new(nu_fluid: f64, m: f64) -> Result<Self> {
        let spec = Self { nu_fluid, m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu_fluid.is_finite() && self.nu_fluid > 0.0) {
            return Err(Error::Config(format!(
                "fluid viscosity must be positive, got {}",
                self.nu_fluid
            )));
        }
        if !(self.m.is_finite() && self.m >= self.nu_fluid) {
            return Err(Error::Config(format!(
                "obstacle viscosity m = {} must be finite and at least the fluid viscosity {}",
                self.m, self.nu_fluid
            )));
        }
        Ok(())
    }
}

/// Cells whose centers lie inside the obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    grid: StaggeredGrid,
    pub cells: Array2<bool>,
}

impl CellMask {
    pub fn empty(grid: &StaggeredGrid) -> Self {
        Self {
            grid: *grid,
            cells: Array2::from_elem(grid.cell_shape(), false),
        }
    }

    pub fn grid(&self) -> &StaggeredGrid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[[i, j]]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    pub fn any(&self) -> bool {
        self.cells.iter().any(|&c| c)
    }

    /// True when the x-face `(i, j)` borders a masked cell.
    pub fn touches_x_face(&self, i: usize, j: usize) -> bool {
        let nx = self.grid.nx();
        (i > 0 && self.cells[[i - 1, j]]) || (i < nx && self.cells[[i, j]])
    }

    /// True when the y-face `(i, j)` borders a masked cell.
    pub fn touches_y_face(&self, i: usize, j: usize) -> bool {
        let ny = self.grid.ny();
        (j > 0 && self.cells[[i, j - 1]]) || (j < ny && self.cells[[i, j]])
    }
}

pub fn rigid_mask(grid: &StaggeredGrid, shape: &ObstacleShape) -> CellMask {
    let cells = Array2::from_shape_fn(grid.cell_shape(), |(i, j)| {
        let (x, y) = grid.cell_center(i, j);
        inside(shape, x, y)
    });
    CellMask { grid: *grid, cells }
}

/// `m` at cells inside the obstacle, `nu_fluid` elsewhere.
pub fn build_viscosity_field(
    grid: &StaggeredGrid,
    shape: &ObstacleShape,
    spec: &ViscositySpec,
) -> ScalarField {
    ScalarField::from_fn(grid, |x, y| {
        if inside(shape, x, y) {
            spec.m
        } else {
            spec.nu_fluid
        }
    })
}

/// Harmonic mean of two cell viscosities.
pub fn face_viscosity(nu_a: f64, nu_b: f64) -> f64 {
    2.0 * nu_a * nu_b / (nu_a + nu_b)
}

/// Harmonic mean `n / sum(1/nu)` of the given values.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    let inv: f64 = values.iter().map(|v| 1.0 / v).sum();
    values.len() as f64 / inv
}

/// Viscosity at every x-face: harmonic mean of the two neighbouring cells,
/// or a copy of the single neighbour on the inlet and outlet columns.
pub fn x_face_viscosity(nu: &ScalarField) -> Array2<f64> {
    let g = nu.grid();
    let nx = g.nx();
    Array2::from_shape_fn(g.u_shape(), |(i, j)| {
        if i == 0 {
            nu.values[[0, j]]
        } else if i == nx {
            nu.values[[nx - 1, j]]
        } else {
            face_viscosity(nu.values[[i - 1, j]], nu.values[[i, j]])
        }
    })
}

/// Viscosity at every grid corner: harmonic mean of the (up to four)
/// surrounding cells.
///
/// With a mask, masked cells count as infinitely viscous: they drop out of
/// the reciprocal sum but still count towards the cell total, which places
/// a no-slip wall on the mask boundary. Corners surrounded only by masked
/// cells get `fallback`.
pub fn corner_viscosity(nu: &ScalarField, mask: Option<&CellMask>, fallback: f64) -> Array2<f64> {
    let g = nu.grid();
    let (nx, ny) = (g.nx(), g.ny());
    Array2::from_shape_fn((nx + 1, ny + 1), |(i, j)| {
        let mut count = 0usize;
        let mut inv = 0.0;
        for ci in [i.wrapping_sub(1), i] {
            for cj in [j.wrapping_sub(1), j] {
                if ci >= nx || cj >= ny {
                    continue;
                }
                count += 1;
                if mask.is_some_and(|m| m.get(ci, cj)) {
                    continue;
                }
                inv += 1.0 / nu.values[[ci, cj]];
            }
        }
        if inv == 0.0 {
            fallback
        } else {
            count as f64 / inv
        }
    })
}
