//! Norms and profiles measured on converged flows.

use crate::error::{Error, Result};
use crate::geometry::{inside, ObstacleShape};
use crate::grid::{speed_at_centers, ScalarField, StaggeredGrid, VelocityField};
use crate::operators::{divergence, strain_norm_sq_weighted, velocity_gradient};
use crate::solver::{Mode, SimConfig, SteadyResult};

/// Cross-channel profile of the velocity magnitude at one cell column.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRecord {
    /// Requested station.
    pub x_station: f64,
    /// Index of the sampled cell column.
    pub column: usize,
    /// Cell-center heights, increasing.
    pub y: Vec<f64>,
    pub speed: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileDifference {
    pub l2: f64,
    pub linf: f64,
    /// `l2` divided by the L2 norm of the reference profile.
    pub relative_l2: f64,
}

/// An integral over the obstacle region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionIntegral {
    pub value: f64,
    /// Set when there is no obstacle (or it covers no cell center); the
    /// value is then 0.
    pub empty_region: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    /// Obstacle viscosity, `None` for a rigid-obstacle run.
    pub m: Option<f64>,
    /// `int_S |D u|^2`.
    pub deformation_in_s: f64,
    /// `int nu |D u|^2` over the channel.
    pub total_dissipation: f64,
    pub grad_max: f64,
    pub grad_l2: f64,
    pub div_max: f64,
    pub profile: ProfileRecord,
    pub diff_vs_rigid: Option<ProfileDifference>,
    pub steps: usize,
    pub converged: bool,
}

impl DiagnosticsRecord {
    /// Fills in the comparison against a rigid-obstacle profile.
    pub fn compare_with(&mut self, rigid: &ProfileRecord) -> Result<()> {
        self.diff_vs_rigid = Some(profile_difference(&self.profile, rigid)?);
        Ok(())
    }
}

pub const DEFAULT_STATION: f64 = 0.4;

/// `int_S |D u|^2` over cells whose centers lie in `shape`. The strain is
/// evaluated with [`strain_norm_sq_weighted`] so that the shear felt across
/// the viscosity jump is not attributed to the obstacle side.
pub fn deformation_energy_in_s(vel: &VelocityField, shape: &ObstacleShape, nu: &ScalarField) -> RegionIntegral {
    let g = vel.grid();
    let strain = strain_norm_sq_weighted(vel, nu);
    let mut sum = 0.0;
    let mut cells = 0usize;
    for ((i, j), s) in strain.values.indexed_iter() {
        let (x, y) = g.cell_center(i, j);
        if inside(shape, x, y) {
            sum += s;
            cells += 1;
        }
    }
    RegionIntegral {
        value: sum * g.cell_area(),
        empty_region: cells == 0,
    }
}

/// `int nu |D u|^2` over the whole channel.
pub fn total_dissipation(vel: &VelocityField, nu: &ScalarField) -> f64 {
    let strain = strain_norm_sq_weighted(vel, nu);
    let sum: f64 = strain
        .values
        .iter()
        .zip(nu.values.iter())
        .map(|(s, n)| s * n)
        .sum();
    sum * vel.grid().cell_area()
}

/// Largest velocity derivative over all MAC locations.
pub fn max_gradient(vel: &VelocityField) -> f64 {
    velocity_gradient(vel).max_abs()
}

/// `||grad u||_L2`.
pub fn gradient_l2(vel: &VelocityField) -> f64 {
    velocity_gradient(vel).l2_norm_sq(vel.grid()).sqrt()
}

/// `||u||_L2` with face values weighted by the cell area.
pub fn velocity_l2(vel: &VelocityField) -> f64 {
    vel.dot(vel).sqrt()
}

/// Velocity magnitude along the cell column whose center is nearest to
/// `x_station` (ties go to the higher index).
pub fn extract_profile(vel: &VelocityField, x_station: f64) -> Result<ProfileRecord> {
    let g = vel.grid();
    if !(x_station > 0.0 && x_station < g.lx()) {
        return Err(Error::Config(format!(
            "profile station x = {x_station} lies outside the channel (0, {})",
            g.lx()
        )));
    }
    let column = nearest_column(g, x_station);
    let speed = speed_at_centers(vel);
    Ok(ProfileRecord {
        x_station,
        column,
        y: (0..g.ny()).map(|j| g.cell_center(column, j).1).collect(),
        speed: speed.values.row(column).to_vec(),
    })
}

fn nearest_column(g: &StaggeredGrid, x: f64) -> usize {
    // centers sit at (i + 1/2) dx, so the nearest one is floor(x / dx); the
    // small shift keeps stations on a face from rounding down
    let i = (x / g.dx() + 1e-9).floor() as usize;
    i.min(g.nx() - 1)
}

pub fn profile_difference(a: &ProfileRecord, b: &ProfileRecord) -> Result<ProfileDifference> {
    if a.speed.len() != b.speed.len() || a.y.len() != a.speed.len() || b.y.len() != b.speed.len() {
        return Err(Error::Usage(format!(
            "profiles have {} and {} samples",
            a.speed.len(),
            b.speed.len()
        )));
    }
    if a.x_station != b.x_station || a.column != b.column {
        return Err(Error::Usage(format!(
            "profiles taken at different stations ({} vs {})",
            a.x_station, b.x_station
        )));
    }
    let h = match a.y.as_slice() {
        [y0, y1, ..] => y1 - y0,
        _ => 1.0,
    };
    let norm = |it: &mut dyn Iterator<Item = f64>| (h * it.map(|d| d * d).sum::<f64>()).sqrt();
    let l2 = norm(&mut a.speed.iter().zip(&b.speed).map(|(x, y)| x - y));
    let linf = a
        .speed
        .iter()
        .zip(&b.speed)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let reference = norm(&mut b.speed.iter().copied());
    let relative_l2 = if l2 == 0.0 {
        0.0
    } else if reference > 0.0 {
        l2 / reference
    } else {
        f64::INFINITY
    };
    Ok(ProfileDifference { l2, linf, relative_l2 })
}

/// Every diagnostic of a finished run, profiled at `x_station`.
pub fn collect(result: &SteadyResult, config: &SimConfig, x_station: f64) -> Result<DiagnosticsRecord> {
    let vel = &result.vel;
    let nu = config.viscosity_field();
    Ok(DiagnosticsRecord {
        m: (config.mode != Mode::Rigid).then_some(config.viscosity.m),
        deformation_in_s: deformation_energy_in_s(vel, &config.shape, &nu).value,
        total_dissipation: total_dissipation(vel, &nu),
        grad_max: max_gradient(vel),
        grad_l2: gradient_l2(vel),
        div_max: divergence(vel).max_abs(),
        profile: extract_profile(vel, x_station)?,
        diff_vs_rigid: None,
        steps: result.steps,
        converged: result.converged,
    })
}
