//! Pseudo-time marching to steady state with an incremental
//! pressure-correction (projection) scheme.
//!
//! Each step computes a tentative velocity from the momentum equation with
//! the old pressure, solves a Poisson problem for the pressure increment,
//! and projects the tentative velocity onto the discretely
//! divergence-free fields. Convection is explicit; the viscous term is
//! explicit or backward Euler (see [`ViscousTreatment`]).


use crate::accel::Anderson;
use crate::error::{Error, Result};
use crate::geometry::{build_viscosity_field, rigid_mask, CellMask, ObstacleShape, ViscositySpec};
use crate::grid::{ScalarField, StaggeredGrid, VelocityField};
use crate::implicit::{FreeFaces, ViscousSystem};
use crate::linalg::CgStats;
use crate::operators::{convection_with_upwind_region, divergence, pressure_gradient, ViscousOperator};
use crate::poisson::PressureSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Full Navier-Stokes with the obstacle as a high-viscosity region.
    Penalty,
    /// Obstacle cells removed from the flow; velocity pinned to zero on
    /// every face touching them.
    Rigid,
    /// Penalty viscosity without the convection term.
    Stokes,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Penalty => "penalty",
            Mode::Rigid => "rigid",
            Mode::Stokes => "stokes",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViscousTreatment {
    /// Implicit whenever the explicit viscous step limit would be tighter
    /// than the convective one.
    Auto,
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BodyForce {
    Zero,
    Uniform { fx: f64, fy: f64 },
    /// Force per unit volume sampled on the velocity faces.
    Field(VelocityField),
}

impl BodyForce {
    fn max_abs(&self) -> f64 {
        match self {
            BodyForce::Zero => 0.0,
            BodyForce::Uniform { fx, fy } => fx.hypot(*fy),
            BodyForce::Field(f) => f.max_abs(),
        }
    }

    /// The force sampled on the faces of `grid`.
    pub fn sample(&self, grid: &StaggeredGrid) -> VelocityField {
        match self {
            BodyForce::Zero => VelocityField::zeros(grid),
            BodyForce::Uniform { fx, fy } => {
                let (fx, fy) = (*fx, *fy);
                VelocityField::from_fn(grid, |_, _| fx, |_, _| fy)
            }
            BodyForce::Field(f) => f.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub grid: StaggeredGrid,
    pub shape: ObstacleShape,
    pub viscosity: ViscositySpec,
    pub mode: Mode,
    /// Peak of the parabolic inlet profile.
    pub u_max: f64,
    pub body_force: BodyForce,
    /// Fixed time step; `None` selects [`stable_dt`].
    pub dt: Option<f64>,
    pub cfl_safety: f64,
    /// Threshold on `max |u^{n+1} - u^n| / dt`; `None` means
    /// `1e-6 * velocity_scale / ly`.
    pub steady_tol: Option<f64>,
    pub max_steps: usize,
    pub poisson_tol: f64,
    pub poisson_max_iters: usize,
    pub viscous: ViscousTreatment,
    /// Adds `-nu div u*` to the pressure update. Same steady states as the
    /// plain update, but pressure errors no longer stall where `dt nu / h^2`
    /// is large (inside a high-viscosity obstacle).
    pub rotational_pressure: bool,
    /// History length of Anderson mixing applied to the step map once the
    /// inlet ramp is over; 0 disables it. The fixed points are unchanged.
    pub anderson_depth: usize,
}

pub const DEFAULT_CFL_SAFETY: f64 = 0.9;
pub const DEFAULT_MAX_STEPS: usize = 5000;
pub const DEFAULT_POISSON_TOL: f64 = 1e-9;
pub const DEFAULT_POISSON_MAX_ITERS: usize = 5000;
pub const DEFAULT_ANDERSON_DEPTH: usize = 10;

impl SimConfig {
    /// A penalty-mode configuration with default scheme parameters.
    pub fn new(grid: StaggeredGrid, shape: ObstacleShape, viscosity: ViscositySpec, u_max: f64) -> Self {
        Self {
            grid,
            shape,
            viscosity,
            mode: Mode::Penalty,
            u_max,
            body_force: BodyForce::Zero,
            dt: None,
            cfl_safety: DEFAULT_CFL_SAFETY,
            steady_tol: None,
            max_steps: DEFAULT_MAX_STEPS,
            poisson_tol: DEFAULT_POISSON_TOL,
            poisson_max_iters: DEFAULT_POISSON_MAX_ITERS,
            viscous: ViscousTreatment::Auto,
            rotational_pressure: true,
            anderson_depth: DEFAULT_ANDERSON_DEPTH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate(self.grid.lx(), self.grid.ly())?;
        self.viscosity.validate()?;
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.u_max.is_finite() && self.u_max >= 0.0) {
            return bad("u_max must be finite and non-negative");
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return bad("dt must be positive");
            }
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return bad("cfl_safety must lie in (0, 1]");
        }
        if let Some(tol) = self.steady_tol {
            if !(tol.is_finite() && tol > 0.0) {
                return bad("steady_tol must be positive");
            }
        }
        if !(self.poisson_tol > 0.0 && self.poisson_tol < 1.0) {
            return bad("poisson_tol must lie in (0, 1)");
        }
        if self.max_steps == 0 || self.poisson_max_iters == 0 {
            return bad("max_steps and poisson_max_iters must be positive");
        }
        if let BodyForce::Field(f) = &self.body_force {
            if f.grid() != &self.grid || !f.is_finite() {
                return bad("body force field must be finite and live on the simulation grid");
            }
        }
        Ok(())
    }

    /// Characteristic velocity: the inlet peak, or the viscous velocity
    /// scale of the body force when there is no inflow.
    pub fn velocity_scale(&self) -> f64 {
        if self.u_max > 0.0 {
            return self.u_max;
        }
        let f = self.body_force.max_abs();
        if f > 0.0 {
            f * self.grid.ly().powi(2) / self.viscosity.nu_fluid
        } else {
            1.0
        }
    }

    /// Upper estimate of the flow speed used for the convective step limit;
    /// obstacles roughly double the inlet peak in the constriction.
    pub fn speed_estimate(&self) -> f64 {
        2.0 * self.velocity_scale()
    }

    pub fn steady_tolerance(&self) -> f64 {
        self.steady_tol
            .unwrap_or(1e-6 * self.velocity_scale() / self.grid.ly())
    }

    /// The viscosity field the stress operator sees. In rigid mode the
    /// obstacle viscosity is irrelevant and the fluid value is used throughout.
    pub fn viscosity_field(&self) -> ScalarField {
        match self.mode {
            Mode::Rigid => ScalarField::constant(&self.grid, self.viscosity.nu_fluid),
            Mode::Penalty | Mode::Stokes => build_viscosity_field(&self.grid, &self.shape, &self.viscosity),
        }
    }

    pub fn rigid_mask(&self) -> Option<CellMask> {
        match self.mode {
            Mode::Rigid => Some(rigid_mask(&self.grid, &self.shape)),
            _ => None,
        }
    }

    fn max_viscosity(&self) -> f64 {
        match self.mode {
            Mode::Rigid => self.viscosity.nu_fluid,
            _ if self.shape.is_none() => self.viscosity.nu_fluid,
            _ => self.viscosity.m,
        }
    }

    pub fn implicit_viscosity(&self) -> bool {
        match self.viscous {
            ViscousTreatment::Explicit => false,
            ViscousTreatment::Implicit => true,
            ViscousTreatment::Auto => {
                let g = &self.grid;
                let h = g.dx().min(g.dy());
                viscous_dt_limit(g.dx(), g.dy(), self.max_viscosity()) < h / self.speed_estimate()
            }
        }
    }

    pub fn time_step(&self) -> f64 {
        self.dt
            .unwrap_or_else(|| stable_dt(self, self.max_viscosity()))
    }

    fn ramp_steps(&self) -> usize {
        (self.max_steps / 100).max(1)
    }
}

fn viscous_dt_limit(dx: f64, dy: f64, nu_max: f64) -> f64 {
    0.25 * dx.min(dy).powi(2) / nu_max
}

/// `cfl_safety * min(dx / speed, 0.25 min(dx, dy)^2 / nu_max)`.
pub fn stable_dt_bound(dx: f64, dy: f64, speed: f64, nu_max: f64, cfl_safety: f64) -> f64 {
    let convective = if speed > 0.0 { dx / speed } else { f64::INFINITY };
    cfl_safety * convective.min(viscous_dt_limit(dx, dy, nu_max))
}

/// Largest stable explicit step for `config`. The viscous limit is dropped
/// when the viscous term is treated implicitly.
pub fn stable_dt(config: &SimConfig, nu_max: f64) -> f64 {
    let g = &config.grid;
    if config.implicit_viscosity() {
        let speed = config.speed_estimate();
        config.cfl_safety * g.dx().min(g.dy()) / speed
    } else {
        stable_dt_bound(g.dx(), g.dy(), config.speed_estimate(), nu_max, config.cfl_safety)
    }
}

/// Parabolic inlet profile with peak `u_max` at mid-height.
pub fn inlet_profile(y: f64, u_max: f64, ly: f64) -> f64 {
    u_max * 4.0 * y * (ly - y) / (ly * ly)
}

fn impose_boundary_data(vel: &mut VelocityField, config: &SimConfig, inlet_scale: f64, mask: Option<&CellMask>) {
    let g = config.grid;
    let (nx, ny) = (g.nx(), g.ny());
    for j in 0..ny {
        let (_, y) = g.x_face(0, j);
        vel.u[[0, j]] = inlet_scale * inlet_profile(y, config.u_max, g.ly());
        vel.u[[nx, j]] = vel.u[[nx - 1, j]];
    }
    for i in 0..nx {
        vel.v[[i, 0]] = 0.0;
        vel.v[[i, ny]] = 0.0;
    }
    if let Some(mask) = mask {
        zero_masked_faces(vel, mask);
    }
}

fn zero_masked_faces(vel: &mut VelocityField, mask: &CellMask) {
    let g = *mask.grid();
    for i in 0..=g.nx() {
        for j in 0..g.ny() {
            if mask.touches_x_face(i, j) {
                vel.u[[i, j]] = 0.0;
            }
        }
    }
    for i in 0..g.nx() {
        for j in 0..=g.ny() {
            if mask.touches_y_face(i, j) {
                vel.v[[i, j]] = 0.0;
            }
        }
    }
}

/// Imposes the parabolic inlet, zero-gradient outlet, no-slip walls and,
/// in rigid mode, zero velocity on faces touching the obstacle.
pub fn apply_boundary_conditions(vel: &VelocityField, config: &SimConfig) -> VelocityField {
    let mut out = vel.clone();
    let mask = config.rigid_mask();
    impose_boundary_data(&mut out, config, 1.0, mask.as_ref());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub vel: VelocityField,
    pub p: ScalarField,
}

impl FlowState {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            vel: VelocityField::zeros(grid),
            p: ScalarField::zeros(grid),
        }
    }
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    /// `max |u^{n+1} - u^n| / dt`.
    pub steady_residual: f64,
    /// `max |div u^{n+1}|`.
    pub div_max: f64,
    /// Bound on `div_max` implied by the achieved Poisson residual:
    /// `dt * ||r||_2` plus a rounding allowance.
    pub div_bound: f64,
    pub poisson: CgStats,
    pub viscous: Option<CgStats>,
}

/// Backward-Euler viscous step `(I - dt div(nu D .)) u_new = vel` with the
/// boundary faces of `vel` held fixed.
pub fn implicit_viscous_step(
    vel: &VelocityField,
    nu: &ScalarField,
    dt: f64,
    tol: f64,
    max_iters: usize,
) -> Result<VelocityField> {
    let op = ViscousOperator::new(nu);
    let free = FreeFaces::new(vel.grid(), None);
    let nu_ref = nu.values.iter().cloned().fold(f64::INFINITY, f64::min);
    ViscousSystem::new(op, free, nu, dt, nu_ref)
        .solve(vel, vel, tol, max_iters)
        .map(|(u, _)| u)
}

/// A configured run: precomputed operators plus the evolving state.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    nu: ScalarField,
    mask: Option<CellMask>,
    viscous_op: ViscousOperator,
    pressure: PressureSystem,
    free: FreeFaces,
    implicit_system: Option<ViscousSystem>,
    force: VelocityField,
    upwind_box: Option<crate::geometry::BoundingBox>,
    dt: f64,
    implicit: bool,
    step: usize,
    state: FlowState,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        let nu = config.viscosity_field();
        Self::with_viscosity(config, nu)
    }

    /// Uses `nu` in place of the field derived from the configuration.
    pub fn with_viscosity(config: SimConfig, nu: ScalarField) -> Result<Self> {
        config.validate()?;
        if nu.grid() != &config.grid || !nu.values.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Config("viscosity field must be positive on the simulation grid".into()));
        }
        let g = config.grid;
        let mask = config.rigid_mask();
        let viscous_op = ViscousOperator::with_mask(&nu, mask.as_ref());
        let pressure = PressureSystem::new(&g, mask.as_ref());
        let free = FreeFaces::new(&g, mask.as_ref());
        let force = config.body_force.sample(&g);
        let upwind_box = config.shape.bounding_box().map(|b| b.expanded(g.dx(), g.dy()));
        let dt = config.time_step();
        let implicit = config.implicit_viscosity();
        let implicit_system = implicit
            .then(|| ViscousSystem::new(viscous_op.clone(), free.clone(), &nu, dt, config.viscosity.nu_fluid));
        Ok(Self {
            nu,
            mask,
            viscous_op,
            pressure,
            free,
            implicit_system,
            force,
            upwind_box,
            dt,
            implicit,
            step: 0,
            state: FlowState::zeros(&g),
            config,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &FlowState {
        &self.state
    }

    pub fn set_state(&mut self, state: FlowState) {
        self.state = state;
    }

    pub fn viscosity(&self) -> &ScalarField {
        &self.nu
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn uses_implicit_viscosity(&self) -> bool {
        self.implicit
    }

    fn inlet_scale(&self, step: usize) -> f64 {
        let ramp = self.config.ramp_steps();
        ((step + 1) as f64 / ramp as f64).min(1.0)
    }

    /// Advances one pressure-correction step.
    pub fn step(&mut self) -> Result<StepReport> {
        let step = self.step + 1;
        let report = self.advance(step).map_err(|e| Error::AtStep {
            step,
            source: Box::new(e),
        })?;
        self.step = step;
        Ok(report)
    }

    fn advance(&mut self, step: usize) -> Result<StepReport> {
        let cfg = &self.config;
        let dt = self.dt;
        let scale = self.inlet_scale(step - 1);
        let mut old = self.state.vel.clone();
        impose_boundary_data(&mut old, cfg, scale, self.mask.as_ref());

        // (1) tentative velocity
        let mut rhs = old.clone();
        let mut explicit = pressure_gradient(&self.state.p);
        explicit.scale(-1.0);
        explicit.add_scaled(1.0, &self.force);
        if cfg.mode != Mode::Stokes {
            explicit.add_scaled(-1.0, &convection_with_upwind_region(&old, self.upwind_box.as_ref()));
        }
        if !self.implicit {
            explicit.add_scaled(1.0, &self.viscous_op.apply(&old));
        }
        // only free faces move in the momentum update
        for &(i, j) in &self.free.u {
            rhs.u[[i, j]] += dt * explicit.u[[i, j]];
        }
        for &(i, j) in &self.free.v {
            rhs.v[[i, j]] += dt * explicit.v[[i, j]];
        }
        let (mut tentative, viscous) = match &self.implicit_system {
            Some(system) => {
                let (u, stats) = system.solve(&rhs, &old, cfg.poisson_tol, cfg.poisson_max_iters)?;
                (u, Some(stats))
            }
            None => (rhs, None),
        };
        impose_boundary_data(&mut tentative, cfg, scale, self.mask.as_ref());

        // (2) pressure increment
        let mut div_rhs = divergence(&tentative);
        div_rhs.values.mapv_inplace(|d| d / dt);
        let (phi, poisson) = self
            .pressure
            .solve(&div_rhs, cfg.poisson_tol, cfg.poisson_max_iters)?;

        // (3) projection
        let mut next = tentative;
        next.add_scaled(-dt, &self.pressure.gradient(&phi));
        if let Some(mask) = &self.mask {
            zero_masked_faces(&mut next, mask);
        }
        let mut p = self.state.p.clone();
        p.values += &phi.values;
        if cfg.rotational_pressure {
            // div_rhs holds div(u*) / dt
            ndarray::Zip::from(&mut p.values)
                .and(&div_rhs.values)
                .and(&self.nu.values)
                .for_each(|p, &d, &nu| *p -= nu * dt * d);
            if let Some(mask) = &self.mask {
                p.values.zip_mut_with(&mask.cells, |p, &m| if m { *p = 0.0 });
            }
        }

        let limit = 1e6 * cfg.velocity_scale();
        let peak = next.max_abs();
        if !next.is_finite() || !p.is_finite() || peak > limit {
            return Err(Error::Instability {
                value: if peak.is_finite() { peak } else { f64::INFINITY },
                limit,
            });
        }

        let g = &cfg.grid;
        let div_max = divergence(&next).max_abs();
        let div_bound = dt * poisson.residual_norm + 1e-11 * peak.max(cfg.velocity_scale()) / g.dx().min(g.dy());
        debug_assert!(
            div_max <= div_bound,
            "projection left div {div_max:e} above bound {div_bound:e}"
        );
        let steady_residual = next.max_abs_diff(&self.state.vel) / dt;
        self.state = FlowState { vel: next, p };
        Ok(StepReport {
            step,
            steady_residual,
            div_max,
            div_bound,
            poisson,
            viscous,
        })
    }

    /// Marches until the steady residual drops below the tolerance (after
    /// the inlet ramp has finished) or `max_steps` is reached.
    pub fn run(&mut self, mut observer: impl FnMut(&StepReport)) -> Result<SteadyResult> {
        let tol = self.config.steady_tolerance();
        let ramp = self.config.ramp_steps();
        let mut accel = (self.config.anderson_depth > 0).then(|| Anderson::new(self.config.anderson_depth));
        let mut best = f64::INFINITY;
        let mut last = None;
        while self.step < self.config.max_steps {
            let mixing = accel.is_some() && self.step >= ramp;
            let before = mixing.then(|| self.pack_state());
            let report = self.step()?;
            observer(&report);
            last = Some(report);
            if report.steady_residual <= tol && (report.step >= ramp || self.config.u_max == 0.0) {
                break;
            }
            if let (Some(acc), Some(x)) = (accel.as_mut(), before) {
                if report.steady_residual > 100.0 * best {
                    acc.reset();
                }
                best = best.min(report.steady_residual);
                let next = acc.mix(&x, &self.pack_state());
                self.unpack_state(&next);
            }
        }
        let report = last.expect("max_steps is positive");
        Ok(SteadyResult {
            vel: self.state.vel.clone(),
            p: self.state.p.clone(),
            steps: self.step,
            steady_residual: report.steady_residual,
            div_norm: report.div_max,
            converged: report.steady_residual <= tol,
        })
    }

    /// Pressure is scaled by `dt / h` so that both parts of the vector
    /// carry velocity units.
    fn pressure_weight(&self) -> f64 {
        let g = &self.config.grid;
        self.dt / g.dx().min(g.dy())
    }

    fn pack_state(&self) -> Vec<f64> {
        let w = self.pressure_weight();
        let s = &self.state;
        s.vel
            .u
            .iter()
            .chain(s.vel.v.iter())
            .copied()
            .chain(s.p.values.iter().map(|p| p * w))
            .collect()
    }

    fn unpack_state(&mut self, x: &[f64]) {
        let w = self.pressure_weight();
        let s = &mut self.state;
        let (nu, nv) = (s.vel.u.len(), s.vel.v.len());
        for (a, b) in s.vel.u.iter_mut().zip(&x[..nu]) {
            *a = *b;
        }
        for (a, b) in s.vel.v.iter_mut().zip(&x[nu..nu + nv]) {
            *a = *b;
        }
        for (a, b) in s.p.values.iter_mut().zip(&x[nu + nv..]) {
            *a = *b / w;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyResult {
    pub vel: VelocityField,
    pub p: ScalarField,
    pub steps: usize,
    pub steady_residual: f64,
    /// `max |div u|` of the final state.
    pub div_norm: f64,
    pub converged: bool,
}

/// One pressure-correction step from `state` (stateless convenience; the
/// inlet is taken at full strength).
pub fn ipcs_step(state: &FlowState, config: &SimConfig, nu: &ScalarField) -> Result<FlowState> {
    let mut cfg = config.clone();
    cfg.max_steps = 1;
    let mut sim = Simulation::with_viscosity(cfg, nu.clone())?;
    sim.set_state(state.clone());
    sim.step()?;
    Ok(sim.state.clone())
}

/// Marches `config` from rest to steady state.
pub fn run_to_steady(config: &SimConfig) -> Result<SteadyResult> {
    Simulation::new(config.clone())?.run(|_| {})
}

/// As [`run_to_steady`], calling `observer` after every step.
pub fn run_to_steady_with(config: &SimConfig, observer: impl FnMut(&StepReport)) -> Result<SteadyResult> {
    Simulation::new(config.clone())?.run(observer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::operators::stress_divergence;
    use approx::assert_relative_eq;

    fn channel(nx: usize, ny: usize) -> StaggeredGrid {
        make_grid(1.2, 0.41, nx, ny).unwrap()
    }

    fn base(grid: StaggeredGrid, shape: ObstacleShape, m: f64) -> SimConfig {
        SimConfig::new(grid, shape, ViscositySpec::new(1.0, m).unwrap(), 1.0)
    }

    #[test]
    fn stable_dt_formula() {
        assert_relative_eq!(stable_dt_bound(0.01, 0.01, 1e-12, 1.0, 0.9), 2.25e-5, max_relative = 1e-12);
        assert_relative_eq!(stable_dt_bound(0.01, 0.01, 1e-12, 1e4, 0.9), 2.25e-9, max_relative = 1e-12);
        assert_relative_eq!(stable_dt_bound(0.01, 0.01, 2.0, 1e-3, 1.0), 0.005, max_relative = 1e-12);

        let g = make_grid(1.0, 1.0, 100, 100).unwrap();
        let mut cfg = base(g, ObstacleShape::None, 1.0);
        cfg.viscous = ViscousTreatment::Explicit;
        cfg.u_max = 1e-9;
        assert_relative_eq!(stable_dt(&cfg, 1.0), 2.25e-5, max_relative = 1e-9);
        cfg.viscous = ViscousTreatment::Implicit;
        cfg.u_max = 1.0;
        assert_relative_eq!(stable_dt(&cfg, 1e4), 0.9 * 0.01 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn auto_viscosity_goes_implicit_for_stiff_cases() {
        let g = channel(96, 32);
        let half = ObstacleShape::HalfDisc {
            center_x: 0.4,
            radius: 0.15,
        };
        assert!(base(g, half, 1e3).implicit_viscosity());
        let mut cfg = base(make_grid(1.0, 1.0, 4, 4).unwrap(), ObstacleShape::None, 1.0);
        cfg.u_max = 100.0;
        assert!(!cfg.implicit_viscosity());
    }

    #[test]
    fn inlet_profile_shape() {
        assert_relative_eq!(inlet_profile(0.205, 1.0, 0.41), 1.0, epsilon = 1e-14);
        assert_eq!(inlet_profile(0.0, 1.0, 0.41), 0.0);
        assert!(inlet_profile(0.41, 1.0, 0.41).abs() < 1e-14);
    }

    #[test]
    fn boundary_conditions() {
        let g = channel(24, 8);
        let shape = ObstacleShape::RectWall {
            center_x: 0.4,
            width: 0.1,
            height: 0.16,
        };
        let mut cfg = base(g, shape, 10.0);
        let vel = VelocityField::from_fn(&g, |_, _| 5.0, |_, _| 3.0);
        let out = apply_boundary_conditions(&vel, &cfg);
        for j in 0..8 {
            let (_, y) = g.x_face(0, j);
            assert_eq!(out.u[[0, j]], inlet_profile(y, 1.0, g.ly()));
            assert_eq!(out.u[[24, j]], out.u[[23, j]]);
        }
        for i in 0..24 {
            assert_eq!(out.v[[i, 0]], 0.0);
            assert_eq!(out.v[[i, 8]], 0.0);
        }
        assert_eq!(out.u[[8, 1]], 5.0);

        cfg.mode = Mode::Rigid;
        let out = apply_boundary_conditions(&vel, &cfg);
        let mask = rigid_mask(&g, &shape);
        assert!(mask.count() >= 2);
        for ((i, j), &m) in mask.cells.indexed_iter() {
            if m {
                assert_eq!(out.u[[i, j]], 0.0);
                assert_eq!(out.u[[i + 1, j]], 0.0);
                assert_eq!(out.v[[i, j]], 0.0);
                assert_eq!(out.v[[i, j + 1]], 0.0);
            }
        }
    }

    #[test]
    fn zero_forcing_is_a_fixed_point() {
        let g = channel(24, 8);
        let mut cfg = base(g, ObstacleShape::None, 1.0);
        cfg.u_max = 0.0;
        let state = FlowState::zeros(&g);
        let next = ipcs_step(&state, &cfg, &cfg.viscosity_field()).unwrap();
        assert_eq!(next, state);
        let res = run_to_steady(&cfg).unwrap();
        assert!(res.converged);
        assert_eq!(res.steps, 1);
        assert_eq!(res.vel.max_abs(), 0.0);
    }

    #[test]
    fn projection_respects_residual_bound() {
        let g = channel(48, 16);
        let cfg = base(
            g,
            ObstacleShape::HalfDisc {
                center_x: 0.4,
                radius: 0.15,
            },
            100.0,
        );
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..20 {
            let r = sim.step().unwrap();
            assert!(r.div_max <= r.div_bound, "{r:?}");
        }
    }

    #[test]
    fn stokes_channel_is_mirror_symmetric() {
        let g = channel(36, 12);
        let mut cfg = base(g, ObstacleShape::None, 1.0);
        cfg.mode = Mode::Stokes;
        cfg.max_steps = 30;
        cfg.poisson_tol = 1e-12;
        let mut sim = Simulation::new(cfg).unwrap();
        for _ in 0..30 {
            sim.step().unwrap();
        }
        let vel = &sim.state().vel;
        let scale = vel.max_abs();
        let ny = g.ny();
        for i in 0..=g.nx() {
            for j in 0..ny {
                assert!((vel.u[[i, j]] - vel.u[[i, ny - 1 - j]]).abs() < 1e-9 * scale);
            }
        }
        for i in 0..g.nx() {
            for j in 0..=ny {
                assert!((vel.v[[i, j]] + vel.v[[i, ny - j]]).abs() < 1e-9 * scale);
            }
        }
    }

    #[test]
    fn implicit_step_limits() {
        let g = channel(20, 12);
        let nu = ScalarField::constant(&g, 1.0);
        let vel = VelocityField::from_fn(&g, |x, y| (3.0 * x).sin() * y, |x, y| x * (y - 0.2));
        let out = implicit_viscous_step(&vel, &nu, 1e-12, 1e-12, 100).unwrap();
        let change = out.max_abs_diff(&vel) / vel.max_abs();
        assert!(change < 1e-9, "{change:e}");
    }

    #[test]
    fn implicit_step_damps_sine_mode_by_discrete_symbol() {
        // inlet and outlet faces are held fixed, so only columns far from
        // them see the pure mode
        let g = channel(40, 16);
        let nu_val = 2.0;
        let nu = ScalarField::constant(&g, nu_val);
        let dt = 2e-4;
        for k in 1..4 {
            let kk = k as f64 * std::f64::consts::PI / g.ly();
            let vel = VelocityField::from_fn(&g, |_, y| (kk * y).sin(), |_, _| 0.0);
            let out = implicit_viscous_step(&vel, &nu, dt, 1e-13, 500).unwrap();
            // symbol of (1/2) nu d_yy with mirrored wall ghosts
            let symbol = 4.0 / g.dy().powi(2) * (kk * g.dy() / 2.0).sin().powi(2);
            let factor = 1.0 / (1.0 + dt * 0.5 * nu_val * symbol);
            for i in 15..25 {
                for j in 0..g.ny() {
                    assert!((out.u[[i, j]] - factor * vel.u[[i, j]]).abs() < 1e-8);
                }
            }
            for i in 15..25 {
                assert!(out.v.row(i).iter().all(|v| v.abs() < 1e-8));
            }
        }
    }

    #[test]
    fn implicit_and_explicit_agree_to_second_order_in_dt() {
        let g = channel(16, 10);
        let nu = ScalarField::constant(&g, 1.0);
        let vel = VelocityField::from_fn(
            &g,
            |x, y| (5.0 * x).sin() * y * (0.41 - y),
            |x, y| (4.0 * x).cos() * y * (0.41 - y),
        );
        let gap = |dt: f64| {
            let imp = implicit_viscous_step(&vel, &nu, dt, 1e-14, 1000).unwrap();
            let mut exp = stress_divergence(&vel, &nu);
            exp.scale(dt);
            exp.add_scaled(1.0, &vel);
            imp.max_abs_diff(&exp)
        };
        let (a, b) = (gap(1e-5), gap(5e-6));
        let ratio = a / b;
        assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
    }

    #[test]
    fn rigid_run_keeps_mask_at_rest() {
        let g = channel(48, 16);
        let shape = ObstacleShape::RectWall {
            center_x: 0.4,
            width: 0.1,
            height: 0.16,
        };
        let mut cfg = base(g, shape, 1.0);
        cfg.mode = Mode::Rigid;
        cfg.max_steps = 40;
        let res = run_to_steady(&cfg).unwrap();
        let mask = rigid_mask(&g, &shape);
        for i in 0..=g.nx() {
            for j in 0..g.ny() {
                if mask.touches_x_face(i, j) {
                    assert_eq!(res.vel.u[[i, j]], 0.0);
                }
            }
        }
        for i in 0..g.nx() {
            for j in 0..=g.ny() {
                if mask.touches_y_face(i, j) {
                    assert_eq!(res.vel.v[[i, j]], 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_configs() {
        let g = channel(24, 8);
        let mut cfg = base(g, ObstacleShape::None, 1.0);
        cfg.dt = Some(-1.0);
        assert!(matches!(run_to_steady(&cfg), Err(Error::Config(_))));
        let mut cfg = base(g, ObstacleShape::None, 1.0);
        cfg.poisson_tol = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn explicit_blowup_is_reported_as_instability() {
        let g = channel(24, 8);
        let mut cfg = base(g, ObstacleShape::None, 1.0);
        cfg.viscous = ViscousTreatment::Explicit;
        cfg.dt = Some(1e-2);
        cfg.max_steps = 400;
        let err = run_to_steady(&cfg).unwrap_err();
        assert!(matches!(err.root(), Error::Instability { .. }), "{err}");
        assert!(matches!(err, Error::AtStep { .. }));
    }
}
