//! Python bindings: configure and run simulations, read back fields and
//! diagnostics, and drive the benchmark harness.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use penflow::diagnostics::{self, DiagnosticsRecord, DEFAULT_STATION};
use penflow::harness::{self, BenchmarkPlan, Member};
use penflow::solver::{self, Mode, SimConfig, SteadyResult};
use penflow::{make_grid, Error, ObstacleShape, ViscositySpec};

fn to_py(err: Error) -> PyErr {
    match err.root() {
        Error::Config(_) | Error::ConfigKey { .. } | Error::Usage(_) => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn rows(a: &penflow::grid::ScalarField) -> Vec<Vec<f64>> {
    a.values.outer_iter().map(|r| r.to_vec()).collect()
}

fn record_dict<'py>(py: Python<'py>, r: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("m", r.m)?;
    d.set_item("deformation_in_S", r.deformation_in_s)?;
    d.set_item("total_dissipation", r.total_dissipation)?;
    d.set_item("grad_max", r.grad_max)?;
    d.set_item("grad_l2", r.grad_l2)?;
    d.set_item("div_max", r.div_max)?;
    d.set_item("relative_l2_vs_rigid", r.diff_vs_rigid.map(|d| d.relative_l2))?;
    d.set_item("steps", r.steps)?;
    d.set_item("converged", r.converged)?;
    d.set_item("profile_y", r.profile.y.clone())?;
    d.set_item("profile_speed", r.profile.speed.clone())?;
    Ok(d)
}

/// A full simulation setup.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: SimConfig,
}

#[pymethods]
impl PyConfig {
    /// `shape` is "half_disc", "wall" or "none"; `mode` is "penalty",
    /// "rigid" or "stokes".
    #[new]
    #[pyo3(signature = (nx, ny, *, lx=1.2, ly=0.41, shape="half_disc", center_x=0.4, r=0.15,
                        width=0.1, height=0.16, nu=1.0, m=1000.0, u_max=1.5, mode="penalty",
                        max_steps=None, anderson_depth=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        shape: &str,
        center_x: f64,
        r: f64,
        width: f64,
        height: f64,
        nu: f64,
        m: f64,
        u_max: f64,
        mode: &str,
        max_steps: Option<usize>,
        anderson_depth: Option<usize>,
    ) -> PyResult<Self> {
        let grid = make_grid(lx, ly, nx, ny).map_err(to_py)?;
        let shape = match shape {
            "half_disc" => ObstacleShape::HalfDisc { center_x, radius: r },
            "wall" => ObstacleShape::RectWall {
                center_x,
                width,
                height,
            },
            "none" => ObstacleShape::None,
            other => return Err(PyValueError::new_err(format!("unknown shape `{other}`"))),
        };
        let mut inner = SimConfig::new(grid, shape, ViscositySpec::new(nu, m).map_err(to_py)?, u_max);
        inner.mode = match mode {
            "penalty" => Mode::Penalty,
            "rigid" => Mode::Rigid,
            "stokes" => Mode::Stokes,
            other => return Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
        };
        if let Some(n) = max_steps {
            inner.max_steps = n;
        }
        if let Some(n) = anderson_depth {
            inner.anderson_depth = n;
        }
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.time_step()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.name()
    }

    /// Cell-centre viscosity, indexed `[i][j]`.
    fn viscosity(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.viscosity_field())
    }

    /// March to steady state. Releases the GIL while running.
    fn run(&self, py: Python<'_>) -> PyResult<PyResult_> {
        let config = self.inner.clone();
        let result = py.detach(|| solver::run_to_steady(&config)).map_err(to_py)?;
        Ok(PyResult_ { config, result })
    }

    fn __repr__(&self) -> String {
        let g = &self.inner.grid;
        format!(
            "Config(nx={}, ny={}, mode={}, m={})",
            g.nx(),
            g.ny(),
            self.inner.mode.name(),
            self.inner.viscosity.m
        )
    }
}

/// Converged fields of one run.
#[pyclass(name = "SteadyResult")]
struct PyResult_ {
    config: SimConfig,
    result: SteadyResult,
}

#[pymethods]
impl PyResult_ {
    #[getter]
    fn steps(&self) -> usize {
        self.result.steps
    }

    #[getter]
    fn converged(&self) -> bool {
        self.result.converged
    }

    #[getter]
    fn steady_residual(&self) -> f64 {
        self.result.steady_residual
    }

    #[getter]
    fn div_norm(&self) -> f64 {
        self.result.div_norm
    }

    /// x-face velocities, indexed `[i][j]`.
    fn u(&self) -> Vec<Vec<f64>> {
        self.result.vel.u.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// y-face velocities, indexed `[i][j]`.
    fn v(&self) -> Vec<Vec<f64>> {
        self.result.vel.v.outer_iter().map(|r| r.to_vec()).collect()
    }

    fn pressure(&self) -> Vec<Vec<f64>> {
        rows(&self.result.p)
    }

    #[pyo3(signature = (x_station=DEFAULT_STATION))]
    fn diagnostics<'py>(&self, py: Python<'py>, x_station: f64) -> PyResult<Bound<'py, PyDict>> {
        let r = diagnostics::collect(&self.result, &self.config, x_station).map_err(to_py)?;
        record_dict(py, &r)
    }

    /// Legacy VTK text of the cell-centre fields.
    fn vtk(&self) -> String {
        let mask = penflow::geometry::rigid_mask(&self.config.grid, &self.config.shape);
        harness::vtk_string(&self.result.vel, &self.result.p, &self.config.viscosity_field(), &mask)
    }
}

/// A parsed benchmark plan.
#[pyclass(name = "Plan")]
struct PyPlan {
    inner: BenchmarkPlan,
}

#[pymethods]
impl PyPlan {
    #[getter]
    fn sweep(&self) -> Vec<f64> {
        self.inner.sweep.clone()
    }

    #[getter]
    fn output_dir(&self) -> String {
        self.inner.output_dir.display().to_string()
    }

    #[setter]
    fn set_output_dir(&mut self, dir: String) {
        self.inner.output_dir = dir.into();
    }

    /// Every effective setting, in config file syntax.
    fn echo(&self) -> String {
        harness::echo_config(&self.inner)
    }

    /// The configuration of one sweep member; `m=None` is the rigid reference.
    #[pyo3(signature = (m=None))]
    fn config(&self, m: Option<f64>) -> PyConfig {
        let member = m.map_or(Member::Rigid, Member::Penalty);
        PyConfig {
            inner: self.inner.member_config(member),
        }
    }

    /// Runs the whole plan and returns one diagnostics dict per member.
    /// Failed members are returned as `{"m": ..., "error": message}`.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let plan = self.inner.clone();
        let report = py.detach(|| harness::run_benchmark(&plan)).map_err(to_py)?;
        report
            .outcomes
            .iter()
            .map(|o| match &o.result {
                Ok(r) => record_dict(py, r),
                Err(e) => {
                    let d = PyDict::new(py);
                    d.set_item("m", o.member.label())?;
                    d.set_item("error", e.to_string())?;
                    Ok(d)
                }
            })
            .collect()
    }
}

#[pyfunction]
fn parse_config(text: &str) -> PyResult<PyPlan> {
    Ok(PyPlan {
        inner: harness::parse_config(text).map_err(to_py)?,
    })
}

/// Runs the command line with `args` (without the program name) and
/// returns its exit status.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("penflow".to_string()).chain(args).collect();
    py.detach(|| harness::cli(argv))
}

#[pymodule]
fn penflow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyResult_>()?;
    m.add_class::<PyPlan>()?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
