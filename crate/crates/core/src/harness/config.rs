//! The benchmark configuration format.
//!
//! A config file is a list of `key = value` lines grouped under the section
//! headers `[grid]`, `[obstacle]`, `[fluid]`, `[scheme]`, `[sweep]` and
//! `[output]`. Blank lines and lines starting with `#` are ignored. Lists are
//! comma separated. [`echo_config`] prints every effective value in the same
//! format, so its output parses back to the same plan.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use crate::diagnostics::DEFAULT_STATION;
use crate::error::{Error, Result};
use crate::geometry::{ObstacleShape, ViscositySpec};
use crate::grid::StaggeredGrid;
use crate::solver::{
    BodyForce, Mode, SimConfig, ViscousTreatment, DEFAULT_ANDERSON_DEPTH, DEFAULT_CFL_SAFETY,
    DEFAULT_MAX_STEPS, DEFAULT_POISSON_MAX_ITERS, DEFAULT_POISSON_TOL,
};

use super::{BenchmarkPlan, OutputFormats};

const SECTIONS: [&str; 6] = ["grid", "obstacle", "fluid", "scheme", "sweep", "output"];

const DEFAULT_LX: f64 = 1.2;
const DEFAULT_LY: f64 = 0.41;
const DEFAULT_U_MAX: f64 = 1.5;
const DEFAULT_OUTPUT_DIR: &str = "output";

/// Raw `key = value` entries, consumed as they are interpreted.
struct Entries {
    map: BTreeMap<(String, String), (usize, String)>,
    headers: HashMap<String, usize>,
    last_line: usize,
}

impl Entries {
    fn read(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut headers = HashMap::new();
        let mut section: Option<String> = None;
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.trim();
            if content.is_empty() || content.starts_with('#') {
                continue;
            }
            if let Some(name) = content.strip_prefix('[').and_then(|c| c.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(key_error(line, name, "unknown section"));
                }
                if headers.insert(name.to_string(), line).is_some() {
                    return Err(key_error(line, name, "section appears twice"));
                }
                section = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(key_error(line, content, "expected `key = value`"));
            };
            let key = key.trim();
            let Some(section) = &section else {
                return Err(key_error(line, key, "key outside of any section"));
            };
            let slot = (section.clone(), key.to_string());
            if let Some((first, _)) = map.get(&slot) {
                return Err(key_error(line, key, &format!("duplicate key (first set on line {first})")));
            }
            map.insert(slot, (line, value.trim().to_string()));
        }
        Ok(Self {
            map,
            headers,
            last_line,
        })
    }

    fn take<T>(
        &mut self,
        section: &str,
        key: &str,
        expected: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<Option<(usize, T)>> {
        let Some((line, value)) = self.map.remove(&(section.to_string(), key.to_string())) else {
            return Ok(None);
        };
        match parse(&value) {
            Some(v) => Ok(Some((line, v))),
            None => Err(key_error(line, key, &format!("expected {expected}, got `{value}`"))),
        }
    }

    fn or<T>(
        &mut self,
        section: &str,
        key: &str,
        expected: &str,
        default: T,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<T> {
        Ok(self
            .take(section, key, expected, parse)?
            .map_or(default, |(_, v)| v))
    }

    fn required<T>(
        &mut self,
        section: &str,
        key: &str,
        expected: &str,
        parse: impl Fn(&str) -> Option<T>,
    ) -> Result<(usize, T)> {
        match self.take(section, key, expected, parse)? {
            Some(found) => Ok(found),
            None => {
                let line = self.headers.get(section).copied().unwrap_or(self.last_line);
                Err(key_error(line, &format!("{section}.{key}"), "required key is missing"))
            }
        }
    }

    /// Fails on the first entry nobody consumed.
    fn finish(self) -> Result<()> {
        match self.map.iter().min_by_key(|(_, (line, _))| *line) {
            Some(((section, key), (line, _))) => Err(key_error(
                *line,
                key,
                &format!("unknown key in [{section}] (or not used with these settings)"),
            )),
            None => Ok(()),
        }
    }
}

fn key_error(line: usize, key: &str, message: &str) -> Error {
    Error::ConfigKey {
        line,
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn count(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn flag(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn auto_or_number(s: &str) -> Option<Option<f64>> {
    if s == "auto" {
        Some(None)
    } else {
        number(s).map(Some)
    }
}

fn list<T>(s: &str, item: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(',').map(|p| item(p.trim())).collect()
}

/// Parses and validates a benchmark plan. Every error names the offending
/// line and key.
pub fn parse_config(text: &str) -> Result<BenchmarkPlan> {
    let mut e = Entries::read(text)?;

    let lx = e.or("grid", "lx", "a number", DEFAULT_LX, number)?;
    let ly = e.or("grid", "ly", "a number", DEFAULT_LY, number)?;
    let (nx_line, nx) = e.required("grid", "nx", "a cell count", count)?;
    let (_, ny) = e.required("grid", "ny", "a cell count", count)?;
    let grid = StaggeredGrid::new(lx, ly, nx, ny).map_err(|err| key_error(nx_line, "nx", &err.to_string()))?;

    let (shape_line, shape_name) = e.required("obstacle", "shape", "half_disc, wall or none", |s| {
        matches!(s, "half_disc" | "wall" | "none").then(|| s.to_string())
    })?;
    let shape = match shape_name.as_str() {
        "half_disc" => ObstacleShape::HalfDisc {
            center_x: e.required("obstacle", "center_x", "a number", number)?.1,
            radius: e.required("obstacle", "r", "a number", number)?.1,
        },
        "wall" => ObstacleShape::RectWall {
            center_x: e.required("obstacle", "center_x", "a number", number)?.1,
            width: e.required("obstacle", "width", "a number", number)?.1,
            height: e.required("obstacle", "height", "a number", number)?.1,
        },
        _ => ObstacleShape::None,
    };
    shape
        .validate(lx, ly)
        .map_err(|err| key_error(shape_line, "shape", &err.to_string()))?;

    let nu_fluid = e.or("fluid", "nu", "a number", 1.0, number)?;
    let u_max = e.or("fluid", "u_max", "a number", DEFAULT_U_MAX, number)?;
    let mode = e.or("fluid", "mode", "penalty or stokes", Mode::Penalty, |s| match s {
        "penalty" => Some(Mode::Penalty),
        "stokes" => Some(Mode::Stokes),
        _ => None,
    })?;
    let fx = e.or("fluid", "force_x", "a number", 0.0, number)?;
    let fy = e.or("fluid", "force_y", "a number", 0.0, number)?;

    let dt = e.or("scheme", "dt", "auto or a number", None, auto_or_number)?;
    let cfl_safety = e.or("scheme", "cfl_safety", "a number", DEFAULT_CFL_SAFETY, number)?;
    let steady_tol = e.or("scheme", "steady_tol", "auto or a number", None, auto_or_number)?;
    let max_steps = e.or("scheme", "max_steps", "a step count", DEFAULT_MAX_STEPS, count)?;
    let poisson_tol = e.or("scheme", "poisson_tol", "a number", DEFAULT_POISSON_TOL, number)?;
    let poisson_max_iters = e.or(
        "scheme",
        "poisson_max_iters",
        "an iteration count",
        DEFAULT_POISSON_MAX_ITERS,
        count,
    )?;
    let viscous = e.or(
        "scheme",
        "viscous",
        "auto, explicit or implicit",
        ViscousTreatment::Auto,
        |s| match s {
            "auto" => Some(ViscousTreatment::Auto),
            "explicit" => Some(ViscousTreatment::Explicit),
            "implicit" => Some(ViscousTreatment::Implicit),
            _ => None,
        },
    )?;
    let rotational_pressure = e.or("scheme", "rotational_pressure", "true or false", true, flag)?;
    let anderson_depth = e.or(
        "scheme",
        "anderson_depth",
        "a history length",
        DEFAULT_ANDERSON_DEPTH,
        count,
    )?;

    let (m_line, sweep) = e.required("sweep", "m", "a comma-separated list of numbers", |s| list(s, number))?;
    if sweep.is_empty() {
        return Err(key_error(m_line, "m", "sweep list is empty"));
    }
    if sweep.windows(2).any(|w| w[0] >= w[1]) {
        return Err(key_error(m_line, "m", "sweep values must be strictly increasing"));
    }
    let include_rigid_reference = e.or("sweep", "rigid_reference", "true or false", true, flag)?;
    let x_station = match e.take("sweep", "x_station", "a number", number)? {
        Some((line, x)) if !(x > 0.0 && x < lx) => {
            return Err(key_error(line, "x_station", "station must lie inside the channel"));
        }
        Some((_, x)) => x,
        None => DEFAULT_STATION,
    };

    let output_dir = e.or("output", "dir", "a path", PathBuf::from(DEFAULT_OUTPUT_DIR), |s| {
        (!s.is_empty()).then(|| PathBuf::from(s))
    })?;
    let formats = e.or(
        "output",
        "formats",
        "a list drawn from csv, vtk",
        OutputFormats { csv: true, vtk: true },
        |s| {
            let mut f = OutputFormats { csv: false, vtk: false };
            for name in list(s, |p| Some(p.to_string()))? {
                match name.as_str() {
                    "csv" => f.csv = true,
                    "vtk" => f.vtk = true,
                    _ => return None,
                }
            }
            Some(f)
        },
    )?;
    e.finish()?;

    let mut base = SimConfig::new(grid, shape, ViscositySpec { nu_fluid, m: sweep[0] }, u_max);
    base.mode = mode;
    base.body_force = if fx == 0.0 && fy == 0.0 {
        BodyForce::Zero
    } else {
        BodyForce::Uniform { fx, fy }
    };
    base.dt = dt;
    base.cfl_safety = cfl_safety;
    base.steady_tol = steady_tol;
    base.max_steps = max_steps;
    base.poisson_tol = poisson_tol;
    base.poisson_max_iters = poisson_max_iters;
    base.viscous = viscous;
    base.rotational_pressure = rotational_pressure;
    base.anderson_depth = anderson_depth;
    for &m in &sweep {
        ViscositySpec::new(nu_fluid, m).map_err(|err| key_error(m_line, "m", &err.to_string()))?;
    }
    base.validate().map_err(|err| Error::Config(err.to_string()))?;

    Ok(BenchmarkPlan {
        base,
        sweep,
        include_rigid_reference,
        x_station,
        output_dir,
        formats,
    })
}

/// Every effective setting of `plan`, in the config file format.
pub fn echo_config(plan: &BenchmarkPlan) -> String {
    let b = &plan.base;
    let g = &b.grid;
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    let opt = |v: Option<f64>| v.map_or("auto".to_string(), |v| v.to_string());

    line("[grid]".into());
    line(format!("lx = {}", g.lx()));
    line(format!("ly = {}", g.ly()));
    line(format!("nx = {}", g.nx()));
    line(format!("ny = {}", g.ny()));

    line("\n[obstacle]".into());
    match b.shape {
        ObstacleShape::None => line("shape = none".into()),
        ObstacleShape::HalfDisc { center_x, radius } => {
            line("shape = half_disc".into());
            line(format!("center_x = {center_x}"));
            line(format!("r = {radius}"));
        }
        ObstacleShape::RectWall {
            center_x,
            width,
            height,
        } => {
            line("shape = wall".into());
            line(format!("center_x = {center_x}"));
            line(format!("width = {width}"));
            line(format!("height = {height}"));
        }
    }

    let (fx, fy) = match b.body_force {
        BodyForce::Uniform { fx, fy } => (fx, fy),
        _ => (0.0, 0.0),
    };
    line("\n[fluid]".into());
    line(format!("nu = {}", b.viscosity.nu_fluid));
    line(format!("u_max = {}", b.u_max));
    line(format!("mode = {}", b.mode.name()));
    line(format!("force_x = {fx}"));
    line(format!("force_y = {fy}"));

    line("\n[scheme]".into());
    line(format!("dt = {}", opt(b.dt)));
    line(format!("cfl_safety = {}", b.cfl_safety));
    line(format!("steady_tol = {}", opt(b.steady_tol)));
    line(format!("max_steps = {}", b.max_steps));
    line(format!("poisson_tol = {}", b.poisson_tol));
    line(format!("poisson_max_iters = {}", b.poisson_max_iters));
    let viscous = match b.viscous {
        ViscousTreatment::Auto => "auto",
        ViscousTreatment::Explicit => "explicit",
        ViscousTreatment::Implicit => "implicit",
    };
    line(format!("viscous = {viscous}"));
    line(format!("rotational_pressure = {}", b.rotational_pressure));
    line(format!("anderson_depth = {}", b.anderson_depth));

    line("\n[sweep]".into());
    let sweep: Vec<String> = plan.sweep.iter().map(|m| m.to_string()).collect();
    line(format!("m = {}", sweep.join(", ")));
    line(format!("rigid_reference = {}", plan.include_rigid_reference));
    line(format!("x_station = {}", plan.x_station));

    line("\n[output]".into());
    line(format!("dir = {}", plan.output_dir.display()));
    let mut formats = Vec::new();
    if plan.formats.csv {
        formats.push("csv");
    }
    if plan.formats.vtk {
        formats.push("vtk");
    }
    line(format!("formats = {}", formats.join(", ")));
    out
}
