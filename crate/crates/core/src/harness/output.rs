//! CSV and legacy VTK writers, and the profile CSV reader used by `compare`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::diagnostics::{DiagnosticsRecord, ProfileRecord};
use crate::error::{Error, Result};
use crate::geometry::CellMask;
use crate::grid::{speed_at_centers, ScalarField, VelocityField};

/// Column order of the sweep CSV.
pub const SWEEP_COLUMNS: [&str; 9] = [
    "m",
    "deformation_in_S",
    "total_dissipation",
    "grad_max",
    "grad_l2",
    "div_max",
    "relative_l2_vs_rigid",
    "steps",
    "converged",
];

/// Outcome of one sweep member as it appears in the CSV.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub label: String,
    /// `None` when the run failed.
    pub record: Option<DiagnosticsRecord>,
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = match &row.record {
            Some(r) => vec![
                row.label.clone(),
                num(r.deformation_in_s),
                num(r.total_dissipation),
                num(r.grad_max),
                num(r.grad_l2),
                num(r.div_max),
                r.diff_vs_rigid.map_or(String::new(), |d| num(d.relative_l2)),
                r.steps.to_string(),
                r.converged.to_string(),
            ],
            None => {
                let mut f = vec![row.label.clone()];
                f.extend(std::iter::repeat_n(String::new(), 7));
                f.push("failed".into());
                f
            }
        };
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Profiles sharing one station, one column each after `y`.
pub fn profiles_csv(named: &[(String, &ProfileRecord)]) -> Result<String> {
    let Some((_, first)) = named.first() else {
        return Ok("y\n".into());
    };
    if named.iter().any(|(_, p)| p.y != first.y) {
        return Err(Error::Usage("profiles are sampled at different heights".into()));
    }
    let mut out = String::from("y");
    for (name, _) in named {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (j, y) in first.y.iter().enumerate() {
        out.push_str(&num(*y));
        for (_, p) in named {
            out.push(',');
            out.push_str(&num(p.speed[j]));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Named profile columns read back from a profile CSV. The station is not
/// stored in the file, so every record gets station 0 and column 0.
pub fn read_profiles_csv(text: &str) -> Result<Vec<(String, ProfileRecord)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Usage("empty profile file".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    if header.first() != Some(&"y") || header.len() < 2 {
        return Err(Error::Usage("profile file must start with a `y` column and one profile column".into()));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (n, line) in lines.enumerate() {
        let values: Vec<&str> = line.split(',').collect();
        if values.len() != header.len() {
            return Err(Error::Usage(format!("profile row {} has {} fields", n + 2, values.len())));
        }
        for (col, v) in cols.iter_mut().zip(values) {
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("profile row {}: `{v}` is not a number", n + 2)))?;
            col.push(v);
        }
    }
    let y = cols[0].clone();
    Ok(header[1..]
        .iter()
        .zip(cols.into_iter().skip(1))
        .map(|(name, speed)| {
            (
                name.to_string(),
                ProfileRecord {
                    x_station: 0.0,
                    column: 0,
                    y: y.clone(),
                    speed,
                },
            )
        })
        .collect())
}

/// Legacy ASCII structured-points dataset on the cell centers: speed,
/// pressure, viscosity and the obstacle indicator.
pub fn vtk_string(vel: &VelocityField, p: &ScalarField, nu: &ScalarField, obstacle: &CellMask) -> String {
    let g = vel.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0");
    let _ = writeln!(out, "penflow cell-centred fields");
    let _ = writeln!(out, "ASCII");
    let _ = writeln!(out, "DATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {nx} {ny} 1");
    let _ = writeln!(out, "ORIGIN {} {} 0", 0.5 * g.dx(), 0.5 * g.dy());
    let _ = writeln!(out, "SPACING {} {} 1", g.dx(), g.dy());
    let _ = writeln!(out, "POINT_DATA {}", nx * ny);
    let speed = speed_at_centers(vel);
    let mut scalars = |name: &str, kind: &str, value: &dyn Fn(usize, usize) -> String| {
        let _ = writeln!(out, "SCALARS {name} {kind} 1");
        let _ = writeln!(out, "LOOKUP_TABLE default");
        for j in 0..ny {
            let row: Vec<String> = (0..nx).map(|i| value(i, j)).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
    };
    scalars("speed", "double", &|i, j| speed.values[[i, j]].to_string());
    scalars("pressure", "double", &|i, j| p.values[[i, j]].to_string());
    scalars("viscosity", "double", &|i, j| nu.values[[i, j]].to_string());
    scalars("obstacle", "int", &|i, j| u8::from(obstacle.get(i, j)).to_string());
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_vtk(
    vel: &VelocityField,
    p: &ScalarField,
    nu: &ScalarField,
    obstacle: &CellMask,
    path: &Path,
) -> Result<()> {
    write_file(path, &vtk_string(vel, p, nu, obstacle))
}
