//! Benchmark plans, sweep execution and the command line front end.
//!
//! A plan runs one penalty simulation per obstacle viscosity in its sweep,
//! plus an optional rigid-obstacle reference, and writes
//!
//! * `sweep.csv`: one diagnostics row per run, rigid first;
//! * `profiles.csv`: the speed profiles at the comparison station;
//! * `<run>/diagnostics.csv`, `<run>/profile.csv`, `<run>/fields.vtk` for each
//!   run, where `<run>` is `rigid` or `m_<value>`.

mod cli;
mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::diagnostics::{collect, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::geometry::{rigid_mask, ViscositySpec};
use crate::solver::{run_to_steady, Mode, SimConfig, SteadyResult};

pub use cli::{cli, cli_with_output};
pub use config::{echo_config, parse_config};
pub use output::{
    profiles_csv, read_profiles_csv, sweep_csv, vtk_string, write_vtk, SweepRow, SWEEP_COLUMNS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputFormats {
    pub csv: bool,
    pub vtk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlan {
    /// Settings shared by every run; its `viscosity.m` is the first sweep value.
    pub base: SimConfig,
    /// Obstacle viscosities, strictly increasing.
    pub sweep: Vec<f64>,
    pub include_rigid_reference: bool,
    /// Station of the profile comparison.
    pub x_station: f64,
    pub output_dir: PathBuf,
    pub formats: OutputFormats,
}

/// One simulation of a plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Member {
    Rigid,
    Penalty(f64),
}

impl Member {
    /// Directory name and CSV label.
    pub fn label(&self) -> String {
        match self {
            Member::Rigid => "rigid".into(),
            Member::Penalty(m) => format!("m_{m}"),
        }
    }

    fn csv_label(&self) -> String {
        match self {
            Member::Rigid => "rigid".into(),
            Member::Penalty(m) => m.to_string(),
        }
    }
}

impl BenchmarkPlan {
    pub fn members(&self) -> Vec<Member> {
        let rigid = self.include_rigid_reference.then_some(Member::Rigid);
        rigid
            .into_iter()
            .chain(self.sweep.iter().map(|&m| Member::Penalty(m)))
            .collect()
    }

    pub fn member_config(&self, member: Member) -> SimConfig {
        let mut config = self.base.clone();
        match member {
            Member::Rigid => config.mode = Mode::Rigid,
            Member::Penalty(m) => {
                config.viscosity = ViscositySpec {
                    nu_fluid: config.viscosity.nu_fluid,
                    m,
                }
            }
        }
        config
    }
}

/// Result of one member: diagnostics, or the error that stopped it.
#[derive(Debug)]
pub struct MemberOutcome {
    pub member: Member,
    pub result: Result<DiagnosticsRecord>,
}

#[derive(Debug)]
pub struct BenchmarkReport {
    pub outcomes: Vec<MemberOutcome>,
}

impl BenchmarkReport {
    pub fn failures(&self) -> impl Iterator<Item = &MemberOutcome> {
        self.outcomes.iter().filter(|o| o.result.is_err())
    }

    pub fn all_succeeded(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn record(&self, member: Member) -> Option<&DiagnosticsRecord> {
        self.outcomes
            .iter()
            .find(|o| o.member == member)
            .and_then(|o| o.result.as_ref().ok())
    }

    pub fn sweep_csv(&self) -> String {
        let rows: Vec<SweepRow> = self
            .outcomes
            .iter()
            .map(|o| SweepRow {
                label: o.member.csv_label(),
                record: o.result.as_ref().ok().cloned(),
            })
            .collect();
        sweep_csv(&rows)
    }

    pub fn profiles_csv(&self) -> Result<String> {
        let named: Vec<(String, &crate::diagnostics::ProfileRecord)> = self
            .outcomes
            .iter()
            .filter_map(|o| {
                let r = o.result.as_ref().ok()?;
                Some((o.member.label(), &r.profile))
            })
            .collect();
        profiles_csv(&named)
    }
}

/// Runs one member and writes its per-run files (when `dir` is given).
pub fn run_member(plan: &BenchmarkPlan, member: Member, dir: Option<&Path>) -> Result<DiagnosticsRecord> {
    let config = plan.member_config(member);
    let result = run_to_steady(&config)?;
    let record = collect(&result, &config, plan.x_station)?;
    if let Some(dir) = dir {
        write_member_files(plan, &config, &result, &record, member, dir)?;
    }
    Ok(record)
}

fn write_member_files(
    plan: &BenchmarkPlan,
    config: &SimConfig,
    result: &SteadyResult,
    record: &DiagnosticsRecord,
    member: Member,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    if plan.formats.csv {
        let row = SweepRow {
            label: member.csv_label(),
            record: Some(record.clone()),
        };
        output::write_file(&dir.join("diagnostics.csv"), &sweep_csv(&[row]))?;
        output::write_file(
            &dir.join("profile.csv"),
            &profiles_csv(&[(member.label(), &record.profile)])?,
        )?;
    }
    if plan.formats.vtk {
        let mask = rigid_mask(&config.grid, &config.shape);
        write_vtk(
            &result.vel,
            &result.p,
            &config.viscosity_field(),
            &mask,
            &dir.join("fields.vtk"),
        )?;
    }
    Ok(())
}

/// Runs every member of `plan` (in parallel on the current rayon pool),
/// compares each penalty profile with the rigid one and writes the combined
/// files. A failed member does not stop the others.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchmarkReport> {
    let root = &plan.output_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let mut outcomes: Vec<MemberOutcome> = plan
        .members()
        .into_par_iter()
        .map(|member| {
            let dir = root.join(member.label());
            MemberOutcome {
                member,
                result: run_member(plan, member, Some(&dir)),
            }
        })
        .collect();

    let rigid = outcomes
        .iter()
        .find(|o| o.member == Member::Rigid)
        .and_then(|o| o.result.as_ref().ok())
        .map(|r| r.profile.clone());
    if let Some(rigid) = rigid {
        for o in outcomes.iter_mut().filter(|o| o.member != Member::Rigid) {
            if let Ok(record) = &mut o.result {
                record.compare_with(&rigid)?;
            }
        }
    }

    for o in &outcomes {
        let dir = root.join(o.member.label());
        match &o.result {
            // refresh the per-run row now that it carries the comparison
            Ok(record) if plan.formats.csv => {
                let row = SweepRow {
                    label: o.member.csv_label(),
                    record: Some(record.clone()),
                };
                output::write_file(&dir.join("diagnostics.csv"), &sweep_csv(&[row]))?;
            }
            Ok(_) => {}
            Err(e) => {
                fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
                output::write_file(&dir.join("error.txt"), &format!("{e}\n"))?;
            }
        }
    }
    let report = BenchmarkReport { outcomes };
    if plan.formats.csv {
        output::write_file(&root.join("sweep.csv"), &report.sweep_csv())?;
        output::write_file(&root.join("profiles.csv"), &report.profiles_csv()?)?;
    }
    Ok(report)
}
