use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::diagnostics::profile_difference;
use crate::error::{Error, Result};

use super::{echo_config, parse_config, read_profiles_csv, run_benchmark, run_member, BenchmarkPlan, Member};

#[derive(Parser, Debug)]
#[command(name = "penflow", about = "Channel flow past viscous-penalty obstacles")]
struct Args {
    /// Number of sweep members run at the same time.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the output directory of the config.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a single simulation (the largest sweep value unless told otherwise).
    Run {
        config: PathBuf,
        /// Obstacle viscosity of the run.
        #[arg(long, conflicts_with = "rigid")]
        m: Option<f64>,
        /// Run the rigid-obstacle reference instead.
        #[arg(long)]
        rigid: bool,
    },
    /// Run the full sweep and write the combined CSVs.
    Sweep { config: PathBuf },
    /// Parse a config and print every effective setting.
    Validate { config: PathBuf },
    /// Difference table between the profiles of two profile CSVs.
    Compare { a: PathBuf, b: PathBuf },
}

/// Runs the command line with `args` (program name first) and returns the
/// exit status: 0 on success, 1 if a simulation failed, 2 on usage or
/// configuration errors.
pub fn cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    cli_with_output(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// [`cli`] writing to the given streams.
pub fn cli_with_output<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(args) => args,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return e.exit_code();
        }
    };
    match dispatch(args, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e.root() {
                Error::Config(_) | Error::ConfigKey { .. } | Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}

fn load_plan(path: &PathBuf, output_dir: &Option<PathBuf>) -> Result<BenchmarkPlan> {
    let text = fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
    let mut plan = parse_config(&text)?;
    if let Some(dir) = output_dir {
        plan.output_dir = dir.clone();
    }
    Ok(plan)
}

fn dispatch(args: Args, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let io = |e: std::io::Error| Error::io("<stdout>", e);
    match args.command {
        Command::Validate { config } => {
            let plan = load_plan(&config, &args.output_dir)?;
            write!(out, "{}", echo_config(&plan)).map_err(io)?;
            Ok(0)
        }
        Command::Run { config, m, rigid } => {
            let plan = load_plan(&config, &args.output_dir)?;
            let member = match (rigid, m) {
                (true, _) => Member::Rigid,
                (false, Some(m)) => Member::Penalty(m),
                (false, None) => Member::Penalty(*plan.sweep.last().expect("sweep is never empty")),
            };
            let dir = plan.output_dir.join(member.label());
            let r = run_member(&plan, member, Some(&dir))?;
            writeln!(out, "run               {}", member.label()).map_err(io)?;
            writeln!(out, "deformation_in_S  {:.6e}", r.deformation_in_s).map_err(io)?;
            writeln!(out, "total_dissipation {:.6e}", r.total_dissipation).map_err(io)?;
            writeln!(out, "grad_max          {:.6e}", r.grad_max).map_err(io)?;
            writeln!(out, "grad_l2           {:.6e}", r.grad_l2).map_err(io)?;
            writeln!(out, "div_max           {:.6e}", r.div_max).map_err(io)?;
            writeln!(out, "steps             {}", r.steps).map_err(io)?;
            writeln!(out, "converged         {}", r.converged).map_err(io)?;
            writeln!(out, "output            {}", dir.display()).map_err(io)?;
            Ok(if r.converged { 0 } else { 1 })
        }
        Command::Sweep { config } => {
            let plan = load_plan(&config, &args.output_dir)?;
            let report = match args.threads {
                Some(0) => return Err(Error::Usage("--threads must be at least 1".into())),
                Some(n) => rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::Usage(format!("cannot start {n} threads: {e}")))?
                    .install(|| run_benchmark(&plan))?,
                None => run_benchmark(&plan)?,
            };
            write!(out, "{}", report.sweep_csv()).map_err(io)?;
            let mut failed = false;
            for o in report.failures() {
                failed = true;
                if let Err(e) = &o.result {
                    let _ = writeln!(err, "{} failed: {e}", o.member.label());
                }
            }
            let unconverged = report
                .outcomes
                .iter()
                .filter_map(|o| o.result.as_ref().ok().map(|r| (o.member, r)))
                .filter(|(_, r)| !r.converged);
            for (member, r) in unconverged {
                failed = true;
                let _ = writeln!(err, "{} did not reach steady state in {} steps", member.label(), r.steps);
            }
            Ok(i32::from(failed))
        }
        Command::Compare { a, b } => {
            let read = |p: &PathBuf| -> Result<_> {
                let text = fs::read_to_string(p).map_err(|e| Error::Usage(format!("{}: {e}", p.display())))?;
                read_profiles_csv(&text)
            };
            let (pa, pb) = (read(&a)?, read(&b)?);
            let pairs: Vec<_> = if pa.len() == 1 && pb.len() == 1 {
                vec![(format!("{} vs {}", pa[0].0, pb[0].0), &pa[0].1, &pb[0].1)]
            } else {
                pa.iter()
                    .filter_map(|(name, p)| {
                        let (_, q) = pb.iter().find(|(n, _)| n == name)?;
                        Some((name.clone(), p, q))
                    })
                    .collect()
            };
            if pairs.is_empty() {
                return Err(Error::Usage("the files share no profile column".into()));
            }
            writeln!(out, "{:<24} {:>14} {:>14} {:>14}", "profile", "l2", "linf", "relative_l2").map_err(io)?;
            for (name, p, q) in pairs {
                let tol = 1e-9 * p.y.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
                if p.y.len() != q.y.len() || p.y.iter().zip(&q.y).any(|(s, t)| (s - t).abs() > tol) {
                    return Err(Error::Usage(format!("profile {name}: sample heights differ")));
                }
                let d = profile_difference(p, q)?;
                writeln!(out, "{name:<24} {:>14.6e} {:>14.6e} {:>14.6e}", d.l2, d.linf, d.relative_l2).map_err(io)?;
            }
            Ok(0)
        }
    }
}
