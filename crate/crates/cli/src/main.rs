//! `tiltgait` command-line front end.
//!
//! Any config key can be given as `--key value` or `--key=value`; these are
//! applied in order on top of `--config PATH` (if any) and the defaults.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tiltgait::acceptance::{CriterionOutcome, CRITERIA};
use tiltgait::config::KEYS;
use tiltgait::explore::{explore_direction, survey_region, write_exploration_ndjson, write_survey_ndjson};
use tiltgait::invertibility::{determinant_surface, write_curves_csv, write_surface_csv, zero_curves};
use tiltgait::sim::{run, write_telemetry_csv};
use tiltgait::{Settings, Verdict};

#[derive(Debug, Parser)]
#[command(
    name = "tiltgait",
    version,
    about = "Fixed-gait tiltrotor simulation and invertibility analysis",
    after_help = "Every config key is also accepted as a flag: --key value or --key=value \
                  (run `tiltgait config` for the list and defaults)."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` config file applied before flag overrides.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, short, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expect {
    Stable,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fly one gait; writes telemetry CSV and reports the verdict.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Exit 1 unless the verdict matches.
        #[arg(long)]
        expect: Option<Expect>,
    },
    /// Normalized level determinant over the (alpha2, alpha4) grid as CSV.
    Surface {
        #[command(flatten)]
        common: Common,
    },
    /// Zero-level polylines of the determinant as CSV.
    Curves {
        #[command(flatten)]
        common: Common,
    },
    /// March along one direction until the first non-Stable gait; NDJSON.
    Explore {
        #[command(flatten)]
        common: Common,
    },
    /// Classify the lattice of the gait triangle and fit the stable hull; NDJSON.
    Survey {
        #[command(flatten)]
        common: Common,
    },
    /// Run the acceptance criteria (all, or the listed ids).
    Check {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=9))]
        ids: Vec<u8>,
    },
    /// Print the resolved configuration as a config file.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

/// Flags clap owns; everything else spelled `--key` must be a config key.
const OWN_FLAGS: &[&str] = &["config", "out", "expect", "help", "version"];

#[derive(Debug, PartialEq)]
struct SplitArgs {
    clap: Vec<String>,
    overrides: Vec<(String, String)>,
}

/// Pulls `--key value` / `--key=value` config overrides out of `args`
/// (program name excluded). The token after a bare `--key` is always its
/// value, so negative numbers need no `=`.
fn split_overrides(args: &[String]) -> Result<SplitArgs, String> {
    let mut clap = Vec::new();
    let mut overrides = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--").filter(|b| !b.is_empty()) else {
            clap.push(arg.clone());
            continue;
        };
        let (name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        let key = name.replace('-', "_");
        if OWN_FLAGS.contains(&name) || !KEYS.contains(&key.as_str()) {
            clap.push(arg.clone());
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it.next().cloned().ok_or_else(|| format!("--{name} needs a value"))?,
        };
        overrides.push((key, value));
    }
    Ok(SplitArgs { clap, overrides })
}

fn settings(common: &Common, overrides: &[(String, String)]) -> Result<Settings> {
    let mut s = match &common.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    for (k, v) in overrides {
        s.set(k, v)?;
    }
    s.validate()?;
    Ok(s)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(command: Command, overrides: &[(String, String)]) -> Result<ExitCode> {
    match command {
        Command::Simulate { common, expect } => {
            let s = settings(&common, overrides)?;
            let (telemetry, verdict) = run(&s.sim);
            let mut out = output(common.out.as_deref())?;
            write_telemetry_csv(&telemetry, &mut out)?;
            out.flush()?;
            let line = serde_json::to_string(&verdict)?;
            // keep stdout pure CSV when the telemetry goes there
            if common.out.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
            if expect == Some(Expect::Stable) && verdict.verdict != Verdict::Stable {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Surface { common } => {
            let s = settings(&common, overrides)?;
            let field = determinant_surface(&s.restriction, &s.grid, &s.sim.params);
            let mut out = output(common.out.as_deref())?;
            write_surface_csv(&field, &mut out)?;
            out.flush()?;
        }
        Command::Curves { common } => {
            let s = settings(&common, overrides)?;
            let curves = zero_curves(&s.restriction, &s.grid, &s.sim.params);
            let mut out = output(common.out.as_deref())?;
            write_curves_csv(&curves, &mut out)?;
            out.flush()?;
            eprintln!(
                "{} curves, {} vertices",
                curves.polylines.len(),
                curves.vertex_count()
            );
        }
        Command::Explore { common } => {
            let s = settings(&common, overrides)?;
            let result = explore_direction(
                &s.restriction,
                s.direction,
                s.explore_step,
                &s.sim,
                &s.region,
                s.workers,
            );
            let mut out = output(common.out.as_deref())?;
            write_exploration_ndjson(&result, &mut out)?;
            out.flush()?;
            eprintln!(
                "alpha2_m = {} after {} samples ({:?})",
                result.alpha2_m,
                result.samples.len(),
                result.ended_by
            );
        }
        Command::Survey { common } => {
            let s = settings(&common, overrides)?;
            let report = survey_region(&s.restriction, s.survey_pitch, &s.sim, &s.region, s.workers);
            let mut out = output(common.out.as_deref())?;
            write_survey_ndjson(&report, &mut out)?;
            out.flush()?;
            eprintln!("{} of {} samples stable", report.stable, report.samples.len());
        }
        Command::Check { ids } => {
            if !overrides.is_empty() {
                anyhow::bail!("check runs at fixed settings and takes no config overrides");
            }
            let selected: Vec<u8> = if ids.is_empty() { (1..=9).collect() } else { ids };
            let outcomes: Vec<CriterionOutcome> =
                selected.iter().map(|&id| CRITERIA[id as usize - 1]()).collect();
            for o in &outcomes {
                println!("{o}");
            }
            let passed = outcomes.iter().filter(|o| o.passed).count();
            println!("{passed}/{} criteria passed", outcomes.len());
            if passed != outcomes.len() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Config { common } => {
            let s = settings(&common, overrides)?;
            let mut out = output(common.out.as_deref())?;
            out.write_all(s.dump().as_bytes())?;
            out.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let split = match split_overrides(&args[1..]) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(std::iter::once(args[0].clone()).chain(split.clap)) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command, &split.overrides) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
