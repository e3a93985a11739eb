//! Argument parsing and dispatch for the `sqg` binary.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use sqg_galerkin::config::SolverConfig;
use sqg_galerkin::eigenbasis::{build_basis, DomainSpec};
use sqg_galerkin::io::gamma_to_bytes;
use sqg_galerkin::sqg::gamma_tensor;
use sqg_galerkin::timestepping::{
    calibrate_local_constant, calibrate_smallness_constant, CALIBRATION_DECAY, SMALLNESS_CALIBRATION_SEEDS,
};

use crate::error::{CliError, CliResult};
use crate::experiment::{output_root, run_experiment, DirLock, Outcome};
use crate::settings::{parse_config, Preset};
use crate::suite::{parse_selection, run_suite, Suite};

#[derive(Debug, Parser)]
#[command(name = "sqg", version, about = "SQG Galerkin experiments and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment preset.
    Run(RunArgs),
    /// Run a verification suite and emit JSON-lines reports.
    Verify(VerifyArgs),
    /// Recalibrate an empirical constant.
    Calibrate(CalibrateArgs),
    /// Write the interaction tensor cache for a basis.
    ExportGamma(ExportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// One of local_existence, small_data_global, subcritical_global,
    /// inviscid_local, linear_advection, retarded_mollification,
    /// picard_inviscid, verify_suite.
    pub preset: String,
    /// JSON config file with flat keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` override, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "default")]
    pub suite: String,
    /// Comma-separated subset of checks; an empty value selects none.
    #[arg(long)]
    pub select: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Constant {
    #[value(name = "M")]
    M,
    #[value(name = "C")]
    C,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(value_enum)]
    pub constant: Constant,
    /// Seed range `start..end`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long = "J", default_value_t = 8)]
    pub modes_per_axis: usize,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Horizon for `C`; `M` runs stop once the norm doubles.
    #[arg(long = "T")]
    pub t_final: Option<f64>,
    /// `||theta_0||_{2,D}` of the `M` samples.
    #[arg(long, default_value_t = 4000.0)]
    pub amplitude: f64,
    /// Relative width of the `C` bisection.
    #[arg(long, default_value_t = 1e-3)]
    pub rel_tol: f64,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "J", default_value_t = 8)]
    pub modes_per_axis: usize,
    #[arg(long = "Lx", default_value_t = std::f64::consts::PI)]
    pub lx: f64,
    #[arg(long = "Ly", default_value_t = std::f64::consts::PI)]
    pub ly: f64,
    /// Destination; defaults to `gamma-J{J}.bin` under the output root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::ExportGamma(args) => cmd_export(args),
    }
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let preset: Preset = args.preset.parse()?;
    if preset == Preset::VerifySuite {
        if args.config.is_some() || !args.set.is_empty() {
            return Err(CliError::Config("verify_suite takes no config; use `sqg verify --suite`".into()));
        }
        return cmd_verify(VerifyArgs {
            suite: Suite::Default.name().into(),
            select: None,
        });
    }
    let settings = parse_config(preset, args.config.as_deref(), &args.set)?;
    let manifest = run_experiment(&settings, &output_root(), args.config.as_deref())?;
    println!("{}", manifest.output_dir.join("manifest.json").display());
    match manifest.outcome {
        Outcome::Completed => Ok(()),
        Outcome::BlowUp { time, last_good_time } => {
            eprintln!("blow-up at t = {time} (last good state at t = {last_good_time})");
            if preset.requires_completion() {
                Err(CliError::BlowUp { time, last_good_time })
            } else {
                Ok(())
            }
        }
        Outcome::IterationFailure { ref residuals } => {
            eprintln!("Picard iteration did not converge; residuals {residuals:?}");
            Ok(())
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let suite: Suite = args.suite.parse()?;
    let selection = args.select.as_deref().map(parse_selection).transpose()?;
    let root = output_root();
    let dir = root.join(format!("verify-{suite}"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let _lock = DirLock::acquire(&dir)?;
    let reports = run_suite(suite, selection.as_deref())?;
    if reports.is_empty() {
        eprintln!("warning: no checks selected; nothing was verified");
    }
    let mut text = String::new();
    for r in &reports {
        let line = r.to_json_line();
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    fs::write(dir.join("reports.jsonl"), text)?;
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for r in &failed {
        eprintln!("FAILED {}", r.to_json_line());
    }
    Err(CliError::Verification(format!(
        "{} of {} reports failed in suite {suite}",
        failed.len(),
        reports.len()
    )))
}

fn parse_seeds(text: Option<&str>, default: Range<u64>) -> CliResult<Range<u64>> {
    let Some(text) = text else { return Ok(default) };
    let bad = || CliError::Config(format!("seeds: expected start..end, got '{text}'"));
    let (a, b) = text.split_once("..").ok_or_else(bad)?;
    let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a >= b {
        return Err(bad());
    }
    Ok(a..b)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(path, &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> CliResult<()> {
    let mut cfg = SolverConfig {
        domain: DomainSpec::unit_square(args.modes_per_axis),
        ..Default::default()
    };
    let root = output_root();
    match args.constant {
        Constant::C => {
            cfg.t_final = args.t_final.unwrap_or(10.0);
            cfg.dt = args.dt.unwrap_or(cfg.dt);
            cfg.validate()?;
            let seeds = parse_seeds(args.seeds.as_deref(), SMALLNESS_CALIBRATION_SEEDS)?;
            let cal = calibrate_smallness_constant(&cfg, seeds, args.decay.unwrap_or(CALIBRATION_DECAY), args.rel_tol)?;
            write_json(&root.join("calibration-C.json"), &cal)
        }
        Constant::M => {
            cfg.dt = args.dt.unwrap_or(2.5e-5);
            cfg.t_final = args.t_final.unwrap_or(0.05);
            cfg.validate()?;
            let seeds = parse_seeds(args.seeds.as_deref(), 0..8)?;
            let cal = calibrate_local_constant(&cfg, seeds, args.decay.unwrap_or(CALIBRATION_DECAY), args.amplitude)?;
            write_json(&root.join("calibration-M.json"), &cal)
        }
    }
}

fn cmd_export(args: ExportArgs) -> CliResult<()> {
    let domain = DomainSpec::new(args.lx, args.ly, args.modes_per_axis, DomainSpec::min_nquad(args.modes_per_axis))?;
    let basis = build_basis(domain)?;
    let gamma = gamma_tensor(&basis, false)?;
    let bytes = gamma_to_bytes(&basis, &gamma)?;
    let path = args
        .out
        .unwrap_or_else(|| output_root().join(format!("gamma-J{}.bin", args.modes_per_axis)));
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(&bytes)?;
    println!("{}", path.display());
    Ok(())
}
