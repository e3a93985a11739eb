//! Experiment runs: one output directory per resolved config, guarded by a
//! lock file, holding the diagnostics CSV, snapshots, plots and a manifest.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use sqg_galerkin::eigenbasis::{random_field, EigenBasis, SpectralField};
use sqg_galerkin::error::SqgError;
use sqg_galerkin::io::{write_diagnostics_csv, Snapshot};
use sqg_galerkin::spectral_ops::sobolev_norm;
use sqg_galerkin::sqg::{velocity, VelocityField};
use sqg_galerkin::timestepping::{
    local_existence_time, run_picard_inviscid, smallness_margin, with_h2_norm, DiagnosticsRow, FrozenVelocity,
    PicardSettings, RunOutput, Solver,
};

use crate::error::{CliError, CliResult};
use crate::plot;
use crate::settings::{InitialData, Preset, PrescribedVelocity, RunSettings, SCHEMA_VERSION};

pub const OUTPUT_ROOT_ENV: &str = "SQG_OUTPUT_ROOT";
pub const LOCK_FILE: &str = ".lock";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("sqg-output"))
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    BlowUp { time: f64, last_good_time: f64 },
    IterationFailure { residuals: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u64,
    pub preset: Preset,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Paths relative to `output_dir`.
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    pub outcome: Outcome,
    pub extras: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))
            .map_err(|e| CliError::Io(format!("cannot read manifest in {}: {e}", dir.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("malformed manifest: {e}")))
    }
}

/// Exclusive claim on an output directory, released on drop.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "{} is locked by another run (remove {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(CliError::Io(format!("cannot create {}: {e}", path.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

pub fn run_dir(root: &Path, settings: &RunSettings) -> PathBuf {
    root.join(format!("{}-{}", settings.preset, &settings.config_hash()[..12]))
}

struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = File::create(&path).map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))?;
        self.names.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let mut w = self.create(name)?;
        w.write_all(bytes)?;
        w.flush()?;
        Ok(())
    }
}

pub fn initial_data(basis: &EigenBasis, settings: &RunSettings) -> CliResult<SpectralField> {
    let raw = match settings.init {
        InitialData::Random { decay } => random_field(basis, settings.solver.seed, decay),
        InitialData::Mode { index } => SpectralField::unit(basis.size(), index),
        InitialData::Zero => basis.zeros(),
    };
    match settings.effective_amplitude() {
        Some(a) if !raw.is_zero() => Ok(with_h2_norm(basis, &raw, a)?),
        _ => Ok(raw),
    }
}

fn prescribed_velocity(basis: &EigenBasis, which: PrescribedVelocity) -> CliResult<VelocityField> {
    Ok(match which {
        PrescribedVelocity::Zero => VelocityField::zero(basis),
        PrescribedVelocity::FirstMode => velocity(basis, &SpectralField::unit(basis.size(), 0))?,
    })
}

/// Result of the solver stage before artifacts are written.
struct Executed {
    rows: Vec<DiagnosticsRow>,
    snapshots: Vec<(f64, SpectralField)>,
    outcome: Outcome,
    extras: BTreeMap<String, f64>,
    picard: Option<serde_json::Value>,
}

impl Executed {
    fn from_run(out: RunOutput) -> Self {
        let snapshots = out
            .trajectory
            .times
            .iter()
            .copied()
            .zip(out.trajectory.snapshots)
            .collect();
        let mut extras = BTreeMap::new();
        extras.insert("steps".into(), out.steps as f64);
        Self {
            rows: out.rows,
            snapshots,
            outcome: Outcome::Completed,
            extras,
            picard: None,
        }
    }

    fn from_result(res: Result<RunOutput, SqgError>) -> CliResult<Self> {
        match res {
            Ok(out) => Ok(Self::from_run(out)),
            Err(SqgError::BlowUp {
                time,
                last_good_time,
                last_good,
            }) => Ok(Self {
                rows: Vec::new(),
                snapshots: vec![(last_good_time, *last_good)],
                outcome: Outcome::BlowUp { time, last_good_time },
                extras: BTreeMap::new(),
                picard: None,
            }),
            Err(e) => Err(e.into()),
        }
    }

    fn h2_summary(&mut self) {
        if let Some(first) = self.rows.first() {
            let h0 = first.h2;
            let hmax = self.rows.iter().map(|r| r.h2).fold(0.0, f64::max);
            self.extras.insert("h2_initial".into(), h0);
            self.extras.insert("h2_max".into(), hmax);
            if h0 > 0.0 {
                self.extras.insert("h2_max_ratio".into(), hmax / h0);
            }
        }
    }
}

fn execute(settings: &RunSettings) -> CliResult<Executed> {
    let cfg = &settings.solver;
    let mut solver = Solver::new(cfg.clone())?;
    if settings.gamma_path {
        solver = solver.using_gamma_path()?;
    }
    let basis = solver.basis();
    let theta0 = initial_data(basis, settings)?;
    let mut ex = match settings.preset {
        Preset::LocalExistence => {
            let mut ex = Executed::from_result(solver.run(&theta0))?;
            if cfg.kappa > 0.0 && !theta0.is_zero() {
                let t_loc = local_existence_time(basis, &theta0, cfg.kappa, settings.m_const)?;
                ex.extras.insert("local_existence_time".into(), t_loc);
            }
            ex
        }
        Preset::SmallDataGlobal => {
            let margin = smallness_margin(basis, &theta0, cfg.kappa, settings.c_const)?;
            let mut ex = Executed::from_result(solver.run(&theta0))?;
            ex.extras.insert("smallness_margin".into(), margin);
            ex.extras.insert("smallness_kappa".into(), cfg.kappa);
            ex.extras.insert("smallness_c".into(), settings.c_const);
            ex
        }
        Preset::SubcriticalGlobal => Executed::from_result(solver.run(&theta0))?,
        Preset::InviscidLocal => {
            let mut ex = Executed::from_result(solver.run(&theta0))?;
            if let (Some(first), Some(last)) = (ex.rows.first(), ex.rows.last()) {
                ex.extras.insert("l2_drift".into(), (last.l2 - first.l2).abs());
            }
            ex
        }
        Preset::LinearAdvection => {
            let u = prescribed_velocity(basis, settings.velocity)?;
            let mut source = FrozenVelocity(u);
            let res = solver.solve_linear_advection(&mut source, &theta0);
            let mut ex = Executed::from_result(res)?;
            if settings.velocity == PrescribedVelocity::Zero {
                let rates: Vec<f64> = basis.lambdas().iter().map(|l| cfg.kappa * l.powf(cfg.alpha)).collect();
                let worst = ex
                    .snapshots
                    .iter()
                    .flat_map(|(t, th)| {
                        th.coeffs
                            .iter()
                            .zip(&theta0.coeffs)
                            .zip(&rates)
                            .map(move |((c, c0), r)| (c - c0 * (-r * t).exp()).abs())
                    })
                    .fold(0.0, f64::max);
                ex.extras.insert("closed_form_deviation".into(), worst);
            }
            ex
        }
        Preset::RetardedMollification => {
            let res = solver.run_retarded_mollification(&theta0, settings.delta);
            let mut ex = Executed::from_result(res)?;
            ex.extras.insert("delta".into(), settings.delta);
            ex
        }
        Preset::PicardInviscid => {
            let picard = PicardSettings {
                kappa_visc: settings.kappa_visc,
                tol: settings.picard_tol,
                max_iter: settings.picard_max_iter,
                ..PicardSettings::default()
            };
            let report = run_picard_inviscid(&theta0, &picard, cfg)?;
            let outcome = if report.converged {
                Outcome::Completed
            } else {
                Outcome::IterationFailure {
                    residuals: report.residuals.clone(),
                }
            };
            let mut extras = BTreeMap::new();
            extras.insert("iterations".into(), report.iterations as f64);
            let json = serde_json::json!({
                "kappa_visc": picard.kappa_visc,
                "tol": picard.tol,
                "max_iter": picard.max_iter,
                "converged": report.converged,
                "iterations": report.iterations,
                "residuals": report.residuals,
                "ratios": report.ratios(),
                "w2p_exponent": picard.w2p_exponent,
                "w2p_proxy": report.w2p_proxy,
            });
            Executed {
                rows: report.rows.clone(),
                snapshots: report.last.times.iter().copied().zip(report.last.snapshots.iter().cloned()).collect(),
                outcome,
                extras,
                picard: Some(json),
            }
        }
        Preset::VerifySuite => {
            return Err(CliError::Config(
                "verify_suite is run through the `verify` command".into(),
            ))
        }
    };
    ex.extras.insert("h2_theta0".into(), sobolev_norm(basis, &theta0, 2.0)?);
    ex.h2_summary();
    Ok(ex)
}

/// Runs `settings` under `root` and writes every artifact plus the manifest.
/// Blow-up and iteration failure are recorded in the manifest; the caller
/// decides whether they are fatal.
pub fn run_experiment(settings: &RunSettings, root: &Path, config_path: Option<&Path>) -> CliResult<RunManifest> {
    let dir = run_dir(root, settings);
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let _lock = DirLock::acquire(&dir)?;
    let start = Instant::now();

    let ex = execute(settings)?;
    let mut art = Artifacts { dir: dir.clone(), names: Vec::new() };
    art.write("config.json", settings.canonical_json().as_bytes())?;

    let cfg = &settings.solver;
    let basis = sqg_galerkin::eigenbasis::build_basis(cfg.domain)?;
    if !ex.rows.is_empty() {
        let mut w = art.create("diagnostics.csv")?;
        write_diagnostics_csv(&mut w, &cfg.lr_exponents, &ex.rows)?;
        w.flush()?;
    }
    for (i, (t, field)) in ex.snapshots.iter().enumerate() {
        let snap = Snapshot::new(&basis, cfg.alpha, cfg.kappa, *t, field.clone())?;
        art.write(&format!("snapshots/{i:06}.bin"), &snap.to_bytes())?;
    }
    if let Some(json) = &ex.picard {
        let text = serde_json::to_string_pretty(json).map_err(|e| CliError::Internal(e.to_string()))?;
        art.write("picard.json", text.as_bytes())?;
    }
    if settings.plots && !ex.rows.is_empty() {
        let csv = fs::read_to_string(dir.join("diagnostics.csv"))?;
        let svg = plot::norms_svg(&csv, &format!("{} norms", settings.preset))?;
        art.write("norms.svg", svg.as_bytes())?;
    }

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        preset: settings.preset,
        config_hash: settings.config_hash(),
        code_version: code_version(),
        seed: cfg.seed,
        config_path: config_path.map(Path::to_path_buf),
        output_dir: dir.clone(),
        artifacts: art.names.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outcome: ex.outcome,
        extras: ex.extras,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?;
    fs::write(dir.join("manifest.json"), text)?;
    Ok(manifest)
}
