//! Experiment presets and the flat JSON configuration.
//!
//! Values are resolved in three layers: preset defaults, then the config
//! file, then `--set key=value` flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use sqg_galerkin::config::{Scheme, SolverConfig};
use sqg_galerkin::eigenbasis::DomainSpec;
use sqg_galerkin::timestepping::{CALIBRATED_LOCAL_M, CALIBRATED_SMALLNESS_C};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    LocalExistence,
    SmallDataGlobal,
    SubcriticalGlobal,
    InviscidLocal,
    LinearAdvection,
    RetardedMollification,
    PicardInviscid,
    VerifySuite,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::LocalExistence,
        Preset::SmallDataGlobal,
        Preset::SubcriticalGlobal,
        Preset::InviscidLocal,
        Preset::LinearAdvection,
        Preset::RetardedMollification,
        Preset::PicardInviscid,
        Preset::VerifySuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::LocalExistence => "local_existence",
            Preset::SmallDataGlobal => "small_data_global",
            Preset::SubcriticalGlobal => "subcritical_global",
            Preset::InviscidLocal => "inviscid_local",
            Preset::LinearAdvection => "linear_advection",
            Preset::RetardedMollification => "retarded_mollification",
            Preset::PicardInviscid => "picard_inviscid",
            Preset::VerifySuite => "verify_suite",
        }
    }

    /// Presets whose regime guarantees a global solution; a blow-up there is
    /// a failure rather than an outcome.
    pub fn requires_completion(self) -> bool {
        matches!(
            self,
            Preset::SmallDataGlobal | Preset::SubcriticalGlobal | Preset::LinearAdvection | Preset::RetardedMollification
        )
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
            CliError::Config(format!("unknown preset '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// `random_field(seed, decay)`.
    Random { decay: f64 },
    /// A single basis function, by sorted index.
    Mode { index: usize },
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrescribedVelocity {
    Zero,
    /// `R_D^perp` of the first eigenfunction, frozen in time.
    FirstMode,
}

/// Fully resolved experiment settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub schema_version: u64,
    pub preset: Preset,
    pub solver: SolverConfig,
    pub init: InitialData,
    /// Target `||theta_0||_{2,D}`; `None` keeps the raw initial field.
    pub amplitude: Option<f64>,
    pub delta: f64,
    pub kappa_visc: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub m_const: f64,
    pub c_const: f64,
    pub velocity: PrescribedVelocity,
    pub gamma_path: bool,
    pub plots: bool,
}

impl RunSettings {
    /// Preset defaults on top of the global defaults
    /// (`Lx = Ly = pi`, `J = 8`, `Nquad = 2J + 2`, `alpha = 0.5`,
    /// `kappa = 1`, `dt = 1e-3`, `T = 1`, etdrk2, a snapshot every 10 steps).
    pub fn defaults(preset: Preset) -> Self {
        let mut s = RunSettings {
            schema_version: SCHEMA_VERSION,
            preset,
            solver: SolverConfig {
                snapshot_stride: 10,
                ..Default::default()
            },
            init: InitialData::Random { decay: 1.0 },
            amplitude: Some(5.0),
            delta: 0.05,
            kappa_visc: 0.05,
            picard_tol: 1e-12,
            picard_max_iter: 10,
            m_const: CALIBRATED_LOCAL_M,
            c_const: CALIBRATED_SMALLNESS_C,
            velocity: PrescribedVelocity::Zero,
            gamma_path: false,
            plots: true,
        };
        match preset {
            Preset::SmallDataGlobal => {
                s.solver.t_final = 10.0;
                s.solver.snapshot_stride = 100;
                s.amplitude = None;
            }
            Preset::SubcriticalGlobal => {
                s.solver.alpha = 0.75;
                s.solver.t_final = 10.0;
                s.solver.snapshot_stride = 100;
            }
            Preset::InviscidLocal => {
                s.solver.kappa = 0.0;
                s.init = InitialData::Mode { index: 0 };
                s.amplitude = None;
            }
            Preset::PicardInviscid => {
                s.solver.t_final = 0.1;
                s.amplitude = Some(0.1);
            }
            _ => {}
        }
        s
    }

    /// `||theta_0||_{2,D}` used for the run; small-data runs default to half
    /// the admissible threshold `kappa / C`.
    pub fn effective_amplitude(&self) -> Option<f64> {
        match (self.preset, self.amplitude) {
            (Preset::SmallDataGlobal, None) => Some(0.5 * self.solver.kappa / self.c_const),
            (_, a) => a,
        }
    }

    /// Canonical JSON used for hashing and for `config.json`.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("settings serialize")
    }

    pub fn config_hash(&self) -> String {
        hex_digest(self.canonical_json().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub const KNOWN_KEYS: &[&str] = &[
    "schema_version",
    "Lx",
    "Ly",
    "J",
    "Nquad",
    "alpha",
    "kappa",
    "dt",
    "T",
    "scheme",
    "seed",
    "snapshot_stride",
    "lr",
    "blowup_factor",
    "init",
    "init_mode",
    "init_decay",
    "amplitude",
    "delta",
    "kappa_visc",
    "picard_tol",
    "picard_max_iter",
    "M",
    "C",
    "velocity",
    "gamma_path",
    "plots",
];

fn num(key: &str, v: &Value) -> CliResult<f64> {
    v.as_f64()
        .ok_or_else(|| CliError::Config(format!("{key}: expected a number, got {v}")))
}

fn uint(key: &str, v: &Value) -> CliResult<u64> {
    v.as_u64()
        .ok_or_else(|| CliError::Config(format!("{key}: expected a non-negative integer, got {v}")))
}

fn usize_of(key: &str, v: &Value) -> CliResult<usize> {
    usize::try_from(uint(key, v)?).map_err(|_| CliError::Config(format!("{key}: value {v} is too large")))
}

fn text<'a>(key: &str, v: &'a Value) -> CliResult<&'a str> {
    v.as_str()
        .ok_or_else(|| CliError::Config(format!("{key}: expected a string, got {v}")))
}

fn boolean(key: &str, v: &Value) -> CliResult<bool> {
    v.as_bool()
        .ok_or_else(|| CliError::Config(format!("{key}: expected true or false, got {v}")))
}

/// Accumulates overrides before the domain is rebuilt, so that `J` and
/// `Nquad` may be given in any order.
#[derive(Default)]
struct DomainOverrides {
    lx: Option<f64>,
    ly: Option<f64>,
    nj: Option<usize>,
    nquad: Option<usize>,
}

fn apply(s: &mut RunSettings, dom: &mut DomainOverrides, key: &str, v: &Value) -> CliResult<()> {
    match key {
        "schema_version" => {
            let version = uint(key, v)?;
            if version != SCHEMA_VERSION {
                return Err(CliError::Config(format!(
                    "schema_version: {version} is not supported (expected {SCHEMA_VERSION})"
                )));
            }
        }
        "Lx" => dom.lx = Some(num(key, v)?),
        "Ly" => dom.ly = Some(num(key, v)?),
        "J" => dom.nj = Some(usize_of(key, v)?),
        "Nquad" => dom.nquad = Some(usize_of(key, v)?),
        "alpha" => s.solver.alpha = num(key, v)?,
        "kappa" => s.solver.kappa = num(key, v)?,
        "dt" => s.solver.dt = num(key, v)?,
        "T" => s.solver.t_final = num(key, v)?,
        "scheme" => {
            s.solver.scheme = text(key, v)?
                .parse::<Scheme>()?
        }
        "seed" => s.solver.seed = uint(key, v)?,
        "snapshot_stride" => s.solver.snapshot_stride = usize_of(key, v)?,
        "lr" => {
            let list = match v {
                Value::Array(items) => items.iter().map(|x| num(key, x)).collect::<CliResult<Vec<_>>>()?,
                other => vec![num(key, other)?],
            };
            s.solver.lr_exponents = list;
        }
        "blowup_factor" => s.solver.blowup_factor = num(key, v)?,
        "init" => {
            s.init = match text(key, v)? {
                "random" => InitialData::Random { decay: 1.0 },
                "mode" => InitialData::Mode { index: 0 },
                "zero" => InitialData::Zero,
                other => {
                    return Err(CliError::Config(format!(
                        "init: unknown value '{other}' (expected random, mode or zero)"
                    )))
                }
            }
        }
        "init_mode" => s.init = InitialData::Mode { index: usize_of(key, v)? },
        "init_decay" => s.init = InitialData::Random { decay: num(key, v)? },
        "amplitude" => {
            s.amplitude = match v {
                Value::Null => None,
                other => Some(num(key, other)?),
            }
        }
        "delta" => s.delta = num(key, v)?,
        "kappa_visc" => s.kappa_visc = num(key, v)?,
        "picard_tol" => s.picard_tol = num(key, v)?,
        "picard_max_iter" => s.picard_max_iter = usize_of(key, v)?,
        "M" => s.m_const = num(key, v)?,
        "C" => s.c_const = num(key, v)?,
        "velocity" => {
            s.velocity = match text(key, v)? {
                "zero" => PrescribedVelocity::Zero,
                "first_mode" => PrescribedVelocity::FirstMode,
                other => {
                    return Err(CliError::Config(format!(
                        "velocity: unknown value '{other}' (expected zero or first_mode)"
                    )))
                }
            }
        }
        "gamma_path" => s.gamma_path = boolean(key, v)?,
        "plots" => s.plots = boolean(key, v)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown key '{other}' (known keys: {})",
                KNOWN_KEYS.join(", ")
            )))
        }
    }
    Ok(())
}

fn validate(s: &RunSettings) -> CliResult<()> {
    s.solver.validate()?;
    let positive = [
        ("delta", s.delta),
        ("kappa_visc", s.kappa_visc),
        ("picard_tol", s.picard_tol),
        ("M", s.m_const),
        ("C", s.c_const),
    ];
    for (key, v) in positive {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Config(format!("{key}: {v} must be a positive number")));
        }
    }
    if let Some(a) = s.amplitude {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(CliError::Config(format!("amplitude: {a} must be >= 0")));
        }
    }
    if let InitialData::Mode { index } = s.init {
        let m = s.solver.domain.modes_per_axis * s.solver.domain.modes_per_axis;
        if index >= m {
            return Err(CliError::Config(format!("init_mode: {index} exceeds the {m} basis functions")));
        }
    }
    if s.picard_max_iter == 0 {
        return Err(CliError::Config("picard_max_iter: must be >= 1".into()));
    }
    Ok(())
}

/// Parses one `key=value` override. Values are read as JSON when possible
/// and as bare strings otherwise, so `scheme=rk4` and `lr=[2,4]` both work.
pub fn parse_override(raw: &str) -> CliResult<(String, Value)> {
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got '{raw}'")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(CliError::Config(format!("--set expects key=value, got '{raw}'")));
    }
    let val = val.trim();
    let value = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok((key.to_string(), value))
}

/// Resolves a preset, an optional JSON config text and `--set` overrides.
pub fn resolve(preset: Preset, file: Option<&str>, overrides: &[(String, Value)]) -> CliResult<RunSettings> {
    let mut s = RunSettings::defaults(preset);
    let mut dom = DomainOverrides::default();
    if let Some(text) = file {
        let map: Map<String, Value> = match serde_json::from_str(text) {
            Ok(Value::Object(map)) => map,
            Ok(_) => return Err(CliError::Config("config file must contain a JSON object".into())),
            Err(e) => return Err(CliError::Config(format!("config file is not valid JSON: {e}"))),
        };
        for (k, v) in &map {
            apply(&mut s, &mut dom, k, v)?;
        }
    }
    for (k, v) in overrides {
        apply(&mut s, &mut dom, k, v)?;
    }
    let d = s.solver.domain;
    let nj = dom.nj.unwrap_or(d.modes_per_axis);
    let nquad = dom.nquad.unwrap_or(if dom.nj.is_some() { DomainSpec::min_nquad(nj) } else { d.nquad });
    s.solver.domain = DomainSpec {
        lx: dom.lx.unwrap_or(d.lx),
        ly: dom.ly.unwrap_or(d.ly),
        modes_per_axis: nj,
        nquad,
    };
    validate(&s)?;
    Ok(s)
}

/// [`resolve`] reading the config from `path`.
pub fn parse_config(preset: Preset, path: Option<&Path>, overrides: &[String]) -> CliResult<RunSettings> {
    let text = match path {
        Some(p) => Some(
            std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("cannot read config {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let overrides = overrides.iter().map(|o| parse_override(o)).collect::<CliResult<Vec<_>>>()?;
    resolve(preset, text.as_deref(), &overrides)
}
