use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eigenbasis::DomainSpec;
use crate::error::{Result, SqgError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Exponential time differencing RK2; the dissipative factor is exact.
    Etdrk2,
    /// Implicit diffusion, explicit advection, first order.
    ImexEuler,
    /// Classical RK4 on the full right-hand side.
    Rk4FullyExplicit,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Etdrk2 => "etdrk2",
            Scheme::ImexEuler => "imex_euler",
            Scheme::Rk4FullyExplicit => "rk4_fully_explicit",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SqgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "etdrk2" => Ok(Scheme::Etdrk2),
            "imex_euler" => Ok(Scheme::ImexEuler),
            "rk4" | "rk4_fully_explicit" => Ok(Scheme::Rk4FullyExplicit),
            other => Err(SqgError::Config(format!(
                "scheme: unknown value '{other}' (expected etdrk2, imex_euler or rk4_fully_explicit)"
            ))),
        }
    }
}

/// Parameters of one integration of the Galerkin system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub domain: DomainSpec,
    /// Dissipation exponent, `Lambda^(2 alpha)`.
    pub alpha: f64,
    pub kappa: f64,
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Record a snapshot and diagnostics row every this many steps.
    pub snapshot_stride: usize,
    pub seed: u64,
    /// Include the advection term. Disabling it leaves pure fractional
    /// diffusion.
    pub nonlinear: bool,
    /// Exponents `r` for the grid `L^r` diagnostics.
    pub lr_exponents: Vec<f64>,
    /// Abort once `||theta||_{2,D}` exceeds this multiple of its initial value.
    pub blowup_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            domain: DomainSpec::unit_square(8),
            alpha: 0.5,
            kappa: 1.0,
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::Etdrk2,
            snapshot_stride: 1,
            seed: 0,
            nonlinear: true,
            lr_exponents: vec![4.0],
            blowup_factor: 1e6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SqgError::Config(format!(
                "alpha: {} is outside the admissible range (0, 1]",
                self.alpha
            )));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(SqgError::Config(format!("kappa: {} must be >= 0", self.kappa)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SqgError::Config(format!("dt: {} must be > 0", self.dt)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(SqgError::Config(format!("T: {} must be > 0", self.t_final)));
        }
        if self.dt > self.t_final {
            return Err(SqgError::Config(format!(
                "dt: {} exceeds the horizon T = {}",
                self.dt, self.t_final
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(SqgError::Config("snapshot_stride: must be >= 1".into()));
        }
        if let Some(r) = self.lr_exponents.iter().find(|r| !(**r >= 1.0)) {
            return Err(SqgError::Config(format!("lr: exponent {r} must be >= 1")));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(SqgError::Config("blowup_factor: must exceed 1".into()));
        }
        Ok(())
    }
}
