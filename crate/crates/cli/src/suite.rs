//! Verification suites: named batteries of checks producing
//! [`InequalityReport`]s.

use std::fmt;
use std::str::FromStr;

use sqg_galerkin::config::{Scheme, SolverConfig};
use sqg_galerkin::eigenbasis::{build_basis, random_field, DomainSpec, EigenBasis};
use sqg_galerkin::error::Result as SqgResult;
use sqg_galerkin::sqg::{gamma_tensor, GammaTensor};
use sqg_galerkin::timestepping::{run, with_h2_norm, Solver};
use sqg_galerkin::verification::{
    check_velocity_of, commutator_diagnostic, energy_balance, lp_monotonicity, CordobaChecker, InequalityReport,
    ReportMetadata, COMMUTATOR_RATIO_BOUND,
};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Fast battery expected to pass on a correct build.
    Default,
    /// Energy balance with a sign-flipped interaction tensor entry; must fail.
    Mutation,
    /// Every Cordoba-Cordoba combination, including those the discrete
    /// projection cannot resolve.
    CordobaFull,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Default, Suite::Mutation, Suite::CordobaFull];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Default => "default",
            Suite::Mutation => "mutation",
            Suite::CordobaFull => "cordoba_full",
        }
    }

    pub fn checks(self) -> &'static [Check] {
        match self {
            Suite::Default => &[
                Check::GammaAntisymmetry,
                Check::VelocityAdmissible,
                Check::Cordoba,
                Check::LpDecay,
                Check::EnergyBalance,
                Check::Commutator,
            ],
            Suite::Mutation => &[Check::EnergyBalance],
            Suite::CordobaFull => &[Check::Cordoba],
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown suite '{s}' (expected default, mutation or cordoba_full)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    GammaAntisymmetry,
    VelocityAdmissible,
    Cordoba,
    LpDecay,
    EnergyBalance,
    Commutator,
}

impl Check {
    pub const ALL: [Check; 6] = [
        Check::GammaAntisymmetry,
        Check::VelocityAdmissible,
        Check::Cordoba,
        Check::LpDecay,
        Check::EnergyBalance,
        Check::Commutator,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::GammaAntisymmetry => "gamma_antisymmetry",
            Check::VelocityAdmissible => "velocity",
            Check::Cordoba => "cordoba",
            Check::LpDecay => "lp_decay",
            Check::EnergyBalance => "energy_balance",
            Check::Commutator => "commutator",
        }
    }
}

impl FromStr for Check {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Check::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = Check::ALL.iter().map(|c| c.name()).collect();
            CliError::Config(format!("unknown check '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// Parses a comma-separated selection; the empty string selects nothing.
pub fn parse_selection(text: &str) -> CliResult<Vec<Check>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

fn basis(nj: usize) -> SqgResult<EigenBasis> {
    build_basis(DomainSpec::unit_square(nj))
}

fn meta(nj: usize, alpha: Option<f64>, seed: Option<u64>) -> ReportMetadata {
    ReportMetadata {
        modes_per_axis: Some(nj),
        alpha,
        seed,
        ..Default::default()
    }
}

/// Flips the sign of the largest-magnitude entry.
pub fn mutate_gamma(gamma: &mut GammaTensor) {
    let m = gamma.size();
    let (mut best, mut at) = (0.0, (0, 0, 0));
    for j in 0..m {
        for k in 0..m {
            for l in 0..m {
                let v = gamma.get(j, k, l).abs();
                if v > best {
                    best = v;
                    at = (j, k, l);
                }
            }
        }
    }
    let (j, k, l) = at;
    gamma.set(j, k, l, -gamma.get(j, k, l));
}

fn gamma_antisymmetry() -> SqgResult<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for nj in [2, 4, 6] {
        let g = gamma_tensor(&basis(nj)?, false)?;
        out.push(InequalityReport::new("gamma_antisymmetry", 1, -g.antisymmetry_defect(), 1e-12).with_metadata(meta(nj, None, None)));
    }
    Ok(out)
}

fn velocity_admissible() -> SqgResult<Vec<InequalityReport>> {
    let b = basis(8)?;
    let mut rep: Option<InequalityReport> = None;
    for seed in 0..10 {
        let r = check_velocity_of(&b, &random_field(&b, seed, 1.0), 1e-10)?;
        match &mut rep {
            None => rep = Some(r.with_metadata(meta(8, None, Some(0)))),
            Some(acc) => acc.absorb(r.worst_violation),
        }
    }
    Ok(rep.into_iter().collect())
}

/// `(r, s)` pairs resolved by the discrete check at the default enlargement.
const CORDOBA_RESOLVED: [(f64, f64); 5] = [(3.0, 0.5), (3.0, 1.0), (4.0, 0.5), (4.0, 1.0), (6.0, 0.5)];

fn cordoba_all_combos() -> Vec<(f64, f64)> {
    [4.0, 6.0]
        .iter()
        .flat_map(|&r| [0.5, 1.0, 1.5, 2.0].map(|s| (r, s)))
        .chain([2.0, 3.0].iter().flat_map(|&r| [0.5, 1.0].map(|s| (r, s))))
        .collect()
}

fn cordoba(combos: &[(f64, f64)], samples: u64) -> SqgResult<Vec<InequalityReport>> {
    let b = basis(6)?;
    let checker = CordobaChecker::new(&b)?;
    let mut out = Vec::new();
    for &(r, s) in combos {
        let mut rep = InequalityReport::new("cordoba_cordoba", 0, f64::INFINITY, 1e-8)
            .with_metadata(meta(6, None, Some(0)))
            .with_extra("r", r)
            .with_extra("s", s)
            .with_extra("enlargement", checker.enlargement() as f64);
        for seed in 0..samples {
            rep.absorb(checker.gap(&random_field(&b, seed, 0.5), r, s)?.relative());
        }
        out.push(rep);
    }
    Ok(out)
}

fn lp_decay() -> SqgResult<Vec<InequalityReport>> {
    let b = basis(8)?;
    let mut out = Vec::new();
    for (alpha, r) in [(0.5, 2.0), (0.75, 4.0)] {
        let cfg = SolverConfig {
            alpha,
            t_final: 0.5,
            ..Default::default()
        };
        let th = with_h2_norm(&b, &random_field(&b, 0, 1.0), 5.0)?;
        let traj = run(&th, &cfg)?.trajectory;
        out.push(lp_monotonicity(&b, &traj, r, alpha, 1e-6)?.with_metadata(meta(8, Some(alpha), Some(0))));
    }
    Ok(out)
}

/// Inviscid rk4 run on the interaction-tensor path; the residual measures
/// `d/dt ||theta||^2 / 2`, which vanishes exactly for an antisymmetric tensor.
fn energy(mutated: bool) -> SqgResult<Vec<InequalityReport>> {
    let nj = 4;
    let cfg = SolverConfig {
        domain: DomainSpec::unit_square(nj),
        kappa: 0.0,
        scheme: Scheme::Rk4FullyExplicit,
        dt: 1e-3,
        t_final: 0.2,
        ..Default::default()
    };
    let solver = Solver::new(cfg)?;
    let mut gamma = gamma_tensor(solver.basis(), false)?;
    if mutated {
        mutate_gamma(&mut gamma);
    }
    let solver = solver.with_gamma(gamma)?;
    let th = with_h2_norm(solver.basis(), &random_field(solver.basis(), 3, 1.0), 5.0)?;
    let scale = th.dot(&th);
    let out = solver.run(&th)?;
    let rep = energy_balance(&out.rows, 0.0, 1e-9 * scale)?
        .with_metadata(meta(nj, None, Some(3)))
        .with_extra("mutated", if mutated { 1.0 } else { 0.0 });
    Ok(vec![rep])
}

fn commutator() -> SqgResult<Vec<InequalityReport>> {
    let b = basis(6)?;
    let mut rep = InequalityReport::new("commutator_regression", 0, f64::INFINITY, 0.0)
        .with_metadata(meta(6, Some(0.5), Some(0)))
        .with_extra("bound", COMMUTATOR_RATIO_BOUND);
    for seed in 0..20 {
        let rec = commutator_diagnostic(&b, &random_field(&b, seed, 0.5), 0.5)?;
        rep.absorb(COMMUTATOR_RATIO_BOUND - rec.ratio);
    }
    Ok(vec![rep])
}

pub fn run_check(suite: Suite, check: Check) -> CliResult<Vec<InequalityReport>> {
    let reports = match check {
        Check::GammaAntisymmetry => gamma_antisymmetry(),
        Check::VelocityAdmissible => velocity_admissible(),
        Check::Cordoba if suite == Suite::CordobaFull => cordoba(&cordoba_all_combos(), 200),
        Check::Cordoba => cordoba(&CORDOBA_RESOLVED, 50),
        Check::LpDecay => lp_decay(),
        Check::EnergyBalance => energy(suite == Suite::Mutation),
        Check::Commutator => commutator(),
    };
    Ok(reports?)
}

/// Runs the selected checks of `suite`, or all of them when `selection` is
/// `None`. Checks outside the suite are ignored.
pub fn run_suite(suite: Suite, selection: Option<&[Check]>) -> CliResult<Vec<InequalityReport>> {
    let mut out = Vec::new();
    for &check in suite.checks() {
        if selection.is_some_and(|sel| !sel.contains(&check)) {
            continue;
        }
        out.extend(run_check(suite, check)?);
    }
    Ok(out)
}
