//! Numerical checks of the pointwise inequalities, `L^r` decay, velocity
//! admissibility, the energy identity and the commutator structure.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::eigenbasis::{build_basis, DomainSpec, EigenBasis, GridField, SpectralField};
use crate::error::{Result, SqgError};
use crate::spectral_ops::{frac_laplacian, sobolev_norm_unchecked};
use crate::sqg::{velocity, VelocityField};
use crate::timestepping::{energy_residual, DiagnosticsRow, Trajectory};

/// Regression envelope for the commutator ratio: 1.1 times the largest
/// ratio over `random_field(seed, 0.5)`, seeds `0..500`, `J = 6`,
/// `alpha = 1/2` on the unit square.
pub const COMMUTATOR_RATIO_BOUND: f64 = 2.566_271_681_379_914e-2;

/// Check basis resolution for the Cordoba-Cordoba test, in multiples of `J`.
pub const CORDOBA_ENLARGEMENT: usize = 4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub modes_per_axis: Option<usize>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub extra: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub samples: usize,
    /// Smallest signed slack; negative values are violations.
    pub worst_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub metadata: ReportMetadata,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, samples: usize, worst_violation: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            samples,
            worst_violation,
            tolerance,
            pass: worst_violation >= -tolerance,
            metadata: ReportMetadata::default(),
        }
    }

    pub fn with_metadata(mut self, metadata: ReportMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.metadata.extra.insert(key.to_string(), value);
        self
    }

    /// Folds another sample into the report.
    pub fn absorb(&mut self, slack: f64) {
        self.samples += 1;
        self.worst_violation = self.worst_violation.min(slack);
        self.pass = self.worst_violation >= -self.tolerance;
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Minimum branch exponent: `Phi` must be `C^2` (`r >= 4`) when `s > 1`,
/// `C^1` (`r >= 2`) otherwise.
fn cordoba_min_r(s: f64) -> f64 {
    if s > 1.0 {
        4.0
    } else {
        2.0
    }
}

/// Result of one Cordoba-Cordoba evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CordobaGap {
    /// `min_x Phi'(f) Lambda^s f - Lambda^s Phi(f)`.
    pub gap: f64,
    /// `max_x |Phi'(f) Lambda^s f|`, the scale for relative tolerances.
    pub scale: f64,
}

impl CordobaGap {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.gap
        } else {
            self.gap / self.scale
        }
    }
}

/// Evaluates `Phi'(f) Lambda^s f - Lambda^s(Phi(f))` with `Phi(z) = |z|^(r/2)`.
/// `Phi(f)` is formed on the grid of an enlarged check basis and projected
/// onto it before the multiplier is applied.
pub struct CordobaChecker {
    enlargement: usize,
    basis_modes: usize,
    check: EigenBasis,
    embed: Vec<usize>,
    nodes_x: Vec<f64>,
    nodes_y: Vec<f64>,
}

impl CordobaChecker {
    pub fn new(basis: &EigenBasis) -> Result<Self> {
        Self::with_enlargement(basis, CORDOBA_ENLARGEMENT)
    }

    pub fn with_enlargement(basis: &EigenBasis, enlargement: usize) -> Result<Self> {
        if enlargement == 0 {
            return Err(SqgError::Config("enlargement: must be >= 1".into()));
        }
        let d = basis.domain();
        let nj = enlargement * basis.modes_per_axis();
        let check = build_basis(DomainSpec::new(d.lx, d.ly, nj, 2 * nj + 2)?)?;
        let embed = basis
            .modes()
            .iter()
            .map(|m| {
                check
                    .index_of(m.j, m.k)
                    .ok_or_else(|| SqgError::Internal(format!("mode ({}, {}) missing from check basis", m.j, m.k)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            enlargement,
            basis_modes: basis.size(),
            nodes_x: basis.grid().x.nodes.clone(),
            nodes_y: basis.grid().y.nodes.clone(),
            check,
            embed,
        })
    }

    pub fn enlargement(&self) -> usize {
        self.enlargement
    }

    pub fn check_basis(&self) -> &EigenBasis {
        &self.check
    }

    fn lift(&self, f: &SpectralField) -> SpectralField {
        let mut out = self.check.zeros();
        for (&i, &c) in self.embed.iter().zip(&f.coeffs) {
            out.coeffs[i] = c;
        }
        out
    }

    /// Gap at the quadrature nodes of the original basis.
    pub fn gap(&self, f: &SpectralField, r: f64, s: f64) -> Result<CordobaGap> {
        if !(0.0..=2.0).contains(&s) {
            return Err(SqgError::Domain(format!("s = {s} must lie in [0, 2]")));
        }
        let r_min = cordoba_min_r(s);
        if !(r >= r_min) {
            return Err(SqgError::Domain(format!(
                "r = {r} is below the branch minimum {r_min} for s = {s}"
            )));
        }
        if f.len() != self.basis_modes {
            return Err(SqgError::Shape {
                expected: self.basis_modes,
                found: f.len(),
            });
        }
        let p = r / 2.0;
        let fc = self.lift(f);
        let at_nodes = |g: &SpectralField| -> Result<Array2<f64>> {
            self.check.eval_on_lines(g, 0, 0, &self.nodes_x, &self.nodes_y)
        };
        let fv = at_nodes(&fc)?;
        let (lfv, lpv) = if s == 0.0 {
            // Lambda^0 is the identity on L^2, no projection involved
            (fv.clone(), fv.mapv(|z| z.abs().powf(p)))
        } else {
            let phi_grid = self.check.synthesize(&fc)?.map(|z| z.abs().powf(p));
            let phi = self.check.analyze(&phi_grid)?;
            let lam_phi = frac_laplacian(&self.check, &phi, s)?;
            let lam_f = frac_laplacian(&self.check, &fc, s)?;
            (at_nodes(&lam_f)?, at_nodes(&lam_phi)?)
        };
        let mut gap = f64::INFINITY;
        let mut scale: f64 = 0.0;
        for ((z, lf), lp) in fv.iter().zip(lfv.iter()).zip(lpv.iter()) {
            let dphi = if *z == 0.0 { 0.0 } else { p * z.abs().powf(p - 1.0) * z.signum() };
            let first = dphi * lf;
            scale = scale.max(first.abs());
            gap = gap.min(first - lp);
        }
        Ok(CordobaGap { gap, scale })
    }
}

/// One-shot [`CordobaChecker::gap`].
pub fn cordoba_gap(basis: &EigenBasis, f: &SpectralField, r: f64, s: f64) -> Result<CordobaGap> {
    CordobaChecker::new(basis)?.gap(f, r, s)
}

/// Grid `L^r` norm of every snapshot.
pub fn lr_series(basis: &EigenBasis, traj: &Trajectory, r: f64) -> Result<Vec<f64>> {
    traj.snapshots
        .iter()
        .map(|th| Ok(basis.lp_norm(&basis.synthesize(th)?, r)))
        .collect()
}

/// `L^r` decay along a trajectory. The slack of each step is
/// `(L_k - L_{k+1}) / L_0`.
pub fn lp_monotonicity(
    basis: &EigenBasis,
    traj: &Trajectory,
    r: f64,
    alpha: f64,
    tolerance: f64,
) -> Result<InequalityReport> {
    let r_min = if alpha > 0.5 { 4.0 } else { 2.0 };
    if !(r >= r_min) {
        return Err(SqgError::Domain(format!(
            "r = {r} is below the branch minimum {r_min} for alpha = {alpha}"
        )));
    }
    let norms = lr_series(basis, traj, r)?;
    let l0 = norms.first().copied().unwrap_or(0.0);
    let worst = norms
        .windows(2)
        .map(|w| if l0 == 0.0 { w[0] - w[1] } else { (w[0] - w[1]) / l0 })
        .fold(0.0, f64::min);
    Ok(InequalityReport::new(format!("lp_decay_r{r}"), norms.len(), worst, tolerance)
        .with_metadata(ReportMetadata {
            modes_per_axis: Some(basis.modes_per_axis()),
            alpha: Some(alpha),
            ..Default::default()
        })
        .with_extra("r", r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorRecord {
    /// Grid `L^2` norm of `Delta u . grad theta + 2 grad u : grad grad theta`.
    pub lhs: f64,
    /// `||theta||_{2,D}`.
    pub a: f64,
    /// `||theta||_{2+alpha,D}`.
    pub b: f64,
    pub l2: f64,
    /// `lhs / (B A^((2 - alpha)/2) L2^(alpha/2))`.
    pub ratio: f64,
}

/// `[Delta, u . grad] theta` for `u = R_D^perp theta`, with every factor
/// differentiated spectrally.
pub fn commutator_field(basis: &EigenBasis, theta: &SpectralField) -> Result<GridField> {
    basis.check_field(theta)?;
    basis.grid().x.require_degree(4 * basis.modes_per_axis())?;
    let psi = frac_laplacian(basis, theta, -1.0)?;
    let d = |f: &SpectralField, px, py| basis.synthesize_derivative(f, px, py);
    // u1 = -psi_y, u2 = psi_x
    let lap = |px: usize, py: usize| -> Result<GridField> {
        let a = d(&psi, px + 2, py)?;
        let b = d(&psi, px, py + 2)?;
        Ok(a.zip_with(&b, |x, y| x + y))
    };
    let lap_u1 = lap(0, 1)?.map(|v| -v);
    let lap_u2 = lap(1, 0)?;
    let (tx, ty) = (d(theta, 1, 0)?, d(theta, 0, 1)?);
    let (txx, txy, tyy) = (d(theta, 2, 0)?, d(theta, 1, 1)?, d(theta, 0, 2)?);
    let u1x = d(&psi, 1, 1)?.map(|v| -v);
    let u1y = d(&psi, 0, 2)?.map(|v| -v);
    let u2x = d(&psi, 2, 0)?;
    let u2y = d(&psi, 1, 1)?;
    let mut out = lap_u1.zip_with(&tx, |a, b| a * b).zip_with(&lap_u2.zip_with(&ty, |a, b| a * b), |a, b| a + b);
    // 2 sum_{i,k} d_k u_i d_k d_i theta
    for (du, dd) in [(&u1x, &txx), (&u1y, &txy), (&u2x, &txy), (&u2y, &tyy)] {
        let term = du.zip_with(dd, |a, b| 2.0 * a * b);
        out = out.zip_with(&term, |a, b| a + b);
    }
    Ok(out)
}

pub fn commutator_diagnostic(basis: &EigenBasis, theta: &SpectralField, alpha: f64) -> Result<CommutatorRecord> {
    basis.check_field(theta)?;
    if theta.is_zero() {
        return Err(SqgError::Domain("commutator ratio is undefined for the zero field".into()));
    }
    let c = commutator_field(basis, theta)?;
    let lhs = basis.integrate(&c.map(|v| v * v)).max(0.0).sqrt();
    let lambdas = basis.lambdas();
    let a = sobolev_norm_unchecked(lambdas, theta, 2.0);
    let b = sobolev_norm_unchecked(lambdas, theta, 2.0 + alpha);
    let l2 = theta.l2();
    let ratio = lhs / (b * a.powf((2.0 - alpha) / 2.0) * l2.powf(alpha / 2.0));
    Ok(CommutatorRecord { lhs, a, b, l2, ratio })
}

/// Worst divergence and boundary normal trace of `u`; the slack is
/// `-max(|div u|, |u . nu|)`.
pub fn check_velocity(basis: &EigenBasis, u: &VelocityField, tolerance: f64) -> Result<InequalityReport> {
    let div = u.divergence(basis)?.max_abs();
    let normal = u.max_boundary_normal(basis)?;
    Ok(InequalityReport::new("velocity_admissible", 1, -div.max(normal), tolerance)
        .with_metadata(ReportMetadata {
            modes_per_axis: Some(basis.modes_per_axis()),
            ..Default::default()
        })
        .with_extra("max_divergence", div)
        .with_extra("max_normal_trace", normal))
}

/// Velocity check for `u = R_D^perp theta`.
pub fn check_velocity_of(basis: &EigenBasis, theta: &SpectralField, tolerance: f64) -> Result<InequalityReport> {
    check_velocity(basis, &velocity(basis, theta)?, tolerance)
}

/// Residuals of the discrete energy identity, one per interval.
pub fn energy_residuals(rows: &[DiagnosticsRow], kappa: f64) -> Vec<f64> {
    rows.windows(2).map(|w| energy_residual(&w[0], &w[1], kappa)).collect()
}

/// `max |residual|` over the run; the slack is its negative.
pub fn energy_balance(rows: &[DiagnosticsRow], kappa: f64, tolerance: f64) -> Result<InequalityReport> {
    if rows.len() < 2 {
        return Err(SqgError::Format(format!(
            "energy balance needs at least two diagnostics rows, got {}",
            rows.len()
        )));
    }
    let worst = energy_residuals(rows, kappa).into_iter().map(f64::abs).fold(0.0, f64::max);
    Ok(InequalityReport::new("energy_balance", rows.len() - 1, -worst, tolerance).with_extra("kappa", kappa))
}

/// Observed order `log2(max|res(dt)| / max|res(dt/2)|)` from a run and its
/// dt-halved twin over the same horizon.
pub fn energy_order(coarse: &[DiagnosticsRow], fine: &[DiagnosticsRow], kappa: f64) -> Result<f64> {
    let (tc, tf) = match (coarse.last(), fine.last(), coarse.first(), fine.first()) {
        (Some(c), Some(f), Some(c0), Some(f0)) if c0.t == f0.t => (c.t, f.t),
        _ => return Err(SqgError::Format("energy order needs two non-empty row streams from t = 0".into())),
    };
    if (tc - tf).abs() > 1e-9 * tc.abs().max(1.0) || fine.len() + 1 != 2 * coarse.len() {
        return Err(SqgError::Format(format!(
            "row streams do not form a dt-halving pair ({} rows to t = {tc}, {} rows to t = {tf})",
            coarse.len(),
            fine.len()
        )));
    }
    let max_res = |rows: &[DiagnosticsRow]| energy_residuals(rows, kappa).into_iter().map(f64::abs).fold(0.0, f64::max);
    let (rc, rf) = (max_res(coarse), max_res(fine));
    if rf == 0.0 || rc == 0.0 {
        return Err(SqgError::Domain("energy residual vanished; order undefined".into()));
    }
    Ok((rc / rf).log2())
}

/// Observed orders from three dt-halving runs and their Richardson limit
/// `2 p_2 - p_1`, which removes the first-order drift of the observed order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub coarse: f64,
    pub fine: f64,
    pub extrapolated: f64,
}

pub fn energy_order_extrapolated(
    rows: [&[DiagnosticsRow]; 3],
    kappa: f64,
) -> Result<OrderEstimate> {
    let coarse = energy_order(rows[0], rows[1], kappa)?;
    let fine = energy_order(rows[1], rows[2], kappa)?;
    Ok(OrderEstimate {
        coarse,
        fine,
        extrapolated: 2.0 * fine - coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SolverConfig;
    use crate::eigenbasis::random_field;
    use crate::timestepping::run;

    fn basis(nj: usize) -> EigenBasis {
        build_basis(DomainSpec::unit_square(nj)).unwrap()
    }

    #[test]
    fn report_pass_rule() {
        let r = InequalityReport::new("x", 1, -1e-9, 1e-8);
        assert!(r.pass);
        let mut r = InequalityReport::new("x", 1, 0.0, 1e-8);
        r.absorb(-2e-8);
        assert!(!r.pass);
        assert_eq!(r.samples, 2);
        let line = r.to_json_line();
        let back: InequalityReport = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn cordoba_zero_and_s_zero() {
        let b = basis(4);
        let ch = CordobaChecker::new(&b).unwrap();
        let g = ch.gap(&b.zeros(), 4.0, 1.0).unwrap();
        assert_eq!((g.gap, g.scale), (0.0, 0.0));
        for seed in 0..5 {
            let f = random_field(&b, seed, 0.5);
            for r in [2.0, 3.0, 4.0, 6.0] {
                let g = ch.gap(&f, r, 0.0).unwrap();
                assert!(g.gap >= -1e-12 * g.scale.max(1.0), "r = {r}: {g:?}");
            }
        }
    }

    #[test]
    fn cordoba_branch_errors() {
        let b = basis(3);
        let f = SpectralField::unit(b.size(), 0);
        assert!(matches!(cordoba_gap(&b, &f, 3.0, 1.5), Err(SqgError::Domain(_))));
        assert!(matches!(cordoba_gap(&b, &f, 1.5, 0.5), Err(SqgError::Domain(_))));
        assert!(matches!(cordoba_gap(&b, &f, 4.0, 2.5), Err(SqgError::Domain(_))));
        assert!(cordoba_gap(&b, &f, 3.0, 1.0).is_ok());
    }

    #[test]
    fn lp_monotonicity_cases() {
        let b = basis(4);
        let cfg = SolverConfig {
            domain: *b.domain(),
            nonlinear: false,
            t_final: 0.2,
            ..Default::default()
        };
        let out = run(&random_field(&b, 1, 0.5), &cfg).unwrap();
        for r in [2.0, 4.0] {
            let rep = lp_monotonicity(&b, &out.trajectory, r, 0.5, 1e-9).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
        let zero = Trajectory {
            times: vec![0.0, 1.0],
            snapshots: vec![b.zeros(), b.zeros()],
        };
        let rep = lp_monotonicity(&b, &zero, 4.0, 0.75, 1e-9).unwrap();
        assert!(rep.pass && rep.worst_violation == 0.0);
        assert!(lr_series(&b, &zero, 4.0).unwrap().iter().all(|&v| v == 0.0));
        assert!(lp_monotonicity(&b, &zero, 2.0, 0.75, 1e-9).is_err());
    }

    #[test]
    fn commutator_single_mode_and_scaling() {
        let b = basis(6);
        let e = SpectralField::unit(b.size(), 3);
        let rec = commutator_diagnostic(&b, &e, 0.5).unwrap();
        assert!(rec.lhs < 1e-12 * rec.b * rec.a, "{rec:?}");
        let f = random_field(&b, 2, 0.5);
        let r1 = commutator_diagnostic(&b, &f, 0.5).unwrap();
        let r3 = commutator_diagnostic(&b, &f.scaled(3.0), 0.5).unwrap();
        assert!((r1.ratio - r3.ratio).abs() <= 1e-10 * r1.ratio);
        assert!((r3.lhs - 9.0 * r1.lhs).abs() <= 1e-12 * r3.lhs);
        assert!(commutator_diagnostic(&b, &b.zeros(), 0.5).is_err());
    }

    #[test]
    fn commutator_matches_definition() {
        // [Delta, u . grad] theta = Delta(u . grad theta) - u . grad(Delta theta),
        // checked pointwise against direct evaluation of the series.
        let b = basis(3);
        let theta = random_field(&b, 7, 0.0);
        let c = commutator_field(&b, &theta).unwrap();
        let psi = frac_laplacian(&b, &theta, -1.0).unwrap();
        let ev = |f: &SpectralField, px, py, x, y| b.eval_at(f, px, py, x, y);
        let (ix, iy) = (1, 5);
        let (gx, gy) = (b.grid().x.nodes[ix], b.grid().y.nodes[iy]);
        // expand Delta(u_i d_i theta) - u_i d_i Delta theta by the product rule
        let u1 = |px: usize, py: usize| -ev(&psi, px, py + 1, gx, gy);
        let u2 = |px: usize, py: usize| ev(&psi, px + 1, py, gx, gy);
        let th = |px: usize, py: usize| ev(&theta, px, py, gx, gy);
        let lap_prod = (u1(2, 0) + u1(0, 2)) * th(1, 0)
            + 2.0 * (u1(1, 0) * th(2, 0) + u1(0, 1) * th(1, 1))
            + (u2(2, 0) + u2(0, 2)) * th(0, 1)
            + 2.0 * (u2(1, 0) * th(1, 1) + u2(0, 1) * th(0, 2));
        assert!((c.values[[ix, iy]] - lap_prod).abs() < 1e-11);
    }

    #[test]
    fn velocity_checks() {
        let b = basis(8);
        let e1 = SpectralField::unit(b.size(), 0);
        let rep = check_velocity_of(&b, &e1, 1e-12).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = check_velocity_of(&b, &random_field(&b, 3, 0.0), 1e-10).unwrap();
        assert!(rep.pass, "{rep:?}");
        let rep = check_velocity(&b, &VelocityField::zero(&b), 0.0).unwrap();
        assert_eq!(rep.worst_violation, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn energy_balance_cases() {
        let b = basis(3);
        let base = SolverConfig {
            domain: *b.domain(),
            nonlinear: false,
            t_final: 0.5,
            dt: 1e-2,
            ..Default::default()
        };
        let e1 = SpectralField::unit(b.size(), 0);
        let coarse = run(&e1, &base).unwrap();
        let fine = run(&e1, &SolverConfig { dt: 5e-3, ..base.clone() }).unwrap();
        let order = energy_order(&coarse.rows, &fine.rows, 1.0).unwrap();
        assert!((order - 2.0).abs() < 0.02, "order {order}");
        let zero = run(&b.zeros(), &base).unwrap();
        let rep = energy_balance(&zero.rows, 1.0, 0.0).unwrap();
        assert!(rep.pass && rep.worst_violation == 0.0);
        assert!(energy_order(&coarse.rows, &coarse.rows, 1.0).is_err());
        assert!(energy_balance(&coarse.rows[..1], 1.0, 1.0).is_err());
    }
}
