//! Functional calculus of the Dirichlet Laplacian in coefficient space.
//!
//! `Lambda^s` acts on the `j`-th coefficient by `lambda_j^(s/2)`; the
//! `D(Lambda^s)` norm is `(sum lambda_j^s f_j^2)^(1/2)`. Everything here is
//! diagonal or a coordinate mask, so no grid work is involved.

use crate::eigenbasis::{EigenBasis, SpectralField};
use crate::error::{Result, SqgError};

/// `Lambda^s f` for `s >= -1`.
pub fn frac_laplacian(basis: &EigenBasis, f: &SpectralField, s: f64) -> Result<SpectralField> {
    basis.check_field(f)?;
    if !(s >= -1.0) {
        return Err(SqgError::Domain(format!(
            "fractional power s = {s} is below -1 (only Lambda^-1 is supported)"
        )));
    }
    Ok(SpectralField::new(
        f.coeffs
            .iter()
            .zip(basis.lambdas())
            .map(|(c, l)| c * l.powf(0.5 * s))
            .collect(),
    ))
}

/// `||f||_{s,D}` for `s >= 0`.
pub fn sobolev_norm(basis: &EigenBasis, f: &SpectralField, s: f64) -> Result<f64> {
    basis.check_field(f)?;
    if !(s >= 0.0) {
        return Err(SqgError::Domain(format!("Sobolev exponent must be >= 0, got {s}")));
    }
    Ok(sobolev_norm_unchecked(basis.lambdas(), f, s))
}

pub(crate) fn sobolev_norm_unchecked(lambdas: &[f64], f: &SpectralField, s: f64) -> f64 {
    if s == 0.0 {
        return f.l2();
    }
    f.coeffs
        .iter()
        .zip(lambdas)
        .map(|(c, l)| l.powf(s) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// Slack in the interpolation inequality
/// `||f||_{mu a1 + (1-mu) a2} <= ||f||_{a1}^mu ||f||_{a2}^(1-mu)`;
/// nonnegative up to rounding.
pub fn interpolation_slack(
    basis: &EigenBasis,
    f: &SpectralField,
    alpha1: f64,
    alpha2: f64,
    mu: f64,
) -> Result<f64> {
    basis.check_field(f)?;
    if !(alpha1 >= 0.0 && alpha2 >= 0.0) {
        return Err(SqgError::Domain("interpolation exponents must be >= 0".into()));
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(SqgError::Domain(format!("mu must lie in [0, 1], got {mu}")));
    }
    if f.is_zero() {
        return Err(SqgError::Domain("interpolation slack is undefined for the zero field".into()));
    }
    // The endpoints are exact by definition; avoid pow rounding there.
    if mu == 0.0 || mu == 1.0 {
        return Ok(0.0);
    }
    let n1 = sobolev_norm(basis, f, alpha1)?;
    let n2 = sobolev_norm(basis, f, alpha2)?;
    let mid = sobolev_norm(basis, f, mu * alpha1 + (1.0 - mu) * alpha2)?;
    Ok(n1.powf(mu) * n2.powf(1.0 - mu) - mid)
}

/// Galerkin projection onto modes with both indices `<= j_keep`.
pub fn truncate(basis: &EigenBasis, f: &SpectralField, j_keep: usize) -> Result<SpectralField> {
    basis.check_field(f)?;
    if j_keep > basis.modes_per_axis() {
        return Err(SqgError::Domain(format!(
            "truncation level {j_keep} exceeds basis size {}",
            basis.modes_per_axis()
        )));
    }
    Ok(SpectralField::new(
        basis
            .modes()
            .iter()
            .zip(&f.coeffs)
            .map(|(m, &c)| if m.j <= j_keep && m.k <= j_keep { c } else { 0.0 })
            .collect(),
    ))
}
