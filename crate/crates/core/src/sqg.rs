//! SQG operators: the velocity law `u = grad_perp Lambda^-1 theta`, the
//! Galerkin-projected advection term and the right-hand side.
//!
//! The advection term has two evaluation paths. The pseudo-spectral path
//! evaluates `u . grad theta` on the quadrature grid and projects back, which
//! is alias-free because the grid integrates the degree-`3J` triple products
//! exactly. The tensor path contracts the interaction coefficients
//! `gamma_jkl = lambda_j^(-1/2) int (grad_perp w_j . grad w_k) w_l`. The
//! velocity is never truncated before the product is formed.

use crate::config::SolverConfig;
use crate::eigenbasis::{EigenBasis, GridField, SpectralField};
use crate::error::{check_len, Result, SqgError};
use crate::spectral_ops::frac_laplacian;

/// Largest `J` for which [`gamma_tensor`] builds the dense tensor without an
/// explicit override.
pub const GAMMA_MAX_MODES_PER_AXIS: usize = 8;

/// Tolerance for the post-construction antisymmetry check on gamma.
const GAMMA_ANTISYMMETRY_TOL: f64 = 1e-12;

/// Grid velocity `u = grad_perp psi + grad phi`. Physical velocities have no
/// potential part; the potential slot exists so that non-solenoidal fields
/// can be represented and rejected.
#[derive(Clone, Debug)]
pub struct VelocityField {
    pub u1: GridField,
    pub u2: GridField,
    pub psi: SpectralField,
    pub potential: Option<SpectralField>,
}

impl VelocityField {
    pub fn zero(basis: &EigenBasis) -> Self {
        Self {
            u1: GridField::zeros(basis.nquad()),
            u2: GridField::zeros(basis.nquad()),
            psi: basis.zeros(),
            potential: None,
        }
    }

    /// Velocity from a stream function and an optional potential.
    pub fn from_potentials(
        basis: &EigenBasis,
        psi: SpectralField,
        potential: Option<SpectralField>,
    ) -> Result<Self> {
        let mut u1 = basis.synthesize_derivative(&psi, 0, 1)?.map(|v| -v);
        let mut u2 = basis.synthesize_derivative(&psi, 1, 0)?;
        if let Some(phi) = &potential {
            let px = basis.synthesize_derivative(phi, 1, 0)?;
            let py = basis.synthesize_derivative(phi, 0, 1)?;
            u1 = u1.zip_with(&px, |a, b| a + b);
            u2 = u2.zip_with(&py, |a, b| a + b);
        }
        Ok(Self { u1, u2, psi, potential })
    }

    /// Divergence on the grid from spectral derivatives of the potentials.
    pub fn divergence(&self, basis: &EigenBasis) -> Result<GridField> {
        let d1 = basis.synthesize_derivative(&self.psi, 1, 1)?.map(|v| -v);
        let d2 = basis.synthesize_derivative(&self.psi, 1, 1)?;
        let mut div = d1.zip_with(&d2, |a, b| a + b);
        if let Some(phi) = &self.potential {
            let pxx = basis.synthesize_derivative(phi, 2, 0)?;
            let pyy = basis.synthesize_derivative(phi, 0, 2)?;
            div = div.zip_with(&pxx, |a, b| a + b).zip_with(&pyy, |a, b| a + b);
        }
        Ok(div)
    }

    /// Largest `|u . nu|` over boundary samples (the quadrature abscissae on
    /// each edge).
    pub fn max_boundary_normal(&self, basis: &EigenBasis) -> Result<f64> {
        let d = basis.domain();
        let (xs, ys) = (&basis.grid().x.nodes, &basis.grid().y.nodes);
        let x_edges = [0.0, d.lx];
        let y_edges = [0.0, d.ly];
        // u1 = -psi_y + phi_x on the vertical edges, u2 = psi_x + phi_y on
        // the horizontal ones.
        let mut n1 = basis.eval_on_lines(&self.psi, 0, 1, &x_edges, ys)?.mapv(|v| -v);
        let mut n2 = basis.eval_on_lines(&self.psi, 1, 0, xs, &y_edges)?;
        if let Some(phi) = &self.potential {
            n1 = n1 + basis.eval_on_lines(phi, 1, 0, &x_edges, ys)?;
            n2 = n2 + basis.eval_on_lines(phi, 0, 1, xs, &y_edges)?;
        }
        Ok(n1.iter().chain(n2.iter()).fold(0.0, |m, v| m.max(v.abs())))
    }

    /// Grid `H^1` proxy `(int |u|^2 + |grad u|^2)^(1/2)`.
    pub fn h1_proxy(&self, basis: &EigenBasis) -> Result<f64> {
        let mut parts = vec![self.u1.clone(), self.u2.clone()];
        // u1 = -psi_y + phi_x, u2 = psi_x + phi_y
        let grads: [(usize, usize, f64); 4] = [(1, 1, -1.0), (0, 2, -1.0), (2, 0, 1.0), (1, 1, 1.0)];
        for (px, py, sign) in grads {
            parts.push(basis.synthesize_derivative(&self.psi, px, py)?.map(|v| sign * v));
        }
        if let Some(phi) = &self.potential {
            for (i, (px, py)) in [(2, 0), (1, 1), (1, 1), (0, 2)].into_iter().enumerate() {
                let g = basis.synthesize_derivative(phi, px, py)?;
                parts[2 + i] = parts[2 + i].zip_with(&g, |a, b| a + b);
            }
        }
        let sq = parts
            .iter()
            .map(|p| p.map(|v| v * v))
            .reduce(|a, b| a.zip_with(&b, |x, y| x + y))
            .expect("non-empty");
        Ok(basis.integrate(&sq).sqrt())
    }
}

/// `u = R_D^perp theta`.
pub fn velocity(basis: &EigenBasis, theta: &SpectralField) -> Result<VelocityField> {
    let psi = frac_laplacian(basis, theta, -1.0)?;
    VelocityField::from_potentials(basis, psi, None)
}

/// `P_m(u . grad theta)` for a given velocity.
pub fn advect(basis: &EigenBasis, u: &VelocityField, theta: &SpectralField) -> Result<SpectralField> {
    basis.check_field(theta)?;
    basis.check_grid(&u.u1)?;
    basis.grid().x.require_degree(3 * basis.modes_per_axis())?;
    let tx = basis.synthesize_derivative(theta, 1, 0)?;
    let ty = basis.synthesize_derivative(theta, 0, 1)?;
    let second = u.u2.zip_with(&ty, |a, b| a * b);
    let prod = u.u1.zip_with(&tx, |a, b| a * b).zip_with(&second, |a, b| a + b);
    basis.analyze(&prod)
}

/// Pseudo-spectral `P_m(u . grad theta)` with `u = R_D^perp theta`.
pub fn nonlinear_term(basis: &EigenBasis, theta: &SpectralField) -> Result<SpectralField> {
    let u = velocity(basis, theta)?;
    advect(basis, &u, theta)
}

/// Dense Galerkin interaction tensor, `entries[(j * m + k) * m + l]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaTensor {
    size: usize,
    entries: Vec<f64>,
}

impl GammaTensor {
    pub fn from_entries(size: usize, entries: Vec<f64>) -> Result<Self> {
        check_len(size * size * size, entries.len())?;
        Ok(Self { size, entries })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, j: usize, k: usize, l: usize) -> f64 {
        self.entries[(j * self.size + k) * self.size + l]
    }

    pub fn set(&mut self, j: usize, k: usize, l: usize, v: f64) {
        self.entries[(j * self.size + k) * self.size + l] = v;
    }

    /// `max |gamma_jkl + gamma_jlk|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let m = self.size;
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                for l in k..m {
                    worst = worst.max((self.get(j, k, l) + self.get(j, l, k)).abs());
                }
            }
        }
        worst
    }
}

/// Per-axis triple integrals `S[a][b][c] = int_0^L sin_a cos_b sin_c`.
fn axis_triples(basis: &EigenBasis, x_axis: bool) -> Vec<f64> {
    let nj = basis.modes_per_axis();
    let (quad, length) = if x_axis {
        (&basis.grid().x, basis.domain().lx)
    } else {
        (&basis.grid().y, basis.domain().ly)
    };
    let k = |n: usize| n as f64 * std::f64::consts::PI / length;
    let mut out = vec![0.0; nj * nj * nj];
    for a in 1..=nj {
        for b in 1..=nj {
            for c in 1..=nj {
                out[((a - 1) * nj + (b - 1)) * nj + (c - 1)] =
                    quad.integrate(|x| (k(a) * x).sin() * (k(b) * x).cos() * (k(c) * x).sin());
            }
        }
    }
    out
}

/// Interaction tensor by separable quadrature of the triple-product
/// integrand. Refuses `J > 8` unless `allow_large` is set.
pub fn gamma_tensor(basis: &EigenBasis, allow_large: bool) -> Result<GammaTensor> {
    let nj = basis.modes_per_axis();
    if nj > GAMMA_MAX_MODES_PER_AXIS && !allow_large {
        return Err(SqgError::Config(format!(
            "gamma tensor with J = {nj} exceeds the dense storage guard J <= {GAMMA_MAX_MODES_PER_AXIS}"
        )));
    }
    let sx = axis_triples(basis, true);
    let sy = axis_triples(basis, false);
    let t = |s: &[f64], a: usize, b: usize, c: usize| s[((a - 1) * nj + (b - 1)) * nj + (c - 1)];
    let d = basis.domain();
    let kx = |n: usize| n as f64 * std::f64::consts::PI / d.lx;
    let ky = |n: usize| n as f64 * std::f64::consts::PI / d.ly;
    let c3 = basis.norm_const().powi(3);
    let modes = basis.modes();
    let m = modes.len();
    let mut entries = vec![0.0; m * m * m];
    for (j, mj) in modes.iter().enumerate() {
        let pre = c3 / basis.lambdas()[j].sqrt();
        for (k, mk) in modes.iter().enumerate() {
            for (l, ml) in modes.iter().enumerate() {
                // grad_perp w_j . grad w_k = -d_y w_j d_x w_k + d_x w_j d_y w_k
                let first = -ky(mj.k) * kx(mk.j) * t(&sx, mj.j, mk.j, ml.j) * t(&sy, mk.k, mj.k, ml.k);
                let second = kx(mj.j) * ky(mk.k) * t(&sx, mk.j, mj.j, ml.j) * t(&sy, mj.k, mk.k, ml.k);
                entries[(j * m + k) * m + l] = pre * (first + second);
            }
        }
    }
    let gamma = GammaTensor { size: m, entries };
    let defect = gamma.antisymmetry_defect();
    if defect > GAMMA_ANTISYMMETRY_TOL {
        return Err(SqgError::Internal(format!(
            "gamma tensor antisymmetry defect {defect:e} exceeds {GAMMA_ANTISYMMETRY_TOL:e}"
        )));
    }
    Ok(gamma)
}

/// `out_l = sum_{j,k} gamma_jkl theta_j theta_k`.
pub fn nonlinear_via_gamma(theta: &SpectralField, gamma: &GammaTensor) -> Result<SpectralField> {
    let m = gamma.size();
    check_len(m, theta.len())?;
    let mut out = vec![0.0; m];
    for j in 0..m {
        let tj = theta.coeffs[j];
        if tj == 0.0 {
            continue;
        }
        for k in 0..m {
            let w = tj * theta.coeffs[k];
            if w == 0.0 {
                continue;
            }
            let row = &gamma.entries[(j * m + k) * m..(j * m + k + 1) * m];
            for (o, g) in out.iter_mut().zip(row) {
                *o += g * w;
            }
        }
    }
    Ok(SpectralField::new(out))
}

/// `-P_m(u . grad theta) - kappa Lambda^(2 alpha) theta`.
pub fn rhs(basis: &EigenBasis, theta: &SpectralField, cfg: &SolverConfig) -> Result<SpectralField> {
    cfg.validate()?;
    let diffusion = frac_laplacian(basis, theta, 2.0 * cfg.alpha)?;
    let mut out = diffusion.scaled(-cfg.kappa);
    if cfg.nonlinear {
        out = out.sub(&nonlinear_term(basis, theta)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::eigenbasis::{build_basis, random_field, DomainSpec};
    use crate::spectral_ops::sobolev_norm;

    fn square(j: usize) -> EigenBasis {
        build_basis(DomainSpec::unit_square(j)).unwrap()
    }

    #[test]
    fn zero_theta_zero_velocity() {
        let b = square(3);
        let u = velocity(&b, &b.zeros()).unwrap();
        assert_eq!(u.u1.max_abs(), 0.0);
        assert_eq!(u.u2.max_abs(), 0.0);
    }

    #[test]
    fn first_mode_velocity_closed_form() {
        let b = square(3);
        let u = velocity(&b, &SpectralField::unit(b.size(), 0)).unwrap();
        let c = 2.0 / PI / 2f64.sqrt();
        let nodes = &b.grid().x.nodes;
        for (i, &x) in nodes.iter().enumerate() {
            for (j, &y) in nodes.iter().enumerate() {
                assert!((u.u1.values[[i, j]] + c * x.sin() * y.cos()).abs() < 1e-14);
                assert!((u.u2.values[[i, j]] - c * x.cos() * y.sin()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn random_velocity_is_solenoidal_and_tangent() {
        let b = square(4);
        let u = velocity(&b, &random_field(&b, 5, 0.0)).unwrap();
        assert!(u.divergence(&b).unwrap().max_abs() < 1e-10);
        assert!(u.max_boundary_normal(&b).unwrap() < 1e-12);
    }

    #[test]
    fn velocity_scales_linearly() {
        let b = square(4);
        let theta = random_field(&b, 8, 0.5);
        let u = velocity(&b, &theta).unwrap();
        let u2 = velocity(&b, &theta.scaled(4.0)).unwrap();
        assert_eq!(u2.u1.values, u.u1.values.mapv(|v| 4.0 * v));
        let h = u.h1_proxy(&b).unwrap();
        assert!(h.is_finite() && h > 0.0);
        assert!((u2.h1_proxy(&b).unwrap() - 4.0 * h).abs() < 1e-12 * h);
    }

    #[test]
    fn potential_part_breaks_solenoidality() {
        let b = square(3);
        let phi = SpectralField::unit(b.size(), 0);
        let u = VelocityField::from_potentials(&b, b.zeros(), Some(phi)).unwrap();
        assert!(u.divergence(&b).unwrap().max_abs() > 0.1);
        assert!(u.max_boundary_normal(&b).unwrap() > 0.1);
    }

    #[test]
    fn single_mode_self_interaction_vanishes() {
        let b = square(3);
        let theta = SpectralField::unit(b.size(), 0).scaled(2.5);
        assert!(nonlinear_term(&b, &theta).unwrap().max_abs() < 1e-14);
        assert!(nonlinear_term(&b, &b.zeros()).unwrap().is_zero());
    }

    #[test]
    fn gamma_structural_zeros() {
        let b = square(3);
        let g = gamma_tensor(&b, false).unwrap();
        let m = b.size();
        for j in 0..m {
            for k in 0..m {
                assert!(g.get(j, k, k).abs() < 1e-13);
                assert!(g.get(j, j, k).abs() < 1e-13);
            }
        }
        assert!(g.antisymmetry_defect() < 1e-12);
    }

    #[test]
    fn gamma_memory_guard() {
        let b = square(9);
        assert!(matches!(gamma_tensor(&b, false), Err(SqgError::Config(_))));
    }

    #[test]
    fn gamma_regression_entry() {
        // j = (1,1), k = (1,2), l = (2,1) on (0, pi)^2. The value
        // -3 / (2 sqrt(2) pi) was obtained by brute-force quadrature at
        // Nquad = 8J (see tests/gamma_oracle.rs) and agrees with the
        // product-to-sum closed form.
        let b = square(2);
        let g = gamma_tensor(&b, false).unwrap();
        let j = b.index_of(1, 1).unwrap();
        let k = b.index_of(1, 2).unwrap();
        let l = b.index_of(2, 1).unwrap();
        let frozen = -3.376_186_185_589_146_7e-1;
        assert!((g.get(j, k, l) - frozen).abs() < 1e-13);
    }

    #[test]
    fn paths_agree() {
        for nj in 2..=4 {
            let b = square(nj);
            let g = gamma_tensor(&b, false).unwrap();
            for seed in 0..5 {
                let theta = random_field(&b, seed, 0.0);
                let a = nonlinear_term(&b, &theta).unwrap();
                let c = nonlinear_via_gamma(&theta, &g).unwrap();
                assert!(a.sub(&c).max_abs() < 1e-10, "J={nj} seed={seed}");
            }
        }
    }

    #[test]
    fn gamma_path_zero_cases() {
        let b = square(3);
        let g = gamma_tensor(&b, false).unwrap();
        assert!(nonlinear_via_gamma(&b.zeros(), &g).unwrap().is_zero());
        let e = SpectralField::unit(b.size(), 4);
        assert!(nonlinear_via_gamma(&e, &g).unwrap().max_abs() < 1e-13);
        assert!(nonlinear_via_gamma(&SpectralField::zeros(2), &g).is_err());
    }

    #[test]
    fn nonlinearity_orthogonal_to_theta() {
        let b = square(6);
        for seed in 0..20 {
            let theta = random_field(&b, seed, 0.0);
            let n = nonlinear_term(&b, &theta).unwrap();
            assert!(theta.dot(&n).abs() < 1e-11 * theta.dot(&theta));
        }
    }

    #[test]
    fn rhs_cases() {
        let b = square(3);
        let cfg = SolverConfig {
            domain: *b.domain(),
            kappa: 0.0,
            ..Default::default()
        };
        let e1 = SpectralField::unit(b.size(), 0);
        assert!(rhs(&b, &e1, &cfg).unwrap().max_abs() < 1e-14);
        let cfg = SolverConfig {
            kappa: 1.0,
            alpha: 0.5,
            ..cfg
        };
        let r = rhs(&b, &e1, &cfg).unwrap();
        assert!((r.coeffs[0] + 2f64.sqrt()).abs() < 1e-14);
        assert!(r.coeffs[1..].iter().all(|c| c.abs() < 1e-14));
        let cfg = SolverConfig { alpha: 0.7, ..cfg };
        for seed in 0..10 {
            let theta = random_field(&b, seed, 0.0);
            let r = rhs(&b, &theta, &cfg).unwrap();
            let expect = -cfg.kappa * sobolev_norm(&b, &theta, cfg.alpha).unwrap().powi(2);
            assert!((theta.dot(&r) - expect).abs() < 1e-11 * (1.0 + expect.abs()));
        }
    }
}
