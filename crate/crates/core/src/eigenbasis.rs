//! Dirichlet eigenbasis of the rectangle `(0, Lx) x (0, Ly)`.
//!
//! The eigenfunctions are `w_(j,k)(x, y) = c sin(j pi x / Lx) sin(k pi y / Ly)`
//! with `c = 2 / sqrt(Lx Ly)` and eigenvalues
//! `lambda_(j,k) = (j pi / Lx)^2 + (k pi / Ly)^2`. Modes are ordered by
//! ascending eigenvalue, ties broken lexicographically on `(j, k)`.
//!
//! Grid values live on the tensor midpoint grid `x_i = (i - 1/2) Lx / N`,
//! `i = 1..N`. On the odd `2 Lx`-periodic extension the midpoint rule is the
//! periodic trapezoid rule on a shifted grid, so it integrates every
//! cosine-parity trigonometric polynomial of degree `< 2N` exactly. Every
//! integrand the solver forms (products of two sines and any number of
//! cosine pairs per axis) has that parity. Sine-parity integrands are covered
//! by a second weight set on the same nodes (Fejer's first rule after the
//! substitution `t = cos(pi x / L)`), exact for degree `<= N`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SqgError};

/// Relative gap under which two eigenvalues are treated as equal when
/// ordering the modes.
const TIE_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lx: f64,
    pub ly: f64,
    /// Modes per axis; the basis holds `modes_per_axis^2` eigenfunctions.
    pub modes_per_axis: usize,
    /// Quadrature points per axis.
    pub nquad: usize,
}

impl DomainSpec {
    pub fn new(lx: f64, ly: f64, modes_per_axis: usize, nquad: usize) -> Result<Self> {
        let d = Self {
            lx,
            ly,
            modes_per_axis,
            nquad,
        };
        d.validate()?;
        Ok(d)
    }

    /// `(0, pi)^2` with the minimal admissible quadrature.
    pub fn unit_square(modes_per_axis: usize) -> Self {
        Self {
            lx: PI,
            ly: PI,
            modes_per_axis,
            nquad: Self::min_nquad(modes_per_axis),
        }
    }

    /// Smallest quadrature size that integrates triple products of basis
    /// functions and their derivatives exactly.
    pub fn min_nquad(modes_per_axis: usize) -> usize {
        2 * modes_per_axis + 2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lx.is_finite() && self.lx > 0.0) {
            return Err(SqgError::Config(format!("Lx must be positive, got {}", self.lx)));
        }
        if !(self.ly.is_finite() && self.ly > 0.0) {
            return Err(SqgError::Config(format!("Ly must be positive, got {}", self.ly)));
        }
        if self.modes_per_axis == 0 {
            return Err(SqgError::Config("J must be at least 1".into()));
        }
        let min = Self::min_nquad(self.modes_per_axis);
        if self.nquad < min {
            return Err(SqgError::Config(format!(
                "Nquad = {} is below the exactness threshold 2J+2 = {min}",
                self.nquad
            )));
        }
        Ok(())
    }
}

/// Midpoint nodes on `(0, L)` with two weight sets, see the module docs.
#[derive(Clone, Debug)]
pub struct AxisQuadrature {
    pub length: f64,
    pub nodes: Vec<f64>,
    /// Weights for cosine-parity integrands (uniform, `L / N`).
    pub weights: Vec<f64>,
    /// Weights for sine-parity integrands.
    pub odd_weights: Vec<f64>,
}

impl AxisQuadrature {
    pub fn midpoint(length: f64, n: usize) -> Self {
        let h = length / n as f64;
        let angles: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * PI / n as f64).collect();
        let nodes = angles.iter().map(|a| a * length / PI).collect();
        let weights = vec![h; n];
        // Fejer's first rule on t = cos(angle), divided by the Jacobian sin(angle).
        let odd_weights = angles
            .iter()
            .map(|&a| {
                let mut acc = 1.0;
                for j in 1..=n / 2 {
                    let jf = j as f64;
                    acc -= 2.0 * (2.0 * jf * a).cos() / (4.0 * jf * jf - 1.0);
                }
                (2.0 / n as f64) * acc / a.sin() * length / PI
            })
            .collect();
        Self {
            length,
            nodes,
            weights,
            odd_weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Highest cosine-parity degree (in units of `pi / L`) integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.len() - 1
    }

    pub fn require_degree(&self, degree: usize) -> Result<()> {
        if degree <= self.exact_degree() {
            Ok(())
        } else {
            Err(SqgError::Config(format!(
                "Nquad = {} integrates trigonometric degree <= {} exactly, {degree} requested",
                self.len(),
                self.exact_degree()
            )))
        }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn integrate_odd(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.odd_weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

#[derive(Clone, Debug)]
pub struct QuadratureGrid {
    pub x: AxisQuadrature,
    pub y: AxisQuadrature,
}

pub fn quadrature_grid(domain: &DomainSpec) -> Result<QuadratureGrid> {
    domain.validate()?;
    let grid = QuadratureGrid {
        x: AxisQuadrature::midpoint(domain.lx, domain.nquad),
        y: AxisQuadrature::midpoint(domain.ly, domain.nquad),
    };
    grid.x.require_degree(3 * domain.modes_per_axis)?;
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub j: usize,
    pub k: usize,
}

/// Per-axis tables of `d^p/dx^p sin(n pi x / L)` at the quadrature nodes,
/// indexed `[p][n - 1, i]`.
#[derive(Clone, Debug)]
struct AxisTables {
    wavenumbers: Vec<f64>,
    deriv: [Array2<f64>; 4],
    /// `sin` table scaled by the cosine-parity weights, for analysis.
    weighted_sin: Array2<f64>,
}

impl AxisTables {
    fn new(quad: &AxisQuadrature, modes: usize) -> Self {
        let n = quad.len();
        let wavenumbers: Vec<f64> = (1..=modes).map(|p| p as f64 * PI / quad.length).collect();
        let deriv = std::array::from_fn(|order| {
            Array2::from_shape_fn((modes, n), |(p, i)| {
                sine_derivative(wavenumbers[p], order, quad.nodes[i])
            })
        });
        let weighted_sin =
            Array2::from_shape_fn((modes, n), |(p, i)| deriv[0][[p, i]] * quad.weights[i]);
        Self {
            wavenumbers,
            deriv,
            weighted_sin,
        }
    }
}

/// `d^order/dx^order sin(a x)` for `order < 4`.
pub(crate) fn sine_derivative(a: f64, order: usize, x: f64) -> f64 {
    let (s, c) = (a * x).sin_cos();
    let scale = a.powi(order as i32);
    match order % 4 {
        0 => s * scale,
        1 => c * scale,
        2 => -s * scale,
        _ => -c * scale,
    }
}

/// Real coefficient vector aligned with [`EigenBasis::modes`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            coeffs: vec![0.0; len],
        }
    }

    /// The `index`-th unit vector (0-based, in basis order).
    pub fn unit(len: usize, index: usize) -> Self {
        let mut f = Self::zeros(len);
        f.coeffs[index] = 1.0;
        f
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b).sum()
    }

    /// Euclidean norm of the coefficients, equal to the L2 norm of the field.
    pub fn l2(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::new(self.coeffs.iter().map(|v| c * v).collect())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Self {
        Self::new(self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + c * b).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    /// `values[[ix, iy]]` at `(x_ix, y_iy)`.
    pub values: Array2<f64>,
}

impl GridField {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: Array2::zeros((n, n)),
        }
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.mapv(f),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = self.values.clone();
        values.zip_mut_with(&other.values, |a, &b| *a = f(*a, b));
        Self { values }
    }
}

/// Ordered Dirichlet eigenpairs of the rectangle with the transforms between
/// coefficient and grid representations. Immutable after construction.
#[derive(Clone, Debug)]
pub struct EigenBasis {
    domain: DomainSpec,
    modes: Vec<Mode>,
    lambdas: Vec<f64>,
    norm_const: f64,
    /// `(j - 1) * J + (k - 1)` -> position in `modes`.
    slot: Vec<usize>,
    grid: QuadratureGrid,
    tab_x: AxisTables,
    tab_y: AxisTables,
}

pub fn build_basis(domain: DomainSpec) -> Result<EigenBasis> {
    EigenBasis::new(domain)
}

impl EigenBasis {
    pub fn new(domain: DomainSpec) -> Result<Self> {
        let grid = quadrature_grid(&domain)?;
        let nj = domain.modes_per_axis;
        let eig = |m: &Mode| {
            let a = m.j as f64 * PI / domain.lx;
            let b = m.k as f64 * PI / domain.ly;
            a * a + b * b
        };
        let mut modes: Vec<Mode> = (1..=nj)
            .flat_map(|j| (1..=nj).map(move |k| Mode { j, k }))
            .collect();
        modes.sort_by(|a, b| eig(a).total_cmp(&eig(b)).then((a.j, a.k).cmp(&(b.j, b.k))));
        // Eigenvalues equal up to rounding form one group ordered by (j, k).
        let mut start = 0;
        while start < modes.len() {
            let mut end = start + 1;
            while end < modes.len() {
                let (l0, l1) = (eig(&modes[end - 1]), eig(&modes[end]));
                if (l1 - l0).abs() > TIE_RTOL * l1.abs() {
                    break;
                }
                end += 1;
            }
            modes[start..end].sort_by_key(|m| (m.j, m.k));
            start = end;
        }
        let lambdas: Vec<f64> = modes.iter().map(eig).collect();
        let mut slot = vec![0; nj * nj];
        for (pos, m) in modes.iter().enumerate() {
            slot[(m.j - 1) * nj + (m.k - 1)] = pos;
        }
        let tab_x = AxisTables::new(&grid.x, nj);
        let tab_y = AxisTables::new(&grid.y, nj);
        Ok(Self {
            domain,
            modes,
            lambdas,
            norm_const: 2.0 / (domain.lx * domain.ly).sqrt(),
            slot,
            grid,
            tab_x,
            tab_y,
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn size(&self) -> usize {
        self.modes.len()
    }

    pub fn modes_per_axis(&self) -> usize {
        self.domain.modes_per_axis
    }

    pub fn nquad(&self) -> usize {
        self.domain.nquad
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambdas[0]
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    /// Basis position of mode `(j, k)`, 1-based indices.
    pub fn index_of(&self, j: usize, k: usize) -> Option<usize> {
        let nj = self.modes_per_axis();
        if j == 0 || k == 0 || j > nj || k > nj {
            return None;
        }
        Some(self.slot[(j - 1) * nj + (k - 1)])
    }

    pub fn zeros(&self) -> SpectralField {
        SpectralField::zeros(self.size())
    }

    pub fn check_field(&self, f: &SpectralField) -> Result<()> {
        check_len(self.size(), f.len())
    }

    pub fn check_grid(&self, g: &GridField) -> Result<()> {
        check_len(self.nquad(), g.values.nrows())?;
        check_len(self.nquad(), g.values.ncols())
    }

    /// Coefficients laid out as a `J x J` matrix indexed `[j - 1, k - 1]`,
    /// scaled by the normalization constant.
    fn coeff_matrix(&self, f: &SpectralField) -> Array2<f64> {
        let nj = self.modes_per_axis();
        Array2::from_shape_fn((nj, nj), |(p, q)| self.norm_const * f.coeffs[self.slot[p * nj + q]])
    }

    /// Grid values of `d^px/dx^px d^py/dy^py sum_j f_j w_j`.
    pub fn synthesize_derivative(&self, f: &SpectralField, px: usize, py: usize) -> Result<GridField> {
        self.check_field(f)?;
        if px > 3 || py > 3 {
            return Err(SqgError::Domain(format!(
                "derivative order ({px}, {py}) exceeds 3 per axis"
            )));
        }
        let c = self.coeff_matrix(f);
        let values = self.tab_x.deriv[px].t().dot(&c).dot(&self.tab_y.deriv[py]);
        Ok(GridField { values })
    }

    pub fn synthesize(&self, f: &SpectralField) -> Result<GridField> {
        self.synthesize_derivative(f, 0, 0)
    }

    /// Quadrature projection `f_j = int g w_j`.
    pub fn analyze(&self, g: &GridField) -> Result<SpectralField> {
        self.check_grid(g)?;
        let m = self.tab_x.weighted_sin.dot(&g.values).dot(&self.tab_y.weighted_sin.t());
        let nj = self.modes_per_axis();
        let mut coeffs = vec![0.0; self.size()];
        for p in 0..nj {
            for q in 0..nj {
                coeffs[self.slot[p * nj + q]] = self.norm_const * m[[p, q]];
            }
        }
        Ok(SpectralField::new(coeffs))
    }

    /// Pointwise derivative of the expansion at an arbitrary `(x, y)`.
    pub fn eval_at(&self, f: &SpectralField, px: usize, py: usize, x: f64, y: f64) -> f64 {
        let sx: Vec<f64> = self.tab_x.wavenumbers.iter().map(|&a| sine_derivative(a, px, x)).collect();
        let sy: Vec<f64> = self.tab_y.wavenumbers.iter().map(|&b| sine_derivative(b, py, y)).collect();
        self.modes
            .iter()
            .zip(&f.coeffs)
            .map(|(m, &c)| c * sx[m.j - 1] * sy[m.k - 1])
            .sum::<f64>()
            * self.norm_const
    }

    /// Derivative of the expansion on the tensor product `xs x ys` of
    /// arbitrary abscissae, `out[[i, j]]` at `(xs[i], ys[j])`.
    pub fn eval_on_lines(
        &self,
        f: &SpectralField,
        px: usize,
        py: usize,
        xs: &[f64],
        ys: &[f64],
    ) -> Result<Array2<f64>> {
        self.check_field(f)?;
        let nj = self.modes_per_axis();
        let tx = Array2::from_shape_fn((nj, xs.len()), |(p, i)| {
            sine_derivative(self.tab_x.wavenumbers[p], px, xs[i])
        });
        let ty = Array2::from_shape_fn((nj, ys.len()), |(q, i)| {
            sine_derivative(self.tab_y.wavenumbers[q], py, ys[i])
        });
        Ok(tx.t().dot(&self.coeff_matrix(f)).dot(&ty))
    }

    /// Tensor quadrature of grid values (cosine-parity rule on both axes).
    pub fn integrate(&self, g: &GridField) -> f64 {
        let wx = Array1::from(self.grid.x.weights.clone());
        let wy = Array1::from(self.grid.y.weights.clone());
        wx.dot(&g.values.dot(&wy))
    }

    /// Grid-quadrature `L^r` norm.
    pub fn lp_norm(&self, g: &GridField, r: f64) -> f64 {
        if r.is_infinite() {
            return g.max_abs();
        }
        self.integrate(&g.map(|v| v.abs().powf(r))).powf(1.0 / r)
    }
}

/// Random field with coefficients `N(0, 1) * lambda_j^(-decay)`.
pub fn random_field(basis: &EigenBasis, seed: u64, decay: f64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SpectralField::new(
        basis
            .lambdas()
            .iter()
            .map(|&l| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * l.powf(-decay)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(j: usize) -> EigenBasis {
        build_basis(DomainSpec::unit_square(j)).unwrap()
    }

    #[test]
    fn single_mode_square() {
        let b = square(1);
        assert_eq!(b.modes(), &[Mode { j: 1, k: 1 }]);
        assert!((b.lambdas()[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn first_four_eigenvalues_and_tie_break() {
        let b = square(2);
        let expect = [2.0, 5.0, 5.0, 8.0];
        for (l, e) in b.lambdas().iter().zip(expect) {
            assert!((l - e).abs() < 1e-13);
        }
        assert_eq!(b.modes()[1], Mode { j: 1, k: 2 });
        assert_eq!(b.modes()[2], Mode { j: 2, k: 1 });
    }

    #[test]
    fn rectangle_eigenvalue() {
        let b = build_basis(DomainSpec::new(2.0 * PI, PI, 1, 4).unwrap()).unwrap();
        assert!((b.lambdas()[0] - 1.25).abs() < 1e-14);
    }

    #[test]
    fn ties_are_lexicographic_for_larger_bases() {
        let b = square(8);
        for w in b.modes().windows(2).zip(b.lambdas().windows(2)) {
            let (m, l) = w;
            assert!(l[1] >= l[0]);
            if (l[1] - l[0]).abs() < 1e-9 {
                assert!((m[0].j, m[0].k) < (m[1].j, m[1].k));
            }
        }
        // 5^2 + 5^2 = 1^2 + 7^2 = 50
        let a = b.index_of(1, 7).unwrap();
        let c = b.index_of(5, 5).unwrap();
        let d = b.index_of(7, 1).unwrap();
        assert!(a < c && c < d);
    }

    #[test]
    fn invalid_domains_are_rejected() {
        assert!(matches!(DomainSpec::new(0.0, 1.0, 2, 6), Err(SqgError::Config(_))));
        assert!(matches!(DomainSpec::new(1.0, -1.0, 2, 6), Err(SqgError::Config(_))));
        assert!(matches!(DomainSpec::new(1.0, 1.0, 0, 6), Err(SqgError::Config(_))));
        assert!(matches!(DomainSpec::new(1.0, 1.0, 3, 7), Err(SqgError::Config(_))));
        assert!(DomainSpec::new(1.0, 1.0, 3, 8).is_ok());
    }

    #[test]
    fn quadrature_closed_forms() {
        let q = AxisQuadrature::midpoint(PI, 6);
        assert!((q.integrate(|x| x.sin().powi(2)) - PI / 2.0).abs() < 1e-13);
        assert!((q.integrate(|x| x.sin() * x.cos() * (2.0 * x).sin()) - PI / 4.0).abs() < 1e-13);
        assert!((q.integrate_odd(|x| (3.0 * x).sin()) - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn quadrature_exactness_threshold() {
        let q = AxisQuadrature::midpoint(PI, 4);
        assert!(q.require_degree(7).is_ok());
        assert!(matches!(q.require_degree(8), Err(SqgError::Config(_))));
    }

    #[test]
    fn unit_norm_and_orthonormality() {
        let b = square(6);
        let m = b.size();
        let grids: Vec<GridField> =
            (0..m).map(|i| b.synthesize(&SpectralField::unit(m, i)).unwrap()).collect();
        for i in 0..m {
            for j in 0..m {
                let g = b.integrate(&grids[i].zip_with(&grids[j], |a, c| a * c));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-12, "gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn synthesize_first_mode() {
        let b = square(3);
        let g = b.synthesize(&SpectralField::unit(b.size(), 0)).unwrap();
        let nodes = &b.grid().x.nodes;
        for (ix, &x) in nodes.iter().enumerate() {
            for (iy, &y) in nodes.iter().enumerate() {
                let exact = 2.0 / PI * x.sin() * y.sin();
                assert!((g.values[[ix, iy]] - exact).abs() < 1e-14);
            }
        }
        assert_eq!(b.synthesize(&b.zeros()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn synthesize_matches_direct_double_sum() {
        let b = square(4);
        let f = random_field(&b, 7, 0.0);
        let g = b.synthesize(&f).unwrap();
        let (xs, ys) = (&b.grid().x.nodes, &b.grid().y.nodes);
        for (ix, &x) in xs.iter().enumerate() {
            for (iy, &y) in ys.iter().enumerate() {
                let mut direct = 0.0;
                for (m, c) in b.modes().iter().zip(&f.coeffs) {
                    direct += c * (2.0 / PI) * (m.j as f64 * x).sin() * (m.k as f64 * y).sin();
                }
                assert!((g.values[[ix, iy]] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn analyze_inverts_synthesize() {
        let b = square(8);
        let e3 = SpectralField::unit(b.size(), 2);
        let back = b.analyze(&b.synthesize(&e3).unwrap()).unwrap();
        assert!(back.sub(&e3).max_abs() < 1e-12);
        assert!(b.analyze(&GridField::zeros(b.nquad())).unwrap().is_zero());
        let f = random_field(&b, 11, 0.0);
        let back = b.analyze(&b.synthesize(&f).unwrap()).unwrap();
        assert!(back.sub(&f).max_abs() < 1e-12 * f.max_abs());
    }

    #[test]
    fn shape_errors() {
        let b = square(2);
        assert!(matches!(b.synthesize(&SpectralField::zeros(3)), Err(SqgError::Shape { .. })));
        assert!(matches!(b.analyze(&GridField::zeros(5)), Err(SqgError::Shape { .. })));
    }

    #[test]
    fn eval_at_agrees_with_grid() {
        let b = square(3);
        let f = random_field(&b, 3, 0.5);
        let g = b.synthesize_derivative(&f, 1, 2).unwrap();
        let (x, y) = (b.grid().x.nodes[2], b.grid().y.nodes[5]);
        assert!((b.eval_at(&f, 1, 2, x, y) - g.values[[2, 5]]).abs() < 1e-12);
    }
}
