//! Brute-force check of the interaction tensor: the triple-product integrand
//! is evaluated pointwise from explicit sines and cosines on a fine 2-D
//! midpoint grid (Nquad = 8J), independent of the basis tables.

use std::f64::consts::PI;

use sqg_galerkin::eigenbasis::{build_basis, DomainSpec};
use sqg_galerkin::sqg::gamma_tensor;

/// `lambda_j^(-1/2) int (grad_perp w_j . grad w_k) w_l` on `(0, pi)^2`.
fn brute_gamma(j: (usize, usize), k: (usize, usize), l: (usize, usize), n: usize) -> f64 {
    let c = 2.0 / PI;
    let h = PI / n as f64;
    let lam_j = (j.0 * j.0 + j.1 * j.1) as f64;
    let mut acc = 0.0;
    for ix in 0..n {
        let x = (ix as f64 + 0.5) * h;
        for iy in 0..n {
            let y = (iy as f64 + 0.5) * h;
            let (j0, j1) = (j.0 as f64, j.1 as f64);
            let (k0, k1) = (k.0 as f64, k.1 as f64);
            let wj_x = c * j0 * (j0 * x).cos() * (j1 * y).sin();
            let wj_y = c * j1 * (j0 * x).sin() * (j1 * y).cos();
            let wk_x = c * k0 * (k0 * x).cos() * (k1 * y).sin();
            let wk_y = c * k1 * (k0 * x).sin() * (k1 * y).cos();
            let wl = c * (l.0 as f64 * x).sin() * (l.1 as f64 * y).sin();
            acc += (-wj_y * wk_x + wj_x * wk_y) * wl;
        }
    }
    acc * h * h / lam_j.sqrt()
}

#[test]
fn frozen_entry_matches_brute_force_and_closed_form() {
    let nj = 2;
    let brute = brute_gamma((1, 1), (1, 2), (2, 1), 8 * nj);
    let closed = -3.0 / (2.0 * 2f64.sqrt() * PI);
    println!("brute-force gamma[(1,1),(1,2),(2,1)] = {brute:.17e}");
    assert!((brute - closed).abs() < 1e-14);

    let basis = build_basis(DomainSpec::unit_square(nj)).unwrap();
    let g = gamma_tensor(&basis, false).unwrap();
    let idx = |p, q| basis.index_of(p, q).unwrap();
    assert!((g.get(idx(1, 1), idx(1, 2), idx(2, 1)) - brute).abs() < 1e-13);
}

#[test]
fn whole_tensor_matches_brute_force() {
    let nj = 3;
    let basis = build_basis(DomainSpec::unit_square(nj)).unwrap();
    let g = gamma_tensor(&basis, false).unwrap();
    let modes = basis.modes();
    for (a, mj) in modes.iter().enumerate() {
        for (b, mk) in modes.iter().enumerate() {
            for (c, ml) in modes.iter().enumerate() {
                let brute = brute_gamma((mj.j, mj.k), (mk.j, mk.k), (ml.j, ml.k), 8 * nj);
                assert!((g.get(a, b, c) - brute).abs() < 1e-13, "({a},{b},{c})");
            }
        }
    }
}
