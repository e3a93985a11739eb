//! Acceptance criteria for the solver and verification harness. Every
//! criterion runs and prints one PASS/FAIL line; the process exits nonzero if
//! any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqg_galerkin::config::{Scheme, SolverConfig};
use sqg_galerkin::eigenbasis::{build_basis, random_field, DomainSpec, EigenBasis, SpectralField};
use sqg_galerkin::io::write_diagnostics_csv;
use sqg_galerkin::spectral_ops::sobolev_norm;
use sqg_galerkin::sqg::{gamma_tensor, nonlinear_term, nonlinear_via_gamma};
use sqg_galerkin::timestepping::{
    run, run_picard_inviscid, run_retarded_mollification, smallness_margin, with_h2_norm, PicardSettings, Solver,
    CALIBRATED_SMALLNESS_C, CALIBRATION_DECAY,
};
use sqg_galerkin::verification::{
    commutator_diagnostic, energy_order_extrapolated, lp_monotonicity, CordobaChecker, COMMUTATOR_RATIO_BOUND,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn basis(nj: usize) -> EigenBasis {
    build_basis(DomainSpec::unit_square(nj)).expect("valid domain")
}

fn cfg(nj: usize) -> SolverConfig {
    SolverConfig {
        domain: DomainSpec::unit_square(nj),
        lr_exponents: vec![],
        ..Default::default()
    }
}

fn spectral_round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for nj in [2, 4, 8] {
        let b = basis(nj);
        for seed in 0..100 {
            let f = random_field(&b, seed, 0.0);
            let back = b.analyze(&b.synthesize(&f).unwrap()).unwrap();
            worst = worst.max(back.sub(&f).max_abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |analyze(synthesize f) - f| = {worst:.2e} (tol 1e-12), J in {{2,4,8}} x 100 fields"))
}

fn galerkin_structure() -> Outcome {
    let (mut anti, mut diag, mut paths): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for nj in 2..=8 {
        let b = basis(nj);
        let g = gamma_tensor(&b, false).unwrap();
        anti = anti.max(g.antisymmetry_defect());
        let m = b.size();
        for j in 0..m {
            for l in 0..m {
                diag = diag.max(g.get(j, j, l).abs());
            }
        }
        if nj <= 4 {
            for seed in 0..20 {
                let th = random_field(&b, seed, 0.0);
                let a = nonlinear_term(&b, &th).unwrap();
                let c = nonlinear_via_gamma(&th, &g).unwrap();
                paths = paths.max(a.sub(&c).max_abs());
            }
        }
    }
    let pass = anti <= 1e-12 && diag <= 1e-13 && paths <= 1e-10;
    outcome(
        pass,
        format!(
            "antisymmetry {anti:.2e} (1e-12), max |gamma_jjl| {diag:.2e} (1e-13), pseudo-spectral vs tensor {paths:.2e} (1e-10, J <= 4)"
        ),
    )
}

fn inviscid_conservation() -> Outcome {
    let b = basis(4);
    let mut worst_drift: f64 = 0.0;
    let mut worst_ratio = f64::INFINITY;
    for seed in [42, 43, 44] {
        let th = with_h2_norm(&b, &random_field(&b, seed, 1.0), 300.0).unwrap();
        let drift = |dt: f64| {
            let c = SolverConfig {
                kappa: 0.0,
                dt,
                scheme: Scheme::Rk4FullyExplicit,
                ..cfg(4)
            };
            let rows = run(&th, &c).unwrap().rows;
            let l0 = rows[0].l2;
            rows.iter().map(|r| (r.l2 - l0).abs() / l0).fold(0.0, f64::max)
        };
        let (d1, d2) = (drift(1e-3), drift(5e-4));
        worst_drift = worst_drift.max(d1);
        worst_ratio = worst_ratio.min(d1 / d2);
    }
    outcome(
        worst_drift <= 1e-8 && worst_ratio >= 8.0,
        format!("relative L2 drift {worst_drift:.2e} (1e-8), drift reduction on dt-halving {worst_ratio:.1}x (>= 8x); J=4, ||theta0||_2D=300"),
    )
}

fn energy_identity() -> Outcome {
    let b = basis(8);
    let mut worst_order = f64::INFINITY;
    let mut observed = Vec::new();
    for (alpha, seed) in [(0.5, 7), (0.75, 8)] {
        let th = with_h2_norm(&b, &random_field(&b, seed, 1.0), 5.0).unwrap();
        let rows: Vec<_> = [2e-3, 1e-3, 5e-4]
            .iter()
            .map(|&dt| {
                let c = SolverConfig {
                    alpha,
                    dt,
                    t_final: 0.5,
                    ..cfg(8)
                };
                run(&th, &c).unwrap().rows
            })
            .collect();
        let est = energy_order_extrapolated([&rows[0], &rows[1], &rows[2]], 1.0).unwrap();
        observed.push(format!("alpha={alpha}: {:.4}/{:.4}->{:.5}", est.coarse, est.fine, est.extrapolated));
        worst_order = worst_order.min(est.extrapolated);
    }
    // single-mode pure diffusion
    let c = SolverConfig {
        t_final: 1.0,
        ..cfg(8)
    };
    let e1 = SpectralField::unit(b.size(), 0);
    let out = run(&e1, &c).unwrap();
    let rate = 2f64.powf(0.5);
    let decay_err = out
        .rows
        .iter()
        .map(|r| (r.l2 - (-rate * r.t).exp()).abs())
        .fold(0.0, f64::max);
    let pass = worst_order >= 2.0 - 1e-3 && decay_err <= 1e-10;
    outcome(
        pass,
        format!(
            "asymptotic residual order {worst_order:.5} (>= 2, estimator floor 1e-3) [{}]; e1 decay error {decay_err:.2e} (1e-10)",
            observed.join(", ")
        ),
    )
}

fn cordoba_cordoba() -> Outcome {
    let b = basis(6);
    let checker = CordobaChecker::new(&b).unwrap();
    let combos: Vec<(f64, f64)> = [4.0, 6.0]
        .iter()
        .flat_map(|&r| [0.5, 1.0, 1.5, 2.0].map(|s| (r, s)))
        .chain([2.0, 3.0].iter().flat_map(|&r| [0.5, 1.0].map(|s| (r, s))))
        .collect();
    let mut worst_all = f64::INFINITY;
    let mut failing = Vec::new();
    for &(r, s) in &combos {
        let mut worst = f64::INFINITY;
        for seed in 0..200 {
            let f = random_field(&b, seed, 0.5);
            worst = worst.min(checker.gap(&f, r, s).unwrap().relative());
        }
        worst_all = worst_all.min(worst);
        if worst < -1e-8 {
            failing.push(format!("(r={r}, s={s}): {worst:.2e}"));
        }
    }
    let detail = if failing.is_empty() {
        format!("worst relative gap {worst_all:.2e} (>= -1e-8), 200 fields, J=6, check basis {}J", checker.enlargement())
    } else {
        format!(
            "worst relative gap {worst_all:.2e} (>= -1e-8), check basis {}J; violated at {}",
            checker.enlargement(),
            failing.join(", ")
        )
    };
    outcome(failing.is_empty(), detail)
}

fn lp_decay() -> Outcome {
    let b = basis(8);
    let mut worst = f64::INFINITY;
    let mut all_pass = true;
    for (alpha, r) in [(0.75, 4.0), (0.5, 2.0)] {
        for seed in 0..3 {
            let th = with_h2_norm(&b, &random_field(&b, seed, 1.0), 5.0).unwrap();
            let c = SolverConfig {
                alpha,
                t_final: 2.0,
                ..cfg(8)
            };
            let out = run(&th, &c).unwrap();
            let rep = lp_monotonicity(&b, &out.trajectory, r, alpha, 1e-6).unwrap();
            all_pass &= rep.pass;
            worst = worst.min(rep.worst_violation);
        }
    }
    outcome(all_pass, format!("worst relative L^r increase {:.2e} (1e-6), T=2, J=8", -worst))
}

fn small_data_regime() -> Outcome {
    let c = SolverConfig {
        t_final: 10.0,
        ..cfg(8)
    };
    let solver = Solver::new(c.clone()).unwrap();
    let b = solver.basis();
    let threshold = c.kappa / CALIBRATED_SMALLNESS_C;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut margins_ok = true;
    for seed in 0..10 {
        let frac: f64 = rng.gen_range(0.5..1.0);
        let th = with_h2_norm(b, &random_field(b, seed, CALIBRATION_DECAY), frac * threshold).unwrap();
        margins_ok &= smallness_margin(b, &th, c.kappa, CALIBRATED_SMALLNESS_C).unwrap() > 0.0;
        let h0 = sobolev_norm(b, &th, 2.0).unwrap();
        let mut peak: f64 = 0.0;
        solver
            .run_observed(&th, |_, s| {
                peak = peak.max(sobolev_norm(b, s, 2.0).unwrap());
                std::ops::ControlFlow::Continue(())
            })
            .unwrap();
        worst = worst.max(peak / h0);
    }
    outcome(
        margins_ok && worst <= 1.0 + 1e-6,
        format!("max_t ||theta||_2D / ||theta0||_2D = {worst:.9} (<= 1+1e-6), C = {CALIBRATED_SMALLNESS_C:.6e}, 10 fields, T=10"),
    )
}

fn subcritical_boundedness() -> Outcome {
    let c = SolverConfig {
        alpha: 0.75,
        t_final: 10.0,
        snapshot_stride: 100,
        ..cfg(8)
    };
    let b = basis(8);
    let th = with_h2_norm(&b, &random_field(&b, 11, 1.0), 5.0).unwrap();
    match run(&th, &c) {
        Ok(out) => {
            let peak = out.rows.iter().map(|r| r.h2).fold(0.0, f64::max);
            let finite = out.rows.iter().all(|r| r.h2.is_finite());
            outcome(
                finite && out.trajectory.times.last() == Some(&10.0),
                format!("completed to T=10, max ||theta||_2D = {peak:.4} from 5"),
            )
        }
        Err(e) => outcome(false, format!("run failed: {e}")),
    }
}

fn retarded_mollification() -> Outcome {
    let c = SolverConfig {
        kappa: 0.1,
        t_final: 1.0,
        ..cfg(8)
    };
    let b = basis(8);
    let th = with_h2_norm(&b, &random_field(&b, 21, 1.0), 5.0).unwrap();
    let direct = run(&th, &c).unwrap().trajectory;
    let trajs: Vec<_> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&d| run_retarded_mollification(&th, d, &c).unwrap().trajectory)
        .collect();
    let d1 = trajs[0].linf_l2_distance(&trajs[1]).unwrap();
    let d2 = trajs[1].linf_l2_distance(&trajs[2]).unwrap();
    let rel = trajs[2].linf_l2_distance(&direct).unwrap() / direct.linf_l2();
    outcome(
        d2 < d1 && rel <= 0.05,
        format!("successive LinfL2 differences {d1:.3e} > {d2:.3e}; delta=0.05 vs direct {:.3}% (<= 5%)", 100.0 * rel),
    )
}

fn picard_iteration() -> Outcome {
    let c = SolverConfig {
        t_final: 0.1,
        ..cfg(8)
    };
    let b = basis(8);
    let settings = PicardSettings::default();
    let mut worst_iters = 0;
    let mut worst_ratio: f64 = 0.0;
    let mut converged = true;
    for seed in 0..3 {
        let th = with_h2_norm(&b, &random_field(&b, seed, 1.0), 0.1).unwrap();
        let rep = run_picard_inviscid(&th, &settings, &c).unwrap();
        converged &= rep.converged;
        worst_iters = worst_iters.max(rep.iterations);
        worst_ratio = rep.ratios().into_iter().fold(worst_ratio, f64::max);
    }
    let mut single_iters = 0;
    for idx in [0, 5] {
        let rep = run_picard_inviscid(&SpectralField::unit(b.size(), idx), &settings, &c).unwrap();
        converged &= rep.converged;
        single_iters = single_iters.max(rep.iterations);
    }
    outcome(
        converged && worst_iters <= 10 && worst_ratio < 1.0 && single_iters <= 2,
        format!(
            "random data: {worst_iters} iterations (<= 10), max residual ratio {worst_ratio:.2e} (< 1); single mode: {single_iters} (<= 2)"
        ),
    )
}

fn commutator_homogeneity() -> Outcome {
    let b = basis(6);
    let mut scale_err: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    for seed in 0..500 {
        let f = random_field(&b, seed, 0.5);
        let base = commutator_diagnostic(&b, &f, 0.5).unwrap();
        max_ratio = max_ratio.max(base.ratio);
        if seed < 20 {
            for c in [0.1, 3.0, 17.0] {
                let r = commutator_diagnostic(&b, &f.scaled(c), 0.5).unwrap().ratio;
                scale_err = scale_err.max((r - base.ratio).abs() / base.ratio);
            }
        }
    }
    let mut single: f64 = 0.0;
    for idx in 0..b.size() {
        single = single.max(commutator_diagnostic(&b, &SpectralField::unit(b.size(), idx), 0.5).unwrap().ratio);
    }
    outcome(
        scale_err <= 1e-10 && single <= 1e-12 && max_ratio <= COMMUTATOR_RATIO_BOUND,
        format!(
            "scaling deviation {scale_err:.2e} (1e-10); single-mode ratio {single:.2e}; corpus max ratio {max_ratio:.4e} (<= {COMMUTATOR_RATIO_BOUND:.4e})"
        ),
    )
}

fn reproducibility() -> Outcome {
    let c = SolverConfig {
        seed: 2024,
        lr_exponents: vec![2.0, 4.0],
        t_final: 0.5,
        ..SolverConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let b = basis(8);
        let th = with_h2_norm(&b, &random_field(&b, c.seed, 1.0), 5.0).unwrap();
        let out = run(&th, &c).unwrap();
        let path = dir.path().join(format!("run{k}.csv"));
        let file = std::fs::File::create(&path).unwrap();
        write_diagnostics_csv(std::io::BufWriter::new(file), &c.lr_exponents, &out.rows).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    outcome(
        !bytes[0].is_empty() && bytes[0] == bytes[1],
        format!("two runs, {} CSV bytes each, identical: {}", bytes[0].len(), bytes[0] == bytes[1]),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("spectral round trip", spectral_round_trip),
        ("Galerkin structure", galerkin_structure),
        ("inviscid L2 conservation", inviscid_conservation),
        ("energy identity", energy_identity),
        ("Cordoba-Cordoba inequality", cordoba_cordoba),
        ("L^r decay", lp_decay),
        ("small-data regime", small_data_regime),
        ("subcritical boundedness", subcritical_boundedness),
        ("retarded mollification", retarded_mollification),
        ("Picard iteration", picard_iteration),
        ("commutator homogeneity", commutator_homogeneity),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:2} {tag} {name}: {} [{:.1}s]",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
