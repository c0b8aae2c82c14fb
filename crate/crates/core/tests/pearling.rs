mod common;

use common::{coarse, fine, sup};
use fch_bilayer::grid::Parity;
use fch_bilayer::pearling::{
    alpha_coefficients, classify, compute_alpha0, compute_beta0, compute_c1, compute_psi0_correction, pearling_report,
    pencil_multiplicity, psi0_correction_rhs, PencilParams, Regime, REGIME_TOL,
};
use fch_bilayer::profile1d::solve_u1;
use fch_bilayer::tangential::greens_params;
use num_complex::Complex64;

// Independent oracle: second-order full-line differences at h = 0.01 and
// 0.005, extrapolated in h^2.
const ALPHA01: f64 = -0.010441836;
const ALPHA02: f64 = -0.046455721;
const BETA0: f64 = -1.3154839;
const C1_1_1_2: f64 = 0.41188939;

#[test]
fn beta0_routes_agree_and_are_negative() {
    let b = fine();
    let beta = compute_beta0(&b.spectral, &b.u0, &b.spec);
    let d = beta.direct;
    assert!(d < 0.0 && beta.fredholm < 0.0);
    for other in [beta.fredholm, beta.via_translation, beta.via_second_derivative] {
        assert!((other - d).abs() < 1e-5 * d.abs(), "{beta:?}");
    }
    assert!((d - BETA0).abs() < 1e-6, "{d}");
}

#[test]
fn alpha0_is_affine_in_gamma_and_eta_d() {
    let b = coarse();
    let (a01, a02) = alpha_coefficients(&b.spectral, &b.spec).unwrap();
    let alpha = |gamma: f64, eta_d: f64| {
        let u1 = solve_u1(&b.spectral, &b.spec, gamma, eta_d).unwrap();
        compute_alpha0(&b.spectral, &u1, &b.spec, eta_d)
    };
    for gamma in [0.0, 1.0, 2.5] {
        for eta_d in [-2.0, 0.0, 1.5] {
            let a = alpha(gamma, eta_d);
            let want = a01 * gamma - a02 * eta_d;
            assert!(
                (a - want).abs() <= 1e-8 * want.abs().max(1e-12),
                "({gamma}, {eta_d}): {a} vs {want}"
            );
        }
        let d = alpha(2.0 * gamma, -2.0) - alpha(gamma, -2.0);
        assert!((d - a01 * gamma).abs() < 1e-9);
    }
    assert_eq!(alpha(0.0, 0.0), 0.0);
}

#[test]
fn well_coefficients_match_the_oracle() {
    let b = fine();
    let (a01, a02) = alpha_coefficients(&b.spectral, &b.spec).unwrap();
    assert!((a01 - ALPHA01).abs() < 2e-9, "{a01}");
    assert!((a02 - ALPHA02).abs() < 2e-9, "{a02}");
}

#[test]
fn c1_examples() {
    let b = coarse();
    let zero = solve_u1(&b.spectral, &b.spec, 0.0, 0.0).unwrap();
    assert_eq!(compute_c1(&b.spectral, &b.spec, &zero, 0.0), 0.0);
    let u1 = solve_u1(&b.spectral, &b.spec, 1.0, -2.0).unwrap();
    let d = compute_c1(&b.spectral, &b.spec, &u1, 2.0) - compute_c1(&b.spectral, &b.spec, &u1, 0.0);
    assert!((d - 2.0 / b.spectral.lambda0).abs() < 1e-14);

    let f = fine();
    let u1 = solve_u1(&f.spectral, &f.spec, 1.0, 2.0).unwrap();
    let c1 = compute_c1(&f.spectral, &f.spec, &u1, 1.0);
    assert!((c1 - C1_1_1_2).abs() < 1e-7, "{c1}");
}

#[test]
fn psi0_correction_examples() {
    let b = coarse();
    let s = &b.spectral;
    let zero = solve_u1(s, &b.spec, 0.0, 0.0).unwrap();
    let psi = compute_psi0_correction(s, &zero, 0.0, 0.0, &b.spec).unwrap();
    assert_eq!(sup(&psi), 0.0);

    let (gamma, eta_d) = (1.0, 2.0);
    let u1 = solve_u1(s, &b.spec, gamma, eta_d).unwrap();
    let alpha0 = compute_alpha0(s, &u1, &b.spec, eta_d);
    let rhs = psi0_correction_rhs(s, &u1, alpha0, eta_d, &b.spec);
    let nrm = s.grid().norm(&rhs, Parity::Even);
    assert!(s.inner(&rhs, &s.psi0).abs() < 1e-6 * nrm);
    let psi = compute_psi0_correction(s, &u1, alpha0, eta_d, &b.spec).unwrap();
    assert!(s.inner(&psi, &s.psi0).abs() < 1e-10);
    // a wrong alpha0 breaks solvability
    assert!(compute_psi0_correction(s, &u1, alpha0 + 0.1, eta_d, &b.spec).is_err());
}

#[test]
fn classify_examples() {
    assert_eq!(classify(-0.3, REGIME_TOL), Regime::Undulation);
    assert_eq!(classify(0.3, REGIME_TOL), Regime::Pearling);
    assert_eq!(classify(0.0, REGIME_TOL), Regime::Degenerate);
}

fn close_to(z: Complex64, w: Complex64, tol: f64) -> bool {
    (z - w).norm() < tol
}

#[test]
fn pencil_at_zero_eps_is_the_squared_operator() {
    let b = coarse();
    let report = pearling_report(&b.spec, &b.u0, &b.spectral, 1.0, 1.0, -2.0, &[0.0]).unwrap();
    let l = &report.pencil[0].lambda;
    assert_eq!(l.len(), 4);
    let i = Complex64::new(0.0, 1.0);
    assert_eq!(l.iter().filter(|z| close_to(**z, i, 1e-6)).count(), 2, "{l:?}");
    assert_eq!(l.iter().filter(|z| close_to(**z, -i, 1e-6)).count(), 2, "{l:?}");

    let u1 = solve_u1(&b.spectral, &b.spec, 1.0, -2.0).unwrap();
    let p = PencilParams {
        eps: 0.0,
        eta1: 1.0,
        eta_d: -2.0,
        lambda0: b.spectral.lambda0,
    };
    let l0 = b.spectral.lambda0;
    let even = pencil_multiplicity(&b.spectral, &b.spec, &p, &u1.aux, Parity::Even, -l0, 1e-4).unwrap();
    let odd = pencil_multiplicity(&b.spectral, &b.spec, &p, &u1.aux, Parity::Odd, 0.0, 1e-4).unwrap();
    assert_eq!(even, 2);
    // each mu = 0 gives the pair lambda = +-0
    assert_eq!(2 * odd, 4);
}

#[test]
fn pencil_splits_symmetrically_in_the_undulation_regime() {
    let b = coarse();
    let eps_list = [1e-3, 2e-3, 4e-3];
    let report = pearling_report(&b.spec, &b.u0, &b.spectral, 1.0, 1.0, -2.0, &eps_list).unwrap();
    assert_eq!(report.regime, Regime::Undulation);
    let mut errs = Vec::new();
    for track in &report.pencil {
        let l = &track.lambda;
        for z in l {
            assert!(l.iter().any(|w| close_to(*w, -*z, 1e-8)));
            assert!(l.iter().any(|w| close_to(*w, z.conj(), 1e-8)), "{l:?}");
        }
        assert_eq!(l.iter().filter(|z| z.re > 0.0).count(), 2);
        assert_eq!(l.iter().filter(|z| z.re < 0.0).count(), 2);

        // roots of the reduced symbol (1 + l^2)^2 + eps c1 (1 + l^2) - 4 eps alpha0
        let g = greens_params(track.eps, report.c1, report.alpha0).unwrap();
        let root = Complex64::new(g.b, g.a);
        assert!(g.symbol(Complex64::new(-g.b, g.a)).norm() < 1e-12);
        let lp = l.iter().find(|z| z.re > 0.0 && z.im > 0.0).unwrap();
        errs.push((lp - root).norm());
    }
    // the pencil and the reduced symbol agree to O(eps)
    for (e, eps) in errs.iter().zip(eps_list) {
        assert!(*e < 2.0 * eps, "{errs:?}");
    }
    assert!(errs[2] > errs[0]);
}
