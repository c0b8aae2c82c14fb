mod common;

use common::{coarse, fine, sup, sup_diff};
use fch_bilayer::grid::Parity;
use fch_bilayer::FchError;
use proptest::prelude::*;

/// Top eigenvalue for quartic(1, 3.5), from an independent second-order
/// full-line discretization extrapolated in h^2 (h = 0.005, 0.0025).
const LAMBDA0: f64 = 5.38146848;

#[test]
fn principal_eigenvalue_matches_the_extrapolated_value() {
    let b = fine();
    assert!((b.spectral.lambda0 - LAMBDA0).abs() < 1e-7, "{}", b.spectral.lambda0);
}

#[test]
fn principal_eigenvalue_converges_under_refinement() {
    let l: Vec<f64> = [161, 321, 641]
        .iter()
        .map(|&n| common::base(16.0, n).spectral.lambda0)
        .collect();
    let order = ((l[0] - l[1]) / (l[1] - l[2])).abs().log2();
    assert!(order >= 1.8, "{l:?} order {order}");
}

#[test]
fn translation_mode_spans_the_kernel() {
    let b = fine();
    let s = &b.spectral;
    assert!(s.lambda1_numeric.abs() < 1e-7, "{}", s.lambda1_numeric);
    let g = s.grid();
    let cos = g.inner(&s.psi1_numeric, Parity::Odd, &s.psi1, Parity::Odd).abs();
    assert!(cos > 1.0 - 1e-8, "{cos}");
    // psi1 odd with a single sign on r > 0
    assert_eq!(s.psi1[0], 0.0);
    let sign = s.psi1[1].signum();
    assert!(s.psi1[1..g.len() - 1].iter().all(|v| v.signum() == sign));
}

#[test]
fn principal_eigenfunction_is_positive_and_normalized() {
    let b = coarse();
    let s = &b.spectral;
    assert!(s.psi0.iter().all(|v| *v > 0.0));
    assert!((s.grid().norm(&s.psi0, Parity::Even) - 1.0).abs() < 1e-12);
    assert!((s.grid().norm(&s.psi1, Parity::Odd) - 1.0).abs() < 1e-12);
}

#[test]
fn remaining_spectrum_is_negative() {
    let b = fine();
    let s = &b.spectral;
    let big = 1e6;
    assert_eq!(s.count_in(Parity::Even, 1e-6, big), 1);
    assert_eq!(s.count_in(Parity::Odd, 1e-6, big), 0);
    assert_eq!(s.count_in(Parity::Odd, -1e-6, 1e-6), 1);
    let ev = s.even_eigenvalues(6);
    assert!(ev[1..].iter().all(|l| *l < 0.0), "{ev:?}");
    assert!(s.lambda2 < 0.0);
    // the continuum approximants sit below the essential edge -W''(0) = -7
    assert_eq!(s.essential_edge, -7.0);
    assert!(s.count_in(Parity::Even, s.essential_edge, 0.0) <= 2);
    assert!(ev[3..].iter().all(|l| *l < s.essential_edge), "{ev:?}");
}

#[test]
fn tail_decay_rate() {
    let b = fine();
    let s = &b.spectral;
    let g = s.grid();
    // last quarter of the grid before a buffer of 4 length units
    let (r0, r1) = (0.75 * (g.radius() - 4.0), g.radius() - 4.0);
    let pts: Vec<(f64, f64)> = (0..g.len())
        .map(|j| (g.node(j), s.psi0[j]))
        .filter(|(r, _)| *r >= r0 && *r <= r1)
        .map(|(r, v)| (r, v.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let slope =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let expected = (7.0 + s.lambda0).sqrt();
    assert!((-slope - expected).abs() < 0.02 * expected, "{slope} vs {expected}");
}

#[test]
fn even_solve_examples() {
    let b = coarse();
    let s = &b.spectral;
    let f: Vec<f64> = s.psi0.iter().map(|p| s.lambda0 * p).collect();
    assert!(sup_diff(&s.solve_even(&f).unwrap(), &s.psi0) < 1e-8);

    let one = vec![1.0; s.psi0.len()];
    let x = s.solve_even(&one).unwrap();
    let back = s.apply(&x, Parity::Even);
    assert!(sup_diff(&back, &one) < 1e-9);

    let g: Vec<f64> = s.background().iter().map(|u| b.spec.dw(*u)).collect();
    let combo: Vec<f64> = one.iter().zip(&g).map(|(a, c)| 2.0 * a - 3.0 * c).collect();
    let xg = s.solve_even(&g).unwrap();
    let lin: Vec<f64> = x.iter().zip(&xg).map(|(a, c)| 2.0 * a - 3.0 * c).collect();
    assert!(sup_diff(&s.solve_even(&combo).unwrap(), &lin) < 1e-12 * sup(&lin).max(1.0));
}

#[test]
fn shifted_inverse_examples() {
    let b = fine();
    let s = &b.spectral;
    let l0 = s.lambda0;
    let p1 = s.shifted_pseudo_inverse(&s.psi1, Parity::Odd, 1).unwrap();
    let want: Vec<f64> = s.psi1.iter().map(|v| -v / l0).collect();
    assert!(sup_diff(&p1, &want) < 1e-8, "{}", sup_diff(&p1, &want));
    let p2 = s.shifted_pseudo_inverse(&s.psi1, Parity::Odd, 2).unwrap();
    let want: Vec<f64> = s.psi1.iter().map(|v| v / (l0 * l0)).collect();
    assert!(sup_diff(&p2, &want) < 1e-8);

    for power in [1, 2] {
        let out = s.shifted_pseudo_inverse(&s.psi2, Parity::Even, power).unwrap();
        let k = (s.lambda2 - l0).powi(power as i32);
        let want: Vec<f64> = s.psi2.iter().map(|v| v / k).collect();
        assert!(sup_diff(&out, &want) < 1e-8 * sup(&want), "power {power}");
        assert!(s.inner(&out, &s.psi0).abs() < 1e-12);
    }

    assert!(matches!(
        s.shifted_pseudo_inverse(&s.psi0, Parity::Even, 2),
        Err(FchError::Fredholm(_))
    ));
    assert!(s.shifted_pseudo_inverse(&s.psi2, Parity::Even, 3).is_err());
}

#[test]
fn eigenfunctions_export_as_csv() {
    let b = coarse();
    let csv = b.spectral.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,psi0,psi1"));
    assert_eq!(lines.count(), b.grid.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn projection_onto_the_leading_pair_is_idempotent(
        coeffs in proptest::collection::vec(-1.0f64..1.0, 8)
    ) {
        let b = coarse();
        let s = &b.spectral;
        let g = s.grid();
        let nodes = g.nodes();
        // even and odd parts of a random smooth function
        let fe: Vec<f64> = nodes.iter().map(|r| (0..4).map(|k| coeffs[k] * (-(r - k as f64).powi(2)).exp() * 0.5
            + coeffs[k] * (-(r + k as f64).powi(2)).exp() * 0.5).sum()).collect();
        let fo: Vec<f64> = nodes.iter().map(|r| (0..4).map(|k| coeffs[4 + k] * ((-(r - k as f64).powi(2)).exp()
            - (-(r + k as f64).powi(2)).exp()) * 0.5).sum()).collect();
        let project = |fe: &[f64], fo: &[f64]| {
            let a = g.inner(fe, Parity::Even, &s.psi0, Parity::Even);
            let c = g.inner(fo, Parity::Odd, &s.psi1, Parity::Odd);
            let pe: Vec<f64> = s.psi0.iter().map(|v| a * v).collect();
            let po: Vec<f64> = s.psi1.iter().map(|v| c * v).collect();
            (pe, po)
        };
        let (pe, po) = project(&fe, &fo);
        let (ppe, ppo) = project(&pe, &po);
        prop_assert!(sup_diff(&pe, &ppe) < 1e-10);
        prop_assert!(sup_diff(&po, &ppo) < 1e-10);
    }
}
