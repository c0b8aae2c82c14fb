mod common;

use common::{sup, sup_diff};
use fch_bilayer::tangential::{
    apply_operator_fd, closed_form_envelope, closed_form_gk0, convolve_g, convolve_gk0, greens_eval, greens_params,
    kbar0, xi_fourier, FourierPair, GreensParams, Inhomogeneity, TGrid,
};
use fch_bilayer::FchError;
use num_complex::Complex64;
use proptest::prelude::*;

// Adaptive quadrature at 30 digits of int b(s) cos s over [-2, 2], with
// b(s) = exp(-1 / (1 - s^2/4)), divided by int b for the unit-mass bump.
const XI_O1_UNIT_T2: f64 = 0.717115572954238;
const XI_E1_DBUMP_T2: f64 = 0.636789759739022;
// Symbolic derivatives of b at 0 and 0.7: b'''' + 2 b''.
const K0_AT_0: f64 = -0.275909580878582 - 2.0 * 0.183939720585721;
const K0_AT_07: f64 = -0.370039889414959 - 2.0 * 0.257664069726528;

// Representative undulation-regime inputs.
const C1: f64 = 0.1557;
const ALPHA0: f64 = -0.1034;

fn params(eps: f64) -> GreensParams {
    greens_params(eps, C1, ALPHA0).unwrap()
}

fn zero_xi() -> Inhomogeneity {
    Inhomogeneity::tabulated(-1.0, 0.1, vec![0.0; 21]).unwrap()
}

fn smooth_bump(t: f64, w: f64) -> f64 {
    let x = t / w;
    if x.abs() < 1.0 {
        (-1.0 / (1.0 - x * x)).exp()
    } else {
        0.0
    }
}

#[test]
fn fourier_examples() {
    let fp = xi_fourier(&Inhomogeneity::bump_unit_mass(2.0).unwrap()).unwrap();
    assert_eq!(fp.xi_e1, 0.0);
    assert!((fp.xi_o1 - XI_O1_UNIT_T2).abs() < 1e-10, "{}", fp.xi_o1);
    let fp = xi_fourier(&Inhomogeneity::dbump_localized(2.0, 1.0).unwrap()).unwrap();
    assert!((fp.xi_e1 - XI_E1_DBUMP_T2).abs() < 1e-10, "{}", fp.xi_e1);
    assert!(fp.xi_o1.abs() < 1e-15);
    assert!((fp.magnitude.powi(2) - fp.xi_e1.powi(2) - fp.xi_o1.powi(2)).abs() < 1e-15);
    let fp = xi_fourier(&zero_xi()).unwrap();
    assert_eq!((fp.xi_e1, fp.xi_o1, fp.magnitude), (0.0, 0.0, 0.0));
    assert!(Inhomogeneity::bump_transitional(0.0, 1.0).is_err());
    assert!(Inhomogeneity::dbump_localized(-1.0, 1.0).is_err());
}

#[test]
fn localized_and_transitional_masses() {
    assert_eq!(Inhomogeneity::dbump_localized(2.0, 1.0).unwrap().mass(), 0.0);
    assert!((Inhomogeneity::bump_unit_mass(2.0).unwrap().mass() - 1.0).abs() < 1e-12);
    let xi = Inhomogeneity::bump_transitional(1.5, 0.7).unwrap();
    for t in [-1.5, -2.0, 1.5, 3.0] {
        assert_eq!(xi.xi_prime(t), 0.0);
    }
}

#[test]
fn greens_params_examples() {
    let mut prev: Option<(f64, f64)> = None;
    for eps in [1e-2, 1e-4, 1e-6] {
        let g = params(eps);
        assert!((g.a - 1.0).abs() < 2.0 * eps);
        assert!(g.b < 2.0 * (0.11 * eps).sqrt());
        if let Some((a, b)) = prev {
            assert!((g.a - 1.0f64).abs() < (a - 1.0f64).abs() && g.b < b);
        }
        prev = Some((g.a, g.b));
    }
    let g = greens_params(1e-4, 0.0, -1.0).unwrap();
    assert!((g.b - 1e-2).abs() < 1e-5);
    for (c1, alpha0, eps) in [(0.0, -1.0, 1e-4), (C1, ALPHA0, 1e-2), (-0.3, -2.0, 3e-3)] {
        let g = greens_params(eps, c1, alpha0).unwrap();
        assert!(g.symbol(Complex64::new(-g.b, g.a)).norm() < 1e-12);
    }
    assert!(matches!(greens_params(1e-2, C1, 0.3), Err(FchError::Regime(_))));
    assert!(greens_params(0.0, C1, ALPHA0).is_err());
}

#[test]
fn greens_function_examples() {
    let g = params(1e-2);
    let g0 = 1.0 / (4.0 * g.b * (g.a * g.a + g.b * g.b));
    assert!((greens_eval(&g, 0.0) - g0).abs() < 1e-12 * g0);
    for t in [0.1, 1.7, 9.3, 40.0] {
        assert_eq!(greens_eval(&g, t), greens_eval(&g, -t));
    }
}

fn inversion_error(g: &GreensParams, h: f64) -> f64 {
    let grid = TGrid::symmetric(g.required_half_length(), h);
    let f: Vec<f64> = grid.nodes().iter().map(|t| smooth_bump(*t, 1.5)).collect();
    let u = convolve_g(g, &grid, &f).unwrap();
    let back = apply_operator_fd(g, &grid, &u);
    // compare on the interior
    (2..grid.n - 2).map(|i| (back[i] - f[i]).abs()).fold(0.0, f64::max)
}

#[test]
fn greens_function_inverts_the_operator() {
    let g = params(1e-2);
    let e1 = inversion_error(&g, 0.02);
    let e2 = inversion_error(&g, 0.01);
    assert!(e2 < 5e-3, "{e2}");
    let order = (e1 / e2).log2();
    assert!(order > 1.8, "{e1} {e2} {order}");
}

#[test]
fn kbar0_examples() {
    let grid = TGrid::symmetric(3.0, 0.1);
    assert_eq!(sup(&kbar0(-1.3, &zero_xi(), &grid)), 0.0);

    let xi = Inhomogeneity::dbump_localized(2.0, 1.0).unwrap();
    let probe = TGrid { t0: 0.0, h: 0.7, n: 2 };
    let k = kbar0(1.0, &xi, &probe);
    assert!((k[0] - K0_AT_0).abs() < 1e-12, "{}", k[0]);
    assert!((k[1] - K0_AT_07).abs() < 1e-12, "{}", k[1]);

    let fine = TGrid::symmetric(2.5, 1e-3);
    for xi in [xi, Inhomogeneity::bump_unit_mass(2.0).unwrap()] {
        let k = kbar0(-1.3, &xi, &fine);
        let integral: f64 = k.iter().sum::<f64>() * fine.h;
        assert!(integral.abs() < 1e-9, "{integral}");
    }
}

#[test]
fn narrow_sources_approach_the_greens_function() {
    let g = params(1e-2);
    let grid = TGrid::symmetric(g.required_half_length(), 1e-3);
    let probes = [-3.0, -0.5, 0.0, 0.8, 2.0, 7.5];
    let mut errs = Vec::new();
    for w in [0.2, 0.1, 0.05] {
        let mut f: Vec<f64> = grid.nodes().iter().map(|t| smooth_bump(*t, w)).collect();
        let mass: f64 = f.iter().sum::<f64>() * grid.h;
        f.iter_mut().for_each(|v| *v /= mass);
        let u = convolve_g(&g, &grid, &f).unwrap();
        let err = probes
            .iter()
            .map(|t| {
                let i = ((t - grid.t0) / grid.h).round() as usize;
                (u[i] - greens_eval(&g, grid.node(i))).abs()
            })
            .fold(0.0, f64::max);
        errs.push(err);
    }
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    assert!(errs[2] < 1e-3 * greens_eval(&g, 0.0), "{errs:?}");
}

#[test]
fn convolution_is_linear_and_translation_covariant() {
    let g = params(1e-2);
    let grid = TGrid::symmetric(g.required_half_length(), 0.01);
    let nodes = grid.nodes();
    let f: Vec<f64> = nodes.iter().map(|t| smooth_bump(*t, 1.0)).collect();
    let k: Vec<f64> = nodes.iter().map(|t| t * smooth_bump(*t - 0.5, 2.0)).collect();
    let combo: Vec<f64> = f.iter().zip(&k).map(|(a, b)| 3.0 * a - 0.5 * b).collect();
    let (cf, ck) = (convolve_g(&g, &grid, &f).unwrap(), convolve_g(&g, &grid, &k).unwrap());
    let lin: Vec<f64> = cf.iter().zip(&ck).map(|(a, b)| 3.0 * a - 0.5 * b).collect();
    assert!(sup_diff(&convolve_g(&g, &grid, &combo).unwrap(), &lin) < 1e-12 * sup(&lin));

    // shifting f by 50 nodes shifts G * f by 50 nodes
    let s = 50;
    let shifted: Vec<f64> = nodes.iter().map(|t| smooth_bump(*t - s as f64 * grid.h, 1.0)).collect();
    let cs = convolve_g(&g, &grid, &shifted).unwrap();
    let mid = grid.n / 2;
    let err = (mid - 2000..mid + 2000)
        .map(|i| (cs[i + s] - cf[i]).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-10 * sup(&cf), "{err}");
}

#[test]
fn short_domains_are_rejected() {
    let g = params(1e-2);
    let grid = TGrid::symmetric(0.5 * g.required_half_length(), 0.05);
    let f = vec![0.0; grid.n];
    assert!(matches!(convolve_g(&g, &grid, &f), Err(FchError::Truncation(_))));
}

#[test]
fn undulation_amplitude_grows_like_inverse_root_eps() {
    let xi = Inhomogeneity::dbump_localized(2.0, 1.0).unwrap();
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for eps in [1e-2, 2.5e-3, 6.25e-4] {
        let g = params(eps);
        let grid = TGrid::symmetric(g.required_half_length(), 0.05);
        let v = convolve_gk0(&g, -1.3, &xi, &grid).unwrap();
        x.push(eps);
        y.push(sup(&v));
    }
    let slope = fch_bilayer::undulation2d::loglog_slope(&x, &y);
    assert!((slope + 0.5).abs() < 0.1, "{slope} {y:?}");
}

#[test]
fn closed_form_examples() {
    let g = params(1e-2);
    let zero = FourierPair::new(0.0, 0.0);
    let fp = FourierPair::new(0.4, -0.3);
    for t in [-20.0, -1.0, 0.0, 0.3, 5.0, 60.0] {
        assert_eq!(closed_form_gk0(&g, -1.3, &zero, t), 0.0);
        let v = closed_form_gk0(&g, -1.3, &fp, t);
        assert!(v.abs() <= closed_form_envelope(&g, -1.3, &fp, t) * (1.0 + 1e-14));
    }
}

proptest! {
    #[test]
    fn phase_identity(e1 in -2.0f64..2.0, o1 in -2.0f64..2.0, s in -50.0f64..50.0) {
        let fp = FourierPair::new(e1, o1);
        let lhs = e1 * s.cos() + o1 * s.sin();
        let rhs = fp.magnitude * (s - fp.phi()).cos();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        prop_assert!((fp.theta1 + fp.phi()).abs() < 1e-15);
    }

    #[test]
    fn greens_function_is_even(t in -200.0f64..200.0, eps in 1e-4f64..2e-2) {
        let g = params(eps);
        prop_assert_eq!(greens_eval(&g, t), greens_eval(&g, -t));
    }
}

// The omitted far-field terms are O(1) against an O(eps^-1/2) leading term.
#[test]
fn closed_form_error_decays_like_root_eps() {
    let xi = Inhomogeneity::dbump_localized(2.0, 1.0).unwrap();
    let fp = xi_fourier(&xi).unwrap();
    let ladder = [1e-2, 2.5e-3, 6.25e-4];
    let mut rel = Vec::new();
    for eps in ladder {
        let g = params(eps);
        let grid = TGrid::symmetric(g.required_half_length(), 2.0 * std::f64::consts::PI / (200.0 * g.a));
        let conv = convolve_gk0(&g, -1.3, &xi, &grid).unwrap();
        let (mut err, mut size) = (0.0f64, 0.0f64);
        for (i, v) in conv.iter().enumerate() {
            let t = grid.node(i);
            if t.abs() <= 2.0 / g.b {
                err = err.max((v - closed_form_gk0(&g, -1.3, &fp, t)).abs());
                size = size.max(v.abs());
            }
        }
        rel.push(err / size);
    }
    let slope = fch_bilayer::undulation2d::loglog_slope(&ladder, &rel);
    assert!((slope - 0.5).abs() < 0.1, "{slope} {rel:?}");
}
