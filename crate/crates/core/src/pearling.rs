//! Scalar pearling diagnostics (beta0, alpha0, c1, Psi0) and the spectrum
//! of the quadratic operator pencil near mu = -lambda0.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FchError, Result};
use crate::grid::Parity;
use crate::linalg::BandMatrix;
use crate::potential::PotentialSpec;
use crate::profile1d::{first_order_seed, solve_bilayer_eps, solve_u1, BilayerProfile, ProfileParams};
use crate::spectral1d::{build_operator, SpectralData};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Beta0 {
    /// <psi0, W'(u0)>
    pub direct: f64,
    /// (1/lambda0) int W'''(u0) psi0 (u0')^2
    pub fredholm: f64,
    /// -<psi0', u0'>
    pub via_translation: f64,
    /// <psi0, u0''>
    pub via_second_derivative: f64,
}

/// beta0 by four routes. The translation mode u0' enters un-normalized.
pub fn compute_beta0(spectral: &SpectralData, profile_u0: &BilayerProfile, spec: &PotentialSpec) -> Beta0 {
    let g = spectral.grid();
    let u0 = &profile_u0.values;
    let psi0 = &spectral.psi0;
    let du0 = &spectral.translation_mode;
    let dw: Vec<f64> = u0.iter().map(|u| spec.dw(*u)).collect();
    let direct = g.inner(psi0, Parity::Even, &dw, Parity::Even);
    let integrand: Vec<f64> = (0..g.len())
        .map(|j| spec.d3w(u0[j]) * psi0[j] * du0[j] * du0[j])
        .collect();
    let fredholm = g.integrate_even(&integrand) / spectral.lambda0;
    let dpsi0 = g.d1(psi0, Parity::Even);
    let via_translation = -g.inner(&dpsi0, Parity::Odd, du0, Parity::Odd);
    let d2u0 = g.d2(u0, Parity::Even);
    let via_second_derivative = g.inner(psi0, Parity::Even, &d2u0, Parity::Even);
    Beta0 {
        direct,
        fredholm,
        via_translation,
        via_second_derivative,
    }
}

fn w0_of(u1: &BilayerProfile) -> &[f64] {
    &u1.aux
}

/// alpha0 = (1/(4 lambda0^2)) <(W'''(u0) w0 - eta_d W''(u0)) psi0, psi0>.
pub fn compute_alpha0(spectral: &SpectralData, u1: &BilayerProfile, spec: &PotentialSpec, eta_d: f64) -> f64 {
    let g = spectral.grid();
    let u0 = spectral.background();
    let w0 = w0_of(u1);
    let psi0 = &spectral.psi0;
    let f: Vec<f64> = (0..g.len())
        .map(|j| (spec.d3w(u0[j]) * w0[j] - eta_d * spec.d2w(u0[j])) * psi0[j] * psi0[j])
        .collect();
    g.integrate_even(&f) / (4.0 * spectral.lambda0 * spectral.lambda0)
}

/// Well-only coefficients with alpha0 = alpha01 gamma - alpha02 eta_d.
pub fn alpha_coefficients(spectral: &SpectralData, spec: &PotentialSpec) -> Result<(f64, f64)> {
    let g = spectral.grid();
    let u0 = spectral.background();
    let psi0 = &spectral.psi0;
    let one = vec![1.0; g.len()];
    let inv_one = spectral.solve_even(&one)?;
    let dw: Vec<f64> = u0.iter().map(|u| spec.dw(*u)).collect();
    let inv_dw = spectral.solve_even(&dw)?;
    let scale = 1.0 / (4.0 * spectral.lambda0 * spectral.lambda0);
    let f1: Vec<f64> = (0..g.len())
        .map(|j| spec.d3w(u0[j]) * inv_one[j] * psi0[j] * psi0[j])
        .collect();
    let f2: Vec<f64> = (0..g.len())
        .map(|j| (spec.d3w(u0[j]) * inv_dw[j] + spec.d2w(u0[j])) * psi0[j] * psi0[j])
        .collect();
    Ok((scale * g.integrate_even(&f1), scale * g.integrate_even(&f2)))
}

/// c1 = (eta1 - 2 <psi0, W'''(u0) u1 psi0>) / lambda0.
pub fn compute_c1(spectral: &SpectralData, spec: &PotentialSpec, u1: &BilayerProfile, eta1: f64) -> f64 {
    let g = spectral.grid();
    let u0 = spectral.background();
    let psi0 = &spectral.psi0;
    let f: Vec<f64> = (0..g.len())
        .map(|j| spec.d3w(u0[j]) * u1.values[j] * psi0[j] * psi0[j])
        .collect();
    (eta1 - 2.0 * g.integrate_even(&f)) / spectral.lambda0
}

/// Right-hand side whose shifted double inverse defines Psi0.
pub fn psi0_correction_rhs(
    spectral: &SpectralData,
    u1: &BilayerProfile,
    alpha0: f64,
    eta_d: f64,
    spec: &PotentialSpec,
) -> Vec<f64> {
    let u0 = spectral.background();
    let psi0 = &spectral.psi0;
    let w0 = w0_of(u1);
    let lam = spectral.lambda0;
    let n = psi0.len();
    let m: Vec<f64> = (0..n).map(|j| spec.d3w(u0[j]) * u1.values[j] * psi0[j]).collect();
    let lm = spectral.apply(&m, Parity::Even);
    (0..n)
        .map(|j| {
            -4.0 * lam * lam * alpha0 * psi0[j] - (lm[j] - lam * m[j])
                + (spec.d3w(u0[j]) * w0[j] - eta_d * spec.d2w(u0[j])) * psi0[j]
        })
        .collect()
}

/// First-order correction Psi0 of the pearling eigenfunction.
pub fn compute_psi0_correction(
    spectral: &SpectralData,
    u1: &BilayerProfile,
    alpha0: f64,
    eta_d: f64,
    spec: &PotentialSpec,
) -> Result<Vec<f64>> {
    let rhs = psi0_correction_rhs(spectral, u1, alpha0, eta_d, spec);
    let g = spectral.grid();
    let nrm = g.norm(&rhs, Parity::Even);
    if nrm == 0.0 {
        return Ok(rhs);
    }
    let c = spectral.inner(&rhs, &spectral.psi0);
    if c.abs() > 1e-5 * nrm {
        return Err(FchError::Fredholm(format!(
            "<rhs, psi0> = {c:e} against |rhs| = {nrm:e}; alpha0 inconsistent"
        )));
    }
    spectral.shifted_pseudo_inverse(&rhs, Parity::Even, 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Pearling,
    Undulation,
    Degenerate,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Pearling => "pearling",
            Regime::Undulation => "undulation",
            Regime::Degenerate => "degenerate",
        })
    }
}

pub const REGIME_TOL: f64 = 1e-8;

pub fn classify(alpha0: f64, tol: f64) -> Regime {
    if alpha0 > tol {
        Regime::Pearling
    } else if alpha0 < -tol {
        Regime::Undulation
    } else {
        Regime::Degenerate
    }
}

/// Parameters of the pencil mu^2 + mu (2 L_h + eps eta1) + (L_h + eps eta1) L_h + eps V.
#[derive(Clone, Copy, Debug)]
pub struct PencilParams {
    pub eps: f64,
    pub eta1: f64,
    pub eta_d: f64,
    /// lambda0 of the eps = 0 operator; fixes mu = lambda0 lambda^2.
    pub lambda0: f64,
}

/// The pencil on one parity block, kept in factored form: with
/// y = (mu + L) v it reads (mu + L + eps eta1) y + eps V v = 0.
pub struct Pencil {
    pub l: BandMatrix<f64>,
    /// eps (eta_d W''(u_h) - W'''(u_h) w_h)
    pub v: Vec<f64>,
    pub shift: f64,
}

/// Assembles the pencil from L_h on `parity`. `w_h` is (u_h'' - W'(u_h))/eps,
/// or w0 at eps = 0.
pub fn assemble_pencil(
    spectral_h: &SpectralData,
    spec: &PotentialSpec,
    p: &PencilParams,
    w_h: &[f64],
    parity: Parity,
) -> Pencil {
    let l = spectral_h.block(parity).clone();
    let off = spectral_h.grid().block_offset(parity);
    let uh = spectral_h.background();
    let v = (0..l.dim())
        .map(|i| {
            let u = uh[i + off];
            p.eps * (p.eta_d * spec.d2w(u) - spec.d3w(u) * w_h[i + off])
        })
        .collect();
    Pencil {
        l,
        v,
        shift: p.eps * p.eta1,
    }
}

impl Pencil {
    pub fn dim(&self) -> usize {
        self.l.dim()
    }

    /// Q(mu) as a complex band matrix.
    pub fn evaluate(&self, mu: Complex64) -> BandMatrix<Complex64> {
        let m = self.dim();
        let mut a = BandMatrix::<Complex64>::zeros(m, 2, 2);
        let mut b = BandMatrix::<Complex64>::zeros(m, 2, 2);
        for i in 0..m {
            for j in i.saturating_sub(2)..=(i + 2).min(m - 1) {
                let lij = Complex64::new(self.l.get(i, j), 0.0);
                a.set(i, j, lij);
                b.set(i, j, lij);
            }
            a.add(i, i, mu + self.shift);
            b.add(i, i, mu);
        }
        let mut q = a.mul_band(&b);
        for i in 0..m {
            q.add(i, i, Complex64::new(self.v[i], 0.0));
        }
        q
    }

    /// Linearization A - sigma with unknowns interleaved as (v_i, y_i):
    /// mu v = -L v + y,  mu y = -V v - (L + eps eta1) y.
    fn linearization_minus(&self, sigma: f64) -> BandMatrix<f64> {
        let m = self.dim();
        let mut a = BandMatrix::zeros(2 * m, 4, 4);
        for i in 0..m {
            for j in i.saturating_sub(2)..=(i + 2).min(m - 1) {
                let lij = self.l.get(i, j);
                a.add(2 * i, 2 * j, -lij);
                a.add(2 * i + 1, 2 * j + 1, -lij);
            }
            a.add(2 * i, 2 * i, -sigma);
            a.add(2 * i, 2 * i + 1, 1.0);
            a.add(2 * i + 1, 2 * i, -self.v[i]);
            a.add(2 * i + 1, 2 * i + 1, -self.shift - sigma);
        }
        a
    }

    /// Eigenvalues mu near the real shift `sigma` by shift-invert Arnoldi on
    /// the linearization, sorted by distance to `sigma`.
    pub fn eigenvalues_near(&self, sigma: f64, krylov: usize) -> Result<Vec<Complex64>> {
        let n2 = 2 * self.dim();
        let kdim = krylov.min(n2 - 1).max(2);
        let lu = self.linearization_minus(sigma).lu()?;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(kdim + 1);
        let mut v0: Vec<f64> = (0..n2).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618034).sin()).collect();
        let nv = dot(&v0, &v0).sqrt();
        v0.iter_mut().for_each(|v| *v /= nv);
        basis.push(v0);
        let mut h = DMatrix::<f64>::zeros(kdim + 1, kdim);
        let mut steps = kdim;
        for j in 0..kdim {
            let mut w = lu.solve(&basis[j]);
            for _ in 0..2 {
                for (i, b) in basis.iter().enumerate() {
                    let c = dot(&w, b);
                    h[(i, j)] += c;
                    for (wv, bv) in w.iter_mut().zip(b) {
                        *wv -= c * bv;
                    }
                }
            }
            let nw = dot(&w, &w).sqrt();
            h[(j + 1, j)] = nw;
            if nw < 1e-14 {
                steps = j + 1;
                break;
            }
            w.iter_mut().for_each(|v| *v /= nw);
            basis.push(w);
        }
        let hk = h.view((0, 0), (steps, steps)).into_owned();
        let theta = hk.complex_eigenvalues();
        let mut mus: Vec<Complex64> = theta
            .iter()
            .filter(|t| t.norm() > 1e-300)
            .map(|t| Complex64::new(sigma, 0.0) + 1.0 / *t)
            .collect();
        mus.sort_by(|a, b| {
            let da = (a - sigma).norm();
            let db = (b - sigma).norm();
            da.partial_cmp(&db).unwrap().then(a.im.partial_cmp(&b.im).unwrap())
        });
        Ok(mus)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, Serialize)]
pub struct PencilEigs {
    pub mu: Vec<Complex64>,
    pub lambda: Vec<Complex64>,
}

pub const KRYLOV_DIM: usize = 60;

/// Relative offset of the Arnoldi shift from the target; keeps the shifted
/// linearization nonsingular when the target is an exact eigenvalue.
const SHIFT_OFFSET: f64 = 0.01;

/// The two mu nearest -lambda0 on the even block and the corresponding four
/// lambda = +-sqrt(mu / lambda0).
pub fn pencil_eigenvalues(
    spectral_h: &SpectralData,
    spec: &PotentialSpec,
    p: &PencilParams,
    w_h: &[f64],
) -> Result<PencilEigs> {
    let pencil = assemble_pencil(spectral_h, spec, p, w_h, Parity::Even);
    let center = -p.lambda0;
    let mut mus = pencil.eigenvalues_near(center - SHIFT_OFFSET * p.lambda0, KRYLOV_DIM)?;
    mus.sort_by(|a, b| (a - center).norm().partial_cmp(&(b - center).norm()).unwrap());
    let near: Vec<Complex64> = mus.into_iter().take(2).collect();
    if near.len() < 2 || near.iter().any(|m| (m - center).norm() > 0.5 * p.lambda0) {
        return Err(FchError::Tracking(format!(
            "fewer than two pencil eigenvalues within {} of mu = {center}",
            0.5 * p.lambda0
        )));
    }
    let mut mu = near;
    mu.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap().then(a.re.partial_cmp(&b.re).unwrap()));
    let mut lambda = Vec::with_capacity(4);
    for m in &mu {
        let r = (m / p.lambda0).sqrt();
        lambda.push(r);
        lambda.push(-r);
    }
    lambda.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap().then(a.re.partial_cmp(&b.re).unwrap()));
    Ok(PencilEigs { mu, lambda })
}

/// Number of pencil eigenvalues on `parity` within `radius` of `center`.
pub fn pencil_multiplicity(
    spectral_h: &SpectralData,
    spec: &PotentialSpec,
    p: &PencilParams,
    w_h: &[f64],
    parity: Parity,
    center: f64,
    radius: f64,
) -> Result<usize> {
    let pencil = assemble_pencil(spectral_h, spec, p, w_h, parity);
    let shift = center - SHIFT_OFFSET * p.lambda0;
    let mus = pencil.eigenvalues_near(shift, KRYLOV_DIM)?;
    Ok(mus.iter().filter(|m| (*m - center).norm() < radius).count())
}

#[derive(Clone, Debug, Serialize)]
pub struct PencilTrack {
    pub eps: f64,
    pub lambda: Vec<Complex64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PearlingReport {
    pub lambda0: f64,
    pub beta0: Beta0,
    pub alpha0: f64,
    pub alpha01: f64,
    pub alpha02: f64,
    pub c1: f64,
    pub regime: Regime,
    pub pencil: Vec<PencilTrack>,
    #[serde(skip)]
    pub psi0_correction: Vec<f64>,
}

impl PearlingReport {
    pub fn tracks_csv(&self) -> String {
        let mut s = String::from("eps,re_lambda,im_lambda\n");
        for t in &self.pencil {
            for l in &t.lambda {
                let _ = writeln!(s, "{:e},{:e},{:e}", t.eps, l.re, l.im);
            }
        }
        s
    }
}

/// Scalar diagnostics for one (gamma, eta1, eta_d) and the pencil's tracked
/// eigenvalues at each eps (in the given order). eps = 0 uses L0 and w0.
pub fn pearling_report(
    spec: &PotentialSpec,
    u0: &BilayerProfile,
    spectral: &SpectralData,
    gamma: f64,
    eta1: f64,
    eta_d: f64,
    eps_list: &[f64],
) -> Result<PearlingReport> {
    let u1 = solve_u1(spectral, spec, gamma, eta_d)?;
    let alpha0 = compute_alpha0(spectral, &u1, spec, eta_d);
    let (alpha01, alpha02) = alpha_coefficients(spectral, spec)?;
    let psi0_correction = compute_psi0_correction(spectral, &u1, alpha0, eta_d, spec)?;
    let pencil = eps_list
        .par_iter()
        .map(|&eps| {
            if eps < 0.0 {
                return Err(FchError::InvalidArgument(format!("eps must be >= 0, got {eps}")));
            }
            let p = PencilParams {
                eps,
                eta1,
                eta_d,
                lambda0: spectral.lambda0,
            };
            let eigs = if eps == 0.0 {
                pencil_eigenvalues(spectral, spec, &p, &u1.aux)?
            } else {
                let params = ProfileParams::new(eps, gamma, eta1, eta_d);
                let uh = solve_bilayer_eps(spec, &u0.grid, params, &first_order_seed(u0, &u1, params))?;
                let sph = build_operator(&uh, spec)?;
                let wh: Vec<f64> = uh.aux.iter().map(|v| v / eps).collect();
                pencil_eigenvalues(&sph, spec, &p, &wh)?
            };
            Ok(PencilTrack {
                eps,
                lambda: eigs.lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PearlingReport {
        lambda0: spectral.lambda0,
        beta0: compute_beta0(spectral, u0, spec),
        alpha0,
        alpha01,
        alpha02,
        c1: compute_c1(spectral, spec, &u1, eta1),
        regime: classify(alpha0, REGIME_TOL),
        pencil,
        psi0_correction,
    })
}
