//! Tangential reduction: the defect profile xi, its first Fourier
//! coefficients, the fourth-order operator G = d^4 + (2 + eps c1) d^2
//! + (1 + eps c1 - 4 eps alpha0), its Green's function and the leading
//! undulation G * K0.

use std::fmt::Write as _;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FchError, Result};
use crate::quadrature;

/// Truncated Taylor series in one variable, used to differentiate the bump
/// profiles exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Jet([f64; 6]);

impl Jet {
    fn constant(c: f64) -> Self {
        let mut a = [0.0; 6];
        a[0] = c;
        Jet(a)
    }

    fn recip(self) -> Self {
        let a = self.0;
        let mut r = [0.0; 6];
        r[0] = 1.0 / a[0];
        for k in 1..6 {
            let mut s = 0.0;
            for j in 1..=k {
                s += a[j] * r[k - j];
            }
            r[k] = -s / a[0];
        }
        Jet(r)
    }

    fn exp(self) -> Self {
        let a = self.0;
        let mut e = [0.0; 6];
        e[0] = a[0].exp();
        for k in 1..6 {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * a[j] * e[k - j];
            }
            e[k] = s / k as f64;
        }
        Jet(e)
    }

    /// k-th derivative at the expansion point.
    fn derivative(&self, k: usize) -> f64 {
        let mut f = 1.0;
        for m in 2..=k {
            f *= m as f64;
        }
        self.0[k] * f
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x += y;
        }
        Jet(r)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        let mut r = self.0;
        for (x, y) in r.iter_mut().zip(o.0) {
            *x -= y;
        }
        Jet(r)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut r = [0.0; 6];
        for i in 0..6 {
            for j in 0..6 - i {
                r[i + j] += self.0[i] * o.0[j];
            }
        }
        Jet(r)
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut r = o.0;
        r.iter_mut().for_each(|v| *v *= self);
        Jet(r)
    }
}

/// Derivatives 0..=5 of exp(-1/(1 - (s/T)^2)) at s (zero outside |s| < T).
fn bump_derivatives(s: f64, half_width: f64) -> [f64; 6] {
    let x = s / half_width;
    if x.abs() >= 1.0 {
        return [0.0; 6];
    }
    let mut xa = [0.0; 6];
    xa[0] = x;
    xa[1] = 1.0 / half_width;
    let xj = Jet(xa);
    let q = Jet::constant(1.0) - xj * xj;
    let b = (-1.0 * q.recip()).exp();
    let mut out = [0.0; 6];
    for (k, o) in out.iter_mut().enumerate() {
        *o = b.derivative(k);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InhomogeneityKind {
    /// xi' is a bump: xi steps by the bump mass.
    BumpTransitional,
    /// xi is a bump: xi' has zero mass.
    DbumpLocalized,
    Tabulated,
}

/// Natural cubic spline through uniformly spaced samples.
#[derive(Clone, Debug, PartialEq)]
struct Spline {
    t0: f64,
    h: f64,
    y: Vec<f64>,
    m: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Spline {
    fn new(t0: f64, h: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives
            let k = n - 2;
            let mut c = vec![0.0; k];
            let mut d = vec![0.0; k];
            for i in 0..k {
                let rhs = 6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) / (h * h);
                let (ci, di) = if i == 0 {
                    (0.25, rhs / 4.0)
                } else {
                    let denom = 4.0 - c[i - 1];
                    (1.0 / denom, (rhs - d[i - 1]) / denom)
                };
                c[i] = ci;
                d[i] = di;
            }
            for i in (0..k).rev() {
                m[i + 1] = d[i] - if i + 1 < k { c[i] * m[i + 2] } else { 0.0 };
            }
        }
        let mut cumulative = vec![0.0; n];
        for i in 1..n {
            let seg = 0.5 * h * (y[i - 1] + y[i]) - h.powi(3) * (m[i - 1] + m[i]) / 24.0;
            cumulative[i] = cumulative[i - 1] + seg;
        }
        Spline {
            t0,
            h,
            y,
            m,
            cumulative,
        }
    }

    fn end(&self) -> f64 {
        self.t0 + self.h * (self.y.len() - 1) as f64
    }

    /// (integral from t0, value, d1, d2, d3)
    fn eval(&self, t: f64) -> [f64; 5] {
        let n = self.y.len();
        if t <= self.t0 {
            return [0.0; 5];
        }
        if t >= self.end() {
            return [self.cumulative[n - 1], 0.0, 0.0, 0.0, 0.0];
        }
        let i = (((t - self.t0) / self.h).floor() as usize).min(n - 2);
        let h = self.h;
        let a = (self.t0 + (i + 1) as f64 * h - t) / h;
        let b = 1.0 - a;
        let (y0, y1, m0, m1) = (self.y[i], self.y[i + 1], self.m[i], self.m[i + 1]);
        let value = a * y0 + b * y1 + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        let d1 = (y1 - y0) / h - (3.0 * a * a - 1.0) * h * m0 / 6.0 + (3.0 * b * b - 1.0) * h * m1 / 6.0;
        let d2 = a * m0 + b * m1;
        let d3 = (m1 - m0) / h;
        let integral = self.cumulative[i]
            + h * (y0 * (1.0 - a * a) / 2.0 + y1 * b * b / 2.0)
            + h.powi(3) / 6.0 * (m0 * (-(a.powi(4)) / 4.0 + a * a / 2.0 - 0.25) + m1 * (b.powi(4) / 4.0 - b * b / 2.0));
        [integral, value, d1, d2, d3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inhomogeneity {
    pub kind: InhomogeneityKind,
    pub half_width: f64,
    pub amplitude: f64,
    spline: Option<Spline>,
    mass: f64,
}

impl Inhomogeneity {
    pub fn bump_transitional(half_width: f64, amplitude: f64) -> Result<Self> {
        check_width(half_width)?;
        let mut x = Inhomogeneity {
            kind: InhomogeneityKind::BumpTransitional,
            half_width,
            amplitude,
            spline: None,
            mass: 0.0,
        };
        x.mass = amplitude * bump_mass(half_width);
        Ok(x)
    }

    /// Transitional bump scaled so that the total variation of xi is 1.
    pub fn bump_unit_mass(half_width: f64) -> Result<Self> {
        check_width(half_width)?;
        Self::bump_transitional(half_width, 1.0 / bump_mass(half_width))
    }

    pub fn dbump_localized(half_width: f64, amplitude: f64) -> Result<Self> {
        check_width(half_width)?;
        Ok(Inhomogeneity {
            kind: InhomogeneityKind::DbumpLocalized,
            half_width,
            amplitude,
            spline: None,
            mass: 0.0,
        })
    }

    /// xi' sampled on a uniform grid starting at `t0`; xi' is taken to vanish
    /// outside the sampled interval.
    pub fn tabulated(t0: f64, h: f64, xi_prime: Vec<f64>) -> Result<Self> {
        if xi_prime.len() < 4 || !(h > 0.0) {
            return Err(FchError::InvalidArgument(
                "tabulated xi' needs >= 4 samples and h > 0".into(),
            ));
        }
        let spline = Spline::new(t0, h, xi_prime);
        let half_width = t0.abs().max(spline.end().abs());
        let mass = spline.eval(spline.end())[0];
        Ok(Inhomogeneity {
            kind: InhomogeneityKind::Tabulated,
            half_width,
            amplitude: 1.0,
            spline: Some(spline),
            mass,
        })
    }

    /// Total change of xi across the support, the integral of xi'.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// xi and its derivatives of order 1..=4 at t.
    pub fn derivatives(&self, t: f64) -> [f64; 5] {
        match self.kind {
            InhomogeneityKind::DbumpLocalized => {
                let b = bump_derivatives(t, self.half_width);
                let mut out = [0.0; 5];
                for k in 0..5 {
                    out[k] = self.amplitude * b[k];
                }
                out
            }
            InhomogeneityKind::BumpTransitional => {
                let b = bump_derivatives(t, self.half_width);
                let xi = self.amplitude * bump_integral(t, self.half_width);
                [
                    xi,
                    self.amplitude * b[0],
                    self.amplitude * b[1],
                    self.amplitude * b[2],
                    self.amplitude * b[3],
                ]
            }
            InhomogeneityKind::Tabulated => {
                let s = self.spline.as_ref().expect("tabulated spline");
                s.eval(t)
            }
        }
    }

    pub fn xi(&self, t: f64) -> f64 {
        self.derivatives(t)[0]
    }

    pub fn xi_prime(&self, t: f64) -> f64 {
        self.derivatives(t)[1]
    }
}

fn check_width(half_width: f64) -> Result<()> {
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(FchError::InvalidArgument(format!(
            "support half-width must be positive, got {half_width}"
        )));
    }
    Ok(())
}

fn bump(s: f64, half_width: f64) -> f64 {
    let x = s / half_width;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

fn bump_mass(half_width: f64) -> f64 {
    quadrature::integrate_symmetric(|s| bump(s, half_width), half_width, 64)
}

fn bump_integral(t: f64, half_width: f64) -> f64 {
    if t <= -half_width {
        return 0.0;
    }
    let hi = t.min(half_width);
    quadrature::integrate(|s| bump(s, half_width), -half_width, hi, 32)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FourierPair {
    pub xi_e1: f64,
    pub xi_o1: f64,
    pub magnitude: f64,
    /// Phase such that the undulation reads cos(A t + theta1) with the
    /// signed amplitude beta0 |Xi_1|.
    pub theta1: f64,
}

impl FourierPair {
    pub fn new(xi_e1: f64, xi_o1: f64) -> Self {
        FourierPair {
            xi_e1,
            xi_o1,
            magnitude: xi_e1.hypot(xi_o1),
            theta1: -xi_o1.atan2(xi_e1),
        }
    }

    /// phi = atan2(Xi_o1, Xi_e1), so that Xi_e1 cos s + Xi_o1 sin s = |Xi| cos(s - phi).
    pub fn phi(&self) -> f64 {
        self.xi_o1.atan2(self.xi_e1)
    }
}

/// Xi_o1 = int xi' cos t, Xi_e1 = -int xi' sin t.
pub fn xi_fourier(xi: &Inhomogeneity) -> Result<FourierPair> {
    check_width(xi.half_width)?;
    let panels = 64;
    let t = xi.half_width;
    let o1 = quadrature::integrate_symmetric(|s| xi.xi_prime(s) * s.cos(), t, panels);
    let e1 = -quadrature::integrate_symmetric(|s| xi.xi_prime(s) * s.sin(), t, panels);
    Ok(FourierPair::new(e1, o1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GreensParams {
    pub eps: f64,
    pub c1: f64,
    pub alpha0: f64,
    pub a: f64,
    pub b: f64,
    pub prefactor: f64,
}

impl GreensParams {
    /// Coefficients (k2, k0) of G = d^4 + k2 d^2 + k0.
    pub fn operator_coefficients(&self) -> (f64, f64) {
        (
            2.0 + self.eps * self.c1,
            1.0 + self.eps * self.c1 - 4.0 * self.eps * self.alpha0,
        )
    }

    /// Symbol (1 + l^2)^2 + eps c1 (1 + l^2) - 4 eps alpha0.
    pub fn symbol(&self, l: Complex64) -> Complex64 {
        let z = 1.0 + l * l;
        z * z + self.eps * self.c1 * z - 4.0 * self.eps * self.alpha0
    }

    /// Minimal half-length of a t-domain that resolves the envelope.
    pub fn required_half_length(&self) -> f64 {
        12.0 / self.b
    }
}

pub fn greens_params(eps: f64, c1: f64, alpha0: f64) -> Result<GreensParams> {
    if !(eps > 0.0) {
        return Err(FchError::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let disc = 1.0 + eps * c1 - 4.0 * eps * alpha0;
    if !(disc > 0.0) {
        return Err(FchError::InvalidArgument(format!(
            "1 + eps c1 - 4 eps alpha0 = {disc} must be positive"
        )));
    }
    let s = disc.sqrt();
    let a2 = 0.5 * s + 0.25 * (2.0 + eps * c1);
    // s - 1 - eps c1 / 2 without cancellation
    let num = -4.0 * eps * alpha0 - 0.25 * eps * eps * c1 * c1;
    let b2 = 0.5 * num / (s + 1.0 + 0.5 * eps * c1);
    if !(b2 > 0.0) {
        return Err(FchError::Regime(format!(
            "alpha0 = {alpha0} gives no decaying tangential mode (B^2 = {b2:e}); pearling regime"
        )));
    }
    let a = a2.sqrt();
    let b = b2.sqrt();
    Ok(GreensParams {
        eps,
        c1,
        alpha0,
        a,
        b,
        prefactor: 1.0 / (4.0 * a * b * (a2 + b2)),
    })
}

pub fn greens_eval(p: &GreensParams, t: f64) -> f64 {
    let at = p.a * t;
    let s = if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    };
    (-p.b * t.abs()).exp() * (p.a * at.cos() + p.b * s * at.sin()) * p.prefactor
}

/// Uniform grid on [t0, t0 + (n-1) h].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TGrid {
    pub t0: f64,
    pub h: f64,
    pub n: usize,
}

impl TGrid {
    /// Symmetric grid covering [-half_length, half_length] with spacing <= h.
    pub fn symmetric(half_length: f64, h: f64) -> Self {
        let m = (half_length / h).ceil() as usize;
        TGrid {
            t0: -(m as f64) * h,
            h,
            n: 2 * m + 1,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    pub fn half_length(&self) -> f64 {
        (-self.t0).min(self.node(self.n - 1))
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }
}

/// K0 = beta0 (xi'''' + 2 xi'') on the grid.
pub fn kbar0(beta0: f64, xi: &Inhomogeneity, grid: &TGrid) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|t| {
            let d = xi.derivatives(*t);
            beta0 * (d[4] + 2.0 * d[2])
        })
        .collect()
}

fn check_domain(p: &GreensParams, grid: &TGrid) -> Result<()> {
    let need = p.required_half_length();
    if grid.half_length() < need {
        return Err(FchError::Truncation(format!(
            "t-domain half-length {} shorter than required {need}",
            grid.half_length()
        )));
    }
    Ok(())
}

/// Trapezoid convolution (G * f)(t_i) evaluated in O(n) by two exponential
/// sweeps: G(t) = Re[(A - iB) exp((iA - B)|t|)] * prefactor.
pub fn convolve_g(p: &GreensParams, grid: &TGrid, f: &[f64]) -> Result<Vec<f64>> {
    check_domain(p, grid)?;
    let n = grid.n;
    let q = Complex64::new(-p.b * grid.h, p.a * grid.h).exp();
    let wf: Vec<f64> = (0..n).map(|i| grid.weight(i) * f[i]).collect();
    let mut fwd = vec![Complex64::new(0.0, 0.0); n];
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        acc = acc * q + wf[i];
        fwd[i] = acc;
    }
    let c = Complex64::new(p.a, -p.b) * p.prefactor;
    let mut out = vec![0.0; n];
    let mut acc = Complex64::new(0.0, 0.0);
    for i in (0..n).rev() {
        acc = acc * q + wf[i];
        out[i] = (c * (fwd[i] + acc - wf[i])).re;
    }
    Ok(out)
}

/// Nodes per defect half-width used by `convolve_gk0`.
const DEFECT_NODES: f64 = 200.0;

/// G * K0 sampled on `grid`. K0 varies on the scale of the defect, which a
/// grid sized for the oscillation need not resolve, so the convolution runs
/// on an integer refinement of `grid` and is sampled back.
pub fn convolve_gk0(p: &GreensParams, beta0: f64, xi: &Inhomogeneity, grid: &TGrid) -> Result<Vec<f64>> {
    let m = ((grid.h * DEFECT_NODES / xi.half_width).ceil() as usize).max(1);
    let fine = TGrid {
        t0: grid.t0,
        h: grid.h / m as f64,
        n: (grid.n - 1) * m + 1,
    };
    let conv = convolve_g(p, &fine, &kbar0(beta0, xi, &fine))?;
    Ok((0..grid.n).map(|i| conv[i * m]).collect())
}

/// Direct quadrature over the support of f; reference for `convolve_g`.
pub fn convolve_g_direct(p: &GreensParams, grid: &TGrid, f: &[f64]) -> Result<Vec<f64>> {
    check_domain(p, grid)?;
    let support: Vec<usize> = (0..grid.n).filter(|&j| f[j] != 0.0).collect();
    Ok((0..grid.n)
        .map(|i| {
            let ti = grid.node(i);
            support
                .iter()
                .map(|&j| grid.weight(j) * greens_eval(p, ti - grid.node(j)) * f[j])
                .sum()
        })
        .collect())
}

/// Leading-order closed form of G * K0,
/// -(beta0 / (4 sqrt(-alpha0 eps))) e^{-sqrt(-alpha0 eps)|t|} [Xi_e1 cos At + Xi_o1 sin At].
pub fn closed_form_gk0(p: &GreensParams, beta0: f64, fp: &FourierPair, t: f64) -> f64 {
    let k = (-p.alpha0 * p.eps).sqrt();
    -(beta0 / (4.0 * k)) * (-k * t.abs()).exp() * (fp.xi_e1 * (p.a * t).cos() + fp.xi_o1 * (p.a * t).sin())
}

pub fn closed_form_envelope(p: &GreensParams, beta0: f64, fp: &FourierPair, t: f64) -> f64 {
    let k = (-p.alpha0 * p.eps).sqrt();
    beta0.abs() * fp.magnitude / (4.0 * k) * (-k * t.abs()).exp()
}

/// CSV with columns t, G, GK0 (convolution), closed form, envelope.
pub fn greens_csv(p: &GreensParams, grid: &TGrid, gk0: &[f64], beta0: f64, fp: &FourierPair) -> String {
    let mut s = String::from("t,g,gk0,closed_form,envelope\n");
    for i in 0..grid.n {
        let t = grid.node(i);
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e}",
            t,
            greens_eval(p, t),
            gk0[i],
            closed_form_gk0(p, beta0, fp, t),
            closed_form_envelope(p, beta0, fp, t)
        );
    }
    s
}

/// Applies G by central differences (interior points only).
pub fn apply_operator_fd(p: &GreensParams, grid: &TGrid, v: &[f64]) -> Vec<f64> {
    let (k2, k0) = p.operator_coefficients();
    let h = grid.h;
    let n = grid.n;
    let mut out = vec![0.0; n];
    for i in 2..n.saturating_sub(2) {
        let d4 = (v[i - 2] - 4.0 * v[i - 1] + 6.0 * v[i] - 4.0 * v[i + 1] + v[i + 2]) / h.powi(4);
        let d2 = (v[i - 1] - 2.0 * v[i] + v[i + 1]) / (h * h);
        out[i] = d4 + k2 * d2 + k0 * v[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_derivatives_of_bump_match_finite_differences() {
        let t = 0.7;
        let d = bump_derivatives(t, 2.0);
        let h = 1e-3;
        let f = |s: f64| bump(s, 2.0);
        assert!((d[0] - f(t)).abs() < 1e-15);
        let d1 = (f(t + h) - f(t - h)) / (2.0 * h);
        assert!((d[1] - d1).abs() < 1e-6);
        let d2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        assert!((d[2] - d2).abs() < 1e-5);
        let h = 1e-2;
        let d4 = (f(t - 2.0 * h) - 4.0 * f(t - h) + 6.0 * f(t) - 4.0 * f(t + h) + f(t + 2.0 * h)) / h.powi(4);
        assert!((d[4] - d4).abs() < 1e-3 * (1.0 + d4.abs()));
    }

    #[test]
    fn support_is_compact() {
        let x = Inhomogeneity::bump_transitional(2.0, 1.0).unwrap();
        assert_eq!(x.xi_prime(2.0), 0.0);
        assert_eq!(x.xi_prime(-2.5), 0.0);
        assert!((x.xi(3.0) - x.mass()).abs() < 1e-14);
        let y = Inhomogeneity::dbump_localized(2.0, 1.0).unwrap();
        assert_eq!(y.derivatives(2.1), [0.0; 5]);
        assert_eq!(y.mass(), 0.0);
    }

    #[test]
    fn greens_root_and_limits() {
        let p = greens_params(1e-4, 0.0, -1.0).unwrap();
        assert!((p.b - 1e-2).abs() < 1e-5);
        assert!((p.a - 1.0).abs() < 1e-3);
        let l = Complex64::new(-p.b, p.a);
        assert!(p.symbol(l).norm() < 1e-12);
        let p = greens_params(0.01, 0.4, -0.1).unwrap();
        assert!(p.symbol(Complex64::new(-p.b, p.a)).norm() < 1e-12);
        assert!(matches!(greens_params(0.01, 0.4, 0.1), Err(FchError::Regime(_))));
        assert!(greens_params(0.0, 0.4, -0.1).is_err());
    }

    #[test]
    fn green_function_jump() {
        let p = greens_params(0.01, 0.4, -0.1).unwrap();
        assert!((greens_eval(&p, 0.0) - 1.0 / (4.0 * p.b * (p.a * p.a + p.b * p.b))).abs() < 1e-12);
        for t in [0.3, 1.7, 25.0] {
            assert_eq!(greens_eval(&p, t), greens_eval(&p, -t));
        }
        // one-sided third derivatives differ by one
        let lam = Complex64::new(-p.b, p.a);
        let c = Complex64::new(p.a, -p.b) * p.prefactor;
        assert!((2.0 * (c * lam * lam * lam).re - 1.0).abs() < 1e-12);
        let h = 1e-4;
        let g = |t: f64| greens_eval(&p, t);
        let d3r = (-g(0.0) + 3.0 * g(h) - 3.0 * g(2.0 * h) + g(3.0 * h)) / h.powi(3);
        let d3l = (g(0.0) - 3.0 * g(-h) + 3.0 * g(-2.0 * h) - g(-3.0 * h)) / h.powi(3);
        assert!((d3r - d3l - 1.0).abs() < 1e-2, "jump {}", d3r - d3l);
    }

    #[test]
    fn fast_convolution_matches_direct() {
        let p = greens_params(0.01, 0.4, -0.1).unwrap();
        let grid = TGrid::symmetric(14.0 / p.b, 0.05);
        let xi = Inhomogeneity::dbump_localized(2.0, 1.0).unwrap();
        let k = kbar0(-1.3, &xi, &grid);
        let fast = convolve_g(&p, &grid, &k).unwrap();
        let slow = convolve_g_direct(&p, &grid, &k).unwrap();
        let scale = slow.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-11 * scale);
        }
        let short = TGrid::symmetric(5.0 / p.b, 0.05);
        assert!(matches!(
            convolve_g(&p, &short, &kbar0(-1.3, &xi, &short)),
            Err(FchError::Truncation(_))
        ));
    }

    #[test]
    fn transitional_bump_has_zero_even_coefficient() {
        let x = Inhomogeneity::bump_unit_mass(2.0).unwrap();
        assert!((x.mass() - 1.0).abs() < 1e-13);
        let fp = xi_fourier(&x).unwrap();
        assert_eq!(fp.xi_e1, 0.0);
        assert!(fp.xi_o1 > 0.0);
        let z = Inhomogeneity::bump_transitional(2.0, 0.0).unwrap();
        let fz = xi_fourier(&z).unwrap();
        assert_eq!((fz.xi_e1, fz.xi_o1), (0.0, 0.0));
    }

    #[test]
    fn tabulated_spline_reproduces_bump() {
        let t0 = -2.0;
        let h = 0.01;
        let samples: Vec<f64> = (0..=400).map(|i| bump(t0 + i as f64 * h, 2.0)).collect();
        let tab = Inhomogeneity::tabulated(t0, h, samples).unwrap();
        let exact = Inhomogeneity::bump_transitional(2.0, 1.0).unwrap();
        for t in [-1.5, -0.3, 0.0, 0.77, 1.9] {
            let a = tab.derivatives(t);
            let b = exact.derivatives(t);
            assert!((a[0] - b[0]).abs() < 1e-7, "xi at {t}");
            assert!((a[1] - b[1]).abs() < 1e-7, "xi' at {t}");
            assert!((a[2] - b[2]).abs() < 1e-4, "xi'' at {t}");
        }
        assert!((tab.mass() - exact.mass()).abs() < 1e-8);
        let fp = xi_fourier(&tab).unwrap();
        let fe = xi_fourier(&exact).unwrap();
        assert!((fp.xi_o1 - fe.xi_o1).abs() < 1e-6);
    }
}
