//! Double-well potentials W(u) with an unbalanced second minimum.

use serde::{Deserialize, Serialize};

use crate::error::{FchError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WellKind {
    /// W(u) = u^2 (u - u_max)(u - c u_max)
    Quartic { u_max: f64, c: f64 },
    /// Ascending coefficients of W.
    Polynomial { coefficients: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PotentialSpec {
    pub kind: WellKind,
    coeffs: Vec<f64>,
    u_circ: f64,
    u_plus: f64,
    u_max_zero: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WellReport {
    pub u_circ: f64,
    pub u_plus: f64,
    pub u_max_zero: f64,
    pub w3_negative_on_interval: bool,
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * u + a)
}

fn derivative(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, a)| k as f64 * a).collect()
}

/// Sign changes of `f` on (lo, hi], refined by bisection.
fn bracketed_roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = (hi - lo) / samples as f64;
    let mut a = lo + 0.5 * step;
    let mut fa = f(a);
    for k in 1..=samples {
        let b = lo + (k as f64 + 0.5) * step;
        let fb = f(b);
        if fa == 0.0 {
            roots.push(a);
        } else if fa * fb < 0.0 {
            let (mut x0, mut x1, mut f0) = (a, b, fa);
            for _ in 0..200 {
                let m = 0.5 * (x0 + x1);
                if m <= x0 || m >= x1 {
                    break;
                }
                let fm = f(m);
                if fm == 0.0 {
                    x0 = m;
                    x1 = m;
                    break;
                }
                if f0 * fm < 0.0 {
                    x1 = m;
                } else {
                    x0 = m;
                    f0 = fm;
                }
            }
            roots.push(0.5 * (x0 + x1));
        }
        a = b;
        fa = fb;
    }
    roots
}

impl PotentialSpec {
    pub fn quartic(u_max: f64, c: f64) -> Result<Self> {
        if !(u_max.is_finite() && u_max > 0.0) {
            return Err(FchError::InvalidWell(format!("u_max must be positive, got {u_max}")));
        }
        if !(c.is_finite() && c > 1.0) {
            return Err(FchError::InvalidWell(format!("c must exceed 1, got {c}")));
        }
        let coeffs = vec![0.0, 0.0, c * u_max * u_max, -(1.0 + c) * u_max, 1.0];
        let disc = (9.0 * (1.0 + c).powi(2) - 32.0 * c).sqrt();
        let u_circ = u_max * (3.0 * (1.0 + c) - disc) / 8.0;
        let u_plus = u_max * (3.0 * (1.0 + c) + disc) / 8.0;
        Ok(PotentialSpec {
            kind: WellKind::Quartic { u_max, c },
            coeffs,
            u_circ,
            u_plus,
            u_max_zero: u_max,
        })
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        let mut c = coefficients.clone();
        while c.len() > 1 && *c.last().unwrap() == 0.0 {
            c.pop();
        }
        if c.len() < 4 || c.iter().any(|v| !v.is_finite()) {
            return Err(FchError::InvalidWell("need a finite polynomial of degree >= 3".into()));
        }
        let lead = *c.last().unwrap();
        let bound = 1.0 + c[..c.len() - 1].iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
        let dc = derivative(&c);
        let samples = 20_000;
        let w_roots = bracketed_roots(|u| horner(&c, u), 0.0, bound, samples);
        let u_max_zero = *w_roots
            .first()
            .ok_or_else(|| FchError::InvalidWell("W has no positive zero".into()))?;
        let crit = bracketed_roots(|u| horner(&dc, u), 0.0, bound, samples);
        let d2c = derivative(&dc);
        let u_circ = crit
            .iter()
            .copied()
            .find(|&u| horner(&d2c, u) < 0.0)
            .ok_or_else(|| FchError::InvalidWell("no local maximum of W on (0, inf)".into()))?;
        let u_plus = crit
            .iter()
            .copied()
            .find(|&u| u > u_circ && horner(&d2c, u) > 0.0)
            .ok_or_else(|| FchError::InvalidWell("no well minimum beyond the maximum".into()))?;
        let spec = PotentialSpec {
            kind: WellKind::Polynomial { coefficients },
            coeffs: c,
            u_circ,
            u_plus,
            u_max_zero,
        };
        Ok(spec)
    }

    pub fn from_kind(kind: &WellKind) -> Result<Self> {
        match kind {
            WellKind::Quartic { u_max, c } => Self::quartic(*u_max, *c),
            WellKind::Polynomial { coefficients } => Self::polynomial(coefficients.clone()),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn u_circ(&self) -> f64 {
        self.u_circ
    }

    pub fn u_plus(&self) -> f64 {
        self.u_plus
    }

    /// Smallest positive zero of W: the top of the homoclinic orbit.
    pub fn u_max(&self) -> f64 {
        self.u_max_zero
    }

    /// Derivative of order 0..=4.
    pub fn eval(&self, u: f64, order: u32) -> Result<f64> {
        if order > 4 {
            return Err(FchError::InvalidArgument(format!(
                "derivative order {order} not supported (0..=4)"
            )));
        }
        Ok(self.deriv(u, order as usize))
    }

    fn deriv(&self, u: f64, order: usize) -> f64 {
        let c = &self.coeffs;
        let mut acc = 0.0;
        for k in (order..c.len()).rev() {
            let mut f = 1.0;
            for m in 0..order {
                f *= (k - m) as f64;
            }
            acc = acc * u + f * c[k];
        }
        acc
    }

    pub fn w(&self, u: f64) -> f64 {
        self.deriv(u, 0)
    }
    pub fn dw(&self, u: f64) -> f64 {
        self.deriv(u, 1)
    }
    pub fn d2w(&self, u: f64) -> f64 {
        self.deriv(u, 2)
    }
    pub fn d3w(&self, u: f64) -> f64 {
        self.deriv(u, 3)
    }
    pub fn d4w(&self, u: f64) -> f64 {
        self.deriv(u, 4)
    }

    /// Coefficients of P(u) = W(u) / u^2.
    pub(crate) fn deflated_origin(&self) -> Vec<f64> {
        self.coeffs[2..].to_vec()
    }

    /// Coefficients of Q(u) = W(u) / (u - u_max), by synthetic division.
    pub(crate) fn deflated_top(&self) -> Vec<f64> {
        let c = &self.coeffs;
        let deg = c.len() - 1;
        let a = self.u_max_zero;
        let mut q = vec![0.0; deg];
        let mut carry = c[deg];
        for k in (0..deg).rev() {
            q[k] = carry;
            carry = c[k] + a * carry;
        }
        q
    }
}

pub(crate) fn poly_eval(c: &[f64], u: f64) -> f64 {
    horner(c, u)
}

/// Checks the structural assumptions on the well and reports its critical
/// points.
pub fn validate_well(spec: &PotentialSpec) -> Result<WellReport> {
    let w0 = spec.w(0.0);
    let dw0 = spec.dw(0.0);
    if w0.abs() > 1e-12 || dw0.abs() > 1e-12 {
        return Err(FchError::InvalidWell(format!(
            "W(0) = {w0:e}, W'(0) = {dw0:e}; both must vanish"
        )));
    }
    if spec.d2w(0.0) <= 0.0 {
        return Err(FchError::InvalidWell("W''(0) must be positive".into()));
    }
    let (uc, up, um) = (spec.u_circ, spec.u_plus, spec.u_max_zero);
    if spec.d2w(uc) >= 0.0 {
        return Err(FchError::InvalidWell(format!("W''(u_circ) >= 0 at u_circ = {uc}")));
    }
    if spec.w(up) >= 0.0 || spec.d2w(up) <= 0.0 {
        return Err(FchError::InvalidWell(format!(
            "second well at {up} must satisfy W < 0 and W'' > 0"
        )));
    }
    if !(uc < um && um < up) {
        return Err(FchError::InvalidWell(format!(
            "need u_circ < u_max < u_plus, got {uc} < {um} < {up}"
        )));
    }
    let samples = 1000;
    for k in 1..samples {
        let u = um * k as f64 / samples as f64;
        if spec.w(u) <= 0.0 {
            return Err(FchError::InvalidWell(format!("W(u) <= 0 at u = {u} inside (0, u_max)")));
        }
    }
    if spec.dw(um) >= 0.0 {
        return Err(FchError::InvalidWell("W'(u_max) must be negative".into()));
    }
    let check = 10_000;
    let w3_negative_on_interval = (0..=check).all(|k| spec.d3w(um * k as f64 / check as f64) < 0.0);
    Ok(WellReport {
        u_circ: uc,
        u_plus: up,
        u_max_zero: um,
        w3_negative_on_interval,
    })
}
