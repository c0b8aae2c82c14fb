//! Truncated pearling normal form on the four-dimensional center manifold,
//! its first integrals, and the explicit weakly stable/unstable manifolds.

use std::fmt::Write as _;

use num_complex::Complex64;
use ode_solvers::dop_shared::{IntegrationError, OutputType};
use ode_solvers::{Dop853, System, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{FchError, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormParams {
    pub eps: f64,
    pub alpha0: f64,
    pub omega1: f64,
    pub alpha2: f64,
    pub alpha7: f64,
    pub alpha8: f64,
}

impl NormalFormParams {
    /// Unspecified cubic coefficients default to one.
    pub fn new(eps: f64, alpha0: f64) -> Self {
        NormalFormParams {
            eps,
            alpha0,
            omega1: 1.0,
            alpha2: 1.0,
            alpha7: 1.0,
            alpha8: 1.0,
        }
    }

    /// Rotation frequency 1 + omega1 eps.
    pub fn frequency(&self) -> f64 {
        1.0 + self.omega1 * self.eps
    }

    /// sqrt(-alpha0 eps); regime error unless alpha0 < 0 and eps > 0.
    pub fn decay_rate(&self) -> Result<f64> {
        if !(self.alpha0 < 0.0) || !(self.eps > 0.0) {
            return Err(FchError::Regime(format!(
                "weak manifolds need alpha0 < 0 and eps > 0, got alpha0 = {}, eps = {}",
                self.alpha0, self.eps
            )));
        }
        Ok((-self.alpha0 * self.eps).sqrt())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct NormalFormState {
    pub c1: Complex64,
    pub c2: Complex64,
}

impl NormalFormState {
    pub fn new(c1: Complex64, c2: Complex64) -> Self {
        NormalFormState { c1, c2 }
    }

    /// K = i(C1 conj(C2) - conj(C1) C2), real.
    pub fn k(&self) -> f64 {
        (I * (self.c1 * self.c2.conj() - self.c1.conj() * self.c2)).re
    }

    /// H = |C2|^2 - (-alpha0 eps + alpha2 K)|C1|^2.
    pub fn h(&self, p: &NormalFormParams) -> f64 {
        self.c2.norm_sqr() - (-p.alpha0 * p.eps + p.alpha2 * self.k()) * self.c1.norm_sqr()
    }

    pub fn norm(&self) -> f64 {
        (self.c1.norm_sqr() + self.c2.norm_sqr()).sqrt()
    }

    fn to_real(self) -> Vector4<f64> {
        Vector4::new(self.c1.re, self.c1.im, self.c2.re, self.c2.im)
    }

    fn from_real(y: &Vector4<f64>) -> Self {
        NormalFormState {
            c1: Complex64::new(y[0], y[1]),
            c2: Complex64::new(y[2], y[3]),
        }
    }
}

pub fn nf_rhs(p: &NormalFormParams, s: &NormalFormState) -> NormalFormState {
    let (c1, c2) = (s.c1, s.c2);
    let cross = c1 * c2.conj() - c1.conj() * c2;
    let bracket = p.alpha7 * c1 * c1.conj() + p.alpha8 * I * cross;
    let w = I * p.frequency();
    NormalFormState {
        c1: w * c1 + c2 + I * c1 * bracket,
        c2: w * c2 + I * c2 * bracket + c1 * (-p.alpha0 * p.eps + p.alpha2 * I * cross),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Stable,
    Unstable,
}

/// Closed-form point on the weakly stable (decaying as t -> +inf) or
/// unstable (decaying as t -> -inf) manifold.
pub fn manifold_point(branch: Branch, c: f64, theta: f64, t: f64, p: &NormalFormParams) -> Result<NormalFormState> {
    let s = p.decay_rate()?;
    let sign = match branch {
        Branch::Stable => -1.0,
        Branch::Unstable => 1.0,
    };
    let drift = sign * p.alpha7 * c * c / (2.0 * s) * (2.0 * sign * s * t).exp();
    let phase = p.frequency() * t + drift + theta;
    let c1 = c * Complex64::new(sign * s * t, phase).exp();
    Ok(NormalFormState { c1, c2: sign * s * c1 })
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<NormalFormState>,
    /// Integration stopped early because the state left the escape ball.
    pub escaped: bool,
}

impl Trajectory {
    pub fn last(&self) -> Option<&NormalFormState> {
        self.states.last()
    }

    /// Largest deviation of K and H from their initial values.
    pub fn invariant_drift(&self, p: &NormalFormParams) -> (f64, f64) {
        let Some(first) = self.states.first() else {
            return (0.0, 0.0);
        };
        let (k0, h0) = (first.k(), first.h(p));
        self.states.iter().fold((0.0f64, 0.0f64), |(a, b), s| {
            (a.max((s.k() - k0).abs()), b.max((s.h(p) - h0).abs()))
        })
    }

    pub fn to_csv(&self, p: &NormalFormParams) -> String {
        let mut out = String::from("t,re_c1,im_c1,re_c2,im_c2,k,h\n");
        for (t, s) in self.t.iter().zip(&self.states) {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                t,
                s.c1.re,
                s.c1.im,
                s.c2.re,
                s.c2.im,
                s.k(),
                s.h(p)
            );
        }
        out
    }
}

struct Flow {
    p: NormalFormParams,
    escape: f64,
    escaped: bool,
}

impl System<f64, Vector4<f64>> for Flow {
    fn system(&self, _t: f64, y: &Vector4<f64>, dy: &mut Vector4<f64>) {
        *dy = nf_rhs(&self.p, &NormalFormState::from_real(y)).to_real();
    }

    fn solout(&mut self, _t: f64, y: &Vector4<f64>, _dy: &Vector4<f64>) -> bool {
        if y.norm() > self.escape {
            self.escaped = true;
        }
        self.escaped
    }
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrateOptions {
    pub tol: f64,
    /// Integration stops once |(C1, C2)| exceeds this.
    pub escape_radius: f64,
    pub max_step: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            tol: 1e-10,
            escape_radius: 10.0,
            max_step: 0.25,
        }
    }
}

/// Adaptive eighth-order integration from t0 to t1 (either direction).
pub fn nf_integrate(
    p: &NormalFormParams,
    state0: NormalFormState,
    t0: f64,
    t1: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(1e-12..=1e-6).contains(&opts.tol) {
        return Err(FchError::InvalidArgument(format!(
            "tol {} outside [1e-12, 1e-6]",
            opts.tol
        )));
    }
    if !(opts.max_step > 0.0) || !(opts.escape_radius > 0.0) {
        return Err(FchError::InvalidArgument(
            "max_step and escape_radius must be positive".into(),
        ));
    }
    if t0 == t1 {
        return Ok(Trajectory {
            t: vec![t0],
            states: vec![state0],
            escaped: false,
        });
    }
    let flow = Flow {
        p: *p,
        escape: opts.escape_radius,
        escaped: false,
    };
    let mut stepper = Dop853::from_param(
        flow,
        t0,
        t1,
        0.0,
        state0.to_real(),
        opts.tol,
        opts.tol,
        0.9,
        0.0,
        0.333,
        6.0,
        opts.max_step,
        0.0,
        u32::MAX,
        1000,
        OutputType::Sparse,
    );
    match stepper.integrate() {
        Ok(_) => {}
        Err(IntegrationError::StepSizeUnderflow { x }) | Err(IntegrationError::StiffnessDetected { x }) => {
            return Err(FchError::Stiffness(x))
        }
        Err(e) => return Err(FchError::NonConvergence(e.to_string())),
    }
    // sparse output starts with the initial point
    let mut traj = Trajectory {
        t: stepper.x_out().clone(),
        states: stepper.y_out().iter().map(NormalFormState::from_real).collect(),
        escaped: false,
    };
    traj.escaped = traj.states.last().is_some_and(|s| s.norm() > opts.escape_radius);
    Ok(traj)
}

/// Exponential rate of |C1| from a least-squares fit of log|C1| against t.
pub fn envelope_rate(traj: &Trajectory) -> f64 {
    let pts: Vec<(f64, f64)> = traj
        .t
        .iter()
        .zip(&traj.states)
        .filter(|(_, s)| s.c1.norm() > 0.0)
        .map(|(t, s)| (*t, s.c1.norm().ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}
