//! Bilayer profiles: the homoclinic u0, its first correction u1, the far
//! field u_inf and the eps > 0 profile u_h of the fourth-order radial ODE.

use std::fmt::Write as _;

use ode_solvers::{Dop853, System, Vector2};
use serde::Serialize;

use crate::error::{FchError, Result};
use crate::grid::{HalfLineGrid, Parity};
use crate::linalg::BandMatrix;
use crate::potential::{poly_eval, PotentialSpec};
use crate::quadrature;
use crate::spectral1d::SpectralData;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProfileKind {
    U0,
    U1,
    Uh,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileParams {
    pub eps: f64,
    pub gamma: f64,
    pub eta1: f64,
    pub eta_d: f64,
}

impl ProfileParams {
    pub fn new(eps: f64, gamma: f64, eta1: f64, eta_d: f64) -> Self {
        ProfileParams {
            eps,
            gamma,
            eta1,
            eta_d,
        }
    }

    /// Far-field shift eta_2 seen by the constant state: with the ODE written
    /// in terms of eta_d, constants solve (W'' - eps (eta1 - eta_d)) W' = eps gamma.
    pub fn far_field_eta2(&self) -> f64 {
        self.eta1 - self.eta_d
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BilayerProfile {
    pub grid: HalfLineGrid,
    pub values: Vec<f64>,
    /// r-derivative of the profile. Exact (from the energy relation) for u0,
    /// finite-difference otherwise.
    pub derivative: Vec<f64>,
    /// Second unknown of the BVP. For u_h it is u'' - W'(u); for u1 it is
    /// w0 = L0 u1; for u0 it is zero.
    pub aux: Vec<f64>,
    pub params: ProfileParams,
    pub u_inf: f64,
    pub kind: ProfileKind,
}

impl BilayerProfile {
    pub fn to_csv(&self, spec: &PotentialSpec) -> String {
        let res = self.residual(spec);
        let mut s = String::from("r,u,u_prime,residual\n");
        for j in 0..self.grid.len() {
            let _ = writeln!(
                s,
                "{:e},{:e},{:e},{:e}",
                self.grid.node(j),
                self.values[j],
                self.derivative[j],
                res[j]
            );
        }
        s
    }

    /// Pointwise residual of the defining equation.
    pub fn residual(&self, spec: &PotentialSpec) -> Vec<f64> {
        let g = &self.grid;
        let u = &self.values;
        match self.kind {
            ProfileKind::U0 => {
                let d2 = g.d2(u, Parity::Even);
                d2.iter().zip(u).map(|(d, v)| d - spec.dw(*v)).collect()
            }
            ProfileKind::U1 => vec![0.0; g.len()],
            ProfileKind::Uh => fourth_order_residual(spec, g, &self.params, u),
        }
    }

    /// r where the profile crosses `level` (first crossing from the centre).
    pub fn crossing(&self, level: f64) -> Option<f64> {
        crossing_radius(&self.grid, &self.values, level)
    }
}

pub(crate) fn crossing_radius(grid: &HalfLineGrid, u: &[f64], level: f64) -> Option<f64> {
    for j in 0..u.len() - 1 {
        if (u[j] - level) * (u[j + 1] - level) <= 0.0 && u[j] != u[j + 1] {
            let f = (u[j] - level) / (u[j] - u[j + 1]);
            return Some(grid.node(j) + f * grid.spacing());
        }
    }
    None
}

/// (d2 - W''(u) + eps eta1)(d2 u - W'(u)) + eps eta_d W'(u) - eps gamma.
pub fn fourth_order_residual(spec: &PotentialSpec, grid: &HalfLineGrid, p: &ProfileParams, u: &[f64]) -> Vec<f64> {
    let d2u = grid.d2(u, Parity::Even);
    let w: Vec<f64> = d2u.iter().zip(u).map(|(d, v)| d - spec.dw(*v)).collect();
    let d2w = grid.d2(&w, Parity::Even);
    (0..u.len())
        .map(|j| d2w[j] - (spec.d2w(u[j]) - p.eps * p.eta1) * w[j] + p.eps * p.eta_d * spec.dw(u[j]) - p.eps * p.gamma)
        .collect()
}

/// Homoclinic by inverting the energy quadrature r(u) = int du / sqrt(2W).
/// Returns the samples and the exact derivative at the grid nodes.
pub fn homoclinic_quadrature(spec: &PotentialSpec, nodes: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let um = spec.u_max();
    let q = spec.deflated_top();
    let p = spec.deflated_origin();
    let q_top = poly_eval(&q, um);
    if !(q_top < 0.0) {
        return Err(FchError::SingularQuadrature(format!(
            "W'(u_max) = {q_top:e} is not negative; turning point is degenerate"
        )));
    }
    // top variable s with u = u_max - s^2; bottom variable v with u = exp(-v)
    let top_rate = |s: f64| {
        let m = -2.0 * poly_eval(&q, um - s * s);
        m.sqrt() / 2.0
    };
    let bottom_rate = |v: f64| (2.0 * poly_eval(&p, (-v).exp())).sqrt();
    let u_split = 0.5 * um;
    let s_split = (um - u_split).sqrt();
    let v_split = -u_split.ln();
    let r_split = quadrature::integrate(|s| 1.0 / top_rate(s), 0.0, s_split, 16);
    if !r_split.is_finite() {
        return Err(FchError::SingularQuadrature(
            "non-finite rate near the turning point".into(),
        ));
    }

    let mut values = Vec::with_capacity(nodes.len());
    let mut derivs = Vec::with_capacity(nodes.len());
    let (mut s_prev, mut rs_prev) = (0.0, 0.0);
    let (mut v_prev, mut rv_prev) = (v_split, r_split);
    for &r in nodes {
        if r <= r_split {
            let s = invert_increment(&top_rate, s_prev, rs_prev, r, 0.0, s_split)?;
            s_prev = s;
            rs_prev = r;
            let u = um - s * s;
            values.push(u);
            derivs.push(-2.0 * s * top_rate(s));
        } else {
            let v = invert_increment(&bottom_rate, v_prev, rv_prev, r, v_split, f64::INFINITY)?;
            v_prev = v;
            rv_prev = r;
            let u = (-v).exp();
            values.push(u);
            derivs.push(-u * bottom_rate(v));
        }
    }
    Ok((values, derivs))
}

/// Solves r_prev + int_{x_prev}^{x} dx / rate(x) = r for x by Newton.
fn invert_increment(rate: &impl Fn(f64) -> f64, x_prev: f64, r_prev: f64, r: f64, lo: f64, hi: f64) -> Result<f64> {
    if r == r_prev {
        return Ok(x_prev);
    }
    let inv = |x: f64| 1.0 / rate(x);
    let mut x = x_prev + (r - r_prev) * rate(x_prev);
    for _ in 0..60 {
        let f = r_prev + quadrature::integrate(inv, x_prev, x, 1) - r;
        let step = f * rate(x);
        let next = (x - step).clamp(lo, hi);
        if !next.is_finite() {
            break;
        }
        let done = (next - x).abs() <= 1e-15 * (1.0 + x.abs());
        x = next;
        if done {
            return Ok(x);
        }
    }
    Err(FchError::SingularQuadrature(format!(
        "quadrature inversion failed near r = {r}"
    )))
}

struct Newtonian<'a> {
    spec: &'a PotentialSpec,
}

impl System<f64, Vector2<f64>> for Newtonian<'_> {
    fn system(&self, _r: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        dy[1] = self.spec.dw(y[0]);
    }
}

/// Independent route: shoot u'' = W'(u) from (u_max, 0). Only reliable on
/// the core, since the decaying branch is unstable for large r.
pub fn homoclinic_shooting(spec: &PotentialSpec, nodes: &[f64]) -> Result<Vec<f64>> {
    let r_end = *nodes.last().unwrap_or(&0.0);
    if nodes.len() < 2 {
        return Ok(vec![spec.u_max(); nodes.len()]);
    }
    let h = nodes[1] - nodes[0];
    let mut stepper = Dop853::new(
        Newtonian { spec },
        0.0,
        r_end,
        h,
        Vector2::new(spec.u_max(), 0.0),
        1e-14,
        1e-16,
    );
    stepper
        .integrate()
        .map_err(|e| FchError::NonConvergence(format!("shooting: {e}")))?;
    let xs = stepper.x_out();
    let ys = stepper.y_out();
    Ok(nodes
        .iter()
        .map(|r| {
            let k = ((r / h).round() as usize).min(xs.len() - 1);
            ys[k][0]
        })
        .collect())
}

/// Newton on the discrete equation d2 u = W'(u), even parity.
fn polish_discrete(spec: &PotentialSpec, grid: &HalfLineGrid, u: &mut [f64]) -> Result<()> {
    for _ in 0..20 {
        let d2 = grid.d2(u, Parity::Even);
        let res: Vec<f64> = d2.iter().zip(u.iter()).map(|(d, v)| d - spec.dw(*v)).collect();
        let rmax = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if rmax < 1e-10 {
            return Ok(());
        }
        let pot: Vec<f64> = u.iter().map(|v| -spec.d2w(*v)).collect();
        let lu = grid.operator_band(&pot, Parity::Even).lu()?;
        let du = lu.solve(&res);
        for (v, d) in u.iter_mut().zip(&du) {
            *v -= d;
        }
    }
    Err(FchError::NonConvergence("discrete homoclinic polish".into()))
}

/// The eps = 0 homoclinic. Values solve the discrete equation on `grid`;
/// the stored derivative is the exact one from the energy relation.
pub fn solve_homoclinic(spec: &PotentialSpec, grid: &HalfLineGrid) -> Result<BilayerProfile> {
    let nodes = grid.nodes();
    let (mut values, derivative) = homoclinic_quadrature(spec, &nodes)?;
    for (u, du) in values.iter().zip(&derivative) {
        let h = 0.5 * du * du - spec.w(*u);
        if h.abs() > 1e-8 {
            return Err(FchError::SingularQuadrature(format!(
                "energy level drift {h:e} at u = {u}"
            )));
        }
    }
    polish_discrete(spec, grid, &mut values)?;
    Ok(BilayerProfile {
        grid: grid.clone(),
        aux: vec![0.0; values.len()],
        values,
        derivative,
        params: ProfileParams::new(0.0, 0.0, 0.0, 0.0),
        u_inf: 0.0,
        kind: ProfileKind::U0,
    })
}

/// Small root of (W''(u) - eps eta2) W'(u) = eps gamma.
pub fn far_field_root(spec: &PotentialSpec, eps: f64, eta2: f64, gamma: f64) -> Result<f64> {
    if eps < 0.0 {
        return Err(FchError::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    if eps == 0.0 || gamma == 0.0 {
        return Ok(0.0);
    }
    let w2 = spec.d2w(0.0);
    let mut u = eps * gamma / (w2 * w2);
    for _ in 0..50 {
        let a = spec.d2w(u) - eps * eta2;
        let f = a * spec.dw(u) - eps * gamma;
        let df = spec.d3w(u) * spec.dw(u) + a * spec.d2w(u);
        let step = f / df;
        u -= step;
        if step.abs() <= 1e-16 * (1.0 + u.abs()) || f == 0.0 {
            return Ok(u);
        }
    }
    Err(FchError::NonConvergence(format!("far-field root for eps = {eps}")))
}

/// Newton seed u0 + eps u1 for the finite-eps BVP, with aux eps w0.
pub fn first_order_seed(u0: &BilayerProfile, u1: &BilayerProfile, params: ProfileParams) -> BilayerProfile {
    let eps = params.eps;
    BilayerProfile {
        grid: u0.grid.clone(),
        values: u0.values.iter().zip(&u1.values).map(|(a, b)| a + eps * b).collect(),
        derivative: vec![0.0; u0.grid.len()],
        aux: u1.aux.iter().map(|w| eps * w).collect(),
        params,
        u_inf: 0.0,
        kind: ProfileKind::Uh,
    }
}

/// u1 = L0^{-2}(gamma - eta_d W'(u0)) with w0 = L0 u1 stored in `aux`.
pub fn solve_u1(spectral: &SpectralData, spec: &PotentialSpec, gamma: f64, eta_d: f64) -> Result<BilayerProfile> {
    let u0 = spectral.background();
    let rhs: Vec<f64> = u0.iter().map(|u| gamma - eta_d * spec.dw(*u)).collect();
    let w0 = spectral.solve_even(&rhs)?;
    let u1 = spectral.solve_even(&w0)?;
    let grid = spectral.grid().clone();
    let derivative = grid.d1(&u1, Parity::Even);
    let w2 = spec.d2w(0.0);
    Ok(BilayerProfile {
        grid,
        u_inf: gamma / (w2 * w2),
        values: u1,
        derivative,
        aux: w0,
        params: ProfileParams::new(0.0, gamma, 0.0, eta_d),
        kind: ProfileKind::U1,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct BvpOptions {
    pub eps_max: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            eps_max: 0.05,
            tol: 1e-9,
            max_iter: 30,
        }
    }
}

fn bvp_residual(spec: &PotentialSpec, grid: &HalfLineGrid, p: &ProfileParams, x: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let u: Vec<f64> = (0..n).map(|j| x[2 * j]).collect();
    let w: Vec<f64> = (0..n).map(|j| x[2 * j + 1]).collect();
    let d2u = grid.d2(&u, Parity::Even);
    let d2w = grid.d2(&w, Parity::Even);
    let mut r = vec![0.0; 2 * n];
    for j in 0..n {
        r[2 * j] = d2u[j] - spec.dw(u[j]) - w[j];
        r[2 * j + 1] =
            d2w[j] - (spec.d2w(u[j]) - p.eps * p.eta1) * w[j] + p.eps * p.eta_d * spec.dw(u[j]) - p.eps * p.gamma;
    }
    r
}

fn bvp_jacobian(spec: &PotentialSpec, grid: &HalfLineGrid, p: &ProfileParams, x: &[f64]) -> BandMatrix<f64> {
    let n = grid.len();
    let mut a = BandMatrix::zeros(2 * n, 4, 4);
    for j in 0..n {
        let (u, w) = (x[2 * j], x[2 * j + 1]);
        for (col, c) in grid.d2_row(j, Parity::Even) {
            a.add(2 * j, 2 * col, c);
            a.add(2 * j + 1, 2 * col + 1, c);
        }
        a.add(2 * j, 2 * j, -spec.d2w(u));
        a.add(2 * j, 2 * j + 1, -1.0);
        a.add(2 * j + 1, 2 * j + 1, -(spec.d2w(u) - p.eps * p.eta1));
        a.add(2 * j + 1, 2 * j, -spec.d3w(u) * w + p.eps * p.eta_d * spec.d2w(u));
    }
    a
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn newton_bvp(
    spec: &PotentialSpec,
    grid: &HalfLineGrid,
    p: &ProfileParams,
    mut x: Vec<f64>,
    opts: &BvpOptions,
) -> std::result::Result<Vec<f64>, f64> {
    let mut last = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let r = bvp_residual(spec, grid, p, &x);
        let rn = sup(&r);
        if !rn.is_finite() {
            return Err(last);
        }
        last = rn;
        if rn < opts.tol {
            return Ok(x);
        }
        let lu = match bvp_jacobian(spec, grid, p, &x).lu() {
            Ok(lu) => lu,
            Err(_) => return Err(rn),
        };
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi -= di;
        }
    }
    let rn = sup(&bvp_residual(spec, grid, p, &x));
    if rn < opts.tol {
        Ok(x)
    } else {
        Err(rn)
    }
}

pub fn solve_bilayer_eps(
    spec: &PotentialSpec,
    grid: &HalfLineGrid,
    params: ProfileParams,
    seed: &BilayerProfile,
) -> Result<BilayerProfile> {
    solve_bilayer_eps_with(spec, grid, params, seed, &BvpOptions::default())
}

/// Newton collocation of the fourth-order ODE written as the pair
/// u'' = W'(u) + w, w'' = (W''(u) - eps eta1) w - eps eta_d W'(u) + eps gamma,
/// even at r = 0 and reflecting at r = R. The seed's `aux` (if nonzero) seeds w.
pub fn solve_bilayer_eps_with(
    spec: &PotentialSpec,
    grid: &HalfLineGrid,
    params: ProfileParams,
    seed: &BilayerProfile,
    opts: &BvpOptions,
) -> Result<BilayerProfile> {
    let eps = params.eps;
    if !(eps >= 0.0 && eps <= opts.eps_max) {
        return Err(FchError::InvalidArgument(format!(
            "eps = {eps} outside [0, {}]",
            opts.eps_max
        )));
    }
    if seed.grid != *grid {
        return Err(FchError::InvalidArgument("seed lives on a different grid".into()));
    }
    let n = grid.len();
    let mut x0 = vec![0.0; 2 * n];
    for j in 0..n {
        x0[2 * j] = seed.values[j];
        x0[2 * j + 1] = seed.aux[j];
    }
    let x = match newton_bvp(spec, grid, &params, x0.clone(), opts) {
        Ok(x) => x,
        Err(_) => continuation(spec, grid, params, x0, opts)?,
    };
    let u: Vec<f64> = (0..n).map(|j| x[2 * j]).collect();
    let w: Vec<f64> = (0..n).map(|j| x[2 * j + 1]).collect();
    let derivative = grid.d1(&u, Parity::Even);
    let u_inf = far_field_root(spec, eps, params.far_field_eta2(), params.gamma)?;
    Ok(BilayerProfile {
        grid: grid.clone(),
        values: u,
        derivative,
        aux: w,
        params,
        u_inf,
        kind: ProfileKind::Uh,
    })
}

fn continuation(
    spec: &PotentialSpec,
    grid: &HalfLineGrid,
    target: ProfileParams,
    seed: Vec<f64>,
    opts: &BvpOptions,
) -> Result<Vec<f64>> {
    let mut eps_c = 0.0;
    let mut x_c = seed;
    let mut step = 0.5 * target.eps;
    let min_step = target.eps / 1024.0;
    while eps_c < target.eps {
        let next = (eps_c + step).min(target.eps);
        let p = ProfileParams { eps: next, ..target };
        match newton_bvp(spec, grid, &p, x_c.clone(), opts) {
            Ok(x) => {
                x_c = x;
                eps_c = next;
                step *= 1.5;
            }
            Err(last) => {
                step *= 0.5;
                if step < min_step {
                    return Err(FchError::NonConvergence(format!(
                        "bilayer Newton stalled at eps = {next}, last residual {last:e}"
                    )));
                }
            }
        }
    }
    Ok(x_c)
}
