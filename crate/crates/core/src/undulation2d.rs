//! The undulated bilayer on a (t, r) tensor grid: the modulated family
//! u_{h,delta}, the pearl amplitude phi0, a leading-order hyperbolic
//! correction, and the residual of the inner-coordinate equation.
//!
//! Fields are stored row-major, one row per t node.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FchError, Result};
use crate::grid::{HalfLineGrid, Parity};
use crate::pearling::{compute_alpha0, compute_beta0, compute_c1};
use crate::potential::PotentialSpec;
use crate::profile1d::{
    crossing_radius, first_order_seed, solve_bilayer_eps, solve_homoclinic, solve_u1, BilayerProfile, ProfileParams,
};
use crate::spectral1d::{build_operator, SpectralData};
use crate::tangential::{
    convolve_g, convolve_gk0, greens_params, xi_fourier, FourierPair, GreensParams, Inhomogeneity, InhomogeneityKind,
    TGrid,
};

pub const MIN_POINTS_PER_PERIOD: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Physics {
    pub gamma: f64,
    pub eta1: f64,
    pub eta20: f64,
}

impl Physics {
    /// Unperturbed eta_d = eta1 - eta20.
    pub fn eta_d0(&self) -> f64 {
        self.eta1 - self.eta20
    }
}

/// One-dimensional data on the field's r-grid shared by every slice.
#[derive(Clone, Debug)]
pub struct Background {
    pub spec: PotentialSpec,
    pub physics: Physics,
    pub eps: f64,
    pub u0: BilayerProfile,
    pub u1: BilayerProfile,
    pub spectral: SpectralData,
    /// u_h at eta_d0.
    pub flat: BilayerProfile,
    pub lambda0: f64,
    pub beta0: f64,
    pub alpha0: f64,
    pub c1: f64,
}

impl Background {
    pub fn grid(&self) -> &HalfLineGrid {
        &self.u0.grid
    }
}

pub fn prepare_background(spec: &PotentialSpec, physics: Physics, eps: f64, grid: &HalfLineGrid) -> Result<Background> {
    let u0 = solve_homoclinic(spec, grid)?;
    let spectral = build_operator(&u0, spec)?;
    let eta_d0 = physics.eta_d0();
    let u1 = solve_u1(&spectral, spec, physics.gamma, eta_d0)?;
    let beta0 = compute_beta0(&spectral, &u0, spec).direct;
    let alpha0 = compute_alpha0(&spectral, &u1, spec, eta_d0);
    let c1 = compute_c1(&spectral, spec, &u1, physics.eta1);
    let params = ProfileParams::new(eps, physics.gamma, physics.eta1, eta_d0);
    let seed = first_order_seed(&u0, &u1, params);
    let flat = solve_bilayer_eps(spec, grid, params, &seed)?;
    Ok(Background {
        spec: spec.clone(),
        physics,
        eps,
        lambda0: spectral.lambda0,
        u0,
        u1,
        spectral,
        flat,
        beta0,
        alpha0,
        c1,
    })
}

/// Symmetric t-grid of half-length kappa / B with `points_per_period`
/// nodes per 2 pi / A.
pub fn field_tgrid(g: &GreensParams, kappa: f64, points_per_period: f64) -> Result<TGrid> {
    if points_per_period < MIN_POINTS_PER_PERIOD {
        return Err(FchError::Resolution(format!(
            "{points_per_period} points per period, need at least {MIN_POINTS_PER_PERIOD}"
        )));
    }
    if kappa < 12.0 {
        return Err(FchError::Truncation(format!(
            "t-domain factor kappa = {kappa} below 12"
        )));
    }
    Ok(TGrid::symmetric(kappa / g.b, 2.0 * PI / (g.a * points_per_period)))
}

#[derive(Clone, Debug)]
pub struct ModulatedBilayer {
    pub tgrid: TGrid,
    pub rgrid: HalfLineGrid,
    pub eta_d: Vec<f64>,
    pub values: Vec<f64>,
    pub distinct_slices: usize,
}

impl ModulatedBilayer {
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.rgrid.len();
        &self.values[i * n..(i + 1) * n]
    }
}

/// Solves the radial ODE once per distinct eta_d(t_i) = eta1 - eta2(t_i),
/// where eta2 = eta20 + delta xi.
pub fn modulated_bilayer(bg: &Background, xi: &Inhomogeneity, delta: f64, tgrid: &TGrid) -> Result<ModulatedBilayer> {
    let eta_d0 = bg.physics.eta_d0();
    let eta_d: Vec<f64> = tgrid.nodes().iter().map(|t| eta_d0 - delta * xi.xi(*t)).collect();
    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut unique: Vec<(f64, f64)> = Vec::new();
    let mut slot = Vec::with_capacity(tgrid.n);
    for (i, e) in eta_d.iter().enumerate() {
        let k = *index.entry(e.to_bits()).or_insert_with(|| {
            unique.push((*e, tgrid.node(i)));
            unique.len() - 1
        });
        slot.push(k);
    }
    let grid = bg.grid();
    let p = bg.physics;
    let solved: Vec<Result<Vec<f64>>> = unique
        .par_iter()
        .map(|(e, t)| {
            if e.to_bits() == eta_d0.to_bits() {
                return Ok(bg.flat.values.clone());
            }
            let params = ProfileParams::new(bg.eps, p.gamma, p.eta1, *e);
            solve_bilayer_eps(&bg.spec, grid, params, &bg.flat)
                .map(|s| s.values)
                .map_err(|err| match err {
                    FchError::NonConvergence(m) => FchError::NonConvergence(format!("slice at t = {t}: {m}")),
                    other => other,
                })
        })
        .collect();
    let slices = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let n = grid.len();
    let mut values = Vec::with_capacity(tgrid.n * n);
    for k in &slot {
        values.extend_from_slice(&slices[*k]);
    }
    Ok(ModulatedBilayer {
        tgrid: *tgrid,
        rgrid: grid.clone(),
        eta_d,
        values,
        distinct_slices: unique.len(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct FieldMeta {
    pub eps: f64,
    pub delta: f64,
    pub q_exponent: Option<f64>,
    pub xi_kind: InhomogeneityKind,
    pub xi_half_width: f64,
    pub xi_amplitude: f64,
    pub fourier: FourierPair,
    pub greens: GreensParams,
    pub lambda0: f64,
    pub beta0: f64,
    pub alpha0: f64,
    pub c1: f64,
    pub gamma: f64,
    pub eta1: f64,
    pub eta20: f64,
    /// "leading-order" or "picard".
    pub phi0_source: String,
    pub hyperbolic_correction: bool,
    pub t0: f64,
    pub h_t: f64,
    pub n_t: usize,
    pub r_max: f64,
    pub n_r: usize,
    pub config_hash: Option<String>,
}

#[derive(Clone, Debug)]
pub struct UndulationField {
    pub bilayer: ModulatedBilayer,
    pub psi0: Vec<f64>,
    pub phi0: Vec<f64>,
    pub hyperbolic: Vec<f64>,
    pub meta: FieldMeta,
}

impl UndulationField {
    pub fn n_t(&self) -> usize {
        self.bilayer.tgrid.n
    }

    pub fn n_r(&self) -> usize {
        self.bilayer.rgrid.len()
    }

    /// v = psi0 phi0 + hyperbolic correction.
    pub fn perturbation(&self) -> Vec<f64> {
        let n = self.n_r();
        let mut v = self.hyperbolic.clone();
        for (i, p) in self.phi0.iter().enumerate() {
            for j in 0..n {
                v[i * n + j] += self.psi0[j] * p;
            }
        }
        v
    }

    /// u_n on the grid.
    pub fn values(&self) -> Vec<f64> {
        self.perturbation()
            .iter()
            .zip(&self.bilayer.values)
            .map(|(v, u)| u + v)
            .collect()
    }

    /// CSV (t, r, u_n) keeping every `stride_t`-th row and `stride_r`-th column.
    pub fn to_csv(&self, stride_t: usize, stride_r: usize) -> String {
        let u = self.values();
        let n = self.n_r();
        let mut s = String::from("t,r,u_n\n");
        for i in (0..self.n_t()).step_by(stride_t.max(1)) {
            let t = self.bilayer.tgrid.node(i);
            for j in (0..n).step_by(stride_r.max(1)) {
                let _ = writeln!(s, "{:e},{:e},{:e}", t, self.bilayer.rgrid.node(j), u[i * n + j]);
            }
        }
        s
    }
}

/// u_n = u_{h,delta} + psi0 phi0 (+ hyperbolic correction).
pub fn assemble_un(
    bilayer: ModulatedBilayer,
    phi0: Vec<f64>,
    psi0: Vec<f64>,
    hyperbolic: Option<Vec<f64>>,
    meta: FieldMeta,
) -> Result<UndulationField> {
    let (nt, nr) = (bilayer.tgrid.n, bilayer.rgrid.len());
    if phi0.len() != nt || psi0.len() != nr {
        return Err(FchError::InvalidArgument(format!(
            "dimension mismatch: phi0 {} vs {nt} t-nodes, psi0 {} vs {nr} r-nodes",
            phi0.len(),
            psi0.len()
        )));
    }
    let hyperbolic = match hyperbolic {
        Some(h) if h.len() != nt * nr => {
            return Err(FchError::InvalidArgument(
                "dimension mismatch in hyperbolic correction".into(),
            ))
        }
        Some(h) => h,
        None => vec![0.0; nt * nr],
    };
    Ok(UndulationField {
        bilayer,
        psi0,
        phi0,
        hyperbolic,
        meta,
    })
}

/// Discrete operators of the inner-coordinate equation on one field.
struct Ops<'a> {
    spec: &'a PotentialSpec,
    r: &'a HalfLineGrid,
    nt: usize,
    h_t: f64,
    eps: f64,
    eta1: f64,
    gamma: f64,
    lambda0: f64,
    eta_d: &'a [f64],
}

impl<'a> Ops<'a> {
    fn new(field: &'a UndulationField, spec: &'a PotentialSpec) -> Self {
        let m = &field.meta;
        Ops {
            spec,
            r: &field.bilayer.rgrid,
            nt: field.n_t(),
            h_t: field.bilayer.tgrid.h,
            eps: m.eps,
            eta1: m.eta1,
            gamma: m.gamma,
            lambda0: m.lambda0,
            eta_d: &field.bilayer.eta_d,
        }
    }

    fn nr(&self) -> usize {
        self.r.len()
    }

    /// lambda0 D_tt f at row i (3-point).
    fn dtt(&self, f: &[f64], i: usize, j: usize) -> f64 {
        let n = self.nr();
        self.lambda0 * (f[(i - 1) * n + j] - 2.0 * f[i * n + j] + f[(i + 1) * n + j]) / (self.h_t * self.h_t)
    }

    /// Applies `row_fn` to rows lo..hi in parallel; other rows stay zero.
    fn rows(&self, lo: usize, hi: usize, row_fn: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
        let n = self.nr();
        let mut out = vec![0.0; self.nt * n];
        out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            if i >= lo && i < hi {
                row_fn(i, row);
            }
        });
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Route {
    /// Term by term in v = u - u_{h,delta}.
    Split,
    /// Full left-hand side at u minus the slice-ODE residual.
    Full,
}

fn residual_route(ops: &Ops, ub: &[f64], v: &[f64], route: Route) -> Vec<f64> {
    let n = ops.nr();
    let nt = ops.nt;
    let s = ops.spec;
    let u: Vec<f64> = ub.iter().zip(v).map(|(a, b)| a + b).collect();
    // zr = D_rr u_b - W'(u_b)
    let zr = ops.rows(1, nt - 1, |i, row| {
        let d = ops.r.d2(&ub[i * n..(i + 1) * n], Parity::Even);
        for j in 0..n {
            row[j] = d[j] - s.dw(ub[i * n + j]);
        }
    });
    let inner = ops.rows(1, nt - 1, |i, row| {
        let src = match route {
            Route::Split => &v[i * n..(i + 1) * n],
            Route::Full => &u[i * n..(i + 1) * n],
        };
        let d = ops.r.d2(src, Parity::Even);
        for j in 0..n {
            let k = i * n + j;
            row[j] = match route {
                Route::Split => d[j] - (s.dw(u[k]) - s.dw(ub[k])) + ops.dtt(&u, i, j),
                Route::Full => d[j] - s.dw(u[k]) + ops.dtt(&u, i, j),
            };
        }
    });
    let e = ops.eps;
    ops.rows(2, nt - 2, |i, row| {
        let b = &inner[i * n..(i + 1) * n];
        let db = ops.r.d2(b, Parity::Even);
        let z = &zr[i * n..(i + 1) * n];
        let dz = ops.r.d2(z, Parity::Even);
        let ed = e * ops.eta_d[i];
        for j in 0..n {
            let k = i * n + j;
            let outer = db[j] - s.d2w(u[k]) * b[j] + ops.dtt(&inner, i, j) + e * ops.eta1 * b[j];
            row[j] = match route {
                Route::Split => {
                    outer - (s.d2w(u[k]) - s.d2w(ub[k])) * z[j] + ops.dtt(&zr, i, j) + ed * (s.dw(u[k]) - s.dw(ub[k]))
                }
                Route::Full => {
                    let full = outer + ed * s.dw(u[k]) - e * ops.gamma;
                    let slice = dz[j] - s.d2w(ub[k]) * z[j] + e * ops.eta1 * z[j] + ed * s.dw(ub[k]) - e * ops.gamma;
                    full - slice
                }
            };
        }
    })
}

/// F(v; delta, eps) on the grid; the two t-rows at each end are left zero.
pub fn residual_values(field: &UndulationField, spec: &PotentialSpec, v: &[f64]) -> Vec<f64> {
    residual_route(&Ops::new(field, spec), &field.bilayer.values, v, Route::Split)
}

/// Linearization of F at v = 0 applied to `v`.
pub fn apply_linearization(field: &UndulationField, spec: &PotentialSpec, v: &[f64]) -> Vec<f64> {
    let ops = Ops::new(field, spec);
    let n = ops.nr();
    let nt = ops.nt;
    let ub = &field.bilayer.values;
    let inner = ops.rows(1, nt - 1, |i, row| {
        let d = ops.r.d2(&v[i * n..(i + 1) * n], Parity::Even);
        for j in 0..n {
            let k = i * n + j;
            row[j] = d[j] - spec.d2w(ub[k]) * v[k] + ops.dtt(v, i, j);
        }
    });
    ops.rows(2, nt - 2, |i, row| {
        let b = &inner[i * n..(i + 1) * n];
        let db = ops.r.d2(b, Parity::Even);
        let d2u = ops.r.d2(&ub[i * n..(i + 1) * n], Parity::Even);
        for j in 0..n {
            let k = i * n + j;
            let w = d2u[j] - spec.dw(ub[k]);
            row[j] = db[j] - spec.d2w(ub[k]) * b[j]
                + ops.dtt(&inner, i, j)
                + ops.eps * ops.eta1 * b[j]
                + (ops.eps * ops.eta_d[i] * spec.d2w(ub[k]) - spec.d3w(ub[k]) * w) * v[k]
                - ops.dtt(ub, i, j) * spec.d3w(ub[k]) * v[k];
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResidualReport {
    pub sup: f64,
    pub l2: f64,
    pub h_t: f64,
    pub h_r: f64,
    pub eps: f64,
    pub delta: f64,
    /// Largest pointwise difference between the two evaluation routes.
    pub route_gap: f64,
}

fn norms(field: &UndulationField, f: &[f64]) -> (f64, f64) {
    let n = field.n_r();
    let g = &field.bilayer.rgrid;
    let h_t = field.bilayer.tgrid.h;
    let parts: Vec<(f64, f64)> = f
        .par_chunks(n)
        .map(|row| {
            let sup = row.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let ss: f64 = row.iter().enumerate().map(|(j, x)| 2.0 * g.weight(j) * x * x).sum();
            (sup, ss)
        })
        .collect();
    let (sup, ss) = parts.iter().fold((0.0f64, 0.0), |a, p| (a.0.max(p.0), a.1 + p.1));
    (sup, (h_t * ss).sqrt())
}

fn check_resolution(field: &UndulationField) -> Result<()> {
    let per = 2.0 * PI / (field.meta.greens.a * field.bilayer.tgrid.h);
    if per < MIN_POINTS_PER_PERIOD {
        return Err(FchError::Resolution(format!(
            "{per:.2} t-points per oscillation period, need at least {MIN_POINTS_PER_PERIOD}"
        )));
    }
    if field.n_t() < 5 {
        return Err(FchError::Resolution("fewer than five t-rows".into()));
    }
    Ok(())
}

fn report_for(field: &UndulationField, spec: &PotentialSpec, v: &[f64]) -> Result<ResidualReport> {
    check_resolution(field)?;
    let ops = Ops::new(field, spec);
    let a = residual_route(&ops, &field.bilayer.values, v, Route::Split);
    let b = residual_route(&ops, &field.bilayer.values, v, Route::Full);
    let gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let (sup, l2) = norms(field, &a);
    Ok(ResidualReport {
        sup,
        l2,
        h_t: field.bilayer.tgrid.h,
        h_r: field.bilayer.rgrid.spacing(),
        eps: field.meta.eps,
        delta: field.meta.delta,
        route_gap: gap,
    })
}

/// Residual at the assembled field u_n.
#[allow(non_snake_case)]
pub fn residual_F(field: &UndulationField, spec: &PotentialSpec) -> Result<ResidualReport> {
    report_for(field, spec, &field.perturbation())
}

/// Residual of the modulated bilayer alone (v = 0).
pub fn residual_bare(field: &UndulationField, spec: &PotentialSpec) -> Result<ResidualReport> {
    report_for(field, spec, &vec![0.0; field.n_t() * field.n_r()])
}

/// Even eigenbasis of the discrete L0 on the field's r-grid.
pub struct ModeBasis {
    eigenvalues: Vec<f64>,
    /// Columns are eigenvectors orthonormal in the trapezoid weight.
    vectors: DMatrix<f64>,
    weights: Vec<f64>,
    top: usize,
}

impl ModeBasis {
    pub fn new(bg: &Background) -> Result<Self> {
        let grid = bg.grid();
        let s = grid.operator_symmetric(bg.spectral.potential(), Parity::Even);
        let m = s.dim();
        let dense = DMatrix::from_fn(m, m, |i, j| s.get(i, j));
        let eig = SymmetricEigen::new(dense);
        let weights: Vec<f64> = (0..m).map(|j| grid.weight(j)).collect();
        let mut vectors = eig.eigenvectors;
        for j in 0..m {
            for (i, w) in weights.iter().enumerate() {
                vectors[(i, j)] /= w.sqrt();
            }
        }
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let top = (0..m)
            .max_by(|a, b| eigenvalues[*a].total_cmp(&eigenvalues[*b]))
            .unwrap_or(0);
        if let Some(bad) = (0..m).find(|&j| j != top && eigenvalues[j] >= 0.0) {
            return Err(FchError::Spectral(format!(
                "second nonnegative even eigenvalue {:e}",
                eigenvalues[bad]
            )));
        }
        Ok(ModeBasis {
            eigenvalues,
            vectors,
            weights,
            top,
        })
    }

    pub fn top_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.top]
    }
}

/// Thomas solve of (lam + c D_tt) x = b with zero Dirichlet data beyond the ends.
fn tridiagonal_solve(lam: f64, c: f64, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let diag = lam - 2.0 * c;
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = diag;
    cp[0] = c / denom;
    dp[0] = b[0] / denom;
    for i in 1..n {
        denom = diag - c * cp[i - 1];
        cp[i] = c / denom;
        dp[i] = (b[i] - c * dp[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// v_h = -(Q L0 Q)^{-1} Q f with L0 = (L0_r + lambda0 D_tt)^2, solved mode by
/// mode in the even eigenbasis of L0_r; the psi0 component is discarded.
pub fn hyperbolic_correction(basis: &ModeBasis, lambda0: f64, tgrid: &TGrid, f: &[f64]) -> Vec<f64> {
    let m = basis.weights.len();
    let nt = tgrid.n;
    let fm = DMatrix::from_row_slice(nt, m, f);
    let mut weighted = basis.vectors.clone();
    for (i, w) in basis.weights.iter().enumerate() {
        for j in 0..m {
            weighted[(i, j)] *= w;
        }
    }
    let coeffs = fm * weighted;
    let c = lambda0 / (tgrid.h * tgrid.h);
    let cols: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            if j == basis.top {
                return vec![0.0; nt];
            }
            let rhs: Vec<f64> = coeffs.column(j).iter().map(|x| -x).collect();
            let z = tridiagonal_solve(basis.eigenvalues[j], c, &rhs);
            tridiagonal_solve(basis.eigenvalues[j], c, &z)
        })
        .collect();
    let solved = DMatrix::from_fn(nt, m, |i, j| cols[j][i]);
    let v = solved * basis.vectors.transpose();
    let mut out = vec![0.0; nt * m];
    for i in 0..nt {
        for j in 0..m {
            out[i * m + j] = v[(i, j)];
        }
    }
    out
}

/// Leading-order amplitude phi0 = -delta eps lambda0^{-2} G * K0.
pub fn phi0_linear_solve(
    greens: &GreensParams,
    beta0: f64,
    lambda0: f64,
    xi: &Inhomogeneity,
    delta: f64,
    tgrid: &TGrid,
) -> Result<Vec<f64>> {
    if delta == 0.0 {
        return Ok(vec![0.0; tgrid.n]);
    }
    let scale = -delta * greens.eps / (lambda0 * lambda0);
    Ok(convolve_gk0(greens, beta0, xi, tgrid)?
        .iter()
        .map(|x| scale * x)
        .collect())
}

/// Projection <psi0, F(t, .)> for every t-row.
pub fn project_psi0(field: &UndulationField, f: &[f64]) -> Vec<f64> {
    let n = field.n_r();
    let g = &field.bilayer.rgrid;
    f.chunks(n)
        .map(|row| g.inner(row, Parity::Even, &field.psi0, Parity::Even))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    pub differences: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
}

/// Fixed-point refinement phi0 <- phi0 - lambda0^{-2} G * <psi0, F(psi0 phi0 + v_h)>,
/// with the hyperbolic part held fixed.
pub fn phi0_picard_refine(
    field: &UndulationField,
    spec: &PotentialSpec,
    max_iters: usize,
    tol: f64,
) -> Result<(Vec<f64>, PicardReport)> {
    let n = field.n_r();
    let nt = field.n_t();
    let greens = &field.meta.greens;
    let tgrid = &field.bilayer.tgrid;
    let l2 = field.meta.lambda0 * field.meta.lambda0;
    let mut phi = field.phi0.clone();
    let mut report = PicardReport {
        iterations: 0,
        differences: Vec::new(),
        ratios: Vec::new(),
        converged: false,
    };
    for _ in 0..max_iters {
        let mut v = field.hyperbolic.clone();
        for i in 0..nt {
            for j in 0..n {
                v[i * n + j] += field.psi0[j] * phi[i];
            }
        }
        let f = residual_values(field, spec, &v);
        let k = project_psi0(field, &f);
        let corr = convolve_g(greens, tgrid, &k)?;
        let diff = corr.iter().fold(0.0f64, |a, x| a.max(x.abs())) / l2;
        for (p, c) in phi.iter_mut().zip(&corr) {
            *p -= c / l2;
        }
        report.iterations += 1;
        if let Some(prev) = report.differences.last().copied() {
            let ratio: f64 = if prev > 0.0 { diff / prev } else { 0.0 };
            report.ratios.push(ratio);
            if ratio > 2.0 {
                report.differences.push(diff);
                return Err(FchError::ContractionFailure(format!(
                    "successive differences grew by {ratio:.3} at delta = {}, eps = {}",
                    field.meta.delta, field.meta.eps
                )));
            }
        }
        report.differences.push(diff);
        if diff < tol {
            report.converged = true;
            break;
        }
    }
    Ok((phi, report))
}

/// Half-width per t-row: first crossing of `level` by linear interpolation.
pub fn half_widths(field: &UndulationField, values: &[f64], level: f64) -> Result<Vec<f64>> {
    let n = field.n_r();
    values
        .chunks(n)
        .enumerate()
        .map(|(i, row)| {
            crossing_radius(&field.bilayer.rgrid, row, level)
                .ok_or_else(|| FchError::InvalidArgument(format!("row {i} never crosses level {level}")))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub rate: f64,
    pub peaks: usize,
}

/// Fits log|d| ~ c - rate |t| through the per-period maxima of |d| on
/// t_min <= |t| <= t_max (both sides pooled).
pub fn fit_envelope(t: &[f64], d: &[f64], period: f64, t_min: f64, t_max: f64) -> Result<EnvelopeFit> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for side in [1.0, -1.0] {
        let mut lo = t_min;
        while lo + period <= t_max {
            let hi = lo + period;
            let idx: Vec<usize> = (0..t.len())
                .filter(|&i| side * t[i] >= lo && side * t[i] < hi)
                .collect();
            if let Some(&k) = idx.iter().max_by(|a, b| d[**a].abs().total_cmp(&d[**b].abs())) {
                let (mut tp, mut vp) = (t[k].abs(), d[k].abs());
                if k > 0 && k + 1 < t.len() {
                    let (a, b, c) = (d[k - 1].abs(), d[k].abs(), d[k + 1].abs());
                    let den = a - 2.0 * b + c;
                    if den < 0.0 {
                        let off = 0.5 * (a - c) / den;
                        if off.abs() <= 1.0 {
                            vp = b - 0.25 * (a - c) * off;
                            tp = (t[k] + off * (t[k + 1] - t[k])).abs();
                        }
                    }
                }
                if vp > 0.0 {
                    pts.push((tp, vp.ln()));
                }
            }
            lo = hi;
        }
    }
    if pts.len() < 3 {
        return Err(FchError::InvalidArgument(format!(
            "only {} envelope peaks in [{t_min}, {t_max}]",
            pts.len()
        )));
    }
    let slope = loglog_slope_raw(&pts);
    Ok(EnvelopeFit {
        rate: -slope,
        peaks: pts.len(),
    })
}

fn loglog_slope_raw(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.abs().ln())).collect();
    loglog_slope_raw(&pts)
}

#[derive(Clone, Copy, Debug)]
pub struct UndulationOptions {
    /// t half-length is kappa / B.
    pub kappa: f64,
    pub points_per_period: f64,
    pub hyperbolic: bool,
}

impl Default for UndulationOptions {
    fn default() -> Self {
        UndulationOptions {
            kappa: 14.0,
            points_per_period: 24.0,
            hyperbolic: true,
        }
    }
}

/// Builds the assembled field for one (eps, delta).
pub fn build_undulation(
    bg: &Background,
    xi: &Inhomogeneity,
    delta: f64,
    q_exponent: Option<f64>,
    opts: &UndulationOptions,
) -> Result<UndulationField> {
    let greens = greens_params(bg.eps, bg.c1, bg.alpha0)?;
    let fourier = xi_fourier(xi)?;
    let tgrid = field_tgrid(&greens, opts.kappa, opts.points_per_period)?;
    let bilayer = modulated_bilayer(bg, xi, delta, &tgrid)?;
    let phi0 = phi0_linear_solve(&greens, bg.beta0, bg.lambda0, xi, delta, &tgrid)?;
    let meta = FieldMeta {
        eps: bg.eps,
        delta,
        q_exponent,
        xi_kind: xi.kind,
        xi_half_width: xi.half_width,
        xi_amplitude: xi.amplitude,
        fourier,
        greens,
        lambda0: bg.lambda0,
        beta0: bg.beta0,
        alpha0: bg.alpha0,
        c1: bg.c1,
        gamma: bg.physics.gamma,
        eta1: bg.physics.eta1,
        eta20: bg.physics.eta20,
        phi0_source: "leading-order".into(),
        hyperbolic_correction: opts.hyperbolic,
        t0: tgrid.t0,
        h_t: tgrid.h,
        n_t: tgrid.n,
        r_max: bg.grid().radius(),
        n_r: bg.grid().len(),
        config_hash: None,
    };
    let mut field = assemble_un(bilayer, phi0, bg.spectral.psi0.clone(), None, meta)?;
    if opts.hyperbolic && delta != 0.0 {
        let f0 = residual_values(&field, &bg.spec, &vec![0.0; field.n_t() * field.n_r()]);
        let basis = ModeBasis::new(bg)?;
        field.hyperbolic = hyperbolic_correction(&basis, bg.lambda0, &tgrid, &f0);
    }
    Ok(field)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub delta: f64,
    pub sup_bare: f64,
    pub sup_ansatz: f64,
    pub l2_bare: f64,
    pub l2_ansatz: f64,
    pub improvement: f64,
}

impl ScalingRow {
    pub fn new(eps: f64, delta: f64, bare: &ResidualReport, ansatz: &ResidualReport) -> Self {
        // both vanish identically when delta = 0
        let improvement = if ansatz.sup > 0.0 { bare.sup / ansatz.sup } else { 1.0 };
        ScalingRow {
            eps,
            delta,
            sup_bare: bare.sup,
            sup_ansatz: ansatz.sup,
            l2_bare: bare.l2,
            l2_ansatz: ansatz.l2,
            improvement,
        }
    }
}

/// Residual of the bare and assembled fields along an eps ladder with
/// delta = eps^q. Rows come back in ladder order.
pub fn residual_scaling(
    spec: &PotentialSpec,
    physics: Physics,
    rgrid: &HalfLineGrid,
    xi: &Inhomogeneity,
    eps_ladder: &[f64],
    q: f64,
    opts: &UndulationOptions,
) -> Result<Vec<ScalingRow>> {
    let rows: Vec<Result<ScalingRow>> = eps_ladder
        .par_iter()
        .map(|&eps| {
            let bg = prepare_background(spec, physics, eps, rgrid)?;
            let delta = eps.powf(q);
            let field = build_undulation(&bg, xi, delta, Some(q), opts)?;
            let bare = residual_bare(&field, spec)?;
            let full = residual_F(&field, spec)?;
            Ok(ScalingRow::new(eps, delta, &bare, &full))
        })
        .collect();
    rows.into_iter().collect()
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut s = String::from("eps,delta,sup_bare,sup_ansatz,l2_bare,l2_ansatz,improvement\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            r.eps, r.delta, r.sup_bare, r.sup_ansatz, r.l2_bare, r.l2_ansatz, r.improvement
        );
    }
    s
}
