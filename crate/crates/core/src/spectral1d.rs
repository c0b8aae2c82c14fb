//! The linearization L = d_r^2 - W''(u) about a bilayer profile: leading
//! eigenpairs, inverse on the even subspace, and the shifted pseudo-inverse
//! (L - lambda0)^{-p} on the complement of psi0.

use std::fmt::Write as _;

use crate::error::{FchError, Result};
use crate::grid::{HalfLineGrid, Parity};
use crate::linalg::{lu_with_condition, BandLu, BandMatrix};
use crate::potential::PotentialSpec;
use crate::profile1d::BilayerProfile;

pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Clone, Debug)]
pub struct SpectralData {
    grid: HalfLineGrid,
    background: Vec<f64>,
    potential: Vec<f64>,
    even_op: BandMatrix<f64>,
    odd_op: BandMatrix<f64>,
    even_lu: BandLu<f64>,
    even_condition: f64,
    shift: f64,
    shifted_even_lu: BandLu<f64>,
    shifted_odd_lu: BandLu<f64>,
    pub lambda0: f64,
    pub psi0: Vec<f64>,
    pub lambda2: f64,
    pub psi2: Vec<f64>,
    pub lambda1_numeric: f64,
    pub psi1_numeric: Vec<f64>,
    /// Analytic kernel element u' normalized in L2(R).
    pub psi1: Vec<f64>,
    /// Un-normalized u' (the translation mode).
    pub translation_mode: Vec<f64>,
    pub essential_edge: f64,
}

fn shifted(a: &BandMatrix<f64>, s: f64) -> BandMatrix<f64> {
    let mut b = a.clone();
    for i in 0..b.dim() {
        b.add(i, i, -s);
    }
    b
}

impl SpectralData {
    pub fn grid(&self) -> &HalfLineGrid {
        &self.grid
    }

    /// Profile values about which the operator is linearized.
    pub fn background(&self) -> &[f64] {
        &self.background
    }

    /// The multiplication part -W''(u).
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn block(&self, parity: Parity) -> &BandMatrix<f64> {
        match parity {
            Parity::Even => &self.even_op,
            Parity::Odd => &self.odd_op,
        }
    }

    pub fn even_condition(&self) -> f64 {
        self.even_condition
    }

    pub fn apply(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let mut out = self.grid.d2(f, parity);
        for (o, (p, v)) in out.iter_mut().zip(self.potential.iter().zip(f)) {
            *o += p * v;
        }
        if parity == Parity::Odd {
            out[0] = 0.0;
        }
        out
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.grid.inner(f, Parity::Even, g, Parity::Even)
    }

    /// L^{-1} f on the even subspace.
    pub fn solve_even(&self, f: &[f64]) -> Result<Vec<f64>> {
        if self.even_condition > CONDITION_LIMIT {
            return Err(FchError::Conditioning(self.even_condition));
        }
        Ok(self.even_lu.solve(f))
    }

    /// (L - lambda0)^{-power} f, returned orthogonal to psi0.
    pub fn shifted_pseudo_inverse(&self, f: &[f64], parity: Parity, power: u32) -> Result<Vec<f64>> {
        if !(power == 1 || power == 2) {
            return Err(FchError::InvalidArgument(format!("power must be 1 or 2, got {power}")));
        }
        let mut x = f.to_vec();
        for _ in 0..power {
            x = match parity {
                Parity::Even => self.shifted_even_once(&x)?,
                Parity::Odd => {
                    let y = self.shifted_odd_lu.solve(&self.grid.restrict(&x, Parity::Odd));
                    self.grid.extend(&y, Parity::Odd)
                }
            };
        }
        Ok(x)
    }

    fn shifted_even_once(&self, f: &[f64]) -> Result<Vec<f64>> {
        let fnorm = self.grid.norm(f, Parity::Even);
        if fnorm == 0.0 {
            return Ok(vec![0.0; f.len()]);
        }
        let c = self.inner(f, &self.psi0);
        if c.abs() > 1e-6 * fnorm {
            return Err(FchError::Fredholm(format!("<f, psi0> = {c:e} with |f| = {fnorm:e}")));
        }
        let rhs: Vec<f64> = f.iter().zip(&self.psi0).map(|(a, p)| a - c * p).collect();
        // (L - lambda0) x = rhs  <=>  (L - sigma) x = rhs + s x, sigma = lambda0 - s
        let mut x = vec![0.0; f.len()];
        for _ in 0..200 {
            let b: Vec<f64> = rhs.iter().zip(&x).map(|(r, v)| r + self.shift * v).collect();
            let mut y = self.shifted_even_lu.solve(&b);
            let cy = self.inner(&y, &self.psi0);
            for (v, p) in y.iter_mut().zip(&self.psi0) {
                *v -= cy * p;
            }
            let diff = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let size = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            x = y;
            if diff <= 1e-15 * size {
                break;
            }
        }
        Ok(x)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,psi0,psi1\n");
        for j in 0..self.grid.len() {
            let _ = writeln!(s, "{:e},{:e},{:e}", self.grid.node(j), self.psi0[j], self.psi1[j]);
        }
        s
    }

    /// Even eigenvalues in descending order (first `count`).
    pub fn even_eigenvalues(&self, count: usize) -> Vec<f64> {
        let s = self.grid.operator_symmetric(&self.potential, Parity::Even);
        let m = s.dim();
        (0..count.min(m)).map(|k| s.eigenvalue_by_index(m - 1 - k)).collect()
    }

    /// Number of eigenvalues of a parity block inside (lo, hi).
    pub fn count_in(&self, parity: Parity, lo: f64, hi: f64) -> usize {
        let s = self.grid.operator_symmetric(&self.potential, parity);
        s.count_below(hi) - s.count_below(lo)
    }
}

fn eigenpair(grid: &HalfLineGrid, potential: &[f64], parity: Parity, from_top: usize) -> Result<(f64, Vec<f64>)> {
    let s = grid.operator_symmetric(potential, parity);
    let m = s.dim();
    let (lam, y) = s.eigenpair_by_index(m - 1 - from_top)?;
    let mut f = grid.unsymmetrize(&y, parity);
    let nrm = grid.norm(&f, parity);
    for v in f.iter_mut() {
        *v /= nrm;
    }
    Ok((lam, f))
}

/// Discretizes L about `profile` and computes its leading eigenpairs.
pub fn build_operator(profile: &BilayerProfile, spec: &PotentialSpec) -> Result<SpectralData> {
    let grid = profile.grid.clone();
    let background = profile.values.clone();
    let potential: Vec<f64> = background.iter().map(|u| -spec.d2w(*u)).collect();
    let even_op = grid.operator_band(&potential, Parity::Even);
    let odd_op = grid.operator_band(&potential, Parity::Odd);

    let (lambda0, mut psi0) = eigenpair(&grid, &potential, Parity::Even, 0)?;
    if psi0[0] < 0.0 {
        psi0.iter_mut().for_each(|v| *v = -*v);
    }
    let (lambda2, mut psi2) = eigenpair(&grid, &potential, Parity::Even, 1)?;
    if psi2[0] < 0.0 {
        psi2.iter_mut().for_each(|v| *v = -*v);
    }
    let (lambda1_numeric, mut psi1_numeric) = eigenpair(&grid, &potential, Parity::Odd, 0)?;

    let translation_mode = profile.derivative.clone();
    let tn = grid.norm(&translation_mode, Parity::Odd);
    let psi1: Vec<f64> = translation_mode.iter().map(|v| v / tn).collect();
    if grid.inner(&psi1_numeric, Parity::Odd, &psi1, Parity::Odd) < 0.0 {
        psi1_numeric.iter_mut().for_each(|v| *v = -*v);
    }

    let (even_lu, even_condition) = lu_with_condition(even_op.clone())?;
    let shift = 0.05 * lambda0.abs().max(1e-3);
    let shifted_even_lu = shifted(&even_op, lambda0 - shift).lu()?;
    let shifted_odd_lu = shifted(&odd_op, lambda0).lu()?;
    Ok(SpectralData {
        essential_edge: -spec.d2w(0.0),
        grid,
        background,
        potential,
        even_op,
        odd_op,
        even_lu,
        even_condition,
        shift,
        shifted_even_lu,
        shifted_odd_lu,
        lambda0,
        psi0,
        lambda2,
        psi2,
        lambda1_numeric,
        psi1_numeric,
        psi1,
        translation_mode,
    })
}
