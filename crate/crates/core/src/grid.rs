//! Uniform half-line grid r in [0, R] with parity-folded finite differences.
//!
//! Functions on the full line are represented by their samples on [0, R]
//! together with a parity. The second derivative uses the fourth-order
//! five-point stencil; ghost values left of r = 0 are reflections (signed by
//! parity) and ghost values right of R are even reflections. With trapezoid
//! weights the resulting matrices are self-adjoint.

use serde::Serialize;

use crate::error::{FchError, Result};
use crate::linalg::{BandMatrix, SymBand};

pub const MIN_NODES: usize = 64;

const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    pub fn times(self, other: Parity) -> Parity {
        if self == other {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HalfLineGrid {
    radius: f64,
    n: usize,
    h: f64,
}

impl HalfLineGrid {
    pub fn new(radius: f64, n: usize) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(FchError::InvalidGrid(format!("radius must be positive, got {radius}")));
        }
        if n < MIN_NODES {
            return Err(FchError::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {n}"
            )));
        }
        Ok(HalfLineGrid {
            radius,
            n,
            h: radius / (n - 1) as f64,
        })
    }

    /// Grid whose radius resolves the far-field decay `exp(-sqrt(w2_origin) R)`.
    pub fn with_decay_check(radius: f64, n: usize, w2_origin: f64) -> Result<Self> {
        let g = Self::new(radius, n)?;
        g.check_decay(w2_origin)?;
        Ok(g)
    }

    pub fn check_decay(&self, w2_origin: f64) -> Result<()> {
        let decay = (-w2_origin.sqrt() * self.radius).exp();
        if decay >= 1e-10 {
            return Err(FchError::InvalidGrid(format!(
                "radius {} too small: far-field decay factor {decay:.3e} >= 1e-10",
                self.radius
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    /// Trapezoid weight of node `j` on [0, R].
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j + 1 == self.n {
            0.5 * self.h
        } else {
            self.h
        }
    }

    /// Full-line integral of an even integrand given on the half line.
    pub fn integrate_even(&self, f: &[f64]) -> f64 {
        2.0 * f.iter().enumerate().map(|(j, v)| self.weight(j) * v).sum::<f64>()
    }

    /// Full-line L2 inner product of two functions of the given parities.
    pub fn inner(&self, f: &[f64], pf: Parity, g: &[f64], pg: Parity) -> f64 {
        if pf != pg {
            return 0.0;
        }
        2.0 * f
            .iter()
            .zip(g)
            .enumerate()
            .map(|(j, (a, b))| self.weight(j) * a * b)
            .sum::<f64>()
    }

    pub fn norm(&self, f: &[f64], p: Parity) -> f64 {
        self.inner(f, p, f, p).sqrt()
    }

    #[inline]
    fn ghost(&self, f: &[f64], idx: isize, parity: Parity) -> f64 {
        let last = (self.n - 1) as isize;
        if idx < 0 {
            parity.sign() * f[(-idx) as usize]
        } else if idx > last {
            f[(2 * last - idx) as usize]
        } else {
            f[idx as usize]
        }
    }

    fn stencil(&self, f: &[f64], parity: Parity, w: &[f64; 5], scale: f64) -> Vec<f64> {
        assert_eq!(f.len(), self.n);
        (0..self.n)
            .map(|j| {
                let j = j as isize;
                let mut acc = 0.0;
                for (m, c) in w.iter().enumerate() {
                    acc += c * self.ghost(f, j + m as isize - 2, parity);
                }
                acc * scale
            })
            .collect()
    }

    /// Fourth-order second derivative with parity folding at r = 0.
    pub fn d2(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let mut out = self.stencil(f, parity, &D2, 1.0 / (self.h * self.h));
        if parity == Parity::Odd {
            out[0] = 0.0;
        }
        out
    }

    /// Fourth-order first derivative; the result has the opposite parity.
    /// Near r = R the reflection is only first-order consistent, which is
    /// harmless for decaying functions.
    pub fn d1(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let mut out = self.stencil(f, parity, &D1, 1.0 / self.h);
        if parity == Parity::Even {
            out[0] = 0.0;
        }
        let last = self.n - 1;
        out[last] = 0.0;
        out
    }

    /// Index range of the unknowns of a parity block (odd functions vanish
    /// at the origin and are not carried).
    pub fn block_offset(&self, parity: Parity) -> usize {
        match parity {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }

    pub fn block_len(&self, parity: Parity) -> usize {
        self.n - self.block_offset(parity)
    }

    /// Coefficients of the folded second-derivative row for node `j` as
    /// pairs (column node, coefficient); node indices refer to the full grid.
    pub fn d2_row(&self, j: usize, parity: Parity) -> Vec<(usize, f64)> {
        let inv = 1.0 / (self.h * self.h);
        let last = (self.n - 1) as isize;
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(5);
        for (m, c) in D2.iter().enumerate() {
            let idx = j as isize + m as isize - 2;
            let (col, sgn) = if idx < 0 {
                ((-idx) as usize, parity.sign())
            } else if idx > last {
                ((2 * last - idx) as usize, 1.0)
            } else {
                (idx as usize, 1.0)
            };
            if parity == Parity::Odd && col == 0 {
                continue;
            }
            if let Some(e) = row.iter_mut().find(|e| e.0 == col) {
                e.1 += sgn * c * inv;
            } else {
                row.push((col, sgn * c * inv));
            }
        }
        row
    }

    /// Band matrix of `d2 + diag(potential)` restricted to a parity block.
    pub fn operator_band(&self, potential: &[f64], parity: Parity) -> BandMatrix<f64> {
        let off = self.block_offset(parity);
        let m = self.block_len(parity);
        let mut a = BandMatrix::zeros(m, 2, 2);
        for j in off..self.n {
            for (col, c) in self.d2_row(j, parity) {
                a.add(j - off, col - off, c);
            }
            a.add(j - off, j - off, potential[j]);
        }
        a
    }

    /// Symmetrized form `W^{1/2} A W^{-1/2}` of `operator_band`.
    pub fn operator_symmetric(&self, potential: &[f64], parity: Parity) -> SymBand {
        let off = self.block_offset(parity);
        let m = self.block_len(parity);
        let a = self.operator_band(potential, parity);
        let mut s = SymBand::zeros(m, 2);
        for i in 0..m {
            let wi = self.weight(i + off).sqrt();
            for j in i.saturating_sub(2)..=i {
                let wj = self.weight(j + off).sqrt();
                s.set(i, j, wi * a.get(i, j) / wj);
            }
        }
        s
    }

    /// Maps a vector of the symmetrized block back to grid values.
    pub fn unsymmetrize(&self, y: &[f64], parity: Parity) -> Vec<f64> {
        let off = self.block_offset(parity);
        let mut f = vec![0.0; self.n];
        for (i, v) in y.iter().enumerate() {
            f[i + off] = v / self.weight(i + off).sqrt();
        }
        f
    }

    pub fn restrict(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        f[self.block_offset(parity)..].to_vec()
    }

    pub fn extend(&self, y: &[f64], parity: Parity) -> Vec<f64> {
        let off = self.block_offset(parity);
        let mut f = vec![0.0; self.n];
        f[off..].copy_from_slice(y);
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_grids() {
        assert!(HalfLineGrid::new(10.0, 10).is_err());
        assert!(HalfLineGrid::new(-1.0, 100).is_err());
        assert!(HalfLineGrid::with_decay_check(5.0, 200, 7.0).is_err());
        assert!(HalfLineGrid::with_decay_check(20.0, 200, 7.0).is_ok());
    }

    #[test]
    fn second_derivative_is_fourth_order() {
        let err = |n: usize| {
            let g = HalfLineGrid::new(10.0, n).unwrap();
            let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
            let d = g.d2(&f, Parity::Even);
            g.nodes()
                .iter()
                .zip(&d)
                .map(|(r, v)| ((4.0 * r * r - 2.0) * (-r * r).exp() - v).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(201) / err(401)).log2();
        assert!(order > 3.8, "order {order}");
    }

    #[test]
    fn odd_block_second_derivative() {
        let g = HalfLineGrid::new(10.0, 401).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| r * (-r * r).exp()).collect();
        let d = g.d2(&f, Parity::Odd);
        for (r, v) in g.nodes().iter().zip(&d) {
            let exact = (4.0 * r.powi(3) - 6.0 * r) * (-r * r).exp();
            assert!((exact - v).abs() < 1e-6);
        }
    }

    #[test]
    fn band_operator_agrees_with_stencil() {
        let g = HalfLineGrid::new(8.0, 81).unwrap();
        let pot: Vec<f64> = g.nodes().iter().map(|r| r.sin()).collect();
        for parity in [Parity::Even, Parity::Odd] {
            let f: Vec<f64> = g
                .nodes()
                .iter()
                .map(|r| {
                    if parity == Parity::Even {
                        (0.3 * r).cos()
                    } else {
                        (0.3 * r).sin()
                    }
                })
                .collect();
            let direct: Vec<f64> = g
                .d2(&f, parity)
                .iter()
                .zip(&pot)
                .zip(&f)
                .map(|((d, p), v)| d + p * v)
                .collect();
            let a = g.operator_band(&pot, parity);
            let y = g.extend(&a.matvec(&g.restrict(&f, parity)), parity);
            for j in g.block_offset(parity)..g.len() {
                assert!((direct[j] - y[j]).abs() < 1e-9, "{parity:?} node {j}");
            }
        }
    }

    #[test]
    fn operator_is_self_adjoint_in_trapezoid_product() {
        let g = HalfLineGrid::new(6.0, 64).unwrap();
        let pot: Vec<f64> = g.nodes().iter().map(|r| (-r).exp()).collect();
        for parity in [Parity::Even, Parity::Odd] {
            let a = g.operator_band(&pot, parity);
            let off = g.block_offset(parity);
            let m = g.block_len(parity);
            for i in 0..m {
                for j in 0..m {
                    let lhs = g.weight(i + off) * a.get(i, j);
                    let rhs = g.weight(j + off) * a.get(j, i);
                    assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
                }
            }
        }
    }

    #[test]
    fn even_integral_of_gaussian() {
        let g = HalfLineGrid::new(12.0, 241).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|r| (-r * r).exp()).collect();
        assert!((g.integrate_even(&f) - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }
}
