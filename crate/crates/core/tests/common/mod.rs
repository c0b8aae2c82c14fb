#![allow(dead_code)]

use fch_bilayer::grid::HalfLineGrid;
use fch_bilayer::potential::PotentialSpec;
use fch_bilayer::profile1d::{solve_homoclinic, BilayerProfile};
use fch_bilayer::spectral1d::{build_operator, SpectralData};

pub struct Base {
    pub spec: PotentialSpec,
    pub grid: HalfLineGrid,
    pub u0: BilayerProfile,
    pub spectral: SpectralData,
}

pub fn base(radius: f64, n: usize) -> Base {
    let spec = PotentialSpec::quartic(1.0, 3.5).unwrap();
    let grid = HalfLineGrid::new(radius, n).unwrap();
    let u0 = solve_homoclinic(&spec, &grid).unwrap();
    let spectral = build_operator(&u0, &spec).unwrap();
    Base {
        spec,
        grid,
        u0,
        spectral,
    }
}

/// The accurate grid used for golden numbers.
pub fn fine() -> Base {
    base(20.0, 2001)
}

/// The production grid (R = 12, 241 nodes).
pub fn coarse() -> Base {
    base(12.0, 241)
}

pub fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
