mod common;

use common::coarse;
use fch_bilayer::tangential::Inhomogeneity;
use fch_bilayer::undulation2d::{loglog_slope, residual_scaling, Physics, UndulationOptions};

// With delta = eps the remainder is at worst eps^{3/2}; the observed decay is faster.
#[test]
fn residual_decays_at_least_like_the_remainder_bound() {
    let b = coarse();
    let xi = Inhomogeneity::dbump_localized(2.0, 1.0).unwrap();
    let physics = Physics {
        gamma: 1.0,
        eta1: 1.0,
        eta20: 3.0,
    };
    let ladder = [2e-2, 1e-2, 5e-3];
    let rows = residual_scaling(&b.spec, physics, &b.grid, &xi, &ladder, 1.0, &UndulationOptions::default()).unwrap();
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_ansatz).collect();
    let slope = loglog_slope(&ladder, &sups);
    assert!(slope >= 1.25, "{slope} {sups:?}");
    for r in &rows {
        assert!(r.sup_ansatz < r.sup_bare);
    }
}
