//! Θ₁ against the literal Grassmann assembly in `common`.

mod common;

use common::{check, full, Setup};
use csferm::perturbation::EvalOptions;

#[test]
fn smeared_theta_matches_grassmann_assembly() {
    let setup = Setup::new(|d| 3.0 - 2.0 * d, |d| 1.0 - 0.6 * d * d, true);
    check(&setup, &EvalOptions::default(), &[[0, 5], [3, 3], [6, 1]]);
}

#[test]
fn kronecker_theta_matches_grassmann_assembly() {
    let setup = Setup::new(|d| if d == 0.0 { 5.0 } else { 0.0 }, |d| 1.0 - 0.6 * d * d, true);
    check(&setup, &EvalOptions::default(), &[[0, 5], [3, 3], [6, 1], [2, 4]]);
}

#[test]
fn unsmeared_ghosts_match_grassmann_assembly() {
    let setup = Setup::new(|d| 3.0 - 2.0 * d, |d| 1.0 - 0.6 * d * d, false);
    let opts = EvalOptions { ghost_smearing: false, ..EvalOptions::default() };
    check(&setup, &opts, &[[0, 5], [4, 2]]);
}

#[test]
fn full_theta_matches_grassmann_assembly() {
    use csferm::perturbation::theta_term;
    for delta in [0, 1] {
        let setup = if delta == 0 {
            Setup::new(|d| 3.0 - 2.0 * d, |d| 1.0 - 0.6 * d * d, true)
        } else {
            Setup::new(|d| if d == 0.0 { 5.0 } else { 0.0 }, |d| 1.0 - 0.6 * d * d, true)
        };
        let oracle = full(&setup);
        let got = theta_term(1, &setup.kg, &setup.kgh, &setup.moll, &EvalOptions::default()).unwrap();
        assert!((got.value - oracle).norm() <= 1e-10 * oracle.norm());
    }
}
