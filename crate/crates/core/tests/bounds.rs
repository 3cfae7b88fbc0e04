use csferm::bounds::{berezin_spot_check, NormReport};
use csferm::lattice::LatticeSpec;
use csferm::mollifier::{MollifierSet, SupportPolicy};

fn spot(n: usize, h: f64, ghost_smearing: bool) {
    let spec = LatticeSpec::new(1.0, n).unwrap();
    let policy = SupportPolicy::default();
    let moll = MollifierSet::build(&spec, h, &policy).unwrap();
    let norms = NormReport::new(&moll, &policy, ghost_smearing).unwrap();
    let samples = berezin_spot_check(&moll, &norms, ghost_smearing, 30, 17).unwrap();
    let nonzero = samples.iter().filter(|s| s.measured > 0.0).count();
    assert!(nonzero >= samples.len() / 3, "only {nonzero} nonzero samples");
    for s in &samples {
        assert!(s.measured <= s.bound, "{s:?}");
    }
}

#[test]
fn berezin_bound_dominates_single_site_smearing() {
    spot(6, 0.25, true);
}

#[test]
fn berezin_bound_dominates_extended_smearing() {
    spot(12, 0.25, true);
}

#[test]
fn berezin_bound_dominates_unsmeared_ghosts() {
    spot(12, 0.25, false);
}
