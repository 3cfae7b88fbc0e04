use csferm::kernels::{apply_cutoff, random_propagator, synthetic_propagator, Sector};
use csferm::lattice::LatticeSpec;
use csferm::mollifier::CutoffProfile;
use csferm::perturbation::{symbolic_oracle_xi, xi_term, EvalOptions, SYMBOLIC_TERM_CAP};
use csferm::Complex64;

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[test]
fn xi_matches_symbolic_oracle_on_random_kernels() {
    let spec = LatticeSpec::new(1.0, 2).unwrap();
    let kg = random_propagator(&spec, 11, Sector::Gauge);
    let kgh = random_propagator(&spec, 12, Sector::Ghost);
    let oracle = symbolic_oracle_xi(1, &kg, &kgh, SYMBOLIC_TERM_CAP).unwrap();
    let x = xi_term(1, &kg, &kgh, &EvalOptions::default()).unwrap();
    assert!(rel(x.value, oracle) < 1e-10);
}

#[test]
fn xi_matches_symbolic_oracle_with_cutoff() {
    let spec = LatticeSpec::new(1.0, 2).unwrap();
    let chi = CutoffProfile;
    let kg = apply_cutoff(&synthetic_propagator(&spec, 7, 0, Sector::Gauge).unwrap(), &chi, 0.3).unwrap();
    let kgh = apply_cutoff(&synthetic_propagator(&spec, 7, 0, Sector::Ghost).unwrap(), &chi, 0.3).unwrap();
    let oracle = symbolic_oracle_xi(1, &kg, &kgh, SYMBOLIC_TERM_CAP).unwrap();
    let x = xi_term(1, &kg, &kgh, &EvalOptions::default()).unwrap();
    assert!(rel(x.value, oracle) < 1e-10);
}

#[test]
fn xi_matches_symbolic_oracle_gauge_only_second_order() {
    let spec = LatticeSpec::new(1.0, 2).unwrap();
    let kg = random_propagator(&spec, 21, Sector::Gauge);
    let kgh = random_propagator(&spec, 22, Sector::Ghost).scaled(0.0);
    let oracle = symbolic_oracle_xi(2, &kg, &kgh, SYMBOLIC_TERM_CAP).unwrap();
    let x = xi_term(2, &kg, &kgh, &EvalOptions::default()).unwrap();
    assert!(rel(x.value, oracle) < 1e-10);
}

mod fermionic {
    use super::rel;
    use csferm::kernels::{apply_cutoff, synthetic_propagator, ColoredPropagator, Sector};
    use csferm::lattice::LatticeSpec;
    use csferm::mollifier::{CutoffProfile, MollifierSet, SupportPolicy};
    use csferm::perturbation::*;
    use csferm::Complex64;

    fn kernels(n: usize, eps: f64) -> (ColoredPropagator, ColoredPropagator) {
        let spec = LatticeSpec::new(1.0, n).unwrap();
        let chi = CutoffProfile;
        let band = (n - 1) / 2;
        let band = band.min(2);
        (
            apply_cutoff(&synthetic_propagator(&spec, 7, band, Sector::Gauge).unwrap(), &chi, eps).unwrap(),
            apply_cutoff(&synthetic_propagator(&spec, 7, band, Sector::Ghost).unwrap(), &chi, eps).unwrap(),
        )
    }

    #[test]
    fn kronecker_rewrite_matches_smeared_attachment() {
        let (kg, kgh) = kernels(6, 0.2);
        let moll = MollifierSet::build(&kg.spec, 0.25, &SupportPolicy::default()).unwrap();
        let opts = EvalOptions::default();
        let a = theta_term(1, &kg, &kgh, &moll, &opts).unwrap();
        let b = theta_term_smeared(1, &kg, &kgh, &moll, &opts).unwrap();
        assert_eq!(a.mode, Mode::Kronecker);
        assert_eq!(b.mode, Mode::Smeared);
        assert!(rel(a.value, b.value) < 1e-10, "{} {}", a.value, b.value);
        assert!(rel(a.theta1.unwrap(), b.theta1.unwrap()) < 1e-10);
        assert!(rel(a.theta2.unwrap(), b.theta2.unwrap()) < 1e-10);
    }

    #[test]
    fn matched_part_is_the_normalized_bosonic_term_for_single_site_delta() {
        let (kg, kgh) = kernels(6, 0.2);
        let moll = MollifierSet::build(&kg.spec, 0.25, &SupportPolicy::default()).unwrap();
        let opts = EvalOptions::default();
        let t = theta_term(1, &kg, &kgh, &moll, &opts).unwrap();
        let x = xi_term_normalized(1, &kg, &kgh, moll.mass, &opts).unwrap();
        assert!(rel(t.theta1.unwrap(), x.value) < 1e-10);
    }

    #[test]
    fn second_order_rewrite_matches_direct_attachment() {
        let (kg, kgh) = kernels(6, 0.2);
        let moll = MollifierSet::build(&kg.spec, 0.25, &SupportPolicy::default()).unwrap();
        let opts = EvalOptions::default();
        let tuples: [[u32; 4]; 4] = [[0, 3, 21, 129], [0, 2, 14, 86], [0, 0, 21, 86], [3, 86, 14, 0]];
        let mut rows = Vec::new();
        for t in &tuples {
            for sector in [0u32, 1, 3, 5, 15] {
                let a = tuple_contribution(2, &kg, &kgh, Some(&moll), &opts, t, Some(sector)).unwrap()[0];
                let b = tuple_contribution_direct(2, &kg, &kgh, &moll, &opts, t, sector).unwrap();
                rows.push((*t, sector, a, b));
            }
        }
        let scale = rows.iter().map(|r| r.3.norm()).fold(0.0, f64::max);
        assert!(scale > 0.0);
        for (t, sector, a, b) in rows {
            assert!((a - b).norm() <= 1e-10 * scale, "{t:?} {sector}: {a} {b}");
        }
    }

    #[test]
    fn trivial_orders_and_abelian_limit() {
        let (kg, kgh) = kernels(6, 0.2);
        let moll = MollifierSet::build(&kg.spec, 0.25, &SupportPolicy::default()).unwrap();
        let opts = EvalOptions::default();
        assert_eq!(xi_term(0, &kg, &kgh, &opts).unwrap().value, Complex64::new(1.0, 0.0));
        assert_eq!(theta_term(0, &kg, &kgh, &moll, &opts).unwrap().value, Complex64::new(1.0, 0.0));
        let abelian = EvalOptions { coupling: 0.0, ..opts };
        assert_eq!(xi_term(1, &kg, &kgh, &abelian).unwrap().value.norm(), 0.0);
        let t = theta_term(1, &kg, &kgh, &moll, &abelian).unwrap();
        assert_eq!(t.value.norm(), 0.0);
        assert_eq!(t.theta1.unwrap().norm(), 0.0);
        assert_eq!(t.theta2.unwrap().norm(), 0.0);
        match xi_term(3, &kg, &kgh, &opts) {
            Err(csferm::Error::OrderTooLarge { n: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edge_homogeneity_and_exact_partition() {
        let (kg, kgh) = kernels(12, 0.2);
        let opts = EvalOptions::default();
        for h in [0.25, 1.0 / 6.0] {
            let moll = MollifierSet::build(&kg.spec, h, &SupportPolicy::default()).unwrap();
            let t = theta_split(1, &kg, &kgh, &moll, &opts).unwrap();
            let t2 = theta_term(1, &kg.scaled(2.0), &kgh.scaled(2.0), &moll, &opts).unwrap();
            assert!(rel(t2.value, t.value * 8.0) < 1e-12);
            assert!(t.partition_defect().unwrap() <= 1e-14, "{:?}", t.partition_defect());
        }
    }

    #[test]
    fn equal_mollifiers_still_partition_exactly() {
        let (kg, kgh) = kernels(6, 0.2);
        let built = MollifierSet::build(&kg.spec, 0.25, &SupportPolicy::default()).unwrap();
        let delta = csferm::mollifier::make_delta_h(
            &kg.spec,
            &csferm::mollifier::BumpProfile::new(),
            0.5,
            &SupportPolicy::default(),
        )
        .unwrap();
        let same = MollifierSet::from_kernels(delta.clone(), delta, &SupportPolicy::default()).unwrap();
        assert_eq!(same.delta_tilde.stencil, same.plateau_tilde.stencil);
        let t = theta_split(1, &kg, &kgh, &same, &EvalOptions::default()).unwrap();
        assert_eq!(t.mode, Mode::Smeared);
        assert!(t.partition_defect().unwrap() <= 1e-14);
        assert!(t.theta2.unwrap().norm() > 0.0);
        let _ = built;
    }

    #[test]
    fn cutoff_removes_every_self_edge() {
        let (kg, kgh) = kernels(6, 0.2);
        assert_eq!(max_self_edge(&kg), 0.0);
        assert_eq!(max_self_edge(&kgh), 0.0);
        let spec = LatticeSpec::new(1.0, 6).unwrap();
        let raw = synthetic_propagator(&spec, 7, 2, Sector::Gauge).unwrap();
        assert!(max_self_edge(&raw) > 0.0);
    }
}
