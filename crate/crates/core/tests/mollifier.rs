use csferm::bounds::{h_scaling_fit, NormReport};
use csferm::lattice::LatticeSpec;
use csferm::mollifier::{lemma_report, MollifierSet, SupportPolicy};

#[test]
fn lemma_suite_at_resolved_scales() {
    let spec = LatticeSpec::new(1.0, 48).unwrap();
    let policy = SupportPolicy::default();
    let hs = [1.0 / 8.0, 1.0 / 12.0, 1.0 / 16.0];
    let mut star = Vec::new();
    for &h in &hs {
        let set = MollifierSet::build(&spec, h, &policy).unwrap();
        assert!(set.delta.support.len() > 1);
        let r = lemma_report(&set, &policy).unwrap();
        assert!(r.positivity && r.symmetric && r.support_ok);
        assert!(r.product_defect <= 1e-12 && r.sup_defect <= 1e-12);
        assert!((r.l1_delta_tilde - r.mass * r.mass).abs() <= 1e-12);
        assert!((r.mass - 1.0).abs() < 0.1, "h = {h}: mass {}", r.mass);
        star.push(r.l1_star);
    }
    let fit = h_scaling_fit(&hs, &star).unwrap();
    assert!((2.5..=3.5).contains(&fit.slope), "slope {}", fit.slope);
}

#[test]
fn norm_report_scales_with_h() {
    let spec = LatticeSpec::new(1.0, 48).unwrap();
    let policy = SupportPolicy::default();
    let reports: Vec<NormReport> = [1.0 / 16.0, 1.0 / 12.0, 1.0 / 8.0]
        .iter()
        .map(|&h| NormReport::new(&MollifierSet::build(&spec, h, &policy).unwrap(), &policy, true).unwrap())
        .collect();
    for w in reports.windows(2) {
        assert!(w[1].delta_l2 < w[0].delta_l2);
        assert!(w[1].star_l1 > w[0].star_l1);
        assert!(w.iter().all(|r| r.delta_l2 >= 0.0 && r.plateau_l2 >= 0.0 && r.delta_tilde_l1 >= 0.0));
    }
    let again = NormReport::new(&MollifierSet::build(&spec, 1.0 / 12.0, &policy).unwrap(), &policy, true).unwrap();
    assert_eq!(again, reports[1]);
}
