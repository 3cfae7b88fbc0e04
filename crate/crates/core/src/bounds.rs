//! Norm constants, the Berezin-integral bound, the factorial certificate for
//! |Θₙ|, the h-scaling fit and exploratory series diagnostics.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::grassmann::{brute_force_expectation, Generator, PropagatorAssignment, Species, BRUTE_FORCE_CAP};
use crate::kernels::ColoredPropagator;
use crate::lattice::LatticeSpec;
use crate::mollifier::{kernel_norms, MollifierSet, SmearingKernel, SupportPolicy};
use crate::perturbation::TermResult;

/// Sup-over-x norms of one mollifier set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormReport {
    pub spec: LatticeSpec,
    pub h: f64,
    pub mass: f64,
    /// ‖δ_h(x,·)‖₂
    pub delta_l2: f64,
    /// ‖D_h(x,·)‖₂
    pub plateau_l2: f64,
    /// L₂ norm attached to c and C: ‖δ_h‖₂ when smeared, the lattice delta otherwise.
    pub ghost_l2: f64,
    /// ‖δ̃_h(x,·)‖₁
    pub delta_tilde_l1: f64,
    /// ‖δ̃_h⋆D̃_h(x,·)‖₁
    pub star_l1: f64,
    /// ‖D̃_h(x,·)‖∞
    pub plateau_tilde_linf: f64,
}

impl NormReport {
    pub fn new(moll: &MollifierSet, policy: &SupportPolicy, ghost_smearing: bool) -> Result<Self> {
        let delta_l2 = kernel_norms(&moll.delta).l2;
        let star = moll.star(policy)?;
        Ok(Self {
            spec: moll.spec,
            h: moll.h,
            mass: moll.mass,
            delta_l2,
            plateau_l2: kernel_norms(&moll.plateau).l2,
            ghost_l2: if ghost_smearing { delta_l2 } else { 1.0 / moll.spec.weight().sqrt() },
            delta_tilde_l1: kernel_norms(&moll.delta_tilde).l1,
            star_l1: kernel_norms(&star).l1,
            plateau_tilde_linf: kernel_norms(&moll.plateau_tilde).linf,
        })
    }
}

/// (sup‖δ_h‖₂)^{9q+7p} (sup‖D_h‖₂)^{3q+p}, with the 4p ghost factors taken
/// from `ghost_l2`.
pub fn berezin_bound(q: usize, p: usize, norms: &NormReport) -> f64 {
    norms.delta_l2.powi((9 * q + 3 * p) as i32)
        * norms.ghost_l2.powi((4 * p) as i32)
        * norms.plateau_l2.powi((3 * q + p) as i32)
}

/// Sup bounds on the propagator entries and the remaining constants of a term.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelBounds {
    /// max |L₁ entry|
    pub gauge: f64,
    /// max |L₀ entry|
    pub ghost: f64,
    pub volume: f64,
    pub coupling: f64,
}

impl KernelBounds {
    pub fn from_kernels(kg: &ColoredPropagator, kgh: &ColoredPropagator, coupling: f64) -> Result<Self> {
        if kg.spec != kgh.spec {
            return Err(Error::LatticeMismatch);
        }
        Ok(Self { gauge: kg.bound, ghost: kgh.bound, volume: kg.spec.volume(), coupling })
    }
}

/// Index-summed coefficient weight of one cubic vertex (36 terms of 1/6).
pub const CUBIC_WEIGHT: f64 = 6.0;
/// Index-summed weight of one ghost vertex.
pub const GHOST_VERTEX_WEIGHT: f64 = 36.0;
/// Index combinations of one gauge edge.
pub const GAUGE_EDGE_TERMS: f64 = 27.0;
/// Index combinations of one ghost edge times the factor 4 of −2(L₀ᵢⱼ − L₀ⱼᵢ).
pub const GHOST_EDGE_WEIGHT: f64 = 36.0;

/// The assembled constant and its factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant {
    /// Σ_q C(3n, q+n) ≤ 8ⁿ.
    pub term_factor: f64,
    /// 2π s² V⁸ · 27K₁ · ‖δ‖₂¹⁴ ‖D‖₂² per order.
    pub prefactor: f64,
    /// Weight of trading a ghost vertex for a cubic one: 162 K₁ ‖δ‖₂² ‖D‖₂².
    pub cubic_weight: f64,
    /// Weight of a ghost vertex with its ghost edge: 1296 K₀ (‖g‖₂/‖δ‖₂)⁴.
    pub ghost_weight: f64,
    pub c: f64,
}

/// C = 8 · 2π s² V⁸ 27K₁ ‖δ‖₂¹⁴‖D‖₂² · (u + v)², where a term with q cubic
/// and p = 2n − q ghost vertices carries weight u^q v^p.
pub fn assemble_constant(norms: &NormReport, k: &KernelBounds) -> Constant {
    let (d, pl) = (norms.delta_l2, norms.plateau_l2);
    let ratio = if d > 0.0 { norms.ghost_l2 / d } else { 0.0 };
    let prefactor = 2.0 * PI
        * k.coupling * k.coupling
        * k.volume.powi(8)
        * GAUGE_EDGE_TERMS
        * k.gauge
        * d.powi(14)
        * pl * pl;
    let cubic_weight = CUBIC_WEIGHT * GAUGE_EDGE_TERMS * k.gauge * d * d * pl * pl;
    let ghost_weight = GHOST_VERTEX_WEIGHT * GHOST_EDGE_WEIGHT * k.ghost * ratio.powi(4);
    let term_factor = 8.0;
    let c = term_factor * prefactor * (cubic_weight + ghost_weight).powi(2);
    Constant { term_factor, prefactor, cubic_weight, ghost_weight, c }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Sum over q of the per-decomposition bound, before the binomial estimate
/// that yields C; always ≤ Cⁿ.
pub fn order_bound(n: usize, norms: &NormReport, k: &KernelBounds) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let two_pi = 2.0 * PI;
    (0..=2 * n)
        .map(|q| {
            let p = 2 * n - q;
            let gauge_edges = (3 * q + p) / 2;
            binomial(2 * n, q)
                * binomial(3 * n, gauge_edges)
                * two_pi.powi(n as i32)
                * k.coupling.powi(2 * n as i32)
                * k.volume.powi(8 * n as i32)
                * CUBIC_WEIGHT.powi(q as i32)
                * (GHOST_VERTEX_WEIGHT * GHOST_EDGE_WEIGHT * k.ghost).powi(p as i32)
                * (GAUGE_EDGE_TERMS * k.gauge).powi(gauge_edges as i32)
                * berezin_bound(q, p, norms)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCertificate {
    pub n: usize,
    /// Cubic-vertex counts q covered; p = 2n − q.
    pub q_range: (usize, usize),
    /// max over the range of berezin_bound(q, 2n − q)
    pub berezin: f64,
    pub constant: Constant,
    /// Sum of the per-q bounds, times 1/((2n)!(3n)!).
    pub order_bound: f64,
    /// Cⁿ/((2n)!(3n)!)
    pub bound: f64,
    pub measured: f64,
    /// (|Θₙ| (2n)!(3n)!)^{1/n}
    pub smallest_c: f64,
    /// Wick pairings enumerated per vertex tuple by the evaluator.
    pub pairings: u64,
    pub pass: bool,
}

/// Certifies |Θₙ| ≤ Cⁿ/((2n)!(3n)!) for every supplied order.
pub fn factorial_bound_check(
    results: &[TermResult],
    norms: &NormReport,
    kernels: &KernelBounds,
) -> Result<Vec<BoundCertificate>> {
    if results.is_empty() {
        return Err(Error::Missing("term results for the bound check".into()));
    }
    let constant = assemble_constant(norms, kernels);
    results
        .iter()
        .map(|r| {
            if let Some(h) = r.h {
                if (h - norms.h).abs() > 1e-12 * norms.h.max(1.0) {
                    return Err(Error::Provenance(format!("term at h = {h}, norms at h = {}", norms.h)));
                }
            }
            let n = r.n;
            let denom = factorial(2 * n) * factorial(3 * n);
            let measured = r.value.norm();
            let bound = constant.c.powi(n as i32) / denom;
            let berezin = (0..=2 * n).map(|q| berezin_bound(q, 2 * n - q, norms)).fold(0.0, f64::max);
            let smallest_c = if n == 0 { 0.0 } else { (measured * denom).powf(1.0 / n as f64) };
            Ok(BoundCertificate {
                n,
                q_range: (0, 2 * n),
                berezin,
                constant,
                order_bound: order_bound(n, norms, kernels) / denom,
                bound,
                measured,
                smallest_c,
                pairings: r.pairings,
                pass: measured <= bound,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// 95% confidence interval of the slope.
    pub ci: (f64, f64),
    /// ln y − fitted, per point.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of ln y = a + b ln h.
pub fn h_scaling_fit(h: &[f64], y: &[f64]) -> Result<ScalingFit> {
    if h.len() != y.len() {
        return Err(Error::Invalid("h and value lists differ in length".into()));
    }
    if h.len() < 3 {
        return Err(Error::Invalid(format!("need at least 3 h points, got {}", h.len())));
    }
    if let Some(v) = h.iter().chain(y).find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Invalid(format!("non-positive value {v} in a log-log fit")));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let t: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let xm = x.iter().sum::<f64>() / m;
    let tm = t.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - xm) * (v - xm)).sum();
    if sxx <= 1e-24 * m {
        return Err(Error::Invalid("degenerate sweep: all h values coincide".into()));
    }
    let sxt: f64 = x.iter().zip(&t).map(|(a, b)| (a - xm) * (b - tm)).sum();
    let slope = sxt / sxx;
    let intercept = tm - slope * xm;
    let residuals: Vec<f64> = x.iter().zip(&t).map(|(a, b)| b - (intercept + slope * a)).collect();
    let dof = m - 2.0;
    let s2 = residuals.iter().map(|r| r * r).sum::<f64>() / dof;
    let stderr = (s2 / sxx).sqrt();
    let tq = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Invalid(e.to_string()))?.inverse_cdf(0.975);
    Ok(ScalingFit { slope, intercept, stderr, ci: (slope - tq * stderr, slope + tq * stderr), residuals })
}

/// Partial sums Σ λ^{-n} Θₙ and ratios |Θₙ₊₁/Θₙ|/λ. Exploratory only.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesDiagnostics {
    pub exploratory: bool,
    pub lambda: f64,
    /// (n, partial sum through n)
    pub partial_sums: Vec<(usize, C64)>,
    /// (n, |Θₙ₊₁/Θₙ|/λ)
    pub ratios: Vec<(usize, f64)>,
}

pub fn series_diagnostics(terms: &[TermResult], lambda: f64) -> Result<SeriesDiagnostics> {
    if lambda == 0.0 || !lambda.is_finite() {
        return Err(Error::Invalid("λ must be finite and nonzero".into()));
    }
    let mut sorted: Vec<&TermResult> = terms.iter().collect();
    sorted.sort_by_key(|t| t.n);
    let mut acc = C64::new(0.0, 0.0);
    let mut partial_sums = Vec::new();
    for t in &sorted {
        acc += t.value * lambda.powi(-(t.n as i32));
        partial_sums.push((t.n, acc));
    }
    let ratios = sorted
        .windows(2)
        .filter(|w| w[1].n == w[0].n + 1)
        .map(|w| (w[0].n, (w[1].value / w[0].value).norm() / lambda.abs()))
        .collect();
    Ok(SeriesDiagnostics { exploratory: true, lambda, partial_sums, ratios })
}

/// One directly evaluated Berezin integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpotSample {
    pub q: usize,
    pub p: usize,
    pub measured: f64,
    pub bound: f64,
}

/// (q, p) shapes whose generator universe fits the brute-force oracle.
pub const SPOT_SHAPES: [(usize, usize); 3] = [(2, 0), (1, 1), (0, 2)];

fn two_point(k: &SmearingKernel, spec: &LatticeSpec, x: u32, z: u32) -> f64 {
    k.value(spec.site_at(x as usize), spec.site_at(z as usize))
}

/// Pointwise Berezin integrals B at random positions and indices, evaluated
/// with the brute-force Grassmann oracle and compared to berezin_bound.
pub fn berezin_spot_check(
    moll: &MollifierSet,
    norms: &NormReport,
    ghost_smearing: bool,
    count: usize,
    seed: u64,
) -> Result<Vec<SpotSample>> {
    let spec = moll.spec;
    let sites = spec.site_count() as u32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let (q, p) = SPOT_SHAPES[s % SPOT_SHAPES.len()];
        // distinct vertex sites; leg indices follow the ε structure of the vertices
        let mut zs: Vec<u32> = Vec::new();
        while zs.len() < q + p {
            let z = rng.gen_range(0..sites);
            if !zs.contains(&z) {
                zs.push(z);
            }
        }
        let perm = |rng: &mut ChaCha8Rng| {
            let mut v = [0u8, 1, 2];
            v.shuffle(rng);
            v
        };
        let mut barred: Vec<(Species, u32, u8)> = Vec::new();
        for &z in &zs[..q] {
            let (i, a) = (perm(&mut rng), perm(&mut rng));
            for k in 0..3 {
                barred.push((Species::H, z, i[k]));
                barred.push((Species::Psi, z, a[k]));
            }
        }
        for &z in &zs[q..] {
            let (i, a) = (perm(&mut rng), perm(&mut rng));
            // C^{jk} slot of the pair complementary to i
            let pair = 2 - i[0];
            barred.push((Species::H, z, i[0]));
            barred.push((Species::Psi, z, a[0]));
            barred.push((Species::Ghost, z, a[1]));
            barred.push((Species::AntiGhost, z, 3 * pair + a[2]));
        }
        // unbarred legs take index and site from a same-species permutation;
        // H legs move to a random site half of the time
        let mut order: Vec<usize> = (0..barred.len()).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&i| barred[i].0);
        let mut by_species: Vec<usize> = (0..barred.len()).collect();
        by_species.sort_by_key(|&i| barred[i].0);
        let mut unbarred = vec![(Species::H, 0u32, 0u8); barred.len()];
        for (&dst, &src) in by_species.iter().zip(&order) {
            let (sp, z, idx) = barred[src];
            let site = if sp == Species::H && rng.gen_bool(0.5) { rng.gen_range(0..sites) } else { z };
            unbarred[dst] = (sp, site, idx);
        }
        let gen = |(sp, site, idx): (Species, u32, u8), bar: bool, slot: usize| {
            Generator::new(sp, bar, site, slot as u32, idx)
        };
        let bars: Vec<Generator> = barred.iter().enumerate().map(|(i, &b)| gen(b, true, i)).collect();
        let unbars: Vec<Generator> = unbarred.iter().enumerate().map(|(i, &u)| gen(u, false, i)).collect();
        if bars.len() + unbars.len() > BRUTE_FORCE_CAP {
            return Err(Error::UniverseTooLarge(bars.len() + unbars.len(), BRUTE_FORCE_CAP));
        }
        let mut prop = PropagatorAssignment::new();
        for u in &unbars {
            for b in &bars {
                if u.species != b.species || u.index != b.index {
                    continue;
                }
                let v = match u.species {
                    Species::H => two_point(&moll.plateau_tilde, &spec, u.site, b.site),
                    Species::Psi => two_point(&moll.delta_tilde, &spec, u.site, b.site),
                    _ if ghost_smearing => two_point(&moll.delta_tilde, &spec, u.site, b.site),
                    _ => {
                        if u.site == b.site {
                            1.0 / spec.weight()
                        } else {
                            0.0
                        }
                    }
                };
                prop.set(*u, *b, C64::new(v, 0.0));
            }
        }
        let mut monomial = unbars;
        monomial.extend(bars);
        let measured = brute_force_expectation(&monomial, &prop)?.norm();
        out.push(SpotSample { q, p, measured, bound: berezin_bound(q, p, norms) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturbation::Mode;

    fn norms(d: f64, pl: f64) -> NormReport {
        NormReport {
            spec: LatticeSpec::new(1.0, 4).unwrap(),
            h: 0.5,
            mass: 1.0,
            delta_l2: d,
            plateau_l2: pl,
            ghost_l2: d,
            delta_tilde_l1: 1.0,
            star_l1: 0.0,
            plateau_tilde_linf: 1.0,
        }
    }

    fn term(n: usize, value: C64) -> TermResult {
        TermResult {
            n,
            epsilon: Some(0.3),
            h: Some(0.5),
            mode: Mode::Smeared,
            value,
            theta1: None,
            theta2: None,
            pairings: 1,
            tuples: 1,
            terms: 1,
            wall_seconds: 0.0,
        }
    }

    fn kb(g: f64, gh: f64) -> KernelBounds {
        KernelBounds { gauge: g, ghost: gh, volume: 1.0, coupling: 1.0 }
    }

    #[test]
    fn berezin_exponents() {
        assert_eq!(berezin_bound(0, 0, &norms(3.0, 5.0)), 1.0);
        let n = norms(1.3, 0.7);
        let want = 1.3f64.powi(18) * 0.7f64.powi(6);
        assert!((berezin_bound(2, 0, &n) - want).abs() <= 1e-15 * want);
        let r = berezin_bound(1, 1, &norms(2.6, 0.7)) / berezin_bound(1, 1, &n);
        assert!((r - 2f64.powi(16)).abs() <= 1e-9);
    }

    #[test]
    fn unsmeared_ghosts_use_their_own_norm() {
        let mut n = norms(2.0, 1.0);
        n.ghost_l2 = 3.0;
        assert_eq!(berezin_bound(0, 1, &n), 8.0 * 81.0);
    }

    #[test]
    fn order_bound_is_dominated_by_the_constant() {
        let n = norms(1.7, 0.4);
        let k = kb(0.3, 0.2);
        let c = assemble_constant(&n, &k).c;
        for order in 1..=4 {
            let b = order_bound(order, &n, &k);
            assert!(b > 0.0 && b <= c.powi(order as i32) * (1.0 + 1e-12), "n = {order}");
        }
    }

    #[test]
    fn trivial_certificates() {
        let n = norms(1.0, 1.0);
        let c = factorial_bound_check(&[term(0, C64::new(1.0, 0.0))], &n, &kb(1.0, 1.0)).unwrap();
        assert!(c[0].pass && c[0].bound == 1.0);
        let c = factorial_bound_check(&[term(1, C64::new(0.0, 0.0)), term(2, C64::new(0.0, 0.0))], &n, &kb(0.0, 0.0))
            .unwrap();
        assert!(c.iter().all(|x| x.pass));
        let c = factorial_bound_check(&[term(1, C64::new(1e60, 0.0))], &n, &kb(1e-3, 1e-3)).unwrap();
        assert!(!c[0].pass);
        assert!((c[0].smallest_c - 1e60 * 12.0).abs() <= 1e48);
    }

    #[test]
    fn certificate_rejections() {
        let n = norms(1.0, 1.0);
        assert!(matches!(factorial_bound_check(&[], &n, &kb(1.0, 1.0)), Err(Error::Missing(_))));
        let mut t = term(1, C64::new(0.1, 0.0));
        t.h = Some(0.25);
        assert!(matches!(factorial_bound_check(&[t], &n, &kb(1.0, 1.0)), Err(Error::Provenance(_))));
    }

    #[test]
    fn exact_power_laws() {
        let h = [0.25, 1.0 / 6.0, 0.125, 0.1];
        let y3: Vec<f64> = h.iter().map(|v| v * v * v).collect();
        let f = h_scaling_fit(&h, &y3).unwrap();
        assert!((f.slope - 3.0).abs() <= 1e-12);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
        let y2: Vec<f64> = h.iter().map(|v| 5.0 * v * v).collect();
        assert!((h_scaling_fit(&h, &y2).unwrap().slope - 2.0).abs() <= 1e-12);
    }

    #[test]
    fn noisy_fit_interval_contains_slope() {
        let h = [0.3, 0.2, 0.15, 0.1];
        let y: Vec<f64> = h.iter().zip([1.05, 0.97, 1.02, 0.99]).map(|(v, e)| e * v * v * v).collect();
        let f = h_scaling_fit(&h, &y).unwrap();
        assert!(f.ci.0 < f.slope && f.slope < f.ci.1);
        assert!(f.ci.0 < 3.0 && 3.0 < f.ci.1);
    }

    #[test]
    fn fit_rejections() {
        assert!(h_scaling_fit(&[0.2, 0.2, 0.2], &[1.0, 2.0, 3.0]).is_err());
        assert!(h_scaling_fit(&[0.2, 0.1], &[1.0, 2.0]).is_err());
        assert!(h_scaling_fit(&[0.3, 0.2, 0.1], &[1.0, 0.0, 3.0]).is_err());
    }

    #[test]
    fn series_examples() {
        let one = term(0, C64::new(1.0, 0.0));
        let d = series_diagnostics(&[one.clone()], 2.0).unwrap();
        assert!(d.exploratory);
        assert_eq!(d.partial_sums, vec![(0, C64::new(1.0, 0.0))]);
        assert!(d.ratios.is_empty());
        let t1 = term(1, C64::new(3.0, 4.0));
        let d = series_diagnostics(&[t1.clone(), one.clone()], 2.0).unwrap();
        assert_eq!(d.ratios, vec![(0, 2.5)]);
        assert_eq!(d.partial_sums[1].1, C64::new(2.5, 2.0));
        let d = series_diagnostics(&[one, t1], 1e12).unwrap();
        assert!((d.partial_sums[1].1 - C64::new(1.0, 0.0)).norm() < 1e-11);
        assert!(series_diagnostics(&[], 0.0).is_err());
    }
}
