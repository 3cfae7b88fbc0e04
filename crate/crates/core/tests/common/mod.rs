//! Θ₁ per vertex pair against a literal Grassmann assembly: vertex legs are
//! generators, every unbarred field of T₀ is expanded over dual generators of
//! those legs with explicitly summed smearing weights, T₀³/3! is multiplied out
//! in the algebra and the Gaussian expectation is taken by brute force.

#![allow(dead_code)]

use std::f64::consts::PI;

use csferm::grassmann::{brute_force_expectation, Generator, GrassmannElement, PropagatorAssignment, Species};
use csferm::kernels::{random_propagator, ColoredPropagator, Sector};
use csferm::lattice::{LatticeSpec, Site};
use csferm::mollifier::{KernelKind, MollifierSet, SmearingKernel, SupportPolicy};
use csferm::perturbation::{tuple_contribution, EvalOptions};
use csferm::Complex64;

type C = Complex64;

fn levi(i: usize, j: usize, k: usize) -> f64 {
    if i == j || j == k || i == k {
        0.0
    } else if (i, j, k) == (0, 1, 2) || (i, j, k) == (1, 2, 0) || (i, j, k) == (2, 0, 1) {
        1.0
    } else {
        -1.0
    }
}

fn pair(j: usize, k: usize) -> Option<(u8, f64)> {
    match (j, k) {
        (0, 1) => Some((0, 1.0)),
        (1, 0) => Some((0, -1.0)),
        (0, 2) => Some((1, 1.0)),
        (2, 0) => Some((1, -1.0)),
        (1, 2) => Some((2, 1.0)),
        (2, 1) => Some((2, -1.0)),
        _ => None,
    }
}

fn bar(species: Species, site: usize, index: u8) -> Generator {
    Generator::new(species, true, site as u32, 0, index)
}

pub struct Setup {
    pub spec: LatticeSpec,
    pub kg: ColoredPropagator,
    pub kgh: ColoredPropagator,
    pub moll: MollifierSet,
    /// ⟨Ψ^h(x) Ψ̄^h(z)⟩, ⟨H^h(x) H̄^h(z)⟩ and the ghost two-point function.
    psi: Vec<f64>,
    h: Vec<f64>,
    ghost: Vec<f64>,
}

impl Setup {
    pub fn new(delta: impl Fn(f64) -> f64, plateau: impl Fn(f64) -> f64, ghost_smearing: bool) -> Self {
        let spec = LatticeSpec::new(1.0, 2).unwrap();
        let d = SmearingKernel::radial(spec, 0.5, KernelKind::Custom, 1.0, "test".into(), delta);
        let p = SmearingKernel::radial(spec, 0.5, KernelKind::Custom, 1.0, "test".into(), plateau);
        let moll = MollifierSet::from_kernels(d.clone(), p.clone(), &SupportPolicy::default()).unwrap();
        let sites: Vec<Site> = spec.sites().collect();
        let n = sites.len();
        let w = spec.weight();
        let mut psi = vec![0.0; n * n];
        let mut h = vec![0.0; n * n];
        let mut ghost = vec![0.0; n * n];
        for (x, &sx) in sites.iter().enumerate() {
            for (z, &sz) in sites.iter().enumerate() {
                for &su in &sites {
                    psi[x * n + z] += w * d.value(sx, su) * d.value(su, sz);
                    h[x * n + z] += w * d.value(sx, su) * p.value(su, sz);
                }
                ghost[x * n + z] = if ghost_smearing {
                    psi[x * n + z]
                } else if x == z {
                    1.0 / w
                } else {
                    0.0
                };
            }
        }
        let kg = random_propagator(&spec, 31, Sector::Gauge);
        let kgh = random_propagator(&spec, 32, Sector::Ghost);
        Self { spec, kg, kgh, moll, psi, h, ghost }
    }

    fn vertex(&self, z: usize, ghost: bool) -> GrassmannElement {
        let pre = C::new(0.0, 1.0 / (2.0 * PI)) * self.spec.weight();
        let mut v = GrassmannElement::zero();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for a in 0..3 {
                        for b in 0..3 {
                            for c in 0..3 {
                                let e = levi(i, j, k) * levi(a, b, c);
                                if e == 0.0 {
                                    continue;
                                }
                                let term = if !ghost {
                                    let legs = [
                                        bar(Species::H, z, i as u8),
                                        bar(Species::Psi, z, a as u8),
                                        bar(Species::H, z, j as u8),
                                        bar(Species::Psi, z, b as u8),
                                        bar(Species::H, z, k as u8),
                                        bar(Species::Psi, z, c as u8),
                                    ];
                                    GrassmannElement::monomial(&legs, pre * (e / 36.0))
                                } else {
                                    let Some((p, s)) = pair(j, k) else { continue };
                                    let legs = [
                                        bar(Species::H, z, i as u8),
                                        bar(Species::Psi, z, a as u8),
                                        bar(Species::Ghost, z, b as u8),
                                        bar(Species::AntiGhost, z, 3 * p + c as u8),
                                    ];
                                    GrassmannElement::monomial(&legs, pre * (-e * s))
                                };
                                v = v.add(&term);
                            }
                        }
                    }
                }
            }
        }
        v
    }

    /// T₀ with every unbarred field replaced by its projection onto the
    /// duals of `legs`.
    fn edge_operator(&self, legs: &[Generator]) -> GrassmannElement {
        let sites: Vec<Site> = self.spec.sites().collect();
        let n = sites.len();
        let w2 = self.spec.weight().powi(2);
        let of = |s: Species| legs.iter().copied().filter(move |g| g.species == s);
        let mut acc: std::collections::BTreeMap<Vec<Generator>, C> = Default::default();
        let base = C::new(0.0, -2.0 * PI);
        for l1 in of(Species::H) {
            for l2 in of(Species::Psi) {
                for l3 in of(Species::H) {
                    for l4 in of(Species::Psi) {
                        if l2.index != l4.index {
                            continue;
                        }
                        let (i, j) = (l1.index as usize, l3.index as usize);
                        let mut f = C::new(0.0, 0.0);
                        for x in 0..n {
                            let wx = self.h[x * n + l1.site as usize] * self.psi[x * n + l2.site as usize];
                            if wx == 0.0 {
                                continue;
                            }
                            for y in 0..n {
                                let wy = self.h[y * n + l3.site as usize] * self.psi[y * n + l4.site as usize];
                                f += self.kg.frame(sites[x], sites[y])[i][j] * (wx * wy);
                            }
                        }
                        let e = GrassmannElement::monomial(
                            &[l1.partner(), l2.partner(), l3.partner(), l4.partner()],
                            base * f * w2,
                        );
                        for (k, v) in e.terms {
                            *acc.entry(k).or_default() += v;
                        }
                    }
                }
            }
        }
        for l1 in of(Species::Ghost) {
            for l2 in of(Species::AntiGhost) {
                if l1.index != l2.index % 3 {
                    continue;
                }
                let p = (l2.index / 3) as usize;
                let mut f = C::new(0.0, 0.0);
                for x in 0..n {
                    for y in 0..n {
                        let g = self.ghost[x * n + l1.site as usize] * self.ghost[y * n + l2.site as usize];
                        if g == 0.0 {
                            continue;
                        }
                        let fr = self.kgh.frame(sites[x], sites[y]);
                        for i in 0..3 {
                            for j in 0..3 {
                                if let Some((q, s)) = pair(i, j) {
                                    if q as usize == p {
                                        f += fr[i][j] * (s * g);
                                    }
                                }
                            }
                        }
                    }
                }
                let e = GrassmannElement::monomial(&[l1.partner(), l2.partner()], base * -2.0 * f * w2);
                for (k, v) in e.terms {
                    *acc.entry(k).or_default() += v;
                }
            }
        }
        let mut out = GrassmannElement::zero();
        for (k, v) in acc {
            out.add_term(k, v);
        }
        out
    }

    /// Contribution of the ordered vertex pair (z1, z2) in one sector.
    pub fn oracle(&self, z1: usize, z2: usize, sector: u32) -> C {
        let v1 = self.vertex(z1, sector & 1 != 0);
        let v2 = self.vertex(z2, sector & 2 != 0);
        let vv = v1.multiply(&v2).scale(C::new(0.5, 0.0));
        let mut total = C::new(0.0, 0.0);
        for (legs, c) in &vv.terms {
            let t0 = self.edge_operator(legs);
            let cube = t0.multiply(&t0).multiply(&t0).scale(C::new(1.0 / 6.0, 0.0));
            let x = cube.multiply(&GrassmannElement::monomial(legs, *c));
            let mut p = PropagatorAssignment::new();
            for g in legs {
                p.set(g.partner(), *g, C::new(1.0, 0.0));
            }
            for (key, v) in &x.terms {
                total += v * brute_force_expectation(key, &p).unwrap();
            }
        }
        total
    }
}

/// Per-sector contributions of the listed tuples, compared against the
/// largest oracle value among them.
pub fn check(setup: &Setup, opts: &EvalOptions, tuples: &[[u32; 2]]) {
    let mut parts = Vec::new();
    for t in tuples {
        for sector in 0..4u32 {
            let oracle = setup.oracle(t[0] as usize, t[1] as usize, sector);
            let got = tuple_contribution(1, &setup.kg, &setup.kgh, Some(&setup.moll), opts, t, Some(sector)).unwrap()[0];
            parts.push((*t, sector, oracle, got));
        }
    }
    let scale = parts.iter().map(|p| p.2.norm()).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (t, sector, oracle, got) in parts {
        assert!((got - oracle).norm() <= 1e-10 * scale, "{t:?} sector {sector}: {oracle} vs {got}");
    }
}

pub fn full(setup: &Setup) -> C {
    let n = setup.spec.site_count();
    let mut total = C::new(0.0, 0.0);
    for z1 in 0..n {
        for z2 in 0..n {
            for sector in 0..4 {
                total += setup.oracle(z1, z2, sector);
            }
        }
    }
    total
}

