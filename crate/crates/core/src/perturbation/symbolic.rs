//! Reference evaluation of Ξₙ by formal differentiation: R_I is expanded as a
//! polynomial in indexed even (A) and odd (c, C) variables and R₀ is applied
//! literally 3n times.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::kernels::ColoredPropagator;
use crate::lattice::Site;

/// Largest number of monomials held at any stage.
pub const SYMBOLIC_TERM_CAP: usize = 4_000_000;
const SITE_CAP: usize = 8;
const PER_SITE: usize = 21;

/// Monomials are ascending variable lists packed one byte per variable
/// (value + 1), lowest byte first.
type Poly = HashMap<u128, C64>;
const MAX_DEGREE: usize = 16;

fn pack(v: &[u16]) -> u128 {
    v.iter().rev().fold(0u128, |k, &g| (k << 8) | (g as u128 + 1))
}

fn unpack(mut k: u128, out: &mut [u16; MAX_DEGREE]) -> usize {
    let mut n = 0;
    while k != 0 {
        out[n] = (k & 0xff) as u16 - 1;
        k >>= 8;
        n += 1;
    }
    n
}

fn eps3(i: usize, j: usize, k: usize) -> f64 {
    ((j as f64 - i as f64) * (k as f64 - i as f64) * (k as f64 - j as f64)) / 2.0
}

fn odd(v: u16) -> bool {
    (v as usize % PER_SITE) >= 9
}

fn a_var(x: usize, i: usize, al: usize) -> u16 {
    (x * PER_SITE + 3 * i + al) as u16
}

fn c_var(x: usize, al: usize) -> u16 {
    (x * PER_SITE + 9 + al) as u16
}

/// Component C^{jk}_γ as (variable, sign); `None` on the diagonal.
fn cc_var(x: usize, j: usize, k: usize, ga: usize) -> Option<(u16, f64)> {
    if j == k {
        return None;
    }
    let (lo, hi, s) = if j < k { (j, k, 1.0) } else { (k, j, -1.0) };
    let slot = match (lo, hi) {
        (0, 1) => 0,
        (0, 2) => 1,
        _ => 2,
    };
    Some(((x * PER_SITE + 12 + 3 * slot + ga) as u16, s))
}

/// Product of variables in the given order, brought to ascending order.
fn normal(seq: &[u16]) -> Option<(f64, u128)> {
    let mut v = seq.to_vec();
    let mut sign = 1.0;
    for i in 0..v.len() {
        for j in (i + 1)..v.len() {
            if v[i] > v[j] && odd(v[i]) && odd(v[j]) {
                sign = -sign;
            }
        }
    }
    v.sort_unstable();
    if v.windows(2).any(|p| p[0] == p[1] && odd(p[0])) {
        return None;
    }
    Some((sign, pack(&v)))
}

fn multiply(a: &Poly, b: &Poly, cap: usize) -> Result<Poly> {
    let mut out = Poly::new();
    let mut ua = [0u16; MAX_DEGREE];
    let mut ub = [0u16; MAX_DEGREE];
    for (ma, ca) in a {
        let la = unpack(*ma, &mut ua);
        for (mb, cb) in b {
            let lb = unpack(*mb, &mut ub);
            if la + lb > MAX_DEGREE {
                return Err(Error::UniverseTooLarge(la + lb, MAX_DEGREE));
            }
            let mut seq = ua[..la].to_vec();
            seq.extend_from_slice(&ub[..lb]);
            if let Some((s, m)) = normal(&seq) {
                *out.entry(m).or_insert(C64::new(0.0, 0.0)) += ca * cb * s;
            }
        }
        if out.len() > cap {
            return Err(Error::UniverseTooLarge(out.len(), cap));
        }
    }
    out.retain(|_, c| c.norm() != 0.0);
    Ok(out)
}

/// Left derivative of an ascending monomial with respect to `v`.
fn derive(m: &[u16], v: u16, out: &mut [u16; MAX_DEGREE]) -> Option<(f64, usize)> {
    let pos = m.iter().position(|&g| g == v)?;
    out[..pos].copy_from_slice(&m[..pos]);
    out[pos..m.len() - 1].copy_from_slice(&m[pos + 1..]);
    let factor = if odd(v) {
        let before = m[..pos].iter().filter(|&&g| odd(g)).count();
        if before % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    } else {
        m.iter().filter(|&&g| g == v).count() as f64
    };
    Some((factor, m.len() - 1))
}

/// The integrand of R_I at site x, times the quadrature weight.
fn interaction(x: usize, w: f64) -> Poly {
    let mut p = Poly::new();
    let pre = C64::new(0.0, -1.0 / (2.0 * PI)) * w;
    {
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for al in 0..3 {
                        for be in 0..3 {
                            for ga in 0..3 {
                                let e = eps3(i, j, k) * eps3(al, be, ga);
                                if e == 0.0 {
                                    continue;
                                }
                                let cubic = [a_var(x, i, al), a_var(x, j, be), a_var(x, k, ga)];
                                if let Some((s, m)) = normal(&cubic) {
                                    *p.entry(m).or_insert(C64::new(0.0, 0.0)) += pre * (e * s / 6.0);
                                }
                                if let Some((cv, cs)) = cc_var(x, j, k, ga) {
                                    if let Some((s, m)) = normal(&[a_var(x, i, al), c_var(x, be), cv]) {
                                        *p.entry(m).or_insert(C64::new(0.0, 0.0)) -= pre * (e * s * cs);
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    p.retain(|_, c| c.norm() != 0.0);
    p
}

struct Edges<'a> {
    kg: &'a ColoredPropagator,
    kgh: &'a ColoredPropagator,
    vars: usize,
    table: Vec<C64>,
}

impl<'a> Edges<'a> {
    fn new(kg: &'a ColoredPropagator, kgh: &'a ColoredPropagator) -> Self {
        let vars = kg.spec.site_count() * PER_SITE;
        let mut e = Self { kg, kgh, vars, table: Vec::new() };
        e.table = (0..vars * vars).map(|t| e.entry((t / vars) as u16, (t % vars) as u16)).collect();
        e
    }

    fn coef(&self, v1: u16, v2: u16) -> C64 {
        self.table[v1 as usize * self.vars + v2 as usize]
    }

    fn site(&self, v: u16) -> Site {
        self.kg.spec.site_at(v as usize / PER_SITE)
    }

    /// Coefficient of ∂_{v1}∂_{v2} in R₀ (the 1/w per functional derivative
    /// cancels the two quadrature weights).
    fn entry(&self, v1: u16, v2: u16) -> C64 {
        let (l1, l2) = (v1 as usize % PER_SITE, v2 as usize % PER_SITE);
        let base = C64::new(0.0, -2.0 * PI);
        if l1 < 9 && l2 < 9 {
            let (i, al) = (l1 / 3, l1 % 3);
            let (j, be) = (l2 / 3, l2 % 3);
            if al != be {
                return C64::new(0.0, 0.0);
            }
            return base * self.kg.frame(self.site(v1), self.site(v2))[i][j];
        }
        if (9..12).contains(&l1) && l2 >= 12 {
            let al = l1 - 9;
            let slot = (l2 - 12) / 3;
            if (l2 - 12) % 3 != al {
                return C64::new(0.0, 0.0);
            }
            let (i, j) = [(0, 1), (0, 2), (1, 2)][slot];
            let f = self.kgh.frame(self.site(v1), self.site(v2));
            return base * -2.0 * (f[i][j] - f[j][i]);
        }
        C64::new(0.0, 0.0)
    }

    fn apply(&self, p: &Poly, cap: usize) -> Result<Poly> {
        let mut out = Poly::new();
        let (mut um, mut r2, mut r1) = ([0u16; MAX_DEGREE], [0u16; MAX_DEGREE], [0u16; MAX_DEGREE]);
        for (key, c) in p {
            let lm = unpack(*key, &mut um);
            let m = &um[..lm];
            for (a, &v2) in m.iter().enumerate() {
                if a > 0 && m[a - 1] == v2 {
                    continue;
                }
                let Some((s2, l2)) = derive(m, v2, &mut r2) else { continue };
                for (b, &v1) in r2[..l2].iter().enumerate() {
                    if b > 0 && r2[b - 1] == v1 {
                        continue;
                    }
                    let k = self.coef(v1, v2);
                    if k.norm() == 0.0 {
                        continue;
                    }
                    let Some((s1, l1)) = derive(&r2[..l2], v1, &mut r1) else { continue };
                    *out.entry(pack(&r1[..l1])).or_insert(C64::new(0.0, 0.0)) += c * k * (s1 * s2);
                }
            }
            if out.len() > cap {
                return Err(Error::UniverseTooLarge(out.len(), cap));
            }
        }
        out.retain(|_, c| c.norm() != 0.0);
        Ok(out)
    }
}

/// Ξₙ on a lattice of at most 8 sites by literal expansion and differentiation.
pub fn symbolic_oracle_xi(n: usize, kg: &ColoredPropagator, kgh: &ColoredPropagator, cap: usize) -> Result<C64> {
    if kg.spec != kgh.spec {
        return Err(Error::LatticeMismatch);
    }
    let spec = kg.spec;
    let sites = spec.site_count();
    if sites > SITE_CAP {
        return Err(Error::UniverseTooLarge(sites * PER_SITE, SITE_CAP * PER_SITE));
    }
    if n == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    if 6 * n > MAX_DEGREE {
        return Err(Error::OrderTooLarge { n, max: MAX_DEGREE / 6, cost: f64::INFINITY });
    }
    let mut per_site: Vec<Poly> = (0..sites).map(|x| interaction(x, spec.weight())).collect();
    if kgh.bound == 0.0 {
        for p in per_site.iter_mut() {
            p.retain(|m, _| {
                let mut u = [0u16; MAX_DEGREE];
                let l = unpack(*m, &mut u);
                !u[..l].iter().any(|&v| odd(v))
            });
        }
    }
    let edges = Edges::new(kg, kgh);
    let k = 2 * n;
    let one: Poly = HashMap::from([(0u128, C64::new(1.0, 0.0))]);
    let mut total = crate::sum::ComplexSum::default();
    // R_I^{2n}/(2n)! = Σ over site multisets of Π_x V(x)^{m_x}/m_x!
    let mut tuple = vec![0usize; k];
    loop {
        let mut p = one.clone();
        let mut run = 0;
        for t in 0..k {
            run = if t > 0 && tuple[t] == tuple[t - 1] { run + 1 } else { 1 };
            p = multiply(&p, &per_site[tuple[t]], cap)?;
            for c in p.values_mut() {
                *c /= run as f64;
            }
        }
        for t in 1..=3 * n {
            p = edges.apply(&p, cap)?;
            for c in p.values_mut() {
                *c /= t as f64;
            }
        }
        if let Some(c) = p.get(&0u128) {
            total.add(*c);
        }
        let mut t = k;
        loop {
            if t == 0 {
                return Ok(total.value());
            }
            t -= 1;
            if tuple[t] + 1 < sites {
                tuple[t] += 1;
                for r in t + 1..k {
                    tuple[r] = tuple[t];
                }
                break;
            }
        }
    }
}
