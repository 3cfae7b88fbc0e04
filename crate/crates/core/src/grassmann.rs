//! Finite Grassmann algebra, Berezin integration and fermionic Gaussian
//! expectations.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest universe accepted by [`brute_force_expectation`].
pub const BRUTE_FORCE_CAP: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    H,
    Psi,
    /// c
    Ghost,
    /// C
    AntiGhost,
}

/// A generator of the algebra. `index` carries the frame index (H), the
/// algebra index (Ψ, c) or `3·pair + α` (C); `slot` distinguishes copies at
/// the same site (vertex or edge-end labels).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Generator {
    pub barred: bool,
    pub species: Species,
    pub slot: u32,
    pub site: u32,
    pub index: u8,
}

impl Generator {
    pub fn new(species: Species, barred: bool, site: u32, slot: u32, index: u8) -> Self {
        Self { barred, species, slot, site, index }
    }

    /// The generator paired with this one by an identity assignment.
    pub fn partner(&self) -> Self {
        Self { barred: !self.barred, ..*self }
    }
}

/// Sign of the permutation sorting `seq` (distinct entries), or 0 when
/// `seq` has repeated entries.
pub fn sort_sign<T: Ord + Copy>(seq: &[T]) -> (i32, Vec<T>) {
    let mut v = seq.to_vec();
    let mut sign = 1;
    // insertion sort counting transpositions
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return (0, v);
    }
    (sign, v)
}

/// Element of the algebra keyed by strictly increasing generator lists.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GrassmannElement {
    pub terms: BTreeMap<Vec<Generator>, Complex64>,
}

impl GrassmannElement {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn scalar(c: Complex64) -> Self {
        let mut e = Self::zero();
        if c != Complex64::new(0.0, 0.0) {
            e.terms.insert(Vec::new(), c);
        }
        e
    }

    pub fn one() -> Self {
        Self::scalar(Complex64::new(1.0, 0.0))
    }

    /// `c · g_1 g_2 … g_k` in the given order.
    pub fn monomial(gens: &[Generator], c: Complex64) -> Self {
        let (s, sorted) = sort_sign(gens);
        let mut e = Self::zero();
        if s != 0 && c != Complex64::new(0.0, 0.0) {
            e.terms.insert(sorted, c * s as f64);
        }
        e
    }

    pub fn generator(g: Generator) -> Self {
        Self::monomial(&[g], Complex64::new(1.0, 0.0))
    }

    pub fn add_term(&mut self, key: Vec<Generator>, c: Complex64) {
        let e = self.terms.entry(key).or_insert(Complex64::new(0.0, 0.0));
        *e += c;
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(k.clone(), *v);
        }
        out.prune();
        out
    }

    pub fn scale(&self, c: Complex64) -> Self {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= c;
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.terms.retain(|_, v| v.re != 0.0 || v.im != 0.0);
    }

    pub fn coefficient(&self, key: &[Generator]) -> Complex64 {
        self.terms.get(key).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Graded product.
    pub fn multiply(&self, other: &Self) -> Self {
        let mut out = Self::zero();
        for (ka, va) in &self.terms {
            for (kb, vb) in &other.terms {
                if let Some((s, merged)) = merge_sorted(ka, kb) {
                    out.add_term(merged, va * vb * s);
                }
            }
        }
        out.prune();
        out
    }

    pub fn generators(&self) -> BTreeSet<Generator> {
        self.terms.keys().flat_map(|k| k.iter().copied()).collect()
    }
}

/// Merge two increasing lists; sign counts inversions between them.
fn merge_sorted(a: &[Generator], b: &[Generator]) -> Option<(f64, Vec<Generator>)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut inversions = 0usize;
    while i < a.len() && j < b.len() {
        if a[i] == b[j] {
            return None;
        }
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            // b[j] jumps over the remaining a's
            inversions += a.len() - i;
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Some((if inversions % 2 == 0 { 1.0 } else { -1.0 }, out))
}

/// Coefficient of the top monomial written in the stated order.
pub fn berezin_integrate(e: &GrassmannElement, order: &[Generator]) -> Result<Complex64> {
    let (s, sorted) = sort_sign(order);
    if s == 0 {
        return Err(Error::BadOrder("repeated generator".into()));
    }
    let universe: BTreeSet<Generator> = sorted.iter().copied().collect();
    for g in e.generators() {
        if !universe.contains(&g) {
            return Err(Error::BadOrder(format!("{g:?} missing from the order")));
        }
    }
    Ok(e.coefficient(&sorted) * s as f64)
}

/// Two-point values ⟨g ḡ⟩ for unbarred g and barred ḡ.
#[derive(Clone, Debug, Default)]
pub struct PropagatorAssignment {
    values: HashMap<(Generator, Generator), Complex64>,
}

impl PropagatorAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets P(u, b); ignored unless u is unbarred, b barred and the species agree.
    pub fn set(&mut self, u: Generator, b: Generator, v: Complex64) {
        if !u.barred && b.barred && u.species == b.species {
            self.values.insert((u, b), v);
        }
    }

    pub fn get(&self, u: &Generator, b: &Generator) -> Complex64 {
        self.values.get(&(*u, *b)).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn scale_entry(&mut self, u: Generator, b: Generator, t: f64) {
        if let Some(v) = self.values.get_mut(&(u, b)) {
            *v *= t;
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (&(Generator, Generator), &Complex64)> {
        self.values.iter()
    }
}

fn balanced(monomial: &[Generator]) -> bool {
    let mut count: HashMap<Species, i64> = HashMap::new();
    for g in monomial {
        *count.entry(g.species).or_insert(0) += if g.barred { -1 } else { 1 };
    }
    count.values().all(|c| *c == 0)
}

/// Normalized Gaussian expectation by Wick's theorem: signed sum over
/// matchings of unbarred to barred generators of the same species.
pub fn gaussian_expectation(monomial: &[Generator], p: &PropagatorAssignment) -> Complex64 {
    if monomial.len() % 2 == 1 || !balanced(monomial) {
        return Complex64::new(0.0, 0.0);
    }
    wick(monomial.to_vec(), p)
}

fn wick(seq: Vec<Generator>, p: &PropagatorAssignment) -> Complex64 {
    if seq.is_empty() {
        return Complex64::new(1.0, 0.0);
    }
    let first = seq[0];
    let mut total = Complex64::new(0.0, 0.0);
    for j in 1..seq.len() {
        let g = seq[j];
        if g.species != first.species || g.barred == first.barred {
            continue;
        }
        // bring g next to the head: (−1)^{j−1}; put the pair in (u, ḡ) order
        let (u, b) = if first.barred { (g, first) } else { (first, g) };
        let v = p.get(&u, &b);
        if v == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut sign = if (j - 1) % 2 == 0 { 1.0 } else { -1.0 };
        if first.barred {
            sign = -sign;
        }
        let mut rest = Vec::with_capacity(seq.len() - 2);
        rest.extend_from_slice(&seq[1..j]);
        rest.extend_from_slice(&seq[j + 1..]);
        total += v * sign * wick(rest, p);
    }
    total
}

/// Oracle: expands exp(Σ P(g,ḡ) g ḡ) over the generators of the monomial
/// and reads the monomial's coefficient by Berezin integration in the
/// monomial's own order, divided by the same expansion's constant term.
pub fn brute_force_expectation(monomial: &[Generator], p: &PropagatorAssignment) -> Result<Complex64> {
    let universe: BTreeSet<Generator> = monomial.iter().copied().collect();
    if universe.len() > BRUTE_FORCE_CAP {
        return Err(Error::UniverseTooLarge(universe.len(), BRUTE_FORCE_CAP));
    }
    if universe.len() != monomial.len() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let mut quad = GrassmannElement::zero();
    for u in universe.iter().filter(|g| !g.barred) {
        for b in universe.iter().filter(|g| g.barred) {
            let v = p.get(u, b);
            if v != Complex64::new(0.0, 0.0) {
                quad = quad.add(&GrassmannElement::monomial(&[*u, *b], v));
            }
        }
    }
    let mut exp = GrassmannElement::one();
    let mut power = GrassmannElement::one();
    let mut k = 1.0;
    loop {
        power = power.multiply(&quad).scale(Complex64::new(1.0 / k, 0.0));
        if power.is_zero() {
            break;
        }
        exp = exp.add(&power);
        k += 1.0;
    }
    let norm = exp.coefficient(&[]);
    Ok(berezin_integrate(&exp, monomial)? / norm)
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(mut m: Vec<Vec<Complex64>>) -> Complex64 {
    let n = m.len();
    let mut det = Complex64::new(1.0, 0.0);
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| m[a][c].norm().total_cmp(&m[b][c].norm())).unwrap();
        if m[piv][c].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if piv != c {
            m.swap(piv, c);
            det = -det;
        }
        det *= m[c][c];
        for r in (c + 1)..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                let t = m[c][k];
                m[r][k] -= f * t;
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(i: u32, barred: bool) -> Generator {
        Generator::new(Species::Psi, barred, i, 0, 0)
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn nilpotent_and_anticommuting() {
        let a = GrassmannElement::generator(g(1, false));
        let b = GrassmannElement::generator(g(2, false));
        assert!(a.multiply(&a).is_zero());
        let ab = a.multiply(&b);
        let ba = b.multiply(&a);
        assert_eq!(ab.add(&ba), GrassmannElement::zero());
        let one = GrassmannElement::one();
        let lhs = one.add(&a).multiply(&one.add(&b));
        let rhs = one.add(&a).add(&b).add(&ab);
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn berezin_examples() {
        let (a, b) = (g(1, false), g(2, false));
        let top = GrassmannElement::monomial(&[a, b], c(1.0));
        assert_eq!(berezin_integrate(&top, &[a, b]).unwrap(), c(1.0));
        assert_eq!(berezin_integrate(&top, &[b, a]).unwrap(), c(-1.0));
        assert_eq!(berezin_integrate(&GrassmannElement::one(), &[a]).unwrap(), c(0.0));
        assert!(berezin_integrate(&top, &[a]).is_err());
        assert!(berezin_integrate(&top, &[a, a, b]).is_err());
    }

    #[test]
    fn two_by_two_is_a_determinant() {
        let (u1, u2, b1, b2) = (g(1, false), g(2, false), g(1, true), g(2, true));
        let mut p = PropagatorAssignment::new();
        p.set(u1, b1, c(2.0));
        p.set(u1, b2, c(3.0));
        p.set(u2, b1, c(5.0));
        p.set(u2, b2, c(7.0));
        let m = [u1, u2, b2, b1];
        assert_eq!(gaussian_expectation(&m, &p), c(14.0 - 15.0));
        assert!((brute_force_expectation(&m, &p).unwrap() - c(-1.0)).norm() < 1e-14);
        assert_eq!(gaussian_expectation(&[u1, b1], &p), c(2.0));
        assert_eq!(gaussian_expectation(&[u1, b1, u2], &p), c(0.0));
    }

    #[test]
    fn brute_force_edge_cases() {
        let p = PropagatorAssignment::new();
        assert_eq!(brute_force_expectation(&[], &p).unwrap(), c(1.0));
        assert_eq!(brute_force_expectation(&[g(1, false), g(1, true)], &p).unwrap(), c(0.0));
        let big: Vec<Generator> = (0..13).flat_map(|i| [g(i, false), g(i, true)]).collect();
        assert!(matches!(brute_force_expectation(&big, &p), Err(Error::UniverseTooLarge(26, 24))));
    }

    #[test]
    fn determinant_of_permutation_matrix() {
        let m = vec![
            vec![c(0.0), c(1.0), c(0.0)],
            vec![c(1.0), c(0.0), c(0.0)],
            vec![c(0.0), c(0.0), c(1.0)],
        ];
        assert_eq!(determinant(m), c(-1.0));
    }
}
