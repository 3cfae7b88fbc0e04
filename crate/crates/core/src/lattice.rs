//! Uniform periodic lattice on the flat 3-torus.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::sum::ComplexSum;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeSpec {
    pub side_length: f64,
    pub sites_per_dim: usize,
}

/// A lattice site with coordinates reduced into `[0, N)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site(pub [usize; 3]);

impl LatticeSpec {
    pub fn new(side_length: f64, sites_per_dim: usize) -> Result<Self> {
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::InvalidLattice(format!("side_length = {side_length}")));
        }
        if sites_per_dim < 1 {
            return Err(Error::InvalidLattice("sites_per_dim must be >= 1".into()));
        }
        Ok(Self { side_length, sites_per_dim })
    }

    pub fn n(&self) -> usize {
        self.sites_per_dim
    }

    pub fn spacing(&self) -> f64 {
        self.side_length / self.sites_per_dim as f64
    }

    pub fn weight(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.side_length.powi(3)
    }

    pub fn site_count(&self) -> usize {
        self.sites_per_dim.pow(3)
    }

    pub fn site(&self, n1: i64, n2: i64, n3: i64) -> Site {
        let n = self.sites_per_dim as i64;
        Site([n1.rem_euclid(n) as usize, n2.rem_euclid(n) as usize, n3.rem_euclid(n) as usize])
    }

    pub fn index(&self, s: Site) -> usize {
        let n = self.sites_per_dim;
        (s.0[0] * n + s.0[1]) * n + s.0[2]
    }

    pub fn site_at(&self, idx: usize) -> Site {
        let n = self.sites_per_dim;
        Site([idx / (n * n), (idx / n) % n, idx % n])
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.site_count()).map(|i| self.site_at(i))
    }

    /// Index of the displacement `q - p` reduced modulo N.
    pub fn offset_index(&self, p: Site, q: Site) -> usize {
        let n = self.sites_per_dim;
        let d = |k: usize| (q.0[k] + n - p.0[k]) % n;
        (d(0) * n + d(1)) * n + d(2)
    }

    /// Site reached from `p` by the displacement with offset index `off`.
    pub fn shift(&self, p: Site, off: usize) -> Site {
        let n = self.sites_per_dim;
        let o = self.site_at(off);
        Site([(p.0[0] + o.0[0]) % n, (p.0[1] + o.0[1]) % n, (p.0[2] + o.0[2]) % n])
    }

    /// Offset index of the negated displacement.
    pub fn negate_offset(&self, off: usize) -> usize {
        let n = self.sites_per_dim;
        let o = self.site_at(off).0;
        let neg = |c: usize| (n - c) % n;
        (neg(o[0]) * n + neg(o[1])) * n + neg(o[2])
    }

    /// Minimum-image distance of an integer displacement.
    pub fn displacement_distance(&self, d: [i64; 3]) -> f64 {
        let n = self.sites_per_dim as i64;
        let a = self.spacing();
        let mut s = 0.0;
        for &c in &d {
            let m = c.rem_euclid(n);
            let k = m.min(n - m) as f64 * a;
            s += k * k;
        }
        s.sqrt()
    }

    /// Distance associated with an offset index.
    pub fn offset_distance(&self, off: usize) -> f64 {
        let o = self.site_at(off).0;
        self.displacement_distance([o[0] as i64, o[1] as i64, o[2] as i64])
    }
}

pub fn distance(p: Site, q: Site, spec: &LatticeSpec) -> f64 {
    spec.displacement_distance([
        p.0[0] as i64 - q.0[0] as i64,
        p.0[1] as i64 - q.0[1] as i64,
        p.0[2] as i64 - q.0[2] as i64,
    ])
}

/// `w * sum_x f(x)`.
pub fn integrate<F: Fn(Site) -> Complex64>(f: F, spec: &LatticeSpec) -> Complex64 {
    let mut acc = ComplexSum::default();
    for s in spec.sites() {
        acc.add(f(s));
    }
    acc.value() * spec.weight()
}
