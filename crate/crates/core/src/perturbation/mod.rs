//! Perturbation terms Ξₙ(ε) of the bosonic theory and Θₙ(ε,h) of its
//! fermionization, with the matched/unmatched split of Θₙ.
//!
//! A term is a sum over ordered vertex tuples Z of a pairing polynomial in
//! edge factors. The polynomial depends only on n and the attachment mode and
//! is compiled once; each tuple then only evaluates edge factors.

mod compile;
mod symbolic;

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{ColoredPropagator, Sector};
use crate::lattice::{LatticeSpec, Site};
use crate::mollifier::MollifierSet;
use crate::sum::ComplexSum;

pub use compile::{
    graded_sort, levi, pair_frames, pair_slot, sector_kinds, Compiled, EdgeKind, EdgeSpec, EdgeVar, Group, MinorKey,
    Mode, Model, VertexKind, VertexSpec, BOSON_STRIDE, FERMION_STRIDE, MAX_VERTICES,
};
pub use symbolic::{symbolic_oracle_xi, SYMBOLIC_TERM_CAP};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const CHUNK: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalOptions {
    pub max_order: usize,
    pub workers: usize,
    /// Multiplies the structure constants; 0 gives the abelian theory.
    pub coupling: f64,
    /// Smear c and C with δ_h; off uses the unsmeared delta pairing.
    pub ghost_smearing: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { max_order: 2, workers: 1, coupling: 1.0, ghost_smearing: true }
    }
}

/// One perturbation order.
#[derive(Clone, Debug, PartialEq)]
pub struct TermResult {
    pub n: usize,
    pub epsilon: Option<f64>,
    pub h: Option<f64>,
    pub mode: Mode,
    pub value: C64,
    pub theta1: Option<C64>,
    pub theta2: Option<C64>,
    /// Wick pairings enumerated per vertex tuple.
    pub pairings: u64,
    /// Distinct vertex tuples evaluated.
    pub tuples: u64,
    pub terms: usize,
    pub wall_seconds: f64,
}

impl TermResult {
    fn trivial(n: usize, epsilon: Option<f64>, h: Option<f64>, mode: Mode, value: C64, split: bool) -> Self {
        Self {
            n,
            epsilon,
            h,
            mode,
            value,
            theta1: split.then_some(value),
            theta2: split.then_some(ZERO),
            pairings: 0,
            tuples: 0,
            terms: 0,
            wall_seconds: 0.0,
        }
    }

    /// |Θ¹ + Θ² − Θ| / |Θ|, or the absolute defect when Θ = 0.
    pub fn partition_defect(&self) -> Option<f64> {
        let (a, b) = (self.theta1?, self.theta2?);
        let d = (a + b - self.value).norm();
        Some(if self.value.norm() > 0.0 { d / self.value.norm() } else { d })
    }
}

/// Largest |L(x, x)| over all sites and frame pairs.
pub fn max_self_edge(k: &ColoredPropagator) -> f64 {
    let mut worst: f64 = 0.0;
    let o = Site([0, 0, 0]);
    for r in k.frame(o, o) {
        for z in r {
            worst = worst.max(z.norm());
        }
    }
    worst
}

fn check_kernels(kg: &ColoredPropagator, kgh: &ColoredPropagator) -> Result<()> {
    if kg.spec != kgh.spec {
        return Err(Error::LatticeMismatch);
    }
    if kg.sector != Sector::Gauge || kgh.sector != Sector::Ghost {
        return Err(Error::Invalid("expected a gauge kernel and a ghost kernel".into()));
    }
    Ok(())
}

fn double_factorial(k: usize) -> f64 {
    (1..=k).rev().step_by(2).map(|x| x as f64).product()
}

/// Rough operation count of a direct evaluation at order n.
pub fn cost_estimate(spec: &LatticeSpec, n: usize) -> f64 {
    let sites = spec.site_count() as f64;
    sites.powi((2 * n) as i32 - 1) * double_factorial(12 * n - 1)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|x| x as f64).product()
}

fn compiled(mode: Mode, n: usize, drop_self: bool) -> Arc<Compiled> {
    static CACHE: OnceLock<Mutex<HashMap<(Mode, usize, bool), Arc<Compiled>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().unwrap().get(&(mode, n, drop_self)) {
        return c.clone();
    }
    let c = Arc::new(Compiled::build(mode, n, drop_self));
    cache.lock().unwrap().insert((mode, n, drop_self), c.clone());
    c
}

/// Orbit representatives of k-tuples of sites under translations and
/// relabelings, first site at the origin, with their tuple counts.
pub fn tuple_orbits(spec: &LatticeSpec, k: usize) -> Arc<Vec<(Vec<u32>, u64)>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Vec<(Vec<u32>, u64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (spec.n(), k);
    if let Some(c) = cache.lock().unwrap().get(&key) {
        return c.clone();
    }
    let out = Arc::new(build_orbits(spec, k));
    cache.lock().unwrap().insert(key, out.clone());
    out
}

fn build_orbits(spec: &LatticeSpec, k: usize) -> Vec<(Vec<u32>, u64)> {
    if k <= 1 {
        return vec![(vec![0; k], 1)];
    }
    let n = spec.n();
    let sites = spec.site_count();
    let diff = |z: u32, r: u32| -> u32 {
        let (a, b) = (spec.site_at(z as usize).0, spec.site_at(r as usize).0);
        spec.index(Site([(a[0] + n - b[0]) % n, (a[1] + n - b[1]) % n, (a[2] + n - b[2]) % n])) as u32
    };
    let table: Option<Vec<u32>> = (sites <= 4096).then(|| {
        let mut t = vec![0u32; sites * sites];
        for z in 0..sites {
            for r in 0..sites {
                t[z * sites + r] = diff(z as u32, r as u32);
            }
        }
        t
    });
    let sub = |z: u32, r: u32| match &table {
        Some(t) => t[z as usize * sites + r as usize],
        None => diff(z, r),
    };
    let mut counts: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut tuple = vec![0u32; k];
    let mut cand = vec![0u32; k];
    let mut best = vec![0u32; k];
    loop {
        for r in 0..k {
            let mut m = 1;
            cand[0] = 0;
            for s in 0..k {
                if s != r {
                    cand[m] = sub(tuple[s], tuple[r]);
                    m += 1;
                }
            }
            cand[1..].sort_unstable();
            if r == 0 || cand < best {
                best.copy_from_slice(&cand);
            }
        }
        *counts.entry(best.clone()).or_insert(0) += 1;
        let mut p = 1;
        loop {
            if p == k {
                let mut v: Vec<(Vec<u32>, u64)> = counts.into_iter().collect();
                v.sort();
                return v;
            }
            tuple[p] += 1;
            if (tuple[p] as usize) < sites {
                break;
            }
            tuple[p] = 0;
            p += 1;
        }
    }
}

/// Edge factors and plateau matrix for a vertex tuple.
#[derive(Clone, Copy)]
enum Source<'a> {
    Boson { l1: &'a ColoredPropagator, l0: &'a ColoredPropagator },
    Smeared { moll: &'a MollifierSet, l1: &'a ColoredPropagator, l0: &'a ColoredPropagator, ghost_smearing: bool },
    Kronecker { moll: &'a MollifierSet, l1: &'a ColoredPropagator, l0: &'a ColoredPropagator, ghost_smearing: bool },
}

fn gauge_pair(l: &ColoredPropagator, x: Site, y: Site, i: usize, j: usize) -> C64 {
    l.frame(x, y)[i][j] + l.frame(y, x)[j][i]
}

fn ghost_entry(l: &ColoredPropagator, x: Site, y: Site, i: usize, j: usize) -> C64 {
    let f = l.frame(x, y);
    f[i][j] - f[j][i]
}

type Frame = [[C64; 3]; 3];

fn accumulate_frame(acc: &mut Frame, f: &Frame, t: f64) {
    for i in 0..3 {
        for j in 0..3 {
            acc[i][j] += f[i][j] * t;
        }
    }
}

impl Source<'_> {
    fn values(&self, z: &[Site], vars: &[EdgeVar], out: &mut [C64]) {
        match *self {
            Source::Boson { l1, l0 } => {
                for (v, slot) in vars.iter().zip(out.iter_mut()) {
                    *slot = match *v {
                        EdgeVar::Gauge(e1, e2) => {
                            gauge_pair(l1, z[e1[1] as usize], z[e2[1] as usize], e1[2] as usize, e2[2] as usize)
                        }
                        EdgeVar::Ghost(b, d, i, j) => ghost_entry(l0, z[b as usize], z[d as usize], i as usize, j as usize),
                    };
                }
            }
            Source::Kronecker { moll, l1, l0, ghost_smearing } => {
                let m = moll.mass;
                let (g6, g4) = (m.powi(6), if ghost_smearing { m.powi(4) } else { 1.0 });
                for (v, slot) in vars.iter().zip(out.iter_mut()) {
                    *slot = match *v {
                        EdgeVar::Gauge(e1, e2) => {
                            gauge_pair(l1, z[e1[1] as usize], z[e2[1] as usize], e1[2] as usize, e2[2] as usize) * g6
                        }
                        EdgeVar::Ghost(b, d, i, j) => {
                            ghost_entry(l0, z[b as usize], z[d as usize], i as usize, j as usize) * g4
                        }
                    };
                }
            }
            Source::Smeared { moll, l1, l0, ghost_smearing } => {
                let spec = &moll.spec;
                let w = spec.weight();
                let k = z.len();
                let dt: Vec<Vec<(Site, f64)>> = z
                    .iter()
                    .map(|&zb| moll.delta_tilde.support.iter().map(|&(u, v)| (spec.shift(zb, u), v)).collect())
                    .collect();
                let mut f: Vec<Vec<(Site, f64)>> = Vec::with_capacity(k * k);
                for &za in z {
                    for dtb in &dt {
                        f.push(
                            dtb.iter()
                                .filter_map(|&(x, v)| {
                                    let p = moll.plateau_tilde.value(x, za);
                                    (p != 0.0).then_some((x, v * p))
                                })
                                .collect(),
                        );
                    }
                }
                let mut gauge: HashMap<(usize, usize), Frame> = HashMap::new();
                let mut frame_sum = |ab: usize, cd: usize| -> Frame {
                    *gauge.entry((ab, cd)).or_insert_with(|| {
                        let mut acc = [[ZERO; 3]; 3];
                        for &(x, p) in &f[ab] {
                            for &(y, q) in &f[cd] {
                                accumulate_frame(&mut acc, l1.frame(x, y), p * q);
                            }
                        }
                        acc
                    })
                };
                let mut ghost: HashMap<(usize, usize), Frame> = HashMap::new();
                for (v, slot) in vars.iter().zip(out.iter_mut()) {
                    *slot = match *v {
                        EdgeVar::Gauge(e1, e2) => {
                            let ab = e1[0] as usize * k + e1[1] as usize;
                            let cd = e2[0] as usize * k + e2[1] as usize;
                            let (i, j) = (e1[2] as usize, e2[2] as usize);
                            (frame_sum(ab, cd)[i][j] + frame_sum(cd, ab)[j][i]) * (w * w)
                        }
                        EdgeVar::Ghost(b, d, i, j) => {
                            let (b, d, i, j) = (b as usize, d as usize, i as usize, j as usize);
                            if ghost_smearing {
                                let fr = ghost.entry((b, d)).or_insert_with(|| {
                                    let mut acc = [[ZERO; 3]; 3];
                                    for &(x, p) in &dt[b] {
                                        for &(y, q) in &dt[d] {
                                            accumulate_frame(&mut acc, l0.frame(x, y), p * q);
                                        }
                                    }
                                    acc
                                });
                                (fr[i][j] - fr[j][i]) * (w * w)
                            } else {
                                ghost_entry(l0, z[b], z[d], i, j)
                            }
                        }
                    };
                }
            }
        }
    }

    /// Plateau matrix G_ab = D_h(z_a, z_b) for the Kronecker mode.
    fn plateau(&self, z: &[Site]) -> Option<Vec<f64>> {
        match *self {
            Source::Kronecker { moll, .. } => {
                let k = z.len();
                let mut g = vec![0.0; k * k];
                for a in 0..k {
                    for b in 0..k {
                        g[a * k + b] = moll.plateau.value(z[a], z[b]);
                    }
                }
                Some(g)
            }
            _ => None,
        }
    }
}

/// Determinant of the submatrix of the k×k matrix `g` on rows `r`, columns `c`.
fn minor(g: &[f64], k: usize, r: u8, c: u8) -> f64 {
    let mut rows = [0usize; MAX_VERTICES];
    let mut cols = [0usize; MAX_VERTICES];
    let mut m = 0;
    let mut mc = 0;
    for v in 0..k {
        if r & (1 << v) != 0 {
            rows[m] = v;
            m += 1;
        }
        if c & (1 << v) != 0 {
            cols[mc] = v;
            mc += 1;
        }
    }
    if m != mc {
        return 0.0;
    }
    let mut a = [0.0; MAX_VERTICES * MAX_VERTICES];
    for x in 0..m {
        for y in 0..m {
            a[x * m + y] = g[rows[x] * k + cols[y]];
        }
    }
    let mut det = 1.0;
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs())).unwrap();
        if a[piv * m + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for t in 0..m {
                a.swap(piv * m + t, col * m + t);
            }
            det = -det;
        }
        let p = a[col * m + col];
        det *= p;
        for row in col + 1..m {
            let f = a[row * m + col] / p;
            if f != 0.0 {
                for t in col..m {
                    a[row * m + t] -= f * a[col * m + t];
                }
            }
        }
    }
    det
}

/// Product of the diagonal entries on rows `r` when `r == c`, else 0.
fn diagonal(g: &[f64], k: usize, r: u8, c: u8) -> f64 {
    if r != c {
        return 0.0;
    }
    (0..k).filter(|a| r & (1 << a) != 0).map(|a| g[a * k + a]).product()
}

/// (total, matched, unmatched) of one vertex tuple, before w^{2n}/(2n)!.
fn tuple_sums(c: &Compiled, vals: &[C64], plateau: Option<&[f64]>, k: usize, sectors: Option<u32>) -> [C64; 3] {
    let w = c.width;
    let mut total = ComplexSum::default();
    let mut matched = ComplexSum::default();
    let mut unmatched = ComplexSum::default();
    let minors: Vec<(f64, f64)> = match plateau {
        Some(p) => c.minor_keys.iter().map(|&(r, col)| (minor(p, k, r, col), diagonal(p, k, r, col))).collect(),
        None => Vec::new(),
    };
    for g in &c.groups {
        if let Some(only) = sectors {
            if g.sector != only {
                continue;
            }
        }
        let (factor, diag) = match g.minor_ids {
            Some(ids) if plateau.is_some() => {
                let (mut f, mut d) = (1.0, 1.0);
                for id in ids {
                    let (a, b) = minors[id as usize];
                    f *= a;
                    d *= b;
                }
                (f, Some(d))
            }
            _ => (1.0, None),
        };
        if factor == 0.0 && diag.unwrap_or(0.0) == 0.0 {
            continue;
        }
        let mut all = ZERO;
        let mut m = ZERO;
        let mut u = ZERO;
        let mut prefix = [C64::new(1.0, 0.0); 3 * MAX_VERTICES / 2 + 1];
        for (t, coef) in g.coefs.iter().enumerate() {
            let vars = &g.vars[t * w..(t + 1) * w];
            for d in g.shared[t] as usize..w {
                prefix[d + 1] = prefix[d] * vals[vars[d] as usize];
            }
            let p = *coef * prefix[w];
            all += p;
            if diag.is_none() {
                if g.matched[t] {
                    m += p;
                } else {
                    u += p;
                }
            }
        }
        match diag {
            Some(d) => {
                total.add(all * factor);
                matched.add(all * d);
                unmatched.add(all * (factor - d));
            }
            None => {
                total.add(all);
                matched.add(m);
                unmatched.add(u);
            }
        }
    }
    [total.value(), matched.value(), unmatched.value()]
}

struct Plan<'a> {
    compiled: Arc<Compiled>,
    source: Source<'a>,
    spec: LatticeSpec,
    periodic: bool,
}

impl Plan<'_> {
    fn tuples(&self) -> Vec<(Vec<u32>, f64)> {
        let k = 2 * self.compiled.n;
        if self.periodic {
            let sites = self.spec.site_count() as f64;
            tuple_orbits(&self.spec, k).iter().map(|(t, c)| (t.clone(), *c as f64 * sites)).collect()
        } else {
            let sites = self.spec.site_count() as u64;
            let total = sites.pow(k as u32);
            (0..total)
                .map(|mut idx| {
                    let mut t = vec![0u32; k];
                    for s in t.iter_mut().rev() {
                        *s = (idx % sites) as u32;
                        idx /= sites;
                    }
                    (t, 1.0)
                })
                .collect()
        }
    }

    fn tuple_value(&self, t: &[u32], vals: &mut [C64], sectors: Option<u32>) -> [C64; 3] {
        let z: Vec<Site> = t.iter().map(|&i| self.spec.site_at(i as usize)).collect();
        self.source.values(&z, &self.compiled.vars, vals);
        let p = self.source.plateau(&z);
        tuple_sums(&self.compiled, vals, p.as_deref(), z.len(), sectors)
    }

    fn run(&self, workers: usize) -> Result<([C64; 3], u64)> {
        let tuples = self.tuples();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
        let nv = self.compiled.vars.len();
        let partial: Vec<[C64; 3]> = pool.install(|| {
            tuples
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut vals = vec![ZERO; nv];
                    let mut acc = [ComplexSum::default(); 3];
                    for (t, weight) in chunk {
                        let r = self.tuple_value(t, &mut vals, None);
                        for q in 0..3 {
                            acc[q].add(r[q] * *weight);
                        }
                    }
                    [acc[0].value(), acc[1].value(), acc[2].value()]
                })
                .collect()
        });
        let mut acc = [ComplexSum::default(); 3];
        for p in &partial {
            for q in 0..3 {
                acc[q].add(p[q]);
            }
        }
        Ok(([acc[0].value(), acc[1].value(), acc[2].value()], tuples.len() as u64))
    }
}

fn scale(spec: &LatticeSpec, n: usize, opts: &EvalOptions) -> f64 {
    spec.weight().powi(2 * n as i32) * opts.coupling.powi(2 * n as i32) / factorial(2 * n)
}

fn check_order(spec: &LatticeSpec, n: usize, opts: &EvalOptions) -> Result<()> {
    let hard = MAX_VERTICES / 2;
    if n > opts.max_order || n > hard {
        return Err(Error::OrderTooLarge { n, max: opts.max_order.min(hard), cost: cost_estimate(spec, n) });
    }
    Ok(())
}

/// Ξₙ(ε) = R₀^{3n}/(3n)! · R_I^{2n}/(2n)! at zero fields.
pub fn xi_term(n: usize, kg: &ColoredPropagator, kgh: &ColoredPropagator, opts: &EvalOptions) -> Result<TermResult> {
    check_kernels(kg, kgh)?;
    let spec = kg.spec;
    check_order(&spec, n, opts)?;
    let eps = kg.epsilon;
    if n == 0 {
        return Ok(TermResult::trivial(0, eps, None, Mode::Boson, C64::new(1.0, 0.0), false));
    }
    let start = Instant::now();
    let drop_self = max_self_edge(kg) == 0.0 && max_self_edge(kgh) == 0.0;
    let plan = Plan {
        compiled: compiled(Mode::Boson, n, drop_self),
        source: Source::Boson { l1: kg, l0: kgh },
        spec,
        periodic: kg.periodic && kgh.periodic,
    };
    let ([total, _, _], tuples) = plan.run(opts.workers)?;
    Ok(TermResult {
        n,
        epsilon: eps,
        h: None,
        mode: Mode::Boson,
        value: total * scale(&spec, n, opts),
        theta1: None,
        theta2: None,
        pairings: plan.compiled.pairings,
        tuples,
        terms: plan.compiled.term_count(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Ξₙ with the gauge kernel scaled by m⁶ and the ghost kernel by m⁴ (or 1
/// without ghost smearing): the value Θ¹ reduces to when δ_h is a single site.
pub fn xi_term_normalized(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    mass: f64,
    opts: &EvalOptions,
) -> Result<TermResult> {
    let g4 = if opts.ghost_smearing { mass.powi(4) } else { 1.0 };
    xi_term(n, &kg.scaled(mass.powi(6)), &kgh.scaled(g4), opts)
}

fn theta_plan<'a>(
    n: usize,
    kg: &'a ColoredPropagator,
    kgh: &'a ColoredPropagator,
    moll: &'a MollifierSet,
    opts: &EvalOptions,
    force_smeared: bool,
) -> Result<Plan<'a>> {
    check_kernels(kg, kgh)?;
    if moll.spec != kg.spec {
        return Err(Error::LatticeMismatch);
    }
    let spec = kg.spec;
    check_order(&spec, n, opts)?;
    let kronecker = moll.delta.support.len() == 1 && moll.delta.support[0].0 == 0;
    let drop_self = max_self_edge(kg) == 0.0 && max_self_edge(kgh) == 0.0;
    let periodic = kg.periodic && kgh.periodic;
    let (mode, source) = if kronecker && (n >= 2 || !force_smeared) && !force_smeared {
        (Mode::Kronecker, Source::Kronecker { moll, l1: kg, l0: kgh, ghost_smearing: opts.ghost_smearing })
    } else {
        if n >= 2 {
            return Err(Error::OrderTooLarge { n, max: 1, cost: cost_estimate(&spec, n) });
        }
        (Mode::Smeared, Source::Smeared { moll, l1: kg, l0: kgh, ghost_smearing: opts.ghost_smearing })
    };
    Ok(Plan { compiled: compiled(mode, n, drop_self), source, spec, periodic })
}

fn theta_with(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    moll: &MollifierSet,
    opts: &EvalOptions,
    force_smeared: bool,
) -> Result<TermResult> {
    if n == 0 {
        check_kernels(kg, kgh)?;
        return Ok(TermResult::trivial(0, kg.epsilon, Some(moll.h), Mode::Smeared, C64::new(1.0, 0.0), true));
    }
    let start = Instant::now();
    let plan = theta_plan(n, kg, kgh, moll, opts, force_smeared)?;
    let ([total, t1, t2], tuples) = plan.run(opts.workers)?;
    let s = scale(&kg.spec, n, opts);
    Ok(TermResult {
        n,
        epsilon: kg.epsilon,
        h: Some(moll.h),
        mode: plan.compiled.mode,
        value: total * s,
        theta1: Some(t1 * s),
        theta2: Some(t2 * s),
        pairings: plan.compiled.pairings,
        tuples,
        terms: plan.compiled.term_count(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Θₙ(ε,h): normalized Gaussian expectation of (T₀)^{3n}(T_I)^{2n}/((3n)!(2n)!).
/// Orders n ≥ 2 require a single-site δ_h.
pub fn theta_term(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    moll: &MollifierSet,
    opts: &EvalOptions,
) -> Result<TermResult> {
    theta_with(n, kg, kgh, moll, opts, false)
}

/// Θₙ with Θ¹ (matched pairings) and Θ² (the rest) populated.
pub fn theta_split(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    moll: &MollifierSet,
    opts: &EvalOptions,
) -> Result<TermResult> {
    theta_term(n, kg, kgh, moll, opts)
}

/// Θₙ through the four-vertex attachment tensors even when δ_h is a single
/// site; n = 1 only. Used to cross-check the plateau-minor rewriting.
pub fn theta_term_smeared(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    moll: &MollifierSet,
    opts: &EvalOptions,
) -> Result<TermResult> {
    theta_with(n, kg, kgh, moll, opts, true)
}

/// Contribution of one vertex tuple (sites by index) to Θₙ or Ξₙ, already
/// multiplied by w^{2n}/(2n)!: (total, matched, unmatched). `sector` keeps only
/// the vertex-type assignment with ghost vertices on its set bits.
pub fn tuple_contribution(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    moll: Option<&MollifierSet>,
    opts: &EvalOptions,
    tuple: &[u32],
    sector: Option<u32>,
) -> Result<[C64; 3]> {
    let plan = match moll {
        Some(m) => theta_plan(n, kg, kgh, m, opts, false)?,
        None => {
            check_kernels(kg, kgh)?;
            check_order(&kg.spec, n, opts)?;
            let drop_self = max_self_edge(kg) == 0.0 && max_self_edge(kgh) == 0.0;
            Plan {
                compiled: compiled(Mode::Boson, n, drop_self),
                source: Source::Boson { l1: kg, l0: kgh },
                spec: kg.spec,
                periodic: false,
            }
        }
    };
    if tuple.len() != 2 * n {
        return Err(Error::Invalid(format!("expected {} vertex sites", 2 * n)));
    }
    let mut vals = vec![ZERO; plan.compiled.vars.len()];
    let r = plan.tuple_value(tuple, &mut vals, sector);
    let s = scale(&kg.spec, n, opts);
    Ok([r[0] * s, r[1] * s, r[2] * s])
}

/// Direct evaluation of one vertex tuple through four-vertex attachment
/// tensors and a memoized partition sum, without the compiled polynomial.
/// Any n; intended for spot checks.
pub fn tuple_contribution_direct(
    n: usize,
    kg: &ColoredPropagator,
    kgh: &ColoredPropagator,
    moll: &MollifierSet,
    opts: &EvalOptions,
    tuple: &[u32],
    sector: u32,
) -> Result<C64> {
    check_kernels(kg, kgh)?;
    let k = 2 * n;
    if tuple.len() != k || k > MAX_VERTICES {
        return Err(Error::Invalid(format!("expected {} vertex sites", k)));
    }
    let set = compile::BlockSet::build(Mode::Smeared, k, false);
    let source = Source::Smeared { moll, l1: kg, l0: kgh, ghost_smearing: opts.ghost_smearing };
    let z: Vec<Site> = tuple.iter().map(|&i| kg.spec.site_at(i as usize)).collect();
    let mut vals = vec![ZERO; set.vars.len()];
    source.values(&z, &set.vars, &mut vals);
    let kinds = sector_kinds(sector, k);
    let mut acc = ComplexSum::default();
    let mut memo = HashMap::new();
    for (legs, c) in compile::sector_monomials(Model::Fermion, &kinds) {
        memo.clear();
        acc.add(c * set.evaluate(compile::mask_of(&legs), &vals, &mut memo));
    }
    Ok(acc.value() * scale(&kg.spec, n, opts))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orbit_counts_cover_all_tuples() {
        let spec = LatticeSpec::new(1.0, 3).unwrap();
        for k in 1..=3 {
            let o = tuple_orbits(&spec, k);
            let total: u64 = o.iter().map(|(_, c)| c).sum();
            assert_eq!(total, 27u64.pow(k as u32 - 1));
        }
    }

    #[test]
    fn minors_of_small_matrices() {
        let g = [2.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 4.0];
        assert_eq!(minor(&g, 3, 0b001, 0b001), 2.0);
        assert!((minor(&g, 3, 0b011, 0b011) - 5.0).abs() < 1e-14);
        assert!((minor(&g, 3, 0b111, 0b111) - 18.0).abs() < 1e-13);
        assert!((minor(&g, 3, 0b011, 0b110) - 1.0).abs() < 1e-14);
    }
}
