//! Leg layouts, vertex polynomials, edge operators and the symbolic pairing
//! enumeration that turns a vertex tuple into a polynomial in edge variables.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use num_complex::Complex64 as C64;

/// Fermionic legs per vertex: H̄ 0..3, Ψ̄ 3..6, c̄ 6..9, C̄ 9..18 (`9 + 3p + γ`).
pub const FERMION_STRIDE: usize = 18;
/// Bosonic legs per vertex: A 0..9 (`3i + α`), c 9..12, C 12..21 (`12 + 3p + γ`).
pub const BOSON_STRIDE: usize = 21;
/// Largest vertex count representable in a 128-bit leg mask.
pub const MAX_VERTICES: usize = 6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    Boson,
    Fermion,
}

impl Model {
    pub fn stride(self) -> usize {
        match self {
            Model::Boson => BOSON_STRIDE,
            Model::Fermion => FERMION_STRIDE,
        }
    }

    pub fn odd(self, local: usize) -> bool {
        match self {
            Model::Boson => local >= 9,
            Model::Fermion => true,
        }
    }
}

/// How edge ends attach to vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// A, c, C legs; edges carry kernel entries between vertex sites.
    Boson,
    /// Smeared fermion legs; an edge end may take its H̄ and Ψ̄ legs from
    /// different vertices.
    Smeared,
    /// Single-site δ_h: H̄ legs are rewritten through the plateau matrix so
    /// every edge end sits on one vertex; minors of that matrix weight the groups.
    Kronecker,
}

impl Mode {
    pub fn model(self) -> Model {
        match self {
            Mode::Boson => Model::Boson,
            _ => Model::Fermion,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexKind {
    GaugeCubic,
    Ghost,
}

/// One interaction vertex with its prefactors.
#[derive(Clone, Debug, PartialEq)]
pub struct VertexSpec {
    pub kind: VertexKind,
    pub model: Model,
    /// 1/(3!)² or 1/6 for the cubic term, −1 for the ghost term.
    pub combinatorial: f64,
    /// i/(2π) for fermions, −i/(2π) for the bosonic theory.
    pub global: C64,
    pub legs: &'static [&'static str],
}

impl VertexSpec {
    pub fn new(model: Model, kind: VertexKind) -> Self {
        let global = match model {
            Model::Fermion => C64::new(0.0, 1.0 / (2.0 * PI)),
            Model::Boson => C64::new(0.0, -1.0 / (2.0 * PI)),
        };
        let (combinatorial, legs): (f64, &'static [&'static str]) = match (model, kind) {
            (Model::Fermion, VertexKind::GaugeCubic) => (1.0 / 36.0, &["Hb", "Psib", "Hb", "Psib", "Hb", "Psib"]),
            (Model::Fermion, VertexKind::Ghost) => (-1.0, &["Hb", "Psib", "cb", "Cb"]),
            (Model::Boson, VertexKind::GaugeCubic) => (1.0 / 6.0, &["A", "A", "A"]),
            (Model::Boson, VertexKind::Ghost) => (-1.0, &["A", "c", "C"]),
        };
        Self { kind, model, combinatorial, global, legs }
    }

    /// Monomials in local leg indices, sorted, with coefficients (weight w
    /// and the coupling scale excluded).
    pub fn monomials(&self) -> Vec<(Vec<u8>, C64)> {
        let mut acc: BTreeMap<Vec<u8>, C64> = BTreeMap::new();
        let pre = self.global * self.combinatorial;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for al in 0..3 {
                        for be in 0..3 {
                            for ga in 0..3 {
                                let e = levi(i, j, k) * levi(al, be, ga);
                                if e == 0.0 {
                                    continue;
                                }
                                let (seq, s) = match (self.model, self.kind) {
                                    (Model::Fermion, VertexKind::GaugeCubic) => {
                                        (vec![i, 3 + al, j, 3 + be, k, 3 + ga], 1.0)
                                    }
                                    (Model::Fermion, VertexKind::Ghost) => match pair_slot(j, k) {
                                        Some((p, s)) => (vec![i, 3 + al, 6 + be, 9 + 3 * p + ga], s),
                                        None => continue,
                                    },
                                    (Model::Boson, VertexKind::GaugeCubic) => {
                                        (vec![3 * i + al, 3 * j + be, 3 * k + ga], 1.0)
                                    }
                                    (Model::Boson, VertexKind::Ghost) => match pair_slot(j, k) {
                                        Some((p, s)) => (vec![3 * i + al, 9 + be, 12 + 3 * p + ga], s),
                                        None => continue,
                                    },
                                };
                                let model = self.model;
                                let seq: Vec<u16> = seq.iter().map(|&x| x as u16).collect();
                                if let Some((sign, sorted)) = graded_sort(&seq, |g| model.odd(g as usize)) {
                                    let key: Vec<u8> = sorted.iter().map(|&x| x as u8).collect();
                                    *acc.entry(key).or_insert(ZERO) += pre * (e * s * sign);
                                }
                            }
                        }
                    }
                }
            }
        }
        acc.into_iter().filter(|(_, c)| c.norm() > 0.0).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Gauge,
    Ghost,
}

/// One quadratic edge operator with its scalar prefactor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeSpec {
    pub kind: EdgeKind,
    pub prefactor: C64,
}

impl EdgeSpec {
    pub fn new(kind: EdgeKind) -> Self {
        let base = C64::new(0.0, -2.0 * PI);
        let prefactor = match kind {
            EdgeKind::Gauge => base,
            EdgeKind::Ghost => base * -2.0,
        };
        Self { kind, prefactor }
    }
}

pub fn levi(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Slot of the frame pair `(i, j)` among (0,1), (0,2), (1,2) and the sign
/// relating `C^{ij}` to the stored component.
pub fn pair_slot(i: usize, j: usize) -> Option<(usize, f64)> {
    let (lo, hi, s) = if i < j { (i, j, 1.0) } else { (j, i, -1.0) };
    match (lo, hi) {
        _ if i == j => None,
        (0, 1) => Some((0, s)),
        (0, 2) => Some((1, s)),
        (1, 2) => Some((2, s)),
        _ => None,
    }
}

pub fn pair_frames(p: usize) -> (usize, usize) {
    [(0, 1), (0, 2), (1, 2)][p]
}

/// Sorts a product of generators, returning the reordering sign. Returns
/// `None` when a generator repeats.
pub fn graded_sort<F: Fn(u16) -> bool>(seq: &[u16], odd: F) -> Option<(f64, Vec<u16>)> {
    let mut v = seq.to_vec();
    let mut sign = 1.0;
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            if odd(v[j - 1]) && odd(v[j]) {
                sign = -sign;
            }
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((sign, v))
}

/// Symbolic edge factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeVar {
    /// Gauge edge between ends `[H̄ vertex, Ψ̄ vertex, frame]`, stored with
    /// the first end ≤ the second; its value is the sum over both orientations.
    Gauge([u8; 3], [u8; 3]),
    /// Ghost edge from the c leg of vertex `.0` to the C leg of vertex `.1`
    /// with frame pair `.2 < .3`.
    Ghost(u8, u8, u8, u8),
}

impl EdgeVar {
    pub fn matched(&self) -> bool {
        match self {
            EdgeVar::Gauge(e1, e2) => e1[0] == e1[1] && e2[0] == e2[1],
            EdgeVar::Ghost(..) => true,
        }
    }

    /// Vertices at the two ends for the site-dependent part of the factor.
    pub fn ends(&self) -> (usize, usize) {
        match self {
            EdgeVar::Gauge(e1, e2) => (e1[1] as usize, e2[1] as usize),
            EdgeVar::Ghost(b, d, _, _) => (*b as usize, *d as usize),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Block {
    pub mask: u128,
    pub entries: Vec<(C64, u32)>,
}

/// All derivative blocks of the edge operator for a fixed vertex count.
#[derive(Clone, Debug)]
pub(crate) struct BlockSet {
    pub blocks: Vec<Block>,
    pub by_min: Vec<Vec<usize>>,
    pub odd: u128,
    pub vars: Vec<EdgeVar>,
}

pub(crate) fn global(model: Model, v: usize, local: usize) -> u16 {
    (v * model.stride() + local) as u16
}

impl BlockSet {
    pub fn build(mode: Mode, vertices: usize, drop_self: bool) -> Self {
        assert!(vertices <= MAX_VERTICES);
        let model = mode.model();
        let stride = model.stride();
        let mut odd = 0u128;
        for v in 0..vertices {
            for l in 0..stride {
                if model.odd(l) {
                    odd |= 1u128 << (v * stride + l);
                }
            }
        }
        let mut set = Self { blocks: Vec::new(), by_min: vec![Vec::new(); vertices * stride], odd, vars: Vec::new() };
        let mut index: HashMap<u128, usize> = HashMap::new();
        let mut var_index: HashMap<EdgeVar, u32> = HashMap::new();
        let gauge = EdgeSpec::new(EdgeKind::Gauge).prefactor;
        let ghost = EdgeSpec::new(EdgeKind::Ghost).prefactor;
        let mut add = |set: &mut Self, seq: Vec<u16>, coef: C64, var: EdgeVar| {
            let Some((sign, sorted)) = graded_sort(&seq, |g| odd & (1u128 << g) != 0) else {
                return;
            };
            let mask = sorted.iter().fold(0u128, |m, &g| m | (1u128 << g));
            let vid = *var_index.entry(var).or_insert_with(|| {
                set.vars.push(var);
                (set.vars.len() - 1) as u32
            });
            let bid = *index.entry(mask).or_insert_with(|| {
                set.blocks.push(Block { mask, entries: Vec::new() });
                set.by_min[sorted[0] as usize].push(set.blocks.len() - 1);
                set.blocks.len() - 1
            });
            set.blocks[bid].entries.push((coef * sign, vid));
        };
        let n = vertices;
        // gauge edges
        let mut ends: Vec<[u8; 3]> = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if mode != Mode::Smeared && a != b {
                    continue;
                }
                for i in 0..3 {
                    ends.push([a as u8, b as u8, i as u8]);
                }
            }
        }
        ends.sort();
        for (x, e1) in ends.iter().enumerate() {
            for e2 in &ends[x + 1..] {
                if drop_self && mode != Mode::Smeared && e1[1] == e2[1] {
                    continue;
                }
                for al in 0..3 {
                    let seq = match model {
                        Model::Fermion => vec![
                            global(model, e1[0] as usize, e1[2] as usize),
                            global(model, e1[1] as usize, 3 + al),
                            global(model, e2[0] as usize, e2[2] as usize),
                            global(model, e2[1] as usize, 3 + al),
                        ],
                        Model::Boson => vec![
                            global(model, e1[1] as usize, 3 * e1[2] as usize + al),
                            global(model, e2[1] as usize, 3 * e2[2] as usize + al),
                        ],
                    };
                    add(&mut set, seq, gauge, EdgeVar::Gauge(*e1, *e2));
                }
            }
        }
        // ghost edges
        let (c0, cc0) = match model {
            Model::Fermion => (6, 9),
            Model::Boson => (9, 12),
        };
        for b in 0..n {
            for d in 0..n {
                if drop_self && mode != Mode::Smeared && b == d {
                    continue;
                }
                for p in 0..3 {
                    let (i, j) = pair_frames(p);
                    for al in 0..3 {
                        let seq = vec![global(model, b, c0 + al), global(model, d, cc0 + 3 * p + al)];
                        add(&mut set, seq, ghost, EdgeVar::Ghost(b as u8, d as u8, i as u8, j as u8));
                    }
                }
            }
        }
        set
    }

    /// Sign of applying the sorted derivative block to the sorted monomial `s`.
    pub fn block_sign(&self, bmask: u128, s: u128) -> f64 {
        let bo = bmask & self.odd;
        let rest = s & !bmask & self.odd;
        let k = bo.count_ones();
        let mut parity = k * k.saturating_sub(1) / 2;
        let mut t = bo;
        while t != 0 {
            let g = t.trailing_zeros();
            parity += (rest & ((1u128 << g) - 1)).count_ones();
            t &= t - 1;
        }
        if parity % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Enumerates every partition of `mask` into edge blocks, emitting the
    /// sorted variable list and signed coefficient of each.
    pub fn partitions<F: FnMut(&[u32], C64)>(&self, mask: u128, coef: C64, emit: &mut F) -> u64 {
        let mut stack = Vec::with_capacity(16);
        self.walk(mask, coef, &mut stack, emit)
    }

    fn walk<F: FnMut(&[u32], C64)>(&self, mask: u128, coef: C64, stack: &mut Vec<u32>, emit: &mut F) -> u64 {
        if mask == 0 {
            let mut key = stack.clone();
            key.sort_unstable();
            emit(&key, coef);
            return 1;
        }
        let g = mask.trailing_zeros() as usize;
        if g >= self.by_min.len() {
            return 0;
        }
        let mut count = 0;
        for &bid in &self.by_min[g] {
            let b = &self.blocks[bid];
            if b.mask & !mask != 0 {
                continue;
            }
            let s = self.block_sign(b.mask, mask);
            for &(c, v) in &b.entries {
                stack.push(v);
                count += self.walk(mask & !b.mask, coef * c * s, stack, emit);
                stack.pop();
            }
        }
        count
    }

    /// Numeric partition sum with memoization, given a value for every variable.
    pub fn evaluate(&self, mask: u128, values: &[C64], memo: &mut HashMap<u128, C64>) -> C64 {
        if mask == 0 {
            return C64::new(1.0, 0.0);
        }
        if let Some(v) = memo.get(&mask) {
            return *v;
        }
        let g = mask.trailing_zeros() as usize;
        let mut acc = ZERO;
        if g < self.by_min.len() {
            for &bid in &self.by_min[g] {
                let b = &self.blocks[bid];
                if b.mask & !mask != 0 {
                    continue;
                }
                let mut c = ZERO;
                for &(k, v) in &b.entries {
                    c += k * values[v as usize];
                }
                if c == ZERO {
                    continue;
                }
                acc += c * self.block_sign(b.mask, mask) * self.evaluate(mask & !b.mask, values, memo);
            }
        }
        memo.insert(mask, acc);
        acc
    }
}

/// Vertex types of a sector: bit v set when vertex v is a ghost vertex.
pub fn sector_kinds(sector: u32, vertices: usize) -> Vec<VertexKind> {
    (0..vertices)
        .map(|v| if sector & (1 << v) != 0 { VertexKind::Ghost } else { VertexKind::GaugeCubic })
        .collect()
}

/// Product monomials of one sector as (global leg mask, global sorted legs, coefficient).
pub(crate) fn sector_monomials(model: Model, kinds: &[VertexKind]) -> Vec<(Vec<u16>, C64)> {
    let per: Vec<Vec<(Vec<u8>, C64)>> = kinds.iter().map(|k| VertexSpec::new(model, *k).monomials()).collect();
    let mut out = vec![(Vec::new(), C64::new(1.0, 0.0))];
    for (v, list) in per.iter().enumerate() {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for (legs, c) in &out {
            for (local, c2) in list {
                let mut l = legs.clone();
                l.extend(local.iter().map(|&x| global(model, v, x as usize)));
                next.push((l, c * c2));
            }
        }
        out = next;
    }
    out
}

pub(crate) fn mask_of(legs: &[u16]) -> u128 {
    legs.iter().fold(0u128, |m, &g| m | (1u128 << g))
}

/// Frame-wise row/column vertex sets of a plateau-matrix minor.
pub type MinorKey = [(u8, u8); 3];

/// Terms sharing a sector and (for [`Mode::Kronecker`]) a minor key.
#[derive(Clone, Debug)]
pub struct Group {
    pub sector: u32,
    pub minors: Option<MinorKey>,
    /// Positions of the three minors in [`Compiled::minor_keys`].
    pub minor_ids: Option<[u16; 3]>,
    pub coefs: Vec<C64>,
    /// Flattened variable indices, `width` per term.
    pub vars: Vec<u32>,
    /// Every edge end of the term takes its H̄ and Ψ̄ legs from one vertex.
    pub matched: Vec<bool>,
    /// Length of the variable prefix shared with the previous term.
    pub shared: Vec<u8>,
}

impl Group {
    pub fn len(&self) -> usize {
        self.coefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }
}

/// Pairing polynomial of one order, independent of vertex positions.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub mode: Mode,
    pub n: usize,
    pub width: usize,
    pub vars: Vec<EdgeVar>,
    pub groups: Vec<Group>,
    /// Wick pairings enumerated per vertex tuple.
    pub pairings: u64,
    /// Distinct (rows, columns) minors referenced by the groups.
    pub minor_keys: Vec<(u8, u8)>,
}

impl Compiled {
    pub fn term_count(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn build(mode: Mode, n: usize, drop_self: bool) -> Self {
        let vertices = 2 * n;
        let width = 3 * n;
        let set = BlockSet::build(mode, vertices, drop_self);
        let model = mode.model();
        let mut groups: BTreeMap<(u32, Option<MinorKey>), HashMap<Vec<u32>, C64>> = BTreeMap::new();
        let mut pairings = 0u64;
        for sector in 0..(1u32 << vertices) {
            let kinds = sector_kinds(sector, vertices);
            for (legs, c) in sector_monomials(model, &kinds) {
                match mode {
                    Mode::Kronecker => {
                        for (key, sign, rewritten) in rewrite_plateau(&legs, &kinds) {
                            let poly = groups.entry((sector, Some(key))).or_default();
                            pairings += set.partitions(mask_of(&rewritten), c * sign, &mut |k, v| {
                                *poly.entry(k.to_vec()).or_insert(ZERO) += v;
                            });
                        }
                    }
                    _ => {
                        let poly = groups.entry((sector, None)).or_default();
                        pairings += set.partitions(mask_of(&legs), c, &mut |k, v| {
                            *poly.entry(k.to_vec()).or_insert(ZERO) += v;
                        });
                    }
                }
            }
        }
        let mut out = Vec::new();
        let mut minor_keys: Vec<(u8, u8)> = Vec::new();
        for ((sector, minors), poly) in groups {
            let mut terms: Vec<(Vec<u32>, C64)> = poly.into_iter().filter(|(_, c)| c.norm() > 0.0).collect();
            if terms.is_empty() {
                continue;
            }
            terms.sort_by(|a, b| a.0.cmp(&b.0));
            let minor_ids = minors.map(|key| {
                key.map(|rc| match minor_keys.iter().position(|&m| m == rc) {
                    Some(i) => i as u16,
                    None => {
                        minor_keys.push(rc);
                        (minor_keys.len() - 1) as u16
                    }
                })
            });
            let mut g = Group {
                sector,
                minors,
                minor_ids,
                coefs: Vec::with_capacity(terms.len()),
                vars: Vec::with_capacity(terms.len() * width),
                matched: Vec::with_capacity(terms.len()),
                shared: Vec::with_capacity(terms.len()),
            };
            let mut prev: Vec<u32> = Vec::new();
            for (k, c) in terms {
                debug_assert_eq!(k.len(), width);
                g.shared.push(prev.iter().zip(&k).take_while(|(a, b)| a == b).count() as u8);
                prev = k.clone();
                g.coefs.push(c);
                g.matched.push(k.iter().all(|&v| set.vars[v as usize].matched()));
                g.vars.extend(k);
            }
            out.push(g);
        }
        Self { mode, n, width, vars: set.vars, groups: out, pairings, minor_keys }
    }
}

/// Rewrites the H̄ legs of a fermionic monomial through H̄_{a,i} = Σ_b G_ab η_{b,i},
/// keeping only assignments in which every vertex receives as many η legs as
/// it has Ψ̄ legs. Returns (minor key, reordering sign, sorted legs).
pub(crate) fn rewrite_plateau(legs: &[u16], kinds: &[VertexKind]) -> Vec<(MinorKey, f64, Vec<u16>)> {
    let stride = FERMION_STRIDE as u16;
    let vertices = kinds.len();
    let mut rows = [0u8; 3];
    let mut need = vec![0usize; vertices];
    for &g in legs {
        let (v, l) = ((g / stride) as usize, (g % stride) as usize);
        if l < 3 {
            rows[l] |= 1 << v;
        } else if l < 6 {
            need[v] += 1;
        }
    }
    // choose, per vertex, the frames of its η legs
    let mut choices: Vec<Vec<u8>> = Vec::new();
    for &k in &need {
        let opts: Vec<u8> = (0u8..8).filter(|m| m.count_ones() as usize == k).collect();
        choices.push(opts);
    }
    let mut out = Vec::new();
    let mut pick = vec![0usize; vertices];
    loop {
        let mut cols = [0u8; 3];
        for v in 0..vertices {
            let m = choices[v][pick[v]];
            for (i, c) in cols.iter_mut().enumerate() {
                if m & (1 << i) != 0 {
                    *c |= 1 << v;
                }
            }
        }
        if (0..3).all(|i| cols[i].count_ones() == rows[i].count_ones()) {
            // order-preserving replacement of rows by columns, frame by frame
            let mut seq = legs.to_vec();
            for i in 0..3 {
                let src: Vec<usize> = (0..vertices).filter(|v| rows[i] & (1 << v) != 0).collect();
                let dst: Vec<usize> = (0..vertices).filter(|v| cols[i] & (1 << v) != 0).collect();
                let pos: Vec<usize> = src
                    .iter()
                    .map(|s| legs.iter().position(|&g| g == (*s as u16) * stride + i as u16).expect("row leg"))
                    .collect();
                for (p, d) in pos.iter().zip(&dst) {
                    seq[*p] = (*d as u16) * stride + i as u16;
                }
            }
            if let Some((sign, sorted)) = graded_sort(&seq, |_| true) {
                out.push(([(rows[0], cols[0]), (rows[1], cols[1]), (rows[2], cols[2])], sign, sorted));
            }
        }
        let mut v = 0;
        loop {
            if v == vertices {
                return out;
            }
            pick[v] += 1;
            if pick[v] < choices[v].len() {
                break;
            }
            pick[v] = 0;
            v += 1;
        }
    }
}
