//! Colored propagators: synthetic band-limited kernels and the spectral
//! homotopy operator L = d*Δ⁻¹ on a twisted torus.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::lattice::{LatticeSpec, Site};
use crate::mollifier::CutoffProfile;

pub const FORMAT_VERSION: u32 = 1;
/// Dimension of the Lie algebra (su(2)).
pub const ALG_DIM: usize = 3;

pub type Frame = [[Complex64; 3]; 3];

const ZERO_FRAME: Frame = [[Complex64 { re: 0.0, im: 0.0 }; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sector {
    Gauge,
    Ghost,
}

impl Sector {
    pub fn name(&self) -> &'static str {
        match self {
            Sector::Gauge => "gauge",
            Sector::Ghost => "ghost",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    Synthetic { seed: u64, band: usize },
    Spectral { theta: [f64; 3] },
    /// Independent random entries per raw displacement, not periodic.
    Random { seed: u64 },
}

impl Source {
    pub fn tag(&self) -> String {
        match self {
            Source::Synthetic { seed, band } => format!("synthetic:seed={seed}:band={band}"),
            Source::Spectral { theta } => {
                format!("spectral:twist={:?},{:?},{:?}", theta[0], theta[1], theta[2])
            }
            Source::Random { seed } => format!("random:seed={seed}"),
        }
    }

    fn parse(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad source tag {s}"));
        if let Some(rest) = s.strip_prefix("synthetic:seed=") {
            let (seed, band) = rest.split_once(":band=").ok_or_else(bad)?;
            Ok(Source::Synthetic {
                seed: seed.parse().map_err(|_| bad())?,
                band: band.parse().map_err(|_| bad())?,
            })
        } else if let Some(rest) = s.strip_prefix("spectral:twist=") {
            let v: Vec<f64> = rest.split(',').map(|t| t.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
            if v.len() != 3 {
                return Err(bad());
            }
            Ok(Source::Spectral { theta: [v[0], v[1], v[2]] })
        } else if let Some(seed) = s.strip_prefix("random:seed=") {
            Ok(Source::Random { seed: seed.parse().map_err(|_| bad())? })
        } else {
            Err(bad())
        }
    }
}

/// Kernel on site pairs with frame indices and a δ_{αβ} algebra block.
///
/// Values are tabulated by the raw displacement `n(x) − n(y) ∈ (−N, N)³`.
/// For the ghost sector the frame pair `(i, j)` labels the 2-form slot and
/// the table is antisymmetric in it.
#[derive(Clone, Debug, PartialEq)]
pub struct ColoredPropagator {
    pub spec: LatticeSpec,
    pub sector: Sector,
    pub source: Source,
    pub epsilon: Option<f64>,
    /// True when values depend only on the displacement modulo N.
    pub periodic: bool,
    pub bound: f64,
    table: Vec<Frame>,
}

fn raw_side(n: usize) -> usize {
    2 * n - 1
}

impl ColoredPropagator {
    fn from_table(spec: LatticeSpec, sector: Sector, source: Source, periodic: bool, table: Vec<Frame>) -> Self {
        let mut p = Self { spec, sector, source, epsilon: None, periodic, bound: 0.0, table };
        p.bound = p.scan_bound();
        p
    }

    pub fn raw_index(&self, d: [i64; 3]) -> usize {
        let n = self.spec.n() as i64;
        let s = raw_side(self.spec.n()) as i64;
        (((d[0] + n - 1) * s + (d[1] + n - 1)) * s + (d[2] + n - 1)) as usize
    }

    pub fn pair_index(&self, x: Site, y: Site) -> usize {
        self.raw_index([
            x.0[0] as i64 - y.0[0] as i64,
            x.0[1] as i64 - y.0[1] as i64,
            x.0[2] as i64 - y.0[2] as i64,
        ])
    }

    fn raw_displacement(&self, idx: usize) -> [i64; 3] {
        let n = self.spec.n() as i64;
        let s = raw_side(self.spec.n());
        [
            (idx / (s * s)) as i64 - (n - 1),
            ((idx / s) % s) as i64 - (n - 1),
            (idx % s) as i64 - (n - 1),
        ]
    }

    pub fn frame(&self, x: Site, y: Site) -> &Frame {
        &self.table[self.pair_index(x, y)]
    }

    pub fn frame_at(&self, raw: usize) -> &Frame {
        &self.table[raw]
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    /// `(L(x,y))_{i,j;α,β}` with zero-based indices.
    pub fn value(&self, x: Site, i: usize, alpha: usize, y: Site, j: usize, beta: usize) -> Complex64 {
        if alpha != beta {
            return Complex64::new(0.0, 0.0);
        }
        self.frame(x, y)[i][j]
    }

    fn scan_bound(&self) -> f64 {
        self.table
            .iter()
            .flat_map(|f| f.iter().flat_map(|r| r.iter()))
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        for f in &mut out.table {
            for r in f.iter_mut() {
                for z in r.iter_mut() {
                    *z *= t;
                }
            }
        }
        out.bound = out.scan_bound();
        out
    }

    /// max |K_ij(δ) − conj(K_ji(−δ))|.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for idx in 0..self.table.len() {
            let d = self.raw_displacement(idx);
            let m = self.raw_index([-d[0], -d[1], -d[2]]);
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max((self.table[idx][i][j] - self.table[m][j][i].conj()).norm());
                }
            }
        }
        worst
    }

    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# csferm colored propagator (translation-invariant displacement table)")?;
        writeln!(out, "format_version={FORMAT_VERSION}")?;
        writeln!(out, "side_length={:?}", self.spec.side_length)?;
        writeln!(out, "sites_per_dim={}", self.spec.sites_per_dim)?;
        writeln!(out, "sector={}", self.sector.name())?;
        writeln!(out, "source={}", self.source.tag())?;
        match self.epsilon {
            Some(e) => writeln!(out, "epsilon={e:?}")?,
            None => writeln!(out, "epsilon=none")?,
        }
        writeln!(out, "periodic={}", self.periodic)?;
        writeln!(out, "bound={:?}", self.bound)?;
        writeln!(out, "color=diagonal")?;
        writeln!(out, "dx,dy,dz,i,j,re,im")?;
        for (idx, f) in self.table.iter().enumerate() {
            let d = self.raw_displacement(idx);
            for (i, row) in f.iter().enumerate() {
                for (j, z) in row.iter().enumerate() {
                    if z.re != 0.0 || z.im != 0.0 {
                        writeln!(out, "{},{},{},{},{},{:?},{:?}", d[0], d[1], d[2], i + 1, j + 1, z.re, z.im)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_cache<R: BufRead>(input: R) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut rows: Vec<String> = Vec::new();
        let mut in_table = false;
        for line in input.lines() {
            let line = line?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if in_table {
                rows.push(line);
            } else if line == "dx,dy,dz,i,j,re,im" {
                in_table = true;
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| header.get(k).cloned().ok_or_else(|| Error::Parse(format!("missing header {k}")));
        let version: u32 = get("format_version")?.parse().map_err(|_| Error::Parse("version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported format version {version}")));
        }
        let pf = |s: String| s.parse::<f64>().map_err(|_| Error::Parse(s));
        let n: usize = get("sites_per_dim")?.parse().map_err(|_| Error::Parse("N".into()))?;
        let spec = LatticeSpec::new(pf(get("side_length")?)?, n)?;
        let sector = match get("sector")?.as_str() {
            "gauge" => Sector::Gauge,
            "ghost" => Sector::Ghost,
            s => return Err(Error::Parse(format!("bad sector {s}"))),
        };
        let source = Source::parse(&get("source")?)?;
        let epsilon = match get("epsilon")?.as_str() {
            "none" => None,
            s => Some(pf(s.to_string())?),
        };
        let periodic = get("periodic")? == "true";
        let bound = pf(get("bound")?)?;
        let side = raw_side(n);
        let mut p = Self {
            spec,
            sector,
            source,
            epsilon,
            periodic,
            bound,
            table: vec![ZERO_FRAME; side * side * side],
        };
        for r in rows {
            let f: Vec<&str> = r.split(',').collect();
            if f.len() != 7 {
                return Err(Error::Parse(format!("bad row {r}")));
            }
            let pi = |s: &str| s.parse::<i64>().map_err(|_| Error::Parse(s.to_string()));
            let d = [pi(f[0])?, pi(f[1])?, pi(f[2])?];
            let (i, j) = (pi(f[3])? as usize - 1, pi(f[4])? as usize - 1);
            let z = Complex64::new(pf(f[5].to_string())?, pf(f[6].to_string())?);
            let idx = p.raw_index(d);
            p.table[idx][i][j] = z;
        }
        Ok(p)
    }
}

/// Deterministic band-limited kernel, periodic on the lattice.
pub fn synthetic_propagator(spec: &LatticeSpec, seed: u64, band: usize, sector: Sector) -> Result<ColoredPropagator> {
    let n = spec.n();
    if 2 * band >= n {
        return Err(Error::BandTooLarge { band, n });
    }
    let salt = match sector {
        Sector::Gauge => 0x9e37_79b9_7f4a_7c15u64,
        Sector::Ghost => 0xc2b2_ae3d_27d4_eb4fu64,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let b = band as i64;
    let mut modes: Vec<([i64; 3], Frame)> = Vec::new();
    for m0 in -b..=b {
        for m1 in -b..=b {
            for m2 in -b..=b {
                let mut g = ZERO_FRAME;
                match sector {
                    Sector::Gauge => {
                        for i in 0..3 {
                            g[i][i] = Complex64::new(rng.gen_range(-1.0..1.0), 0.0);
                            for j in (i + 1)..3 {
                                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                                g[i][j] = z;
                                g[j][i] = z.conj();
                            }
                        }
                    }
                    Sector::Ghost => {
                        for i in 0..3 {
                            for j in (i + 1)..3 {
                                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                                g[i][j] = z;
                                g[j][i] = -z;
                            }
                        }
                    }
                }
                modes.push(([m0, m1, m2], g));
            }
        }
    }
    let scale = 1.0 / modes.len() as f64;
    let nn = n as i64;
    let side = raw_side(n);
    let mut table = vec![ZERO_FRAME; side * side * side];
    let mut periodic_cell = vec![ZERO_FRAME; spec.site_count()];
    for (off, cell) in periodic_cell.iter_mut().enumerate() {
        let s = spec.site_at(off).0;
        for (m, g) in &modes {
            let ph = 2.0 * PI * (m[0] * s[0] as i64 + m[1] * s[1] as i64 + m[2] * s[2] as i64) as f64 / n as f64;
            let e = Complex64::from_polar(scale, ph);
            for i in 0..3 {
                for j in 0..3 {
                    cell[i][j] += g[i][j] * e;
                }
            }
        }
    }
    let mut p = ColoredPropagator::from_table(*spec, sector, Source::Synthetic { seed, band }, true, Vec::new());
    for idx in 0..side * side * side {
        let d = {
            let s = side;
            [(idx / (s * s)) as i64 - (nn - 1), ((idx / s) % s) as i64 - (nn - 1), (idx % s) as i64 - (nn - 1)]
        };
        let off = spec.index(spec.site(d[0], d[1], d[2]));
        table[idx] = periodic_cell[off];
    }
    p.table = table;
    p.bound = p.scan_bound();
    Ok(p)
}

/// Kernel with independent uniform entries for every raw displacement,
/// antisymmetric in the frame pair for the ghost sector. Not periodic.
pub fn random_propagator(spec: &LatticeSpec, seed: u64, sector: Sector) -> ColoredPropagator {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = raw_side(spec.n());
    let mut table = vec![ZERO_FRAME; side * side * side];
    for f in table.iter_mut() {
        for i in 0..3 {
            for j in 0..3 {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                match sector {
                    Sector::Gauge => f[i][j] = z,
                    Sector::Ghost if i < j => {
                        f[i][j] = z;
                        f[j][i] = -z;
                    }
                    Sector::Ghost => {}
                }
            }
        }
    }
    ColoredPropagator::from_table(*spec, sector, Source::Random { seed }, false, table)
}

/// Multiplies by χ(d/ε); zero for d ≤ ε, unchanged for d ≥ 2ε.
pub fn apply_cutoff(k: &ColoredPropagator, chi: &CutoffProfile, epsilon: f64) -> Result<ColoredPropagator> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Invalid(format!("epsilon = {epsilon}")));
    }
    let mut out = k.clone();
    for idx in 0..out.table.len() {
        let d = out.raw_displacement(idx);
        let c = chi.eval(out.spec.displacement_distance(d) / epsilon);
        for r in out.table[idx].iter_mut() {
            for z in r.iter_mut() {
                *z *= c;
            }
        }
    }
    out.epsilon = Some(epsilon);
    out.bound = out.scan_bound();
    Ok(out)
}

// ---------------------------------------------------------------------------
// exterior algebra on R³, basis e_I with I a bitmask over {0,1,2}

/// Basis masks of p-forms in component order.
pub fn basis(p: usize) -> &'static [u8] {
    match p {
        0 => &[0b000],
        1 => &[0b001, 0b010, 0b100],
        2 => &[0b011, 0b101, 0b110],
        3 => &[0b111],
        _ => &[],
    }
}

fn component(p: usize, mask: u8) -> usize {
    basis(p).iter().position(|&m| m == mask).expect("basis mask")
}

fn below(mask: u8, j: usize) -> u32 {
    (mask & ((1u8 << j) - 1)).count_ones()
}

/// e_j ∧ e_I as (sign, mask), or None when j ∈ I.
fn wedge(j: usize, mask: u8) -> Option<(f64, u8)> {
    if mask & (1 << j) != 0 {
        return None;
    }
    let s = if below(mask, j) % 2 == 0 { 1.0 } else { -1.0 };
    Some((s, mask | (1 << j)))
}

/// ι_{e_j} e_I as (sign, mask), or None when j ∉ I.
fn interior(j: usize, mask: u8) -> Option<(f64, u8)> {
    if mask & (1 << j) == 0 {
        return None;
    }
    let s = if below(mask, j) % 2 == 0 { 1.0 } else { -1.0 };
    Some((s, mask & !(1 << j)))
}

/// Hodge star: e_I ↦ s e_{I^c} with e_I ∧ s e_{I^c} = e_123.
fn star(mask: u8) -> (f64, u8) {
    let comp = 0b111 & !mask;
    // sign of the permutation listing I then I^c
    let mut seq: Vec<usize> = (0..3).filter(|k| mask & (1 << k) != 0).collect();
    seq.extend((0..3).filter(|k| comp & (1 << k) != 0));
    let mut inv = 0;
    for a in 0..seq.len() {
        for b in (a + 1)..seq.len() {
            if seq[a] > seq[b] {
                inv += 1;
            }
        }
    }
    (if inv % 2 == 0 { 1.0 } else { -1.0 }, comp)
}

/// Mode symbol of d: i k∧, as a matrix from p-forms to (p+1)-forms.
fn d_symbol(k: [f64; 3], p: usize) -> Vec<Vec<Complex64>> {
    let (src, dst) = (basis(p), basis(p + 1));
    let mut m = vec![vec![Complex64::new(0.0, 0.0); src.len()]; dst.len()];
    for (c, &mask) in src.iter().enumerate() {
        for (j, kj) in k.iter().enumerate() {
            if let Some((s, out)) = wedge(j, mask) {
                m[component(p + 1, out)][c] += Complex64::new(0.0, s * kj);
            }
        }
    }
    m
}

/// Mode symbol of d*: −i ι_k, from p-forms to (p−1)-forms.
fn codiff_symbol(k: [f64; 3], p: usize) -> Vec<Vec<Complex64>> {
    let src = basis(p);
    if p == 0 {
        return Vec::new();
    }
    let dst = basis(p - 1);
    let mut m = vec![vec![Complex64::new(0.0, 0.0); src.len()]; dst.len()];
    for (c, &mask) in src.iter().enumerate() {
        for (j, kj) in k.iter().enumerate() {
            if let Some((s, out)) = interior(j, mask) {
                m[component(p - 1, out)][c] += Complex64::new(0.0, -s * kj);
            }
        }
    }
    m
}

/// Differential form of degree p with twisted periodicity
/// f(x + L e_c) = e^{2πiθ_c} f(x); stored on the fundamental cell.
#[derive(Clone, Debug, PartialEq)]
pub struct FormField {
    pub spec: LatticeSpec,
    pub degree: usize,
    pub theta: [f64; 3],
    /// `data[c * N³ + site]`.
    pub data: Vec<Complex64>,
}

impl FormField {
    pub fn zeros(spec: &LatticeSpec, degree: usize, theta: [f64; 3]) -> Self {
        let comps = basis(degree).len();
        Self { spec: *spec, degree, theta, data: vec![Complex64::new(0.0, 0.0); comps * spec.site_count()] }
    }

    pub fn components(&self) -> usize {
        basis(self.degree).len()
    }

    pub fn norm(&self) -> f64 {
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.spec.weight()).sqrt()
    }

    pub fn sub(&self, other: &FormField) -> FormField {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
        out
    }

    pub fn add(&self, other: &FormField) -> FormField {
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        out
    }

    /// Random combination of twisted modes with |m_c| ≤ band.
    pub fn random_band_limited<R: Rng>(
        spec: &LatticeSpec,
        degree: usize,
        theta: [f64; 3],
        band: usize,
        rng: &mut R,
    ) -> Self {
        let mut modes = Self::zeros(spec, degree, theta);
        let b = band as i64;
        for c in 0..modes.components() {
            for m0 in -b..=b {
                for m1 in -b..=b {
                    for m2 in -b..=b {
                        let off = spec.index(spec.site(m0, m1, m2));
                        modes.data[c * spec.site_count() + off] =
                            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    }
                }
            }
        }
        let sp = Spectral { spec: *spec, theta };
        sp.from_modes(&modes)
    }
}

struct Spectral {
    spec: LatticeSpec,
    theta: [f64; 3],
}

fn fft3(data: &mut [Complex64], n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..3 {
        let stride = n.pow(2 - axis as u32);
        for base in 0..n * n * n {
            // visit each line once via its first element
            let coord = (base / stride) % n;
            if coord != 0 {
                continue;
            }
            for (t, v) in line.iter_mut().enumerate() {
                *v = data[base + t * stride];
            }
            fft.process(&mut line);
            for (t, v) in line.iter().enumerate() {
                data[base + t * stride] = *v;
            }
        }
    }
    if inverse {
        let s = 1.0 / (n * n * n) as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

impl Spectral {
    fn twist_phase(&self, s: Site) -> Complex64 {
        let n = self.spec.n() as f64;
        let ph: f64 = (0..3).map(|c| 2.0 * PI * self.theta[c] * s.0[c] as f64 / n).sum();
        Complex64::from_polar(1.0, ph)
    }

    fn momentum(&self, off: usize) -> [f64; 3] {
        let n = self.spec.n();
        let s = self.spec.site_at(off).0;
        let mut k = [0.0; 3];
        for c in 0..3 {
            // symmetric range [−N/2, N/2)
            let m = if s[c] < n.div_ceil(2) { s[c] as f64 } else { s[c] as f64 - n as f64 };
            k[c] = 2.0 * PI * (m + self.theta[c]) / self.spec.side_length;
        }
        k
    }

    fn to_modes(&self, f: &FormField) -> FormField {
        let sc = self.spec.site_count();
        let mut out = f.clone();
        for c in 0..f.components() {
            let block = &mut out.data[c * sc..(c + 1) * sc];
            for (i, v) in block.iter_mut().enumerate() {
                *v *= self.twist_phase(self.spec.site_at(i)).conj();
            }
            fft3(block, self.spec.n(), false);
        }
        out
    }

    fn from_modes(&self, m: &FormField) -> FormField {
        let sc = self.spec.site_count();
        let mut out = m.clone();
        for c in 0..m.components() {
            let block = &mut out.data[c * sc..(c + 1) * sc];
            fft3(block, self.spec.n(), true);
            for (i, v) in block.iter_mut().enumerate() {
                *v *= self.twist_phase(self.spec.site_at(i));
            }
        }
        out
    }

    /// Applies a mode-wise linear map sending degree p to degree q.
    fn apply<F: Fn([f64; 3]) -> Vec<Vec<Complex64>>>(&self, f: &FormField, q: usize, sym: F) -> FormField {
        let sc = self.spec.site_count();
        let modes = self.to_modes(f);
        let mut out = FormField::zeros(&self.spec, q, self.theta);
        if q > 3 {
            return out;
        }
        for off in 0..sc {
            let m = sym(self.momentum(off));
            for (r, row) in m.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for (c, a) in row.iter().enumerate() {
                    acc += a * modes.data[c * sc + off];
                }
                out.data[r * sc + off] = acc;
            }
        }
        self.from_modes(&out)
    }
}

/// Spectral realization of d, d* and L = d*Δ⁻¹ on twisted forms.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralHomotopy {
    pub spec: LatticeSpec,
    pub theta: [f64; 3],
}

pub fn spectral_homotopy(spec: &LatticeSpec, theta: [f64; 3]) -> Result<SpectralHomotopy> {
    for &t in &theta {
        if !t.is_finite() || t.fract() == 0.0 {
            return Err(Error::IntegerTwist(t));
        }
    }
    Ok(SpectralHomotopy { spec: *spec, theta })
}

impl SpectralHomotopy {
    fn engine(&self) -> Spectral {
        Spectral { spec: self.spec, theta: self.theta }
    }

    fn check(&self, f: &FormField) {
        assert_eq!(f.spec, self.spec, "form on a different lattice");
        assert_eq!(f.theta, self.theta, "form with a different twist");
    }

    pub fn d(&self, f: &FormField) -> FormField {
        self.check(f);
        let p = f.degree;
        if p == 3 {
            return FormField::zeros(&self.spec, 3, self.theta);
        }
        self.engine().apply(f, p + 1, |k| d_symbol(k, p))
    }

    pub fn codiff(&self, f: &FormField) -> Option<FormField> {
        self.check(f);
        let p = f.degree;
        if p == 0 {
            return None;
        }
        Some(self.engine().apply(f, p - 1, |k| codiff_symbol(k, p)))
    }

    /// L ω; `None` for 0-forms (the result would have degree −1).
    pub fn apply(&self, f: &FormField) -> Option<FormField> {
        self.check(f);
        let p = f.degree;
        if p == 0 {
            return None;
        }
        Some(self.engine().apply(f, p - 1, |k| {
            let k2: f64 = k.iter().map(|x| x * x).sum();
            let mut m = codiff_symbol(k, p);
            for row in m.iter_mut() {
                for z in row.iter_mut() {
                    *z /= k2;
                }
            }
            m
        }))
    }

    /// (dL + Ld) ω.
    pub fn homotopy_image(&self, f: &FormField) -> FormField {
        let dl = self.apply(f).map(|g| self.d(&g));
        let ld = if f.degree < 3 { self.apply(&self.d(f)) } else { None };
        let mut out = FormField::zeros(&self.spec, f.degree, self.theta);
        if let Some(a) = dl {
            out = out.add(&a);
        }
        if let Some(b) = ld {
            out = out.add(&b);
        }
        out
    }

    /// Symbol of L∘* in the given sector as a 3×3 frame matrix.
    fn sector_symbol(k: [f64; 3], sector: Sector) -> Frame {
        let k2: f64 = k.iter().map(|x| x * x).sum();
        let mut out = ZERO_FRAME;
        match sector {
            Sector::Gauge => {
                let sym = codiff_symbol(k, 2);
                for (j, &mask) in basis(1).iter().enumerate() {
                    let (s, dual) = star(mask);
                    let col = component(2, dual);
                    for i in 0..3 {
                        out[i][j] = sym[i][col] * s / k2;
                    }
                }
            }
            Sector::Ghost => {
                let sym = codiff_symbol(k, 3);
                let (s, _) = star(0);
                for (c, &mask) in basis(2).iter().enumerate() {
                    let pair: Vec<usize> = (0..3).filter(|b| mask & (1 << b) != 0).collect();
                    let v = sym[c][0] * s / k2;
                    out[pair[0]][pair[1]] = v;
                    out[pair[1]][pair[0]] = -v;
                }
            }
        }
        out
    }
}

/// Position-space kernel of L∘* by inverse transform of its mode symbol.
pub fn extract_propagator(h: &SpectralHomotopy, sector: Sector) -> Result<ColoredPropagator> {
    let spec = h.spec;
    let n = spec.n();
    let sc = spec.site_count();
    let eng = h.engine();
    let mut cells = vec![ZERO_FRAME; sc];
    let mut block = vec![Complex64::new(0.0, 0.0); sc];
    let vol = spec.volume();
    for i in 0..3 {
        for j in 0..3 {
            for (off, b) in block.iter_mut().enumerate() {
                *b = SpectralHomotopy::sector_symbol(eng.momentum(off), sector)[i][j];
            }
            if block.iter().all(|z| z.norm() == 0.0) {
                continue;
            }
            let mut work = block.clone();
            fft3(&mut work, n, true);
            for (off, cell) in cells.iter_mut().enumerate() {
                let ph = eng.twist_phase(spec.site_at(off));
                cell[i][j] = work[off] * ph * (sc as f64 / vol);
            }
        }
    }
    let side = raw_side(n);
    let nn = n as i64;
    let mut table = vec![ZERO_FRAME; side * side * side];
    for (idx, slot) in table.iter_mut().enumerate() {
        let d = [(idx / (side * side)) as i64 - (nn - 1), ((idx / side) % side) as i64 - (nn - 1), (idx % side) as i64 - (nn - 1)];
        let mut ph = 0.0;
        let mut red = [0i64; 3];
        for c in 0..3 {
            if d[c] < 0 {
                red[c] = d[c] + nn;
                ph -= 2.0 * PI * h.theta[c];
            } else {
                red[c] = d[c];
            }
        }
        let off = spec.index(Site([red[0] as usize, red[1] as usize, red[2] as usize]));
        let e = Complex64::from_polar(1.0, ph);
        let mut f = cells[off];
        for r in f.iter_mut() {
            for z in r.iter_mut() {
                *z *= e;
            }
        }
        *slot = f;
    }
    Ok(ColoredPropagator::from_table(spec, sector, Source::Spectral { theta: h.theta }, false, table))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exterior_identities() {
        // k∧ι_k + ι_k k∧ = |k|² on every degree
        let k = [0.3, -1.1, 0.7];
        let k2: f64 = k.iter().map(|x| x * x).sum();
        for p in 0..=3 {
            let n = basis(p).len();
            let mut total = vec![vec![Complex64::new(0.0, 0.0); n]; n];
            if p < 3 {
                let d = d_symbol(k, p);
                let dd = codiff_symbol(k, p + 1);
                for a in 0..n {
                    for b in 0..n {
                        total[a][b] += (0..d.len()).map(|m| dd[a][m] * d[m][b]).sum::<Complex64>();
                    }
                }
            }
            if p > 0 {
                let c = codiff_symbol(k, p);
                let d = d_symbol(k, p - 1);
                for a in 0..n {
                    for b in 0..n {
                        total[a][b] += (0..c.len()).map(|m| d[a][m] * c[m][b]).sum::<Complex64>();
                    }
                }
            }
            for a in 0..n {
                for b in 0..n {
                    let want = if a == b { k2 } else { 0.0 };
                    assert!((total[a][b] - want).norm() < 1e-14, "p={p}");
                }
            }
        }
    }

    #[test]
    fn star_squares_to_identity_in_three_dimensions() {
        for m in 0u8..8 {
            let (s1, c) = star(m);
            let (s2, back) = star(c);
            assert_eq!(back, m);
            assert_eq!(s1 * s2, 1.0);
        }
    }

    #[test]
    fn integer_twist_rejected() {
        let spec = LatticeSpec::new(1.0, 4).unwrap();
        assert!(spectral_homotopy(&spec, [0.0, 0.5, 0.5]).is_err());
        assert!(spectral_homotopy(&spec, [0.3, 2.0, 0.5]).is_err());
        assert!(spectral_homotopy(&spec, [0.3, 0.2, 0.5]).is_ok());
    }

    #[test]
    fn synthetic_rejects_wide_band() {
        let spec = LatticeSpec::new(1.0, 6).unwrap();
        assert!(synthetic_propagator(&spec, 1, 3, Sector::Gauge).is_err());
        assert!(synthetic_propagator(&spec, 1, 2, Sector::Gauge).is_ok());
    }
}
