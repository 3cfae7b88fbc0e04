//! Smoothing profiles and the lattice kernels δ_h, D_h and their convolutions.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::sum::Neumaier;

pub const FORMAT_VERSION: u32 = 1;

/// Quintic smoothstep on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

fn raw_bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// `∫_{-1}^{1} g` for smooth `g` vanishing to all orders at ±1.
fn flat_integral<F: Fn(f64) -> f64>(g: F, panels: usize) -> f64 {
    let h = 2.0 / panels as f64;
    let mut acc = Neumaier::default();
    for k in 1..panels {
        acc.add(g(-1.0 + k as f64 * h));
    }
    acc.value() * h
}

/// ζ(x) = c·exp(−1/(1−x²)) with c fixed by ∫₀^∞ x²ζ = 1/(4π).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpProfile {
    pub norm: f64,
}

impl BumpProfile {
    pub fn new() -> Self {
        let half = 0.5 * flat_integral(|x| x * x * raw_bump(x), 1 << 14);
        Self { norm: 1.0 / (4.0 * std::f64::consts::PI * half) }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.norm * raw_bump(x)
    }

    pub fn id(&self) -> String {
        format!("bump-exp;c={:?}", self.norm)
    }
}

impl Default for BumpProfile {
    fn default() -> Self {
        Self::new()
    }
}

/// Z: 1 on `[-1,1]`, 0 outside `[-2,2]`, quintic in between.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlateauProfile;

impl PlateauProfile {
    pub fn eval(&self, x: f64) -> f64 {
        1.0 - smoothstep(x.abs() - 1.0)
    }
}

/// χ: 0 for x ≤ 1, 1 for x ≥ 2, quintic in between.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CutoffProfile;

impl CutoffProfile {
    pub fn eval(&self, x: f64) -> f64 {
        smoothstep(x - 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    Delta,
    Plateau,
    TildeDelta,
    TildePlateau,
    Star,
    Custom,
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelKind::Delta => "delta",
            KernelKind::Plateau => "plateau",
            KernelKind::TildeDelta => "tilde-delta",
            KernelKind::TildePlateau => "tilde-plateau",
            KernelKind::Star => "star",
            KernelKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl KernelKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "delta" => KernelKind::Delta,
            "plateau" => KernelKind::Plateau,
            "tilde-delta" => KernelKind::TildeDelta,
            "tilde-plateau" => KernelKind::TildePlateau,
            "star" => KernelKind::Star,
            "custom" => KernelKind::Custom,
            _ => return Err(Error::Parse(format!("unknown kernel kind {s}"))),
        })
    }
}

/// Admissibility rules for mollifier scales.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupportPolicy {
    /// Minimum h in units of the lattice spacing.
    pub floor_factor: f64,
    /// Accept supports reaching past half the side length.
    pub allow_wrap: bool,
}

impl Default for SupportPolicy {
    fn default() -> Self {
        Self { floor_factor: 1.5, allow_wrap: true }
    }
}

impl SupportPolicy {
    pub fn check_floor(&self, spec: &LatticeSpec, h: f64) -> Result<()> {
        let min = self.floor_factor * spec.spacing();
        if !(h.is_finite() && h > 0.0) || h < min * (1.0 - 1e-12) {
            return Err(Error::BelowFloor { h, min });
        }
        Ok(())
    }

    pub fn check_wrap(&self, spec: &LatticeSpec, radius: f64) -> Result<()> {
        let limit = 0.5 * spec.side_length;
        if !self.allow_wrap && radius >= limit {
            return Err(Error::Wrap { radius, limit });
        }
        Ok(())
    }
}

/// Translation-invariant real kernel stored as a displacement stencil.
#[derive(Clone, Debug, PartialEq)]
pub struct SmearingKernel {
    pub spec: LatticeSpec,
    pub h: f64,
    pub kind: KernelKind,
    pub radius: f64,
    pub profile: String,
    /// Dense values indexed by offset (see [`LatticeSpec::offset_index`]).
    pub stencil: Vec<f64>,
    /// Nonzero offsets in increasing order.
    pub support: Vec<(usize, f64)>,
}

impl SmearingKernel {
    pub fn from_stencil(
        spec: LatticeSpec,
        h: f64,
        kind: KernelKind,
        radius: f64,
        profile: String,
        stencil: Vec<f64>,
    ) -> Self {
        let support = stencil
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        Self { spec, h, kind, radius, profile, stencil, support }
    }

    /// Kernel whose value depends only on the periodic distance.
    pub fn radial<F: Fn(f64) -> f64>(
        spec: LatticeSpec,
        h: f64,
        kind: KernelKind,
        radius: f64,
        profile: String,
        f: F,
    ) -> Self {
        let stencil = (0..spec.site_count()).map(|o| f(spec.offset_distance(o))).collect();
        Self::from_stencil(spec, h, kind, radius, profile, stencil)
    }

    pub fn value_offset(&self, off: usize) -> f64 {
        self.stencil[off]
    }

    pub fn value(&self, x: crate::lattice::Site, y: crate::lattice::Site) -> f64 {
        self.stencil[self.spec.offset_index(x, y)]
    }

    /// `w * Σ_y k(x, y)`.
    pub fn mass(&self) -> f64 {
        let mut acc = Neumaier::default();
        for &(_, v) in &self.support {
            acc.add(v);
        }
        acc.value() * self.spec.weight()
    }

    pub fn scaled(&self, t: f64) -> Self {
        let stencil = self.stencil.iter().map(|v| v * t).collect();
        Self::from_stencil(self.spec, self.h, self.kind, self.radius, self.profile.clone(), stencil)
    }

    pub fn write_cache<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# csferm smearing kernel")?;
        writeln!(out, "format_version={FORMAT_VERSION}")?;
        writeln!(out, "side_length={:?}", self.spec.side_length)?;
        writeln!(out, "sites_per_dim={}", self.spec.sites_per_dim)?;
        writeln!(out, "kind={}", self.kind)?;
        writeln!(out, "h={:?}", self.h)?;
        writeln!(out, "radius={:?}", self.radius)?;
        writeln!(out, "profile={}", self.profile)?;
        writeln!(out, "offset,value")?;
        for &(o, v) in &self.support {
            writeln!(out, "{o},{v:?}")?;
        }
        Ok(())
    }

    pub fn read_cache<R: BufRead>(input: R) -> Result<Self> {
        let mut header = std::collections::HashMap::new();
        let mut rows = Vec::new();
        let mut in_table = false;
        for line in input.lines() {
            let line = line?;
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            if in_table {
                let (o, v) = line
                    .split_once(',')
                    .ok_or_else(|| Error::Parse(format!("bad row {line}")))?;
                let o: usize = o.parse().map_err(|_| Error::Parse(format!("bad offset {o}")))?;
                let v: f64 = v.parse().map_err(|_| Error::Parse(format!("bad value {v}")))?;
                rows.push((o, v));
            } else if line == "offset,value" {
                in_table = true;
            } else if let Some((k, v)) = line.split_once('=') {
                header.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| {
            header.get(k).cloned().ok_or_else(|| Error::Parse(format!("missing header {k}")))
        };
        let pf = |s: String| s.parse::<f64>().map_err(|_| Error::Parse(s));
        let version: u32 = get("format_version")?.parse().map_err(|_| Error::Parse("version".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported format version {version}")));
        }
        let n: usize = get("sites_per_dim")?.parse().map_err(|_| Error::Parse("N".into()))?;
        let spec = LatticeSpec::new(pf(get("side_length")?)?, n)?;
        let mut stencil = vec![0.0; spec.site_count()];
        for (o, v) in rows {
            if o >= stencil.len() {
                return Err(Error::Parse(format!("offset {o} out of range")));
            }
            stencil[o] = v;
        }
        Ok(Self::from_stencil(
            spec,
            pf(get("h")?)?,
            KernelKind::parse(&get("kind")?)?,
            pf(get("radius")?)?,
            get("profile")?,
            stencil,
        ))
    }
}

pub fn make_delta_h(
    spec: &LatticeSpec,
    zeta: &BumpProfile,
    h: f64,
    policy: &SupportPolicy,
) -> Result<SmearingKernel> {
    policy.check_floor(spec, h)?;
    policy.check_wrap(spec, h / 2.0)?;
    let pre = (2.0 / h).powi(3);
    Ok(SmearingKernel::radial(*spec, h, KernelKind::Delta, h / 2.0, zeta.id(), |d| {
        pre * zeta.eval(2.0 * d / h)
    }))
}

pub fn make_d_h(spec: &LatticeSpec, z: &PlateauProfile, h: f64, policy: &SupportPolicy) -> Result<SmearingKernel> {
    policy.check_floor(spec, h)?;
    policy.check_wrap(spec, 4.0 * h)?;
    Ok(SmearingKernel::radial(*spec, h, KernelKind::Plateau, 4.0 * h, "plateau-quintic".into(), |d| {
        z.eval(d / (2.0 * h))
    }))
}

/// `(a∘b)(x,y) = w Σ_z a(x,z) b(z,y)`.
pub fn convolve(
    a: &SmearingKernel,
    b: &SmearingKernel,
    kind: KernelKind,
    policy: &SupportPolicy,
) -> Result<SmearingKernel> {
    if a.spec != b.spec {
        return Err(Error::LatticeMismatch);
    }
    let spec = a.spec;
    let radius = a.radius + b.radius;
    policy.check_wrap(&spec, radius)?;
    let w = spec.weight();
    let n = spec.site_count();
    let mut stencil = vec![0.0; n];
    let origin = spec.site_at(0);
    for (off, slot) in stencil.iter_mut().enumerate() {
        let y = spec.site_at(off);
        let mut acc = Neumaier::default();
        for &(u, av) in &a.support {
            let z = spec.shift(origin, u);
            let bv = b.stencil[spec.offset_index(z, y)];
            if bv != 0.0 {
                acc.add(av * bv);
            }
        }
        *slot = acc.value() * w;
    }
    let profile = format!("({})*({})", a.profile, b.profile);
    Ok(SmearingKernel::from_stencil(spec, a.h, kind, radius, profile, stencil))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// Sup over x of the L1, L2 and L∞ norms of `k(x, ·)`.
pub fn kernel_norms(k: &SmearingKernel) -> KernelNorms {
    let spec = &k.spec;
    let w = spec.weight();
    let mut best = KernelNorms { l1: 0.0, l2: 0.0, linf: 0.0 };
    // translation invariance: every row is a permutation of the stencil
    let mut l1 = Neumaier::default();
    let mut l2 = Neumaier::default();
    let mut linf: f64 = 0.0;
    for &(_, v) in &k.support {
        l1.add(v.abs());
        l2.add(v * v);
        linf = linf.max(v.abs());
    }
    best.l1 = l1.value() * w;
    best.l2 = (l2.value() * w).sqrt();
    best.linf = linf;
    best
}

/// δ_h, D_h and their convolutions at one scale.
#[derive(Clone, Debug)]
pub struct MollifierSet {
    pub spec: LatticeSpec,
    pub h: f64,
    pub delta: SmearingKernel,
    pub plateau: SmearingKernel,
    pub delta_tilde: SmearingKernel,
    pub plateau_tilde: SmearingKernel,
    /// Lattice mass of δ_h.
    pub mass: f64,
}

impl MollifierSet {
    pub fn build(spec: &LatticeSpec, h: f64, policy: &SupportPolicy) -> Result<Self> {
        let zeta = BumpProfile::new();
        let delta = make_delta_h(spec, &zeta, h, policy)?;
        let plateau = make_d_h(spec, &PlateauProfile, h, policy)?;
        let delta_tilde = convolve(&delta, &delta, KernelKind::TildeDelta, policy)?;
        let plateau_tilde = convolve(&delta, &plateau, KernelKind::TildePlateau, policy)?;
        let mass = delta.mass();
        Ok(Self { spec: *spec, h, delta, plateau, delta_tilde, plateau_tilde, mass })
    }

    /// Set built from arbitrary δ_h and D_h kernels on one lattice.
    pub fn from_kernels(delta: SmearingKernel, plateau: SmearingKernel, policy: &SupportPolicy) -> Result<Self> {
        if delta.spec != plateau.spec {
            return Err(Error::LatticeMismatch);
        }
        let delta_tilde = convolve(&delta, &delta, KernelKind::TildeDelta, policy)?;
        let plateau_tilde = convolve(&delta, &plateau, KernelKind::TildePlateau, policy)?;
        let mass = delta.mass();
        Ok(Self { spec: delta.spec, h: delta.h, delta, plateau, delta_tilde, plateau_tilde, mass })
    }

    pub fn star(&self, policy: &SupportPolicy) -> Result<SmearingKernel> {
        convolve(&self.delta_tilde, &self.plateau_tilde, KernelKind::Star, policy)
    }
}

/// Outcome of the lemma property suite at one scale.
#[derive(Clone, Debug)]
pub struct LemmaReport {
    pub h: f64,
    pub mass: f64,
    pub positivity: bool,
    /// max |δ̃·D̃ − m·δ̃| over all offsets.
    pub product_defect: f64,
    /// |‖D̃‖∞ − m|.
    pub sup_defect: f64,
    /// |D̃(0) − m|.
    pub center_defect: f64,
    pub l1_delta_tilde: f64,
    pub l1_star: f64,
    /// max_x |(δ̃ f)(x)/m² − f(x)| for the probe function.
    pub delta_error: f64,
    pub symmetric: bool,
    pub support_ok: bool,
}

/// Band-limited probe used by the delta-convergence property.
pub fn probe(spec: &LatticeSpec, s: crate::lattice::Site) -> f64 {
    let a = spec.spacing();
    let tau = 2.0 * std::f64::consts::PI / spec.side_length;
    let x = [s.0[0] as f64 * a, s.0[1] as f64 * a, s.0[2] as f64 * a];
    (tau * x[0]).cos() * (tau * x[1]).cos() + (tau * x[2]).sin()
}

pub fn lemma_report(set: &MollifierSet, policy: &SupportPolicy) -> Result<LemmaReport> {
    let spec = &set.spec;
    let star = set.star(policy)?;
    let m = set.mass;
    let kernels = [&set.delta, &set.plateau, &set.delta_tilde, &set.plateau_tilde, &star];
    let positivity = kernels.iter().all(|k| k.stencil.iter().all(|v| *v >= 0.0));
    let symmetric = kernels
        .iter()
        .all(|k| (0..spec.site_count()).all(|o| k.stencil[o] == k.stencil[spec.negate_offset(o)]));
    let support_ok = kernels.iter().all(|k| {
        k.support.iter().all(|&(o, _)| spec.offset_distance(o) < k.radius * (1.0 + 1e-12))
    });
    let mut product_defect: f64 = 0.0;
    for o in 0..spec.site_count() {
        let dt = set.delta_tilde.stencil[o];
        let pt = set.plateau_tilde.stencil[o];
        product_defect = product_defect.max((dt * pt - m * dt).abs());
    }
    let pn = kernel_norms(&set.plateau_tilde);
    let sup_defect = (pn.linf - m).abs();
    let center_defect = (set.plateau_tilde.stencil[0] - m).abs();
    let l1_delta_tilde = kernel_norms(&set.delta_tilde).l1;
    let l1_star = kernel_norms(&star).l1;
    let w = spec.weight();
    let mut delta_error: f64 = 0.0;
    for x in spec.sites() {
        let mut acc = Neumaier::default();
        for &(u, v) in &set.delta_tilde.support {
            acc.add(v * probe(spec, spec.shift(x, u)));
        }
        let smoothed = acc.value() * w / (m * m);
        delta_error = delta_error.max((smoothed - probe(spec, x)).abs());
    }
    Ok(LemmaReport {
        h: set.h,
        mass: m,
        positivity,
        product_defect,
        sup_defect,
        center_defect,
        l1_delta_tilde,
        l1_star,
        delta_error,
        symmetric,
        support_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_hit_their_endpoints() {
        let z = PlateauProfile;
        let chi = CutoffProfile;
        assert_eq!(z.eval(0.0), 1.0);
        assert_eq!(z.eval(1.0), 1.0);
        assert_eq!(z.eval(-1.0), 1.0);
        assert_eq!(z.eval(2.0), 0.0);
        assert_eq!(z.eval(3.5), 0.0);
        assert_eq!(chi.eval(1.0), 0.0);
        assert_eq!(chi.eval(0.2), 0.0);
        assert_eq!(chi.eval(2.0), 1.0);
        assert_eq!(chi.eval(7.0), 1.0);
        let zeta = BumpProfile::new();
        assert_eq!(zeta.eval(1.0), 0.0);
        assert_eq!(zeta.eval(-1.3), 0.0);
        assert_eq!(zeta.eval(0.3), zeta.eval(-0.3));
    }

    #[test]
    fn profiles_are_monotone() {
        let zeta = BumpProfile::new();
        let (z, chi) = (PlateauProfile, CutoffProfile);
        let mut prev = (zeta.eval(0.0), z.eval(0.0), chi.eval(0.0));
        for k in 1..=3000 {
            let x = k as f64 * 1e-3;
            let cur = (zeta.eval(x), z.eval(x), chi.eval(x));
            assert!(cur.0 <= prev.0 && cur.1 <= prev.1 && cur.2 >= prev.2, "x = {x}");
            prev = cur;
        }
    }

    #[test]
    fn delta_scaling_at_origin() {
        let spec = LatticeSpec::new(1.0, 16).unwrap();
        let p = SupportPolicy::default();
        let zeta = BumpProfile::new();
        let d1 = make_delta_h(&spec, &zeta, 0.125, &p).unwrap();
        let d2 = make_delta_h(&spec, &zeta, 0.25, &p).unwrap();
        assert!((d2.stencil[0] - d1.stencil[0] / 8.0).abs() < 1e-12 * d1.stencil[0]);
    }

    #[test]
    fn floor_and_wrap_rejections() {
        let spec = LatticeSpec::new(1.0, 12).unwrap();
        let zeta = BumpProfile::new();
        let p = SupportPolicy::default();
        match make_delta_h(&spec, &zeta, 0.1, &p) {
            Err(Error::BelowFloor { min, .. }) => assert!((min - 0.125).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        let strict = SupportPolicy { floor_factor: 4.0, allow_wrap: false };
        assert!(make_d_h(&spec, &PlateauProfile, 0.34, &strict).is_err());
        let spec40 = LatticeSpec::new(1.0, 40).unwrap();
        assert!(make_d_h(&spec40, &PlateauProfile, 0.1, &strict).is_ok());
        assert!(make_d_h(&spec40, &PlateauProfile, 0.13, &strict).is_err());
    }

    #[test]
    fn plateau_values() {
        let spec = LatticeSpec::new(1.0, 24).unwrap();
        let h = 1.0 / 12.0;
        let d = make_d_h(&spec, &PlateauProfile, h, &SupportPolicy::default()).unwrap();
        for o in 0..spec.site_count() {
            let r = spec.offset_distance(o);
            let v = d.stencil[o];
            if r <= 2.0 * h {
                assert_eq!(v, 1.0);
            }
            if r >= 4.0 * h {
                assert_eq!(v, 0.0);
            }
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn cache_roundtrip_is_bit_exact() {
        let spec = LatticeSpec::new(1.0, 12).unwrap();
        let set = MollifierSet::build(&spec, 0.25, &SupportPolicy::default()).unwrap();
        for k in [&set.delta, &set.plateau, &set.delta_tilde, &set.plateau_tilde] {
            let mut buf = Vec::new();
            k.write_cache(&mut buf).unwrap();
            let back = SmearingKernel::read_cache(&buf[..]).unwrap();
            assert_eq!(&back, k);
            for (a, b) in back.stencil.iter().zip(&k.stencil) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
