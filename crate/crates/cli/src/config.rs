use std::path::Path;

use csferm::kernels::{
    apply_cutoff, extract_propagator, spectral_homotopy, synthetic_propagator, ColoredPropagator, Sector, Source,
};
use csferm::lattice::LatticeSpec;
use csferm::mollifier::{CutoffProfile, SupportPolicy};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    pub lattice: LatticeSection,
    #[serde(default)]
    pub mollifier: MollifierSection,
    pub kernels: KernelSection,
    #[serde(default)]
    pub perturbation: PerturbationSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "one")]
    pub workers: usize,
}

fn default_experiment() -> String {
    "run".into()
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub side_length: f64,
    pub sites_per_dim: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollifierSection {
    #[serde(default)]
    pub h: Vec<f64>,
    /// Smallest admissible h in lattice spacings.
    #[serde(default = "default_floor")]
    pub floor_factor: f64,
    #[serde(default = "yes")]
    pub allow_wrap: bool,
}

fn default_floor() -> f64 {
    SupportPolicy::default().floor_factor
}

fn yes() -> bool {
    true
}

impl Default for MollifierSection {
    fn default() -> Self {
        Self { h: Vec::new(), floor_factor: default_floor(), allow_wrap: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelSource {
    Synthetic,
    Spectral,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub source: KernelSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub band: usize,
    pub twist: Option<[f64; 3]>,
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSection {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default = "yes")]
    pub ghost_smearing: bool,
    #[serde(default = "unit")]
    pub coupling: f64,
    /// Acknowledges the cost of orders above 2.
    #[serde(default)]
    pub allow_high_order: bool,
    /// λ used by the exploratory series table.
    pub lambda: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

impl Default for PerturbationSection {
    fn default() -> Self {
        Self { n: Vec::new(), ghost_smearing: true, coupling: 1.0, allow_high_order: false, lambda: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_results")]
    pub results: String,
}

fn default_results() -> String {
    "results.csv".into()
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { results: default_results() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tight")]
    pub identity: f64,
    #[serde(default = "tight")]
    pub sup_norm: f64,
    #[serde(default = "partition")]
    pub partition: f64,
    #[serde(default = "slope_min")]
    pub slope_min: f64,
    #[serde(default = "slope_max")]
    pub slope_max: f64,
    #[serde(default = "richardson")]
    pub richardson_fraction: f64,
    #[serde(default = "spot_checks")]
    pub spot_checks: usize,
    /// Uniform bound on the L₁ norm of δ̃_h across an h sweep.
    #[serde(default = "l1_constant")]
    pub l1_constant: f64,
}

fn tight() -> f64 {
    1e-12
}
fn partition() -> f64 {
    1e-14
}
fn slope_min() -> f64 {
    2.5
}
fn slope_max() -> f64 {
    3.5
}
fn richardson() -> f64 {
    0.05
}
fn spot_checks() -> usize {
    50
}
fn l1_constant() -> f64 {
    2.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: tight(),
            sup_norm: tight(),
            partition: partition(),
            slope_min: slope_min(),
            slope_max: slope_max(),
            richardson_fraction: richardson(),
            spot_checks: spot_checks(),
            l1_constant: l1_constant(),
        }
    }
}

/// A violated constraint, naming the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn bad(field: &str, msg: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec::new(self.lattice.side_length, self.lattice.sites_per_dim).expect("validated lattice")
    }

    pub fn policy(&self) -> SupportPolicy {
        SupportPolicy { floor_factor: self.mollifier.floor_factor, allow_wrap: self.mollifier.allow_wrap }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let spec = LatticeSpec::new(self.lattice.side_length, self.lattice.sites_per_dim)
            .map_err(|e| bad("lattice", e))?;
        let a = spec.spacing();
        let half = 0.5 * spec.side_length;
        if !(self.mollifier.floor_factor.is_finite() && self.mollifier.floor_factor > 0.0) {
            return Err(bad("mollifier.floor_factor", "must be positive"));
        }
        for &h in &self.mollifier.h {
            if !(h.is_finite() && h > 0.0) {
                return Err(bad("mollifier.h", format!("{h} is not a positive number")));
            }
            let floor = self.mollifier.floor_factor * a;
            if h < floor * (1.0 - 1e-12) {
                return Err(bad("mollifier.h", format!("{h} is below the floor {floor}")));
            }
            if !self.mollifier.allow_wrap && 4.5 * h >= half {
                return Err(bad("mollifier.h", format!("{h} gives support 9h/2 = {} >= L/2 = {half}", 4.5 * h)));
            }
        }
        if self.kernels.epsilon.is_empty() {
            return Err(bad("kernels.epsilon", "empty list"));
        }
        for &e in &self.kernels.epsilon {
            if !(e.is_finite() && e > a) {
                return Err(bad("kernels.epsilon", format!("{e} must exceed the spacing L/N = {a}")));
            }
        }
        match self.kernels.source {
            KernelSource::Synthetic => {
                if 2 * self.kernels.band >= spec.n() {
                    return Err(bad("kernels.band", format!("{} needs band < N/2", self.kernels.band)));
                }
            }
            KernelSource::Spectral => {
                let t = self.kernels.twist.ok_or_else(|| bad("kernels.twist", "required for spectral kernels"))?;
                if t.iter().any(|x| !x.is_finite() || x.fract() == 0.0) {
                    return Err(bad("kernels.twist", "components must be finite non-integers"));
                }
            }
        }
        for &n in &self.perturbation.n {
            if n > 2 && !self.perturbation.allow_high_order {
                return Err(bad("perturbation.n", format!("{n} > 2 requires allow_high_order = true")));
            }
        }
        if !self.perturbation.coupling.is_finite() {
            return Err(bad("perturbation.coupling", "must be finite"));
        }
        if self.perturbation.lambda == Some(0.0) {
            return Err(bad("perturbation.lambda", "must be nonzero"));
        }
        if self.workers == 0 {
            return Err(bad("workers", "must be at least 1"));
        }
        let t = &self.tolerances;
        if t.slope_min > t.slope_max {
            return Err(bad("tolerances.slope_min", "exceeds slope_max"));
        }
        Ok(())
    }

    pub fn source_tag(&self) -> String {
        match self.kernels.source {
            KernelSource::Synthetic => Source::Synthetic { seed: self.kernels.seed, band: self.kernels.band },
            KernelSource::Spectral => Source::Spectral { theta: self.kernels.twist.unwrap_or_default() },
        }
        .tag()
    }

    /// Gauge and ghost kernels with the cutoff at ε applied.
    pub fn kernels(&self, epsilon: f64) -> csferm::Result<(ColoredPropagator, ColoredPropagator)> {
        let spec = self.spec();
        let raw = |sector| match self.kernels.source {
            KernelSource::Synthetic => synthetic_propagator(&spec, self.kernels.seed, self.kernels.band, sector),
            KernelSource::Spectral => {
                let hom = spectral_homotopy(&spec, self.kernels.twist.unwrap_or_default())?;
                extract_propagator(&hom, sector)
            }
        };
        let chi = CutoffProfile;
        Ok((apply_cutoff(&raw(Sector::Gauge)?, &chi, epsilon)?, apply_cutoff(&raw(Sector::Ghost)?, &chi, epsilon)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[lattice]
side_length = 1.0
sites_per_dim = 12
[mollifier]
h = [0.25, 0.125]
[kernels]
source = "synthetic"
seed = 7
band = 2
epsilon = [0.2]
[perturbation]
n = [1]
"#;

    #[test]
    fn parses_defaults() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.workers, 1);
        assert!(c.perturbation.ghost_smearing);
        assert_eq!(c.tolerances.partition, 1e-14);
        assert_eq!(c.output.results, "results.csv");
    }

    fn rejects(edit: (&str, &str), field: &str) {
        let text = BASE.replace(edit.0, edit.1);
        let e = RunConfig::parse(&text).unwrap_err();
        assert!(e.0.contains(field), "{e}");
    }

    #[test]
    fn rejections_name_the_field() {
        rejects(("h = [0.25, 0.125]", "h = [0.25, 0.1]"), "mollifier.h");
        rejects(("h = [0.25, 0.125]", "h = [0.25]\nallow_wrap = false"), "mollifier.h");
        rejects(("epsilon = [0.2]", "epsilon = [0.05]"), "kernels.epsilon");
        rejects(("epsilon = [0.2]", "epsilon = []"), "kernels.epsilon");
        rejects(("band = 2", "band = 6"), "kernels.band");
        rejects(("n = [1]", "n = [3]"), "perturbation.n");
        rejects(("source = \"synthetic\"", "source = \"spectral\""), "kernels.twist");
        rejects(("sites_per_dim = 12", "sites_per_dim = 0"), "lattice");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse(&BASE.replace("seed = 7", "seed = 7\ncolour = 1")).is_err());
    }
}
