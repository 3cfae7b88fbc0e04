use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use csferm::bounds::{berezin_spot_check, factorial_bound_check, h_scaling_fit, series_diagnostics, KernelBounds, NormReport};
use csferm::kernels::ColoredPropagator;
use csferm::mollifier::{lemma_report, MollifierSet};
use csferm::perturbation::{theta_term, xi_term, xi_term_normalized, EvalOptions, TermResult};
use csferm::Complex64;

use crate::config::{ConfigError, RunConfig};
use crate::results::{ResultRow, Status, SCHEMA_VERSION};

#[derive(Debug)]
pub enum Failure {
    /// Bad invocation or configuration: exit status 2.
    Usage(String),
    /// Computation error: exit status 1.
    Compute(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<csferm::Error> for Failure {
    fn from(e: csferm::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub workers: usize,
    pub verbose: bool,
    command: &'static str,
}

#[derive(Clone, Copy, Default)]
struct Key {
    epsilon: Option<f64>,
    h: Option<f64>,
    n: Option<usize>,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf, workers: Option<usize>, verbose: bool, command: &'static str) -> Self {
        let workers = workers.unwrap_or(cfg.workers).max(1);
        Self { cfg, out, workers, verbose, command }
    }

    pub fn results_path(&self) -> PathBuf {
        let p = Path::new(&self.cfg.output.results);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out.join(p)
        }
    }

    fn opts(&self) -> EvalOptions {
        let n_max = self.cfg.perturbation.n.iter().copied().max().unwrap_or(0);
        EvalOptions {
            max_order: n_max.max(2),
            workers: self.workers,
            coupling: self.cfg.perturbation.coupling,
            ghost_smearing: self.cfg.perturbation.ghost_smearing,
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[{}] {}", self.command, msg.as_ref());
        }
    }

    fn row(&self, k: Key, metric: &str, value: f64, tolerance: Option<f64>, status: Status) -> ResultRow {
        ResultRow {
            schema_version: SCHEMA_VERSION,
            experiment: self.cfg.experiment.clone(),
            command: self.command.into(),
            side_length: self.cfg.lattice.side_length,
            sites_per_dim: self.cfg.lattice.sites_per_dim,
            source: self.cfg.source_tag(),
            epsilon: k.epsilon,
            h: k.h,
            n: k.n,
            ghost_smearing: self.cfg.perturbation.ghost_smearing,
            workers: self.workers,
            metric: metric.into(),
            value,
            tolerance,
            status,
        }
    }

    fn info(&self, k: Key, metric: &str, value: f64) -> ResultRow {
        self.row(k, metric, value, None, Status::Info)
    }

    fn check(&self, k: Key, metric: &str, value: f64, tolerance: Option<f64>, pass: bool) -> ResultRow {
        self.row(k, metric, value, tolerance, if pass { Status::Pass } else { Status::Fail })
    }

    fn require_h(&self) -> Result<&[f64], Failure> {
        if self.cfg.mollifier.h.is_empty() {
            return Err(Failure::Usage("mollifier.h: empty list".into()));
        }
        Ok(&self.cfg.mollifier.h)
    }

    fn require_n(&self, what: &str) -> Result<&[usize], Failure> {
        if self.cfg.perturbation.n.is_empty() {
            return Err(Failure::Usage(format!("perturbation.n: empty list; {what} needs term results")));
        }
        Ok(&self.cfg.perturbation.n)
    }

    fn kernels(&self, epsilon: f64) -> Result<(ColoredPropagator, ColoredPropagator), Failure> {
        self.log(format!("building kernels at epsilon = {epsilon}"));
        Ok(self.cfg.kernels(epsilon)?)
    }

    fn mollifiers(&self, h: f64) -> Result<MollifierSet, Failure> {
        Ok(MollifierSet::build(&self.cfg.spec(), h, &self.cfg.policy())?)
    }
}

fn complex_rows(ctx: &Context, k: Key, name: &str, z: Complex64, rows: &mut Vec<ResultRow>) {
    rows.push(ctx.info(k, &format!("{name}_re"), z.re));
    rows.push(ctx.info(k, &format!("{name}_im"), z.im));
}

fn in_range(ctx: &Context, slope: f64) -> bool {
    slope >= ctx.cfg.tolerances.slope_min && slope <= ctx.cfg.tolerances.slope_max
}

pub fn verify_mollifiers(ctx: &Context) -> Result<Vec<ResultRow>, Failure> {
    let hs = ctx.require_h()?;
    let tol = &ctx.cfg.tolerances;
    let mut rows = Vec::new();
    let mut star = Vec::new();
    let mut l1_max: f64 = 0.0;
    for &h in hs {
        ctx.log(format!("lemma suite at h = {h}"));
        let set = ctx.mollifiers(h)?;
        let r = lemma_report(&set, &ctx.cfg.policy())?;
        let k = Key { h: Some(h), ..Key::default() };
        let peak = set.delta_tilde.stencil.iter().fold(0.0f64, |a, b| a.max(*b));
        let identity = if peak > 0.0 { r.product_defect / (r.mass * peak) } else { r.product_defect };
        rows.push(ctx.info(k, "mass", r.mass));
        rows.push(ctx.check(k, "positivity", f64::from(u8::from(r.positivity)), None, r.positivity));
        rows.push(ctx.check(k, "identity_defect", identity, Some(tol.identity), identity <= tol.identity));
        rows.push(ctx.check(k, "sup_defect", r.sup_defect, Some(tol.sup_norm), r.sup_defect <= tol.sup_norm));
        rows.push(ctx.info(k, "l1_delta_tilde", r.l1_delta_tilde));
        rows.push(ctx.info(k, "l1_star", r.l1_star));
        rows.push(ctx.info(k, "delta_error", r.delta_error));
        l1_max = l1_max.max(r.l1_delta_tilde);
        star.push(r.l1_star);
    }
    let k = Key::default();
    rows.push(ctx.check(k, "l1_delta_tilde_max", l1_max, Some(tol.l1_constant), l1_max <= tol.l1_constant));
    if hs.len() >= 3 {
        match h_scaling_fit(hs, &star) {
            Ok(fit) => rows.push(ctx.check(k, "l1_star_slope", fit.slope, None, in_range(ctx, fit.slope))),
            Err(e) => return Err(Failure::Usage(format!("mollifier.h: {e}"))),
        }
    }
    Ok(rows)
}

pub fn build_kernels(ctx: &Context) -> Result<Vec<ResultRow>, Failure> {
    let dir = ctx.out.join("kernels");
    std::fs::create_dir_all(&dir)?;
    let mut rows = Vec::new();
    for &eps in &ctx.cfg.kernels.epsilon {
        let (kg, kgh) = ctx.kernels(eps)?;
        let k = Key { epsilon: Some(eps), ..Key::default() };
        for p in [&kg, &kgh] {
            let path = dir.join(format!("{}_eps{eps}.csv", p.sector.name()));
            p.write_cache(BufWriter::new(File::create(&path)?))?;
            rows.push(ctx.info(k, &format!("{}_bound", p.sector.name()), p.bound));
            rows.push(ctx.info(k, &format!("{}_hermitian_defect", p.sector.name()), p.hermitian_defect()));
        }
    }
    for &h in &ctx.cfg.mollifier.h {
        let set = ctx.mollifiers(h)?;
        for (name, kern) in [("delta", &set.delta), ("plateau", &set.plateau)] {
            kern.write_cache(BufWriter::new(File::create(dir.join(format!("{name}_h{h}.csv")))?))?;
        }
        rows.push(ctx.info(Key { h: Some(h), ..Key::default() }, "mass", set.mass));
    }
    Ok(rows)
}

fn term_rows(ctx: &Context, k: Key, t: &TermResult, rows: &mut Vec<ResultRow>) {
    complex_rows(ctx, k, "theta", t.value, rows);
    if let (Some(a), Some(b)) = (t.theta1, t.theta2) {
        complex_rows(ctx, k, "theta1", a, rows);
        complex_rows(ctx, k, "theta2", b, rows);
        rows.push(ctx.info(k, "theta2_abs", b.norm()));
    }
    if let Some(d) = t.partition_defect() {
        let tol = ctx.cfg.tolerances.partition;
        rows.push(ctx.check(k, "partition_defect", d, Some(tol), d <= tol));
    }
    rows.push(ctx.info(k, "pairings", t.pairings as f64));
    rows.push(ctx.info(k, "tuples", t.tuples as f64));
}

pub fn eval_term(ctx: &Context) -> Result<Vec<ResultRow>, Failure> {
    let hs = ctx.require_h()?;
    let ns = ctx.require_n("eval-term")?;
    let opts = ctx.opts();
    let mut rows = Vec::new();
    for &eps in &ctx.cfg.kernels.epsilon {
        let (kg, kgh) = ctx.kernels(eps)?;
        for &n in ns {
            let x = xi_term(n, &kg, &kgh, &opts)?;
            complex_rows(ctx, Key { epsilon: Some(eps), h: None, n: Some(n) }, "xi", x.value, &mut rows);
            for &h in hs {
                ctx.log(format!("theta at epsilon = {eps}, h = {h}, n = {n}"));
                let moll = ctx.mollifiers(h)?;
                let t = theta_term(n, &kg, &kgh, &moll, &opts)?;
                term_rows(ctx, Key { epsilon: Some(eps), h: Some(h), n: Some(n) }, &t, &mut rows);
            }
        }
    }
    Ok(rows)
}

pub fn run_equivalence(ctx: &Context) -> Result<Vec<ResultRow>, Failure> {
    let hs = ctx.require_h()?;
    let ns = ctx.require_n("run-equivalence")?;
    let opts = ctx.opts();
    let tol = &ctx.cfg.tolerances;
    let mut rows = Vec::new();
    for &eps in &ctx.cfg.kernels.epsilon {
        let (kg, kgh) = ctx.kernels(eps)?;
        for &n in ns {
            let base = Key { epsilon: Some(eps), h: None, n: Some(n) };
            let xi = xi_term(n, &kg, &kgh, &opts)?.value;
            complex_rows(ctx, base, "xi", xi, &mut rows);
            let mut diffs = Vec::new();
            let mut unmatched = Vec::new();
            for &h in hs {
                ctx.log(format!("equivalence at epsilon = {eps}, h = {h}, n = {n}"));
                let moll = ctx.mollifiers(h)?;
                let t = theta_term(n, &kg, &kgh, &moll, &opts)?;
                let xm = xi_term_normalized(n, &kg, &kgh, moll.mass, &opts)?.value;
                let k = Key { h: Some(h), ..base };
                term_rows(ctx, k, &t, &mut rows);
                complex_rows(ctx, k, "xi_normalized", xm, &mut rows);
                let d = t.value - xm;
                rows.push(ctx.info(k, "gap", d.norm()));
                diffs.push((h, d));
                unmatched.push(t.theta2.map_or(0.0, |z| z.norm()));
            }
            let gaps: Vec<f64> = diffs.iter().map(|d| d.1.norm()).collect();
            if gaps.iter().all(|g| *g == 0.0) {
                rows.push(ctx.check(base, "gap_max", 0.0, Some(0.0), true));
                continue;
            }
            if gaps.len() >= 2 {
                let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
                rows.push(ctx.check(base, "gap_strictly_decreasing", f64::from(u8::from(decreasing)), None, decreasing));
                let (ha, da) = diffs[diffs.len() - 2];
                let (hb, db) = diffs[diffs.len() - 1];
                let (a3, b3) = (ha.powi(3), hb.powi(3));
                let extrapolated = ((db * a3 - da * b3) / (a3 - b3)).norm();
                let allowed = tol.richardson_fraction * xi.norm();
                rows.push(ctx.check(base, "richardson_gap", extrapolated, Some(allowed), extrapolated <= allowed));
            }
            if hs.len() >= 3 {
                if unmatched.iter().all(|u| *u == 0.0) {
                    rows.push(ctx.check(base, "theta2_slope", 0.0, None, true));
                } else {
                    let (ok, slope) = match h_scaling_fit(hs, &unmatched) {
                        Ok(f) => (in_range(ctx, f.slope), f.slope),
                        Err(_) => (false, f64::NAN),
                    };
                    rows.push(ctx.check(base, "theta2_slope", slope, None, ok));
                }
            }
        }
    }
    Ok(rows)
}

pub fn run_bounds(ctx: &Context) -> Result<Vec<ResultRow>, Failure> {
    let hs = ctx.require_h()?;
    let ns = ctx.require_n("run-bounds")?;
    let opts = ctx.opts();
    let mut rows = Vec::new();
    for &eps in &ctx.cfg.kernels.epsilon {
        let (kg, kgh) = ctx.kernels(eps)?;
        let kb = KernelBounds::from_kernels(&kg, &kgh, opts.coupling)?;
        for &h in hs {
            let moll = ctx.mollifiers(h)?;
            let norms = NormReport::new(&moll, &ctx.cfg.policy(), opts.ghost_smearing)?;
            let k = Key { epsilon: Some(eps), h: Some(h), n: None };
            rows.push(ctx.info(k, "delta_l2", norms.delta_l2));
            rows.push(ctx.info(k, "plateau_l2", norms.plateau_l2));
            rows.push(ctx.info(k, "delta_tilde_l1", norms.delta_tilde_l1));
            rows.push(ctx.info(k, "star_l1", norms.star_l1));
            rows.push(ctx.info(k, "plateau_tilde_linf", norms.plateau_tilde_linf));
            let mut terms = Vec::new();
            for &n in ns {
                ctx.log(format!("theta at epsilon = {eps}, h = {h}, n = {n}"));
                terms.push(theta_term(n, &kg, &kgh, &moll, &opts)?);
            }
            for c in factorial_bound_check(&terms, &norms, &kb)? {
                let kn = Key { n: Some(c.n), ..k };
                rows.push(ctx.check(kn, "theta_abs", c.measured, Some(c.bound), c.pass));
                rows.push(ctx.info(kn, "bound_constant", c.constant.c));
                rows.push(ctx.info(kn, "smallest_constant", c.smallest_c));
                rows.push(ctx.info(kn, "berezin_bound", c.berezin));
                rows.push(ctx.info(kn, "pairings", c.pairings as f64));
            }
            let count = ctx.cfg.tolerances.spot_checks;
            if count > 0 {
                let spots = berezin_spot_check(&moll, &norms, opts.ghost_smearing, count, 0)?;
                let worst = spots.iter().map(|s| s.measured / s.bound).fold(0.0, f64::max);
                rows.push(ctx.check(k, "berezin_spot_ratio", worst, Some(1.0), worst <= 1.0));
            }
            if let Some(lambda) = ctx.cfg.perturbation.lambda {
                let d = series_diagnostics(&terms, lambda)?;
                for (n, s) in d.partial_sums {
                    let kn = Key { n: Some(n), ..k };
                    rows.push(ctx.row(kn, "series_partial_re", s.re, None, Status::Exploratory));
                    rows.push(ctx.row(kn, "series_partial_im", s.im, None, Status::Exploratory));
                }
                for (n, r) in d.ratios {
                    rows.push(ctx.row(Key { n: Some(n), ..k }, "series_ratio", r, None, Status::Exploratory));
                }
            }
        }
    }
    Ok(rows)
}

/// (metric read, x axis) per plot metric.
pub const PLOT_METRICS: [(&str, &str, &str); 5] = [
    ("theta2_vs_h", "theta2_abs", "h"),
    ("gap_vs_h", "gap", "h"),
    ("star_l1_vs_h", "l1_star", "h"),
    ("bound_vs_n", "theta_abs", "n"),
    ("ratio_vs_n", "series_ratio", "n"),
];

pub fn emit_plot_data(results: &Path, metric: &str, out: &mut dyn Write) -> Result<usize, Failure> {
    let Some(&(_, source, axis)) = PLOT_METRICS.iter().find(|m| m.0 == metric) else {
        let known: Vec<&str> = PLOT_METRICS.iter().map(|m| m.0).collect();
        return Err(Failure::Usage(format!("unknown metric {metric}; known metrics: {}", known.join(", "))));
    };
    if !results.exists() {
        return Err(Failure::Usage(format!("results file {} does not exist", results.display())));
    }
    let rows = crate::results::read(results).map_err(|e| Failure::Compute(e.to_string()))?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == source) {
        let x = match axis {
            "h" => r.h,
            _ => r.n.map(|n| n as f64),
        };
        let Some(x) = x else { continue };
        let mut label = format!("{}:N={}", r.experiment, r.sites_per_dim);
        if let Some(e) = r.epsilon {
            label.push_str(&format!(":eps={e}"));
        }
        match axis {
            "h" => label.push_str(&r.n.map(|n| format!(":n={n}")).unwrap_or_default()),
            _ => label.push_str(&r.h.map(|h| format!(":h={h}")).unwrap_or_default()),
        }
        series.entry(label).or_default().push((x, r.value));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "series"]).map_err(|e| Failure::Compute(e.to_string()))?;
    let mut count = 0;
    for (label, mut pts) in series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (x, y) in pts {
            w.write_record([x.to_string(), y.to_string(), label.clone()]).map_err(|e| Failure::Compute(e.to_string()))?;
            count += 1;
        }
    }
    w.flush()?;
    Ok(count)
}
