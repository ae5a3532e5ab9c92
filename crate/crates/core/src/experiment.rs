//! Experiment configuration, the verification suites behind the CLI, and
//! report assembly.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::approx::{
    apply_cutoff, apriori_estimate_check, convergence_study, mollify, smoothed_approximant, CutoffProfile,
    StepFunction, CONTROL_RETENTION, CONVERGENCE_GATE,
};
use crate::catalog::{builtin_domain, builtin_names, negative_control, ramp_fixture, smooth_catalog, trace_zero_catalog};
use crate::error::{Error, Result};
use crate::field::{FnField, NamedField};
use crate::geometry::{GraphKind, LipschitzDomain, LipschitzGraph};
use crate::grid::{DomainGrid, GridFunction};
use crate::measure::{flat_change_of_variables_check, surface_integral, SurfacePatch};
use crate::trace::{estimate_trace_constant, trace, trace_lp_norm, TraceConstantReport, TRACE_OFFSET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    AreaCheck,
    CovCheck,
    TraceConstant,
    Jensen,
    Apriori,
    CutoffConverge,
    FullSuite,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::AreaCheck => "area-check",
            Self::CovCheck => "cov-check",
            Self::TraceConstant => "trace-constant",
            Self::Jensen => "jensen",
            Self::Apriori => "apriori",
            Self::CutoffConverge => "cutoff-converge",
            Self::FullSuite => "full-suite",
        }
    }

    fn parts(self) -> Vec<Experiment> {
        match self {
            Self::FullSuite => vec![
                Self::AreaCheck,
                Self::CovCheck,
                Self::TraceConstant,
                Self::Jensen,
                Self::Apriori,
                Self::CutoffConverge,
            ],
            other => vec![other],
        }
    }
}

fn default_p() -> Vec<f64> {
    vec![2.0]
}

fn default_k() -> Vec<u32> {
    vec![4, 8, 16, 32]
}

fn default_out() -> PathBuf {
    PathBuf::from("trace-forge-out")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub experiment: Experiment,
    /// Built-in domain name or path to a domain JSON document.
    pub domain: String,
    #[serde(default = "default_p")]
    pub p: Vec<f64>,
    pub resolution: usize,
    #[serde(default = "default_k")]
    pub k_list: Vec<u32>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != 1 {
            return Err(Error::Config(format!("unsupported schema {}", self.schema)));
        }
        if self.resolution < 16 {
            return Err(Error::Config(format!("resolution must be >= 16, got {}", self.resolution)));
        }
        if self.p.is_empty() || self.p.iter().any(|p| !(p.is_finite() && *p >= 1.0)) {
            return Err(Error::Config("p values must lie in [1, inf)".into()));
        }
        if self.k_list.is_empty() || self.k_list[0] == 0 || self.k_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("k_list must be positive and strictly increasing".into()));
        }
        Ok(())
    }

    /// Resolve `domain` as a built-in name, or as a path relative to
    /// `base` when not absolute.
    pub fn load_domain(&self, base: Option<&Path>) -> Result<LipschitzDomain> {
        if builtin_names().contains(&self.domain.as_str()) {
            return builtin_domain(&self.domain);
        }
        let mut path = PathBuf::from(&self.domain);
        if path.is_relative() {
            if let Some(b) = base {
                path = b.join(path);
            }
        }
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("cannot read domain `{}`: {e}", path.display())))?;
        LipschitzDomain::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("domain `{}`: {j}", path.display())),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail,
    Skip(String),
    /// Negative control: passes when the expected failure is observed.
    Control { confirmed: bool },
}

impl Verdict {
    pub fn ok(&self) -> bool {
        matches!(self, Self::Pass | Self::Skip(_) | Self::Control { confirmed: true })
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pass => write!(f, "pass"),
            Self::Fail => write!(f, "fail"),
            Self::Skip(reason) => write!(f, "skip: {reason}"),
            Self::Control { confirmed } => {
                write!(f, "expected-fail control: {}", if *confirmed { "pass" } else { "fail" })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub experiment: &'static str,
    pub check: String,
    pub case: String,
    pub p: Option<f64>,
    pub value: Option<f64>,
    pub reference: Option<f64>,
    /// The statistic compared against `bound`.
    pub observed: Option<f64>,
    pub bound: Option<f64>,
    pub verdict: Verdict,
}

impl ReportRow {
    fn new(experiment: &'static str, check: &str, case: impl Into<String>) -> Self {
        Self {
            experiment,
            check: check.to_string(),
            case: case.into(),
            p: None,
            value: None,
            reference: None,
            observed: None,
            bound: None,
            verdict: Verdict::Pass,
        }
    }

    fn p(mut self, p: f64) -> Self {
        self.p = Some(p);
        self
    }

    fn values(mut self, value: f64, reference: f64) -> Self {
        self.value = Some(value);
        self.reference = Some(reference);
        self
    }

    /// Pass when `observed <= bound`.
    fn at_most(mut self, observed: f64, bound: f64) -> Self {
        self.observed = Some(observed);
        self.bound = Some(bound);
        self.verdict = Verdict::from_bool(observed <= bound);
        self
    }

    fn skip(experiment: &'static str, reason: &str) -> Self {
        let mut row = Self::new(experiment, "all", "-");
        row.verdict = Verdict::Skip(reason.to_string());
        row
    }

    pub fn csv(&self) -> String {
        let num = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.check,
            self.case,
            self.p.map(|p| p.to_string()).unwrap_or_default(),
            num(self.value),
            num(self.reference),
            num(self.observed),
            num(self.bound),
            self.verdict
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub config_text: String,
    pub overrides: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Extra CSV tables as `(file name, contents)`.
    pub details: Vec<(String, String)>,
    /// Wall-clock seconds per suite.
    pub timings: Vec<(String, f64)>,
}

impl ExperimentReport {
    pub const HEADER: &'static str = "experiment,check,case,p,value,reference,observed,bound,verdict";

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.verdict.ok())
    }

    pub fn report_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.csv());
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str("== configuration ==\n");
        s.push_str(&self.config_text);
        if !self.config_text.ends_with('\n') {
            s.push('\n');
        }
        for o in &self.overrides {
            s.push_str(&format!("override: {o}\n"));
        }
        s.push_str("\n== checks ==\n");
        for r in &self.rows {
            let p = r.p.map(|p| format!(" p={p}")).unwrap_or_default();
            let detail = match (&r.verdict, r.observed, r.bound) {
                (Verdict::Fail, Some(o), Some(b)) => format!(" (observed {o:.6e}, tolerance {b:.6e})"),
                (_, Some(o), Some(b)) => format!(" ({o:.3e} vs {b:.3e})"),
                _ => String::new(),
            };
            s.push_str(&format!("[{}] {} {} {}{p}{detail}\n", r.verdict, r.experiment, r.check, r.case));
        }
        s.push_str("\n== wall clock ==\n");
        for (name, secs) in &self.timings {
            s.push_str(&format!("{name}: {secs:.3} s\n"));
        }
        let failed = self.rows.iter().filter(|r| !r.verdict.ok()).count();
        s.push_str(&format!(
            "\nverdict: {} ({} checks, {failed} failed)\n",
            if failed == 0 { "PASS" } else { "FAIL" },
            self.rows.len()
        ));
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.csv"), self.report_csv())?;
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        for (name, body) in &self.details {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

/// Execute the configured suite(s) on `domain`.
pub fn run(config: &ExperimentConfig, config_text: &str, domain: &LipschitzDomain) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport {
        config_text: config_text.to_string(),
        overrides: Vec::new(),
        rows: Vec::new(),
        details: Vec::new(),
        timings: Vec::new(),
    };
    for part in config.experiment.parts() {
        let start = Instant::now();
        let (rows, details) = match part {
            Experiment::AreaCheck => (area_check(domain, config.resolution)?, Vec::new()),
            Experiment::CovCheck => (cov_check(domain, config.resolution)?, Vec::new()),
            Experiment::TraceConstant => trace_constant_suite(domain, config)?,
            Experiment::Jensen => jensen_suite(config)?,
            Experiment::Apriori => apriori_suite(domain, config)?,
            Experiment::CutoffConverge => cutoff_suite(domain, config)?,
            Experiment::FullSuite => unreachable!("full-suite expands into its parts"),
        };
        report.rows.extend(rows);
        report.details.extend(details);
        report.timings.push((part.name().to_string(), start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

/// Length of a graph along `x'_1` over `[a, b]` for the piecewise-linear
/// kinds, from the breakpoints alone.
fn polyline_length(graph: &LipschitzGraph, a: f64, b: f64) -> Option<f64> {
    let mut xs = vec![a, b];
    match graph.kind() {
        GraphKind::PiecewiseLinear { knots, .. } => xs.extend(knots.iter().copied()),
        GraphKind::Sawtooth { period, .. } => {
            let half = 0.5 * period;
            let first = (a / half).ceil() as i64;
            let last = (b / half).floor() as i64;
            xs.extend((first..=last).map(|j| j as f64 * half));
        }
        _ => return None,
    }
    xs.retain(|x| *x >= a && *x <= b);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let m = graph.ambient_dim() - 1;
    let at = |t: f64| {
        let mut p = vec![0.0; m];
        p[0] = t;
        graph.eval(&p)
    };
    Some(xs.windows(2).map(|w| (w[1] - w[0]).hypot(at(w[1]) - at(w[0]))).sum())
}

/// Exact area of the graph over the footprint box, when a closed form is
/// available.
pub fn exact_graph_area(graph: &LipschitzGraph, lo: &[f64], hi: &[f64]) -> Option<f64> {
    let vol: f64 = lo.iter().zip(hi).map(|(l, h)| h - l).product();
    match graph.kind() {
        GraphKind::Zero => Some(vol),
        GraphKind::Affine { slope, .. } => Some(vol * (1.0 + slope.iter().map(|s| s * s).sum::<f64>()).sqrt()),
        GraphKind::Cone { c, .. } => Some(vol * (1.0 + c * c).sqrt()),
        _ => {
            let rest: f64 = lo[1..].iter().zip(&hi[1..]).map(|(l, h)| h - l).product();
            polyline_length(graph, lo[0], hi[0]).map(|len| len * rest)
        }
    }
}

fn kind_name(kind: &GraphKind) -> &'static str {
    match kind {
        GraphKind::Zero => "zero",
        GraphKind::Affine { .. } => "affine",
        GraphKind::Cone { .. } => "cone",
        GraphKind::PiecewiseLinear { .. } => "piecewise-linear",
        GraphKind::Sawtooth { .. } => "sawtooth",
    }
}

fn is_smooth(kind: &GraphKind) -> bool {
    matches!(kind, GraphKind::Zero | GraphKind::Affine { .. })
}

/// Tolerance on relative area error: tighter for flat and affine graphs.
pub fn area_tolerance(kind: &GraphKind) -> f64 {
    if is_smooth(kind) {
        1e-4
    } else {
        1e-3
    }
}

fn area_check(domain: &LipschitzDomain, resolution: usize) -> Result<Vec<ReportRow>> {
    let (bl, bh) = domain.bbox();
    let n = if domain.dim() == 2 { 8 * resolution } else { resolution };
    let one = FnField::new("one", |_: &[f64]| 1.0);
    let mut rows = Vec::new();
    for (i, chart) in domain.charts().iter().enumerate() {
        let (lo, hi) = chart.footprint(bl, bh);
        let case = format!("chart-{i}:{}", kind_name(chart.graph.kind()));
        let patch = SurfacePatch::new(chart, lo.clone(), hi.clone(), n)?;
        let value = surface_integral(&one, &patch).value;
        let row = ReportRow::new("area-check", "surface-area", case);
        rows.push(match exact_graph_area(&chart.graph, &lo, &hi) {
            Some(exact) => row
                .values(value, exact)
                .at_most((value - exact).abs() / exact, area_tolerance(chart.graph.kind())),
            None => {
                let mut r = row;
                r.value = Some(value);
                r.verdict = Verdict::Skip("no closed-form area".into());
                r
            }
        });
    }
    Ok(rows)
}

/// Flat-side and image-side Gaussian integrals over the physical box of
/// half-width `r / (2 sqrt d)` around the chart centre, at `n` cells and
/// against an image-side oracle at `oracle_n`.
pub fn cov_relative_gap(chart: &crate::geometry::GraphChart, n: usize, oracle_n: usize) -> Result<(f64, f64, f64)> {
    let d = chart.dim();
    let half = 0.5 * chart.radius / (d as f64).sqrt();
    let lo: Vec<f64> = chart.center.iter().map(|c| c - half).collect();
    let hi: Vec<f64> = chart.center.iter().map(|c| c + half).collect();
    let mid = chart.flatten(&chart.center);
    let sigma = 0.25 * chart.radius;
    let inv = 1.0 / (2.0 * sigma * sigma);
    let g = FnField::new("gauss", move |y: &[f64]| {
        (-y.iter().zip(&mid).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * inv).exp()
    });
    let (flat, image) = flat_change_of_variables_check(&g, chart, &lo, &hi, n)?;
    let (_, oracle) = flat_change_of_variables_check(&g, chart, &lo, &hi, oracle_n)?;
    Ok((flat.value, image.value, oracle.value))
}

fn cov_check(domain: &LipschitzDomain, resolution: usize) -> Result<Vec<ReportRow>> {
    let (n, oracle_n) = if domain.dim() == 2 {
        (resolution, 4 * resolution)
    } else {
        let n = resolution.min(64);
        (n, 2 * n)
    };
    let mut rows = Vec::new();
    for (i, chart) in domain.charts().iter().enumerate() {
        let (flat, image, oracle) = cov_relative_gap(chart, n, oracle_n)?;
        let gap = (flat - image).abs().max((flat - oracle).abs()).max((image - oracle).abs()) / oracle.abs();
        rows.push(
            ReportRow::new("cov-check", "flat-vs-image", format!("chart-{i}:{}", kind_name(chart.graph.kind())))
                .values(flat, image)
                .at_most(gap, 1e-3),
        );
    }
    Ok(rows)
}

type Suite = (Vec<ReportRow>, Vec<(String, String)>);

fn planar_only(domain: &LipschitzDomain, experiment: &'static str) -> Option<Suite> {
    (domain.dim() != 2).then(|| {
        (
            vec![ReportRow::skip(experiment, "run on planar domains; d=3 is spot-checked elsewhere")],
            Vec::new(),
        )
    })
}

fn trace_constant_suite(domain: &LipschitzDomain, cfg: &ExperimentConfig) -> Result<Suite> {
    if let Some(s) = planar_only(domain, "trace-constant") {
        return Ok(s);
    }
    let catalog = smooth_catalog(domain, cfg.seed);
    let fine = Arc::new(DomainGrid::new(domain, cfg.resolution)?);
    let coarse = Arc::new(DomainGrid::new(domain, cfg.resolution / 2)?);
    let mut rows = Vec::new();
    let mut detail = format!("{}\n", TraceConstantReport::HEADER);
    for &p in &cfg.p {
        let a = estimate_trace_constant(domain, &catalog, p, &fine)?;
        let b = estimate_trace_constant(domain, &catalog, p, &coarse)?;
        for r in &a.rows {
            let mut row = ReportRow::new("trace-constant", "ratio-finite", r.function_id.clone()).p(p);
            row.value = Some(r.ratio);
            row.verdict = Verdict::from_bool(r.ratio.is_finite() && r.ratio >= 0.0);
            rows.push(row);
        }
        rows.push(
            ReportRow::new("trace-constant", "c-hat-stability", "catalog")
                .p(p)
                .values(a.c_hat, b.c_hat)
                .at_most((a.c_hat - b.c_hat).abs() / b.c_hat, 0.1),
        );
        if domain.name == "unit-square" && p == 2.0 {
            let one = [negative_control()];
            let r = estimate_trace_constant(domain, &one, p, &fine)?;
            rows.push(
                ReportRow::new("trace-constant", "unit-constant-ratio", "one")
                    .p(p)
                    .values(r.c_hat, 2.0)
                    .at_most((r.c_hat - 2.0).abs(), 5e-2),
            );
        }
        for line in a.csv_rows() {
            detail.push_str(&line);
            detail.push('\n');
        }
    }
    Ok((rows, vec![("trace_constant.csv".into(), detail)]))
}

/// Jensen cases: `(t, g)` for case `i` under `seed`.
pub fn jensen_case(seed: u64, i: u64) -> (f64, StepFunction) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(i));
    let t = rng.gen_range(0.1..1.0);
    (t, StepFunction::seeded(rng.gen(), t))
}

pub const JENSEN_CASES: u64 = 1000;

fn jensen_suite(cfg: &ExperimentConfig) -> Result<Suite> {
    let mut rows = Vec::with_capacity(JENSEN_CASES as usize);
    let mut detail = String::from("case,p,t,lhs,rhs\n");
    for i in 0..JENSEN_CASES {
        let (t, g) = jensen_case(cfg.seed, i);
        let mut worst = f64::NEG_INFINITY;
        for &p in &cfg.p {
            let r = crate::approx::jensen_check(|s| g.eval(s), t, p, 256)?;
            worst = worst.max(r.lhs - r.rhs);
            detail.push_str(&format!("{i},{p},{t:.12e},{:.12e},{:.12e}\n", r.lhs, r.rhs));
        }
        rows.push(
            ReportRow::new("jensen", "lhs-le-rhs", format!("g-{i}"))
                .values(worst, 0.0)
                .at_most(worst, 1e-12),
        );
    }
    Ok((rows, vec![("jensen.csv".into(), detail)]))
}

fn apriori_suite(domain: &LipschitzDomain, cfg: &ExperimentConfig) -> Result<Suite> {
    if let Some(s) = planar_only(domain, "apriori") {
        return Ok(s);
    }
    let fine = Arc::new(DomainGrid::new(domain, cfg.resolution)?);
    let coarse = Arc::new(DomainGrid::new(domain, cfg.resolution / 2)?);
    let fixtures = trace_zero_catalog(domain, cfg.seed, 3);
    let mut rows = Vec::new();
    let mut detail = String::from("function_id,p,y_d,lhs,rhs\n");
    for &p in &cfg.p {
        for f in &fixtures {
            let a = apriori_estimate_check(f, &GridFunction::sample(f, &fine, p)?, domain, 0)?;
            let b = apriori_estimate_check(f, &GridFunction::sample(f, &coarse, p)?, domain, 0)?;
            let worst = a
                .levels
                .iter()
                .filter(|l| l.rhs > 0.0)
                .map(|l| l.lhs / (a.c_measured * l.rhs))
                .fold(0.0, f64::max);
            rows.push(
                ReportRow::new("apriori", "levels-bounded", f.id.clone())
                    .p(p)
                    .values(worst, 1.0)
                    .at_most(worst, 1.0 + 1e-12),
            );
            rows.push(
                ReportRow::new("apriori", "c-stability", f.id.clone())
                    .p(p)
                    .values(a.c_measured, b.c_measured)
                    .at_most((a.c_measured - b.c_measured).abs() / b.c_measured, 0.15),
            );
            for l in &a.levels {
                detail.push_str(&format!("{},{p},{:.12e},{:.12e},{:.12e}\n", f.id, l.y_d, l.lhs, l.rhs));
            }
        }
        if domain.name == "unit-square" && p == 2.0 {
            let ramp = ramp_fixture();
            let a = apriori_estimate_check(&ramp, &GridFunction::sample(&ramp, &fine, p)?, domain, 0)?;
            rows.push(
                ReportRow::new("apriori", "ramp-constant", "ramp")
                    .p(p)
                    .values(a.c_measured, 1.0)
                    .at_most((a.c_measured - 1.0).abs(), 1e-2),
            );
        }
    }
    Ok((rows, vec![("apriori.csv".into(), detail)]))
}

/// Largest `trace_lp_norm(w_k)` over the `k` with `2/k > 2 ε h`.
fn cutoff_trace(u: &GridFunction, domain: &LipschitzDomain, ks: &[u32]) -> Result<f64> {
    let h = u.grid().spacing();
    let mut worst = 0.0_f64;
    for &k in ks {
        if 2.0 / k as f64 > 2.0 * TRACE_OFFSET * h {
            let w = apply_cutoff(u, domain, &CutoffProfile, k)?;
            worst = worst.max(trace_lp_norm(&trace(&w, domain)?, u.p())?);
        }
    }
    Ok(worst)
}

fn mollifier_width(k: u32) -> f64 {
    1.0 / (4.0 * k as f64)
}

fn cutoff_suite(domain: &LipschitzDomain, cfg: &ExperimentConfig) -> Result<Suite> {
    if let Some(s) = planar_only(domain, "cutoff-converge") {
        return Ok(s);
    }
    let grid = Arc::new(DomainGrid::new(domain, cfg.resolution)?);
    let profile = CutoffProfile;
    let ks = &cfg.k_list;
    let mut rows = Vec::new();
    let mut details = Vec::new();
    let fixtures = trace_zero_catalog(domain, cfg.seed, 3);
    let control: NamedField = negative_control();
    for &p in &cfg.p {
        for f in &fixtures {
            let u = GridFunction::sample(f, &grid, p)?;
            let apriori = apriori_estimate_check(f, &u, domain, 0)?;
            let table = convergence_study(&f.id, &u, domain, &profile, ks, Some(&apriori))?;
            let last_row = table.rows.last().expect("nonempty table");
            rows.push(
                ReportRow::new("cutoff-converge", "w1p-convergence", f.id.clone())
                    .p(p)
                    .values(last_row.w1p_err, table.u_norm)
                    .at_most(last_row.w1p_err / table.u_norm, CONVERGENCE_GATE),
            );
            let eq3_worst = table
                .rows
                .iter()
                .filter_map(|r| r.eq3)
                .map(|(l, r)| if r > 0.0 { l / r } else { 0.0 })
                .fold(0.0, f64::max);
            rows.push(
                ReportRow::new("cutoff-converge", "eq3-direction", f.id.clone())
                    .p(p)
                    .values(eq3_worst, 1.0)
                    .at_most(eq3_worst, 1.0 + 1e-6),
            );
            let rhs: Vec<f64> = table.rows.iter().filter_map(|r| r.eq3.map(|e| e.1)).collect();
            let decreasing = rhs.windows(2).all(|w| w[1] < w[0]);
            let mut row = ReportRow::new("cutoff-converge", "eq3-rhs-decreasing", f.id.clone()).p(p);
            row.verdict = Verdict::from_bool(decreasing);
            rows.push(row);

            rows.push(
                ReportRow::new("cutoff-converge", "cutoff-trace", f.id.clone())
                    .p(p)
                    .at_most(cutoff_trace(&u, domain, ks)?, 0.0),
            );

            let smoothable: Vec<u32> = ks
                .iter()
                .copied()
                .filter(|&k| mollifier_width(k) >= 2.0 * grid.spacing())
                .collect();
            let Some(&top) = smoothable.last() else {
                let mut row = ReportRow::new("cutoff-converge", "mollify", f.id.clone()).p(p);
                row.verdict = Verdict::Skip("every 1/(4k) is below 2h".into());
                rows.push(row);
                continue;
            };
            let mut moll_gap = 0.0_f64;
            for &k in &smoothable {
                let w = apply_cutoff(&u, domain, &profile, k)?;
                let m = mollify(&w, mollifier_width(k), domain)?;
                moll_gap = moll_gap.max(m.sub(&w)?.lp_norm(p)? / table.u_norm);
            }
            rows.push(
                ReportRow::new("cutoff-converge", "mollify-lp", f.id.clone())
                    .p(p)
                    .at_most(moll_gap, 0.02),
            );
            let uk = smoothed_approximant(&u, domain, &profile, top)?;
            let smooth_err = uk.sub(&u)?.w1p_norm(p)? / table.u_norm;
            rows.push(
                ReportRow::new("cutoff-converge", "smoothed-w1p", format!("{}@k={top}", f.id))
                    .p(p)
                    .at_most(smooth_err, 0.08),
            );

            let mut csv = format!("{}\n", crate::approx::ConvergenceTable::HEADER);
            for line in table.csv_rows() {
                csv.push_str(&line);
                csv.push('\n');
            }
            details.push((format!("convergence-{}-p{p}.csv", f.id), csv));
        }

        let u = GridFunction::sample(&control, &grid, p)?;
        let table = convergence_study("control-one", &u, domain, &profile, ks, None)?;
        let initial = table.rows[0].w1p_err;
        let retained = table
            .rows
            .iter()
            .map(|r| r.w1p_err / initial)
            .fold(f64::INFINITY, f64::min);
        let mut row = ReportRow::new("cutoff-converge", "negative-control", "control-one")
            .p(p)
            .values(retained, CONTROL_RETENTION);
        row.observed = Some(retained);
        row.bound = Some(CONTROL_RETENTION);
        row.verdict = Verdict::Control {
            confirmed: !table.trace_zero && table.passed(),
        };
        rows.push(row);
        let mut csv = format!("{}\n", crate::approx::ConvergenceTable::HEADER);
        for line in table.csv_rows() {
            csv.push_str(&line);
            csv.push('\n');
        }
        details.push((format!("convergence-control-one-p{p}.csv"), csv));
    }
    Ok((rows, details))
}
