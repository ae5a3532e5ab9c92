//! Built-in domains and the frozen function catalogs used by the
//! experiments.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::NamedField;
use crate::geometry::LipschitzDomain;

const BUILTIN: [(&str, &str); 4] = [
    ("unit-square", include_str!("../data/domains/unit-square.json")),
    ("cone", include_str!("../data/domains/cone.json")),
    ("sawtooth", include_str!("../data/domains/sawtooth.json")),
    ("box-cone-3d", include_str!("../data/domains/box-cone-3d.json")),
];

pub fn builtin_names() -> Vec<&'static str> {
    BUILTIN.iter().map(|(n, _)| *n).collect()
}

pub fn builtin_domain(name: &str) -> Result<LipschitzDomain> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown built-in domain `{name}`")))?;
    LipschitzDomain::from_json(text)
}

/// The three planar domains used for trace norms.
pub fn planar_domains() -> Vec<LipschitzDomain> {
    ["unit-square", "cone", "sawtooth"]
        .iter()
        .map(|n| builtin_domain(n).expect("built-in domains parse"))
        .collect()
}

fn extent(domain: &LipschitzDomain) -> (Vec<f64>, f64) {
    let (lo, hi) = domain.bbox();
    let mid = lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let ext = lo.iter().zip(hi).map(|(l, h)| h - l).fold(0.0, f64::max);
    (mid, ext)
}

fn gaussian(center: Vec<f64>, sigma: f64) -> impl Fn(&[f64]) -> f64 + Send + Sync + 'static {
    let inv = 1.0 / (2.0 * sigma * sigma);
    move |x: &[f64]| {
        let r2: f64 = x.iter().zip(&center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-r2 * inv).exp()
    }
}

/// Continuous closed-form functions for the restriction check.
pub fn restriction_catalog() -> Vec<NamedField> {
    vec![
        NamedField::new("one", |_: &[f64]| 1.0),
        NamedField::new("linear", |x: &[f64]| x[0] + x[1]),
        NamedField::new("sin-cos", |x: &[f64]| x[0].sin() * x[1].cos()),
        NamedField::new("square", |x: &[f64]| x[0] * x[0]),
        NamedField::new("gauss", |x: &[f64]| (-x.iter().map(|v| v * v).sum::<f64>()).exp()),
    ]
}

/// The frozen trace-constant catalog: the constant plus nine broad seeded
/// Gaussians.
pub fn smooth_catalog(domain: &LipschitzDomain, seed: u64) -> Vec<NamedField> {
    let (mid, ext) = extent(domain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![NamedField::new("one", |_: &[f64]| 1.0)];
    for i in 0..9 {
        let center: Vec<f64> = mid.iter().map(|m| m + ext * rng.gen_range(-0.5..0.5)).collect();
        let sigma = ext * rng.gen_range(0.3..0.6);
        out.push(NamedField::new(format!("gauss-{i}"), gaussian(center, sigma)));
    }
    out
}

/// Seeded trace-zero fixtures `dist(x) · G(x)`, where `dist` is the clamped
/// chart-vertical distance to the boundary and `G` a Gaussian centred near
/// the middle of the box.
pub fn trace_zero_catalog(domain: &LipschitzDomain, seed: u64, count: usize) -> Vec<NamedField> {
    let (mid, ext) = extent(domain);
    let shared = Arc::new(domain.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let center: Vec<f64> = mid.iter().map(|m| m + ext * rng.gen_range(-0.1..0.1)).collect();
            let sigma = ext * rng.gen_range(0.1..0.15);
            let g = gaussian(center, sigma);
            let dom = shared.clone();
            NamedField::new(format!("tz-bump-{i}"), move |x: &[f64]| dom.boundary_distance(x) * g(x))
        })
        .collect()
}

/// Quintic smoothstep `S(t)` on `[0, 1]`, clamped outside.
pub fn smoothstep(t: f64) -> f64 {
    let s = t.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// `u = x_2` near the bottom edge of the unit square, ramped to zero near the
/// side walls (on `[0.05, 0.2]` and `[0.8, 0.95]`) and cut off above
/// `x_2 = 0.5`.
pub fn ramp_fixture() -> NamedField {
    NamedField::new("ramp", |x: &[f64]| {
        let eta = smoothstep((x[0] - 0.05) / 0.15) * smoothstep((0.95 - x[0]) / 0.15);
        let chi = 1.0 - smoothstep((x[1] - 0.5) / 0.3);
        x[1] * eta * chi
    })
}

/// The nonzero-trace control `u ≡ 1`.
pub fn negative_control() -> NamedField {
    NamedField::new("one", |_: &[f64]| 1.0)
}
