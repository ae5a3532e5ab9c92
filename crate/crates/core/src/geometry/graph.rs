//! Closed-form Lipschitz graphs `γ: R^{d-1} -> R`.
//!
//! Every graph in the catalog carries an analytic Lipschitz bound, so the
//! bound is certified rather than estimated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The closed-form graph catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphKind {
    Zero,
    /// `γ(x') = slope · x' + offset`.
    Affine {
        slope: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `γ(x') = c |x' - apex| + offset`.
    Cone {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        apex: Option<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
    /// Linear interpolation of a sample table along `x'_1`, constant beyond
    /// the first and last knot.
    PiecewiseLinear { knots: Vec<f64>, values: Vec<f64> },
    /// Triangle teeth along `x'_1`: peaks at multiples of `period` with
    /// seeded heights in `[amplitude/2, amplitude]`, valleys at height 0
    /// halfway between.
    Sawtooth {
        seed: u64,
        amplitude: f64,
        period: f64,
    },
}

/// A Lipschitz graph over `R^{d-1}` with its certified bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzGraph {
    ambient_dim: usize,
    kind: GraphKind,
    lipschitz_bound: f64,
}

/// Central-difference gradient of a graph, clamped to the certified bound.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGradient {
    pub components: Vec<f64>,
    /// Raw estimate exceeded the bound by more than `1e-6` somewhere.
    pub kink: bool,
}

impl LipschitzGraph {
    pub fn new(ambient_dim: usize, kind: GraphKind) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::Config(format!(
                "ambient dimension must be at least 2, got {ambient_dim}"
            )));
        }
        let m = ambient_dim - 1;
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let lipschitz_bound = match &kind {
            GraphKind::Zero => 0.0,
            GraphKind::Affine { slope, offset } => {
                if slope.len() != m || !finite(slope) || !offset.is_finite() {
                    return Err(Error::Config(format!(
                        "affine graph needs {m} finite slope components"
                    )));
                }
                slope.iter().map(|s| s * s).sum::<f64>().sqrt()
            }
            GraphKind::Cone { c, apex, offset } => {
                if let Some(apex) = apex {
                    if apex.len() != m || !finite(apex) {
                        return Err(Error::Config(format!("cone apex needs {m} components")));
                    }
                }
                if !c.is_finite() || !offset.is_finite() {
                    return Err(Error::Config("cone parameters must be finite".into()));
                }
                c.abs()
            }
            GraphKind::PiecewiseLinear { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::Config(
                        "piecewise-linear graph needs >= 2 knots and matching values".into(),
                    ));
                }
                if !finite(knots) || !finite(values) || knots.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::Config(
                        "piecewise-linear knots must be finite and strictly increasing".into(),
                    ));
                }
                knots
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
                    .fold(0.0, f64::max)
            }
            GraphKind::Sawtooth {
                amplitude, period, ..
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0 && period.is_finite() && *period > 0.0) {
                    return Err(Error::Config(
                        "sawtooth needs amplitude >= 0 and period > 0".into(),
                    ));
                }
                2.0 * amplitude / period
            }
        };
        Ok(Self {
            ambient_dim,
            kind,
            lipschitz_bound,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn kind(&self) -> &GraphKind {
        &self.kind
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.lipschitz_bound
    }

    /// `γ(x')`. Total on finite input.
    pub fn eval(&self, xp: &[f64]) -> f64 {
        debug_assert_eq!(xp.len(), self.ambient_dim - 1);
        match &self.kind {
            GraphKind::Zero => 0.0,
            GraphKind::Affine { slope, offset } => {
                slope.iter().zip(xp).map(|(s, x)| s * x).sum::<f64>() + offset
            }
            GraphKind::Cone { c, apex, offset } => {
                let r2: f64 = match apex {
                    Some(apex) => xp.iter().zip(apex).map(|(x, a)| (x - a) * (x - a)).sum(),
                    None => xp.iter().map(|x| x * x).sum(),
                };
                c * r2.sqrt() + offset
            }
            GraphKind::PiecewiseLinear { knots, values } => {
                let t = xp[0];
                let n = knots.len();
                if t <= knots[0] {
                    return values[0];
                }
                if t >= knots[n - 1] {
                    return values[n - 1];
                }
                let i = knots.partition_point(|&k| k <= t) - 1;
                let w = (t - knots[i]) / (knots[i + 1] - knots[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
            GraphKind::Sawtooth {
                seed,
                amplitude,
                period,
            } => {
                let t = xp[0];
                let j = (t / period).round();
                let half = 0.5 * period;
                let dist = (t - j * period).abs().min(half);
                tooth_height(*seed, *amplitude, j as i64) * (1.0 - dist / half)
            }
        }
    }

    /// Central-difference gradient with per-component clamping to `[-L, L]`.
    pub fn grad_fd(&self, xp: &[f64], h: f64) -> GammaGradient {
        assert!(h > 0.0, "finite-difference step must be positive");
        let l = self.lipschitz_bound;
        let mut probe = xp.to_vec();
        let mut kink = false;
        let components = (0..xp.len())
            .map(|j| {
                probe[j] = xp[j] + h;
                let plus = self.eval(&probe);
                probe[j] = xp[j] - h;
                let minus = self.eval(&probe);
                probe[j] = xp[j];
                let raw = (plus - minus) / (2.0 * h);
                if raw.abs() > l + 1e-6 {
                    kink = true;
                }
                raw.clamp(-l, l)
            })
            .collect();
        GammaGradient { components, kink }
    }

    /// True when forward and backward differences disagree, i.e. `x'` sits
    /// within `h` of a kink of `γ`.
    pub fn near_kink(&self, xp: &[f64], h: f64) -> bool {
        let g0 = self.eval(xp);
        let mut probe = xp.to_vec();
        (0..xp.len()).any(|j| {
            probe[j] = xp[j] + h;
            let fwd = (self.eval(&probe) - g0) / h;
            probe[j] = xp[j] - h;
            let bwd = (g0 - self.eval(&probe)) / h;
            probe[j] = xp[j];
            (fwd - bwd).abs() > 1e-6 * (1.0 + self.lipschitz_bound)
        })
    }

    /// Surface Jacobian `sqrt(1 + |∇γ|²)` of the graph map `x' -> (x', γ(x'))`.
    pub fn area_factor(&self, xp: &[f64], h: f64) -> f64 {
        let g = self.grad_fd(xp, h);
        let s: f64 = g.components.iter().map(|c| c * c).sum();
        // clamping is per component, so cap the norm as well
        let cap = self.lipschitz_bound * self.lipschitz_bound;
        (1.0 + s.min(cap)).sqrt()
    }
}

/// Height of sawtooth peak `j`: a pure function of `(seed, j)`.
fn tooth_height(seed: u64, amplitude: f64, j: i64) -> f64 {
    let mix = (j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ mix);
    amplitude * (0.5 + 0.5 * rng.gen::<f64>())
}

/// Largest secant slope `|γ(x) - γ(y)| / |x - y|` over seeded pairs drawn
/// from the box `[lo, hi]`.
pub fn estimate_lipschitz(graph: &LipschitzGraph, lo: &[f64], hi: &[f64], pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0.0; lo.len()];
    let mut y = vec![0.0; lo.len()];
    let mut worst = 0.0_f64;
    for _ in 0..pairs {
        for j in 0..lo.len() {
            x[j] = rng.gen_range(lo[j]..hi[j]);
            y[j] = rng.gen_range(lo[j]..hi[j]);
        }
        let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if d > 0.0 {
            worst = worst.max((graph.eval(&x) - graph.eval(&y)).abs() / d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(d: usize, kind: GraphKind) -> LipschitzGraph {
        LipschitzGraph::new(d, kind).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(g(2, GraphKind::Zero).eval(&[0.7]), 0.0);
        let cone = g(2, GraphKind::Cone { c: 1.0, apex: None, offset: 0.0 });
        assert_eq!(cone.eval(&[-0.5]), 0.5);
        let affine = g(2, GraphKind::Affine { slope: vec![2.0], offset: 0.0 });
        assert_eq!(affine.eval(&[0.25]), 2.0 * 0.25);
    }

    #[test]
    fn gradient_examples() {
        let affine = g(2, GraphKind::Affine { slope: vec![2.0], offset: 0.3 });
        let gr = affine.grad_fd(&[0.4], 1e-3);
        assert!((gr.components[0] - 2.0).abs() < 1e-12);
        assert!(!gr.kink);
        assert_eq!(g(2, GraphKind::Zero).grad_fd(&[0.1], 1e-3).components, vec![0.0]);
        let cone = g(2, GraphKind::Cone { c: 1.0, apex: None, offset: 0.0 });
        assert!((cone.grad_fd(&[0.5], 1e-4).components[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn area_factor_examples() {
        assert_eq!(g(2, GraphKind::Zero).area_factor(&[0.2], 1e-3), 1.0);
        let affine = g(2, GraphKind::Affine { slope: vec![1.0], offset: 0.0 });
        assert!((affine.area_factor(&[0.2], 1e-3) - 2f64.sqrt()).abs() < 1e-12);
        let cone = g(2, GraphKind::Cone { c: 1.0, apex: None, offset: 0.0 });
        assert!((cone.area_factor(&[-0.3], 1e-4) - 2f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn kink_is_clamped_not_reported_for_cone_apex() {
        // the central difference at the apex is 0, inside the bound
        let cone = g(2, GraphKind::Cone { c: 1.0, apex: None, offset: 0.0 });
        let gr = cone.grad_fd(&[0.0], 1e-3);
        assert_eq!(gr.components[0], 0.0);
        assert!(cone.near_kink(&[0.0], 1e-3));
        assert!(!cone.near_kink(&[0.5], 1e-3));
    }

    #[test]
    fn piecewise_linear_bound_and_extrapolation() {
        let pl = g(
            2,
            GraphKind::PiecewiseLinear { knots: vec![0.0, 1.0, 3.0], values: vec![0.0, -1.0, -1.0] },
        );
        assert_eq!(pl.lipschitz_bound(), 1.0);
        assert_eq!(pl.eval(&[-2.0]), 0.0);
        assert_eq!(pl.eval(&[0.5]), -0.5);
        assert_eq!(pl.eval(&[10.0]), -1.0);
    }

    #[test]
    fn sawtooth_is_deterministic_and_bounded() {
        let kind = GraphKind::Sawtooth { seed: 11, amplitude: 0.08, period: 0.25 };
        let a = g(2, kind.clone());
        let b = g(2, kind);
        for i in 0..200 {
            let x = -1.0 + i as f64 * 0.013;
            assert_eq!(a.eval(&[x]), b.eval(&[x]));
            assert!((0.0..=0.08).contains(&a.eval(&[x])));
        }
        // valleys are exactly zero
        assert_eq!(a.eval(&[0.125]), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LipschitzGraph::new(1, GraphKind::Zero).is_err());
        assert!(LipschitzGraph::new(3, GraphKind::Affine { slope: vec![1.0], offset: 0.0 }).is_err());
        assert!(LipschitzGraph::new(
            2,
            GraphKind::PiecewiseLinear { knots: vec![1.0, 0.0], values: vec![0.0, 0.0] }
        )
        .is_err());
    }

    #[test]
    fn secant_sampling_respects_certified_bound() {
        let catalog = [
            (2, GraphKind::Zero),
            (2, GraphKind::Affine { slope: vec![1.5], offset: 0.2 }),
            (3, GraphKind::Affine { slope: vec![1.0, -2.0], offset: 0.0 }),
            (2, GraphKind::Cone { c: 1.0, apex: None, offset: 0.0 }),
            (3, GraphKind::Cone { c: 0.5, apex: Some(vec![0.1, -0.2]), offset: 0.0 }),
            (2, GraphKind::PiecewiseLinear { knots: vec![0.0, 0.3, 1.0], values: vec![0.0, 0.6, 0.1] }),
            (2, GraphKind::Sawtooth { seed: 3, amplitude: 0.08, period: 0.25 }),
            (3, GraphKind::Sawtooth { seed: 5, amplitude: 0.1, period: 0.2 }),
        ];
        for (d, kind) in catalog {
            let graph = g(d, kind);
            let lo = vec![-1.0; d - 1];
            let hi = vec![1.0; d - 1];
            let est = estimate_lipschitz(&graph, &lo, &hi, 10_000, 42);
            assert!(est <= graph.lipschitz_bound() + 1e-9, "{:?}: {est}", graph.kind());
        }
    }
}
