//! Graph charts: a ball `B(a, r)`, a Lipschitz graph, and the explicit axis
//! relabeling that puts the domain on the side `z_d > γ(z')`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::LipschitzGraph;
use crate::error::{Error, Result};

/// Signed permutation of the coordinate axes.
///
/// Entry `j` holds a 1-based physical axis with a sign: local coordinate
/// `z_j = sign · x_{|m_j|}`. `[2, -1]` maps `x` to `z = (x_2, -x_1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisMap {
    perm: Vec<usize>,
    flip: Vec<bool>,
}

impl AxisMap {
    pub fn identity(d: usize) -> Self {
        Self {
            perm: (0..d).collect(),
            flip: vec![false; d],
        }
    }

    pub fn from_signed(entries: &[i64]) -> Result<Self> {
        let d = entries.len();
        let mut seen = vec![false; d];
        let mut perm = Vec::with_capacity(d);
        let mut flip = Vec::with_capacity(d);
        for &e in entries {
            let axis = e.unsigned_abs() as usize;
            if e == 0 || axis > d || seen[axis - 1] {
                return Err(Error::Config(format!(
                    "axis_map {entries:?} is not a signed permutation of 1..={d}"
                )));
            }
            seen[axis - 1] = true;
            perm.push(axis - 1);
            flip.push(e < 0);
        }
        Ok(Self { perm, flip })
    }

    pub fn to_signed(&self) -> Vec<i64> {
        self.perm
            .iter()
            .zip(&self.flip)
            .map(|(&p, &f)| if f { -(p as i64 + 1) } else { p as i64 + 1 })
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn to_local(&self, x: &[f64], z: &mut [f64]) {
        for j in 0..self.perm.len() {
            let v = x[self.perm[j]];
            z[j] = if self.flip[j] { -v } else { v };
        }
    }

    pub fn to_global(&self, z: &[f64], x: &mut [f64]) {
        for j in 0..self.perm.len() {
            x[self.perm[j]] = if self.flip[j] { -z[j] } else { z[j] };
        }
    }

    /// Physical interval `[lo, hi]` of axis `perm_j` seen in local axis `j`.
    pub fn local_interval(&self, j: usize, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        let p = self.perm[j];
        if self.flip[j] {
            (-hi[p], -lo[p])
        } else {
            (lo[p], hi[p])
        }
    }
}

/// C^∞ bump profile `exp(1 - 1/(1 - t²))` on `[0, 1)`, zero beyond.
pub fn bump_profile(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - t * t)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphChart {
    pub center: Vec<f64>,
    pub radius: f64,
    pub graph: LipschitzGraph,
    pub axis_map: AxisMap,
}

impl GraphChart {
    pub fn new(center: Vec<f64>, radius: f64, graph: LipschitzGraph, axis_map: AxisMap) -> Result<Self> {
        let d = center.len();
        if graph.ambient_dim() != d || axis_map.dim() != d {
            return Err(Error::Config(format!(
                "chart dimension mismatch: center {d}, graph {}, axis_map {}",
                graph.ambient_dim(),
                axis_map.dim()
            )));
        }
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("chart needs a finite center and radius > 0".into()));
        }
        Ok(Self {
            center,
            radius,
            graph,
            axis_map,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `F`: physical point to flattened chart-local coordinates
    /// `(z', z_d - γ(z'))`.
    pub fn flatten(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        self.axis_map.to_local(x, &mut y);
        let d = y.len();
        y[d - 1] -= self.graph.eval(&y[..d - 1]);
        y
    }

    /// `F⁻¹`: flattened chart-local coordinates back to a physical point.
    pub fn unflatten(&self, y: &[f64]) -> Vec<f64> {
        let d = y.len();
        let mut z = y.to_vec();
        z[d - 1] += self.graph.eval(&y[..d - 1]);
        let mut x = vec![0.0; d];
        self.axis_map.to_global(&z, &mut x);
        x
    }

    /// Vertical coordinate `z_d - γ(z')`; positive on the domain side.
    pub fn vertical(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut z = [0.0; 8];
        let z = &mut z[..d];
        self.axis_map.to_local(x, z);
        z[d - 1] - self.graph.eval(&z[..d - 1])
    }

    pub fn predicate(&self, x: &[f64]) -> bool {
        self.vertical(x) > 0.0
    }

    pub fn distance_to_center(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance_to_center(x) < self.radius
    }

    /// Smooth bump equal to 1 on `B(a, r/2)` and supported in `B(a, r)`.
    pub fn bump(&self, x: &[f64]) -> f64 {
        let half = 0.5 * self.radius;
        bump_profile((self.distance_to_center(x) - half) / half)
    }

    /// Chart-local box of graph parameters `z'` whose footprint lies in both
    /// the ball's projection and the bounding box.
    pub fn footprint(&self, bbox_lo: &[f64], bbox_hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut a = vec![0.0; d];
        self.axis_map.to_local(&self.center, &mut a);
        let mut lo = Vec::with_capacity(d - 1);
        let mut hi = Vec::with_capacity(d - 1);
        for j in 0..d - 1 {
            let (blo, bhi) = self.axis_map.local_interval(j, bbox_lo, bbox_hi);
            lo.push(blo.max(a[j] - self.radius));
            hi.push(bhi.min(a[j] + self.radius));
        }
        (lo, hi)
    }

    /// Largest `|det DF - 1|` over seeded points of the ball, with `DF`
    /// assembled by central differences of the chart-local flattening.
    /// Points within the stencil of a kink of `γ` are skipped.
    pub fn jacobian_deviation(&self, samples: usize, seed: u64) -> f64 {
        assert!(samples >= 1);
        let d = self.dim();
        let step = 1e-5 * self.radius;
        let mut a = vec![0.0; d];
        self.axis_map.to_local(&self.center, &mut a);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0_f64;
        let mut taken = 0;
        let mut tries = 0;
        while taken < samples && tries < 100 * samples {
            tries += 1;
            let z: Vec<f64> = a
                .iter()
                .map(|c| c + self.radius * rng.gen_range(-1.0..1.0))
                .collect();
            if self.graph.near_kink(&z[..d - 1], 2.0 * step) {
                continue;
            }
            // y_d = z_d - γ(z'): identity rows are exact and the vertical
            // row takes difference quotients of γ
            let mut jac = DMatrix::<f64>::identity(d, d);
            let mut probe = z.clone();
            for col in 0..d {
                probe[col] = z[col] + step;
                let plus = self.graph.eval(&probe[..d - 1]);
                probe[col] = z[col] - step;
                let minus = self.graph.eval(&probe[..d - 1]);
                probe[col] = z[col];
                jac[(d - 1, col)] -= (plus - minus) / (2.0 * step);
            }
            worst = worst.max((jac.determinant() - 1.0).abs());
            taken += 1;
        }
        worst
    }
}
