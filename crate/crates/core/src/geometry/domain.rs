//! Bounded Lipschitz domains described by a finite chart cover.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chart::{AxisMap, GraphChart};
use super::graph::{GraphKind, LipschitzGraph};
use crate::error::{Error, Result};
use crate::grid::DomainGrid;

/// A bounded domain: the open bounding box intersected with the domain side
/// of every chart graph.
///
/// Each chart is expected to describe `D` inside its ball once the box is
/// taken into account: `D ∩ B ∩ box = {x ∈ B ∩ box : z_d > γ(z')}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzDomain {
    pub name: String,
    dim: usize,
    charts: Vec<GraphChart>,
    bbox_lo: Vec<f64>,
    bbox_hi: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChartDoc {
    center: Vec<f64>,
    radius: f64,
    graph: GraphKind,
    axis_map: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DomainDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    dim: usize,
    charts: Vec<ChartDoc>,
    bbox: [Vec<f64>; 2],
}

impl LipschitzDomain {
    pub fn new(name: impl Into<String>, charts: Vec<GraphChart>, bbox_lo: Vec<f64>, bbox_hi: Vec<f64>) -> Result<Self> {
        let dim = bbox_lo.len();
        if dim < 2 || bbox_hi.len() != dim {
            return Err(Error::Config("bbox needs matching lo/hi of dimension >= 2".into()));
        }
        if bbox_lo.iter().zip(&bbox_hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h)) {
            return Err(Error::Config("bbox must be finite with lo < hi".into()));
        }
        if charts.is_empty() {
            return Err(Error::Config("domain needs at least one chart".into()));
        }
        if let Some(c) = charts.iter().find(|c| c.dim() != dim) {
            return Err(Error::Config(format!("chart of dimension {} in a {dim}-d domain", c.dim())));
        }
        Ok(Self {
            name: name.into(),
            dim,
            charts,
            bbox_lo,
            bbox_hi,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DomainDoc = serde_json::from_str(text)?;
        let charts = doc
            .charts
            .into_iter()
            .map(|c| {
                if c.center.len() != doc.dim {
                    return Err(Error::Config(format!(
                        "chart center has {} components, dim is {}",
                        c.center.len(),
                        doc.dim
                    )));
                }
                let graph = LipschitzGraph::new(doc.dim, c.graph)?;
                GraphChart::new(c.center, c.radius, graph, AxisMap::from_signed(&c.axis_map)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let [lo, hi] = doc.bbox;
        if lo.len() != doc.dim {
            return Err(Error::Config(format!("bbox has {} components, dim is {}", lo.len(), doc.dim)));
        }
        Self::new(doc.name.unwrap_or_else(|| "unnamed".into()), charts, lo, hi)
    }

    pub fn to_json(&self) -> String {
        let doc = DomainDoc {
            name: Some(self.name.clone()),
            dim: self.dim,
            charts: self
                .charts
                .iter()
                .map(|c| ChartDoc {
                    center: c.center.clone(),
                    radius: c.radius,
                    graph: c.graph.kind().clone(),
                    axis_map: c.axis_map.to_signed(),
                })
                .collect(),
            bbox: [self.bbox_lo.clone(), self.bbox_hi.clone()],
        };
        serde_json::to_string_pretty(&doc).expect("domain documents always serialize")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn charts(&self) -> &[GraphChart] {
        &self.charts
    }

    /// Copy of the domain with chart `index` removed.
    pub fn without_chart(&self, index: usize) -> Result<Self> {
        let mut charts = self.charts.clone();
        charts.remove(index);
        Self::new(self.name.clone(), charts, self.bbox_lo.clone(), self.bbox_hi.clone())
    }

    pub fn bbox(&self) -> (&[f64], &[f64]) {
        (&self.bbox_lo, &self.bbox_hi)
    }

    pub fn max_lipschitz(&self) -> f64 {
        self.charts
            .iter()
            .map(|c| c.graph.lipschitz_bound())
            .fold(0.0, f64::max)
    }

    fn in_open_box(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.bbox_lo.iter().zip(&self.bbox_hi))
            .all(|(v, (l, h))| *v > *l && *v < *h)
    }

    pub fn indicator(&self, x: &[f64]) -> bool {
        self.in_open_box(x) && self.charts.iter().all(|c| c.predicate(x))
    }

    /// Membership in the closure `D̄`, up to `tol`.
    pub fn in_closure(&self, x: &[f64], tol: f64) -> bool {
        x.iter()
            .zip(self.bbox_lo.iter().zip(&self.bbox_hi))
            .all(|(v, (l, h))| *v >= *l - tol && *v <= *h + tol)
            && self.charts.iter().all(|c| c.vertical(x) >= -tol)
    }

    /// Glued collar coordinate: the smallest vertical coordinate among the
    /// charts whose ball contains `x`; `+inf` when no ball does.
    pub fn collar_coordinate(&self, x: &[f64]) -> f64 {
        self.charts
            .iter()
            .filter(|c| c.contains(x))
            .map(|c| c.vertical(x))
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest vertical coordinate over every chart, clamped at zero.
    /// Lipschitz, positive in `D`, zero on `∂D`.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        self.charts
            .iter()
            .map(|c| c.vertical(x))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }

    /// Number of seeded points of `B(a_i, r_i) ∩ box` where the domain
    /// indicator disagrees with chart `i`'s predicate.
    pub fn chart_disagreements(&self, index: usize, samples: usize, seed: u64) -> usize {
        let chart = &self.charts[index];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; self.dim];
        let mut bad = 0;
        let mut taken = 0;
        while taken < samples {
            for (j, v) in x.iter_mut().enumerate() {
                *v = chart.center[j] + chart.radius * rng.gen_range(-1.0..1.0);
            }
            if !chart.contains(&x) || !self.in_open_box(&x) {
                continue;
            }
            taken += 1;
            if self.indicator(&x) != chart.predicate(&x) {
                bad += 1;
            }
        }
        bad
    }

    /// Boundary crossings of the grid (edges whose endpoints disagree on the
    /// indicator) lying in no half-radius ball `B(a_i, r_i/2)`, returned as
    /// edge midpoints. Half a cell of slack accounts for the crossing's
    /// position along the edge.
    pub fn subcover_gaps(&self, grid: &DomainGrid) -> Vec<Vec<f64>> {
        let h = grid.spacing();
        let mut gaps = Vec::new();
        let mut a = vec![0.0; self.dim];
        let mut b = vec![0.0; self.dim];
        let mut mid = vec![0.0; self.dim];
        for node in 0..grid.node_count() {
            grid.node_coords(node, &mut a);
            for axis in 0..self.dim {
                let Some(nb) = grid.neighbor(node, axis, 1) else {
                    continue;
                };
                if grid.is_inside(node) == grid.is_inside(nb) {
                    continue;
                }
                grid.node_coords(nb, &mut b);
                for j in 0..self.dim {
                    mid[j] = 0.5 * (a[j] + b[j]);
                }
                let covered = self
                    .charts
                    .iter()
                    .any(|c| c.distance_to_center(&mid) < 0.5 * c.radius + 0.5 * h);
                if !covered {
                    gaps.push(mid.clone());
                }
            }
        }
        gaps
    }
}
