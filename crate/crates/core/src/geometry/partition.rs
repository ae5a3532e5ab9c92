//! Partitions of unity subordinate to a chart cover.

use super::chart::GraphChart;
use super::domain::LipschitzDomain;
use crate::error::{Error, Result};
use crate::grid::DomainGrid;

/// Weights `ρ_i = b_i / Σ_j b_j` on the collar nodes of a grid.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    /// Grid node index of each collar node.
    pub collar_nodes: Vec<usize>,
    /// `weights[i][k]` is `ρ_i` at `collar_nodes[k]`.
    pub weights: Vec<Vec<f64>>,
    pub collar_width: f64,
}

impl PartitionOfUnity {
    /// Normalized chart bumps on the inside nodes whose boundary distance is
    /// below `min_i r_i / 2`.
    pub fn build(domain: &LipschitzDomain, grid: &DomainGrid) -> Result<Self> {
        let charts = domain.charts();
        let collar_width = charts.iter().map(|c| 0.5 * c.radius).fold(f64::INFINITY, f64::min);
        let mut x = vec![0.0; grid.dim()];
        let mut collar_nodes = Vec::new();
        let mut weights = vec![Vec::new(); charts.len()];
        let mut bumps = vec![0.0; charts.len()];
        for node in 0..grid.node_count() {
            if !grid.is_inside(node) {
                continue;
            }
            grid.node_coords(node, &mut x);
            if domain.boundary_distance(&x) >= collar_width {
                continue;
            }
            let mut total = 0.0;
            for (b, c) in bumps.iter_mut().zip(charts) {
                *b = c.bump(&x);
                total += *b;
            }
            if total <= 0.0 {
                return Err(Error::CoverageGap(format!("no chart bump is positive at collar point {x:?}")));
            }
            collar_nodes.push(node);
            for (w, b) in weights.iter_mut().zip(&bumps) {
                w.push(b / total);
            }
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.iter().any(|&v| v > 0.0) {
                return Err(Error::CoverageGap(format!(
                    "chart {i} touches no collar grid point at spacing {}",
                    grid.spacing()
                )));
            }
        }
        Ok(Self {
            collar_nodes,
            weights,
            collar_width,
        })
    }

    /// Largest `|Σ_i ρ_i - 1|` over the collar.
    pub fn max_sum_deviation(&self) -> f64 {
        (0..self.collar_nodes.len())
            .map(|k| (self.weights.iter().map(|w| w[k]).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Partition-of-unity weights at a boundary point `q`: bumps normalized over
/// the charts whose graph passes through `q` (within `tol`) and whose ball
/// contains it. Charts not through `q` get weight 0.
pub fn boundary_weights(charts: &[GraphChart], q: &[f64], tol: f64) -> Result<Vec<f64>> {
    let raw: Vec<f64> = charts
        .iter()
        .map(|c| if c.vertical(q).abs() <= tol { c.bump(q) } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::CoverageGap(format!("boundary point {q:?} lies in no chart patch")));
    }
    Ok(raw.into_iter().map(|b| b / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::builtin_domain;
    use crate::geometry::{AxisMap, GraphKind, LipschitzGraph};

    fn floor_chart(center: Vec<f64>, radius: f64) -> GraphChart {
        GraphChart::new(center, radius, LipschitzGraph::new(2, GraphKind::Zero).unwrap(), AxisMap::identity(2)).unwrap()
    }

    fn strip(charts: Vec<GraphChart>) -> LipschitzDomain {
        LipschitzDomain::new("strip", charts, vec![0.0, 0.0], vec![1.0, 0.2]).unwrap()
    }

    #[test]
    fn single_chart_weight_is_one() {
        let d = strip(vec![floor_chart(vec![0.5, 0.0], 4.0)]);
        let grid = DomainGrid::new(&d, 64).unwrap();
        let pou = PartitionOfUnity::build(&d, &grid).unwrap();
        assert!(!pou.collar_nodes.is_empty());
        assert!(pou.weights[0].iter().all(|&w| w == 1.0));
    }

    #[test]
    fn identical_charts_share_equally() {
        let c = floor_chart(vec![0.5, 0.0], 4.0);
        let d = strip(vec![c.clone(), c]);
        let grid = DomainGrid::new(&d, 64).unwrap();
        let pou = PartitionOfUnity::build(&d, &grid).unwrap();
        assert!(pou.weights.iter().flatten().all(|&w| w == 0.5));
    }

    #[test]
    fn square_weights_sum_to_one_and_respect_support() {
        let d = builtin_domain("unit-square").unwrap();
        let grid = DomainGrid::new(&d, 256).unwrap();
        let pou = PartitionOfUnity::build(&d, &grid).unwrap();
        assert!(pou.collar_nodes.len() >= 1000);
        assert!(pou.max_sum_deviation() <= 1e-12);
        let mut x = [0.0; 2];
        for (k, &node) in pou.collar_nodes.iter().enumerate() {
            grid.node_coords(node, &mut x);
            for (i, c) in d.charts().iter().enumerate() {
                let w = pou.weights[i][k];
                assert!((0.0..=1.0).contains(&w));
                if !c.contains(&x) {
                    assert_eq!(w, 0.0);
                }
            }
        }
    }

    #[test]
    fn uncovered_collar_is_a_coverage_gap() {
        // a chart too small to reach any grid node
        let tiny = floor_chart(vec![0.5, -0.3], 0.01);
        let d = strip(vec![floor_chart(vec![0.5, 0.0], 4.0), tiny]);
        let grid = DomainGrid::new(&d, 32).unwrap();
        assert!(matches!(PartitionOfUnity::build(&d, &grid), Err(Error::CoverageGap(_))));
        // collar points near x_1 = 1 lie in no ball
        let d = strip(vec![floor_chart(vec![0.1, 0.0], 0.3)]);
        let grid = DomainGrid::new(&d, 32).unwrap();
        assert!(matches!(PartitionOfUnity::build(&d, &grid), Err(Error::CoverageGap(_))));
    }

    #[test]
    fn boundary_weights_select_charts_through_the_point() {
        let d = builtin_domain("unit-square").unwrap();
        let w = boundary_weights(d.charts(), &[0.5, 0.0], 1e-12).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0, 0.0]);
        let w = boundary_weights(d.charts(), &[0.0, 0.0], 1e-12).unwrap();
        assert!((w[0] + w[2] - 1.0).abs() < 1e-15 && w[0] > 0.0 && w[2] > 0.0);
        assert!(boundary_weights(d.charts(), &[0.5, 0.5], 1e-12).is_err());
    }
}
