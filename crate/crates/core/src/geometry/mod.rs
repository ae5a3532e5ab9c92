//! Lipschitz graphs, graph charts with their flattening maps, chart covers
//! of bounded domains and partitions of unity.

mod chart;
mod domain;
mod graph;
mod partition;

pub use chart::{bump_profile, AxisMap, GraphChart};
pub use domain::LipschitzDomain;
pub use graph::{estimate_lipschitz, GammaGradient, GraphKind, LipschitzGraph};
pub use partition::{boundary_weights, PartitionOfUnity};
