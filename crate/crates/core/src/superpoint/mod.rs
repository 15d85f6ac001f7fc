//! Initial oversegmentation into superpoints and the size-based merge step.

mod cut_pursuit;
mod dbscan;
mod graph;
mod maxflow;
mod merge;
mod partition;

pub use cut_pursuit::{cut_pursuit, energy, CutPursuitConfig, CutPursuitSolution};
pub use dbscan::{dbscan, NOISE};
pub use graph::{build_graph, AdjacencyGraph, UndirectedGraph, GRAPH_NEIGHBORS, MIN_EDGE_DISTANCE};
pub use maxflow::MaxFlow;
pub use merge::{
    merge_superpoints, pts_min_threshold, MergeConfig, MergeOutcome, NearestRule, PTS_MIN_START,
    SINGULAR_MAX,
};
pub use partition::SuperpointPartition;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalkit::{compute_metrics, MetricsReport};
use crate::geomfeat::{GeomFeatures, LINEARITY, PLANARITY, SPHERICITY, VERTICALITY};
use crate::pcdata::{Tile, UNLABELED};

/// Descriptors fed to the graph solver, in this order.
pub const SOLVER_FEATURES: [usize; 4] = [LINEARITY, VERTICALITY, PLANARITY, SPHERICITY];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SuperpointConfig {
    pub cut_pursuit: CutPursuitConfig,
    pub merge: MergeConfig,
}

/// Weighted solver inputs, flat `n × 4`.
pub fn solver_features(geom: &GeomFeatures, weight: f64) -> Vec<f64> {
    geom.values
        .iter()
        .flat_map(|d| SOLVER_FEATURES.map(|k| weight * d[k]))
        .collect()
}

/// Cut-pursuit oversegmentation of a tile on its 10-NN graph.
pub fn initial_superpoints(
    tile: &Tile,
    geom: &GeomFeatures,
    cfg: &CutPursuitConfig,
) -> Result<SuperpointPartition> {
    cfg.validate()?;
    if geom.len() != tile.len() {
        return Err(Error::DimensionMismatch {
            expected: tile.len(),
            found: geom.len(),
        });
    }
    let graph = build_graph(&tile.points).undirected();
    let f = solver_features(geom, cfg.feature_weight);
    let sol = cut_pursuit(&graph, &f, SOLVER_FEATURES.len(), cfg.lambda, cfg)?;
    log::debug!(
        "tile {}: {} components, energy {:.4} after {} iterations",
        tile.tile_id,
        sol.component_count(),
        sol.energy(),
        sol.energy_history.len() - 1
    );
    SuperpointPartition::from_ids(sol.components, &tile.points)
}

/// Oversegmentation followed by merging of small superpoints.
pub fn build_superpoints(tile: &Tile, geom: &GeomFeatures, cfg: &SuperpointConfig) -> Result<SuperpointPartition> {
    let initial = initial_superpoints(tile, geom, &cfg.cut_pursuit)?;
    let out = merge_superpoints(&initial, &tile.points, &cfg.merge)?;
    log::debug!(
        "tile {}: {} -> {} superpoints (PTS_min {})",
        tile.tile_id,
        initial.count(),
        out.partition.count(),
        out.pts_min
    );
    Ok(out.partition)
}

/// Per-point prediction obtained by giving each point its superpoint's
/// majority ground-truth class (ties go to the smaller class code).
pub fn majority_labels(partition: &SuperpointPartition, labels: &[u8]) -> Vec<u8> {
    let mut counts = vec![[0usize; 2]; partition.count()];
    for (i, &l) in labels.iter().enumerate() {
        if l != UNLABELED {
            counts[partition.id(i)][l as usize] += 1;
        }
    }
    let major: Vec<u8> = counts.iter().map(|c| u8::from(c[1] > c[0])).collect();
    (0..labels.len()).map(|i| major[partition.id(i)]).collect()
}

/// Best-case accuracy of a partition: metrics of the majority relabeling.
pub fn superpoint_purity(partition: &SuperpointPartition, labels: &[u8]) -> Result<MetricsReport> {
    if labels.len() != partition.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.len(),
            found: labels.len(),
        });
    }
    compute_metrics(labels, &majority_labels(partition, labels), 2)
}
