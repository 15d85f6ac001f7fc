use crate::spatial::VoxelGrid;

/// Neighbors per vertex in the adjacency graph.
pub const GRAPH_NEIGHBORS: usize = 10;
/// Distance floor for coincident points, in meters.
pub const MIN_EDGE_DISTANCE: f64 = 1e-6;

/// Directed k-nearest-neighbor graph with inverse-distance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    pub vertex_count: usize,
    pub edges: Vec<(u32, u32, f64)>,
}

/// Builds the 10-NN graph; `w_ij = 1 / max(|p_i - p_j|, 1e-6)`.
pub fn build_graph(points: &[[f64; 3]]) -> AdjacencyGraph {
    let n = points.len();
    let mut edges = Vec::with_capacity(n * GRAPH_NEIGHBORS);
    if n >= 2 {
        let cell = suggested_cell(points);
        let grid = VoxelGrid::new(points, cell);
        for (i, p) in points.iter().enumerate() {
            for (d2, j) in grid.knn(p, GRAPH_NEIGHBORS, Some(i as u32)) {
                let d = d2.sqrt().max(MIN_EDGE_DISTANCE);
                edges.push((i as u32, j, 1.0 / d));
            }
        }
    }
    AdjacencyGraph {
        vertex_count: n,
        edges,
    }
}

/// Cell size giving roughly a handful of points per occupied cell.
fn suggested_cell(points: &[[f64; 3]]) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let ext: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-3)).collect();
    let volume = ext.iter().product::<f64>();
    // points on surfaces occupy far fewer cells than the volume suggests
    let c = (volume * 8.0 / points.len() as f64).cbrt();
    c.clamp(1e-3, ext.iter().cloned().fold(0.0, f64::max))
}

impl AdjacencyGraph {
    /// Union of directed edges as an undirected graph.
    pub fn undirected(&self) -> UndirectedGraph {
        UndirectedGraph::from_edges(self.vertex_count, self.edges.iter().copied())
    }
}

/// Undirected weighted graph in compressed adjacency form. Each edge appears
/// once in `edges` (with `u < v`) and twice in the adjacency lists.
#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedGraph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    edges: Vec<(u32, u32, f64)>,
}

impl UndirectedGraph {
    /// Deduplicates edges by unordered endpoint pair (first weight wins) and
    /// drops self-loops.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Self {
        let mut list: Vec<(u32, u32, f64)> = edges
            .into_iter()
            .filter(|(u, v, _)| u != v)
            .map(|(u, v, w)| if u < v { (u, v, w) } else { (v, u, w) })
            .collect();
        list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        list.dedup_by(|b, a| a.0 == b.0 && a.1 == b.1);
        let mut degree = vec![0usize; n + 1];
        for &(u, v, _) in &list {
            degree[u as usize + 1] += 1;
            degree[v as usize + 1] += 1;
        }
        for i in 0..n {
            degree[i + 1] += degree[i];
        }
        let offsets = degree;
        let mut fill = offsets.clone();
        let mut targets = vec![0u32; offsets[n]];
        let mut weights = vec![0.0; offsets[n]];
        for &(u, v, w) in &list {
            targets[fill[u as usize]] = v;
            weights[fill[u as usize]] = w;
            fill[u as usize] += 1;
            targets[fill[v as usize]] = u;
            weights[fill[v as usize]] = w;
            fill[v as usize] += 1;
        }
        UndirectedGraph {
            n,
            offsets,
            targets,
            weights,
            edges: list,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(u32, u32, f64)] {
        &self.edges
    }

    /// `(neighbor, weight)` pairs of vertex `v`.
    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.offsets[v]..self.offsets[v + 1];
        self.targets[r.clone()]
            .iter()
            .zip(&self.weights[r])
            .map(|(&t, &w)| (t as usize, w))
    }

    /// Connected component label per vertex, numbered in order of the
    /// smallest member.
    pub fn connected_components(&self) -> Vec<u32> {
        self.components_where(|_, _| true)
    }

    /// Components of the subgraph keeping only edges accepted by `keep`.
    pub fn components_where(&self, keep: impl Fn(usize, usize) -> bool) -> Vec<u32> {
        let mut label = vec![u32::MAX; self.n];
        let mut next = 0u32;
        let mut stack = Vec::new();
        for s in 0..self.n {
            if label[s] != u32::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for (u, _) in self.neighbors(v) {
                    if label[u] == u32::MAX && keep(v, u) {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::dist2;

    #[test]
    fn three_points_form_complete_graph() {
        let pts = [[0.0; 3], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]];
        let g = build_graph(&pts);
        assert_eq!(g.edges.len(), 6);
        assert_eq!(g.undirected().edges().len(), 3);
        assert!(g.edges.iter().all(|&(u, v, w)| u != v && w.is_finite() && w > 0.0));
    }

    #[test]
    fn duplicate_points_get_clamped_weight() {
        let pts = [[1.0; 3], [1.0; 3]];
        let g = build_graph(&pts);
        assert_eq!(g.edges[0].2, 1.0 / MIN_EDGE_DISTANCE);
    }

    #[test]
    fn grid_neighbors_match_brute_force() {
        let mut pts = Vec::new();
        for x in 0..8 {
            for y in 0..8 {
                for z in 0..3 {
                    pts.push([x as f64 * 0.1, y as f64 * 0.1, z as f64 * 0.13]);
                }
            }
        }
        let g = build_graph(&pts);
        for i in 0..pts.len() {
            let mut brute: Vec<(f64, u32)> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| (dist2(&pts[i], &pts[j]), j as u32))
                .collect();
            brute.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<u32> = brute.iter().take(GRAPH_NEIGHBORS).map(|x| x.1).collect();
            let got: Vec<u32> = g.edges.iter().filter(|e| e.0 == i as u32).map(|e| e.1).collect();
            assert_eq!(got, expect, "vertex {i}");
        }
    }

    #[test]
    fn components_of_two_islands() {
        let g = UndirectedGraph::from_edges(5, [(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 3, 1.0)]);
        assert_eq!(g.connected_components(), vec![0, 0, 0, 1, 1]);
        assert_eq!(g.edges().len(), 3);
    }
}
