use crate::spatial::VoxelGrid;

/// Cluster id for points that belong to no dense region.
pub const NOISE: i32 = -1;

/// Density-based clustering of 3D points.
///
/// A point is a core point when at least `min_samples` points (itself
/// included) lie within `eps`. Clusters are numbered in order of their first
/// core point by index, so the labeling is deterministic.
pub fn dbscan(points: &[[f64; 3]], eps: f64, min_samples: usize) -> Vec<i32> {
    let n = points.len();
    let mut label = vec![NOISE; n];
    if n == 0 {
        return label;
    }
    let grid = VoxelGrid::new(points, eps.max(1e-9));
    let mut neigh: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut buf = Vec::new();
    for p in points {
        grid.within_radius_into(p, eps, &mut buf);
        neigh.push(buf.iter().map(|&(_, j)| j).collect());
    }
    let core: Vec<bool> = neigh.iter().map(|v| v.len() >= min_samples).collect();
    let mut visited = vec![false; n];
    let mut next = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if visited[s] || !core[s] {
            continue;
        }
        visited[s] = true;
        label[s] = next;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for &u in &neigh[v] {
                let u = u as usize;
                if label[u] == NOISE {
                    label[u] = next;
                }
                if core[u] && !visited[u] {
                    visited[u] = true;
                    stack.push(u);
                }
            }
        }
        next += 1;
    }
    label
}
