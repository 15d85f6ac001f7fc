use crate::error::{Error, Result};

/// Exhaustive, disjoint assignment of points to dense superpoint ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperpointPartition {
    ids: Vec<u32>,
    sizes: Vec<usize>,
    centroids: Vec<[f64; 3]>,
}

impl SuperpointPartition {
    /// Builds a partition from arbitrary per-point ids. Ids already dense in
    /// `[0, M)` are kept; otherwise they are compacted in ascending id order.
    pub fn from_ids(ids: Vec<u32>, points: &[[f64; 3]]) -> Result<Self> {
        if ids.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: ids.len(),
            });
        }
        if ids.is_empty() {
            return Err(Error::InvalidArgument("empty partition".into()));
        }
        let max = *ids.iter().max().unwrap() as usize;
        let mut used = vec![false; max + 1];
        for &i in &ids {
            used[i as usize] = true;
        }
        let ids = if used.iter().all(|&u| u) {
            ids
        } else {
            let mut remap = vec![u32::MAX; max + 1];
            let mut next = 0u32;
            for (old, &u) in used.iter().enumerate() {
                if u {
                    remap[old] = next;
                    next += 1;
                }
            }
            ids.into_iter().map(|i| remap[i as usize]).collect()
        };
        let m = ids.iter().max().map_or(0, |&v| v as usize + 1);
        let mut sizes = vec![0usize; m];
        let mut sums = vec![[0.0f64; 3]; m];
        for (&id, p) in ids.iter().zip(points) {
            let s = id as usize;
            sizes[s] += 1;
            for a in 0..3 {
                sums[s][a] += p[a];
            }
        }
        let centroids = sums
            .iter()
            .zip(&sizes)
            .map(|(s, &n)| s.map(|v| v / n as f64))
            .collect();
        Ok(SuperpointPartition { ids, sizes, centroids })
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of superpoints.
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    #[inline]
    pub fn id(&self, point: usize) -> usize {
        self.ids[point] as usize
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.ids
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn centroid(&self, s: usize) -> [f64; 3] {
        self.centroids[s]
    }

    pub fn centroids(&self) -> &[[f64; 3]] {
        &self.centroids
    }

    /// Point indices of every superpoint, in ascending order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (i, &s) in self.ids.iter().enumerate() {
            out[s as usize].push(i);
        }
        out
    }

    /// Merges superpoints: old superpoint `s` becomes `map[s]`.
    pub fn coarsen(&self, map: &[u32], points: &[[f64; 3]]) -> Result<Self> {
        if map.len() != self.count() {
            return Err(Error::DimensionMismatch {
                expected: self.count(),
                found: map.len(),
            });
        }
        Self::from_ids(self.ids.iter().map(|&s| map[s as usize]).collect(), points)
    }
}
