//! Voxelization of a tile into the extractor's input graph.

use ndarray::Array2;

/// Offsets of the 26 neighbors plus the cell itself.
fn ring_offsets() -> impl Iterator<Item = [i64; 3]> {
    (-1..=1).flat_map(|x| (-1..=1).flat_map(move |y| (-1..=1).map(move |z| [x, y, z])))
}

/// Occupied voxels of a tile with mean-pooled input features and the
/// occupied members of each voxel's 3×3×3 block (itself included).
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelInput<T> {
    /// `V × C` mean input features.
    pub features: Array2<T>,
    /// Voxel of every point.
    pub point_voxel: Vec<u32>,
    /// Points per voxel.
    pub counts: Vec<u32>,
    /// CSR neighbor lists, sorted by voxel index.
    pub nbr_offsets: Vec<usize>,
    pub nbr_index: Vec<u32>,
}

impl<T> VoxelInput<T> {
    pub fn voxel_count(&self) -> usize {
        self.counts.len()
    }

    pub fn point_count(&self) -> usize {
        self.point_voxel.len()
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.nbr_index[self.nbr_offsets[v]..self.nbr_offsets[v + 1]]
    }
}

/// Groups points by `floor(p / size)` and averages `inputs` (`N × C`, f64)
/// per voxel. Voxels are numbered in lexicographic key order.
pub fn voxelize<T>(points: &[[f64; 3]], inputs: &Array2<f64>, size: f64) -> VoxelInput<T>
where
    T: num_traits::Float + 'static,
{
    let n = points.len();
    assert_eq!(inputs.nrows(), n, "one input row per point");
    let key = |p: &[f64; 3]| p.map(|c| (c / size).floor() as i64);
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_by_key(|&i| (key(&points[i as usize]), i));
    let mut keys: Vec<[i64; 3]> = Vec::new();
    let mut point_voxel = vec![0u32; n];
    let mut counts: Vec<u32> = Vec::new();
    for &i in &order {
        let k = key(&points[i as usize]);
        if keys.last() != Some(&k) {
            keys.push(k);
            counts.push(0);
        }
        let v = keys.len() - 1;
        point_voxel[i as usize] = v as u32;
        counts[v] += 1;
    }
    let c = inputs.ncols();
    let mut sums = Array2::<f64>::zeros((keys.len(), c));
    for (i, row) in inputs.outer_iter().enumerate() {
        let mut s = sums.row_mut(point_voxel[i] as usize);
        s += &row;
    }
    let features = Array2::from_shape_fn((keys.len(), c), |(v, j)| {
        T::from(sums[[v, j]] / counts[v] as f64).expect("finite input")
    });
    let mut nbr_offsets = Vec::with_capacity(keys.len() + 1);
    let mut nbr_index = Vec::with_capacity(keys.len() * 8);
    nbr_offsets.push(0);
    for k in &keys {
        let start = nbr_index.len();
        for d in ring_offsets() {
            let q = [k[0] + d[0], k[1] + d[1], k[2] + d[2]];
            if let Ok(u) = keys.binary_search(&q) {
                nbr_index.push(u as u32);
            }
        }
        nbr_index[start..].sort_unstable();
        nbr_offsets.push(nbr_index.len());
    }
    VoxelInput {
        features,
        point_voxel,
        counts,
        nbr_offsets,
        nbr_index,
    }
}
