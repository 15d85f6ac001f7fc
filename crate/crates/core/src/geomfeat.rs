//! Eigen-based geometric descriptors averaged over several neighborhood scales.
//!
//! For each point the neighborhood is every point within a ball of radius
//! `r_n`, capped at the `K` nearest. The covariance is taken around the
//! neighborhood medoid, and the five descriptors come from its sorted
//! eigen-decomposition. Descriptors are averaged over all `K` in the scale set.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::VoxelGrid;

pub const LINEARITY: usize = 0;
pub const PLANARITY: usize = 1;
pub const SPHERICITY: usize = 2;
pub const VERTICALITY: usize = 3;
pub const PCA1: usize = 4;
pub const GEOM_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeighborhoodConfig {
    /// Ball radius in meters.
    pub r_n: f64,
    /// Neighbor-count caps, one descriptor evaluation per entry.
    pub scales: Vec<usize>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        NeighborhoodConfig {
            r_n: 0.35,
            scales: vec![20, 50, 100, 150],
        }
    }
}

impl NeighborhoodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_n > 0.0 && self.r_n.is_finite()) {
            return Err(Error::Config(format!("r_n must be positive, got {}", self.r_n)));
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return Err(Error::Config("scales must be non-empty and positive".into()));
        }
        if self.scales.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("scales must be sorted ascending".into()));
        }
        Ok(())
    }
}

/// One descriptor row: linearity, planarity, sphericity, verticality, pca1.
pub type Descriptor = [f64; GEOM_DIM];

/// Per-point descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct GeomFeatures {
    pub values: Vec<Descriptor>,
}

impl GeomFeatures {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn linearity(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(|v| v[LINEARITY])
    }
}

/// Result of one eigen-analysis, with a flag for the all-coincident case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenDescriptor {
    pub values: Descriptor,
    pub degenerate: bool,
}

/// Indices of the neighborhood of `query`: the query itself first, then up to
/// `k - 1` other points within `r_n`, ordered by (distance, index).
pub fn hybrid_neighborhood(grid: &VoxelGrid<'_>, query: usize, r_n: f64, k: usize) -> Vec<usize> {
    let mut scratch = Vec::new();
    let mut out = Vec::new();
    hybrid_neighborhood_into(grid, query, r_n, k, &mut scratch, &mut out);
    out
}

fn hybrid_neighborhood_into(
    grid: &VoxelGrid<'_>,
    query: usize,
    r_n: f64,
    k: usize,
    scratch: &mut Vec<(f64, u32)>,
    out: &mut Vec<usize>,
) {
    out.clear();
    if k == 0 {
        return;
    }
    grid.within_radius_into(&grid.points()[query], r_n, scratch);
    out.push(query);
    out.extend(
        scratch
            .iter()
            .filter(|&&(_, i)| i as usize != query)
            .take(k - 1)
            .map(|&(_, i)| i as usize),
    );
}

/// Index (into `coords`) of the member minimizing the summed Euclidean
/// distance to all other members; ties go to the earliest member.
pub fn medoid_index(coords: &[[f64; 3]]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, a) in coords.iter().enumerate() {
        let s: f64 = coords.iter().map(|b| crate::spatial::dist2(a, b).sqrt()).sum();
        if s < best.0 {
            best = (s, i);
        }
    }
    best.1
}

/// Covariance about the medoid, normalized by the neighborhood size.
pub fn covariance_medoid(coords: &[[f64; 3]]) -> Matrix3<f64> {
    if coords.is_empty() {
        return Matrix3::zeros();
    }
    let m = coords[medoid_index(coords)];
    scatter_about(coords, &m)
}

fn scatter_about(coords: &[[f64; 3]], m: &[f64; 3]) -> Matrix3<f64> {
    let mut s = Matrix3::zeros();
    for p in coords {
        let d = Vector3::new(p[0] - m[0], p[1] - m[1], p[2] - m[2]);
        s += d * d.transpose();
    }
    s / coords.len() as f64
}

/// Relative gap under which two eigenvalues are treated as equal.
const TIE_TOL: f64 = 1e-9;

/// Descriptors from a symmetric positive semidefinite tensor.
pub fn eigen_features(cov: &Matrix3<f64>) -> EigenDescriptor {
    let eig = SymmetricEigen::new(*cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let l: [f64; 3] = order.map(|i| eig.eigenvalues[i].max(0.0));
    let vecs: [Vector3<f64>; 3] = order.map(|i| eig.eigenvectors.column(i).into_owned());

    if l[0] <= 0.0 || !l[0].is_finite() {
        return EigenDescriptor {
            values: [0.0, 0.0, 0.0, 0.0, 1.0 / 3.0],
            degenerate: true,
        };
    }

    let z = Vector3::z();
    let mut e3 = vecs[2];
    // Inside a repeated eigenvalue's eigenspace the direction is arbitrary;
    // pick the member closest to the vertical axis.
    let tie = |a: f64, b: f64| (a - b).abs() <= TIE_TOL * l[0];
    if tie(l[1], l[2]) {
        let span: Vec<Vector3<f64>> = if tie(l[0], l[2]) { vecs.to_vec() } else { vec![vecs[1], vecs[2]] };
        let proj: Vector3<f64> = span.iter().map(|v| v * v.dot(&z)).sum();
        if proj.norm() > 1e-12 {
            e3 = proj.normalize();
        }
    }
    let sum = l[0] + l[1] + l[2];
    let values = [
        (l[0] - l[1]) / l[0],
        (l[1] - l[2]) / l[0],
        l[2] / l[0],
        (1.0 - z.dot(&e3).abs()).clamp(0.0, 1.0),
        l[0] / sum,
    ];
    EigenDescriptor {
        values,
        degenerate: false,
    }
}

/// Per-point descriptors averaged over every scale in `cfg.scales`.
pub fn multiscale_features(points: &[[f64; 3]], cfg: &NeighborhoodConfig) -> Result<GeomFeatures> {
    cfg.validate()?;
    if points.is_empty() {
        return Err(Error::InvalidArgument("cannot compute features of an empty cloud".into()));
    }
    let grid = VoxelGrid::new(points, cfg.r_n);
    let k_max = *cfg.scales.last().unwrap();
    let values = (0..points.len())
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new(), Vec::new()),
            |(scratch, nbrs, dist), i| {
                hybrid_neighborhood_into(&grid, i, cfg.r_n, k_max, scratch, nbrs);
                point_multiscale(points, nbrs, &cfg.scales, dist)
            },
        )
        .collect();
    Ok(GeomFeatures { values })
}

/// Averages descriptors over neighborhood prefixes. Larger scales extend
/// smaller ones, so one pairwise distance table serves every scale and the
/// medoid row sums grow incrementally.
fn point_multiscale(points: &[[f64; 3]], nbrs: &[usize], scales: &[usize], dist: &mut Vec<f64>) -> Descriptor {
    let m = nbrs.len();
    dist.clear();
    dist.resize(m * m, 0.0);
    for a in 0..m {
        for b in (a + 1)..m {
            let d = crate::spatial::dist2(&points[nbrs[a]], &points[nbrs[b]]).sqrt();
            dist[a * m + b] = d;
            dist[b * m + a] = d;
        }
    }
    let mut row_sums = vec![0.0f64; m];
    let mut included = 0usize;
    let mut acc = [0.0f64; GEOM_DIM];
    let mut coords: Vec<[f64; 3]> = Vec::with_capacity(m);
    for &k in scales {
        let size = k.min(m);
        while included < size {
            let j = included;
            for (i, sum) in row_sums.iter_mut().enumerate().take(j) {
                *sum += dist[i * m + j];
            }
            row_sums[j] = (0..j).map(|i| dist[j * m + i]).sum();
            coords.push(points[nbrs[j]]);
            included += 1;
        }
        let mut best = (f64::INFINITY, 0usize);
        for (i, &s) in row_sums.iter().enumerate().take(size) {
            if s < best.0 {
                best = (s, i);
            }
        }
        let cov = scatter_about(&coords[..size], &coords[best.1]);
        let f = eigen_features(&cov).values;
        for (a, v) in acc.iter_mut().zip(f) {
            *a += v;
        }
    }
    let n = scales.len() as f64;
    acc.map(|a| a / n)
}

const GEOM_MAGIC: &[u8; 4] = b"MSGF";
const GEOM_VERSION: u32 = 1;

/// Writes descriptors as a sidecar: magic "MSGF", version u32, n u64, then
/// five little-endian f32 columns.
pub fn save_features(features: &GeomFeatures, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(GEOM_MAGIC)?;
        w.write_all(&GEOM_VERSION.to_le_bytes())?;
        w.write_all(&(features.len() as u64).to_le_bytes())?;
        for c in 0..GEOM_DIM {
            for v in &features.values {
                w.write_all(&(v[c] as f32).to_le_bytes())?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<GeomFeatures> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::parse(bytes.len() as u64, "truncated feature header"));
    }
    if &bytes[0..4] != GEOM_MAGIC {
        return Err(Error::parse(0, "bad magic, expected \"MSGF\""));
    }
    if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != GEOM_VERSION {
        return Err(Error::parse(4, "unsupported feature file version"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let expected = 16 + n * GEOM_DIM * 4;
    if bytes.len() != expected {
        return Err(Error::parse(
            bytes.len().min(expected) as u64,
            format!("feature payload size {} != expected {}", bytes.len(), expected),
        ));
    }
    let mut values = vec![[0.0; GEOM_DIM]; n];
    for c in 0..GEOM_DIM {
        for (i, v) in values.iter_mut().enumerate() {
            let at = 16 + (c * n + i) * 4;
            v[c] = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as f64;
        }
    }
    Ok(GeomFeatures { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn from_eigenvalues(l: [f64; 3]) -> Descriptor {
        eigen_features(&Matrix3::from_diagonal(&Vector3::new(l[0], l[1], l[2]))).values
    }

    #[test]
    fn eigen_feature_formula_cases() {
        let line = from_eigenvalues([1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(line[LINEARITY], 1.0);
        assert_abs_diff_eq!(line[PLANARITY], 0.0);
        assert_abs_diff_eq!(line[SPHERICITY], 0.0);
        assert_abs_diff_eq!(line[PCA1], 1.0);

        let iso = from_eigenvalues([1.0, 1.0, 1.0]);
        assert_abs_diff_eq!(iso[LINEARITY], 0.0);
        assert_abs_diff_eq!(iso[PLANARITY], 0.0);
        assert_abs_diff_eq!(iso[SPHERICITY], 1.0);
        assert_abs_diff_eq!(iso[PCA1], 1.0 / 3.0);

        // unsorted diagonal on purpose
        let mixed = from_eigenvalues([0.0, 2.0, 1.0]);
        assert_abs_diff_eq!(mixed[LINEARITY], 0.5);
        assert_abs_diff_eq!(mixed[PLANARITY], 0.5);
        assert_abs_diff_eq!(mixed[SPHERICITY], 0.0);
        assert_abs_diff_eq!(mixed[PCA1], 2.0 / 3.0);
    }

    #[test]
    fn degenerate_tensor_convention() {
        let d = eigen_features(&Matrix3::zeros());
        assert!(d.degenerate);
        assert_eq!(d.values, [0.0, 0.0, 0.0, 0.0, 1.0 / 3.0]);
    }

    #[test]
    fn verticality_of_lines_with_tied_minor_eigenvalues() {
        // horizontal line along x: e3 resolves to the z axis
        assert_abs_diff_eq!(from_eigenvalues([1.0, 0.0, 0.0])[VERTICALITY], 0.0);
        // vertical line: no member of the x/y eigenspace has a z component
        assert_abs_diff_eq!(from_eigenvalues([0.0, 0.0, 1.0])[VERTICALITY], 1.0);
        // isotropic: the whole space ties, z itself is chosen
        assert_abs_diff_eq!(from_eigenvalues([1.0, 1.0, 1.0])[VERTICALITY], 0.0);
    }

    #[test]
    fn medoid_covariance_of_collinear_points() {
        let pts = [[2.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(medoid_index(&pts), 2);
        let cov = covariance_medoid(&pts);
        let expect = Matrix3::from_diagonal(&Vector3::new(2.0 / 3.0, 0.0, 0.0));
        assert!((cov - expect).abs().max() < 1e-15);
        assert_eq!(covariance_medoid(&[[1.0, 2.0, 3.0]]), Matrix3::zeros());
    }

    #[test]
    fn plane_and_cylinder_verticality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let plane: Vec<[f64; 3]> = (0..200).map(|_| [rng.gen(), rng.gen(), 0.5]).collect();
        let d = eigen_features(&covariance_medoid(&plane)).values;
        assert!(d[VERTICALITY] < 1e-9, "{d:?}");

        let shell: Vec<[f64; 3]> = (0..400)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                [0.3 * a.cos(), 0.3 * a.sin(), rng.gen_range(0.0..3.0)]
            })
            .collect();
        let d = eigen_features(&covariance_medoid(&shell)).values;
        assert!(d[VERTICALITY] > 0.99, "{d:?}");
    }

    #[test]
    fn isolated_point_is_its_own_neighborhood() {
        let pts = [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]];
        let grid = VoxelGrid::new(&pts, 0.35);
        assert_eq!(hybrid_neighborhood(&grid, 0, 0.35, 20), vec![0]);
    }

    #[test]
    fn ball_limits_neighborhood_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut pts: Vec<[f64; 3]> = vec![[0.0; 3]];
        pts.extend((0..29).map(|_| [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)]));
        pts.extend((0..50).map(|_| [rng.gen_range(3.0..4.0), 0.0, 0.0]));
        let grid = VoxelGrid::new(&pts, 0.35);
        assert_eq!(hybrid_neighborhood(&grid, 0, 0.35, 100).len(), 30);
    }

    #[test]
    fn multiscale_of_capped_ball_equals_single_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<[f64; 3]> = (0..15)
            .map(|_| [rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1)])
            .collect();
        let multi = multiscale_features(&pts, &NeighborhoodConfig::default()).unwrap();
        let single = multiscale_features(
            &pts,
            &NeighborhoodConfig {
                r_n: 0.35,
                scales: vec![20],
            },
        )
        .unwrap();
        for (a, b) in multi.values.iter().zip(&single.values) {
            for c in 0..GEOM_DIM {
                assert_abs_diff_eq!(a[c], b[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn incremental_medoid_matches_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..300).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let cfg = NeighborhoodConfig {
            r_n: 0.3,
            scales: vec![5, 12, 40],
        };
        let fast = multiscale_features(&pts, &cfg).unwrap();
        let grid = VoxelGrid::new(&pts, cfg.r_n);
        for i in (0..300).step_by(7) {
            let mut acc = [0.0; GEOM_DIM];
            for &k in &cfg.scales {
                let nb = hybrid_neighborhood(&grid, i, cfg.r_n, k);
                let coords: Vec<[f64; 3]> = nb.iter().map(|&j| pts[j]).collect();
                let d = eigen_features(&covariance_medoid(&coords)).values;
                for c in 0..GEOM_DIM {
                    acc[c] += d[c] / cfg.scales.len() as f64;
                }
            }
            for c in 0..GEOM_DIM {
                assert_abs_diff_eq!(fast.values[i][c], acc[c], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let f = GeomFeatures {
            values: vec![[0.5, 0.25, 0.25, 1.0, 0.75], [0.0, 0.0, 1.0, 0.0, 1.0 / 3.0]],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.geom");
        save_features(&f, &p).unwrap();
        let back = load_features(&p).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            for c in 0..GEOM_DIM {
                assert_abs_diff_eq!(a[c], b[c], epsilon = 1e-7);
            }
        }
    }
}
