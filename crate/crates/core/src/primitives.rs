//! Superpoint feature pooling, semantic primitives and the centroid classifier.
//!
//! A primitive model is a set of `S` centroids over augmented superpoint
//! vectors laid out as `[neural (K) | geometric (5) | reflectance (R)]`. The
//! handcrafted blocks are scaled by a weight that decays with the epoch, so
//! they steer early clustering and fade once the learned features mature.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::geomfeat::GEOM_DIM;
use crate::superpoint::SuperpointPartition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrimitiveConfig {
    /// Number of semantic primitives S.
    pub primitives: usize,
    /// Width K of the learned point features.
    pub neural_dim: usize,
    pub w_geof: f64,
    pub w_rgb: f64,
    /// Epochs until the handcrafted weight reaches its floor.
    pub d_coef: f64,
    /// Floor of the handcrafted weight.
    pub w_star: f64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        PrimitiveConfig {
            primitives: 300,
            neural_dim: 128,
            w_geof: 2.0,
            w_rgb: 1.0,
            d_coef: 100.0,
            w_star: 0.2,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-6,
        }
    }
}

impl PrimitiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.primitives == 0 || self.neural_dim == 0 {
            return Err(Error::Config("primitives and neural_dim must be positive".into()));
        }
        if !(self.d_coef > 0.0) || !(0.0..=1.0).contains(&self.w_star) {
            return Err(Error::Config("need d_coef > 0 and w_star in [0, 1]".into()));
        }
        if self.w_geof < 0.0 || self.w_rgb < 0.0 {
            return Err(Error::Config("feature weights must be non-negative".into()));
        }
        Ok(())
    }

    pub fn coefficient(&self, epoch: usize) -> f64 {
        decay_coefficient(epoch, self.d_coef, self.w_star)
    }
}

/// `max(1 - epoch / d_coef, w_star)`.
pub fn decay_coefficient(epoch: usize, d_coef: f64, w_star: f64) -> f64 {
    (1.0 - epoch as f64 / d_coef).max(w_star)
}

/// Mean of the rows of `x` belonging to each superpoint.
pub fn pool_superpoint_features<T>(x: ArrayView2<'_, T>, partition: &SuperpointPartition) -> Result<Array2<f64>>
where
    T: Copy + Into<f64>,
{
    if x.nrows() != partition.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.len(),
            found: x.nrows(),
        });
    }
    let mut out = Array2::<f64>::zeros((partition.count(), x.ncols()));
    for (i, row) in x.outer_iter().enumerate() {
        let mut o = out.row_mut(partition.id(i));
        for (a, &b) in o.iter_mut().zip(row.iter()) {
            *a += b.into();
        }
    }
    for (mut row, &n) in out.outer_iter_mut().zip(partition.sizes()) {
        row /= n as f64;
    }
    Ok(out)
}

/// Concatenates `pooled ⊕ (w·w_geof·geom) ⊕ (w·w_rgb·refl)`.
pub fn augment_features(
    pooled: ArrayView2<'_, f64>,
    geom: ArrayView2<'_, f64>,
    refl: ArrayView2<'_, f64>,
    w_coef: f64,
    cfg: &PrimitiveConfig,
) -> Result<Array2<f64>> {
    let m = pooled.nrows();
    for rows in [geom.nrows(), refl.nrows()] {
        if rows != m {
            return Err(Error::DimensionMismatch { expected: m, found: rows });
        }
    }
    if geom.ncols() != GEOM_DIM {
        return Err(Error::DimensionMismatch {
            expected: GEOM_DIM,
            found: geom.ncols(),
        });
    }
    let (k, r) = (pooled.ncols(), refl.ncols());
    let mut out = Array2::<f64>::zeros((m, k + GEOM_DIM + r));
    out.slice_mut(s![.., ..k]).assign(&pooled);
    out.slice_mut(s![.., k..k + GEOM_DIM]).assign(&(&geom * (w_coef * cfg.w_geof)));
    out.slice_mut(s![.., k + GEOM_DIM..]).assign(&(&refl * (w_coef * cfg.w_rgb)));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Objective (sum of squared distances) after each Lloyd iteration.
    pub objective: Vec<f64>,
}

fn row_sq_norms(x: ArrayView2<'_, f64>) -> Array1<f64> {
    x.outer_iter().map(|r| r.dot(&r)).collect()
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn seed_centroids(x: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let m = x.nrows();
    let mut centroids = Array2::<f64>::zeros((k, x.ncols()));
    let first = rng.gen_range(0..m);
    centroids.row_mut(0).assign(&x.row(first));
    let mut d2: Vec<f64> = x.outer_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut idx = m - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        } else {
            rng.gen_range(0..m)
        };
        centroids.row_mut(c).assign(&x.row(pick));
        for (i, r) in x.outer_iter().enumerate() {
            let d = sq_dist(r, x.row(pick));
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

/// Nearest centroid per row with exact squared distances; ties go to the
/// lower centroid index.
pub fn nearest_centroids(x: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    // the norm expansion narrows the candidates, exact distances decide
    let xn = row_sq_norms(x);
    let cn = row_sq_norms(centroids);
    let dots = x.dot(&centroids.t());
    let mut assign = Vec::with_capacity(x.nrows());
    let mut dist = Vec::with_capacity(x.nrows());
    for (i, row) in dots.outer_iter().enumerate() {
        let approx: Vec<f64> = row.iter().zip(&cn).map(|(d, c)| xn[i] + c - 2.0 * d).collect();
        let lo = approx.iter().cloned().fold(f64::INFINITY, f64::min);
        let slack = 1e-9 * (xn[i] + cn.iter().cloned().fold(0.0, f64::max)) + 1e-12;
        let mut best = (f64::INFINITY, 0usize);
        for (c, &a) in approx.iter().enumerate() {
            if a <= lo + slack {
                let d = sq_dist(x.row(i), centroids.row(c));
                if d < best.0 {
                    best = (d, c);
                }
            }
        }
        assign.push(best.1);
        dist.push(best.0);
    }
    (assign, dist)
}

/// Lloyd's algorithm from k-means++ seeding.
pub fn kmeans(x: ArrayView2<'_, f64>, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansResult> {
    let m = x.nrows();
    if k == 0 || m < k {
        return Err(Error::TooFewSamples { samples: m, k });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("k-means input".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(x, k, &mut rng);
    let (mut assign, mut dist) = nearest_centroids(x, centroids.view());
    let mut objective = vec![dist.iter().sum::<f64>()];
    for _ in 0..max_iter {
        // update step, reseeding empty clusters at the worst-fit point
        let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
        let mut counts = vec![0usize; k];
        for (i, &c) in assign.iter().enumerate() {
            counts[c] += 1;
            let mut r = sums.row_mut(c);
            r += &x.row(i);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let row = sums.row(c).mapv(|v| v / counts[c] as f64);
                centroids.row_mut(c).assign(&row);
            } else {
                let far = (0..m)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .unwrap();
                centroids.row_mut(c).assign(&x.row(far));
                dist[far] = 0.0;
            }
        }
        let (a, d) = nearest_centroids(x, centroids.view());
        let obj: f64 = d.iter().sum();
        let prev = *objective.last().unwrap();
        let unchanged = a == assign;
        assign = a;
        dist = d;
        objective.push(obj);
        if unchanged || (prev - obj).abs() <= tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // final centroids are the means of the final clusters
    let mut counts = vec![0usize; k];
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        let mut r = sums.row_mut(c);
        r += &x.row(i);
    }
    for c in 0..k {
        if counts[c] > 0 {
            let row = sums.row(c).mapv(|v| v / counts[c] as f64);
            centroids.row_mut(c).assign(&row);
        }
    }
    Ok(KMeansResult {
        assignments: assign,
        centroids,
        objective,
    })
}

/// Cluster centroids over augmented superpoint vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveModel {
    /// `S × (K + 5 + R)`.
    pub centroids: Array2<f64>,
    pub neural_dim: usize,
    pub refl_dim: usize,
    /// Handcrafted weight in effect when the centroids were fitted.
    pub w_coef: f64,
    pub config: PrimitiveConfig,
}

pub const MODEL_MAGIC: &[u8; 4] = b"MSPM";
pub const MODEL_VERSION: u32 = 1;

impl PrimitiveModel {
    pub fn primitive_count(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn neural_block(&self) -> ArrayView2<'_, f64> {
        self.centroids.slice(s![.., ..self.neural_dim])
    }

    /// Centroids with the handcrafted blocks rescaled to weight `w`.
    pub fn centroids_at_coef(&self, w: f64) -> Array2<f64> {
        let mut c = self.centroids.clone();
        if self.w_coef > 0.0 {
            let mut hand = c.slice_mut(s![.., self.neural_dim..]);
            hand *= w / self.w_coef;
        }
        c
    }

    pub fn write(&self, w: &mut ByteWriter) {
        w.bytes(MODEL_MAGIC);
        w.u32(MODEL_VERSION);
        w.u64(self.centroids.nrows() as u64);
        w.u64(self.centroids.ncols() as u64);
        w.u64(self.neural_dim as u64);
        w.u64(self.refl_dim as u64);
        w.f64(self.w_coef);
        let c = &self.config;
        w.u64(c.primitives as u64);
        w.u64(c.neural_dim as u64);
        for v in [c.w_geof, c.w_rgb, c.d_coef, c.w_star] {
            w.f64(v);
        }
        w.u64(c.kmeans_max_iter as u64);
        w.f64(c.kmeans_tol);
        w.f64s(self.centroids.as_slice().expect("standard layout"));
    }

    pub fn read(r: &mut ByteReader<'_>) -> Result<Self> {
        r.magic(MODEL_MAGIC)?;
        let at = r.offset();
        let version = r.u32()?;
        if version != MODEL_VERSION {
            return Err(Error::parse(at, format!("unsupported model version {version}")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let neural_dim = r.u64()? as usize;
        let refl_dim = r.u64()? as usize;
        let w_coef = r.f64()?;
        let config = PrimitiveConfig {
            primitives: r.u64()? as usize,
            neural_dim: r.u64()? as usize,
            w_geof: r.f64()?,
            w_rgb: r.f64()?,
            d_coef: r.f64()?,
            w_star: r.f64()?,
            kmeans_max_iter: r.u64()? as usize,
            kmeans_tol: r.f64()?,
        };
        let at = r.offset();
        let data = r.f64s()?;
        if cols != neural_dim + GEOM_DIM + refl_dim || data.len() != rows * cols {
            return Err(Error::parse(at, "centroid matrix shape inconsistent with header"));
        }
        Ok(PrimitiveModel {
            centroids: Array2::from_shape_vec((rows, cols), data).expect("checked shape"),
            neural_dim,
            refl_dim,
            w_coef,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = ByteWriter::new();
        self.write(&mut w);
        write_atomic(path.as_ref(), &w.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let buf = read_file(path.as_ref())?;
        let mut r = ByteReader::new(&buf);
        let m = Self::read(&mut r)?;
        r.finish()?;
        Ok(m)
    }
}

/// Clusters the augmented rows of all tiles (concatenated in tile order)
/// into `S` primitives. Returns the model and the primitive of every row.
pub fn fit_primitives(
    rows: ArrayView2<'_, f64>,
    neural_dim: usize,
    w_coef: f64,
    cfg: &PrimitiveConfig,
    seed: u64,
) -> Result<(PrimitiveModel, Vec<usize>)> {
    cfg.validate()?;
    if rows.ncols() < neural_dim + GEOM_DIM {
        return Err(Error::DimensionMismatch {
            expected: neural_dim + GEOM_DIM,
            found: rows.ncols(),
        });
    }
    let mut k = cfg.primitives;
    if rows.nrows() < k {
        log::warn!("only {} superpoints for {} primitives; reducing k", rows.nrows(), k);
        k = rows.nrows();
    }
    let km = kmeans(rows, k, seed, cfg.kmeans_max_iter, cfg.kmeans_tol)?;
    let model = PrimitiveModel {
        centroids: km.centroids,
        neural_dim,
        refl_dim: rows.ncols() - neural_dim - GEOM_DIM,
        w_coef,
        config: cfg.clone(),
    };
    Ok((model, km.assignments))
}

/// Per-point primitive index inherited from the superpoint's primitive.
pub fn inherit_labels(partition: &SuperpointPartition, superpoint_labels: &[usize]) -> Vec<u32> {
    partition.ids().iter().map(|&s| superpoint_labels[s as usize] as u32).collect()
}

fn unit_rows(m: ArrayView2<'_, f64>) -> Array2<f32> {
    let mut out = m.mapv(|v| v as f32);
    for mut r in out.outer_iter_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    out
}

/// L2-normalized neural blocks of the centroids, `S × K`.
pub fn normalized_neural_centroids(model: &PrimitiveModel) -> Array2<f32> {
    unit_rows(model.neural_block())
}

/// Cosine similarity of each point feature with each centroid's neural
/// block. Zero-norm features get all-zero logits.
pub fn classify_logits(features: ArrayView2<'_, f32>, model: &PrimitiveModel) -> Result<Array2<f32>> {
    if features.ncols() != model.neural_dim {
        return Err(Error::DimensionMismatch {
            expected: model.neural_dim,
            found: features.ncols(),
        });
    }
    let c = normalized_neural_centroids(model);
    let mut f = features.to_owned();
    for mut r in f.outer_iter_mut() {
        let n = r.dot(&r).sqrt();
        if n > 0.0 {
            r /= n;
        }
    }
    Ok(f.dot(&c.t()))
}

/// Index of the largest value per row (first on ties).
pub fn argmax_rows(x: ArrayView2<'_, f32>) -> Vec<usize> {
    x.axis_iter(Axis(0))
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}
