//! Learned point features: the extractor interface and a voxel MLP.

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::voxel::VoxelInput;
use crate::binio::{ByteReader, ByteWriter};
use crate::error::{Error, Result};

/// A trainable map from voxelized input features to `output_dim` features
/// per voxel. Points take the features of their voxel.
pub trait FeatureExtractor: Send + Sync {
    fn output_dim(&self) -> usize;

    /// Deterministic forward pass, `V × output_dim`.
    fn forward(&self, input: &VoxelInput<f32>) -> Array2<f32>;

    /// Forward pass, then backpropagation of the gradient returned by
    /// `loss_grad` (given the outputs). Gradients accumulate until
    /// [`update`](Self::update). Returns whatever `loss_grad` reported as loss.
    fn forward_backward(
        &mut self,
        input: &VoxelInput<f32>,
        loss_grad: &mut dyn FnMut(ArrayView2<'_, f32>) -> (f64, Array2<f32>),
    ) -> f64;

    /// Applies accumulated gradients with SGD and clears them.
    fn update(&mut self, lr: f32);

    fn write_params(&self, w: &mut ByteWriter);
    fn read_params(&mut self, r: &mut ByteReader<'_>) -> Result<()>;
}

/// Features of every point, copied from its voxel.
pub fn point_features(voxel_features: ArrayView2<'_, f32>, input: &VoxelInput<f32>) -> Array2<f32> {
    voxel_features.select(Axis(0), &input.point_voxel.iter().map(|&v| v as usize).collect::<Vec<_>>())
}

/// Two shared ReLU layers per voxel, max-pooling over the occupied 3×3×3
/// block, then a linear layer reading the voxel's own hidden features next
/// to the pooled ones. The skip keeps per-voxel detail such as reflectance
/// from being washed out by the neighborhood maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMlp<T> {
    /// Weights are `in × out`, biases `out`.
    pub w: [Array2<T>; 3],
    pub b: [Array1<T>; 3],
    grad_w: [Array2<T>; 3],
    grad_b: [Array1<T>; 3],
    vel_w: [Array2<T>; 3],
    vel_b: [Array1<T>; 3],
    pub momentum: T,
}

/// Intermediate activations kept for backpropagation.
pub struct Activations<T> {
    h1: Array2<T>,
    h2: Array2<T>,
    /// `[h2 | maxpool(h2)]`
    pooled: Array2<T>,
    argmax: Vec<u32>,
    pub output: Array2<T>,
}

/// Default hidden widths of the reference extractor.
pub const HIDDEN: [usize; 2] = [64, 128];

impl<T: NdFloat + Float> VoxelMlp<T> {
    /// He-initialized network with `dims = [in, h1, h2, out]`; the last
    /// layer is `2·h2 × out`.
    pub fn new(dims: [usize; 4], momentum: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = |fan_in: usize, fan_out: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
            Array2::from_shape_fn((fan_in, fan_out), |_| T::from(normal.sample(&mut rng)).unwrap())
        };
        let w = [layer(dims[0], dims[1]), layer(dims[1], dims[2]), layer(2 * dims[2], dims[3])];
        let b = [Array1::zeros(dims[1]), Array1::zeros(dims[2]), Array1::zeros(dims[3])];
        let zw = w.clone().map(|m| Array2::zeros(m.raw_dim()));
        let zb = b.clone();
        VoxelMlp {
            grad_w: zw.clone(),
            grad_b: zb.clone(),
            vel_w: zw,
            vel_b: zb,
            w,
            b,
            momentum: T::from(momentum).unwrap(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w[0].nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w[2].ncols()
    }

    pub fn activations(&self, input: &VoxelInput<T>) -> Activations<T> {
        let relu = |x: T| x.max(T::zero());
        let h1 = (input.features.dot(&self.w[0]) + &self.b[0]).mapv(relu);
        let h2 = (h1.dot(&self.w[1]) + &self.b[1]).mapv(relu);
        let (v, c) = h2.dim();
        let mut pooled = Array2::<T>::zeros((v, c));
        let mut argmax = vec![0u32; v * c];
        for vox in 0..v {
            let nb = input.neighbors(vox);
            let mut out = pooled.row_mut(vox);
            let am = &mut argmax[vox * c..(vox + 1) * c];
            let first = nb[0] as usize;
            out.assign(&h2.row(first));
            am.fill(first as u32);
            for &u in &nb[1..] {
                let row = h2.row(u as usize);
                for j in 0..c {
                    if row[j] > out[j] {
                        out[j] = row[j];
                        am[j] = u;
                    }
                }
            }
        }
        let pooled = ndarray::concatenate![Axis(1), h2, pooled];
        let output = pooled.dot(&self.w[2]) + &self.b[2];
        Activations {
            h1,
            h2,
            pooled,
            argmax,
            output,
        }
    }

    /// Accumulates parameter gradients for `d_out = ∂loss/∂output`.
    pub fn backward(&mut self, input: &VoxelInput<T>, act: &Activations<T>, d_out: ArrayView2<'_, T>) {
        self.grad_w[2] += &act.pooled.t().dot(&d_out);
        self.grad_b[2] += &d_out.sum_axis(Axis(0));
        let d_pooled = d_out.dot(&self.w[2].t());
        let c = act.h2.ncols();
        let mut d_h2 = d_pooled.slice(ndarray::s![.., ..c]).to_owned();
        for (vox, row) in d_pooled.outer_iter().enumerate() {
            for j in 0..c {
                let src = act.argmax[vox * c + j] as usize;
                d_h2[[src, j]] += row[c + j];
            }
        }
        d_h2.zip_mut_with(&act.h2, |d, &h| {
            if h <= T::zero() {
                *d = T::zero();
            }
        });
        self.grad_w[1] += &act.h1.t().dot(&d_h2);
        self.grad_b[1] += &d_h2.sum_axis(Axis(0));
        let mut d_h1 = d_h2.dot(&self.w[1].t());
        d_h1.zip_mut_with(&act.h1, |d, &h| {
            if h <= T::zero() {
                *d = T::zero();
            }
        });
        self.grad_w[0] += &input.features.t().dot(&d_h1);
        self.grad_b[0] += &d_h1.sum_axis(Axis(0));
    }

    /// Flattened accumulated gradient, in parameter order.
    pub fn gradient(&self) -> Vec<T> {
        let mut g = Vec::new();
        for k in 0..3 {
            g.extend(self.grad_w[k].iter().copied());
            g.extend(self.grad_b[k].iter().copied());
        }
        g
    }

    pub fn zero_grad(&mut self) {
        for k in 0..3 {
            self.grad_w[k].fill(T::zero());
            self.grad_b[k].fill(T::zero());
        }
    }

    pub fn parameter_count(&self) -> usize {
        (0..3).map(|k| self.w[k].len() + self.b[k].len()).sum()
    }

    /// Mutable access to parameter `i` in the order of [`gradient`](Self::gradient).
    pub fn parameter_mut(&mut self, mut i: usize) -> &mut T {
        for k in 0..3 {
            if i < self.w[k].len() {
                return self.w[k].as_slice_mut().unwrap().get_mut(i).unwrap();
            }
            i -= self.w[k].len();
            if i < self.b[k].len() {
                return &mut self.b[k][i];
            }
            i -= self.b[k].len();
        }
        panic!("parameter index out of range");
    }

    /// Heavy-ball SGD: `v ← μv + g`, `θ ← θ − lr·v`.
    pub fn sgd_step(&mut self, lr: T) {
        let mu = self.momentum;
        for k in 0..3 {
            self.vel_w[k].zip_mut_with(&self.grad_w[k], |v, &g| *v = mu * *v + g);
            self.vel_b[k].zip_mut_with(&self.grad_b[k], |v, &g| *v = mu * *v + g);
            self.w[k].scaled_add(-lr, &self.vel_w[k]);
            self.b[k].scaled_add(-lr, &self.vel_b[k]);
        }
        self.zero_grad();
    }
}

impl FeatureExtractor for VoxelMlp<f32> {
    fn output_dim(&self) -> usize {
        self.out_dim()
    }

    fn forward(&self, input: &VoxelInput<f32>) -> Array2<f32> {
        self.activations(input).output
    }

    fn forward_backward(
        &mut self,
        input: &VoxelInput<f32>,
        loss_grad: &mut dyn FnMut(ArrayView2<'_, f32>) -> (f64, Array2<f32>),
    ) -> f64 {
        let act = self.activations(input);
        let (loss, grad) = loss_grad(act.output.view());
        self.backward(input, &act, grad.view());
        loss
    }

    fn update(&mut self, lr: f32) {
        self.sgd_step(lr);
    }

    fn write_params(&self, w: &mut ByteWriter) {
        w.bytes(b"VMLP");
        for k in 0..3 {
            w.u64(self.w[k].nrows() as u64);
            w.u64(self.w[k].ncols() as u64);
        }
        w.f64(self.momentum as f64);
        for k in 0..3 {
            for m in [&self.w[k], &self.vel_w[k]] {
                w.f32s(m.as_slice().unwrap());
            }
            for v in [&self.b[k], &self.vel_b[k]] {
                w.f32s(v.as_slice().unwrap());
            }
        }
    }

    fn read_params(&mut self, r: &mut ByteReader<'_>) -> Result<()> {
        r.magic(b"VMLP")?;
        let at = r.offset();
        let mut shapes = [(0usize, 0usize); 3];
        for s in &mut shapes {
            *s = (r.u64()? as usize, r.u64()? as usize);
        }
        for k in 0..3 {
            if shapes[k] != self.w[k].dim() {
                return Err(Error::parse(at, format!("layer {k} shape {:?} != {:?}", shapes[k], self.w[k].dim())));
            }
        }
        self.momentum = r.f64()? as f32;
        for k in 0..3 {
            let dim = self.w[k].raw_dim();
            for target in [0, 1] {
                let at = r.offset();
                let data = r.f32s()?;
                let m = Array2::from_shape_vec(dim, data).map_err(|_| Error::parse(at, "weight size"))?;
                if target == 0 {
                    self.w[k] = m;
                } else {
                    self.vel_w[k] = m;
                }
            }
            let len = self.b[k].len();
            for target in [0, 1] {
                let at = r.offset();
                let data = r.f32s()?;
                if data.len() != len {
                    return Err(Error::parse(at, "bias size"));
                }
                if target == 0 {
                    self.b[k] = Array1::from(data);
                } else {
                    self.vel_b[k] = Array1::from(data);
                }
            }
        }
        self.zero_grad();
        Ok(())
    }
}

/// Per-voxel pseudo-label histograms as sorted `(label, count)` runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelHistogram {
    pub offsets: Vec<usize>,
    pub entries: Vec<(u32, u32)>,
}

impl LabelHistogram {
    pub fn new(point_voxel: &[u32], labels: &[u32], voxels: usize) -> Self {
        let mut pairs: Vec<(u32, u32)> = point_voxel.iter().copied().zip(labels.iter().copied()).collect();
        pairs.sort_unstable();
        let mut offsets = vec![0usize; voxels + 1];
        let mut entries: Vec<(u32, u32)> = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for (v, l) in pairs {
            if last == Some((v, l)) {
                entries.last_mut().unwrap().1 += 1;
            } else {
                entries.push((l, 1));
                offsets[v as usize + 1] = entries.len();
                last = Some((v, l));
            }
        }
        for v in 0..voxels {
            offsets[v + 1] = offsets[v + 1].max(offsets[v]);
        }
        LabelHistogram { offsets, entries }
    }

    pub fn voxel(&self, v: usize) -> &[(u32, u32)] {
        &self.entries[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Softmax cross-entropy of cosine logits against per-voxel label
/// histograms. `centroids` must have unit rows (`S × K`). Returns the summed
/// point loss and its gradient with respect to `features`, both multiplied
/// by `scale`.
pub fn cosine_cross_entropy<T: NdFloat + Float>(
    features: ArrayView2<'_, T>,
    centroids: ArrayView2<'_, T>,
    hist: &LabelHistogram,
    counts: &[u32],
    scale: T,
) -> (f64, Array2<T>) {
    let norms: Vec<T> = features.outer_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut unit = features.to_owned();
    for (mut r, &n) in unit.outer_iter_mut().zip(&norms) {
        if n > T::zero() {
            r.mapv_inplace(|x| x / n);
        } else {
            r.fill(T::zero());
        }
    }
    let logits = unit.dot(&centroids.t());
    let mut d_logits = Array2::<T>::zeros(logits.raw_dim());
    let mut loss = 0.0f64;
    for (v, (row, mut drow)) in logits.outer_iter().zip(d_logits.outer_iter_mut()).enumerate() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = row.iter().map(|&x| (x - max).exp()).fold(T::zero(), |a, b| a + b);
        let lse = max + sum.ln();
        let n = T::from(counts[v]).unwrap();
        loss += (n * lse).to_f64().unwrap();
        for (d, &x) in drow.iter_mut().zip(row.iter()) {
            *d = n * (x - lse).exp();
        }
        for &(l, c) in hist.voxel(v) {
            let c = T::from(c).unwrap();
            loss -= (c * row[l as usize]).to_f64().unwrap();
            drow[l as usize] = drow[l as usize] - c;
        }
    }
    // back through the row normalization: (I − û ûᵀ) / |f|
    let d_unit = d_logits.dot(&centroids);
    let mut grad = Array2::<T>::zeros(features.raw_dim());
    for (v, (mut g, (du, u))) in grad.outer_iter_mut().zip(d_unit.outer_iter().zip(unit.outer_iter())).enumerate() {
        let n = norms[v];
        if n > T::zero() {
            let proj = du.dot(&u);
            for ((gj, &dj), &uj) in g.iter_mut().zip(du.iter()).zip(u.iter()) {
                *gj = (dj - proj * uj) / n * scale;
            }
        }
    }
    (loss * scale.to_f64().unwrap(), grad)
}

/// Summed point cross-entropy `-Σ log softmax(logits)[label]` at point level,
/// used as a direct reference for the histogram form.
pub fn point_cross_entropy(logits: ArrayView2<'_, f64>, labels: &[u32]) -> f64 {
    logits
        .outer_iter()
        .zip(labels)
        .map(|(row, &l)| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            lse - row[l as usize]
        })
        .sum()
}
