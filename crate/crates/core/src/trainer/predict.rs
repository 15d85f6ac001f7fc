//! Prediction: primitives are grouped into oversegmented classes, and each
//! class is called wood when its points are linear enough on average.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::extractor::FeatureExtractor;
use super::{derive_seed, TrainConfig, TrainingTile};
use crate::error::{Error, Result};
use crate::geomfeat::LINEARITY;
use crate::pcdata::{Dataset, FOLIAGE, UNLABELED, WOOD};
use crate::preprocess::nearest_tile_owner;
use crate::primitives::{
    argmax_rows, augment_features, fit_primitives, inherit_labels, kmeans, normalized_neural_centroids,
    PrimitiveConfig, PrimitiveModel,
};

const TAG_OVERSEG: u64 = 11;
const TAG_BASELINE: u64 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    /// Number of oversegmented classes.
    pub c_over: usize,
    /// Mean linearity at or above which a class is wood.
    pub l_min: f64,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            c_over: 14,
            l_min: 0.55,
            seed: 0,
        }
    }
}

/// Per-point output for one tile.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub classes: Vec<u8>,
    pub overseg: Vec<u32>,
}

/// Oversegmented class of every primitive: k-means with `k = c_over` over
/// the centroids, handcrafted blocks taken at the weight floor.
pub fn oversegment_primitives(model: &PrimitiveModel, cfg: &PredictConfig) -> Result<Vec<usize>> {
    let s = model.primitive_count();
    if cfg.c_over == 0 {
        return Err(Error::Config("c_over must be positive".into()));
    }
    if cfg.c_over >= s {
        return Ok((0..s).collect());
    }
    let c = model.centroids_at_coef(model.config.w_star);
    let km = kmeans(
        c.view(),
        cfg.c_over,
        derive_seed(cfg.seed, TAG_OVERSEG, 0),
        model.config.kmeans_max_iter,
        model.config.kmeans_tol,
    )?;
    Ok(km.assignments)
}

/// Mean linearity of the points of each class, pooled over all tiles.
/// `None` for classes without points.
pub fn class_linearity(tiles: &[TrainingTile], overseg: &[Vec<u32>], classes: usize) -> Vec<Option<f64>> {
    let mut sum = vec![0.0; classes];
    let mut cnt = vec![0usize; classes];
    for (t, o) in tiles.iter().zip(overseg) {
        for (d, &c) in t.geom.values.iter().zip(o) {
            sum[c as usize] += d[LINEARITY];
            cnt[c as usize] += 1;
        }
    }
    (0..classes).map(|c| (cnt[c] > 0).then(|| sum[c] / cnt[c] as f64)).collect()
}

/// Wood flag per class; empty classes are foliage (they label no points).
pub fn wood_classes(linearity: &[Option<f64>], l_min: f64) -> Vec<bool> {
    linearity.iter().map(|m| m.is_some_and(|m| m >= l_min)).collect()
}

fn finish(tiles: &[TrainingTile], overseg: Vec<Vec<u32>>, classes: usize, l_min: f64) -> Vec<Prediction> {
    let wood = wood_classes(&class_linearity(tiles, &overseg, classes), l_min);
    overseg
        .into_iter()
        .map(|o| Prediction {
            classes: o.iter().map(|&c| if wood[c as usize] { WOOD } else { FOLIAGE }).collect(),
            overseg: o,
        })
        .collect()
}

/// Labels every point of `tiles` with the trained extractor and model.
pub fn predict_tiles<E: FeatureExtractor>(
    tiles: &[TrainingTile],
    extractor: &E,
    model: &PrimitiveModel,
    cfg: &PredictConfig,
) -> Result<Vec<Prediction>> {
    let class_of = oversegment_primitives(model, cfg)?;
    let classes = class_of.iter().max().map_or(0, |&c| c + 1);
    let centroids = normalized_neural_centroids(model);
    let mut overseg = Vec::with_capacity(tiles.len());
    for t in tiles {
        let mut f = extractor.forward(&t.voxels);
        for mut r in f.outer_iter_mut() {
            let n = r.dot(&r).sqrt();
            if n > 0.0 {
                r /= n;
            }
        }
        let prim = argmax_rows(f.dot(&centroids.t()).view());
        overseg.push(t.voxels.point_voxel.iter().map(|&v| class_of[prim[v as usize]] as u32).collect());
    }
    Ok(finish(tiles, overseg, classes, cfg.l_min))
}

/// Reference without learning: primitives fitted on the handcrafted
/// superpoint features alone at epoch 0, points inheriting their
/// superpoint's primitive.
pub fn baseline_handcrafted(tiles: &[TrainingTile], train: &TrainConfig, cfg: &PredictConfig) -> Result<Vec<Prediction>> {
    let pcfg = PrimitiveConfig {
        neural_dim: 1,
        ..train.primitives.clone()
    };
    let w = pcfg.coefficient(0);
    let mut blocks = Vec::with_capacity(tiles.len());
    for t in tiles {
        let (geom, refl) = t.pooled_handcrafted(&t.initial, &train.clustering_reflectance)?;
        let zero = Array2::<f64>::zeros((t.initial.count(), 0));
        blocks.push(augment_features(zero.view(), geom.view(), refl.view(), w, &pcfg)?);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let rows = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let (model, labels) = fit_primitives(rows.view(), 0, w, &pcfg, derive_seed(train.seed, TAG_BASELINE, 0))?;
    let class_of = oversegment_primitives(&model, cfg)?;
    let classes = class_of.iter().max().map_or(0, |&c| c + 1);
    let mut overseg = Vec::with_capacity(tiles.len());
    let mut at = 0;
    for (t, b) in tiles.iter().zip(&blocks) {
        let sp = &labels[at..at + b.nrows()];
        at += b.nrows();
        overseg.push(inherit_labels(&t.initial, sp).into_iter().map(|p| class_of[p as usize] as u32).collect());
    }
    Ok(finish(tiles, overseg, classes, cfg.l_min))
}

/// Plot-level labels: each plot point takes the prediction of the tile
/// whose center is nearest. Points in no tile stay unlabeled (255).
pub fn resolve_plot(ds: &Dataset, predictions: &[Vec<u8>], plot_len: usize) -> Result<Vec<u8>> {
    if predictions.len() != ds.len() {
        return Err(Error::DimensionMismatch {
            expected: ds.len(),
            found: predictions.len(),
        });
    }
    Ok(nearest_tile_owner(ds, plot_len)
        .into_iter()
        .map(|o| o.map_or(UNLABELED, |(e, local)| predictions[e][local]))
        .collect())
}
