//! The two-stage unsupervised training loop and prediction.
//!
//! Pretraining alternates between clustering superpoint features into
//! semantic primitives and training the extractor to predict each point's
//! primitive. The growth stage additionally merges superpoints per tile
//! before every refit, so later pseudo-labels cover larger regions.

mod extractor;
mod predict;
mod train;
mod voxel;

pub use extractor::{
    cosine_cross_entropy, point_cross_entropy, point_features, Activations, FeatureExtractor, LabelHistogram,
    VoxelMlp, HIDDEN,
};
pub use predict::{
    baseline_handcrafted, class_linearity, oversegment_primitives, predict_tiles, resolve_plot, wood_classes,
    Prediction, PredictConfig,
};
pub use train::{
    checkpoint_config, grow_superpoints, load_checkpoint, load_trained, new_extractor, run_training, run_training_with, Checkpoint, EpochLog, RunOptions,
    TrainOutcome, CHECKPOINT_FILE, LOG_FILE,
};
pub use voxel::{voxelize, VoxelInput};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomfeat::{GeomFeatures, GEOM_DIM};
use crate::pcdata::{is_missing, Tile, CHANNELS};
use crate::primitives::{pool_superpoint_features, PrimitiveConfig};
use crate::superpoint::SuperpointPartition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub e_pretrain: usize,
    pub e_grow: usize,
    /// Epochs between primitive refits (and growth events).
    pub refresh_interval: usize,
    /// Superpoint target of the first growth event's schedule start.
    pub m_first: usize,
    /// Superpoint target after the last growth event.
    pub m_last: usize,
    /// Tiles per optimizer step.
    pub batch_size: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub poly_power: f64,
    pub voxel_size: f64,
    /// Coordinates are divided by this before entering the network.
    pub coord_scale: f64,
    /// Reflectance channels (0-based) fed to the network next to xyz.
    pub input_reflectance: Vec<usize>,
    /// Reflectance channels pooled into the clustering features.
    pub clustering_reflectance: Vec<usize>,
    /// Weight of superpoint centroid coordinates during growth.
    pub w_xyz: f64,
    /// Random z-rotation, scaling and jitter of training tiles.
    pub augment: bool,
    pub primitives: PrimitiveConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            e_pretrain: 150,
            e_grow: 60,
            refresh_interval: 10,
            m_first: 1500,
            m_last: 1200,
            batch_size: 16,
            lr0: 0.1,
            momentum: 0.9,
            poly_power: 0.9,
            voxel_size: 0.05,
            coord_scale: 10.0,
            input_reflectance: vec![0],
            clustering_reflectance: vec![0, 1, 2],
            w_xyz: 0.2,
            augment: false,
            primitives: PrimitiveConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.primitives.validate()?;
        if self.m_last > self.m_first {
            return Err(Error::Config(format!("m_last {} exceeds m_first {}", self.m_last, self.m_first)));
        }
        if self.refresh_interval == 0 || self.batch_size == 0 {
            return Err(Error::Config("refresh_interval and batch_size must be positive".into()));
        }
        if !(self.voxel_size > 0.0 && self.coord_scale > 0.0 && self.lr0 > 0.0) {
            return Err(Error::Config("voxel_size, coord_scale and lr0 must be positive".into()));
        }
        for &c in self.input_reflectance.iter().chain(&self.clustering_reflectance) {
            if c >= CHANNELS {
                return Err(Error::Config(format!("reflectance channel {c} out of range")));
            }
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.e_pretrain + self.e_grow
    }

    /// Number of growth events `T`.
    pub fn growth_events(&self) -> usize {
        self.e_grow / self.refresh_interval
    }

    /// `lr0 · (1 − epoch/total)^power`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let total = self.total_epochs().max(1) as f64;
        self.lr0 * (1.0 - epoch as f64 / total).max(0.0).powf(self.poly_power)
    }

    /// Superpoint targets of the growth events, `M¹ − j(M¹ − M^T)/T`.
    pub fn growth_targets(&self) -> Vec<usize> {
        let t = self.growth_events();
        (1..=t)
            .map(|j| {
                let m = self.m_first as f64 - j as f64 * (self.m_first - self.m_last) as f64 / t as f64;
                m.round() as usize
            })
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        3 + self.input_reflectance.len()
    }
}

/// One tile ready for training: geometry, conditioned reflectance, initial
/// superpoints and the voxel graph.
#[derive(Debug, Clone)]
pub struct TrainingTile {
    pub tile: Tile,
    pub geom: GeomFeatures,
    pub initial: SuperpointPartition,
    pub voxels: VoxelInput<f32>,
}

/// Per-point network inputs: scaled xyz plus the selected reflectance.
pub fn network_inputs(points: &[[f64; 3]], tile: &Tile, cfg: &TrainConfig) -> Array2<f64> {
    let cols = cfg.input_dim();
    Array2::from_shape_fn((points.len(), cols), |(i, j)| {
        if j < 3 {
            points[i][j] / cfg.coord_scale
        } else {
            tile.reflectance[cfg.input_reflectance[j - 3]][i] as f64
        }
    })
}

impl TrainingTile {
    /// Requires superpoint ids on the tile and no missing reflectance in the
    /// channels the configuration reads.
    pub fn new(tile: Tile, geom: GeomFeatures, cfg: &TrainConfig) -> Result<Self> {
        if geom.len() != tile.len() {
            return Err(Error::DimensionMismatch {
                expected: tile.len(),
                found: geom.len(),
            });
        }
        let ids = tile
            .superpoint_ids
            .clone()
            .ok_or_else(|| Error::InvalidTile(format!("tile {} has no superpoints", tile.tile_id)))?;
        for &c in cfg.input_reflectance.iter().chain(&cfg.clustering_reflectance) {
            if tile.reflectance[c].iter().any(|&v| is_missing(v)) {
                return Err(Error::InvalidTile(format!(
                    "tile {} channel {} still has missing values",
                    tile.tile_id,
                    c + 1
                )));
            }
        }
        let initial = SuperpointPartition::from_ids(ids, &tile.points)?;
        let inputs = network_inputs(&tile.points, &tile, cfg);
        let voxels = voxelize(&tile.points, &inputs, cfg.voxel_size);
        Ok(TrainingTile {
            tile,
            geom,
            initial,
            voxels,
        })
    }

    pub fn geom_matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.geom.len(), GEOM_DIM), |(i, j)| self.geom.values[i][j])
    }

    pub fn reflectance_matrix(&self, channels: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((self.tile.len(), channels.len()), |(i, j)| {
            self.tile.reflectance[channels[j]][i] as f64
        })
    }

    /// Pooled geometric and reflectance blocks for a partition.
    pub fn pooled_handcrafted(&self, partition: &SuperpointPartition, channels: &[usize]) -> Result<(Array2<f64>, Array2<f64>)> {
        Ok((
            pool_superpoint_features(self.geom_matrix().view(), partition)?,
            pool_superpoint_features(self.reflectance_matrix(channels).view(), partition)?,
        ))
    }
}

/// Decorrelated child seed for a labeled purpose.
pub(crate) fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
