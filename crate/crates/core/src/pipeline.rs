//! Whole-run configuration and the per-tile preparation chain shared by
//! the command line and the examples.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geomfeat::{multiscale_features, GeomFeatures, NeighborhoodConfig};
use crate::pcdata::{Dataset, Tile};
use crate::preprocess::{center_dataset, condition_reflectance, PreprocessConfig};
use crate::superpoint::{build_superpoints, SuperpointConfig};
use crate::trainer::{PredictConfig, TrainConfig, TrainingTile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub features: NeighborhoodConfig,
    pub superpoints: SuperpointConfig,
    pub train: TrainConfig,
    pub predict: PredictConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Number of ground-truth classes.
    pub classes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { classes: 2 }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.tiling.validate()?;
        self.features.validate()?;
        self.superpoints.cut_pursuit.validate()?;
        if self.eval.classes == 0 {
            return Err(Error::Config("eval.classes must be positive".into()));
        }
        self.train.validate()
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// A tile after features, superpoints and reflectance conditioning.
#[derive(Debug, Clone)]
pub struct PreparedTile {
    pub tile: Tile,
    pub geom: GeomFeatures,
}

/// Features, superpoints and conditioned reflectance for one centered tile.
/// Labels, if present, are carried through untouched.
pub fn prepare_tile(tile: &Tile, cfg: &PipelineConfig) -> Result<PreparedTile> {
    let geom = multiscale_features(&tile.points, &cfg.features)?;
    prepare_with_features(tile, geom, cfg)
}

/// Same as [`prepare_tile`] with precomputed features.
pub fn prepare_with_features(tile: &Tile, geom: GeomFeatures, cfg: &PipelineConfig) -> Result<PreparedTile> {
    let partition = build_superpoints(tile, &geom, &cfg.superpoints)?;
    let conditioned = condition_reflectance(tile, &partition, &cfg.preprocess)?;
    let tile = conditioned.with_superpoints(partition.ids().to_vec())?;
    Ok(PreparedTile { tile, geom })
}

/// Centers a dataset in place and prepares every tile in order.
pub fn prepare_dataset(ds: &mut Dataset, cfg: &PipelineConfig) -> Result<Vec<PreparedTile>> {
    center_dataset(ds);
    ds.entries.iter().map(|e| prepare_tile(&e.tile, cfg)).collect()
}

/// Wraps prepared tiles for the trainer.
pub fn training_tiles(prepared: Vec<PreparedTile>, cfg: &TrainConfig) -> Result<Vec<TrainingTile>> {
    prepared
        .into_iter()
        .map(|p| TrainingTile::new(p.tile, p.geom, cfg))
        .collect()
}
