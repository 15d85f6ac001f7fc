use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::extractor::{cosine_cross_entropy, FeatureExtractor, LabelHistogram, VoxelMlp, HIDDEN};
use super::voxel::{voxelize, VoxelInput};
use super::{derive_seed, network_inputs, TrainConfig, TrainingTile};
use crate::binio::{read_file, write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::primitives::{augment_features, fit_primitives, inherit_labels, normalized_neural_centroids, kmeans, PrimitiveModel};
use crate::superpoint::SuperpointPartition;

pub const CHECKPOINT_FILE: &str = "checkpoint.mspt";
pub const LOG_FILE: &str = "train_log.jsonl";
const CHECKPOINT_MAGIC: &[u8; 4] = b"MSPT";
const CHECKPOINT_VERSION: u32 = 1;

const TAG_FIT: u64 = 1;
const TAG_SHUFFLE: u64 = 2;
const TAG_GROW: u64 = 3;
const TAG_AUGMENT: u64 = 4;
const TAG_INIT: u64 = 5;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(rename = "M_current")]
    pub m_current: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where checkpoints and the JSON log go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    /// Continue from the checkpoint in `out_dir` if one exists.
    pub resume: bool,
}

/// Training state at a refresh boundary.
#[derive(Debug, Clone)]
pub struct Checkpoint<E> {
    /// First epoch still to be trained.
    pub epoch: usize,
    pub extractor: E,
    pub model: PrimitiveModel,
    pub partitions: Vec<SuperpointPartition>,
    /// Primitive of every superpoint, per tile.
    pub superpoint_labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<E> {
    pub extractor: E,
    pub model: PrimitiveModel,
    pub partitions: Vec<SuperpointPartition>,
    pub log: Vec<EpochLog>,
}

fn write_checkpoint<E: FeatureExtractor>(ck: &Checkpoint<E>, cfg: &TrainConfig, path: &Path) -> Result<()> {
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.str(&serde_json::to_string(cfg)?);
    w.u64(ck.epoch as u64);
    ck.extractor.write_params(&mut w);
    ck.model.write(&mut w);
    w.u64(ck.partitions.len() as u64);
    for (p, l) in ck.partitions.iter().zip(&ck.superpoint_labels) {
        w.u32s(p.ids());
        w.u32s(&l.iter().map(|&x| x as u32).collect::<Vec<_>>());
    }
    write_atomic(path, &w.into_inner())
}

fn read_header(r: &mut ByteReader<'_>) -> Result<TrainConfig> {
    r.magic(CHECKPOINT_MAGIC)?;
    let at = r.offset();
    let v = r.u32()?;
    if v != CHECKPOINT_VERSION {
        return Err(Error::parse(at, format!("unsupported checkpoint version {v}")));
    }
    Ok(serde_json::from_str(&r.str()?)?)
}

/// Training configuration stored in a checkpoint, without loading the rest.
pub fn checkpoint_config(path: &Path) -> Result<TrainConfig> {
    read_header(&mut ByteReader::new(&read_file(path)?))
}

/// Extractor and primitive model of a checkpoint, enough for prediction on
/// any tiles. Also returns the stored config and epoch.
pub fn load_trained(path: &Path) -> Result<(TrainConfig, usize, VoxelMlp<f32>, PrimitiveModel)> {
    let buf = read_file(path)?;
    let mut r = ByteReader::new(&buf);
    let cfg = read_header(&mut r)?;
    let epoch = r.u64()? as usize;
    let mut extractor = new_extractor(&cfg);
    extractor.read_params(&mut r)?;
    let model = PrimitiveModel::read(&mut r)?;
    Ok((cfg, epoch, extractor, model))
}

/// Reads a checkpoint written by [`run_training`]. Partitions are rebuilt
/// against `tiles`, which must be the tiles it was trained on.
pub fn load_checkpoint(path: &Path, tiles: &[TrainingTile]) -> Result<(TrainConfig, Checkpoint<VoxelMlp<f32>>)> {
    let buf = read_file(path)?;
    let mut r = ByteReader::new(&buf);
    let cfg = read_header(&mut r)?;
    let epoch = r.u64()? as usize;
    let mut extractor = new_extractor(&cfg);
    extractor.read_params(&mut r)?;
    let model = PrimitiveModel::read(&mut r)?;
    let at = r.offset();
    let n = r.u64()? as usize;
    if n != tiles.len() {
        return Err(Error::parse(at, format!("checkpoint has {n} tiles, {} given", tiles.len())));
    }
    let mut partitions = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for t in tiles {
        let ids = r.u32s()?;
        partitions.push(SuperpointPartition::from_ids(ids, &t.tile.points)?);
        labels.push(r.u32s()?.into_iter().map(|x| x as usize).collect());
    }
    r.finish()?;
    Ok((
        cfg,
        Checkpoint {
            epoch,
            extractor,
            model,
            partitions,
            superpoint_labels: labels,
        },
    ))
}

/// The reference extractor for a configuration.
pub fn new_extractor(cfg: &TrainConfig) -> VoxelMlp<f32> {
    VoxelMlp::new(
        [cfg.input_dim(), HIDDEN[0], HIDDEN[1], cfg.primitives.neural_dim],
        cfg.momentum,
        derive_seed(cfg.seed, TAG_INIT, 0),
    )
}

/// Mean learned feature per superpoint, `M × K`.
fn pooled_neural(voxel_feats: ArrayView2<'_, f32>, vox: &VoxelInput<f32>, partition: &SuperpointPartition) -> Array2<f64> {
    let k = voxel_feats.ncols();
    let mut out = Array2::<f64>::zeros((partition.count(), k));
    for (i, &v) in vox.point_voxel.iter().enumerate() {
        let mut row = out.row_mut(partition.id(i));
        for (a, &b) in row.iter_mut().zip(voxel_feats.row(v as usize)) {
            *a += b as f64;
        }
    }
    for (mut row, &n) in out.outer_iter_mut().zip(partition.sizes()) {
        row /= n as f64;
    }
    out
}

/// Augmented superpoint rows of one tile at handcrafted weight `w_coef`.
fn tile_rows(
    t: &TrainingTile,
    voxel_feats: ArrayView2<'_, f32>,
    partition: &SuperpointPartition,
    w_coef: f64,
    cfg: &TrainConfig,
) -> Result<Array2<f64>> {
    let neural = pooled_neural(voxel_feats, &t.voxels, partition);
    let (geom, refl) = t.pooled_handcrafted(partition, &cfg.clustering_reflectance)?;
    augment_features(neural.view(), geom.view(), refl.view(), w_coef, &cfg.primitives)
}

/// Merges a tile's superpoints into `target` by k-means over
/// `f̄ ⊕ w_xyz·centroid ⊕ handcrafted`. Tiles already at or below the target
/// are returned unchanged.
pub fn grow_superpoints(
    t: &TrainingTile,
    partition: &SuperpointPartition,
    voxel_feats: ArrayView2<'_, f32>,
    w_coef: f64,
    target: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<SuperpointPartition> {
    if partition.count() <= target || target == 0 {
        return Ok(partition.clone());
    }
    let rows = tile_rows(t, voxel_feats, partition, w_coef, cfg)?;
    let k = cfg.primitives.neural_dim;
    let xyz = Array2::from_shape_fn((partition.count(), 3), |(s, a)| cfg.w_xyz * partition.centroid(s)[a]);
    let x = concatenate![Axis(1), rows.slice(s![.., ..k]), xyz, rows.slice(s![.., k..])];
    let km = kmeans(x.view(), target, seed, cfg.primitives.kmeans_max_iter, cfg.primitives.kmeans_tol)?;
    let map: Vec<u32> = km.assignments.iter().map(|&c| c as u32).collect();
    partition.coarsen(&map, &t.tile.points)
}

struct Trainer<'a, E> {
    tiles: &'a [TrainingTile],
    cfg: &'a TrainConfig,
    extractor: E,
}

impl<E: FeatureExtractor> Trainer<'_, E> {
    fn voxel_features(&self) -> Vec<Array2<f32>> {
        self.tiles.iter().map(|t| self.extractor.forward(&t.voxels)).collect()
    }

    fn refit(
        &self,
        feats: &[Array2<f32>],
        partitions: &[SuperpointPartition],
        epoch: usize,
    ) -> Result<(PrimitiveModel, Vec<Vec<usize>>)> {
        let w = self.cfg.primitives.coefficient(epoch);
        let blocks: Vec<Array2<f64>> = self
            .tiles
            .iter()
            .zip(feats)
            .zip(partitions)
            .map(|((t, f), p)| tile_rows(t, f.view(), p, w, self.cfg))
            .collect::<Result<_>>()?;
        let views: Vec<ArrayView2<'_, f64>> = blocks.iter().map(|b| b.view()).collect();
        let rows = concatenate(Axis(0), &views).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let (model, labels) = fit_primitives(
            rows.view(),
            self.cfg.primitives.neural_dim,
            w,
            &self.cfg.primitives,
            derive_seed(self.cfg.seed, TAG_FIT, epoch as u64),
        )?;
        let mut split = Vec::with_capacity(blocks.len());
        let mut at = 0;
        for b in &blocks {
            split.push(labels[at..at + b.nrows()].to_vec());
            at += b.nrows();
        }
        Ok((model, split))
    }

    /// Voxel input and histogram of a tile for one epoch, augmented if enabled.
    fn epoch_input(&self, ti: usize, labels: &[u32], epoch: usize) -> (VoxelInput<f32>, LabelHistogram) {
        let t = &self.tiles[ti];
        let vox = if self.cfg.augment {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, TAG_AUGMENT, (epoch * self.tiles.len() + ti) as u64));
            let theta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let scale: f64 = rng.gen_range(0.9..1.1);
            let (sn, cs) = theta.sin_cos();
            let pts: Vec<[f64; 3]> = t
                .tile
                .points
                .iter()
                .map(|p| {
                    let j = [rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005), rng.gen_range(-0.005..0.005)];
                    [
                        scale * (cs * p[0] - sn * p[1]) + j[0],
                        scale * (sn * p[0] + cs * p[1]) + j[1],
                        scale * p[2] + j[2],
                    ]
                })
                .collect();
            let inputs = network_inputs(&pts, &t.tile, self.cfg);
            voxelize(&pts, &inputs, self.cfg.voxel_size)
        } else {
            t.voxels.clone()
        };
        let hist = LabelHistogram::new(&vox.point_voxel, labels, vox.voxel_count());
        (vox, hist)
    }

    fn train_epoch(&mut self, model: &PrimitiveModel, point_labels: &[Vec<u32>], epoch: usize) -> Result<EpochLog> {
        let lr = self.cfg.learning_rate(epoch);
        let centroids = normalized_neural_centroids(model);
        let mut order: Vec<usize> = (0..self.tiles.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.seed, TAG_SHUFFLE, epoch as u64)));
        let mut total_loss = 0.0;
        let mut total_points = 0usize;
        for batch in order.chunks(self.cfg.batch_size) {
            let n_batch: usize = batch.iter().map(|&i| self.tiles[i].tile.len()).sum();
            let scale = 1.0 / n_batch as f32;
            for &ti in batch {
                let (vox, hist) = self.epoch_input(ti, &point_labels[ti], epoch);
                let loss = self.extractor.forward_backward(&vox, &mut |out| {
                    cosine_cross_entropy(out, centroids.view(), &hist, &vox.counts, scale)
                });
                total_loss += loss * n_batch as f64;
            }
            self.extractor.update(lr as f32);
            total_points += n_batch;
        }
        let loss = total_loss / total_points.max(1) as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("loss {loss} at lr {lr}"),
            });
        }
        Ok(EpochLog {
            epoch,
            loss,
            lr,
            m_current: 0,
        })
    }
}

fn point_labels(partitions: &[SuperpointPartition], sp_labels: &[Vec<usize>]) -> Vec<Vec<u32>> {
    partitions.iter().zip(sp_labels).map(|(p, l)| inherit_labels(p, l)).collect()
}

/// Trains the reference extractor.
pub fn run_training(tiles: &[TrainingTile], cfg: &TrainConfig, opts: &RunOptions) -> Result<TrainOutcome<VoxelMlp<f32>>> {
    let mut start = None;
    if opts.resume {
        if let Some(dir) = &opts.out_dir {
            let path = dir.join(CHECKPOINT_FILE);
            if path.exists() {
                let (saved, ck) = load_checkpoint(&path, tiles)?;
                if &saved != cfg {
                    return Err(Error::Config("checkpoint was written with a different training config".into()));
                }
                log::info!("resuming at epoch {}", ck.epoch);
                start = Some(ck);
            }
        }
    }
    match start {
        Some(ck) => run_training_with(tiles, cfg, opts, ck.extractor.clone(), Some(ck)),
        None => run_training_with(tiles, cfg, opts, new_extractor(cfg), None),
    }
}

/// Training loop over any extractor, optionally continuing from `resume`.
pub fn run_training_with<E: FeatureExtractor + Clone>(
    tiles: &[TrainingTile],
    cfg: &TrainConfig,
    opts: &RunOptions,
    extractor: E,
    resume: Option<Checkpoint<E>>,
) -> Result<TrainOutcome<E>> {
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(Error::InvalidArgument("no training tiles".into()));
    }
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let total = cfg.total_epochs();
    let targets = cfg.growth_targets();
    let mut tr = Trainer { tiles, cfg, extractor };
    let mut log_lines = Vec::new();
    let (mut epoch, mut partitions, mut model, mut sp_labels, mut refreshed) = match resume {
        Some(ck) => (ck.epoch, ck.partitions, Some(ck.model), ck.superpoint_labels, true),
        None => (0, tiles.iter().map(|t| t.initial.clone()).collect(), None, Vec::new(), false),
    };
    let log_path = opts.out_dir.as_ref().map(|d| d.join(LOG_FILE));
    if let Some(p) = &log_path {
        if refreshed {
            // epochs at or after the checkpoint are about to be redone
            if let Ok(text) = std::fs::read_to_string(p) {
                let kept: String = text
                    .lines()
                    .filter(|l| serde_json::from_str::<EpochLog>(l).is_ok_and(|e| e.epoch < epoch))
                    .map(|l| format!("{l}\n"))
                    .collect();
                std::fs::write(p, kept).map_err(|e| Error::io(p, e))?;
            }
        } else {
            // a fresh run starts a fresh log
            let _ = std::fs::remove_file(p);
        }
    }

    loop {
        let at_refresh = epoch % cfg.refresh_interval == 0 || epoch == total;
        if at_refresh && !refreshed {
            let feats = tr.voxel_features();
            if epoch >= cfg.e_pretrain && epoch < total {
                let j = (epoch - cfg.e_pretrain) / cfg.refresh_interval;
                if let Some(&target) = targets.get(j) {
                    let w = cfg.primitives.coefficient(epoch);
                    partitions = tiles
                        .iter()
                        .zip(&partitions)
                        .zip(&feats)
                        .enumerate()
                        .map(|(ti, ((t, p), f))| {
                            grow_superpoints(t, p, f.view(), w, target, cfg, derive_seed(cfg.seed, TAG_GROW, (epoch * tiles.len() + ti) as u64))
                        })
                        .collect::<Result<_>>()?;
                    log::info!(
                        "epoch {epoch}: growth event {} to {target}, {} superpoints",
                        j + 1,
                        partitions.iter().map(SuperpointPartition::count).sum::<usize>()
                    );
                }
            }
            let (m, l) = tr.refit(&feats, &partitions, epoch)?;
            model = Some(m);
            sp_labels = l;
            if let Some(dir) = &opts.out_dir {
                let ck = Checkpoint {
                    epoch,
                    extractor: tr.extractor.clone(),
                    model: model.clone().unwrap(),
                    partitions: partitions.clone(),
                    superpoint_labels: sp_labels.clone(),
                };
                write_checkpoint(&ck, cfg, &dir.join(CHECKPOINT_FILE))?;
            }
        }
        refreshed = false;
        if epoch >= total {
            break;
        }
        let labels = point_labels(&partitions, &sp_labels);
        let mut entry = tr.train_epoch(model.as_ref().unwrap(), &labels, epoch)?;
        entry.m_current = partitions.iter().map(SuperpointPartition::count).sum();
        log::info!("epoch {}: loss {:.5} lr {:.5} M {}", entry.epoch, entry.loss, entry.lr, entry.m_current);
        if let Some(p) = &log_path {
            let mut f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?;
            writeln!(f, "{}", serde_json::to_string(&entry)?).map_err(|e| Error::io(p, e))?;
        }
        log_lines.push(entry);
        epoch += 1;
    }
    Ok(TrainOutcome {
        extractor: tr.extractor,
        model: model.expect("at least one refit"),
        partitions,
        log: log_lines,
    })
}
