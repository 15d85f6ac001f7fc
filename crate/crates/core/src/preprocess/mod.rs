//! Plot-to-tile conversion and per-tile input conditioning.

mod reflectance;
mod tiling;

pub use reflectance::{normalize_reflectance, quantile_sorted, NormVariant, NormWarning};
pub use tiling::{
    extract_tiles, hexagonal_centers, lattice_spacing, nearest_tile_owner, Bounds, TilingConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcdata::{is_missing, Dataset, Tile, CHANNELS};
use crate::spatial::dist2;
use crate::superpoint::SuperpointPartition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub tiling: TilingConfig,
    pub reflectance_norm_variant: NormVariant,
    /// Normalize reflectance before filling missing values instead of after.
    pub normalize_before_impute: bool,
}

/// Translation removed by [`center_tile`]: xy means and the z minimum.
pub fn centering_offset(tile: &Tile) -> [f64; 3] {
    let n = tile.len() as f64;
    let mx = tile.points.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = tile.points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mz = tile.points.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
    [mx, my, mz]
}

/// Centers x and y on their means and shifts z so its minimum is zero.
pub fn center_tile(tile: &Tile) -> Tile {
    let off = centering_offset(tile);
    let mut out = tile.clone();
    for p in &mut out.points {
        p[0] -= off[0];
        p[1] -= off[1];
        p[2] -= off[2];
    }
    out
}

/// Centers every tile, accumulating the removed offset into its origin.
pub fn center_dataset(ds: &mut Dataset) {
    for e in &mut ds.entries {
        let off = centering_offset(&e.tile);
        e.tile = center_tile(&e.tile);
        if let Some(o) = &mut e.origin {
            for a in 0..3 {
                o.offset[a] += off[a];
            }
        }
    }
}

/// Fills missing reflectance with the per-superpoint channel mean.
///
/// A superpoint with no observed value on a channel borrows the mean of the
/// nearest superpoint (by centroid distance) that has one.
pub fn impute_missing_reflectance(tile: &Tile, partition: &SuperpointPartition) -> Result<Tile> {
    if partition.len() != tile.len() {
        return Err(Error::DimensionMismatch {
            expected: tile.len(),
            found: partition.len(),
        });
    }
    let m = partition.count();
    let mut out = tile.clone();
    for c in 0..CHANNELS {
        let ch = &tile.reflectance[c];
        if !ch.iter().any(|v| is_missing(*v)) {
            continue;
        }
        let mut sum = vec![0.0f64; m];
        let mut cnt = vec![0usize; m];
        for (i, &v) in ch.iter().enumerate() {
            if !is_missing(v) {
                let s = partition.id(i);
                sum[s] += v as f64;
                cnt[s] += 1;
            }
        }
        let donors: Vec<usize> = (0..m).filter(|&s| cnt[s] > 0).collect();
        if donors.is_empty() {
            return Err(Error::EmptyChannel { channel: c + 1 });
        }
        let mut fill = vec![f64::NAN; m];
        for s in 0..m {
            fill[s] = if cnt[s] > 0 {
                sum[s] / cnt[s] as f64
            } else {
                let cs = partition.centroid(s);
                let best = donors
                    .iter()
                    .copied()
                    .min_by(|&a, &b| {
                        dist2(&cs, &partition.centroid(a))
                            .total_cmp(&dist2(&cs, &partition.centroid(b)))
                            .then(a.cmp(&b))
                    })
                    .unwrap();
                sum[best] / cnt[best] as f64
            };
        }
        for (i, v) in out.reflectance[c].iter_mut().enumerate() {
            if is_missing(*v) {
                *v = fill[partition.id(i)] as f32;
            }
        }
    }
    Ok(out)
}

/// Imputes and normalizes all three channels in the configured order.
pub fn condition_reflectance(
    tile: &Tile,
    partition: &SuperpointPartition,
    cfg: &PreprocessConfig,
) -> Result<Tile> {
    let normalize = |t: &Tile| -> Tile {
        let mut out = t.clone();
        for c in 0..CHANNELS {
            let (v, w) = normalize_reflectance(&t.reflectance[c], cfg.reflectance_norm_variant);
            if let Some(w) = w {
                log::warn!("tile {} channel {}: {:?}", t.tile_id, c + 1, w);
            }
            out.reflectance[c] = v;
        }
        out
    };
    if cfg.normalize_before_impute {
        impute_missing_reflectance(&normalize(tile), partition)
    } else {
        Ok(normalize(&impute_missing_reflectance(tile, partition)?))
    }
}
