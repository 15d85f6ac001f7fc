//! Multispectral tile model and file formats.
//!
//! A [`Tile`] is a columnar point cloud: coordinates in meters, three
//! reflectance channels where `NaN` marks a missing return, and optional
//! per-point labels and superpoint ids. Tiles are immutable once loaded and
//! may be shared read-only across threads.

mod csv_import;
mod dataset;
mod mspc;
mod ply;

pub use csv_import::load_csv;
pub use dataset::{Dataset, DatasetEntry, Split, TileOrigin};
pub use mspc::{load_tile, read_tile, save_tile, write_tile, MSPC_MAGIC, MSPC_VERSION};
pub use ply::{export_ply, write_ply, Coloring, PlyEncoding};

use crate::error::{Error, Result};

/// Class code for foliage points.
pub const FOLIAGE: u8 = 0;
/// Class code for wood points (stems and branches).
pub const WOOD: u8 = 1;
/// Class code for points without ground truth.
pub const UNLABELED: u8 = 255;

/// Number of reflectance channels carried by every tile.
pub const CHANNELS: usize = 3;

/// Missing-reflectance sentinel.
pub const MISSING: f32 = f32::NAN;

#[inline]
pub fn is_missing(v: f32) -> bool {
    v.is_nan()
}

/// One cylindrical multispectral point cloud.
#[derive(Debug, Clone)]
pub struct Tile {
    pub tile_id: String,
    pub center_xy: [f64; 2],
    pub radius: f64,
    pub points: Vec<[f64; 3]>,
    pub reflectance: [Vec<f32>; CHANNELS],
    pub labels: Option<Vec<u8>>,
    pub superpoint_ids: Option<Vec<u32>>,
}

impl Tile {
    /// Builds a tile and checks its structural invariants.
    pub fn new(
        tile_id: impl Into<String>,
        center_xy: [f64; 2],
        radius: f64,
        points: Vec<[f64; 3]>,
        reflectance: [Vec<f32>; CHANNELS],
    ) -> Result<Self> {
        let tile = Tile {
            tile_id: tile_id.into(),
            center_xy,
            radius,
            points,
            reflectance,
            labels: None,
            superpoint_ids: None,
        };
        tile.validate()?;
        Ok(tile)
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        self.labels = Some(labels);
        self.validate()?;
        Ok(self)
    }

    pub fn with_superpoints(mut self, ids: Vec<u32>) -> Result<Self> {
        self.superpoint_ids = Some(ids);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks array lengths, label codes and coordinate finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        if n == 0 {
            return Err(Error::InvalidTile(format!("tile {} has no points", self.tile_id)));
        }
        for (c, ch) in self.reflectance.iter().enumerate() {
            if ch.len() != n {
                return Err(Error::InvalidTile(format!(
                    "reflectance channel {} has {} values for {} points",
                    c + 1,
                    ch.len(),
                    n
                )));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::InvalidTile(format!(
                    "{} labels for {} points",
                    labels.len(),
                    n
                )));
            }
            if let Some(bad) = labels
                .iter()
                .find(|&&l| l != FOLIAGE && l != WOOD && l != UNLABELED)
            {
                return Err(Error::InvalidTile(format!("label code {bad} not in {{0, 1, 255}}")));
            }
        }
        if let Some(ids) = &self.superpoint_ids {
            if ids.len() != n {
                return Err(Error::InvalidTile(format!(
                    "{} superpoint ids for {} points",
                    ids.len(),
                    n
                )));
            }
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTile("non-finite coordinate".into()));
        }
        if !(self.radius.is_finite() && self.radius >= 0.0) {
            return Err(Error::InvalidTile(format!("radius {} invalid", self.radius)));
        }
        Ok(())
    }

    /// Checks that every point lies within `radius` of `center_xy` in the xy-plane.
    pub fn check_within_radius(&self, tolerance: f64) -> bool {
        let [cx, cy] = self.center_xy;
        self.points.iter().all(|p| {
            let dx = p[0] - cx;
            let dy = p[1] - cy;
            (dx * dx + dy * dy).sqrt() <= self.radius + tolerance
        })
    }

    /// Returns a new tile holding the selected points, in the given order.
    pub fn subset(&self, indices: &[usize], tile_id: impl Into<String>) -> Tile {
        let pick_f32 = |v: &Vec<f32>| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Tile {
            tile_id: tile_id.into(),
            center_xy: self.center_xy,
            radius: self.radius,
            points: indices.iter().map(|&i| self.points[i]).collect(),
            reflectance: [
                pick_f32(&self.reflectance[0]),
                pick_f32(&self.reflectance[1]),
                pick_f32(&self.reflectance[2]),
            ],
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            superpoint_ids: self
                .superpoint_ids
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }
}

/// Bit-exact equality: floats compare by their bit patterns, so NaN
/// missingness must match position by position.
impl PartialEq for Tile {
    fn eq(&self, other: &Self) -> bool {
        fn f64_bits(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        fn f32_bits(a: &[f32], b: &[f32]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.tile_id == other.tile_id
            && f64_bits(&self.center_xy, &other.center_xy)
            && self.radius.to_bits() == other.radius.to_bits()
            && self.points.len() == other.points.len()
            && self
                .points
                .iter()
                .zip(&other.points)
                .all(|(a, b)| f64_bits(a, b))
            && (0..CHANNELS).all(|c| f32_bits(&self.reflectance[c], &other.reflectance[c]))
            && self.labels == other.labels
            && self.superpoint_ids == other.superpoint_ids
    }
}
