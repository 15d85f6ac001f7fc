use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcdata::{Dataset, Split, Tile, TileOrigin};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TilingConfig {
    /// Cylinder radius in meters.
    pub r_c: f64,
    /// Tiles with fewer points are dropped.
    pub min_points_per_tile: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        TilingConfig {
            r_c: 4.2,
            min_points_per_tile: 100,
        }
    }
}

impl TilingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_c > 0.0 && self.r_c.is_finite()) {
            return Err(Error::Config(format!("r_c must be positive, got {}", self.r_c)));
        }
        Ok(())
    }
}

/// Region of the xy-plane to cover.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bounds {
    Rect { min: [f64; 2], max: [f64; 2] },
    Circle { center: [f64; 2], radius: f64 },
}

impl Bounds {
    /// Axis-aligned bounding rectangle of a point set.
    pub fn of_points(points: &[[f64; 3]]) -> Bounds {
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in points {
            for a in 0..2 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        Bounds::Rect { min, max }
    }

    fn min_corner(&self) -> [f64; 2] {
        match *self {
            Bounds::Rect { min, .. } => min,
            Bounds::Circle { center, radius } => [center[0] - radius, center[1] - radius],
        }
    }

    fn max_corner(&self) -> [f64; 2] {
        match *self {
            Bounds::Rect { max, .. } => max,
            Bounds::Circle { center, radius } => [center[0] + radius, center[1] + radius],
        }
    }

    /// Euclidean distance from `p` to the region (0 inside).
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        match *self {
            Bounds::Rect { min, max } => {
                let dx = (min[0] - p[0]).max(0.0).max(p[0] - max[0]);
                let dy = (min[1] - p[1]).max(0.0).max(p[1] - max[1]);
                dx.hypot(dy)
            }
            Bounds::Circle { center, radius } => {
                ((p[0] - center[0]).hypot(p[1] - center[1]) - radius).max(0.0)
            }
        }
    }
}

/// Nearest-neighbor spacing of the covering lattice.
pub fn lattice_spacing(r_c: f64) -> f64 {
    3f64.sqrt() * r_c
}

/// Centers of a hexagonal covering of `bounds` by disks of radius `r_c`.
///
/// Rows run parallel to the x-axis, `1.5 r_c` apart, with every other row
/// shifted by half the spacing; the lattice is anchored at the bounds'
/// minimum corner. Centers farther than `r_c` from the bounds are dropped.
pub fn hexagonal_centers(bounds: &Bounds, r_c: f64) -> Vec<[f64; 2]> {
    let d_c = lattice_spacing(r_c);
    let row_step = 1.5 * r_c;
    let origin = bounds.min_corner();
    let far = bounds.max_corner();
    let row_lo = (-r_c / row_step).floor() as i64 - 1;
    let row_hi = ((far[1] - origin[1] + r_c) / row_step).ceil() as i64 + 1;
    let col_lo = (-r_c / d_c).floor() as i64 - 2;
    let col_hi = ((far[0] - origin[0] + r_c) / d_c).ceil() as i64 + 2;
    let mut centers = Vec::new();
    for row in row_lo..=row_hi {
        let shift = if row.rem_euclid(2) == 1 { 0.5 * d_c } else { 0.0 };
        let y = origin[1] + row as f64 * row_step;
        for col in col_lo..=col_hi {
            let c = [origin[0] + col as f64 * d_c + shift, y];
            if bounds.distance(c) <= r_c {
                centers.push(c);
            }
        }
    }
    centers
}

/// Splits a plot into overlapping cylinders on a hexagonal lattice.
///
/// Points keep their plot coordinates; each tile records the plot index of
/// its points so predictions can be mapped back. Tile ids are
/// `{plot_id}-{k:03}` in lattice order.
pub fn extract_tiles(plot: &Tile, cfg: &TilingConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut ds = Dataset::new();
    if plot.is_empty() {
        return Ok(ds);
    }
    let centers = hexagonal_centers(&Bounds::of_points(&plot.points), cfg.r_c);
    let r2 = cfg.r_c * cfg.r_c;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for (i, p) in plot.points.iter().enumerate() {
        for (c, m) in centers.iter().zip(members.iter_mut()) {
            let dx = p[0] - c[0];
            let dy = p[1] - c[1];
            if dx * dx + dy * dy <= r2 {
                m.push(i);
            }
        }
    }
    let mut k = 0;
    for (c, idx) in centers.iter().zip(members) {
        if idx.is_empty() || idx.len() < cfg.min_points_per_tile {
            continue;
        }
        let mut tile = plot.subset(&idx, format!("{}-{k:03}", plot.tile_id));
        tile.center_xy = *c;
        tile.radius = cfg.r_c;
        tile.superpoint_ids = None;
        let origin = TileOrigin {
            offset: [0.0; 3],
            source_indices: idx.iter().map(|&i| i as u32).collect(),
        };
        ds.push(tile, Split::Train, Some(origin))?;
        k += 1;
    }
    Ok(ds)
}

/// For every plot point, the dataset entry whose tile center is nearest in xy
/// among the tiles containing it. `None` for points outside every tile.
pub fn nearest_tile_owner(ds: &Dataset, plot_len: usize) -> Vec<Option<(usize, usize)>> {
    let mut best: Vec<Option<(f64, usize, usize)>> = vec![None; plot_len];
    for (e_idx, e) in ds.entries.iter().enumerate() {
        let Some(origin) = &e.origin else { continue };
        let [cx, cy] = e.tile.center_xy;
        for (local, &src) in origin.source_indices.iter().enumerate() {
            let p = e.tile.points[local];
            // tile coordinates may be centered; undo the offset first
            let x = p[0] + origin.offset[0];
            let y = p[1] + origin.offset[1];
            let d = (x - cx).powi(2) + (y - cy).powi(2);
            let slot = &mut best[src as usize];
            if slot.is_none_or(|(bd, _, _)| d < bd) {
                *slot = Some((d, e_idx, local));
            }
        }
    }
    best.into_iter().map(|b| b.map(|(_, e, l)| (e, l))).collect()
}
