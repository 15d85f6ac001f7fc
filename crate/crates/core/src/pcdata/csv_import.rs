use std::path::Path;

use super::{Tile, MISSING, UNLABELED};
use crate::error::{Error, Result};

/// Reads `x,y,z,r1,r2,r3[,label]` rows. Empty reflectance cells are missing,
/// an empty label cell becomes [`UNLABELED`]. A header row is detected by a
/// non-numeric first field. The tile's center and radius are derived from the
/// xy bounding circle around the point mean.
pub fn load_csv(path: impl AsRef<Path>, tile_id: &str) -> Result<Tile> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;

    let mut points = Vec::new();
    let mut refl: [Vec<f32>; 3] = Default::default();
    let mut labels = Vec::new();
    let mut has_labels = false;

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let offset = e.position().map(|p| p.byte()).unwrap_or(0);
            Error::parse(offset, e.to_string())
        })?;
        let offset = record.position().map(|p| p.byte()).unwrap_or(0);
        if row == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() < 6 || record.len() > 7 {
            return Err(Error::parse(offset, format!("expected 6 or 7 fields, found {}", record.len())));
        }
        let num = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|_| Error::parse(offset, format!("field {} is not a number: {:?}", i + 1, &record[i])))
        };
        points.push([num(0)?, num(1)?, num(2)?]);
        for c in 0..3 {
            let cell = &record[3 + c];
            refl[c].push(if cell.is_empty() { MISSING } else { num(3 + c)? as f32 });
        }
        if record.len() == 7 {
            has_labels = true;
            let cell = &record[6];
            labels.push(if cell.is_empty() {
                UNLABELED
            } else {
                cell.parse::<u8>()
                    .map_err(|_| Error::parse(offset, format!("bad label {cell:?}")))?
            });
        } else {
            labels.push(UNLABELED);
        }
    }
    if points.is_empty() {
        return Err(Error::parse(0, "csv contains no points"));
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let radius = points
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let tile = Tile::new(tile_id, [cx, cy], radius, points, refl)?;
    if has_labels {
        tile.with_labels(labels)
    } else {
        Ok(tile)
    }
}
