use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_tile, save_tile, Tile};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
    Unlabeled,
}

/// Where a tile came from in its source plot: the translation removed by
/// centering and the plot index of every tile point.
#[derive(Debug, Clone, PartialEq)]
pub struct TileOrigin {
    pub offset: [f64; 3],
    pub source_indices: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub tile: Tile,
    pub split: Split,
    pub origin: Option<TileOrigin>,
}

/// An ordered collection of tiles with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    tiles: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    tile_id: String,
    file: String,
    split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    index_file: Option<String>,
}

pub const MANIFEST_FILE: &str = "dataset.json";

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tile: Tile, split: Split, origin: Option<TileOrigin>) -> Result<()> {
        if self.entries.iter().any(|e| e.tile.tile_id == tile.tile_id) {
            return Err(Error::InvalidArgument(format!("duplicate tile id {}", tile.tile_id)));
        }
        self.entries.push(DatasetEntry { tile, split, origin });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tiles(&self) -> impl Iterator<Item = &Tile> {
        self.entries.iter().map(|e| &e.tile)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.entries {
            if !seen.insert(e.tile.tile_id.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate tile id {}", e.tile.tile_id)));
            }
            e.tile.validate()?;
            if let Some(o) = &e.origin {
                if o.source_indices.len() != e.tile.len() {
                    return Err(Error::InvalidTile(format!(
                        "tile {} origin has {} indices for {} points",
                        e.tile.tile_id,
                        o.source_indices.len(),
                        e.tile.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Path of a tile file inside a dataset directory.
    pub fn tile_path(dir: &Path, tile_id: &str) -> PathBuf {
        dir.join(format!("{tile_id}.mspc"))
    }

    /// Writes every tile as MSPC plus a `dataset.json` manifest.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.validate()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Manifest { tiles: Vec::new() };
        for e in &self.entries {
            let file = format!("{}.mspc", e.tile.tile_id);
            save_tile(&e.tile, dir.join(&file))?;
            let (offset, index_file) = match &e.origin {
                Some(o) => {
                    let name = format!("{}.idx", e.tile.tile_id);
                    let bytes: Vec<u8> = o.source_indices.iter().flat_map(|i| i.to_le_bytes()).collect();
                    let p = dir.join(&name);
                    fs::write(&p, bytes).map_err(|e| Error::io(p, e))?;
                    (Some(o.offset), Some(name))
                }
                None => (None, None),
            };
            manifest.tiles.push(ManifestEntry {
                tile_id: e.tile.tile_id.clone(),
                file,
                split: e.split,
                offset,
                index_file,
            });
        }
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let mut ds = Dataset::new();
        for m in manifest.tiles {
            let tile = load_tile(dir.join(&m.file))?;
            if tile.tile_id != m.tile_id {
                return Err(Error::InvalidArgument(format!(
                    "manifest names {} but file holds {}",
                    m.tile_id, tile.tile_id
                )));
            }
            let origin = match (m.offset, m.index_file) {
                (Some(offset), Some(name)) => {
                    let p = dir.join(&name);
                    let bytes = fs::read(&p).map_err(|e| Error::io(&p, e))?;
                    if bytes.len() % 4 != 0 {
                        return Err(Error::parse(bytes.len() as u64, "index file length not a multiple of 4"));
                    }
                    let source_indices = bytes
                        .chunks_exact(4)
                        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                        .collect();
                    Some(TileOrigin { offset, source_indices })
                }
                _ => None,
            };
            ds.push(tile, m.split, origin)?;
        }
        ds.validate()?;
        Ok(ds)
    }
}
