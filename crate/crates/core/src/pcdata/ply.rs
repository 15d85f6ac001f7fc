use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{is_missing, Tile, FOLIAGE, WOOD};
use crate::error::{Error, Result};

/// Source of per-vertex colors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coloring {
    /// wood red, foliage green, unlabeled gray
    Labels,
    /// a deterministic color per superpoint id
    Superpoints,
    /// channels 1/2/3 min-max scaled onto R/G/B
    Reflectance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PlyEncoding {
    Ascii,
    #[default]
    BinaryLittleEndian,
}

const GRAY: [u8; 3] = [128, 128, 128];

pub fn export_ply(
    tile: &Tile,
    coloring: Coloring,
    encoding: PlyEncoding,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let colors = vertex_colors(tile, coloring)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ply(tile, &colors, encoding, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_ply<W: Write>(
    tile: &Tile,
    colors: &[[u8; 3]],
    encoding: PlyEncoding,
    w: &mut W,
) -> std::io::Result<()> {
    let format = match encoding {
        PlyEncoding::Ascii => "ascii",
        PlyEncoding::BinaryLittleEndian => "binary_little_endian",
    };
    write!(
        w,
        "ply\nformat {format} 1.0\ncomment tile {}\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        tile.tile_id,
        tile.len()
    )?;
    for (p, c) in tile.points.iter().zip(colors) {
        match encoding {
            PlyEncoding::Ascii => writeln!(w, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2])?,
            PlyEncoding::BinaryLittleEndian => {
                for v in p {
                    w.write_all(&v.to_le_bytes())?;
                }
                w.write_all(c)?;
            }
        }
    }
    Ok(())
}

/// Per-vertex RGB for the requested coloring.
pub fn vertex_colors(tile: &Tile, coloring: Coloring) -> Result<Vec<[u8; 3]>> {
    match coloring {
        Coloring::Labels => {
            let labels = tile
                .labels
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("tile has no labels to color by".into()))?;
            Ok(labels
                .iter()
                .map(|&l| match l {
                    WOOD => [255, 0, 0],
                    FOLIAGE => [0, 255, 0],
                    _ => GRAY,
                })
                .collect())
        }
        Coloring::Superpoints => {
            let ids = tile
                .superpoint_ids
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("tile has no superpoint ids to color by".into()))?;
            Ok(ids.iter().map(|&id| id_color(id)).collect())
        }
        Coloring::Reflectance => {
            let mut out = vec![GRAY; tile.len()];
            for (c, ch) in tile.reflectance.iter().enumerate() {
                let (lo, hi) = ch
                    .iter()
                    .filter(|v| !is_missing(**v))
                    .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                for (rgb, &v) in out.iter_mut().zip(ch) {
                    rgb[c] = if is_missing(v) || hi <= lo {
                        128
                    } else {
                        (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8
                    };
                }
            }
            Ok(out)
        }
    }
}

/// splitmix64 finalizer; distinct ids map to well spread colors.
fn id_color(id: u32) -> [u8; 3] {
    let mut z = (id as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    [z as u8, (z >> 8) as u8, (z >> 16) as u8]
}
