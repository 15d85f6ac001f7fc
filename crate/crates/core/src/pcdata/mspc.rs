//! MSPC binary tile format.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic      4 bytes  "MSPC"
//! version    u32      1
//! n          u64      point count
//! flags      u32      bit 0: labels present, bit 1: superpoint ids present
//! center_x   f64
//! center_y   f64
//! radius     f64
//! id_len     u32
//! tile_id    id_len bytes of UTF-8
//! x, y, z    n × f64 each
//! refl1..3   n × f32 each (NaN = missing)
//! labels     n × u8   (if flag bit 0)
//! sp_ids     n × u32  (if flag bit 1)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Tile, CHANNELS};
use crate::error::{Error, Result};

pub const MSPC_MAGIC: &[u8; 4] = b"MSPC";
pub const MSPC_VERSION: u32 = 1;

const FLAG_LABELS: u32 = 1;
const FLAG_SUPERPOINTS: u32 = 1 << 1;
const KNOWN_FLAGS: u32 = FLAG_LABELS | FLAG_SUPERPOINTS;

pub fn save_tile(tile: &Tile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_tile(tile, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_tile(path: impl AsRef<Path>) -> Result<Tile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_tile(BufReader::new(file))
}

pub fn write_tile<W: Write>(tile: &Tile, w: &mut W) -> std::io::Result<()> {
    let n = tile.points.len();
    let mut flags = 0;
    if tile.labels.is_some() {
        flags |= FLAG_LABELS;
    }
    if tile.superpoint_ids.is_some() {
        flags |= FLAG_SUPERPOINTS;
    }
    w.write_all(MSPC_MAGIC)?;
    w.write_all(&MSPC_VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&tile.center_xy[0].to_le_bytes())?;
    w.write_all(&tile.center_xy[1].to_le_bytes())?;
    w.write_all(&tile.radius.to_le_bytes())?;
    let id = tile.tile_id.as_bytes();
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id)?;
    for axis in 0..3 {
        for p in &tile.points {
            w.write_all(&p[axis].to_le_bytes())?;
        }
    }
    for ch in &tile.reflectance {
        for v in ch {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    if let Some(labels) = &tile.labels {
        w.write_all(labels)?;
    }
    if let Some(ids) = &tile.superpoint_ids {
        for v in ids {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Byte reader that tracks its offset so every failure names where it happened.
struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    fn bytes(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        let start = self.offset;
        let mut filled = 0;
        while filled < buf.len() {
            match self.inner.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(Error::parse(
                        start + filled as u64,
                        format!("truncated while reading {what}"),
                    ))
                }
                Ok(k) => filled += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(Error::parse(start + filled as u64, e.to_string())),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.bytes(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let mut b = [0u8; 8];
        self.bytes(&mut b, what)?;
        Ok(u64::from_le_bytes(b))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn column(&mut self, n: usize, width: usize, what: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n * width];
        self.bytes(&mut buf, what)?;
        Ok(buf)
    }
}

pub fn read_tile<R: Read>(reader: R) -> Result<Tile> {
    let mut c = Cursor {
        inner: reader,
        offset: 0,
    };
    let mut magic = [0u8; 4];
    c.bytes(&mut magic, "magic")?;
    if &magic != MSPC_MAGIC {
        return Err(Error::parse(0, format!("bad magic {magic:?}, expected \"MSPC\"")));
    }
    let version_at = c.offset;
    let version = c.u32("version")?;
    if version != MSPC_VERSION {
        return Err(Error::parse(version_at, format!("unsupported version {version}")));
    }
    let n_at = c.offset;
    let n = c.u64("point count")?;
    // Refuse absurd counts before allocating.
    if n == 0 || n > (1u64 << 40) {
        return Err(Error::parse(n_at, format!("invalid point count {n}")));
    }
    let n = n as usize;
    let flags_at = c.offset;
    let flags = c.u32("flags")?;
    if flags & !KNOWN_FLAGS != 0 {
        return Err(Error::parse(flags_at, format!("unknown flag bits {flags:#x}")));
    }
    let cx = c.f64("center_x")?;
    let cy = c.f64("center_y")?;
    let radius = c.f64("radius")?;
    let id_at = c.offset;
    let id_len = c.u32("tile id length")? as usize;
    if id_len > 1 << 16 {
        return Err(Error::parse(id_at, format!("tile id length {id_len} too large")));
    }
    let mut id = vec![0u8; id_len];
    c.bytes(&mut id, "tile id")?;
    let tile_id = String::from_utf8(id)
        .map_err(|_| Error::parse(id_at + 4, "tile id is not valid UTF-8"))?;

    let mut points = vec![[0.0f64; 3]; n];
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let raw = c.column(n, 8, name)?;
        for (p, chunk) in points.iter_mut().zip(raw.chunks_exact(8)) {
            p[axis] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    let mut reflectance: [Vec<f32>; CHANNELS] = Default::default();
    for (k, ch) in reflectance.iter_mut().enumerate() {
        let raw = c.column(n, 4, &format!("reflectance channel {}", k + 1))?;
        *ch = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
    }
    let labels = if flags & FLAG_LABELS != 0 {
        let at = c.offset;
        let raw = c.column(n, 1, "labels")?;
        if let Some(pos) = raw.iter().position(|&l| l > 1 && l != 255) {
            return Err(Error::parse(at + pos as u64, format!("invalid label code {}", raw[pos])));
        }
        Some(raw)
    } else {
        None
    };
    let superpoint_ids = if flags & FLAG_SUPERPOINTS != 0 {
        let raw = c.column(n, 4, "superpoint ids")?;
        Some(
            raw.chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        )
    } else {
        None
    };
    let end = c.offset;
    let mut probe = [0u8; 1];
    match c.inner.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => return Err(Error::parse(end, "trailing bytes after tile payload")),
        Err(e) => return Err(Error::parse(end, e.to_string())),
    }
    let tile = Tile {
        tile_id,
        center_xy: [cx, cy],
        radius,
        points,
        reflectance,
        labels,
        superpoint_ids,
    };
    tile.validate()
        .map_err(|e| Error::parse(end, format!("decoded tile is invalid: {e}")))?;
    Ok(tile)
}
