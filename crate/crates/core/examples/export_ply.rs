//! Writes one synthetic tile three times as PLY: colored by label, by
//! superpoint and by reflectance.

use leafwood::pcdata::{export_ply, Coloring, PlyEncoding};
use leafwood::pipeline::{prepare_tile, PipelineConfig};
use leafwood::preprocess::{center_tile, extract_tiles};
use leafwood::synthforest::{generate_plot, ForestParams};

fn main() -> leafwood::Result<()> {
    let out_dir = std::env::args().nth(1).unwrap_or_else(|| "ply_out".into());
    std::fs::create_dir_all(&out_dir).map_err(|source| leafwood::Error::Io {
        path: out_dir.clone().into(),
        source,
    })?;
    let cfg = PipelineConfig::default();
    let plot = generate_plot(&ForestParams {
        plot_radius: 4.0,
        tree_count: 3,
        seed: 2,
        ..ForestParams::default()
    })?;
    let ds = extract_tiles(&plot, &cfg.preprocess.tiling)?;
    let tile = center_tile(ds.tiles().next().expect("at least one tile"));
    let prepared = prepare_tile(&tile, &cfg)?;
    for (name, coloring) in [
        ("labels", Coloring::Labels),
        ("superpoints", Coloring::Superpoints),
        ("reflectance", Coloring::Reflectance),
    ] {
        let path = std::path::Path::new(&out_dir).join(format!("{}_{name}.ply", tile.tile_id));
        export_ply(&prepared.tile, coloring, PlyEncoding::BinaryLittleEndian, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
