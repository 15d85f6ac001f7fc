//! Oversegments a tile with cut pursuit, merges small pieces, and reports
//! how pure the resulting superpoints are with respect to the labels.

use leafwood::geomfeat::multiscale_features;
use leafwood::pipeline::PipelineConfig;
use leafwood::preprocess::{center_dataset, extract_tiles};
use leafwood::superpoint::{initial_superpoints, merge_superpoints, superpoint_purity};
use leafwood::synthforest::{generate_plot, ForestParams};

fn main() -> leafwood::Result<()> {
    let cfg = PipelineConfig::default();
    let plot = generate_plot(&ForestParams {
        plot_radius: 6.0,
        tree_count: 6,
        seed: 3,
        ..ForestParams::default()
    })?;
    let mut ds = extract_tiles(&plot, &cfg.preprocess.tiling)?;
    center_dataset(&mut ds);
    let tile = ds.tiles().max_by_key(|t| t.len()).expect("at least one tile");
    let geom = multiscale_features(&tile.points, &cfg.features)?;

    let initial = initial_superpoints(tile, &geom, &cfg.superpoints.cut_pursuit)?;
    let merged = merge_superpoints(&initial, &tile.points, &cfg.superpoints.merge)?;
    let labels = tile.labels.as_deref().unwrap_or_default();
    let before = superpoint_purity(&initial, labels)?;
    let after = superpoint_purity(&merged.partition, labels)?;

    println!("tile {} with {} points", tile.tile_id, tile.len());
    println!("cut pursuit:  {:>6} superpoints, purity oAcc {:.3} mIoU {:.3}", initial.count(), before.oacc, before.miou);
    println!(
        "after merge:  {:>6} superpoints, purity oAcc {:.3} mIoU {:.3} (PTS_min {}, {} singular points)",
        merged.partition.count(),
        after.oacc,
        after.miou,
        merged.pts_min,
        merged.singular_points
    );
    Ok(())
}
