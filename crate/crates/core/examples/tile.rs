//! Cuts a synthetic plot into overlapping cylinders on a hexagonal lattice
//! and centers each one.

use leafwood::preprocess::{center_dataset, extract_tiles, lattice_spacing, TilingConfig};
use leafwood::synthforest::{generate_plot, ForestParams};

fn main() -> leafwood::Result<()> {
    let plot = generate_plot(&ForestParams {
        plot_radius: 10.0,
        tree_count: 15,
        seed: 1,
        ..ForestParams::default()
    })?;
    let cfg = TilingConfig::default();
    println!("cylinder radius {} m, lattice spacing {:.3} m", cfg.r_c, lattice_spacing(cfg.r_c));

    let mut ds = extract_tiles(&plot, &cfg)?;
    let covered: usize = ds.tiles().map(|t| t.len()).sum();
    println!(
        "{} tiles from {} points ({:.2} copies per point through overlap)",
        ds.len(),
        plot.len(),
        covered as f64 / plot.len() as f64
    );
    center_dataset(&mut ds);
    for t in ds.tiles() {
        let zmin = t.points.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min);
        let (sx, sy) = t.points.iter().fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
        let n = t.len() as f64;
        println!(
            "  {:<12} {:>7} points, centered mean xy ({:+.2}, {:+.2}), min z {:.2}",
            t.tile_id,
            t.len(),
            sx / n,
            sy / n,
            zmin
        );
    }
    Ok(())
}
