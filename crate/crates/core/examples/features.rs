//! Multi-scale eigen features on one synthetic tile, summarized per class.

use leafwood::geomfeat::{multiscale_features, NeighborhoodConfig, LINEARITY, PCA1, PLANARITY, SPHERICITY, VERTICALITY};
use leafwood::pcdata::WOOD;
use leafwood::synthforest::{generate_plot, ForestParams};

fn main() -> leafwood::Result<()> {
    let plot = generate_plot(&ForestParams {
        plot_radius: 4.0,
        tree_count: 3,
        seed: 5,
        ..ForestParams::default()
    })?;
    let cfg = NeighborhoodConfig::default();
    println!("{} points, radius {} m, scales {:?}", plot.len(), cfg.r_n, cfg.scales);
    let geom = multiscale_features(&plot.points, &cfg)?;

    let labels = plot.labels.as_deref().unwrap_or_default();
    let names = [
        (LINEARITY, "linearity"),
        (PLANARITY, "planarity"),
        (SPHERICITY, "sphericity"),
        (VERTICALITY, "verticality"),
        (PCA1, "pca1"),
    ];
    println!("{:<12} {:>8} {:>8}", "feature", "foliage", "wood");
    for (k, name) in names {
        let mut sum = [0.0; 2];
        let mut cnt = [0usize; 2];
        for (d, &l) in geom.values.iter().zip(labels) {
            let c = usize::from(l == WOOD);
            sum[c] += d[k];
            cnt[c] += 1;
        }
        println!("{name:<12} {:>8.3} {:>8.3}", sum[0] / cnt[0] as f64, sum[1] / cnt[1] as f64);
    }
    Ok(())
}
