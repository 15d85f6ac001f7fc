//! Short unsupervised training run on a few synthetic tiles, then
//! prediction and plot-level scoring against the generator's labels.

use leafwood::evalkit::{compute_metrics, MetricsReport};
use leafwood::pipeline::{prepare_dataset, training_tiles, PipelineConfig};
use leafwood::preprocess::extract_tiles;
use leafwood::synthforest::{generate_plot, ForestParams};
use leafwood::trainer::{baseline_handcrafted, predict_tiles, resolve_plot, run_training, RunOptions, TrainConfig};

fn main() -> leafwood::Result<()> {
    let plot = generate_plot(&ForestParams {
        plot_radius: 6.0,
        tree_count: 8,
        seed: 11,
        ..ForestParams::default()
    })?;
    let mut cfg = PipelineConfig::default();
    cfg.superpoints.merge.sp_max = 500;
    cfg.train = TrainConfig {
        e_pretrain: 10,
        e_grow: 4,
        refresh_interval: 2,
        m_first: 300,
        m_last: 250,
        batch_size: 1,
        input_reflectance: vec![0, 1, 2],
        ..TrainConfig::default()
    };
    cfg.train.primitives.primitives = 60;

    let mut ds = extract_tiles(&plot, &cfg.preprocess.tiling)?;
    let tiles = training_tiles(prepare_dataset(&mut ds, &cfg)?, &cfg.train)?;
    println!("{} tiles prepared", tiles.len());

    let out = run_training(&tiles, &cfg.train, &RunOptions::default())?;
    for l in &out.log {
        println!("epoch {:>2}  loss {:.4}  lr {:.4}  M {}", l.epoch, l.loss, l.lr, l.m_current);
    }

    let gt = plot.labels.as_deref().unwrap_or_default();
    let score = |classes: Vec<Vec<u8>>| -> leafwood::Result<MetricsReport> {
        compute_metrics(gt, &resolve_plot(&ds, &classes, plot.len())?, 2)
    };
    let trained = predict_tiles(&tiles, &out.extractor, &out.model, &cfg.predict)?;
    let baseline = baseline_handcrafted(&tiles, &cfg.train, &cfg.predict)?;
    let trained = score(trained.into_iter().map(|p| p.classes).collect())?;
    let baseline = score(baseline.into_iter().map(|p| p.classes).collect())?;
    println!("{}", MetricsReport::table(&[("no training", &baseline), ("trained", &trained)]));
    Ok(())
}
