//! Interrupted training resumed from its checkpoint ends where an
//! uninterrupted run ends, byte for byte.

use ndarray::{Array2, ArrayView2};

use leafwood::binio::{ByteReader, ByteWriter};
use leafwood::pipeline::{prepare_dataset, training_tiles, PipelineConfig};
use leafwood::preprocess::{extract_tiles, TilingConfig};
use leafwood::synthforest::{generate_plot, ForestParams};
use leafwood::trainer::{
    new_extractor, run_training, run_training_with, FeatureExtractor, RunOptions, TrainConfig, TrainingTile, VoxelInput,
    VoxelMlp, CHECKPOINT_FILE, LOG_FILE,
};
use leafwood::Error;

/// Behaves like the wrapped network until `budget` backward passes are
/// spent, then reports a NaN loss, which the trainer treats as divergence.
#[derive(Clone)]
struct Interrupting {
    inner: VoxelMlp<f32>,
    budget: usize,
}

impl FeatureExtractor for Interrupting {
    fn output_dim(&self) -> usize {
        self.inner.output_dim()
    }

    fn forward(&self, input: &VoxelInput<f32>) -> Array2<f32> {
        self.inner.forward(input)
    }

    fn forward_backward(
        &mut self,
        input: &VoxelInput<f32>,
        loss_grad: &mut dyn FnMut(ArrayView2<'_, f32>) -> (f64, Array2<f32>),
    ) -> f64 {
        if self.budget == 0 {
            return f64::NAN;
        }
        self.budget -= 1;
        self.inner.forward_backward(input, loss_grad)
    }

    fn update(&mut self, lr: f32) {
        self.inner.update(lr)
    }

    fn write_params(&self, w: &mut ByteWriter) {
        self.inner.write_params(w)
    }

    fn read_params(&mut self, r: &mut ByteReader<'_>) -> leafwood::Result<()> {
        self.inner.read_params(r)
    }
}

fn tiles(cfg: &PipelineConfig) -> Vec<TrainingTile> {
    let plot = generate_plot(&ForestParams {
        plot_radius: 5.0,
        tree_count: 4,
        seed: 9,
        ..ForestParams::default()
    })
    .unwrap();
    let mut ds = extract_tiles(&plot, &TilingConfig::default()).unwrap();
    ds.entries.truncate(2);
    training_tiles(prepare_dataset(&mut ds, cfg).unwrap(), &cfg.train).unwrap()
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let mut cfg = PipelineConfig::default();
    cfg.superpoints.merge.sp_max = 400;
    cfg.train = TrainConfig {
        e_pretrain: 4,
        e_grow: 2,
        refresh_interval: 2,
        m_first: 250,
        m_last: 200,
        batch_size: 1,
        seed: 17,
        ..TrainConfig::default()
    };
    cfg.train.primitives.primitives = 40;
    let tiles = tiles(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let straight = dir.path().join("straight");
    let broken = dir.path().join("broken");
    let opts = |d: &std::path::Path, resume| RunOptions {
        out_dir: Some(d.to_path_buf()),
        resume,
    };

    run_training(&tiles, &cfg.train, &opts(&straight, false)).unwrap();

    // two tiles per epoch, so the fifth backward pass is the first of epoch 2
    let wrapped = Interrupting {
        inner: new_extractor(&cfg.train),
        budget: 2 * tiles.len(),
    };
    match run_training_with(&tiles, &cfg.train, &opts(&broken, false), wrapped, None) {
        Err(Error::Diverged { epoch, .. }) => assert_eq!(epoch, 2),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.log)),
    }
    let resumed = run_training(&tiles, &cfg.train, &opts(&broken, true)).unwrap();
    assert_eq!(resumed.log.first().map(|l| l.epoch), Some(2));

    let read = |d: &std::path::Path, f: &str| std::fs::read(d.join(f)).unwrap();
    assert_eq!(read(&straight, CHECKPOINT_FILE), read(&broken, CHECKPOINT_FILE));
    assert_eq!(read(&straight, LOG_FILE), read(&broken, LOG_FILE));
}

#[test]
fn resume_rejects_a_changed_config() {
    let mut cfg = PipelineConfig::default();
    cfg.superpoints.merge.sp_max = 400;
    cfg.train = TrainConfig {
        e_pretrain: 2,
        e_grow: 0,
        refresh_interval: 2,
        batch_size: 1,
        ..TrainConfig::default()
    };
    cfg.train.primitives.primitives = 40;
    let tiles = tiles(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let opts = RunOptions {
        out_dir: Some(dir.path().to_path_buf()),
        resume: true,
    };
    run_training(&tiles, &cfg.train, &opts).unwrap();
    let mut changed = cfg.train.clone();
    changed.seed += 1;
    assert!(matches!(run_training(&tiles, &changed, &opts), Err(Error::Config(_))));
}
