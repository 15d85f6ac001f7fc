//! Command-line front end. Every subcommand reads and writes files only,
//! so each stage can be rerun in isolation.
//!
//! Exit codes: 0 on success, 1 for user errors (bad flags, unreadable or
//! invalid inputs, bad configuration), 2 for internal failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evalkit::{compute_metrics, MetricsReport};
use crate::geomfeat::{load_features, multiscale_features, save_features, GeomFeatures, NeighborhoodConfig};
use crate::pcdata::{export_ply, load_csv, load_tile, save_tile, write_tile, Coloring, Dataset, PlyEncoding, Tile};
use crate::pipeline::{prepare_with_features, PipelineConfig};
use crate::preprocess::{center_dataset, extract_tiles};
use crate::superpoint::{superpoint_purity, SuperpointPartition};
use crate::synthforest::{generate_plot, wood_fraction, ForestParams, ReflectancePreset};
use crate::trainer::{load_trained, predict_tiles, resolve_plot, run_training, RunOptions, TrainingTile};

/// Environment variable naming a directory for cached geometric features.
pub const CACHE_ENV: &str = "LEAFWOOD_CACHE_DIR";
pub const MANIFEST: &str = "manifest.json";
const FEATURE_EXT: &str = "geof";

#[derive(Parser, Debug)]
#[command(name = "leafwood", version, about = "Unsupervised leaf/wood separation for multispectral LiDAR")]
struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled synthetic plot.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value = "easy")]
        preset: Preset,
        /// JSON file with generator parameters; flags override it.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Split a plot (MSPC or CSV) into centered cylindrical tiles.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compute per-point geometric features next to every tile.
    Features {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build superpoints and condition reflectance into a new dataset.
    Superpoints {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print majority-label purity per tile when labels exist.
        #[arg(long)]
        report_purity: bool,
    },
    /// Unsupervised training on a superpoint dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Label every point of a superpoint dataset with a trained model.
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        c_over: Option<usize>,
        #[arg(long)]
        l_min: Option<f64>,
        /// Source plot; adds a plot-level prediction file.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Compare predicted and ground-truth labels.
    Eval {
        /// Tile file or dataset directory.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Where to write the JSON report; printed when omitted.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write a tile as a colored PLY file.
    ExportPly {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "labels")]
        coloring: ColoringArg,
        #[arg(long)]
        ascii: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Easy,
    Hard,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ColoringArg {
    Labels,
    Superpoints,
    Reflectance,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    seed: Option<u64>,
    args: Vec<String>,
}

fn write_manifest(path: &Path, command: &str, hash: String, seed: Option<u64>, args: &[OsString]) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: hash,
        seed,
        args: args.iter().map(|a| a.to_string_lossy().into_owned()).collect(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, serde_json::to_string_pretty(&m)?).map_err(|e| Error::io(path, e))
}

fn sidecar_manifest(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn feature_path(dir: &Path, tile_id: &str) -> PathBuf {
    dir.join(format!("{tile_id}.{FEATURE_EXT}"))
}

fn cache_key(tile: &Tile, cfg: &NeighborhoodConfig) -> Result<String> {
    let mut h = Sha256::new();
    let mut bytes = Vec::new();
    write_tile(tile, &mut bytes).map_err(|e| Error::io("<memory>", e))?;
    h.update(&bytes);
    h.update(serde_json::to_vec(cfg)?);
    Ok(hex::encode(h.finalize()))
}

/// Features of a tile from its sidecar, the cache, or a fresh computation
/// (stored to the cache when one is configured).
fn tile_features(dir: &Path, tile: &Tile, cfg: &NeighborhoodConfig) -> Result<GeomFeatures> {
    let side = feature_path(dir, &tile.tile_id);
    if side.exists() {
        return load_features(&side);
    }
    compute_or_cached(tile, cfg)
}

fn compute_or_cached(tile: &Tile, cfg: &NeighborhoodConfig) -> Result<GeomFeatures> {
    let cache = std::env::var_os(CACHE_ENV).map(PathBuf::from);
    if let Some(dir) = &cache {
        let p = dir.join(format!("{}.{FEATURE_EXT}", cache_key(tile, cfg)?));
        if p.exists() {
            log::debug!("features of {} from cache", tile.tile_id);
            return load_features(&p);
        }
    }
    let f = multiscale_features(&tile.points, cfg)?;
    if let Some(dir) = &cache {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(format!("{}.{FEATURE_EXT}", cache_key(tile, cfg)?));
        save_features(&f, &p)?;
        // round through the file so cached and uncached runs agree exactly
        return load_features(&p);
    }
    Ok(f)
}

fn load_labeled(path: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let tiles: Vec<Tile> = if path.is_dir() {
        Dataset::load(path)?.entries.into_iter().map(|e| e.tile).collect()
    } else {
        vec![load_tile(path)?]
    };
    tiles
        .into_iter()
        .map(|t| {
            let l = t
                .labels
                .ok_or_else(|| Error::InvalidTile(format!("tile {} has no labels", t.tile_id)))?;
            Ok((t.tile_id, l))
        })
        .collect()
}

fn training_tiles(data: &Path, cfg: &PipelineConfig) -> Result<(Dataset, Vec<TrainingTile>)> {
    let ds = Dataset::load(data)?;
    let tiles = ds
        .entries
        .iter()
        .map(|e| {
            let geom = tile_features(data, &e.tile, &cfg.features)?;
            TrainingTile::new(e.tile.clone(), geom, &cfg.train)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ds, tiles))
}

fn execute(cli: Cli, args: &[OsString]) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            preset,
            params,
            trees,
            radius,
        } => {
            let mut p = match params {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
                }
                None => ForestParams::default().with_preset(match preset {
                    Preset::Easy => ReflectancePreset::Easy,
                    Preset::Hard => ReflectancePreset::Hard,
                }),
            };
            p.seed = seed;
            if let Some(t) = trees {
                p.tree_count = t;
            }
            if let Some(r) = radius {
                p.plot_radius = r;
            }
            let plot = generate_plot(&p)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            save_tile(&plot, out.join("plot.mspc"))?;
            let json = serde_json::to_string_pretty(&p)?;
            fs::write(out.join("params.json"), &json).map_err(|e| Error::io(out.join("params.json"), e))?;
            println!("{} points, {:.1}% wood", plot.len(), 100.0 * wood_fraction(&plot));
            write_manifest(&out.join(MANIFEST), "synth", hex::encode(Sha256::digest(json)), Some(seed), args)
        }
        Command::Preprocess { input, out, config } => {
            let cfg = load_config(config.as_deref())?;
            let plot = match input.extension().and_then(|e| e.to_str()) {
                Some("csv") => load_csv(&input, "plot")?,
                _ => load_tile(&input)?,
            };
            let mut ds = extract_tiles(&plot, &cfg.preprocess.tiling)?;
            center_dataset(&mut ds);
            ds.save(&out)?;
            println!("{} tiles", ds.len());
            write_manifest(&out.join(MANIFEST), "preprocess", cfg.hash(), None, args)
        }
        Command::Features { data, config } => {
            let cfg = load_config(config.as_deref())?;
            let ds = Dataset::load(&data)?;
            for e in &ds.entries {
                let f = compute_or_cached(&e.tile, &cfg.features)?;
                save_features(&f, feature_path(&data, &e.tile.tile_id))?;
            }
            println!("features for {} tiles", ds.len());
            write_manifest(&data.join("features.manifest.json"), "features", cfg.hash(), None, args)
        }
        Command::Superpoints {
            data,
            out,
            config,
            report_purity,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut ds = Dataset::load(&data)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for e in &mut ds.entries {
                let geom = tile_features(&data, &e.tile, &cfg.features)?;
                let prepared = prepare_with_features(&e.tile, geom, &cfg)?;
                save_features(&prepared.geom, feature_path(&out, &e.tile.tile_id))?;
                let ids = prepared.tile.superpoint_ids.clone().unwrap_or_default();
                let partition = SuperpointPartition::from_ids(ids, &prepared.tile.points)?;
                println!("{}: {} superpoints", e.tile.tile_id, partition.count());
                if report_purity {
                    if let Some(l) = &prepared.tile.labels {
                        let m = superpoint_purity(&partition, l)?;
                        println!("{}", MetricsReport::table(&[(&e.tile.tile_id, &m)]));
                    }
                }
                e.tile = prepared.tile;
            }
            ds.save(&out)?;
            write_manifest(&out.join(MANIFEST), "superpoints", cfg.hash(), None, args)
        }
        Command::Train {
            data,
            out_dir,
            seed,
            config,
            resume,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            cfg.train.seed = seed;
            let (_, tiles) = training_tiles(&data, &cfg)?;
            let outcome = run_training(
                &tiles,
                &cfg.train,
                &RunOptions {
                    out_dir: Some(out_dir.clone()),
                    resume,
                },
            )?;
            if let Some(last) = outcome.log.last() {
                println!("epoch {}: loss {:.5}", last.epoch, last.loss);
            }
            let p = out_dir.join("config.json");
            fs::write(&p, serde_json::to_string_pretty(&cfg)?).map_err(|e| Error::io(&p, e))?;
            write_manifest(&out_dir.join(MANIFEST), "train", cfg.hash(), Some(seed), args)
        }
        Command::Predict {
            data,
            checkpoint,
            out,
            config,
            c_over,
            l_min,
            plot,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            let (train_cfg, _, extractor, model) = load_trained(&checkpoint)?;
            cfg.train = train_cfg;
            if let Some(c) = c_over {
                cfg.predict.c_over = c;
            }
            if let Some(l) = l_min {
                cfg.predict.l_min = l;
            }
            let (mut ds, tiles) = training_tiles(&data, &cfg)?;
            let preds = predict_tiles(&tiles, &extractor, &model, &cfg.predict)?;
            let classes: Vec<Vec<u8>> = preds.iter().map(|p| p.classes.clone()).collect();
            for (e, p) in ds.entries.iter_mut().zip(preds) {
                let t = e.tile.clone().with_labels(p.classes)?.with_superpoints(p.overseg)?;
                e.tile = t;
            }
            ds.save(&out)?;
            if let Some(plot_path) = plot {
                let mut plot = load_tile(&plot_path)?;
                let labels = resolve_plot(&ds, &classes, plot.len())?;
                plot.superpoint_ids = None;
                let plot = plot.with_labels(labels)?;
                save_tile(&plot, out.join("plot_pred.mspc"))?;
            }
            println!("predicted {} tiles", ds.len());
            write_manifest(&out.join(MANIFEST), "predict", cfg.hash(), Some(cfg.train.seed), args)
        }
        Command::Eval { pred, gt, json, config } => {
            let cfg = load_config(config.as_deref())?;
            let p = load_labeled(&pred)?;
            let g = load_labeled(&gt)?;
            let mut gt_all = Vec::new();
            let mut pred_all = Vec::new();
            if p.len() == 1 && g.len() == 1 {
                gt_all = g[0].1.clone();
                pred_all = p[0].1.clone();
            } else {
                for (id, labels) in &g {
                    let (_, pl) = p
                        .iter()
                        .find(|(pid, _)| pid == id)
                        .ok_or_else(|| Error::InvalidArgument(format!("no prediction for tile {id}")))?;
                    gt_all.extend_from_slice(labels);
                    pred_all.extend_from_slice(pl);
                }
            }
            if gt_all.len() != pred_all.len() {
                return Err(Error::DimensionMismatch {
                    expected: gt_all.len(),
                    found: pred_all.len(),
                });
            }
            let report = compute_metrics(&gt_all, &pred_all, cfg.eval.classes)?;
            println!("{}", MetricsReport::table(&[("prediction", &report)]));
            let text = report.to_json()?;
            match &json {
                Some(path) => {
                    fs::write(path, &text).map_err(|e| Error::io(path, e))?;
                    write_manifest(&sidecar_manifest(path), "eval", cfg.hash(), None, args)?;
                }
                None => println!("{text}"),
            }
            Ok(())
        }
        Command::ExportPly {
            input,
            out,
            coloring,
            ascii,
        } => {
            let tile = load_tile(&input)?;
            let coloring = match coloring {
                ColoringArg::Labels => Coloring::Labels,
                ColoringArg::Superpoints => Coloring::Superpoints,
                ColoringArg::Reflectance => Coloring::Reflectance,
            };
            let enc = if ascii { PlyEncoding::Ascii } else { PlyEncoding::BinaryLittleEndian };
            export_ply(&tile, coloring, enc, &out)?;
            write_manifest(&sidecar_manifest(&out), "export-ply", String::new(), None, args)
        }
    }
}

/// Exit code for a failed run.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Diverged { .. } | Error::NonFinite(_) => 2,
        _ => 1,
    }
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("worker pool already configured: {e}");
        }
    }
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| execute(cli, &args))) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            2
        }
    }
}
