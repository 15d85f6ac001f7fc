//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines show up
//! in `cargo test` output. Set `ACCEPTANCE_ONLY=1,3` to run a subset.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use leafwood::evalkit::{compute_metrics, hungarian_assign, MetricsReport};
use leafwood::geomfeat::{eigen_features, hybrid_neighborhood, LINEARITY, PCA1, PLANARITY, SPHERICITY};
use leafwood::pcdata::{Dataset, Tile, FOLIAGE};
use leafwood::pipeline::{prepare_dataset, training_tiles, PipelineConfig};
use leafwood::preprocess::{extract_tiles, lattice_spacing, TilingConfig};
use leafwood::primitives::decay_coefficient;
use leafwood::spatial::{dist2, VoxelGrid};
use leafwood::superpoint::{
    cut_pursuit, energy, merge_superpoints, CutPursuitConfig, MergeConfig, SuperpointPartition, UndirectedGraph,
};
use leafwood::synthforest::{generate_plot, ForestParams, ReflectancePreset};
use leafwood::trainer::{
    baseline_handcrafted, cosine_cross_entropy, predict_tiles, resolve_plot, run_training, voxelize, LabelHistogram,
    PredictConfig, Prediction, RunOptions, TrainConfig, TrainingTile, VoxelMlp,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn formula_suite() -> Verdict {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let diag = |a: f64, b: f64, c: f64| nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(a, b, c));
    let exact = |x: f64, y: f64| (x - y).abs() <= 1e-12;

    let line = eigen_features(&diag(1.0, 0.0, 0.0)).values;
    check("line", exact(line[LINEARITY], 1.0) && exact(line[PLANARITY], 0.0) && exact(line[SPHERICITY], 0.0) && exact(line[PCA1], 1.0));
    let iso = eigen_features(&diag(1.0, 1.0, 1.0)).values;
    check("isotropic", exact(iso[LINEARITY], 0.0) && exact(iso[PLANARITY], 0.0) && exact(iso[SPHERICITY], 1.0) && exact(iso[PCA1], 1.0 / 3.0));
    let mixed = eigen_features(&diag(0.0, 2.0, 1.0)).values;
    check("(2,1,0)", exact(mixed[LINEARITY], 0.5) && exact(mixed[PLANARITY], 0.5) && exact(mixed[SPHERICITY], 0.0) && exact(mixed[PCA1], 2.0 / 3.0));
    let degen = eigen_features(&diag(0.0, 0.0, 0.0));
    check("degenerate", degen.degenerate && degen.values[..4].iter().all(|&v| v == 0.0) && exact(degen.values[PCA1], 1.0 / 3.0));

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let a = nalgebra::Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        let d = eigen_features(&(a * a.transpose())).values;
        let sum = d[LINEARITY] + d[PLANARITY] + d[SPHERICITY];
        let ranged = d.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)) && d[PCA1] >= 1.0 / 3.0 - 1e-12;
        if (sum - 1.0).abs() > 1e-6 || !ranged {
            check("identity/range", false);
            break;
        }
    }

    check("decay E=0", decay_coefficient(0, 100.0, 0.2) == 1.0);
    check("decay E=50", exact(decay_coefficient(50, 100.0, 0.2), 0.5));
    check("decay E=100", exact(decay_coefficient(100, 100.0, 0.2), 0.2));
    check("decay E=200", exact(decay_coefficient(200, 100.0, 0.2), 0.2));

    let s = 300;
    let f = Array2::<f64>::zeros((1, 8));
    let c = Array2::from_shape_fn((s, 8), |(i, j)| if j == i % 8 { 1.0 } else { 0.0 });
    let (loss, _) = cosine_cross_entropy(f.view(), c.view(), &LabelHistogram::new(&[0], &[42], 1), &[1], 1.0);
    check("ln 300", (loss - (300f64).ln()).abs() <= 1e-9);

    check("hex spacing", (lattice_spacing(4.2) - 3f64.sqrt() * 4.2).abs() <= 1e-9);
    verdict(failures.is_empty(), if failures.is_empty() { "all identities exact".into() } else { format!("failed: {failures:?}") })
}

// ---------------------------------------------------------------- 2

fn knn_oracle(points: &[[f64; 3]], q: usize, r: f64, k: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..points.len())
        .filter(|&i| i != q)
        .map(|i| (dist2(&points[q], &points[i]), i))
        .filter(|&(d, _)| d <= r * r)
        .collect();
    others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    std::iter::once(q).chain(others.into_iter().map(|x| x.1)).take(k).collect()
}

fn best_assignment_score(scores: &[Vec<u64>]) -> u64 {
    // exhaustive search over injective maps from rows to columns
    fn rec(scores: &[Vec<u64>], row: usize, used: &mut Vec<bool>) -> u64 {
        if row == scores.len() {
            return 0;
        }
        let mut best = rec(scores, row + 1, used);
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(scores[row][c] + rec(scores, row + 1, used));
                used[c] = false;
            }
        }
        best
    }
    let cols = scores.first().map_or(0, Vec::len);
    rec(scores, 0, &mut vec![false; cols])
}

fn metrics_agree(gt: &[u8], pred: &[u8], classes: usize, report: &MetricsReport) -> bool {
    // independent recount under the report's mapping
    let clusters = pred.iter().map(|&p| p as usize + 1).max().unwrap_or(0);
    let mut inter = vec![vec![0u64; classes]; clusters];
    for (&g, &p) in gt.iter().zip(pred) {
        inter[p as usize][g as usize] += 1;
    }
    if report.assignment.iter().flatten().count() > 0 {
        let trace: u64 = report
            .assignment
            .iter()
            .enumerate()
            .filter_map(|(p, a)| a.map(|c| inter[p][c]))
            .sum();
        if trace != best_assignment_score(&inter) {
            return false;
        }
    }
    let mapped: Vec<Option<usize>> = pred.iter().map(|&p| report.assignment[p as usize]).collect();
    let n = gt.len() as f64;
    let correct = gt.iter().zip(&mapped).filter(|(&g, m)| **m == Some(g as usize)).count() as f64;
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    if !close(report.oacc, correct / n) {
        return false;
    }
    let mut accs = Vec::new();
    let mut ious = Vec::new();
    for c in 0..classes {
        let in_gt = gt.iter().filter(|&&g| g as usize == c).count();
        let in_pred = mapped.iter().filter(|&&m| m == Some(c)).count();
        let tp = gt.iter().zip(&mapped).filter(|(&g, &m)| g as usize == c && m == Some(c)).count();
        let acc = (in_gt > 0).then(|| tp as f64 / in_gt as f64);
        let union = in_gt + in_pred - tp;
        let iou = (union > 0).then(|| tp as f64 / union as f64);
        if acc.zip(report.class_accuracy[c]).is_some_and(|(a, b)| !close(a, b)) || acc.is_some() != report.class_accuracy[c].is_some() {
            return false;
        }
        if iou.zip(report.iou[c]).is_some_and(|(a, b)| !close(a, b)) || iou.is_some() != report.iou[c].is_some() {
            return false;
        }
        accs.extend(acc);
        ious.extend(iou);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    close(report.macc, mean(&accs)) && close(report.miou, mean(&ious))
}

/// Exact optimum of the piecewise-constant energy on a chain by dynamic
/// programming over the last segment boundary. Values are `n × dim`.
fn chain_optimum(f: &[f64], dim: usize, w: &[f64], lambda: f64) -> f64 {
    let n = f.len() / dim;
    let sse = |a: usize, b: usize| {
        let len = (b - a) as f64;
        (0..dim)
            .map(|k| {
                let mean = (a..b).map(|i| f[i * dim + k]).sum::<f64>() / len;
                (a..b).map(|i| (f[i * dim + k] - mean).powi(2)).sum::<f64>()
            })
            .sum::<f64>()
    };
    let mut best = vec![f64::INFINITY; n + 1];
    best[0] = 0.0;
    for b in 1..=n {
        for a in 0..b {
            let cut = if a == 0 { 0.0 } else { lambda * w[a - 1] };
            best[b] = best[b].min(best[a] + cut + sse(a, b));
        }
    }
    best[n]
}

/// The same optimum by enumerating every subset of cut edges.
fn chain_enumerated(f: &[f64], dim: usize, w: &[f64], lambda: f64) -> f64 {
    let n = f.len() / dim;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << (n - 1)) {
        let mut e = 0.0;
        let mut start = 0;
        for i in 0..n {
            let cut_after = i + 1 == n || mask & (1 << i) != 0;
            if cut_after {
                let len = (i + 1 - start) as f64;
                for k in 0..dim {
                    let mean = (start..=i).map(|j| f[j * dim + k]).sum::<f64>() / len;
                    e += (start..=i).map(|j| (f[j * dim + k] - mean).powi(2)).sum::<f64>();
                }
                if i + 1 < n {
                    e += lambda * w[i];
                }
                start = i + 1;
            }
        }
        best = best.min(e);
    }
    best
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut knn_bad = 0;
    for trial in 0..100 {
        let n = rng.gen_range(1..=2000);
        let spread = rng.gen_range(0.2..3.0);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.gen_range(0.0..spread))).collect();
        let r = 0.35;
        let grid = VoxelGrid::new(&pts, r);
        for _ in 0..20 {
            let q = rng.gen_range(0..n);
            let k = [20, 50, 100, 150][trial % 4];
            if hybrid_neighborhood(&grid, q, r, k) != knn_oracle(&pts, q, r, k) {
                knn_bad += 1;
            }
        }
    }

    let mut hung_bad = 0;
    for _ in 0..200 {
        let rows = rng.gen_range(1..=5);
        let cols = rng.gen_range(1..=5);
        let scores: Vec<Vec<u64>> = (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(0..50)).collect()).collect();
        let a = hungarian_assign(&scores);
        let used: Vec<usize> = a.iter().flatten().copied().collect();
        let injective = used.iter().collect::<BTreeSet<_>>().len() == used.len();
        let total: u64 = a.iter().enumerate().filter_map(|(r, c)| c.map(|c| scores[r][c])).sum();
        if !injective || total != best_assignment_score(&scores) {
            hung_bad += 1;
        }
    }

    let mut metric_bad = 0;
    for _ in 0..500 {
        let classes = rng.gen_range(2..=4);
        let clusters = rng.gen_range(1..=5);
        let n = rng.gen_range(1..300);
        let gt: Vec<u8> = (0..n).map(|_| rng.gen_range(0..classes) as u8).collect();
        let pred: Vec<u8> = gt
            .iter()
            .map(|&g| if rng.gen_bool(0.7) { g % clusters as u8 } else { rng.gen_range(0..clusters) as u8 })
            .collect();
        match compute_metrics(&gt, &pred, classes) {
            Ok(r) if metrics_agree(&gt, &pred, classes, &r) => {}
            _ => metric_bad += 1,
        }
    }

    let mut cp_bad = 0;
    let mut dp_bad = 0;
    for trial in 0..100 {
        let n = rng.gen_range(2..=20);
        let dim = rng.gen_range(1..=3);
        let mut f = Vec::with_capacity(n * dim);
        let mut level: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        for _ in 0..n {
            if rng.gen_bool(0.2) {
                level = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            }
            f.extend(level.iter().map(|l| l + rng.gen_range(-0.1..0.1)));
        }
        let w: Vec<f64> = (0..n - 1).map(|_| rng.gen_range(0.5..2.0)).collect();
        let lambda = rng.gen_range(0.01..1.0);
        let g = UndirectedGraph::from_edges(n, (0..n - 1).map(|i| (i as u32, i as u32 + 1, w[i])));
        let sol = cut_pursuit(&g, &f, dim, lambda, &CutPursuitConfig { lambda, ..Default::default() }).unwrap();
        let opt = chain_optimum(&f, dim, &w, lambda);
        if (sol.energy() - opt).abs() > 1e-9 * (1.0 + opt) {
            cp_bad += 1;
        }
        if trial % 5 == 0 && n <= 14 && (chain_enumerated(&f, dim, &w, lambda) - opt).abs() > 1e-9 * (1.0 + opt) {
            dp_bad += 1;
        }
    }
    let pass = knn_bad + hung_bad + metric_bad + cp_bad + dp_bad == 0;
    verdict(
        pass,
        format!("mismatches: knn {knn_bad}/2000 queries, hungarian {hung_bad}/200, metrics {metric_bad}/500, cut pursuit {cp_bad}/100 (chain oracle self-check {dp_bad})"),
    )
}

// ---------------------------------------------------------------- 3

fn energy_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = 0;
    for _ in 0..200 {
        let n = rng.gen_range(2..300);
        let dim = rng.gen_range(1..=4);
        let m = rng.gen_range(n - 1..4 * n);
        let mut edges: Vec<(u32, u32, f64)> = Vec::new();
        for _ in 0..m {
            let a = rng.gen_range(0..n as u32);
            let b = rng.gen_range(0..n as u32);
            if a != b {
                edges.push((a, b, rng.gen_range(0.1..10.0)));
            }
        }
        let g = UndirectedGraph::from_edges(n, edges);
        let f: Vec<f64> = (0..n * dim).map(|_| rng.gen_range(-2.0..2.0) + if rng.gen_bool(0.5) { 3.0 } else { 0.0 }).collect();
        let lambda = 10f64.powf(rng.gen_range(-3.0..1.0));
        let sol = cut_pursuit(&g, &f, dim, lambda, &CutPursuitConfig { lambda, ..Default::default() }).unwrap();
        let e = sol.energy();
        let mut mean = vec![0.0; dim];
        for i in 0..n {
            for k in 0..dim {
                mean[k] += f[i * dim + k] / n as f64;
            }
        }
        let single: Vec<f64> = (0..n * dim).map(|i| mean[i % dim]).collect();
        let bound_single = energy(&g, &f, &single, dim, lambda);
        let bound_points = energy(&g, &f, &f, dim, lambda);
        let recomputed = energy(&g, &f, &sol.expanded(), dim, lambda);
        let tol = 1e-9 * (1.0 + e.abs());
        let monotone = sol.energy_history.windows(2).all(|w| w[1] <= w[0] + tol);
        if e > bound_single + tol || e > bound_points + tol || !monotone || (recomputed - e).abs() > 1e-6 * (1.0 + e) {
            bad += 1;
        }
    }
    verdict(bad == 0, format!("{}/200 graphs within both bounds with monotone history", 200 - bad))
}

// ---------------------------------------------------------------- 4

fn random_partition(rng: &mut ChaCha8Rng, count: usize, max_size: usize) -> (Vec<[f64; 3]>, SuperpointPartition) {
    let mut pts = Vec::new();
    let mut ids = Vec::new();
    for s in 0..count {
        let c = [0, 1, 2].map(|_| rng.gen_range(0.0..20.0));
        let size = rng.gen_range(1..=max_size);
        for _ in 0..size {
            pts.push([0, 1, 2].map(|a| c[a] + rng.gen_range(-0.15..0.15)));
            ids.push(s as u32);
        }
    }
    let p = SuperpointPartition::from_ids(ids, &pts).unwrap();
    (pts, p)
}

/// The threshold loop written out literally: start at 5, step by one.
fn threshold_by_loop(sizes: &[usize], sp_max: usize) -> usize {
    let mut t = 5;
    while sizes.iter().filter(|&&s| s > t).count() > sp_max {
        t += 1;
    }
    t
}

fn merge_contract() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    let mut refused = 0;
    for trial in 0..500 {
        let sp_max = [4, 50, 2200][trial % 3];
        let count = match sp_max {
            2200 => rng.gen_range(1000..3000),
            m => rng.gen_range(1..=3 * m),
        };
        let (pts, p) = random_partition(&mut rng, count, 12);
        let cfg = MergeConfig { sp_max, ..Default::default() };
        match merge_superpoints(&p, &pts, &cfg) {
            Ok(out) => {
                let q = &out.partition;
                let ids = q.ids();
                let exhaustive = ids.len() == pts.len() && ids.iter().all(|&i| (i as usize) < q.count());
                let used: BTreeSet<u32> = ids.iter().copied().collect();
                let admissible = q.sizes().iter().all(|&s| s > out.pts_min);
                let monotone = q.count() <= p.count();
                let same_threshold = out.pts_min == threshold_by_loop(p.sizes(), sp_max);
                if !(exhaustive && used.len() == q.count() && admissible && q.count() <= sp_max && monotone && same_threshold) {
                    bad += 1;
                }
            }
            Err(_) => {
                // legal only when thresholding leaves nothing admissible,
                // e.g. more than sp_max superpoints tied at the largest size
                refused += 1;
                let t = threshold_by_loop(p.sizes(), sp_max);
                if p.sizes().iter().any(|&s| s > t) {
                    bad += 1;
                }
            }
        }
    }
    // hand-traced fixture: sizes with SP_max = 4 settle at PTS_min = 7
    let sizes = [1usize, 1, 2, 3, 6, 7, 8, 9, 10, 12];
    let mut pts = Vec::new();
    let mut ids = Vec::new();
    for (s, &n) in sizes.iter().enumerate() {
        for k in 0..n {
            pts.push([s as f64 * 2.0 + k as f64 * 0.01, 0.0, 0.0]);
            ids.push(s as u32);
        }
    }
    let p = SuperpointPartition::from_ids(ids, &pts).unwrap();
    let out = merge_superpoints(&p, &pts, &MergeConfig { sp_max: 4, ..Default::default() }).unwrap();
    let fixture = out.pts_min == 7 && out.partition.count() == 4 && out.partition.len() == pts.len();
    verdict(
        bad == 0 && fixture,
        format!("{bad} contract violations in 500 partitions ({refused} refused as too fragmented); fixture PTS_min {} -> {} superpoints", out.pts_min, out.partition.count()),
    )
}

// ---------------------------------------------------------------- 5

fn gradient_check() -> Verdict {
    let mut worst: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + inst);
        let n = rng.gen_range(20..60);
        let pts: Vec<[f64; 3]> = (0..n).map(|_| [0, 1, 2].map(|_| rng.gen_range(0.0..0.25))).collect();
        let inputs = Array2::from_shape_fn((n, 4), |(i, j)| if j < 3 { pts[i][j] * 4.0 } else { rng.gen_range(-1.0..1.0) });
        let vox = voxelize::<f64>(&pts, &inputs, 0.05);
        let s = 10;
        let k = 6;
        let mut c = Array2::from_shape_fn((s, k), |_| rng.gen_range(-1.0..1.0f64));
        for mut r in c.outer_iter_mut() {
            let nr = r.dot(&r).sqrt();
            r /= nr;
        }
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..s as u32)).collect();
        let hist = LabelHistogram::new(&vox.point_voxel, &labels, vox.voxel_count());
        let scale = 1.0 / n as f64;
        let mut net = VoxelMlp::<f64>::new([4, 8, 8, k], 0.9, inst);
        // Zero biases leave voxels whose ReLUs are all dead with an exactly
        // zero output, where the cosine loss is discontinuous. Random biases
        // move the check to a generic, differentiable point.
        for bias in net.b.iter_mut() {
            bias.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        }
        let loss_of = |net: &VoxelMlp<f64>| {
            let a = net.activations(&vox);
            cosine_cross_entropy(a.output.view(), c.view(), &hist, &vox.counts, scale).0
        };
        let act = net.activations(&vox);
        let (_, d_out) = cosine_cross_entropy(act.output.view(), c.view(), &hist, &vox.counts, scale);
        net.zero_grad();
        net.backward(&vox, &act, d_out.view());
        let analytic = net.gradient();
        let h = 1e-6;
        let mut numeric = vec![0.0; analytic.len()];
        for (i, g) in numeric.iter_mut().enumerate() {
            let orig = *net.parameter_mut(i);
            *net.parameter_mut(i) = orig + h;
            let up = loss_of(&net);
            *net.parameter_mut(i) = orig - h;
            let down = loss_of(&net);
            *net.parameter_mut(i) = orig;
            *g = (up - down) / (2.0 * h);
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        worst = worst.max(diff / norm.max(1e-300));
    }
    verdict(worst < 1e-4, format!("worst relative error {worst:.2e} over 20 instances"))
}

// ---------------------------------------------------------------- 6, 7

const E2E_SEED: u64 = 2024;
const E2E_TILES: usize = 12;
const TARGET_POINTS: i64 = 50_000;
const ABLATION_TILES: usize = 3;

/// Calibration recorded from one committed baseline run.
#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct Calibration {
    all_foliage_miou: f64,
    no_training_miou: f64,
    margin: f64,
}

struct Scene {
    plot: Tile,
    ds: Dataset,
    prepared: Vec<leafwood::pipeline::PreparedTile>,
}

/// The seeded easy forest, cut into tiles, keeping the `count` tiles whose
/// size is closest to the target (ties by position).
fn scene(count: usize, cfg: &PipelineConfig) -> Scene {
    let params = ForestParams {
        plot_radius: 16.0,
        tree_count: 70,
        seed: E2E_SEED,
        ..ForestParams::default().with_preset(ReflectancePreset::Easy)
    };
    let plot = generate_plot(&params).unwrap();
    let mut ds = extract_tiles(&plot, &TilingConfig::default()).unwrap();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| ((ds.entries[i].tile.len() as i64 - TARGET_POINTS).abs(), i));
    order.truncate(count);
    order.sort_unstable();
    ds.entries = order.iter().map(|&i| ds.entries[i].clone()).collect();
    let prepared = prepare_dataset(&mut ds, cfg).unwrap();
    Scene { plot, ds, prepared }
}

fn e2e_config(channels: &[usize]) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.train = TrainConfig {
        e_pretrain: 30,
        e_grow: 12,
        refresh_interval: 2,
        batch_size: 1,
        input_reflectance: channels.to_vec(),
        clustering_reflectance: channels.to_vec(),
        seed: E2E_SEED,
        ..TrainConfig::default()
    };
    cfg
}

fn plot_miou(scene: &Scene, preds: &[Prediction]) -> f64 {
    let classes: Vec<Vec<u8>> = preds.iter().map(|p| p.classes.clone()).collect();
    let labels = resolve_plot(&scene.ds, &classes, scene.plot.len()).unwrap();
    let gt: Vec<u8> = scene
        .plot
        .labels
        .as_ref()
        .unwrap()
        .iter()
        .zip(&labels)
        .map(|(&g, &p)| if p == leafwood::pcdata::UNLABELED { p } else { g })
        .collect();
    compute_metrics(&gt, &labels, 2).unwrap().miou
}

fn train_and_score(scene: &Scene, cfg: &PipelineConfig, tiles: &[TrainingTile], c_overs: &[usize]) -> Vec<f64> {
    let out = run_training(tiles, &cfg.train, &RunOptions::default()).unwrap();
    c_overs
        .iter()
        .map(|&c| {
            let pc = PredictConfig { c_over: c, ..cfg.predict.clone() };
            plot_miou(scene, &predict_tiles(tiles, &out.extractor, &out.model, &pc).unwrap())
        })
        .collect()
}

fn end_to_end(cal: &Calibration) -> (Verdict, Verdict) {
    let start = Instant::now();
    let cfg = e2e_config(&[0, 1, 2]);
    let sc = scene(E2E_TILES, &cfg);
    let sizes: Vec<usize> = sc.ds.entries.iter().map(|e| e.tile.len()).collect();
    let tiles = training_tiles(sc.prepared.clone(), &cfg.train).unwrap();
    let foliage: Vec<Prediction> = tiles
        .iter()
        .map(|t| Prediction {
            classes: vec![FOLIAGE; t.tile.len()],
            overseg: vec![0; t.tile.len()],
        })
        .collect();
    let all_foliage = plot_miou(&sc, &foliage);
    let no_training = plot_miou(&sc, &baseline_handcrafted(&tiles, &cfg.train, &cfg.predict).unwrap());
    if std::env::var_os("ACCEPTANCE_CALIBRATE").is_some() {
        // one-off: freeze the baselines this threshold is measured against
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/acceptance_calibration.json");
        let text = format!(
            "{{\n  \"all_foliage_miou\": {all_foliage:?},\n  \"no_training_miou\": {no_training:?},\n  \"margin\": {:?}\n}}\n",
            cal.margin
        );
        std::fs::write(&path, text).unwrap();
        let note = format!("calibration written to {}", path.display());
        return (verdict(false, note.clone()), verdict(false, note));
    }
    let scores = train_and_score(&sc, &cfg, &tiles, &[14, 2]);
    let minutes = start.elapsed().as_secs_f64() / 60.0;
    let threshold = cal.all_foliage_miou.max(cal.no_training_miou) + cal.margin;
    let calibrated = (all_foliage - cal.all_foliage_miou).abs() < 1e-9 && (no_training - cal.no_training_miou).abs() < 1e-9;
    let six = verdict(
        scores[0] >= threshold && calibrated && minutes < 30.0,
        format!(
            "mIoU {:.4} vs all-foliage {all_foliage:.4} / no-training {no_training:.4} (threshold {threshold:.4}, calibration {}); {} tiles, {}..{} points; {minutes:.1} min",
            scores[0],
            if calibrated { "matches" } else { "DRIFTED" },
            sizes.len(),
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    );
    let c14_vs_c2 = (scores[0] >= scores[1], format!("C_over=14 {:.4} vs C_over=2 {:.4}", scores[0], scores[1]));
    (six, verdict(c14_vs_c2.0, c14_vs_c2.1))
}

fn channel_ablation() -> Verdict {
    let base = e2e_config(&[0, 1, 2]);
    let sc = scene(ABLATION_TILES, &base);
    let mut results = Vec::new();
    for channels in [vec![0], vec![1], vec![2], vec![0, 1, 2]] {
        let cfg = e2e_config(&channels);
        let tiles = training_tiles(sc.prepared.clone(), &cfg.train).unwrap();
        results.push((channels.clone(), train_and_score(&sc, &cfg, &tiles, &[14])[0]));
    }
    let best_single = results[..3].iter().map(|r| r.1).fold(f64::MIN, f64::max);
    let three = results[3].1;
    verdict(
        three >= best_single - 0.01,
        format!(
            "3-channel {three:.4} vs single {} on {ABLATION_TILES} tiles",
            results[..3].iter().map(|(c, m)| format!("ch{}={m:.4}", c[0] + 1)).collect::<Vec<_>>().join(" ")
        ),
    )
}

// ---------------------------------------------------------------- 8

fn pipeline_run(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let cfg = dir.join("cfg.json");
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(
        &cfg,
        r#"{"train": {"e_pretrain": 4, "e_grow": 2, "refresh_interval": 2, "m_first": 300, "m_last": 250,
            "batch_size": 1, "primitives": {"primitives": 60}}, "superpoints": {"merge": {"sp_max": 500}}}"#,
    )
    .unwrap();
    let d = |s: &str| dir.join(s).to_string_lossy().into_owned();
    let c = d("cfg.json");
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--out".into(), d("s"), "--seed".into(), "11".into(), "--radius".into(), "6".into(), "--trees".into(), "8".into()],
        vec!["preprocess".into(), "--input".into(), d("s/plot.mspc"), "--out".into(), d("t")],
        vec!["features".into(), "--data".into(), d("t")],
        vec!["superpoints".into(), "--data".into(), d("t"), "--out".into(), d("sp"), "--config".into(), c.clone()],
        vec!["train".into(), "--data".into(), d("sp"), "--out-dir".into(), d("m"), "--seed".into(), "5".into(), "--config".into(), c.clone()],
        vec!["predict".into(), "--data".into(), d("sp"), "--checkpoint".into(), d("m/checkpoint.mspt"), "--out".into(), d("p"), "--plot".into(), d("s/plot.mspc"), "--config".into(), c],
    ];
    for s in steps {
        let code = leafwood::cli::run(std::iter::once("leafwood".to_string()).chain(s.clone()));
        assert_eq!(code, 0, "step {s:?} failed");
    }
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.join("p"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "mspc"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let a = pipeline_run(&tmp.path().join("a"));
    let b = pipeline_run(&tmp.path().join("b"));
    let same = a == b && !a.is_empty();
    verdict(same, format!("{} prediction files compared byte for byte", a.len()))
}

// ----------------------------------------------------------------

fn emit(results: &mut Vec<(String, Verdict)>, k: u32, name: &str, v: Verdict, secs: f64) {
    println!("[{}] {k} {name}: {} ({secs:.1} s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    results.push((format!("{k} {name}"), v));
}

fn main() {
    // ignore libtest flags such as --nocapture or filters
    let only: Option<BTreeSet<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().map_or(true, |s| s.contains(&k));
    let cal: Calibration = serde_json::from_str(include_str!("fixtures/acceptance_calibration.json")).unwrap();
    let mut results: Vec<(String, Verdict)> = Vec::new();
    let simple: [(u32, &str, fn() -> Verdict); 5] = [
        (1, "formula suite", formula_suite),
        (2, "oracle equivalence", oracle_equivalence),
        (3, "cut-pursuit energy bounds", energy_bounds),
        (4, "merge contract", merge_contract),
        (5, "gradient check", gradient_check),
    ];
    for (k, name, f) in simple {
        if wanted(k) {
            let t = Instant::now();
            emit(&mut results, k, name, f(), t.elapsed().as_secs_f64());
        }
    }
    if wanted(6) || wanted(7) {
        let t = Instant::now();
        let (six, seven) = end_to_end(&cal);
        let secs = t.elapsed().as_secs_f64();
        emit(&mut results, 6, "end-to-end synthetic run", six, secs);
        emit(&mut results, 7, "ablation (i) C_over 14 vs 2", seven, secs);
    }
    let late: [(u32, &str, fn() -> Verdict); 2] =
        [(7, "ablation (ii) reflectance channels", channel_ablation), (8, "determinism", determinism)];
    for (k, name, f) in late {
        if wanted(k) {
            let t = Instant::now();
            emit(&mut results, k, name, f(), t.elapsed().as_secs_f64());
        }
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0.as_str()).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
