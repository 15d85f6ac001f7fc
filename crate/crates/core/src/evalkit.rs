//! Confusion matrices, optimal label matching and accuracy metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pcdata::UNLABELED;

/// Maximum-weight perfect matching on a rectangular matrix of non-negative
/// scores (`rows × cols`). Returns the column matched to each row, or `None`
/// for rows left over when there are more rows than columns.
pub fn hungarian_assign(scores: &[Vec<u64>]) -> Vec<Option<usize>> {
    let rows = scores.len();
    let cols = scores.first().map_or(0, Vec::len);
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let big = scores.iter().flatten().copied().max().unwrap_or(0) as i64;
    // square cost matrix; padded cells score zero
    let cost = |i: usize, j: usize| -> i64 {
        let s = if i < rows && j < cols { scores[i][j] as i64 } else { 0 };
        big - s
    };
    // shortest augmenting path with potentials, 1-based with a dummy column 0
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![None; rows];
    for j in 1..=n {
        let i = p[j];
        if i >= 1 && i - 1 < rows && j - 1 < cols {
            assign[i - 1] = Some(j - 1);
        }
    }
    assign
}

/// Evaluation summary. Rows of `confusion` are ground-truth classes, columns
/// the ground-truth class each prediction was mapped to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Vec<Vec<u64>>,
    /// Points per ground-truth class whose predicted cluster got no class.
    pub unmatched: Vec<u64>,
    /// Predicted cluster id → ground-truth class.
    pub assignment: Vec<Option<usize>>,
    pub oacc: f64,
    pub macc: f64,
    /// `None` for a class absent from the ground truth.
    pub class_accuracy: Vec<Option<f64>>,
    /// `None` when a class is neither present nor predicted.
    pub iou: Vec<Option<f64>>,
    pub miou: f64,
    pub evaluated: u64,
}

/// Matches predicted cluster ids to the `classes` ground-truth classes and
/// computes overall accuracy, mean class accuracy, per-class and mean IoU.
/// Points labeled 255 are skipped.
pub fn compute_metrics(gt: &[u8], pred: &[u8], classes: usize) -> Result<MetricsReport> {
    compute_metrics_ids(gt, &pred.iter().map(|&p| p as u32).collect::<Vec<_>>(), classes)
}

/// As [`compute_metrics`] with arbitrary predicted cluster ids.
pub fn compute_metrics_ids(gt: &[u8], pred: &[u32], classes: usize) -> Result<MetricsReport> {
    if gt.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: gt.len(),
            found: pred.len(),
        });
    }
    if let Some(&bad) = gt.iter().find(|&&g| g != UNLABELED && g as usize >= classes) {
        return Err(Error::InvalidArgument(format!("ground-truth class {bad} out of range")));
    }
    let clusters = gt
        .iter()
        .zip(pred)
        .filter(|(&g, _)| g != UNLABELED)
        .map(|(_, &p)| p as usize + 1)
        .max()
        .unwrap_or(0);
    let mut inter = vec![vec![0u64; classes]; clusters];
    for (&g, &p) in gt.iter().zip(pred) {
        if g != UNLABELED {
            inter[p as usize][g as usize] += 1;
        }
    }
    let assignment = hungarian_assign(&inter);
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut unmatched = vec![0u64; classes];
    for (p, row) in inter.iter().enumerate() {
        for (g, &n) in row.iter().enumerate() {
            match assignment[p] {
                Some(c) => confusion[g][c] += n,
                None => unmatched[g] += n,
            }
        }
    }
    Ok(report_from_confusion(confusion, unmatched, assignment))
}

fn mean_defined(xs: &[Option<f64>]) -> f64 {
    let d: Vec<f64> = xs.iter().flatten().copied().collect();
    if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    }
}

fn report_from_confusion(confusion: Vec<Vec<u64>>, unmatched: Vec<u64>, assignment: Vec<Option<usize>>) -> MetricsReport {
    let c = confusion.len();
    let total_gt: Vec<u64> = (0..c).map(|g| confusion[g].iter().sum::<u64>() + unmatched[g]).collect();
    let total_pred: Vec<u64> = (0..c).map(|k| (0..c).map(|g| confusion[g][k]).sum()).collect();
    let evaluated: u64 = total_gt.iter().sum();
    let tp: Vec<u64> = (0..c).map(|k| confusion[k][k]).collect();
    let class_accuracy: Vec<Option<f64>> = (0..c)
        .map(|k| (total_gt[k] > 0).then(|| tp[k] as f64 / total_gt[k] as f64))
        .collect();
    for (k, a) in class_accuracy.iter().enumerate() {
        if a.is_none() {
            log::warn!("class {k} absent from ground truth; excluded from mAcc");
        }
    }
    let iou: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let union = total_gt[k] + total_pred[k] - tp[k];
            (union > 0).then(|| tp[k] as f64 / union as f64)
        })
        .collect();
    MetricsReport {
        oacc: if evaluated > 0 { tp.iter().sum::<u64>() as f64 / evaluated as f64 } else { 0.0 },
        macc: mean_defined(&class_accuracy),
        miou: mean_defined(&iou),
        confusion,
        unmatched,
        assignment,
        class_accuracy,
        iou,
        evaluated,
    }
}

/// Class names used in tables for the two-class problem.
pub const CLASS_NAMES: [&str; 2] = ["foliage", "wood"];

impl MetricsReport {
    /// Fixed-width text table with one row per report, percentages.
    pub fn table(rows: &[(&str, &MetricsReport)]) -> String {
        let classes = rows.first().map_or(0, |r| r.1.iou.len());
        let mut out = String::new();
        let _ = write!(out, "{:<24} {:>7} {:>7}", "method", "oAcc", "mAcc");
        for k in 0..classes {
            let name = CLASS_NAMES.get(k).map_or_else(|| format!("class{k}"), |s| s.to_string());
            let _ = write!(out, " {:>9}", format!("IoU {name}"));
        }
        let _ = writeln!(out, " {:>7}", "mIoU");
        for (name, r) in rows {
            let _ = write!(out, "{:<24} {:>7.1} {:>7.1}", name, 100.0 * r.oacc, 100.0 * r.macc);
            for v in &r.iou {
                match v {
                    Some(v) => {
                        let _ = write!(out, " {:>9.1}", 100.0 * v);
                    }
                    None => {
                        let _ = write!(out, " {:>9}", "-");
                    }
                }
            }
            let _ = writeln!(out, " {:>7.1}", 100.0 * r.miou);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_examples() {
        assert_eq!(hungarian_assign(&[vec![5, 1], vec![2, 7]]), vec![Some(0), Some(1)]);
        assert_eq!(hungarian_assign(&[vec![0, 9], vec![9, 0]]), vec![Some(1), Some(0)]);
    }

    #[test]
    fn rectangular_leaves_rows_unmatched() {
        let a = hungarian_assign(&[vec![1, 0], vec![0, 1], vec![5, 5]]);
        assert_eq!(a.iter().filter(|x| x.is_none()).count(), 1);
        assert_eq!(a[2].is_some(), true);
    }

    #[test]
    fn worked_example() {
        let r = compute_metrics(&[0, 0, 0, 1], &[0, 0, 1, 1], 2).unwrap();
        assert!((r.oacc - 0.75).abs() < 1e-12);
        assert!((r.macc - 5.0 / 6.0).abs() < 1e-12);
        assert!((r.iou[0].unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.iou[1].unwrap() - 0.5).abs() < 1e-12);
        assert!((r.miou - 7.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_swapped_predictions() {
        let gt = [0, 1, 1, 0, 255];
        let r = compute_metrics(&gt, &[1, 0, 0, 1, 0], 2).unwrap();
        assert_eq!((r.oacc, r.macc, r.miou), (1.0, 1.0, 1.0));
        assert_eq!(r.evaluated, 4);
    }

    #[test]
    fn absent_class_excluded_from_macc() {
        let r = compute_metrics(&[0, 0, 0], &[0, 0, 1], 2).unwrap();
        assert_eq!(r.class_accuracy[1], None);
        assert!((r.macc - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.iou[1], Some(0.0));
    }

    #[test]
    fn table_has_header_and_row() {
        let r = compute_metrics(&[0, 1], &[0, 1], 2).unwrap();
        let t = MetricsReport::table(&[("x", &r)]);
        assert!(t.contains("mIoU") && t.contains("100.0"));
    }
}
