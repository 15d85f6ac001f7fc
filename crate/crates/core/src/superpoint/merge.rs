//! Size-thresholded merging of small superpoints into nearby large ones.

use serde::{Deserialize, Serialize};

use super::dbscan::{dbscan, NOISE};
use super::partition::SuperpointPartition;
use crate::error::{Error, Result};
use crate::spatial::{dist2, VoxelGrid};

/// Starting value of the adaptive size threshold.
pub const PTS_MIN_START: usize = 5;
/// Non-admissible superpoints with at most this many points are re-clustered.
pub const SINGULAR_MAX: usize = 2;

/// How the closest admissible superpoint of a small unit is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NearestRule {
    /// Distance between centroids.
    #[default]
    Centroid,
    /// Smallest distance between any two member points.
    PointPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeConfig {
    pub sp_max: usize,
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
    pub nearest: NearestRule,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig {
            sp_max: 2200,
            dbscan_eps: 0.2,
            dbscan_min_samples: 5,
            nearest: NearestRule::Centroid,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sp_max == 0 {
            return Err(Error::Config("sp_max must be at least 1".into()));
        }
        if !(self.dbscan_eps > 0.0) {
            return Err(Error::Config("dbscan_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Smallest threshold `t ≥ 5` such that at most `sp_max` superpoints have
/// more than `t` points.
pub fn pts_min_threshold(sizes: &[usize], sp_max: usize) -> usize {
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable();
    let count_above = |t: usize| sorted.len() - sorted.partition_point(|&s| s <= t);
    let mut t = PTS_MIN_START;
    if count_above(t) <= sp_max {
        return t;
    }
    // the count only changes at distinct sizes, so jump straight to the
    // smallest size that leaves at most sp_max above it
    let k = sorted.len() - sp_max; // at least this many must be ≤ t
    t = t.max(sorted[k - 1]);
    debug_assert!(count_above(t) <= sp_max && (t == PTS_MIN_START || count_above(t - 1) > sp_max));
    t
}

/// Result of merging, with bookkeeping for reports.
#[derive(Debug, Clone)]
pub struct MergeOutcome {
    pub partition: SuperpointPartition,
    pub pts_min: usize,
    pub admissible: usize,
    pub singular_points: usize,
    pub dbscan_clusters: usize,
}

/// Reduces a partition to at most `sp_max` superpoints, all larger than the
/// adaptive threshold.
pub fn merge_superpoints(
    partition: &SuperpointPartition,
    points: &[[f64; 3]],
    cfg: &MergeConfig,
) -> Result<MergeOutcome> {
    cfg.validate()?;
    if points.len() != partition.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.len(),
            found: points.len(),
        });
    }
    let sizes = partition.sizes();
    let pts_min = pts_min_threshold(sizes, cfg.sp_max);
    let admissible: Vec<usize> = (0..sizes.len()).filter(|&s| sizes[s] > pts_min).collect();
    if admissible.is_empty() {
        return Err(Error::TooFragmented { pts_min });
    }
    let mut new_id = vec![u32::MAX; sizes.len()];
    for (k, &s) in admissible.iter().enumerate() {
        new_id[s] = k as u32;
    }

    // Units to be absorbed: non-singular small superpoints as they are, and
    // the DBSCAN clusters (or single noise points) of the singular ones.
    let members = partition.members();
    let mut units: Vec<Vec<usize>> = Vec::new();
    let mut singular_pts: Vec<usize> = Vec::new();
    for s in 0..sizes.len() {
        if sizes[s] > pts_min {
            continue;
        }
        if sizes[s] <= SINGULAR_MAX {
            singular_pts.extend_from_slice(&members[s]);
        } else {
            units.push(members[s].clone());
        }
    }
    singular_pts.sort_unstable();
    let coords: Vec<[f64; 3]> = singular_pts.iter().map(|&i| points[i]).collect();
    let labels = dbscan(&coords, cfg.dbscan_eps, cfg.dbscan_min_samples);
    let clusters = labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize);
    let mut cluster_units: Vec<Vec<usize>> = vec![Vec::new(); clusters];
    for (&p, &l) in singular_pts.iter().zip(&labels) {
        if l == NOISE {
            units.push(vec![p]);
        } else {
            cluster_units[l as usize].push(p);
        }
    }
    units.extend(cluster_units);

    let mut ids: Vec<u32> = partition.ids().iter().map(|&s| new_id[s as usize]).collect();
    match cfg.nearest {
        NearestRule::Centroid => {
            let centroids: Vec<[f64; 3]> = admissible.iter().map(|&s| partition.centroid(s)).collect();
            for unit in &units {
                let c = centroid_of(unit, points);
                let best = (0..centroids.len())
                    .min_by(|&a, &b| dist2(&c, &centroids[a]).total_cmp(&dist2(&c, &centroids[b])).then(a.cmp(&b)))
                    .unwrap();
                for &p in unit {
                    ids[p] = best as u32;
                }
            }
        }
        NearestRule::PointPair => {
            let adm_pts: Vec<usize> = (0..points.len()).filter(|&i| ids[i] != u32::MAX).collect();
            let adm_coords: Vec<[f64; 3]> = adm_pts.iter().map(|&i| points[i]).collect();
            let grid = VoxelGrid::new(&adm_coords, cfg.dbscan_eps);
            let mut targets = Vec::with_capacity(units.len());
            for unit in &units {
                let mut best = (f64::INFINITY, u32::MAX);
                for &p in unit {
                    if let Some(&(d, j)) = grid.knn(&points[p], 1, None).first() {
                        let cand = (d, ids[adm_pts[j as usize]]);
                        if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                            best = cand;
                        }
                    }
                }
                targets.push(best.1);
            }
            for (unit, t) in units.iter().zip(targets) {
                for &p in unit {
                    ids[p] = t;
                }
            }
        }
    }
    debug_assert!(ids.iter().all(|&i| i != u32::MAX));
    Ok(MergeOutcome {
        partition: SuperpointPartition::from_ids(ids, points)?,
        pts_min,
        admissible: admissible.len(),
        singular_points: singular_pts.len(),
        dbscan_clusters: clusters,
    })
}

fn centroid_of(unit: &[usize], points: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for &p in unit {
        for a in 0..3 {
            c[a] += points[p][a];
        }
    }
    c.map(|v| v / unit.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Literal transcription of the threshold loop.
    fn loop_threshold(sizes: &[usize], sp_max: usize) -> usize {
        let count = |t: usize| sizes.iter().filter(|&&s| s > t).count();
        let mut t = 5;
        while count(t) > sp_max {
            t += 1;
        }
        t
    }

    #[test]
    fn hand_traced_threshold() {
        let sizes = [1, 1, 2, 3, 6, 7, 8, 9, 10, 12];
        assert_eq!(pts_min_threshold(&sizes, 4), 7);
        assert_eq!(loop_threshold(&sizes, 4), 7);
    }

    #[test]
    fn threshold_matches_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.gen_range(1..60);
            let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..40)).collect();
            let sp_max = rng.gen_range(1..30);
            assert_eq!(pts_min_threshold(&sizes, sp_max), loop_threshold(&sizes, sp_max));
        }
    }

    fn line_partition(sizes: &[usize]) -> (Vec<[f64; 3]>, SuperpointPartition) {
        let mut pts = Vec::new();
        let mut ids = Vec::new();
        for (s, &n) in sizes.iter().enumerate() {
            for k in 0..n {
                pts.push([s as f64 * 3.0 + k as f64 * 0.01, 0.0, 0.0]);
                ids.push(s as u32);
            }
        }
        let p = SuperpointPartition::from_ids(ids, &pts).unwrap();
        (pts, p)
    }

    #[test]
    fn admissible_partition_is_unchanged() {
        let (pts, p) = line_partition(&[8, 9, 10]);
        let out = merge_superpoints(&p, &pts, &MergeConfig::default()).unwrap();
        assert_eq!(out.partition, p);
    }

    #[test]
    fn small_superpoints_join_nearest() {
        let (pts, p) = line_partition(&[10, 1, 3, 10]);
        let cfg = MergeConfig { sp_max: 4, ..Default::default() };
        let out = merge_superpoints(&p, &pts, &cfg).unwrap();
        assert_eq!(out.partition.count(), 2);
        // superpoint 1 (x≈3) is closer to 0 (x≈0.05) than to 3 (x≈9.05)
        assert_eq!(out.partition.id(10), 0);
        // superpoint 2 (x≈6) is closer to 3
        assert_eq!(out.partition.id(11), 1);
        for rule in [NearestRule::Centroid, NearestRule::PointPair] {
            let cfg = MergeConfig { sp_max: 4, nearest: rule, ..Default::default() };
            assert_eq!(merge_superpoints(&p, &pts, &cfg).unwrap().partition.count(), 2);
        }
    }

    #[test]
    fn all_tiny_is_too_fragmented() {
        let (pts, p) = line_partition(&[2, 3, 5]);
        assert!(matches!(
            merge_superpoints(&p, &pts, &MergeConfig::default()),
            Err(Error::TooFragmented { pts_min: 5 })
        ));
    }
}
