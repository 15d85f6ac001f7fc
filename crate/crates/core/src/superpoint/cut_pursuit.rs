//! Working-set ℓ0 cut pursuit for piecewise-constant graph signals.
//!
//! Minimizes `Σ_i |g_i - f_i|² + λ Σ_(i,j)∈E w_ij [g_i ≠ g_j]` approximately.
//! The solution is kept as a partition into connected components, each
//! carrying the mean of its features. Every outer iteration
//!
//! 1. tries a binary split of each component: two candidate values are
//!    seeded from the component's extreme points, then alternately refined
//!    by a graph cut (unary: squared distance to each value, pairwise:
//!    `λ w_ij`) and by recomputing the two means;
//! 2. keeps a split only if the energy drops, with each side broken into
//!    its connected pieces;
//! 3. greedily merges adjacent components while a merge lowers the energy;
//! 4. moves single vertices to a neighbouring component, or out on their
//!    own, when that lowers the energy, which repairs misplaced boundaries
//!    and reaches fine partitions that no binary split improves towards.
//!
//! Accepted moves strictly decrease the energy, so the recorded history is
//! non-increasing and the result never exceeds the one-component-per-region
//! energy it starts from.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use super::graph::UndirectedGraph;
use super::maxflow::MaxFlow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutPursuitConfig {
    /// Regularization strength λ.
    pub lambda: f64,
    /// Scalar applied to the geometric descriptors before solving.
    pub feature_weight: f64,
    /// Cap on outer split/merge iterations.
    pub max_iterations: usize,
    /// Graph-cut / mean refinements per split attempt.
    pub split_iterations: usize,
    /// Relative energy decrease below which a move is rejected.
    pub flow_tolerance: f64,
    /// Cap on single-vertex refinement sweeps per outer iteration.
    pub refine_sweeps: usize,
}

impl Default for CutPursuitConfig {
    fn default() -> Self {
        CutPursuitConfig {
            lambda: 0.1,
            feature_weight: 10.0,
            max_iterations: 10,
            split_iterations: 3,
            flow_tolerance: 1e-12,
            refine_sweeps: 10,
        }
    }
}

impl CutPursuitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !self.feature_weight.is_finite() {
            return Err(Error::Config("feature_weight must be finite".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant solution: component label per vertex and the value
/// (feature mean) of every component.
#[derive(Debug, Clone, PartialEq)]
pub struct CutPursuitSolution {
    pub dim: usize,
    pub components: Vec<u32>,
    pub values: Vec<f64>,
    /// Energy at the start and after every outer iteration.
    pub energy_history: Vec<f64>,
}

impl CutPursuitSolution {
    pub fn component_count(&self) -> usize {
        self.values.len() / self.dim.max(1)
    }

    /// Value of vertex `i`.
    pub fn value(&self, i: usize) -> &[f64] {
        let c = self.components[i] as usize;
        &self.values[c * self.dim..(c + 1) * self.dim]
    }

    /// Per-vertex values as one flat `n × dim` array.
    pub fn expanded(&self) -> Vec<f64> {
        (0..self.components.len()).flat_map(|i| self.value(i).to_vec()).collect()
    }

    pub fn energy(&self) -> f64 {
        *self.energy_history.last().unwrap_or(&0.0)
    }
}

/// Evaluates the objective for per-vertex values `g` (flat `n × dim`).
pub fn energy(graph: &UndirectedGraph, features: &[f64], g: &[f64], dim: usize, lambda: f64) -> f64 {
    let fidelity: f64 = features.iter().zip(g).map(|(f, v)| (v - f) * (v - f)).sum();
    let penalty: f64 = graph
        .edges()
        .iter()
        .filter(|&&(u, v, _)| {
            let (u, v) = (u as usize, v as usize);
            g[u * dim..(u + 1) * dim] != g[v * dim..(v + 1) * dim]
        })
        .map(|e| e.2)
        .sum();
    fidelity + lambda * penalty
}

struct Solver<'a> {
    graph: &'a UndirectedGraph,
    f: &'a [f64],
    dim: usize,
    lambda: f64,
    tol: f64,
    split_iterations: usize,
    comp: Vec<u32>,
    members: Vec<Vec<u32>>,
    flow: MaxFlow,
    local: Vec<u32>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl<'a> Solver<'a> {
    fn feat(&self, i: usize) -> &'a [f64] {
        &self.f[i * self.dim..(i + 1) * self.dim]
    }

    fn mean_of(&self, idx: impl Iterator<Item = usize>) -> (Vec<f64>, usize) {
        let mut m = vec![0.0; self.dim];
        let mut n = 0;
        for i in idx {
            for (a, b) in m.iter_mut().zip(self.feat(i)) {
                *a += b;
            }
            n += 1;
        }
        if n > 0 {
            for a in &mut m {
                *a /= n as f64;
            }
        }
        (m, n)
    }

    fn sse(&self, idx: &[u32], mean: &[f64]) -> f64 {
        idx.iter().map(|&i| sq_dist(self.feat(i as usize), mean)).sum()
    }

    /// Splits component `c` if that lowers the energy; returns the new pieces.
    fn try_split(&mut self, c: usize) -> Option<Vec<Vec<u32>>> {
        let members = std::mem::take(&mut self.members[c]);
        let result = self.split_members(c as u32, &members);
        self.members[c] = members;
        result
    }

    fn split_members(&mut self, c: u32, members: &[u32]) -> Option<Vec<Vec<u32>>> {
        if members.len() < 2 {
            return None;
        }
        let (mean, _) = self.mean_of(members.iter().map(|&i| i as usize));
        let base_sse = self.sse(members, &mean);
        if base_sse <= 0.0 {
            return None;
        }
        let far = |from: &[f64]| -> usize {
            let mut best = (-1.0, 0usize);
            for &i in members {
                let d = sq_dist(self.feat(i as usize), from);
                if d > best.0 {
                    best = (d, i as usize);
                }
            }
            best.1
        };
        let a = far(&mean);
        let b = far(self.feat(a));
        let mut h0 = self.feat(a).to_vec();
        let mut h1 = self.feat(b).to_vec();

        for (k, &i) in members.iter().enumerate() {
            self.local[i as usize] = k as u32;
        }
        let n = members.len();
        let (src, sink) = (n, n + 1);
        let mut best: Option<(f64, Vec<Vec<u32>>)> = None;
        for _ in 0..self.split_iterations.max(1) {
            self.flow.reset(n + 2);
            for (k, &i) in members.iter().enumerate() {
                let fi = self.feat(i as usize);
                let c0 = sq_dist(fi, &h0);
                let c1 = sq_dist(fi, &h1);
                // source side = value h0
                if c1 > c0 {
                    self.flow.add_edge(src, k, c1 - c0, 0.0);
                } else if c0 > c1 {
                    self.flow.add_edge(k, sink, c0 - c1, 0.0);
                }
                for (j, w) in self.graph.neighbors(i as usize) {
                    if j > i as usize && self.comp[j] == c {
                        let cap = self.lambda * w;
                        self.flow.add_edge(k, self.local[j] as usize, cap, cap);
                    }
                }
            }
            self.flow.solve(src, sink);
            let side = self.flow.source_side(src);
            let side0 = |i: u32| side[self.local[i as usize] as usize];
            let (m0, n0) = self.mean_of(members.iter().filter(|&&i| side0(i)).map(|&i| i as usize));
            let (m1, n1) = self.mean_of(members.iter().filter(|&&i| !side0(i)).map(|&i| i as usize));
            if n0 == 0 || n1 == 0 {
                break;
            }
            let pieces = self.pieces(c, members, &side0);
            let delta = self.split_delta(c, &pieces, base_sse);
            if delta < -self.tol * (1.0 + base_sse) && best.as_ref().is_none_or(|b| delta < b.0) {
                best = Some((delta, pieces));
            }
            if m0 == h0 && m1 == h1 {
                break;
            }
            h0 = m0;
            h1 = m1;
        }
        best.map(|b| b.1)
    }

    /// Connected pieces of each side of a split, within component `c`.
    fn pieces(&self, c: u32, members: &[u32], side0: &impl Fn(u32) -> bool) -> Vec<Vec<u32>> {
        let mut seen = std::collections::HashSet::with_capacity(members.len());
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for &s in members {
            if !seen.insert(s) {
                continue;
            }
            let label = side0(s);
            let mut piece = vec![s];
            stack.push(s);
            while let Some(v) = stack.pop() {
                for (u, _) in self.graph.neighbors(v as usize) {
                    let u = u as u32;
                    if self.comp[u as usize] == c && side0(u) == label && seen.insert(u) {
                        piece.push(u);
                        stack.push(u);
                    }
                }
            }
            piece.sort_unstable();
            out.push(piece);
        }
        out
    }

    /// Energy change from replacing component `c` by `pieces`.
    fn split_delta(&self, c: u32, pieces: &[Vec<u32>], base_sse: f64) -> f64 {
        let mut piece_of = std::collections::HashMap::with_capacity(pieces.iter().map(Vec::len).sum());
        let mut sse = 0.0;
        for (k, p) in pieces.iter().enumerate() {
            let (m, _) = self.mean_of(p.iter().map(|&i| i as usize));
            sse += self.sse(p, &m);
            for &i in p {
                piece_of.insert(i, k);
            }
        }
        let mut boundary = 0.0;
        for p in pieces {
            for &i in p {
                for (j, w) in self.graph.neighbors(i as usize) {
                    if j > i as usize && self.comp[j] == c && piece_of[&(j as u32)] != piece_of[&i] {
                        boundary += w;
                    }
                }
            }
        }
        sse - base_sse + self.lambda * boundary
    }

    fn relabel_from_members(&mut self) {
        for (c, m) in self.members.iter().enumerate() {
            for &i in m {
                self.comp[i as usize] = c as u32;
            }
        }
    }

    /// Greedy merging of adjacent components while the energy decreases.
    fn merge_pass(&mut self) -> bool {
        let k = self.members.len();
        let mut size: Vec<f64> = self.members.iter().map(|m| m.len() as f64).collect();
        let mut sum: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|m| {
                let (mean, n) = self.mean_of(m.iter().map(|&i| i as usize));
                mean.into_iter().map(|v| v * n as f64).collect()
            })
            .collect();
        let mut adj: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); k];
        for &(u, v, w) in self.graph.edges() {
            let (a, b) = (self.comp[u as usize], self.comp[v as usize]);
            if a != b {
                *adj[a as usize].entry(b).or_insert(0.0) += w;
                *adj[b as usize].entry(a).or_insert(0.0) += w;
            }
        }
        let lambda = self.lambda;
        let dim = self.dim;
        let gain = |size: &[f64], sum: &[Vec<f64>], a: usize, b: usize, w: f64| -> f64 {
            let (na, nb) = (size[a], size[b]);
            let mut d2 = 0.0;
            for t in 0..dim {
                let diff = sum[a][t] / na - sum[b][t] / nb;
                d2 += diff * diff;
            }
            lambda * w - na * nb / (na + nb) * d2
        };
        let mut version = vec![0u32; k];
        let mut alive = vec![true; k];
        let mut heap = BinaryHeap::new();
        for a in 0..k {
            for (&b, &w) in &adj[a] {
                if (a as u32) < b {
                    let g = gain(&size, &sum, a, b as usize, w);
                    if g > self.tol {
                        heap.push(Candidate { gain: g, a: a as u32, b, va: 0, vb: 0 });
                    }
                }
            }
        }
        let mut merged_into: Vec<u32> = (0..k as u32).collect();
        let mut any = false;
        while let Some(cand) = heap.pop() {
            let (a, b) = (cand.a as usize, cand.b as usize);
            if !alive[a] || !alive[b] || version[a] != cand.va || version[b] != cand.vb {
                continue;
            }
            any = true;
            // fold b into a
            alive[b] = false;
            merged_into[b] = a as u32;
            size[a] += size[b];
            let sb = std::mem::take(&mut sum[b]);
            for (x, y) in sum[a].iter_mut().zip(sb) {
                *x += y;
            }
            let adj_b = std::mem::take(&mut adj[b]);
            adj[a].remove(&(b as u32));
            for (&c, &w) in &adj_b {
                if c as usize == a {
                    continue;
                }
                *adj[a].entry(c).or_insert(0.0) += w;
                let ac = &mut adj[c as usize];
                ac.remove(&(b as u32));
                *ac.entry(a as u32).or_insert(0.0) += w;
            }
            version[a] += 1;
            for (&c, &w) in &adj[a] {
                let c = c as usize;
                let g = gain(&size, &sum, a, c, w);
                if g > self.tol {
                    let (x, y) = if a < c { (a, c) } else { (c, a) };
                    heap.push(Candidate {
                        gain: g,
                        a: x as u32,
                        b: y as u32,
                        va: version[x],
                        vb: version[y],
                    });
                }
            }
        }
        if !any {
            return false;
        }
        let root = |mut c: usize| {
            while merged_into[c] as usize != c {
                c = merged_into[c] as usize;
            }
            c
        };
        let mut new_members: Vec<Vec<u32>> = vec![Vec::new(); k];
        for c in 0..k {
            let r = root(c);
            let m = std::mem::take(&mut self.members[c]);
            new_members[r].extend(m);
        }
        self.members = new_members
            .into_iter()
            .filter(|m| !m.is_empty())
            .map(|mut m| {
                m.sort_unstable();
                m
            })
            .collect();
        self.relabel_from_members();
        true
    }

    /// Single-vertex moves: each vertex may join an adjacent component or
    /// leave its own as a singleton, whichever lowers the energy most.
    /// Sweeps until no move helps, then re-splits components into their
    /// connected pieces. Returns whether anything moved.
    fn refine_pass(&mut self, max_sweeps: usize) -> bool {
        let dim = self.dim;
        let mut size: Vec<f64> = self.members.iter().map(|m| m.len() as f64).collect();
        let mut sum: Vec<f64> = vec![0.0; self.members.len() * dim];
        for (i, &c) in self.comp.iter().enumerate() {
            for (s, x) in sum[c as usize * dim..(c as usize + 1) * dim].iter_mut().zip(self.feat(i)) {
                *s += x;
            }
        }
        let dist_to_mean = |sum: &[f64], size: &[f64], c: usize, f: &[f64]| -> f64 {
            (0..dim).map(|t| (f[t] - sum[c * dim + t] / size[c]).powi(2)).sum()
        };
        let mut moved = false;
        let mut links: Vec<(u32, f64)> = Vec::new();
        for _ in 0..max_sweeps {
            let mut sweep_moved = false;
            for v in 0..self.comp.len() {
                let a = self.comp[v] as usize;
                let fv = self.feat(v);
                links.clear();
                for (u, w) in self.graph.neighbors(v) {
                    let c = self.comp[u];
                    match links.iter_mut().find(|l| l.0 == c) {
                        Some(l) => l.1 += w,
                        None => links.push((c, w)),
                    }
                }
                let w_own = links.iter().find(|l| l.0 as usize == a).map_or(0.0, |l| l.1);
                let leave = if size[a] > 1.0 {
                    -size[a] / (size[a] - 1.0) * dist_to_mean(&sum, &size, a, fv)
                } else {
                    0.0
                };
                // (energy change, target); u32::MAX stands for a new singleton
                let mut best = (0.0, u32::MAX);
                if size[a] > 1.0 {
                    best = (leave + self.lambda * w_own, u32::MAX);
                }
                for &(b, w_b) in &links {
                    let b_us = b as usize;
                    if b_us == a {
                        continue;
                    }
                    let join = size[b_us] / (size[b_us] + 1.0) * dist_to_mean(&sum, &size, b_us, fv);
                    let delta = leave + join + self.lambda * (w_own - w_b);
                    if delta < best.0 || (delta == best.0 && b < best.1) {
                        best = (delta, b);
                    }
                }
                let scale = 1.0 + leave.abs() + self.lambda * w_own;
                if best.0 >= -self.tol.max(1e-12) * scale {
                    continue;
                }
                let target = if best.1 == u32::MAX {
                    size.push(0.0);
                    sum.extend(std::iter::repeat_n(0.0, dim));
                    (size.len() - 1) as u32
                } else {
                    best.1
                };
                let t = target as usize;
                size[a] -= 1.0;
                size[t] += 1.0;
                for k in 0..dim {
                    sum[a * dim + k] -= fv[k];
                    sum[t * dim + k] += fv[k];
                }
                if size[a] == 0.0 {
                    sum[a * dim..(a + 1) * dim].fill(0.0);
                }
                self.comp[v] = target;
                sweep_moved = true;
            }
            if !sweep_moved {
                break;
            }
            moved = true;
        }
        if moved {
            let comp = &self.comp;
            let pieces = self.graph.components_where(|u, v| comp[u] == comp[v]);
            let k = pieces.iter().max().map_or(0, |&c| c as usize + 1);
            let mut members = vec![Vec::new(); k];
            for (i, &c) in pieces.iter().enumerate() {
                members[c as usize].push(i as u32);
            }
            self.members = members;
            self.relabel_from_members();
        }
        moved
    }

    fn solution_values(&self) -> Vec<f64> {
        let mut vals = Vec::with_capacity(self.members.len() * self.dim);
        for m in &self.members {
            let (mean, _) = self.mean_of(m.iter().map(|&i| i as usize));
            vals.extend(mean);
        }
        vals
    }

    fn current_energy(&self) -> f64 {
        let vals = self.solution_values();
        let g: Vec<f64> = (0..self.comp.len())
            .flat_map(|i| {
                let c = self.comp[i] as usize;
                vals[c * self.dim..(c + 1) * self.dim].to_vec()
            })
            .collect();
        energy(self.graph, self.f, &g, self.dim, self.lambda)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    a: u32,
    b: u32,
    va: u32,
    vb: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.a.cmp(&self.a))
            .then_with(|| other.b.cmp(&self.b))
            .then_with(|| self.va.cmp(&other.va))
            .then_with(|| self.vb.cmp(&other.vb))
    }
}

/// Solves the ℓ0-regularized problem on `graph` for flat `n × dim` features.
pub fn cut_pursuit(
    graph: &UndirectedGraph,
    features: &[f64],
    dim: usize,
    lambda: f64,
    cfg: &CutPursuitConfig,
) -> Result<CutPursuitSolution> {
    let n = graph.vertex_count();
    if dim == 0 || features.len() != n * dim {
        return Err(Error::DimensionMismatch {
            expected: n * dim.max(1),
            found: features.len(),
        });
    }
    if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature {} of vertex {}", pos % dim, pos / dim)));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be non-negative, got {lambda}")));
    }
    let comp = graph.connected_components();
    let k = comp.iter().max().map_or(0, |&c| c as usize + 1);
    let mut members = vec![Vec::new(); k];
    for (i, &c) in comp.iter().enumerate() {
        members[c as usize].push(i as u32);
    }
    let mut s = Solver {
        graph,
        f: features,
        dim,
        lambda,
        tol: cfg.flow_tolerance,
        split_iterations: cfg.split_iterations,
        comp,
        members,
        flow: MaxFlow::new(),
        local: vec![0; n],
    };
    let mut history = vec![s.current_energy()];
    for _ in 0..cfg.max_iterations {
        let mut changed = false;
        let count = s.members.len();
        let mut next: Vec<Vec<u32>> = Vec::with_capacity(count);
        for c in 0..count {
            match s.try_split(c) {
                Some(pieces) => {
                    changed = true;
                    next.extend(pieces);
                }
                None => next.push(std::mem::take(&mut s.members[c])),
            }
        }
        s.members = next;
        s.relabel_from_members();
        if s.merge_pass() {
            changed = true;
        }
        if s.refine_pass(cfg.refine_sweeps) {
            changed = true;
        }
        let e = s.current_energy();
        history.push(e);
        if !changed {
            break;
        }
    }
    let values = s.solution_values();
    Ok(CutPursuitSolution {
        dim,
        components: s.comp,
        values,
        energy_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: usize) -> UndirectedGraph {
        UndirectedGraph::from_edges(n, (0..n.saturating_sub(1)).map(|i| (i as u32, i as u32 + 1, 1.0)))
    }

    #[test]
    fn tiny_lambda_reproduces_features() {
        let g = chain(6);
        let f: Vec<f64> = vec![0.0, 1.0, 5.0, 2.0, -3.0, 4.0];
        let sol = cut_pursuit(&g, &f, 1, 1e-12, &CutPursuitConfig::default()).unwrap();
        assert!(sol.energy() < 1e-9, "{}", sol.energy());
        for (a, b) in sol.expanded().iter().zip(&f) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn huge_lambda_gives_global_mean() {
        let g = chain(5);
        let f = vec![1.0, 2.0, 3.0, 4.0, 10.0];
        let sol = cut_pursuit(&g, &f, 1, 1e6, &CutPursuitConfig::default()).unwrap();
        assert_eq!(sol.component_count(), 1);
        assert!((sol.values[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_blobs_split_at_boundary() {
        let g = chain(12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<f64> = (0..12)
            .flat_map(|i| {
                let base = if i < 5 { 0.0 } else { 3.0 };
                vec![base + rng.gen_range(-0.05..0.05), -base + rng.gen_range(-0.05..0.05)]
            })
            .collect();
        let sol = cut_pursuit(&g, &f, 2, 0.1, &CutPursuitConfig::default()).unwrap();
        assert_eq!(sol.component_count(), 2);
        assert!(sol.components[..5].iter().all(|&c| c == sol.components[0]));
        assert!(sol.components[5..].iter().all(|&c| c == sol.components[5]));
    }

    #[test]
    fn disconnected_regions_stay_apart() {
        let g = UndirectedGraph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]);
        let f = vec![1.0; 4];
        let sol = cut_pursuit(&g, &f, 1, 0.1, &CutPursuitConfig::default()).unwrap();
        assert_eq!(sol.component_count(), 2);
        assert_eq!(sol.energy(), 0.0);
    }

    #[test]
    fn non_finite_features_rejected() {
        let g = chain(2);
        assert!(matches!(
            cut_pursuit(&g, &[0.0, f64::NAN], 1, 0.1, &CutPursuitConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn component_values_are_feature_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 80;
        let edges: Vec<(u32, u32, f64)> = (0..n * 3)
            .map(|_| (rng.gen_range(0..n) as u32, rng.gen_range(0..n) as u32, rng.gen_range(0.2..3.0)))
            .collect();
        let g = UndirectedGraph::from_edges(n, edges);
        let f: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sol = cut_pursuit(&g, &f, 3, 0.05, &CutPursuitConfig::default()).unwrap();
        for c in 0..sol.component_count() {
            let idx: Vec<usize> = (0..n).filter(|&i| sol.components[i] as usize == c).collect();
            for t in 0..3 {
                let m = idx.iter().map(|&i| f[i * 3 + t]).sum::<f64>() / idx.len() as f64;
                assert!((sol.values[c * 3 + t] - m).abs() < 1e-9);
            }
        }
        assert!(sol.energy_history.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }
}
