//! Dinic max-flow on real capacities, used for the binary splits of cut pursuit.

use std::collections::VecDeque;

const NONE: u32 = u32::MAX;

#[derive(Debug, Default)]
pub struct MaxFlow {
    head: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<f64>,
    level: Vec<i32>,
    iter: Vec<u32>,
}

impl MaxFlow {
    pub fn new() -> Self {
        Self::default()
    }

    /// Clears all edges and sets the node count, keeping allocations.
    pub fn reset(&mut self, nodes: usize) {
        self.head.clear();
        self.head.resize(nodes, NONE);
        self.next.clear();
        self.to.clear();
        self.cap.clear();
    }

    pub fn node_count(&self) -> usize {
        self.head.len()
    }

    /// Adds `u -> v` with capacity `forward` and `v -> u` with `backward`.
    pub fn add_edge(&mut self, u: usize, v: usize, forward: f64, backward: f64) {
        debug_assert!(forward >= 0.0 && backward >= 0.0);
        let e = self.to.len() as u32;
        self.to.push(v as u32);
        self.cap.push(forward);
        self.next.push(self.head[u]);
        self.head[u] = e;
        self.to.push(u as u32);
        self.cap.push(backward);
        self.next.push(self.head[v]);
        self.head[v] = e + 1;
    }

    fn bfs(&mut self, s: usize, t: usize) -> bool {
        self.level.clear();
        self.level.resize(self.head.len(), -1);
        let mut queue = VecDeque::new();
        self.level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != NONE {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0.0 && self.level[v] < 0 {
                    self.level[v] = self.level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e as usize];
            }
        }
        self.level[t] >= 0
    }

    /// Sends one blocking flow through the level graph, iteratively.
    fn blocking_flow(&mut self, s: usize, t: usize) -> f64 {
        let mut total = 0.0;
        let mut path: Vec<u32> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let mut bottleneck = f64::INFINITY;
                for &e in &path {
                    bottleneck = bottleneck.min(self.cap[e as usize]);
                }
                let mut retreat_to = path.len();
                for (k, &e) in path.iter().enumerate() {
                    let e = e as usize;
                    self.cap[e] -= bottleneck;
                    self.cap[e ^ 1] += bottleneck;
                    if self.cap[e] <= 0.0 && retreat_to == path.len() {
                        self.cap[e] = 0.0;
                        retreat_to = k;
                    }
                }
                total += bottleneck;
                path.truncate(retreat_to);
                u = match path.last() {
                    Some(&e) => self.to[e as usize] as usize,
                    None => s,
                };
                continue;
            }
            let mut advanced = false;
            while self.iter[u] != NONE {
                let e = self.iter[u] as usize;
                let v = self.to[e] as usize;
                if self.cap[e] > 0.0 && self.level[v] == self.level[u] + 1 {
                    path.push(e as u32);
                    u = v;
                    advanced = true;
                    break;
                }
                self.iter[u] = self.next[e];
            }
            if advanced {
                continue;
            }
            // dead end: prune the node and step back
            self.level[u] = -1;
            match path.pop() {
                Some(e) => {
                    u = self.to[(e ^ 1) as usize] as usize;
                    self.iter[u] = self.next[e as usize];
                }
                None => return total,
            }
        }
    }

    /// Maximum flow value from `s` to `t`.
    pub fn solve(&mut self, s: usize, t: usize) -> f64 {
        let mut flow = 0.0;
        while self.bfs(s, t) {
            self.iter.clear();
            self.iter.extend_from_slice(&self.head);
            flow += self.blocking_flow(s, t);
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph (the source side of a
    /// minimum cut once [`solve`](Self::solve) has run).
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.head.len()];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            let mut e = self.head[u];
            while e != NONE {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0.0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
                e = self.next[e as usize];
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1, max flow 23
        let mut f = MaxFlow::new();
        f.reset(6);
        for (u, v, c) in [(0, 1, 16.0), (0, 2, 13.0), (2, 1, 4.0), (1, 3, 12.0), (3, 2, 9.0), (2, 4, 14.0), (4, 3, 7.0), (3, 5, 20.0), (4, 5, 4.0)] {
            f.add_edge(u, v, c, 0.0);
        }
        assert_eq!(f.solve(0, 5), 23.0);
        let side = f.source_side(0);
        assert!(side[0] && !side[5]);
    }

    /// Min-cut value by enumerating every s/t bipartition.
    fn brute_min_cut(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
        let mut best = f64::INFINITY;
        for mask in 0..(1u32 << (n - 2)) {
            let in_s = |v: usize| v == 0 || (v != n - 1 && (mask >> (v - 1)) & 1 == 1);
            let cut: f64 = edges.iter().filter(|(u, v, _)| in_s(*u) && !in_s(*v)).map(|e| e.2).sum();
            best = best.min(cut);
        }
        best
    }

    #[test]
    fn random_graphs_match_enumerated_min_cut() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.gen_range(2..9);
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u != v && rng.gen_bool(0.4) {
                        edges.push((u, v, rng.gen_range(0.0..5.0)));
                    }
                }
            }
            let mut f = MaxFlow::new();
            f.reset(n);
            for &(u, v, c) in &edges {
                f.add_edge(u, v, c, 0.0);
            }
            let flow = f.solve(0, n - 1);
            let side = f.source_side(0);
            let cut: f64 = edges.iter().filter(|(u, v, _)| side[*u] && !side[*v]).map(|e| e.2).sum();
            let brute = brute_min_cut(n, &edges);
            assert!((flow - brute).abs() < 1e-9, "{flow} vs {brute}");
            assert!((cut - brute).abs() < 1e-9);
        }
    }
}
