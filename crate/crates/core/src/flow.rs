//! Minimum-cost flow by successive shortest paths.
//!
//! Shortest paths use Dijkstra on reduced costs with node potentials, so every
//! edge cost added to the network must be nonnegative. The dense `O(V²)`
//! Dijkstra picks the lowest-index node among equal distances, which makes the
//! result a deterministic function of edge insertion order.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

#[derive(Debug, Clone)]
pub struct MinCostFlow {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
    potential: Vec<f64>,
}

impl MinCostFlow {
    pub fn new(nodes: usize) -> Self {
        Self { edges: Vec::new(), adj: vec![Vec::new(); nodes], potential: vec![0.0; nodes] }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Adds a directed edge and its residual twin; returns the forward edge id.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        debug_assert!(cost >= 0.0 && cost.is_finite(), "edge costs must be finite and nonnegative");
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Flow currently routed through a forward edge.
    pub fn flow_on(&self, edge: usize) -> i64 {
        self.edges[edge ^ 1].cap
    }

    /// Pushes up to `limit` units from `source` to `sink` at minimum cost.
    /// Returns `(flow, cost)`.
    pub fn run(&mut self, source: usize, sink: usize, limit: i64) -> (i64, f64) {
        let n = self.num_nodes();
        let mut potential = core::mem::take(&mut self.potential);
        let mut dist = vec![f64::INFINITY; n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut done = vec![false; n];
        let mut flow = 0;
        let mut cost = 0.0;

        while flow < limit {
            dist.fill(f64::INFINITY);
            parent.fill(None);
            done.fill(false);
            dist[source] = 0.0;
            loop {
                let mut u = None;
                for v in 0..n {
                    if !done[v] && dist[v].is_finite() && u.is_none_or(|b: usize| dist[v] < dist[b]) {
                        u = Some(v);
                    }
                }
                let Some(u) = u else { break };
                done[u] = true;
                for &e in &self.adj[u] {
                    let edge = &self.edges[e];
                    if edge.cap <= 0 || done[edge.to] {
                        continue;
                    }
                    // reduced costs are nonnegative up to rounding
                    let reduced = (edge.cost + potential[u] - potential[edge.to]).max(0.0);
                    let cand = dist[u] + reduced;
                    if cand < dist[edge.to] {
                        dist[edge.to] = cand;
                        parent[edge.to] = Some(e);
                    }
                }
            }
            if !dist[sink].is_finite() {
                break;
            }
            for v in 0..n {
                if dist[v].is_finite() {
                    potential[v] += dist[v];
                }
            }

            let mut push = limit - flow;
            let mut v = sink;
            while let Some(e) = parent[v] {
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = sink;
            while let Some(e) = parent[v] {
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                cost += push as f64 * self.edges[e].cost;
                v = self.edges[e ^ 1].to;
            }
            flow += push;
        }
        self.potential = potential;
        (flow, cost)
    }
}
