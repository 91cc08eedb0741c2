//! Minimum-cost maximum-flow by successive shortest paths with Johnson
//! potentials. Costs must be non-negative on insertion; adjacency and the
//! Dijkstra heap break ties by index order, so identical inputs always
//! produce the identical flow.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
    flow: i64,
}

#[derive(Debug, Clone, Default)]
pub struct MinCostFlow {
    adj: Vec<Vec<usize>>,
    edges: Vec<Edge>,
}

impl MinCostFlow {
    pub fn new(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            edges: Vec::new(),
        }
    }

    /// Adds a directed edge and its residual twin; returns the edge id for
    /// later flow inspection.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: i64) -> usize {
        debug_assert!(cost >= 0, "negative costs are not supported");
        let id = self.edges.len();
        self.adj[from].push(id);
        self.edges.push(Edge {
            to,
            cap,
            cost,
            flow: 0,
        });
        self.adj[to].push(id + 1);
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
            flow: 0,
        });
        id
    }

    /// Units currently routed through the forward edge `id`.
    pub fn edge_flow(&self, id: usize) -> i64 {
        self.edges[id].flow
    }

    /// Pushes as much flow as possible from `source` to `sink`; returns
    /// (total flow, total cost).
    pub fn solve(&mut self, source: usize, sink: usize) -> (i64, i64) {
        let n = self.adj.len();
        let mut potential = vec![0i64; n];
        let mut total_flow = 0i64;
        let mut total_cost = 0i64;

        loop {
            let mut dist = vec![i64::MAX; n];
            let mut prev_edge = vec![usize::MAX; n];
            dist[source] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, source)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &eid in &self.adj[u] {
                    let e = &self.edges[eid];
                    if e.cap - e.flow <= 0 {
                        continue;
                    }
                    let nd = d + e.cost + potential[u] - potential[e.to];
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        prev_edge[e.to] = eid;
                        heap.push(Reverse((nd, e.to)));
                    }
                }
            }
            if dist[sink] == i64::MAX {
                break;
            }
            for v in 0..n {
                if dist[v] < i64::MAX {
                    potential[v] += dist[v];
                }
            }

            let mut bottleneck = i64::MAX;
            let mut v = sink;
            while v != source {
                let eid = prev_edge[v];
                let e = &self.edges[eid];
                bottleneck = bottleneck.min(e.cap - e.flow);
                v = self.edges[eid ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let eid = prev_edge[v];
                total_cost += bottleneck * self.edges[eid].cost;
                self.edges[eid].flow += bottleneck;
                self.edges[eid ^ 1].flow -= bottleneck;
                v = self.edges[eid ^ 1].to;
            }
            total_flow += bottleneck;
        }
        (total_flow, total_cost)
    }
}
