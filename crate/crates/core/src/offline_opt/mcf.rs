//! Successive shortest paths with Johnson potentials on integer costs.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Edge {
    to: usize,
    cap: i64,
    cost: i64,
    rev: usize,
    forward: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct MinCostFlow {
    adj: Vec<Vec<Edge>>,
}

impl MinCostFlow {
    pub fn new(n: usize) -> Self {
        Self { adj: vec![Vec::new(); n] }
    }

    /// Returns a handle `(node, index)` for reading the edge's flow later.
    pub fn add_edge(&mut self, u: usize, v: usize, cap: i64, cost: i64) -> (usize, usize) {
        let ru = self.adj[v].len() + usize::from(u == v);
        let rv = self.adj[u].len();
        self.adj[u].push(Edge { to: v, cap, cost, rev: ru, forward: true });
        self.adj[v].push(Edge { to: u, cap: 0, cost: -cost, rev: rv, forward: false });
        (u, rv)
    }

    pub fn flow_on(&self, handle: (usize, usize)) -> i64 {
        let e = &self.adj[handle.0][handle.1];
        self.adj[e.to][e.rev].cap
    }

    /// Pushes up to `limit` units from `s` to `t`, each along a cheapest path,
    /// stopping early once the cheapest path no longer has negative cost if
    /// `only_negative` is set. The graph must have no negative cycles.
    pub fn run(&mut self, s: usize, t: usize, limit: i64, only_negative: bool) -> Result<(i64, i64)> {
        let n = self.adj.len();
        let mut pot = self.bellman_ford(s)?;
        let (mut flow, mut cost) = (0i64, 0i64);
        while flow < limit {
            let mut dist = vec![i64::MAX; n];
            let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
            dist[s] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i64, s)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for (i, e) in self.adj[u].iter().enumerate() {
                    if e.cap <= 0 || pot[e.to] == i64::MAX {
                        continue;
                    }
                    let nd = d + e.cost + pot[u] - pot[e.to];
                    if nd < dist[e.to] {
                        dist[e.to] = nd;
                        prev[e.to] = Some((u, i));
                        heap.push(Reverse((nd, e.to)));
                    }
                }
            }
            if dist[t] == i64::MAX {
                break;
            }
            for v in 0..n {
                if dist[v] != i64::MAX && pot[v] != i64::MAX {
                    pot[v] += dist[v];
                }
            }
            let path_cost = pot[t] - pot[s];
            if only_negative && path_cost >= 0 {
                break;
            }
            let mut push = limit - flow;
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                push = push.min(self.adj[u][i].cap);
                v = u;
            }
            let mut v = t;
            while let Some((u, i)) = prev[v] {
                self.adj[u][i].cap -= push;
                let rev = self.adj[u][i].rev;
                self.adj[v][rev].cap += push;
                v = u;
            }
            flow += push;
            cost += push * path_cost;
        }
        Ok((flow, cost))
    }

    fn bellman_ford(&self, s: usize) -> Result<Vec<i64>> {
        let n = self.adj.len();
        let mut dist = vec![i64::MAX; n];
        dist[s] = 0;
        for round in 0..=n {
            let mut changed = false;
            for u in 0..n {
                if dist[u] == i64::MAX {
                    continue;
                }
                for e in &self.adj[u] {
                    if e.cap > 0 && dist[u] + e.cost < dist[e.to] {
                        dist[e.to] = dist[u] + e.cost;
                        changed = true;
                    }
                }
            }
            if !changed {
                return Ok(dist);
            }
            if round == n {
                break;
            }
        }
        Err(Error::Internal("negative cycle in flow network".into()))
    }

    /// Successor along a unit of flow leaving `u`, consuming it.
    pub fn take_flow_from(&mut self, u: usize) -> Option<usize> {
        for i in 0..self.adj[u].len() {
            let e = &self.adj[u][i];
            let (to, rev) = (e.to, e.rev);
            if e.forward && self.adj[to][rev].cap > 0 {
                self.adj[to][rev].cap -= 1;
                return Some(to);
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_paths_choose_cheapest() {
        let mut g = MinCostFlow::new(4);
        g.add_edge(0, 1, 1, 1);
        g.add_edge(0, 2, 1, 5);
        g.add_edge(1, 3, 1, 1);
        g.add_edge(2, 3, 1, 1);
        g.add_edge(1, 2, 1, 0);
        assert_eq!(g.run(0, 3, 1, false).unwrap(), (1, 2));
        assert_eq!(g.run(0, 3, 5, false).unwrap(), (1, 6));
    }

    #[test]
    fn negative_costs_on_dag() {
        let mut g = MinCostFlow::new(3);
        g.add_edge(0, 1, 2, -3);
        g.add_edge(1, 2, 2, 1);
        g.add_edge(0, 2, 2, 0);
        assert_eq!(g.run(0, 2, 3, false).unwrap(), (3, -4));
    }
}
