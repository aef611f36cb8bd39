//! Dijkstra over adjacency lists, with an optional edge filter for searches
//! restricted to a partially known map.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub type Adjacency = [Vec<(usize, f64)>];

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (dist, node).
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source distances and predecessors over edges accepted by `allow`.
pub fn dijkstra_filtered(
    adj: &Adjacency,
    source: usize,
    allow: impl Fn(usize, usize) -> bool,
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        node: source,
    });
    while let Some(Entry { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, w) in &adj[node] {
            if !allow(node, next) {
                continue;
            }
            let nd = d + w;
            if nd < dist[next] {
                dist[next] = nd;
                prev[next] = Some(node);
                heap.push(Entry { dist: nd, node: next });
            }
        }
    }
    (dist, prev)
}

pub fn dijkstra(adj: &Adjacency, source: usize) -> (Vec<f64>, Vec<Option<usize>>) {
    dijkstra_filtered(adj, source, |_, _| true)
}

/// Walks predecessors back from `target`.
pub fn reconstruct(prev: &[Option<usize>], source: usize, target: usize) -> Result<Vec<usize>> {
    let mut path = vec![target];
    let mut cur = target;
    while cur != source {
        cur = prev[cur].ok_or(Error::Unreachable {
            from: source,
            to: target,
        })?;
        path.push(cur);
    }
    path.reverse();
    Ok(path)
}

/// Minimal-length path and its length, restricted to edges accepted by `allow`.
pub fn shortest_path_filtered(
    adj: &Adjacency,
    a: usize,
    b: usize,
    allow: impl Fn(usize, usize) -> bool,
) -> Result<(Vec<usize>, f64)> {
    let n = adj.len();
    if a >= n {
        return Err(Error::UnknownNode(a));
    }
    if b >= n {
        return Err(Error::UnknownNode(b));
    }
    if a == b {
        return Ok((vec![a], 0.0));
    }
    let (dist, prev) = dijkstra_filtered(adj, a, allow);
    if !dist[b].is_finite() {
        return Err(Error::Unreachable { from: a, to: b });
    }
    Ok((reconstruct(&prev, a, b)?, dist[b]))
}

pub fn is_connected(adj: &Adjacency) -> bool {
    if adj.is_empty() {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &(v, _) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}
