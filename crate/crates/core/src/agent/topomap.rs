use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::env::paths::{self, reconstruct};
use crate::env::{EnvironmentGraph, NodeId, ViewpointObservation};
use crate::error::{Error, Result};
use crate::model::NODE_EXTRA;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversedEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub length: f64,
}

fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

/// The agent's partial map: visited nodes, the frontier of seen-but-unvisited
/// neighbors, per-node view evidence and the traversal history.
#[derive(Clone, Debug)]
pub struct TopoMap {
    current: NodeId,
    visited: Vec<bool>,
    visit_order: Vec<NodeId>,
    frontier: BTreeSet<NodeId>,
    view_sum: Vec<Vec<f64>>,
    view_count: Vec<usize>,
    observed: HashSet<(NodeId, NodeId)>,
    history: Vec<TraversedEdge>,
    traversed: HashSet<(NodeId, NodeId)>,
}

/// Shortest routes from the current node over the known map.
#[derive(Clone, Debug)]
pub struct KnownRoutes {
    source: NodeId,
    pub dist: Vec<f64>,
    prev: Vec<Option<NodeId>>,
}

impl KnownRoutes {
    pub fn path(&self, to: NodeId) -> Result<Vec<NodeId>> {
        if !self.dist.get(to).is_some_and(|d| d.is_finite()) {
            return Err(Error::Unreachable { from: self.source, to });
        }
        reconstruct(&self.prev, self.source, to)
    }
}

impl TopoMap {
    /// A map positioned at `start` with nothing observed yet.
    pub fn new(env: &EnvironmentGraph, start: NodeId) -> Result<Self> {
        let n = env.node_count();
        if start >= n {
            return Err(Error::UnknownNode(start));
        }
        let view_dim = env.features().view_dim();
        Ok(Self {
            current: start,
            visited: vec![false; n],
            visit_order: Vec::new(),
            frontier: BTreeSet::new(),
            view_sum: vec![vec![0.0; view_dim]; n],
            view_count: vec![0; n],
            observed: HashSet::new(),
            history: Vec::new(),
            traversed: HashSet::new(),
        })
    }

    pub fn current(&self) -> NodeId {
        self.current
    }

    pub fn is_visited(&self, node: NodeId) -> bool {
        self.visited[node]
    }

    pub fn visited(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.visit_order.iter().copied()
    }

    pub fn visited_count(&self) -> usize {
        self.visit_order.len()
    }

    /// Frontier nodes in ascending id order.
    pub fn frontier(&self) -> Vec<NodeId> {
        self.frontier.iter().copied().collect()
    }

    pub fn history(&self) -> &[TraversedEdge] {
        &self.history
    }

    pub fn was_traversed(&self, a: NodeId, b: NodeId) -> bool {
        self.traversed.contains(&key(a, b))
    }

    /// Marks the current node visited, extends the frontier with its unvisited
    /// neighbors and records the view facing each neighbor.
    pub fn update(&mut self, obs: &ViewpointObservation, env: &EnvironmentGraph) -> Result<()> {
        if obs.node != self.current {
            return Err(Error::contract(format!(
                "observation of node {} while the map is at node {}",
                obs.node, self.current
            )));
        }
        let cur = self.current;
        if !self.visited[cur] {
            self.visited[cur] = true;
            self.visit_order.push(cur);
        }
        self.frontier.remove(&cur);
        let here = env.position(cur);
        let n_views = env.features().n_views;
        for &(nbr, _) in env.neighbors(cur) {
            if !self.visited[nbr] {
                self.frontier.insert(nbr);
            }
            if self.observed.insert((cur, nbr)) {
                let there = env.position(nbr);
                let heading = (there[1] - here[1]).atan2(there[0] - here[0]);
                let k = ViewpointObservation::sector(n_views, heading);
                for (s, v) in self.view_sum[nbr].iter_mut().zip(obs.views.row(k)) {
                    *s += v;
                }
                self.view_count[nbr] += 1;
            }
        }
        Ok(())
    }

    /// An edge is known once either endpoint has been visited.
    pub fn is_known_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.visited[a] || self.visited[b]
    }

    pub fn known_routes(&self, env: &EnvironmentGraph) -> KnownRoutes {
        let (dist, prev) = paths::dijkstra_filtered(env.adjacency(), self.current, |a, b| self.is_known_edge(a, b));
        KnownRoutes {
            source: self.current,
            dist,
            prev,
        }
    }

    /// Walks the known-map shortest path to `target`, appending every edge to
    /// the history. Returns the nodes entered after the current one.
    pub fn travel(&mut self, env: &EnvironmentGraph, routes: &KnownRoutes, target: NodeId) -> Result<Vec<NodeId>> {
        if routes.source != self.current {
            return Err(Error::contract("stale route table"));
        }
        let path = routes.path(target)?;
        for w in path.windows(2) {
            let length = env
                .edge_length(w[0], w[1])
                .ok_or_else(|| Error::contract(format!("route uses missing edge ({}, {})", w[0], w[1])))?;
            self.history.push(TraversedEdge {
                from: w[0],
                to: w[1],
                length,
            });
            self.traversed.insert(key(w[0], w[1]));
        }
        self.current = target;
        Ok(path[1..].to_vec())
    }

    /// Raw node input: mean view feature toward the node, visit-status one-hot
    /// and known-map distance from the current node.
    pub fn node_input(&self, node: NodeId, known_dist: f64) -> Vec<f64> {
        let count = self.view_count[node];
        let mut v: Vec<f64> = if count > 0 {
            self.view_sum[node].iter().map(|s| s / count as f64).collect()
        } else {
            vec![0.0; self.view_sum[node].len()]
        };
        let mut extra = [0.0; NODE_EXTRA];
        if node == self.current {
            extra[2] = 1.0;
        } else if self.visited[node] {
            extra[0] = 1.0;
        } else {
            extra[1] = 1.0;
        }
        extra[3] = if known_dist.is_finite() { known_dist / 10.0 } else { 0.0 };
        v.extend_from_slice(&extra);
        v
    }

    /// Sum of the lengths of path edges already present in the history.
    pub fn reused_length(&self, env: &EnvironmentGraph, path: &[NodeId]) -> f64 {
        path.windows(2)
            .filter(|w| self.was_traversed(w[0], w[1]))
            .map(|w| env.edge_length(w[0], w[1]).unwrap_or(0.0))
            .fold(0.0, |a, l| a + l)
    }
}
