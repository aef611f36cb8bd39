use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{
    paths, EdgeRecord, EnvironmentFile, EnvironmentGraph, FeatureSpec, NodeRecord, ObjectPlacement, ENV_SCHEMA_VERSION,
};
use crate::error::{Error, Result};
use crate::rng::{self, label, Rng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub nodes: usize,
    /// Each node links to its `degree` nearest neighbors (symmetrized).
    pub degree: usize,
    pub vocab_size: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Side of the square floor plan in meters; derived from `nodes` when unset.
    pub world_size: Option<f64>,
    pub min_separation: f64,
    pub max_edge: f64,
    /// Rooms bias which categories appear together.
    pub rooms: usize,
    pub room_affinity: f64,
    pub features: FeatureSpec,
    pub max_retries: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            nodes: 24,
            degree: 3,
            vocab_size: 64,
            min_objects: 1,
            max_objects: 2,
            world_size: None,
            min_separation: 1.8,
            max_edge: 5.0,
            rooms: 4,
            room_affinity: 0.5,
            features: FeatureSpec::default(),
            max_retries: 200,
        }
    }
}

impl EnvConfig {
    pub fn side(&self) -> f64 {
        self.world_size.unwrap_or_else(|| 2.9 * (self.nodes as f64).sqrt())
    }

    fn validate(&self) -> Result<()> {
        if self.nodes < 2 {
            return Err(Error::Config("environment needs at least 2 nodes".into()));
        }
        if self.degree < 1 {
            return Err(Error::Config("degree must be at least 1".into()));
        }
        if self.vocab_size < 2 {
            return Err(Error::Config("vocabulary needs at least 2 categories".into()));
        }
        if self.min_objects > self.max_objects {
            return Err(Error::Config("min_objects exceeds max_objects".into()));
        }
        if self.features.n_views == 0 || self.features.category_dim == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Seeded k-nearest-neighbor geometric graph with room-structured objects.
pub fn generate_environment(seed: u64, cfg: &EnvConfig) -> Result<EnvironmentGraph> {
    cfg.validate()?;
    let side = cfg.side();
    for attempt in 0..cfg.max_retries.max(1) {
        let mut rng = rng::stream(seed, &[label::ENV, attempt as u64]);
        let Some(positions) = sample_positions(&mut rng, cfg.nodes, side, cfg.min_separation) else {
            continue;
        };
        let edges = knn_edges(&positions, cfg.degree);
        if edges.iter().any(|e| e.length > cfg.max_edge) {
            continue;
        }
        let mut adj = vec![Vec::new(); cfg.nodes];
        for e in &edges {
            adj[e.u].push((e.v, e.length));
            adj[e.v].push((e.u, e.length));
        }
        if !paths::is_connected(&adj) {
            continue;
        }
        let mut obj_rng = rng::stream(seed, &[label::OBJECTS]);
        let objects = place_objects(&mut obj_rng, &positions, side, cfg);
        let nodes = positions
            .into_iter()
            .enumerate()
            .map(|(id, xyz)| NodeRecord { id, xyz })
            .collect();
        let file = EnvironmentFile {
            schema_version: ENV_SCHEMA_VERSION,
            seed,
            vocab_size: cfg.vocab_size,
            features: cfg.features.clone(),
            nodes,
            edges,
            objects,
        };
        return EnvironmentGraph::from_file(file);
    }
    Err(Error::Generation(format!(
        "no connected graph with edges <= {} m after {} attempts (nodes {}, degree {})",
        cfg.max_edge, cfg.max_retries, cfg.nodes, cfg.degree
    )))
}

fn sample_positions(rng: &mut Rng, n: usize, side: f64, min_sep: f64) -> Option<Vec<[f64; 3]>> {
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    let mut tries = 0;
    while pts.len() < n {
        tries += 1;
        if tries > 200 * n {
            return None;
        }
        let p = [
            rng.random_range(0.0..side),
            rng.random_range(0.0..side),
            rng.random_range(0.0..0.3),
        ];
        if pts.iter().all(|q| super::euclid(&p, q) >= min_sep) {
            pts.push(p);
        }
    }
    Some(pts)
}

fn knn_edges(pts: &[[f64; 3]], k: usize) -> Vec<EdgeRecord> {
    let n = pts.len();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (super::euclid(&pts[i], &pts[j]), j))
            .collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in others.iter().take(k) {
            pairs.insert((i.min(j), i.max(j)));
        }
    }
    pairs
        .into_iter()
        .map(|(u, v)| EdgeRecord {
            u,
            v,
            length: super::euclid(&pts[u], &pts[v]),
        })
        .collect()
}

fn place_objects(rng: &mut Rng, pts: &[[f64; 3]], side: f64, cfg: &EnvConfig) -> Vec<ObjectPlacement> {
    let rooms = cfg.rooms.max(1);
    let centers: Vec<[f64; 2]> = (0..rooms)
        .map(|_| [rng.random_range(0.0..side), rng.random_range(0.0..side)])
        .collect();
    // Each room draws mostly from its own slice of the vocabulary.
    let mut categories: Vec<usize> = (0..cfg.vocab_size).collect();
    categories.shuffle(rng);
    let group = cfg.vocab_size.div_ceil(rooms).max(1);
    let groups: Vec<&[usize]> = categories.chunks(group).collect();

    let mut objects = Vec::new();
    for (node, p) in pts.iter().enumerate() {
        let room = (0..rooms)
            .min_by(|&a, &b| {
                let da = (p[0] - centers[a][0]).powi(2) + (p[1] - centers[a][1]).powi(2);
                let db = (p[0] - centers[b][0]).powi(2) + (p[1] - centers[b][1]).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        let own = groups[room % groups.len()];
        let count = rng.random_range(cfg.min_objects..=cfg.max_objects);
        for _ in 0..count {
            let category = if rng.random::<f64>() < cfg.room_affinity {
                own[rng.random_range(0..own.len())]
            } else {
                rng.random_range(0..cfg.vocab_size)
            };
            let heading = rng.random_range(0.0..2.0 * PI);
            let elevation: f64 = rng.random_range(-0.3..0.3);
            let dir = [heading.cos(), heading.sin(), elevation];
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            objects.push(ObjectPlacement {
                node,
                category,
                direction: [dir[0] / norm, dir[1] / norm, dir[2] / norm],
                depth: rng.random_range(0.5..=5.0),
            });
        }
    }
    objects
}
