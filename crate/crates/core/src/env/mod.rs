//! Synthetic navigation worlds: weighted undirected viewpoint graphs with
//! objects placed around each viewpoint.

mod generate;
mod observe;
pub mod paths;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, label};
use crate::tensor::Tensor2;

pub use generate::{generate_environment, EnvConfig};
pub use observe::ViewpointObservation;

pub type NodeId = usize;

pub const ENV_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub xyz: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub u: NodeId,
    pub v: NodeId,
    pub length: f64,
}

/// One object seen from a viewpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectPlacement {
    pub node: NodeId,
    pub category: usize,
    /// Unit vector from the viewpoint toward the object.
    pub direction: [f64; 3],
    /// Meters from the viewpoint.
    pub depth: f64,
}

/// Panorama and object-feature construction shared by every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub n_views: usize,
    pub category_dim: usize,
    pub seed: u64,
    pub view_noise: f64,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            n_views: 12,
            category_dim: 32,
            seed: 0,
            view_noise: 0.05,
        }
    }
}

impl FeatureSpec {
    /// `[sin, cos]` heading code, own-object aggregate, neighbor-object aggregate.
    pub fn view_dim(&self) -> usize {
        2 + 2 * self.category_dim
    }

    /// Category embedding, direction, scaled depth.
    pub fn object_dim(&self) -> usize {
        self.category_dim + 4
    }
}

/// On-disk layout of an environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFile {
    pub schema_version: u32,
    pub seed: u64,
    pub vocab_size: usize,
    pub features: FeatureSpec,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub objects: Vec<ObjectPlacement>,
}

#[derive(Clone, Debug)]
pub struct EnvironmentGraph {
    file: EnvironmentFile,
    adjacency: Vec<Vec<(NodeId, f64)>>,
    objects_at: Vec<Vec<usize>>,
    category_embedding: Tensor2,
    observations: OnceLock<Vec<ViewpointObservation>>,
    geodesics: OnceLock<Vec<Vec<f64>>>,
}

impl PartialEq for EnvironmentGraph {
    fn eq(&self, other: &Self) -> bool {
        self.file == other.file
    }
}

fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl EnvironmentGraph {
    /// Validates a file and builds the derived indices.
    pub fn from_file(file: EnvironmentFile) -> Result<Self> {
        if file.schema_version != ENV_SCHEMA_VERSION {
            return Err(Error::Format {
                kind: "environment",
                found: file.schema_version,
                expected: ENV_SCHEMA_VERSION,
            });
        }
        let n = file.nodes.len();
        if n == 0 {
            return Err(Error::Empty("environment nodes"));
        }
        for (i, node) in file.nodes.iter().enumerate() {
            if node.id != i {
                return Err(Error::contract(format!(
                    "node ids must be dense: found {} at {i}",
                    node.id
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for e in &file.edges {
            if e.u >= n {
                return Err(Error::UnknownNode(e.u));
            }
            if e.v >= n {
                return Err(Error::UnknownNode(e.v));
            }
            if e.u == e.v {
                return Err(Error::contract(format!("self-loop at node {}", e.u)));
            }
            let d = euclid(&file.nodes[e.u].xyz, &file.nodes[e.v].xyz);
            if (d - e.length).abs() > 1e-9 || e.length <= 0.0 {
                return Err(Error::contract(format!(
                    "edge ({}, {}) length {} differs from endpoint distance {d}",
                    e.u, e.v, e.length
                )));
            }
            if adjacency[e.u].iter().any(|&(w, _)| w == e.v) {
                return Err(Error::contract(format!("duplicate edge ({}, {})", e.u, e.v)));
            }
            adjacency[e.u].push((e.v, e.length));
            adjacency[e.v].push((e.u, e.length));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
        }
        if !paths::is_connected(&adjacency) {
            return Err(Error::contract("environment graph is not connected"));
        }
        let mut objects_at = vec![Vec::new(); n];
        for (i, o) in file.objects.iter().enumerate() {
            if o.node >= n {
                return Err(Error::UnknownNode(o.node));
            }
            if o.category >= file.vocab_size {
                return Err(Error::Index {
                    what: "object category",
                    index: o.category,
                    limit: file.vocab_size,
                });
            }
            let norm = o.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!("object {i} direction has norm {norm}")));
            }
            if o.depth.is_nan() || o.depth < 0.0 {
                return Err(Error::contract(format!("object {i} has negative depth")));
            }
            objects_at[o.node].push(i);
        }
        let category_embedding = category_embedding(&file.features, file.vocab_size);
        Ok(Self {
            file,
            adjacency,
            objects_at,
            category_embedding,
            observations: OnceLock::new(),
            geodesics: OnceLock::new(),
        })
    }

    pub fn file(&self) -> &EnvironmentFile {
        &self.file
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn node_count(&self) -> usize {
        self.file.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.file.edges.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.file.vocab_size
    }

    pub fn features(&self) -> &FeatureSpec {
        &self.file.features
    }

    pub fn position(&self, node: NodeId) -> [f64; 3] {
        self.file.nodes[node].xyz
    }

    pub fn edges(&self) -> &[EdgeRecord] {
        &self.file.edges
    }

    pub fn objects(&self) -> &[ObjectPlacement] {
        &self.file.objects
    }

    pub fn adjacency(&self) -> &[Vec<(NodeId, f64)>] {
        &self.adjacency
    }

    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[node]
    }

    pub fn edge_length(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.adjacency.get(a)?.iter().find(|&&(v, _)| v == b).map(|&(_, w)| w)
    }

    /// Indices into [`Self::objects`] of the objects placed at `node`.
    pub fn objects_at(&self, node: NodeId) -> &[usize] {
        &self.objects_at[node]
    }

    pub fn category_embedding(&self) -> &Tensor2 {
        &self.category_embedding
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.node_count() {
            Ok(())
        } else {
            Err(Error::UnknownNode(node))
        }
    }

    pub fn shortest_path(&self, a: NodeId, b: NodeId) -> Result<(Vec<NodeId>, f64)> {
        paths::shortest_path_filtered(&self.adjacency, a, b, |_, _| true)
    }

    /// Graph distance in meters (cached all-pairs table).
    pub fn geodesic_distance(&self, a: NodeId, b: NodeId) -> Result<f64> {
        self.check_node(a)?;
        self.check_node(b)?;
        let d = self.geodesic_table()[a][b];
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Unreachable { from: a, to: b })
        }
    }

    pub fn geodesic_table(&self) -> &[Vec<f64>] {
        self.geodesics.get_or_init(|| {
            (0..self.node_count())
                .map(|s| paths::dijkstra(&self.adjacency, s).0)
                .collect()
        })
    }

    /// The panorama at `node`; a pure function of (environment, node).
    pub fn observe(&self, node: NodeId) -> Result<&ViewpointObservation> {
        self.check_node(node)?;
        let all = self
            .observations
            .get_or_init(|| (0..self.node_count()).map(|v| observe::build(self, v)).collect());
        Ok(&all[node])
    }

    /// Object feature: category embedding, direction, depth / 5.
    pub fn object_feature(&self, object: usize) -> Vec<f64> {
        let o = &self.file.objects[object];
        let mut f = self.category_embedding.row(o.category).to_vec();
        f.extend_from_slice(&o.direction);
        f.push(o.depth / 5.0);
        f
    }
}

/// Fixed random projection of one-hot categories.
fn category_embedding(spec: &FeatureSpec, vocab: usize) -> Tensor2 {
    use rand_distr::{Distribution, Normal};
    let mut rng = rng::stream(spec.seed, &[label::FEATURES]);
    let std = 1.0 / (spec.category_dim.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    let data = (0..vocab * spec.category_dim)
        .map(|_| normal.sample(&mut rng))
        .collect();
    Tensor2::from_vec(vocab, spec.category_dim, data).expect("sized")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph() -> EnvironmentGraph {
        let file = EnvironmentFile {
            schema_version: ENV_SCHEMA_VERSION,
            seed: 0,
            vocab_size: 4,
            features: FeatureSpec::default(),
            nodes: vec![
                NodeRecord {
                    id: 0,
                    xyz: [0.0, 0.0, 0.0],
                },
                NodeRecord {
                    id: 1,
                    xyz: [1.0, 0.0, 0.0],
                },
                NodeRecord {
                    id: 2,
                    xyz: [3.0, 0.0, 0.0],
                },
            ],
            edges: vec![
                EdgeRecord {
                    u: 0,
                    v: 1,
                    length: 1.0,
                },
                EdgeRecord {
                    u: 1,
                    v: 2,
                    length: 2.0,
                },
            ],
            objects: vec![],
        };
        EnvironmentGraph::from_file(file).unwrap()
    }

    #[test]
    fn path_graph_routes() {
        let g = path_graph();
        assert_eq!(g.shortest_path(0, 0).unwrap(), (vec![0], 0.0));
        assert_eq!(g.shortest_path(0, 2).unwrap(), (vec![0, 1, 2], 3.0));
        assert_eq!(g.geodesic_distance(0, 1).unwrap(), 1.0);
        assert_eq!(g.geodesic_distance(2, 0).unwrap(), 3.0);
    }

    #[test]
    fn unknown_nodes_are_rejected() {
        let g = path_graph();
        assert!(matches!(g.shortest_path(0, 9), Err(Error::UnknownNode(9))));
        assert!(matches!(g.observe(3), Err(Error::UnknownNode(3))));
    }

    #[test]
    fn loader_rejects_bad_files() {
        let g = path_graph();
        let mut f = g.file().clone();
        f.edges[0].length = 1.5;
        assert!(EnvironmentGraph::from_file(f).is_err());

        let mut f = g.file().clone();
        f.edges.pop();
        assert!(EnvironmentGraph::from_file(f).is_err(), "disconnected");

        let mut f = g.file().clone();
        f.schema_version = 99;
        assert!(matches!(
            EnvironmentGraph::from_file(f),
            Err(Error::Format { found: 99, .. })
        ));

        let mut f = g.file().clone();
        f.objects.push(ObjectPlacement {
            node: 0,
            category: 1,
            direction: [1.0, 1.0, 0.0],
            depth: 1.0,
        });
        assert!(EnvironmentGraph::from_file(f).is_err(), "non-unit direction");
    }

    #[test]
    fn disconnected_pair_is_unreachable_when_filtered() {
        let g = path_graph();
        let err =
            paths::shortest_path_filtered(g.adjacency(), 0, 2, |a, b| !(a.min(b) == 1 && a.max(b) == 2)).unwrap_err();
        assert!(matches!(err, Error::Unreachable { from: 0, to: 2 }));
    }
}
