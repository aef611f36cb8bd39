//! Object relations.
//!
//! Temporal relations attend from the objects seen at the current step to the
//! instruction nouns. Spatial relations come from an environment-wide
//! category matrix accumulated over every co-visible object pair, queried by
//! (object, noun) category pairs. A learnable convex combination fuses raw,
//! temporal and spatial object features.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::env::EnvironmentGraph;
use crate::error::{Error, Result};
use crate::model::names;
use crate::params::ParamStore;
use crate::tensor::{softmax, Tensor2};

pub const RELATION_SCHEMA_VERSION: u32 = 1;

/// Added to the spatial-update denominator so identical placements stay finite.
pub const SOR_EPSILON: f64 = 1e-6;

/// Row sums below this are treated as zero when normalizing queried rows.
pub const ROW_NORM_EPSILON: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SorConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for SorConstants {
    fn default() -> Self {
        Self {
            k1: 2.0,
            k2: 2.0,
            k3: 5e-4,
        }
    }
}

impl SorConstants {
    /// Association strength of two objects seen from the same viewpoint.
    pub fn increment(&self, v_x: &[f64; 3], v_y: &[f64; 3], d_x: f64, d_y: f64) -> f64 {
        let dv = v_x.iter().zip(v_y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        self.k1 / (self.k2 * dv + self.k3 * (d_x - d_y).abs() + SOR_EPSILON)
    }
}

/// Symmetric, zero-diagonal category relation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationMatrix {
    values: Tensor2,
    constants: SorConstants,
    scans: u64,
}

#[derive(Serialize, Deserialize)]
struct RelationFile {
    schema_version: u32,
    vocab_size: usize,
    k1: f64,
    k2: f64,
    k3: f64,
    scans: u64,
    values: Vec<f64>,
}

fn check_unit(v: &[f64; 3], what: &str) -> Result<()> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (n - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!("{what} direction has norm {n}, expected 1")));
    }
    Ok(())
}

impl RelationMatrix {
    pub fn zeros(vocab: usize, constants: SorConstants) -> Self {
        Self {
            values: Tensor2::zeros(vocab, vocab),
            constants,
            scans: 0,
        }
    }

    pub fn size(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Tensor2 {
        &self.values
    }

    pub fn constants(&self) -> SorConstants {
        self.constants
    }

    /// Number of viewpoints folded in.
    pub fn scans(&self) -> u64 {
        self.scans
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values.get(x, y)
    }

    /// Adds the pair increment to `E(x, y)` and `E(y, x)`. Same-category pairs
    /// are skipped.
    pub fn update(&mut self, x: usize, y: usize, v_x: &[f64; 3], v_y: &[f64; 3], d_x: f64, d_y: f64) -> Result<()> {
        let n = self.size();
        for c in [x, y] {
            if c >= n {
                return Err(Error::Index {
                    what: "relation category",
                    index: c,
                    limit: n,
                });
            }
        }
        check_unit(v_x, "first object")?;
        check_unit(v_y, "second object")?;
        if x == y {
            return Ok(());
        }
        let delta = self.constants.increment(v_x, v_y, d_x, d_y);
        self.values.set(x, y, self.values.get(x, y) + delta);
        self.values.set(y, x, self.values.get(y, x) + delta);
        Ok(())
    }

    /// Folds every unordered co-visible object pair of every node in.
    pub fn scan(&mut self, env: &EnvironmentGraph) -> Result<()> {
        if env.vocab_size() != self.size() {
            return Err(Error::contract(format!(
                "environment vocabulary {} differs from relation matrix size {}",
                env.vocab_size(),
                self.size()
            )));
        }
        let objects = env.objects();
        for node in 0..env.node_count() {
            let here = env.objects_at(node);
            for (i, &a) in here.iter().enumerate() {
                for &b in &here[i + 1..] {
                    let (oa, ob) = (&objects[a], &objects[b]);
                    self.update(
                        oa.category,
                        ob.category,
                        &oa.direction,
                        &ob.direction,
                        oa.depth,
                        ob.depth,
                    )?;
                }
            }
            self.scans += 1;
        }
        Ok(())
    }

    /// `E′[i][j] = E[objects[i]][nouns[j]]`.
    pub fn query(&self, object_categories: &[usize], noun_categories: &[usize]) -> Result<Tensor2> {
        let n = self.size();
        if let Some(&bad) = object_categories.iter().chain(noun_categories).find(|&&c| c >= n) {
            return Err(Error::Index {
                what: "relation query category",
                index: bad,
                limit: n,
            });
        }
        let mut out = Tensor2::zeros(object_categories.len(), noun_categories.len());
        for (i, &p) in object_categories.iter().enumerate() {
            for (j, &q) in noun_categories.iter().enumerate() {
                out.set(i, j, self.values.get(p, q));
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.size();
        (0..n).all(|i| (0..n).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = RelationFile {
            schema_version: RELATION_SCHEMA_VERSION,
            vocab_size: self.size(),
            k1: self.constants.k1,
            k2: self.constants.k2,
            k3: self.constants.k3,
            scans: self.scans,
            values: self.values.data().to_vec(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: RelationFile = serde_json::from_str(s)?;
        if f.schema_version != RELATION_SCHEMA_VERSION {
            return Err(Error::Format {
                kind: "relation matrix",
                found: f.schema_version,
                expected: RELATION_SCHEMA_VERSION,
            });
        }
        Ok(Self {
            values: Tensor2::from_vec(f.vocab_size, f.vocab_size, f.values)?,
            constants: SorConstants {
                k1: f.k1,
                k2: f.k2,
                k3: f.k3,
            },
            scans: f.scans,
        })
    }
}

/// Relation matrix over all given training environments.
pub fn sor_build(envs: &[&EnvironmentGraph], constants: SorConstants) -> Result<RelationMatrix> {
    let first = envs.first().ok_or(Error::Empty("environment list"))?;
    let mut e = RelationMatrix::zeros(first.vocab_size(), constants);
    for env in envs {
        e.scan(env)?;
    }
    Ok(e)
}

/// Divides each row by `max(row sum, ε)`; all-zero rows stay zero.
pub fn normalize_rows(m: &Tensor2) -> Tensor2 {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let s: f64 = out.row(r).iter().sum();
        let denom = s.max(ROW_NORM_EPSILON);
        out.row_mut(r).iter_mut().for_each(|v| *v /= denom);
    }
    out
}

/// Spatial object features: row-normalized `E′` times the noun features.
pub fn sor_features(g: &mut Graph, queried: &Tensor2, nouns: Var) -> Result<Var> {
    let (rows, _) = g.shape(nouns);
    if queried.cols() != rows {
        return Err(Error::Shape {
            op: "sor_features",
            left: queried.shape(),
            right: g.shape(nouns),
        });
    }
    let e = g.constant(normalize_rows(queried));
    g.matmul(e, nouns)
}

#[derive(Clone, Copy, Debug)]
pub struct TorOutput {
    /// `FC(O_t)`, shared with the fusion step.
    pub projected: Var,
    /// Object-to-noun relation matrix `T` (`m × L̂`).
    pub attention: Var,
    /// Temporal object features `M_t = T·Ŵ`.
    pub temporal: Var,
}

/// Object projection `FC(O_t)` alone.
pub fn project_objects(g: &mut Graph, store: &ParamStore, objects: Var) -> Result<Var> {
    let w = g.param(store, names::OBJ_W)?;
    let b = g.param(store, names::OBJ_B)?;
    g.affine(objects, w, b)
}

/// Cross attention from objects (queries) to nouns (keys and values).
/// With `normalize` off the raw score matrix is used as `T`.
pub fn tor_forward(g: &mut Graph, store: &ParamStore, objects: Var, nouns: Var, normalize: bool) -> Result<TorOutput> {
    let projected = project_objects(g, store, objects)?;
    let scores = g.matmul_t(projected, nouns)?;
    let attention = if normalize { g.row_softmax(scores)? } else { scores };
    let temporal = g.matmul(attention, nouns)?;
    Ok(TorOutput {
        projected,
        attention,
        temporal,
    })
}

/// `Q_t = α₁·O + α₂·M + α₃·N` with α the softmax of the logits of the
/// branches present. A missing branch is excluded from the softmax, which is
/// the same as pinning its logit to −∞.
pub fn fuse(g: &mut Graph, objects: Var, temporal: Option<Var>, spatial: Option<Var>, logits: Var) -> Result<Var> {
    let mut branches = vec![(0, objects)];
    if let Some(m) = temporal {
        branches.push((1, m));
    }
    if let Some(n) = spatial {
        branches.push((2, n));
    }
    let shape = g.shape(objects);
    for &(_, v) in &branches[1..] {
        if g.shape(v) != shape {
            return Err(Error::Shape {
                op: "fuse",
                left: shape,
                right: g.shape(v),
            });
        }
    }
    let idx: Vec<usize> = branches.iter().map(|b| b.0).collect();
    let active = g.gather_cols(logits, &idx)?;
    let alpha = g.row_softmax(active)?;
    let mut terms = Vec::with_capacity(branches.len());
    for (j, &(_, v)) in branches.iter().enumerate() {
        terms.push(g.scale_by(v, alpha, j)?);
    }
    let mut q = terms[0];
    for &t in &terms[1..] {
        q = g.add(q, t)?;
    }
    Ok(q)
}

/// Fusion logits and the simplex weights they induce.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FusionWeights {
    pub logits: [f64; 3],
}

impl FusionWeights {
    pub fn from_alpha(alpha: [f64; 3]) -> Self {
        Self {
            logits: alpha.map(f64::ln),
        }
    }

    pub fn from_store(store: &ParamStore) -> Result<Self> {
        let t = store.value(names::FUSION)?;
        Ok(Self {
            logits: [t.get(0, 0), t.get(0, 1), t.get(0, 2)],
        })
    }

    pub fn alphas(&self) -> [f64; 3] {
        let s = softmax(&self.logits);
        [s[0], s[1], s[2]]
    }
}
