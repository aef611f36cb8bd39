//! Supervision targets and the training objective.

use serde::{Deserialize, Serialize};

use crate::agent::{KnownRoutes, TopoMap};
use crate::autodiff::{Graph, Var};
use crate::env::{EnvironmentGraph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::{softmax, Tensor2};

/// Probability floor inside the log terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Loss charged when the target category is not among the final node's objects.
pub fn absent_target_penalty() -> f64 {
    -PROB_FLOOR.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Move(NodeId),
    Stop,
}

/// The frontier node minimizing the remaining route length through it, or
/// STOP at the target. Ties go to the lowest node id.
pub fn demonstrator_action(map: &TopoMap, env: &EnvironmentGraph, target: NodeId) -> Result<Action> {
    if target >= env.node_count() {
        return Err(Error::UnknownNode(target));
    }
    let cur = map.current();
    if cur == target {
        return Ok(Action::Stop);
    }
    let geo = env.geodesic_table();
    let mut best: Option<(f64, NodeId)> = None;
    for f in map.frontier() {
        let total = geo[cur][f] + geo[f][target];
        if !total.is_finite() {
            continue;
        }
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, f));
        }
    }
    match best {
        Some((_, f)) => Ok(Action::Move(f)),
        None if map.frontier().is_empty() => Ok(Action::Stop),
        None => Err(Error::Unreachable { from: cur, to: target }),
    }
}

/// Reused length of the known-map route to each candidate. `None` is STOP.
pub fn revisit_distances(
    map: &TopoMap,
    env: &EnvironmentGraph,
    routes: &KnownRoutes,
    candidates: &[Option<NodeId>],
) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|c| match *c {
            None => Ok(0.0),
            Some(node) => {
                let path = routes
                    .path(node)
                    .map_err(|_| Error::contract(format!("candidate {node} is not reachable in the known map")))?;
                Ok(map.reused_length(env, &path))
            }
        })
        .collect()
}

/// Expected revisit distance under a softmax over `p`, with its gradient.
pub fn tbp_value(p: &[f64], d: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != d.len() {
        return Err(Error::Shape {
            op: "tbp",
            left: (1, p.len()),
            right: (1, d.len()),
        });
    }
    if p.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let s = softmax(p);
    let loss: f64 = s.iter().zip(d).map(|(s, d)| s * d).sum();
    let grad = s.iter().zip(d).map(|(s, d)| s * (d - loss)).collect();
    Ok((loss, grad))
}

/// Tape version of [`tbp_value`]; `scores` is `1 × r`.
pub fn tbp_loss(g: &mut Graph, scores: Var, d: &[f64]) -> Result<Var> {
    let (rows, cols) = g.shape(scores);
    if rows != 1 || cols != d.len() {
        return Err(Error::Shape {
            op: "tbp",
            left: (rows, cols),
            right: (1, d.len()),
        });
    }
    if cols == 0 {
        return Ok(g.constant(Tensor2::scalar(0.0)));
    }
    let weights = g.row_softmax(scores)?;
    let d = g.constant(Tensor2::row_vector(d));
    g.matmul_t(weights, d)
}

#[derive(Clone, Copy, Debug)]
pub struct SapLoss {
    pub value: Var,
    /// Steps whose expert probability hit the floor.
    pub clamped: usize,
}

/// Summed negative log probability of the expert action at each step.
pub fn sap_loss(g: &mut Graph, steps: &[(Var, usize)]) -> Result<SapLoss> {
    let mut terms = Vec::with_capacity(steps.len());
    let mut clamped = 0;
    for &(probs, expert) in steps {
        let (_, cols) = g.shape(probs);
        if expert >= cols {
            return Err(Error::Index {
                what: "expert action",
                index: expert,
                limit: cols,
            });
        }
        if g.value(probs).get(0, expert) < PROB_FLOOR {
            clamped += 1;
        }
        terms.push(g.neg_log_pick(probs, 0, expert, PROB_FLOOR)?);
    }
    let value = if terms.is_empty() {
        g.constant(Tensor2::scalar(0.0))
    } else {
        g.add_scalars(&terms)?
    };
    Ok(SapLoss { value, clamped })
}

#[derive(Clone, Copy, Debug)]
pub struct OgLoss {
    pub value: Var,
    pub absent: bool,
}

/// Cross-entropy of the grounding logits at the target object row. A missing
/// target (or no objects at all) costs the fixed penalty.
pub fn og_loss(g: &mut Graph, logits: Option<Var>, target: Option<usize>) -> Result<OgLoss> {
    match (logits, target) {
        (Some(logits), Some(t)) => {
            let probs = g.row_softmax(logits)?;
            let value = g.neg_log_pick(probs, 0, t, PROB_FLOOR)?;
            Ok(OgLoss { value, absent: false })
        }
        _ => Ok(OgLoss {
            value: g.constant(Tensor2::scalar(absent_target_penalty())),
            absent: true,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub sap: f64,
    pub og: f64,
    pub tbp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            sap: 1.0,
            og: 1.0,
            tbp: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub sap: f64,
    pub og: f64,
    pub tbp: f64,
    pub total: f64,
}

/// Weighted sum of the three components. Fails on the first non-finite one.
pub fn total_loss(g: &mut Graph, sap: Var, og: Var, tbp: Var, w: &LossWeights) -> Result<(Var, LossBreakdown)> {
    let mut parts = [0.0; 3];
    for (slot, (name, v)) in parts.iter_mut().zip([("sap", sap), ("og", og), ("tbp", tbp)]) {
        let x = g.value(v).item();
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("loss component {name} = {x}")));
        }
        *slot = x;
    }
    let a = g.scale(sap, w.sap);
    let b = g.scale(og, w.og);
    let c = g.scale(tbp, w.tbp);
    let total = g.add_scalars(&[a, b, c])?;
    let breakdown = LossBreakdown {
        sap: parts[0],
        og: parts[1],
        tbp: parts[2],
        total: g.value(total).item(),
    };
    Ok((total, breakdown))
}
