//! Panoramic feature assembly, candidate scoring and object grounding.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::env::ViewpointObservation;
use crate::error::{Error, Result};
use crate::instruction::{encode_instruction, encode_nouns, nouns_or_fallback, Instruction, NounDb};
use crate::model::names;
use crate::params::ParamStore;
use crate::relations::{fuse, project_objects, sor_features, tor_forward, RelationMatrix};
use crate::tensor::Tensor2;

/// Which relation branches feed the fused object features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelationToggles {
    pub tor: bool,
    pub sor: bool,
    /// Row-softmax on the temporal relation matrix; off gives the raw scores.
    pub tor_softmax: bool,
}

impl Default for RelationToggles {
    fn default() -> Self {
        Self {
            tor: true,
            sor: true,
            tor_softmax: true,
        }
    }
}

/// Per-episode text encodings.
#[derive(Clone, Debug)]
pub struct TextContext {
    /// `Ŵ`, one row per noun.
    pub nouns: Var,
    /// Object category named by each noun row.
    pub noun_categories: Vec<usize>,
    /// Pooled instruction vector `u` (`1 × d_model`).
    pub instruction: Var,
}

pub fn encode_text(g: &mut Graph, store: &ParamStore, instr: &Instruction, db: &NounDb) -> Result<TextContext> {
    let extracted = nouns_or_fallback(instr, db)?;
    let nouns = encode_nouns(g, store, &extracted)?.features;
    let instruction = encode_instruction(g, store, &instr.tokens)?;
    Ok(TextContext {
        nouns,
        noun_categories: extracted.tokens,
        instruction,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct Panorama {
    /// `F_t = [R_t; Q_t]`.
    pub features: Var,
    /// Fused object features `Q_t`, absent when the node has no objects.
    pub objects: Option<Var>,
    /// Temporal relation matrix `T`, when that branch ran.
    pub attention: Option<Var>,
}

/// Row-concatenation of projected view features and fused object features.
pub fn assemble_panoramic(g: &mut Graph, store: &ParamStore, views: Var, objects: Option<Var>) -> Result<Var> {
    let w = g.param(store, names::VIEW_W)?;
    let b = g.param(store, names::VIEW_B)?;
    let projected = g.affine(views, w, b)?;
    match objects {
        Some(q) => g.concat_rows(&[projected, q]),
        None => Ok(projected),
    }
}

pub fn build_panorama(
    g: &mut Graph,
    store: &ParamStore,
    obs: &ViewpointObservation,
    text: &TextContext,
    relations: &RelationMatrix,
    toggles: RelationToggles,
) -> Result<Panorama> {
    let views = g.constant(obs.views.clone());
    if obs.objects.is_empty() {
        let features = assemble_panoramic(g, store, views, None)?;
        return Ok(Panorama {
            features,
            objects: None,
            attention: None,
        });
    }
    let objects = g.constant(obs.object_features.clone());
    let (projected, temporal, attention) = if toggles.tor {
        let out = tor_forward(g, store, objects, text.nouns, toggles.tor_softmax)?;
        (out.projected, Some(out.temporal), Some(out.attention))
    } else {
        (project_objects(g, store, objects)?, None, None)
    };
    let spatial = if toggles.sor {
        let queried = relations.query(&obs.categories, &text.noun_categories)?;
        Some(sor_features(g, &queried, text.nouns)?)
    } else {
        None
    };
    let logits = g.param(store, names::FUSION)?;
    let q = fuse(g, projected, temporal, spatial, logits)?;
    let features = assemble_panoramic(g, store, views, Some(q))?;
    Ok(Panorama {
        features,
        objects: Some(q),
        attention,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct ActionScores {
    /// `1 × (r + 1)`: frontier candidates in order, then STOP.
    pub logits: Var,
    pub probs: Var,
}

fn head(g: &mut Graph, store: &ParamStore, input: Var, w1: &str, b1: &str, w2: &str, b2: &str) -> Result<Var> {
    let (w1, b1, w2, b2) = (
        g.param(store, w1)?,
        g.param(store, b1)?,
        g.param(store, w2)?,
        g.param(store, b2)?,
    );
    let h = g.affine(input, w1, b1)?;
    let h = g.tanh(h);
    g.affine(h, w2, b2)
}

/// Scores every frontier node and STOP.
///
/// Each node embedding attends over the panorama; the MLP input is the
/// embedding gated by the instruction vector, next to the attended context.
pub fn score_candidates(
    g: &mut Graph,
    store: &ParamStore,
    frontier_inputs: &[Vec<f64>],
    current_input: &[f64],
    panorama: Var,
    instruction: Var,
) -> Result<ActionScores> {
    let r = frontier_inputs.len();
    let mut rows: Vec<&[f64]> = frontier_inputs.iter().map(Vec::as_slice).collect();
    rows.push(current_input);
    let raw = g.constant(Tensor2::from_rows(&rows));
    let nw = g.param(store, names::NODE_W)?;
    let nb = g.param(store, names::NODE_B)?;
    let nodes = g.affine(raw, nw, nb)?;

    let (wq, wk, wv) = (
        g.param(store, names::ATT_Q)?,
        g.param(store, names::ATT_K)?,
        g.param(store, names::ATT_V)?,
    );
    let q = g.matmul(nodes, wq)?;
    let k = g.matmul(panorama, wk)?;
    let v = g.matmul(panorama, wv)?;
    let scores = g.matmul_t(q, k)?;
    let d = g.shape(nodes).1 as f64;
    let scores = g.scale(scores, 1.0 / d.sqrt());
    let attn = g.row_softmax(scores)?;
    let context = g.matmul(attn, v)?;
    let gated = g.mul_row(nodes, instruction)?;
    let joint = g.concat_cols(&[gated, context])?;

    let stop_in = g.gather_rows(joint, &[r])?;
    let stop = head(
        g,
        store,
        stop_in,
        names::STOP_W1,
        names::STOP_B1,
        names::STOP_W2,
        names::STOP_B2,
    )?;
    let column = if r > 0 {
        let idx: Vec<usize> = (0..r).collect();
        let nav_in = g.gather_rows(joint, &idx)?;
        let nav = head(
            g,
            store,
            nav_in,
            names::NAV_W1,
            names::NAV_B1,
            names::NAV_W2,
            names::NAV_B2,
        )?;
        g.concat_rows(&[nav, stop])?
    } else {
        stop
    };
    let logits = g.transpose(column);
    let probs = g.row_softmax(logits)?;
    Ok(ActionScores { logits, probs })
}

/// Grounding logits (`1 × m`) for the fused object rows.
pub fn predict_object(g: &mut Graph, store: &ParamStore, objects: Var, instruction: Var) -> Result<Var> {
    if g.shape(objects).0 == 0 {
        return Err(Error::Empty("objects to ground"));
    }
    let w = g.param(store, names::GROUND_W)?;
    let b = g.param(store, names::GROUND_B)?;
    let proj = g.affine(objects, w, b)?;
    g.matmul_t(instruction, proj)
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}
