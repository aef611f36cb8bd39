//! Synthetic instructions, object-noun extraction and the text encoders.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::env::{EnvironmentGraph, NodeId};
use crate::error::{Error, Result};
use crate::model::names;
use crate::params::ParamStore;
use crate::rng::{self, label};

const HOUSEHOLD_NOUNS: &[&str] = &[
    "table",
    "chair",
    "sofa",
    "bed",
    "lamp",
    "sink",
    "stove",
    "fridge",
    "toilet",
    "bathtub",
    "mirror",
    "shelf",
    "desk",
    "cabinet",
    "plant",
    "painting",
    "pillow",
    "towel",
    "curtain",
    "rug",
    "television",
    "fireplace",
    "oven",
    "microwave",
    "dresser",
    "wardrobe",
    "vase",
    "clock",
    "piano",
    "bench",
    "stool",
    "counter",
    "shower",
    "window",
    "door",
    "stairs",
    "basket",
    "blanket",
    "bookcase",
    "computer",
    "fan",
    "radiator",
    "statue",
    "candle",
    "bottle",
    "cushion",
    "armchair",
    "nightstand",
];

const FILLER_WORDS: &[&str] = &[
    "walk", "go", "head", "move", "past", "toward", "by", "near", "the", "then", "and", "find", "locate", "to", "turn",
    "left", "right", "through", "room", "a",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry(pub String, pub bool);

/// Token table. Noun `i` has token id `i` and denotes object category `i`;
/// filler words follow the nouns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
}

impl Vocabulary {
    pub fn for_categories(categories: usize) -> Self {
        let mut entries: Vec<VocabEntry> = (0..categories)
            .map(|c| {
                let base = HOUSEHOLD_NOUNS[c % HOUSEHOLD_NOUNS.len()];
                let word = if c < HOUSEHOLD_NOUNS.len() {
                    base.to_string()
                } else {
                    format!("{base}{}", c / HOUSEHOLD_NOUNS.len())
                };
                VocabEntry(word, true)
            })
            .collect();
        entries.extend(FILLER_WORDS.iter().map(|w| VocabEntry(w.to_string(), false)));
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn categories(&self) -> usize {
        self.entries.iter().filter(|e| e.1).count()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.entries.get(id).map(|e| e.0.as_str())
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.0 == word)
    }

    /// The object-noun database: every token flagged as a noun.
    pub fn noun_db(&self) -> NounDb {
        NounDb(
            self.entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.1)
                .map(|(i, _)| i)
                .collect(),
        )
    }

    pub fn render(&self, tokens: &[usize]) -> String {
        tokens
            .iter()
            .map(|&t| self.token(t).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn filler(&self, word: &str) -> usize {
        self.id(word).expect("filler word present in every vocabulary")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NounDb(BTreeSet<usize>);

impl NounDb {
    pub fn from_tokens(tokens: impl IntoIterator<Item = usize>) -> Self {
        Self(tokens.into_iter().collect())
    }

    pub fn contains(&self, token: usize) -> bool {
        self.0.contains(&token)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instruction {
    pub tokens: Vec<usize>,
    pub target_node: NodeId,
    pub target_category: usize,
}

/// Nouns found in an instruction, with their token positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExtractedNouns {
    pub tokens: Vec<usize>,
    pub positions: Vec<usize>,
}

impl ExtractedNouns {
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }
}

/// In-order scan keeping every token found in `db`, duplicates included.
pub fn extract_nouns(tokens: &[usize], db: &NounDb) -> Result<ExtractedNouns> {
    if db.is_empty() {
        return Err(Error::Empty("noun database"));
    }
    let mut out = ExtractedNouns::default();
    for (pos, &t) in tokens.iter().enumerate() {
        if db.contains(t) {
            out.tokens.push(t);
            out.positions.push(pos);
        }
    }
    Ok(out)
}

/// Nouns for encoding, falling back to the target noun at the final position
/// when extraction finds nothing.
pub fn nouns_or_fallback(instr: &Instruction, db: &NounDb) -> Result<ExtractedNouns> {
    let found = extract_nouns(&instr.tokens, db)?;
    if found.is_empty() {
        Ok(ExtractedNouns {
            tokens: vec![instr.target_category],
            positions: vec![instr.tokens.len().saturating_sub(1)],
        })
    } else {
        Ok(found)
    }
}

const MAX_LANDMARKS: usize = 4;
/// Chance that an intermediate route node contributes a landmark.
const LANDMARK_PROB: f64 = 0.9;

/// Builds "walk past the X then head toward the Y and find the Z" style token
/// sequences from landmark objects on the shortest route, ending with the
/// target noun.
pub fn synthesize_instruction(
    env: &EnvironmentGraph,
    vocab: &Vocabulary,
    start: NodeId,
    target: NodeId,
    target_object: usize,
    seed: u64,
) -> Result<Instruction> {
    let placement = env.objects().get(target_object).ok_or(Error::Index {
        what: "target object",
        index: target_object,
        limit: env.objects().len(),
    })?;
    if placement.node != target {
        return Err(Error::contract(format!(
            "target object {target_object} is at node {}, not {target}",
            placement.node
        )));
    }
    if placement.category >= vocab.categories() {
        return Err(Error::Index {
            what: "target category",
            index: placement.category,
            limit: vocab.categories(),
        });
    }
    let (path, _) = env.shortest_path(start, target)?;
    let mut rng = rng::stream(
        seed,
        &[label::INSTRUCTION, start as u64, target as u64, target_object as u64],
    );
    let mut landmarks = Vec::new();
    for &node in path.iter().skip(1).take(path.len().saturating_sub(2)) {
        let objs = env.objects_at(node);
        if !objs.is_empty() && rng.random::<f64>() < LANDMARK_PROB {
            landmarks.push(env.objects()[objs[rng.random_range(0..objs.len())]].category);
        }
    }
    if landmarks.len() > MAX_LANDMARKS {
        // Keep the landmarks closest to the goal.
        landmarks.drain(..landmarks.len() - MAX_LANDMARKS);
    }

    let verbs = ["walk", "go", "head", "move"];
    let preps = ["past", "toward", "by", "near", "through"];
    let finals = ["find", "locate"];
    let mut tokens = Vec::new();
    for (i, &noun) in landmarks.iter().enumerate() {
        if i > 0 {
            tokens.push(vocab.filler("then"));
        }
        tokens.push(vocab.filler(verbs[rng.random_range(0..verbs.len())]));
        tokens.push(vocab.filler(preps[rng.random_range(0..preps.len())]));
        tokens.push(vocab.filler("the"));
        tokens.push(noun);
    }
    if !tokens.is_empty() {
        tokens.push(vocab.filler("and"));
    }
    tokens.push(vocab.filler(finals[rng.random_range(0..finals.len())]));
    tokens.push(vocab.filler("the"));
    tokens.push(placement.category);
    Ok(Instruction {
        tokens,
        target_node: target,
        target_category: placement.category,
    })
}

/// Contextual noun features `Ŵ`, one row per extracted noun.
#[derive(Clone, Copy, Debug)]
pub struct NounFeatures {
    pub features: Var,
}

fn embed_tokens(g: &mut Graph, store: &ParamStore, tokens: &[usize], positions: &[usize]) -> Result<Var> {
    let tok_table = g.param(store, names::TOKEN_EMBED)?;
    let pos_table = g.param(store, names::POS_EMBED)?;
    let max_len = g.shape(pos_table).0;
    if let Some(&p) = positions.iter().find(|&&p| p >= max_len) {
        return Err(Error::Index {
            what: "positional embedding",
            index: p,
            limit: max_len,
        });
    }
    let tok = g.gather_rows(tok_table, tokens)?;
    let pos = g.gather_rows(pos_table, positions)?;
    g.add(tok, pos)
}

/// One self-attention layer over token + positional embeddings of the nouns.
pub fn encode_nouns(g: &mut Graph, store: &ParamStore, nouns: &ExtractedNouns) -> Result<NounFeatures> {
    if nouns.is_empty() {
        return Err(Error::Empty("noun list"));
    }
    if nouns.positions.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::contract("noun positions must be strictly increasing"));
    }
    let x = embed_tokens(g, store, &nouns.tokens, &nouns.positions)?;
    let wq = g.param(store, names::NOUN_Q)?;
    let wk = g.param(store, names::NOUN_K)?;
    let wv = g.param(store, names::NOUN_V)?;
    let q = g.matmul(x, wq)?;
    let k = g.matmul(x, wk)?;
    let v = g.matmul(x, wv)?;
    let scores = g.matmul_t(q, k)?;
    let d = g.shape(x).1 as f64;
    let scaled = g.scale(scores, 1.0 / d.sqrt());
    let attn = g.row_softmax(scaled)?;
    let features = g.matmul(attn, v)?;
    Ok(NounFeatures { features })
}

/// Pooled instruction vector: affine map of the mean token + position embedding.
pub fn encode_instruction(g: &mut Graph, store: &ParamStore, tokens: &[usize]) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::Empty("instruction"));
    }
    let positions: Vec<usize> = (0..tokens.len()).collect();
    encode_instruction_at(g, store, tokens, &positions)
}

/// As [`encode_instruction`] with explicit positions per token.
pub fn encode_instruction_at(g: &mut Graph, store: &ParamStore, tokens: &[usize], positions: &[usize]) -> Result<Var> {
    let x = embed_tokens(g, store, tokens, positions)?;
    let mean = g.mean_rows(x)?;
    let w = g.param(store, names::POOL_W)?;
    let b = g.param(store, names::POOL_B)?;
    g.affine(mean, w, b)
}

/// Instruction records as JSON lines.
pub fn write_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
