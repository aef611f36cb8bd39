//! Dimensions and parameter initialization for every learnable component.

use serde::{Deserialize, Serialize};

use crate::params::ParamStore;
use crate::rng::{self, label};
use crate::tensor::Tensor2;

/// Parameter names.
pub mod names {
    pub const TOKEN_EMBED: &str = "text.token_embed";
    pub const POS_EMBED: &str = "text.pos_embed";
    pub const NOUN_Q: &str = "text.noun_q";
    pub const NOUN_K: &str = "text.noun_k";
    pub const NOUN_V: &str = "text.noun_v";
    pub const POOL_W: &str = "text.pool_w";
    pub const POOL_B: &str = "text.pool_b";

    pub const OBJ_W: &str = "rel.obj_w";
    pub const OBJ_B: &str = "rel.obj_b";
    pub const FUSION: &str = "rel.fusion_logits";

    pub const VIEW_W: &str = "pano.view_w";
    pub const VIEW_B: &str = "pano.view_b";

    pub const NODE_W: &str = "policy.node_w";
    pub const NODE_B: &str = "policy.node_b";
    pub const ATT_Q: &str = "policy.att_q";
    pub const ATT_K: &str = "policy.att_k";
    pub const ATT_V: &str = "policy.att_v";
    pub const NAV_W1: &str = "policy.nav_w1";
    pub const NAV_B1: &str = "policy.nav_b1";
    pub const NAV_W2: &str = "policy.nav_w2";
    pub const NAV_B2: &str = "policy.nav_b2";
    pub const STOP_W1: &str = "policy.stop_w1";
    pub const STOP_B1: &str = "policy.stop_b1";
    pub const STOP_W2: &str = "policy.stop_w2";
    pub const STOP_B2: &str = "policy.stop_b2";

    pub const GROUND_W: &str = "ground.w";
    pub const GROUND_B: &str = "ground.b";
}

/// Extra per-node inputs appended to the averaged view feature: one-hot
/// visit status (visited, frontier, current) and known-map distance / 10.
pub const NODE_EXTRA: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub hidden: usize,
    pub max_len: usize,
    /// Token vocabulary size (nouns and filler words).
    pub tokens: usize,
    pub view_dim: usize,
    pub object_dim: usize,
    /// Initial fusion weights for (raw objects, temporal, spatial).
    pub alpha_init: [f64; 3],
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 32,
            hidden: 32,
            max_len: 24,
            tokens: 96,
            view_dim: 66,
            object_dim: 36,
            alpha_init: [0.8, 0.1, 0.1],
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn node_input_dim(&self) -> usize {
        self.view_dim + NODE_EXTRA
    }
}

/// Fusion logits whose softmax equals `alpha`.
pub fn fusion_logits(alpha: [f64; 3]) -> Tensor2 {
    Tensor2::row_vector(&alpha.map(f64::ln))
}

/// Fresh parameters for the full model.
pub fn init_params(cfg: &ModelConfig) -> ParamStore {
    use names::*;
    let mut rng = rng::stream(cfg.init_seed, &[label::INIT]);
    let d = cfg.d_model;
    let h = cfg.hidden;
    let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut s = ParamStore::new();

    s.insert_normal(TOKEN_EMBED, cfg.tokens, d, 0.5, &mut rng);
    s.insert_normal(POS_EMBED, cfg.max_len, d, 0.1, &mut rng);
    for name in [NOUN_Q, NOUN_K, NOUN_V, POOL_W] {
        s.insert_uniform(name, d, d, xavier(d, d), &mut rng);
    }
    s.insert(POOL_B, Tensor2::zeros(1, d));

    s.insert_uniform(OBJ_W, cfg.object_dim, d, xavier(cfg.object_dim, d), &mut rng);
    s.insert(OBJ_B, Tensor2::zeros(1, d));
    s.insert(FUSION, fusion_logits(cfg.alpha_init));

    s.insert_uniform(VIEW_W, cfg.view_dim, d, xavier(cfg.view_dim, d), &mut rng);
    s.insert(VIEW_B, Tensor2::zeros(1, d));

    s.insert_uniform(
        NODE_W,
        cfg.node_input_dim(),
        d,
        xavier(cfg.node_input_dim(), d),
        &mut rng,
    );
    s.insert(NODE_B, Tensor2::zeros(1, d));
    for name in [ATT_Q, ATT_K, ATT_V] {
        s.insert_uniform(name, d, d, xavier(d, d), &mut rng);
    }
    for (w1, b1, w2, b2) in [(NAV_W1, NAV_B1, NAV_W2, NAV_B2), (STOP_W1, STOP_B1, STOP_W2, STOP_B2)] {
        s.insert_uniform(w1, 2 * d, h, xavier(2 * d, h), &mut rng);
        s.insert(b1, Tensor2::zeros(1, h));
        s.insert_uniform(w2, h, 1, xavier(h, 1), &mut rng);
        s.insert(b2, Tensor2::zeros(1, 1));
    }

    s.insert_uniform(GROUND_W, d, d, xavier(d, d), &mut rng);
    s.insert(GROUND_B, Tensor2::zeros(1, d));
    s
}
