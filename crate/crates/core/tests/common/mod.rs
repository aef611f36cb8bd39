//! Shared builders for the integration and acceptance targets.
#![allow(dead_code)]

use rand::Rng as _;
use relnav::agent::{
    predict_object, rollout, score_candidates, EpisodeSpec, EpisodeTrace, RolloutContext, RolloutMode, RolloutOptions,
    TraversedEdge,
};
use relnav::autodiff::{Graph, Var};
use relnav::env::{
    generate_environment, EdgeRecord, EnvConfig, EnvironmentFile, EnvironmentGraph, FeatureSpec, NodeRecord,
    ENV_SCHEMA_VERSION,
};
use relnav::gradcheck::{grad_check, GradCheckOptions};
use relnav::instruction::{encode_nouns, ExtractedNouns, NounDb, Vocabulary};
use relnav::losses::{og_loss, sap_loss, tbp_loss, total_loss, LossWeights};
use relnav::model::{init_params, names, ModelConfig};
use relnav::params::ParamStore;
use relnav::relations::{fuse, sor_build, tor_forward, RelationMatrix, SorConstants};
use relnav::rng::{self, Rng};
use relnav::train::{sample_episode, SplitConfig};
use relnav::{Result, Tensor2};

pub const GRAD_TOL: f64 = 1e-4;

pub fn uniform(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor2 {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Tensor2::from_vec(rows, cols, data).unwrap()
}

/// `Σ C ⊙ x` with a fixed random `C`, so no output coordinate cancels another.
fn weighted_sum(g: &mut Graph, x: Var, rng: &mut Rng) -> Result<Var> {
    let (r, c) = g.shape(x);
    let w = g.constant(uniform(rng, r, c, 1.0));
    let y = g.mul(x, w)?;
    Ok(g.sum(y))
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub worst_instance: usize,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOL
    }
}

fn run_suite<B>(name: &'static str, instances: usize, build: B) -> Result<SuiteResult>
where
    B: Fn(usize, &mut Rng) -> Result<f64>,
{
    let mut out = SuiteResult {
        name,
        instances,
        max_rel_error: 0.0,
        worst_instance: 0,
    };
    for i in 0..instances {
        let mut rng = rng::stream(0x5eed, &[name.len() as u64, i as u64]);
        let err = build(i, &mut rng)?;
        if err > out.max_rel_error || !err.is_finite() {
            out.max_rel_error = err;
            out.worst_instance = i;
        }
    }
    Ok(out)
}

fn check<F>(store: &ParamStore, seed: u64, max_coords: Option<usize>, f: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let opts = GradCheckOptions {
        step: 1e-4,
        max_coords_per_param: max_coords,
        seed,
    };
    Ok(grad_check(store, f, &opts)?.max_rel_error)
}

const D: usize = 4;

fn suite_encode_nouns(instances: usize) -> Result<SuiteResult> {
    run_suite("encode_nouns", instances, |i, rng| {
        let mut s = ParamStore::new();
        s.insert(names::TOKEN_EMBED, uniform(rng, 8, D, 0.8));
        s.insert(names::POS_EMBED, uniform(rng, 10, D, 0.3));
        for n in [names::NOUN_Q, names::NOUN_K, names::NOUN_V] {
            s.insert(n, uniform(rng, D, D, 0.8));
        }
        let count = rng.random_range(1..=4);
        let mut positions: Vec<usize> = rand::seq::index::sample(rng, 10, count).into_vec();
        positions.sort_unstable();
        let nouns = ExtractedNouns {
            tokens: (0..count).map(|_| rng.random_range(0..8)).collect(),
            positions,
        };
        let w = uniform(rng, count, D, 1.0);
        check(&s, i as u64, None, move |g, s| {
            let f = encode_nouns(g, s, &nouns)?.features;
            let w = g.constant(w.clone());
            let y = g.mul(f, w)?;
            Ok(g.sum(y))
        })
    })
}

fn suite_tor_forward(instances: usize) -> Result<SuiteResult> {
    run_suite("tor_forward", instances, |i, rng| {
        let (m, l, k) = (rng.random_range(1..=4), rng.random_range(1..=4), 5);
        let mut s = ParamStore::new();
        s.insert(names::OBJ_W, uniform(rng, k, D, 0.7));
        s.insert(names::OBJ_B, uniform(rng, 1, D, 0.3));
        s.insert("in.objects", uniform(rng, m, k, 1.0));
        s.insert("in.nouns", uniform(rng, l, D, 1.0));
        let normalize = i % 4 != 3;
        let seed = i as u64;
        check(&s, seed, None, move |g, s| {
            let o = g.param(s, "in.objects")?;
            let w = g.param(s, "in.nouns")?;
            let out = tor_forward(g, s, o, w, normalize)?;
            let mut r = rng::stream(seed, &[1]);
            let a = weighted_sum(g, out.temporal, &mut r)?;
            let b = weighted_sum(g, out.attention, &mut r)?;
            g.add(a, b)
        })
    })
}

fn suite_fuse(instances: usize) -> Result<SuiteResult> {
    run_suite("fuse", instances, |i, rng| {
        let m = rng.random_range(1..=4);
        let mut s = ParamStore::new();
        for n in ["in.o", "in.m", "in.n"] {
            s.insert(n, uniform(rng, m, D, 1.0));
        }
        s.insert(names::FUSION, uniform(rng, 1, 3, 1.5));
        let (temporal, spatial) = (i % 2 == 0, i % 3 != 0);
        let seed = i as u64;
        check(&s, seed, None, move |g, s| {
            let o = g.param(s, "in.o")?;
            let mt = if temporal { Some(g.param(s, "in.m")?) } else { None };
            let nt = if spatial { Some(g.param(s, "in.n")?) } else { None };
            let logits = g.param(s, names::FUSION)?;
            let q = fuse(g, o, mt, nt, logits)?;
            weighted_sum(g, q, &mut rng::stream(seed, &[2]))
        })
    })
}

fn policy_store(rng: &mut Rng, node_in: usize, hidden: usize) -> ParamStore {
    let mut s = ParamStore::new();
    s.insert(names::NODE_W, uniform(rng, node_in, D, 0.7));
    s.insert(names::NODE_B, uniform(rng, 1, D, 0.3));
    for n in [names::ATT_Q, names::ATT_K, names::ATT_V] {
        s.insert(n, uniform(rng, D, D, 0.8));
    }
    for (w1, b1, w2, b2) in [
        (names::NAV_W1, names::NAV_B1, names::NAV_W2, names::NAV_B2),
        (names::STOP_W1, names::STOP_B1, names::STOP_W2, names::STOP_B2),
    ] {
        s.insert(w1, uniform(rng, 2 * D, hidden, 0.7));
        s.insert(b1, uniform(rng, 1, hidden, 0.3));
        s.insert(w2, uniform(rng, hidden, 1, 0.7));
        s.insert(b2, uniform(rng, 1, 1, 0.3));
    }
    s
}

fn suite_score_candidates(instances: usize) -> Result<SuiteResult> {
    run_suite("score_candidates", instances, |i, rng| {
        let node_in = 5;
        let mut s = policy_store(rng, node_in, 3);
        let p = rng.random_range(1..=5);
        s.insert("in.pano", uniform(rng, p, D, 1.0));
        s.insert("in.u", uniform(rng, 1, D, 1.0));
        let r = rng.random_range(0..=3);
        let frontier: Vec<Vec<f64>> = (0..r).map(|_| uniform(rng, 1, node_in, 1.0).into_data()).collect();
        let current = uniform(rng, 1, node_in, 1.0).into_data();
        let seed = i as u64;
        check(&s, seed, None, move |g, s| {
            let pano = g.param(s, "in.pano")?;
            let u = g.param(s, "in.u")?;
            let scores = score_candidates(g, s, &frontier, &current, pano, u)?;
            let mut w = rng::stream(seed, &[3]);
            let a = weighted_sum(g, scores.probs, &mut w)?;
            let b = weighted_sum(g, scores.logits, &mut w)?;
            g.add(a, b)
        })
    })
}

fn suite_predict_object(instances: usize) -> Result<SuiteResult> {
    run_suite("predict_object", instances, |i, rng| {
        let m = rng.random_range(1..=5);
        let mut s = ParamStore::new();
        s.insert(names::GROUND_W, uniform(rng, D, D, 0.8));
        s.insert(names::GROUND_B, uniform(rng, 1, D, 0.3));
        s.insert("in.q", uniform(rng, m, D, 1.0));
        s.insert("in.u", uniform(rng, 1, D, 1.0));
        let seed = i as u64;
        check(&s, seed, None, move |g, s| {
            let q = g.param(s, "in.q")?;
            let u = g.param(s, "in.u")?;
            let logits = predict_object(g, s, q, u)?;
            weighted_sum(g, logits, &mut rng::stream(seed, &[4]))
        })
    })
}

fn suite_sap(instances: usize) -> Result<SuiteResult> {
    run_suite("sap_loss", instances, |i, rng| {
        let steps = rng.random_range(1..=4);
        let mut s = ParamStore::new();
        let mut experts = Vec::new();
        for k in 0..steps {
            let r = rng.random_range(1..=5);
            s.insert(format!("in.l{k}"), uniform(rng, 1, r, 2.0));
            experts.push(rng.random_range(0..r));
        }
        check(&s, i as u64, None, move |g, s| {
            let mut picks = Vec::new();
            for (k, &e) in experts.iter().enumerate() {
                let l = g.param(s, &format!("in.l{k}"))?;
                picks.push((g.row_softmax(l)?, e));
            }
            Ok(sap_loss(g, &picks)?.value)
        })
    })
}

fn suite_og(instances: usize) -> Result<SuiteResult> {
    run_suite("og_loss", instances, |i, rng| {
        let m = rng.random_range(1..=5);
        let mut s = ParamStore::new();
        s.insert("in.l", uniform(rng, 1, m, 2.0));
        let target = (i % 5 != 4).then(|| rng.random_range(0..m));
        check(&s, i as u64, None, move |g, s| {
            let l = g.param(s, "in.l")?;
            Ok(og_loss(g, Some(l), target)?.value)
        })
    })
}

fn suite_tbp(instances: usize) -> Result<SuiteResult> {
    run_suite("tbp_loss", instances, |i, rng| {
        let r = rng.random_range(1..=6);
        let mut s = ParamStore::new();
        s.insert("in.l", uniform(rng, 1, r, 2.0));
        let d: Vec<f64> = (0..r)
            .map(|_| {
                if rng.random::<f64>() < 0.3 {
                    0.0
                } else {
                    rng.random_range(0.0..12.0)
                }
            })
            .collect();
        let on_probs = i % 2 == 0;
        check(&s, i as u64, None, move |g, s| {
            let l = g.param(s, "in.l")?;
            let scores = if on_probs { g.row_softmax(l)? } else { l };
            tbp_loss(g, scores, &d)
        })
    })
}

/// A small generated world with matching model dimensions.
pub struct World {
    pub env: EnvironmentGraph,
    pub vocab: Vocabulary,
    pub nouns: NounDb,
    pub relations: RelationMatrix,
    pub model: ModelConfig,
}

pub fn small_env_config() -> EnvConfig {
    EnvConfig {
        nodes: 10,
        vocab_size: 6,
        features: FeatureSpec {
            category_dim: 3,
            ..FeatureSpec::default()
        },
        ..EnvConfig::default()
    }
}

pub fn small_world(seed: u64) -> Result<World> {
    let cfg = small_env_config();
    let env = generate_environment(seed, &cfg)?;
    let vocab = Vocabulary::for_categories(cfg.vocab_size);
    let relations = sor_build(&[&env], SorConstants::default())?;
    let model = ModelConfig {
        d_model: D,
        hidden: 3,
        tokens: vocab.len(),
        view_dim: cfg.features.view_dim(),
        object_dim: cfg.features.object_dim(),
        init_seed: seed,
        ..ModelConfig::default()
    };
    Ok(World {
        nouns: vocab.noun_db(),
        env,
        vocab,
        relations,
        model,
    })
}

pub fn episode_in(world: &World, id: usize, seed: u64) -> Result<EpisodeSpec> {
    sample_episode(&world.env, &world.vocab, &SplitConfig::default(), id, 0, seed)
}

/// Initial parameters moved off their zero biases.
pub fn jittered_params(model: &ModelConfig, seed: u64) -> ParamStore {
    let mut s = init_params(model);
    let mut rng = rng::stream(seed, &[0x6a]);
    let names: Vec<String> = s.names().map(str::to_string).collect();
    for n in names {
        for v in s.value_mut(&n).unwrap().data_mut() {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    s
}

/// Teacher-forced episode objective; the demonstrator fixes the path, so the
/// graph shape does not depend on the parameters.
pub fn episode_objective(g: &mut Graph, s: &ParamStore, world: &World, spec: &EpisodeSpec) -> Result<Var> {
    let ctx = RolloutContext {
        env: &world.env,
        store: s,
        relations: &world.relations,
        nouns: &world.nouns,
        toggles: Default::default(),
    };
    let opts = RolloutOptions {
        mode: RolloutMode::Teacher,
        ..RolloutOptions::default()
    };
    let (_, tape) = rollout(g, &ctx, spec, &opts, &mut rng::stream(0, &[]))?;
    let picks: Vec<(Var, usize)> = tape
        .steps
        .iter()
        .filter_map(|t| t.expert.map(|e| (t.probs, e)))
        .collect();
    let sap = sap_loss(g, &picks)?;
    let og = og_loss(g, tape.grounding, tape.target_object)?;
    let terms = tape
        .steps
        .iter()
        .map(|t| tbp_loss(g, t.probs, &t.revisit))
        .collect::<Result<Vec<_>>>()?;
    let tbp = g.add_scalars(&terms)?;
    Ok(total_loss(g, sap.value, og.value, tbp, &LossWeights::default())?.0)
}

fn suite_full(instances: usize) -> Result<SuiteResult> {
    run_suite("full_objective", instances, |i, _| {
        let world = small_world(i as u64)?;
        let spec = episode_in(&world, i, i as u64)?;
        let s = jittered_params(&world.model, i as u64);
        check(&s, i as u64, Some(2), |g, s| episode_objective(g, s, &world, &spec))
    })
}

/// Every gradient suite, each over `instances` random instances.
pub fn gradient_suites(instances: usize) -> Result<Vec<SuiteResult>> {
    Ok(vec![
        suite_encode_nouns(instances)?,
        suite_tor_forward(instances)?,
        suite_fuse(instances)?,
        suite_score_candidates(instances)?,
        suite_predict_object(instances)?,
        suite_sap(instances)?,
        suite_og(instances)?,
        suite_tbp(instances)?,
        suite_full(instances)?,
    ])
}

/// Brute-force relation matrix: every ordered pair of distinct co-located
/// objects adds `k1 / (k2‖Δv‖ + k3|Δd| + 1e-6)` to its category cell.
pub fn relation_oracle(envs: &[&EnvironmentGraph], k: SorConstants) -> Vec<Vec<f64>> {
    let n = envs[0].vocab_size();
    let mut e = vec![vec![0.0; n]; n];
    for env in envs {
        let objs = env.objects();
        for a in 0..objs.len() {
            for b in 0..objs.len() {
                let (x, y) = (&objs[a], &objs[b]);
                if a == b || x.node != y.node || x.category == y.category {
                    continue;
                }
                let dv = ((x.direction[0] - y.direction[0]).powi(2)
                    + (x.direction[1] - y.direction[1]).powi(2)
                    + (x.direction[2] - y.direction[2]).powi(2))
                .sqrt();
                e[x.category][y.category] += k.k1 / (k.k2 * dv + k.k3 * (x.depth - y.depth).abs() + 1e-6);
            }
        }
    }
    e
}

/// Seven nodes in the plane:
///
/// ```text
///   4 ───────── 5
///   │           │
///   6 ─ 0 ─ 1 ─ 2 ─ 3
/// ```
///
/// 0–1, 1–2, 0–4, 5–2, 6–0 are 5 m, 4–5 is 10 m and 2–3 is 3.1 m.
pub fn fixture_env() -> EnvironmentGraph {
    let xy = [
        (0.0, 0.0),
        (5.0, 0.0),
        (10.0, 0.0),
        (13.1, 0.0),
        (0.0, 5.0),
        (10.0, 5.0),
        (-5.0, 0.0),
    ];
    let edges = [
        (0, 1, 5.0),
        (1, 2, 5.0),
        (2, 3, 3.1),
        (0, 4, 5.0),
        (4, 5, 10.0),
        (5, 2, 5.0),
        (6, 0, 5.0),
    ];
    EnvironmentGraph::from_file(EnvironmentFile {
        schema_version: ENV_SCHEMA_VERSION,
        seed: 0,
        vocab_size: 4,
        features: FeatureSpec::default(),
        nodes: xy
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| NodeRecord { id, xyz: [x, y, 0.0] })
            .collect(),
        edges: edges
            .iter()
            .map(|&(u, v, length)| EdgeRecord { u, v, length })
            .collect(),
        objects: vec![],
    })
    .unwrap()
}

pub fn walk(env: &EnvironmentGraph, nodes: &[usize]) -> Vec<TraversedEdge> {
    nodes
        .windows(2)
        .map(|w| TraversedEdge {
            from: w[0],
            to: w[1],
            length: env.edge_length(w[0], w[1]).unwrap(),
        })
        .collect()
}

pub fn fixture_trace(
    env: &EnvironmentGraph,
    episode: usize,
    nodes: &[usize],
    target: usize,
    predicted: Option<usize>,
    forced: bool,
) -> EpisodeTrace {
    EpisodeTrace {
        episode,
        env: 0,
        start: nodes[0],
        target,
        target_category: 1,
        nodes: nodes.to_vec(),
        edges: walk(env, nodes),
        steps: vec![],
        forced_stop: forced,
        final_node: *nodes.last().unwrap(),
        predicted_object: predicted.map(|_| 0),
        predicted_category: predicted,
        success: None,
        oracle_success: None,
        grounded: None,
    }
}

/// Exact success (ℓ = 10, TL = 20), near miss at 3.1 m, oracle-only,
/// revisit-heavy success, grounding failure, forced stop.
pub fn fixture_traces(env: &EnvironmentGraph) -> Vec<EpisodeTrace> {
    vec![
        fixture_trace(env, 0, &[0, 4, 5, 2], 2, Some(1), false),
        fixture_trace(env, 1, &[0, 1, 2, 3], 2, Some(1), false),
        fixture_trace(env, 2, &[6, 0, 1, 2, 1], 2, Some(1), false),
        fixture_trace(env, 3, &[1, 0, 1, 0, 1, 2], 2, Some(1), false),
        fixture_trace(env, 4, &[0, 1, 2], 2, Some(3), false),
        fixture_trace(env, 5, &[6, 0, 4], 2, None, true),
    ]
}
