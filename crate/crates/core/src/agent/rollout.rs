use std::collections::HashSet;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::policy::{argmax, build_panorama, encode_text, predict_object, score_candidates, Panorama, RelationToggles};
use super::topomap::{TopoMap, TraversedEdge};
use crate::autodiff::{Graph, Var};
use crate::env::{EnvironmentGraph, NodeId};
use crate::error::{Error, Result};
use crate::instruction::{Instruction, NounDb};
use crate::losses::{demonstrator_action, revisit_distances, Action};
use crate::params::ParamStore;
use crate::relations::RelationMatrix;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    /// Follow the demonstrator.
    Teacher,
    /// Sample from the policy.
    Sample,
    /// Take the most probable action.
    Greedy,
    /// Pick uniformly among the candidates, ignoring the policy.
    Uniform,
}

impl FromStr for RolloutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "teacher" => Ok(Self::Teacher),
            "sample" => Ok(Self::Sample),
            "greedy" => Ok(Self::Greedy),
            "uniform" | "random" => Ok(Self::Uniform),
            other => Err(Error::Config(format!("unknown rollout mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub id: usize,
    /// Index of the environment within its split.
    pub env: usize,
    pub start: NodeId,
    pub instruction: Instruction,
}

impl EpisodeSpec {
    pub fn target(&self) -> NodeId {
        self.instruction.target_node
    }

    pub fn target_category(&self) -> usize {
        self.instruction.target_category
    }
}

/// Everything a rollout reads but never mutates.
#[derive(Clone, Copy)]
pub struct RolloutContext<'a> {
    pub env: &'a EnvironmentGraph,
    pub store: &'a ParamStore,
    pub relations: &'a RelationMatrix,
    pub nouns: &'a NounDb,
    pub toggles: RelationToggles,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutOptions {
    pub mode: RolloutMode,
    pub max_steps: usize,
    /// Divisor for candidates whose route reuses a traversed edge; 1 disables it.
    pub xi: f64,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            mode: RolloutMode::Greedy,
            max_steps: 15,
            xi: 1.0,
        }
    }
}

impl RolloutOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        if !(self.xi >= 0.25 && self.xi.is_finite()) {
            return Err(Error::Config(format!("xi must be finite and >= 0.25, got {}", self.xi)));
        }
        Ok(())
    }
}

/// One decision: candidates are the frontier in id order followed by STOP
/// (`None`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub node: NodeId,
    pub candidates: Vec<Option<NodeId>>,
    pub logits: Vec<f64>,
    /// Probabilities the action was drawn from (after any revisit penalty).
    pub probs: Vec<f64>,
    pub stop_prob: f64,
    pub revisit: Vec<f64>,
    pub expert: Option<usize>,
    pub chosen: usize,
    /// Temporal relation matrix at this node (objects × nouns), when computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub env: usize,
    pub start: NodeId,
    pub target: NodeId,
    pub target_category: usize,
    pub nodes: Vec<NodeId>,
    pub edges: Vec<TraversedEdge>,
    pub steps: Vec<ActionDistribution>,
    pub forced_stop: bool,
    pub final_node: NodeId,
    /// Object index (into the environment's object list) picked by grounding.
    pub predicted_object: Option<usize>,
    pub predicted_category: Option<usize>,
    #[serde(default)]
    pub success: Option<bool>,
    #[serde(default)]
    pub oracle_success: Option<bool>,
    #[serde(default)]
    pub grounded: Option<bool>,
}

impl EpisodeTrace {
    pub fn trajectory_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).fold(0.0, |a, l| a + l)
    }

    /// Length of edge traversals that cross an edge already crossed earlier.
    pub fn reused_length(&self) -> f64 {
        let mut seen = HashSet::new();
        let mut total = 0.0;
        for e in &self.edges {
            if !seen.insert((e.from.min(e.to), e.from.max(e.to))) {
                total += e.length;
            }
        }
        total
    }

    /// Sum over decisions of the revisit distance of the chosen candidate.
    pub fn revisit_length(&self) -> f64 {
        self.steps.iter().map(|s| s.revisit[s.chosen]).fold(0.0, |a, d| a + d)
    }

    /// Re-walks the edge list from the start node and returns the node
    /// sequence and length, checking each edge against the environment.
    pub fn replay(&self, env: &EnvironmentGraph) -> Result<(Vec<NodeId>, f64)> {
        let mut nodes = vec![self.start];
        let mut length = 0.0;
        for e in &self.edges {
            let at = *nodes.last().unwrap_or(&self.start);
            if e.from != at {
                return Err(Error::contract(format!(
                    "edge starts at {} but the walk is at {at}",
                    e.from
                )));
            }
            let l = env
                .edge_length(e.from, e.to)
                .ok_or_else(|| Error::contract(format!("no edge ({}, {})", e.from, e.to)))?;
            if l != e.length {
                return Err(Error::contract(format!("edge ({}, {}) length mismatch", e.from, e.to)));
            }
            length += l;
            nodes.push(e.to);
        }
        Ok((nodes, length))
    }
}

/// Differentiable pieces of one decision.
#[derive(Clone, Debug)]
pub struct StepTape {
    pub logits: Var,
    pub probs: Var,
    pub expert: Option<usize>,
    pub revisit: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EpisodeTape {
    pub steps: Vec<StepTape>,
    pub grounding: Option<Var>,
    /// Row of the first target-category object at the final node.
    pub target_object: Option<usize>,
}

/// Node with the highest recorded stop probability; ties go to the node
/// visited first.
pub fn select_forced_stop(stop_probs: &[(NodeId, f64)], visit_order: &[NodeId]) -> Option<NodeId> {
    let rank = |n: NodeId| visit_order.iter().position(|&v| v == n).unwrap_or(usize::MAX);
    let mut best: Option<(NodeId, f64)> = None;
    for &(node, p) in stop_probs {
        best = match best {
            None => Some((node, p)),
            Some((b, bp)) if p > bp || (p == bp && rank(node) < rank(b)) => Some((node, p)),
            keep => keep,
        };
    }
    best.map(|(n, _)| n)
}

fn penalize(probs: &mut [f64], revisit: &[f64], xi: f64) {
    for (p, &d) in probs.iter_mut().zip(revisit) {
        if d > 0.0 {
            *p /= xi;
        }
    }
    let z: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= z;
    }
}

fn sample_index(probs: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Runs one episode, building its computation on `g`.
pub fn rollout(
    g: &mut Graph,
    ctx: &RolloutContext<'_>,
    spec: &EpisodeSpec,
    opts: &RolloutOptions,
    rng: &mut Rng,
) -> Result<(EpisodeTrace, EpisodeTape)> {
    opts.validate()?;
    let env = ctx.env;
    let target = spec.target();
    if spec.start >= env.node_count() {
        return Err(Error::UnknownNode(spec.start));
    }
    if target >= env.node_count() {
        return Err(Error::UnknownNode(target));
    }
    let text = encode_text(g, ctx.store, &spec.instruction, ctx.nouns)?;
    let mut map = TopoMap::new(env, spec.start)?;
    map.update(env.observe(spec.start)?, env)?;

    let mut nodes = vec![spec.start];
    let mut steps = Vec::new();
    let mut tape_steps = Vec::new();
    let mut stop_probs = Vec::new();
    let mut stopped_at: Option<(NodeId, Panorama)> = None;
    let mut forced = false;

    for t in 0..opts.max_steps {
        let cur = map.current();
        let obs = env.observe(cur)?;
        let pano = build_panorama(g, ctx.store, obs, &text, ctx.relations, ctx.toggles)?;
        let routes = map.known_routes(env);
        let frontier = map.frontier();
        let inputs: Vec<Vec<f64>> = frontier.iter().map(|&f| map.node_input(f, routes.dist[f])).collect();
        let scores = score_candidates(
            g,
            ctx.store,
            &inputs,
            &map.node_input(cur, 0.0),
            pano.features,
            text.instruction,
        )?;

        let mut candidates: Vec<Option<NodeId>> = frontier.iter().map(|&f| Some(f)).collect();
        candidates.push(None);
        let stop_index = candidates.len() - 1;
        let revisit = revisit_distances(&map, env, &routes, &candidates)?;
        let logits = g.value(scores.logits).data().to_vec();
        let mut probs = g.value(scores.probs).data().to_vec();
        if opts.xi != 1.0 {
            penalize(&mut probs, &revisit, opts.xi);
        }
        let expert = match opts.mode {
            RolloutMode::Teacher | RolloutMode::Sample => Some(match demonstrator_action(&map, env, target)? {
                Action::Stop => stop_index,
                Action::Move(f) => frontier
                    .iter()
                    .position(|&x| x == f)
                    .ok_or_else(|| Error::contract("demonstrator picked a non-frontier node"))?,
            }),
            _ => None,
        };
        let chosen = match opts.mode {
            RolloutMode::Teacher => expert.unwrap_or(stop_index),
            RolloutMode::Sample => sample_index(&probs, rng),
            RolloutMode::Greedy => argmax(&probs).unwrap_or(stop_index),
            RolloutMode::Uniform => rng.random_range(0..candidates.len()),
        };
        let stop_prob = probs[stop_index];
        stop_probs.push((cur, stop_prob));
        steps.push(ActionDistribution {
            node: cur,
            candidates: candidates.clone(),
            logits,
            probs,
            stop_prob,
            revisit: revisit.clone(),
            expert,
            chosen,
            attention: pano.attention.map(|a| {
                let t = g.value(a);
                (0..t.rows()).map(|r| t.row(r).to_vec()).collect()
            }),
        });
        tape_steps.push(StepTape {
            logits: scores.logits,
            probs: scores.probs,
            expert,
            revisit,
        });

        match candidates[chosen] {
            None => {
                stopped_at = Some((cur, pano));
                break;
            }
            Some(_) if t + 1 == opts.max_steps => {
                forced = true;
                stopped_at = Some((cur, pano));
                break;
            }
            Some(next) => {
                let entered = map.travel(env, &routes, next)?;
                nodes.extend(entered);
                map.update(env.observe(next)?, env)?;
            }
        }
    }

    let (last, last_pano) = stopped_at.ok_or_else(|| Error::contract("rollout ended without a decision"))?;
    let final_node = if forced {
        let visit_order: Vec<NodeId> = map.visited().collect();
        let pick = select_forced_stop(&stop_probs, &visit_order).unwrap_or(last);
        if pick != map.current() {
            let routes = map.known_routes(env);
            nodes.extend(map.travel(env, &routes, pick)?);
        }
        pick
    } else {
        last
    };

    let final_obs = env.observe(final_node)?;
    let objects = if final_node == last {
        last_pano.objects
    } else {
        build_panorama(g, ctx.store, final_obs, &text, ctx.relations, ctx.toggles)?.objects
    };
    let grounding = match objects {
        Some(q) => Some(predict_object(g, ctx.store, q, text.instruction)?),
        None => None,
    };
    let predicted_row = grounding.and_then(|l| argmax(g.value(l).data()));
    let target_object = final_obs.categories.iter().position(|&c| c == spec.target_category());

    let trace = EpisodeTrace {
        episode: spec.id,
        env: spec.env,
        start: spec.start,
        target,
        target_category: spec.target_category(),
        nodes,
        edges: map.history().to_vec(),
        steps,
        forced_stop: forced,
        final_node,
        predicted_object: predicted_row.map(|r| final_obs.objects[r]),
        predicted_category: predicted_row.map(|r| final_obs.categories[r]),
        success: None,
        oracle_success: None,
        grounded: None,
    };
    let tape = EpisodeTape {
        steps: tape_steps,
        grounding,
        target_object,
    };
    Ok((trace, tape))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_environment, EnvConfig};
    use crate::instruction::{synthesize_instruction, Vocabulary};
    use crate::model::{init_params, ModelConfig};
    use crate::relations::{sor_build, SorConstants};
    use crate::rng;

    struct Fixture {
        env: EnvironmentGraph,
        store: ParamStore,
        relations: RelationMatrix,
        nouns: NounDb,
        vocab: Vocabulary,
    }

    fn fixture(seed: u64) -> Fixture {
        let env = generate_environment(seed, &EnvConfig::default()).unwrap();
        let vocab = Vocabulary::for_categories(env.vocab_size());
        let relations = sor_build(&[&env], SorConstants::default()).unwrap();
        Fixture {
            store: init_params(&ModelConfig::default()),
            nouns: vocab.noun_db(),
            env,
            relations,
            vocab,
        }
    }

    fn episode(f: &Fixture, start: NodeId) -> EpisodeSpec {
        let object = (0..f.env.objects().len())
            .rev()
            .find(|&o| f.env.objects()[o].node != start)
            .unwrap();
        let target = f.env.objects()[object].node;
        EpisodeSpec {
            id: 0,
            env: 0,
            start,
            instruction: synthesize_instruction(&f.env, &f.vocab, start, target, object, 3).unwrap(),
        }
    }

    fn run(f: &Fixture, spec: &EpisodeSpec, opts: RolloutOptions) -> EpisodeTrace {
        let ctx = RolloutContext {
            env: &f.env,
            store: &f.store,
            relations: &f.relations,
            nouns: &f.nouns,
            toggles: RelationToggles::default(),
        };
        let mut g = Graph::new();
        let mut r = rng::stream(5, &[rng::label::ROLLOUT]);
        rollout(&mut g, &ctx, spec, &opts, &mut r).unwrap().0
    }

    #[test]
    fn teacher_follows_the_shortest_path() {
        for seed in 0..5 {
            let f = fixture(seed);
            let spec = episode(&f, 0);
            let opts = RolloutOptions {
                mode: RolloutMode::Teacher,
                max_steps: 30,
                ..Default::default()
            };
            let trace = run(&f, &spec, opts);
            let (path, len) = f.env.shortest_path(0, spec.target()).unwrap();
            assert_eq!(trace.nodes, path);
            assert!((trace.trajectory_length() - len).abs() < 1e-9);
            assert!(!trace.forced_stop);
            assert_eq!(trace.steps.len(), path.len());
        }
    }

    #[test]
    fn traces_replay() {
        let f = fixture(2);
        let spec = episode(&f, 1);
        for mode in [RolloutMode::Sample, RolloutMode::Greedy, RolloutMode::Uniform] {
            let trace = run(
                &f,
                &spec,
                RolloutOptions {
                    mode,
                    ..Default::default()
                },
            );
            let (nodes, len) = trace.replay(&f.env).unwrap();
            assert_eq!(nodes, trace.nodes);
            assert_eq!(len, trace.trajectory_length());
            assert_eq!(*nodes.last().unwrap(), trace.final_node);
            for s in &trace.steps {
                assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn unit_xi_is_a_no_op() {
        let f = fixture(4);
        let spec = episode(&f, 2);
        let plain = run(&f, &spec, RolloutOptions::default());
        let unit = run(
            &f,
            &spec,
            RolloutOptions {
                xi: 1.0,
                ..Default::default()
            },
        );
        assert_eq!(plain, unit);
        let penalized = run(
            &f,
            &spec,
            RolloutOptions {
                xi: 4.0,
                ..Default::default()
            },
        );
        for s in &penalized.steps {
            assert!((s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn budget_of_one_forces_a_stop() {
        let f = fixture(1);
        let spec = episode(&f, 0);
        let trace = run(
            &f,
            &spec,
            RolloutOptions {
                mode: RolloutMode::Teacher,
                max_steps: 1,
                ..Default::default()
            },
        );
        assert!(trace.forced_stop);
        assert_eq!(trace.final_node, 0);
        assert!(trace.edges.is_empty());
    }

    #[test]
    fn forced_stop_ties_go_to_first_visit() {
        let order = [4, 2, 7];
        assert_eq!(select_forced_stop(&[(2, 0.3), (4, 0.3), (7, 0.1)], &order), Some(4));
        assert_eq!(select_forced_stop(&[(4, 0.3), (2, 0.3), (7, 0.1)], &order), Some(4));
        assert_eq!(select_forced_stop(&[(7, 0.1), (2, 0.5)], &order), Some(2));
        assert_eq!(select_forced_stop(&[], &order), None);
    }

    #[test]
    fn penalty_renormalizes() {
        let mut p = vec![0.5, 0.25, 0.25];
        penalize(&mut p, &[2.0, 0.0, 0.0], 2.0);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let f = fixture(3);
        let spec = episode(&f, 0);
        let trace = run(&f, &spec, RolloutOptions::default());
        let text = crate::instruction::write_jsonl(std::slice::from_ref(&trace)).unwrap();
        let back: Vec<EpisodeTrace> = crate::instruction::read_jsonl(&text).unwrap();
        assert_eq!(back, vec![trace]);
    }
}
