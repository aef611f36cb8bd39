//! Datasets, the fine-tuning loop, evaluation and the ablation runner.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{
    rollout, EpisodeSpec, EpisodeTape, EpisodeTrace, RelationToggles, RolloutContext, RolloutMode, RolloutOptions,
};
use crate::autodiff::Graph;
use crate::env::{generate_environment, EnvConfig, EnvironmentGraph, NodeId};
use crate::error::{Error, Result};
use crate::instruction::{synthesize_instruction, NounDb, Vocabulary};
use crate::losses::{og_loss, sap_loss, tbp_loss, total_loss, LossBreakdown, LossWeights};
use crate::metrics::{annotate, compute_metrics, MetricsReport, SUCCESS_RADIUS};
use crate::model::{init_params, ModelConfig};
use crate::params::{sgd_step, ParamStore, SgdConfig};
use crate::relations::{sor_build, RelationMatrix, SorConstants};
use crate::rng::{self, label};

pub const CHECKPOINT_FORMAT: &str = "relnav-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_envs: usize,
    pub val_unseen_envs: usize,
    pub train_episodes_per_env: usize,
    /// Fresh episodes drawn in the training environments.
    pub val_seen_episodes_per_env: usize,
    pub val_unseen_episodes_per_env: usize,
    pub min_hops: usize,
    pub max_hops: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_envs: 20,
            val_unseen_envs: 5,
            train_episodes_per_env: 100,
            val_seen_episodes_per_env: 3,
            val_unseen_episodes_per_env: 100,
            min_hops: 2,
            max_hops: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub tor: bool,
    pub sor: bool,
    pub tbp: bool,
    /// Row-softmax on the temporal relation matrix.
    pub tor_softmax: bool,
    /// Feed logits instead of probabilities to the revisit penalty.
    pub tbp_on_logits: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            tor: true,
            sor: true,
            tbp: true,
            tor_softmax: true,
            tbp_on_logits: false,
        }
    }
}

impl Toggles {
    pub fn relations(&self) -> RelationToggles {
        RelationToggles {
            tor: self.tor,
            sor: self.sor,
            tor_softmax: self.tor_softmax,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Initialization, episode order and sampling.
    pub seed: u64,
    /// Environments and episodes.
    pub data_seed: u64,
    pub splits: SplitConfig,
    pub env: EnvConfig,
    pub model: ModelConfig,
    pub sor: SorConstants,
    pub loss: LossWeights,
    pub toggles: Toggles,
    pub optimizer: SgdConfig,
    pub iterations: usize,
    pub batch_size: usize,
    /// Iterations of pure teacher forcing before mixing starts.
    pub warmup: usize,
    /// Share of episodes rolled out by sampling after warmup.
    pub sample_ratio: f64,
    pub max_steps: usize,
    pub xi: f64,
    /// Evaluate on val-unseen every this many iterations; 0 disables.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data_seed: 0,
            splits: SplitConfig::default(),
            env: EnvConfig::default(),
            model: ModelConfig::default(),
            sor: SorConstants::default(),
            loss: LossWeights::default(),
            toggles: Toggles::default(),
            optimizer: SgdConfig {
                lr: 0.03,
                momentum: 0.9,
                clip_norm: Some(5.0),
            },
            iterations: 4000,
            batch_size: 16,
            warmup: 1500,
            sample_ratio: 0.5,
            max_steps: 15,
            xi: 1.0,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.splits;
        if s.train_envs == 0 || s.val_unseen_envs == 0 {
            return Err(Error::Config(
                "need at least one training and one val-unseen environment".into(),
            ));
        }
        if s.min_hops == 0 || s.min_hops > s.max_hops {
            return Err(Error::Config(format!(
                "hop range {}..={} is empty or starts at 0",
                s.min_hops, s.max_hops
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.sample_ratio) {
            return Err(Error::Config(format!(
                "sample_ratio {} outside [0, 1]",
                self.sample_ratio
            )));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} must be positive",
                self.optimizer.lr
            )));
        }
        let tokens = self.env.vocab_size + Vocabulary::for_categories(0).len();
        if self.model.tokens < tokens {
            return Err(Error::Config(format!(
                "model.tokens = {} is smaller than the vocabulary ({tokens})",
                self.model.tokens
            )));
        }
        if self.model.view_dim != self.env.features.view_dim()
            || self.model.object_dim != self.env.features.object_dim()
        {
            return Err(Error::Config(
                "model feature dimensions disagree with the environment features".into(),
            ));
        }
        if self.model.alpha_init.iter().any(|&a| a <= 0.0) {
            return Err(Error::Config("alpha_init entries must be positive".into()));
        }
        self.rollout(RolloutMode::Greedy).validate()
    }

    pub fn rollout(&self, mode: RolloutMode) -> RolloutOptions {
        RolloutOptions {
            mode,
            max_steps: self.max_steps,
            xi: self.xi,
        }
    }

    /// Loss weights with the TBP term zeroed when that toggle is off.
    pub fn effective_weights(&self) -> LossWeights {
        LossWeights {
            tbp: if self.toggles.tbp { self.loss.tbp } else { 0.0 },
            ..self.loss
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            init_seed: rng::derive(self.seed, &[label::INIT]),
            ..self.model.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    ValSeen,
    ValUnseen,
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val_seen" | "val-seen" => Ok(Self::ValSeen),
            "val_unseen" | "val-unseen" => Ok(Self::ValUnseen),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub envs: Vec<EnvironmentGraph>,
    pub episodes: Vec<EpisodeSpec>,
}

impl Split {
    pub fn env(&self, i: usize) -> Option<&EnvironmentGraph> {
        self.envs.get(i)
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub nouns: NounDb,
    pub relations: RelationMatrix,
    pub train: Split,
    pub val_seen: Split,
    pub val_unseen: Split,
}

impl Dataset {
    pub fn split(&self, name: SplitName) -> &Split {
        match name {
            SplitName::Train => &self.train,
            SplitName::ValSeen => &self.val_seen,
            SplitName::ValUnseen => &self.val_unseen,
        }
    }
}

/// Draws a target object and a start node between `min_hops` and `max_hops`
/// edges away from it.
pub fn sample_episode(
    env: &EnvironmentGraph,
    vocab: &Vocabulary,
    cfg: &SplitConfig,
    id: usize,
    env_index: usize,
    seed: u64,
) -> Result<EpisodeSpec> {
    let mut rng = rng::stream(seed, &[label::EPISODE]);
    let objects = env.objects();
    if objects.is_empty() {
        return Err(Error::Generation("environment has no objects".into()));
    }
    for _ in 0..100 {
        let object = rng.random_range(0..objects.len());
        let target = objects[object].node;
        let starts: Vec<NodeId> = (0..env.node_count())
            .filter(|&v| {
                let (path, length) = match env.shortest_path(v, target) {
                    Ok(p) => p,
                    Err(_) => return false,
                };
                let hops = path.len() - 1;
                hops >= cfg.min_hops && hops <= cfg.max_hops && length >= SUCCESS_RADIUS
            })
            .collect();
        if starts.is_empty() {
            continue;
        }
        let start = starts[rng.random_range(0..starts.len())];
        let instruction = synthesize_instruction(
            env,
            vocab,
            start,
            target,
            object,
            rng::derive(seed, &[label::INSTRUCTION]),
        )?;
        return Ok(EpisodeSpec {
            id,
            env: env_index,
            start,
            instruction,
        });
    }
    Err(Error::Generation(format!(
        "no start node {}..={} hops from any target",
        cfg.min_hops, cfg.max_hops
    )))
}

fn episodes_for(
    envs: &[EnvironmentGraph],
    vocab: &Vocabulary,
    cfg: &SplitConfig,
    per_env: usize,
    seed: u64,
    split: u64,
) -> Result<Vec<EpisodeSpec>> {
    let mut out = Vec::with_capacity(envs.len() * per_env);
    for (e, env) in envs.iter().enumerate() {
        for k in 0..per_env {
            let s = rng::derive(seed, &[label::SPLIT, split, e as u64, k as u64]);
            out.push(sample_episode(env, vocab, cfg, out.len(), e, s)?);
        }
    }
    Ok(out)
}

/// Generates every environment and episode from `data_seed`, and scans the
/// training environments for the spatial relation matrix.
pub fn build_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    cfg.validate()?;
    let s = &cfg.splits;
    let gen = |split: u64, count: usize| -> Result<Vec<EnvironmentGraph>> {
        (0..count)
            .map(|i| generate_environment(rng::derive(cfg.data_seed, &[label::ENV, split, i as u64]), &cfg.env))
            .collect()
    };
    let train_envs = gen(0, s.train_envs)?;
    let unseen_envs = gen(1, s.val_unseen_envs)?;
    let vocab = Vocabulary::for_categories(cfg.env.vocab_size);
    let refs: Vec<&EnvironmentGraph> = train_envs.iter().collect();
    let relations = sor_build(&refs, cfg.sor)?;
    let train_eps = episodes_for(&train_envs, &vocab, s, s.train_episodes_per_env, cfg.data_seed, 0)?;
    let seen_eps = episodes_for(&train_envs, &vocab, s, s.val_seen_episodes_per_env, cfg.data_seed, 1)?;
    let unseen_eps = episodes_for(&unseen_envs, &vocab, s, s.val_unseen_episodes_per_env, cfg.data_seed, 2)?;
    Ok(Dataset {
        nouns: vocab.noun_db(),
        vocab,
        relations,
        val_seen: Split {
            envs: train_envs.clone(),
            episodes: seen_eps,
        },
        train: Split {
            envs: train_envs,
            episodes: train_eps,
        },
        val_unseen: Split {
            envs: unseen_envs,
            episodes: unseen_eps,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    pub sap: f64,
    pub og: f64,
    pub tbp: f64,
    pub total: f64,
}

impl LossRow {
    pub const CSV_HEADER: &'static str = "step,sap,og,tbp,total";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.iteration, self.sap, self.og, self.tbp, self.total
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub sr: f64,
    pub spl: f64,
    pub tl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub losses: Vec<LossRow>,
    pub snapshots: Vec<Snapshot>,
    /// Steps whose expert probability was clamped inside the SAP term.
    pub clamped_steps: usize,
    /// Episodes ending away from any target-category object.
    pub absent_targets: usize,
}

struct EpisodeGrad {
    grads: Vec<(String, crate::tensor::Tensor2)>,
    losses: LossBreakdown,
    clamped: usize,
    absent: bool,
}

fn episode_objective(
    g: &mut Graph,
    tape: &EpisodeTape,
    cfg: &TrainConfig,
) -> Result<(crate::autodiff::Var, LossBreakdown, usize, bool)> {
    let supervised: Vec<_> = tape
        .steps
        .iter()
        .filter_map(|s| s.expert.map(|e| (s.probs, e)))
        .collect();
    let sap = sap_loss(g, &supervised)?;
    let og = og_loss(g, tape.grounding, tape.target_object)?;
    let mut tbp_terms = Vec::with_capacity(tape.steps.len());
    for s in &tape.steps {
        let scores = if cfg.toggles.tbp_on_logits { s.logits } else { s.probs };
        tbp_terms.push(tbp_loss(g, scores, &s.revisit)?);
    }
    let tbp = g.add_scalars(&tbp_terms)?;
    let (total, parts) = total_loss(g, sap.value, og.value, tbp, &cfg.effective_weights())?;
    Ok((total, parts, sap.clamped, og.absent))
}

fn train_episode(
    store: &ParamStore,
    data: &Dataset,
    cfg: &TrainConfig,
    spec: &EpisodeSpec,
    mode: RolloutMode,
    stream: &[u64],
) -> Result<EpisodeGrad> {
    let env = data.train.env(spec.env).ok_or(Error::Index {
        what: "training environment",
        index: spec.env,
        limit: data.train.envs.len(),
    })?;
    let ctx = RolloutContext {
        env,
        store,
        relations: &data.relations,
        nouns: &data.nouns,
        toggles: cfg.toggles.relations(),
    };
    let mut g = Graph::new();
    let mut r = rng::stream(cfg.seed, stream);
    let (_, tape) = rollout(&mut g, &ctx, spec, &cfg.rollout(mode), &mut r)?;
    let (total, losses, clamped, absent) = episode_objective(&mut g, &tape, cfg)?;
    let grads = g.backward(total)?;
    Ok(EpisodeGrad {
        grads: g.param_gradients(&grads),
        losses,
        clamped,
        absent,
    })
}

/// Mixed teacher/sample fine-tuning with SGD on the weighted objective.
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut store = init_params(&cfg.model_config());
    let mut order_rng = rng::stream(cfg.seed, &[label::TRAIN]);
    let n = data.train.episodes.len();
    if n == 0 {
        return Err(Error::Empty("training episodes"));
    }
    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut snapshots = Vec::new();
    let (mut clamped_steps, mut absent_targets) = (0, 0);

    for it in 0..cfg.iterations {
        let batch: Vec<(usize, RolloutMode)> = (0..cfg.batch_size)
            .map(|_| {
                let ep = order_rng.random_range(0..n);
                let mode = if it >= cfg.warmup && order_rng.random::<f64>() < cfg.sample_ratio {
                    RolloutMode::Sample
                } else {
                    RolloutMode::Teacher
                };
                (ep, mode)
            })
            .collect();
        let results: Vec<Result<EpisodeGrad>> = batch
            .par_iter()
            .enumerate()
            .map(|(b, &(ep, mode))| {
                train_episode(
                    &store,
                    data,
                    cfg,
                    &data.train.episodes[ep],
                    mode,
                    &[label::ROLLOUT, it as u64, b as u64],
                )
            })
            .collect();

        let mut row = LossRow {
            iteration: it,
            sap: 0.0,
            og: 0.0,
            tbp: 0.0,
            total: 0.0,
        };
        for r in results {
            let r = r.map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("iteration {it}: {msg}")),
                other => other,
            })?;
            for (name, grad) in &r.grads {
                store.accumulate(name, grad)?;
            }
            row.sap += r.losses.sap;
            row.og += r.losses.og;
            row.tbp += r.losses.tbp;
            row.total += r.losses.total;
            clamped_steps += r.clamped;
            absent_targets += usize::from(r.absent);
        }
        let inv = 1.0 / cfg.batch_size as f64;
        store.scale_grads(inv);
        for v in [&mut row.sap, &mut row.og, &mut row.tbp, &mut row.total] {
            *v *= inv;
        }
        sgd_step(&mut store, &cfg.optimizer).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("iteration {it}: {msg}")),
            other => other,
        })?;
        losses.push(row);

        if cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0 {
            let (report, _) = evaluate(&store, cfg, data, SplitName::ValUnseen, cfg.xi, RolloutMode::Greedy)?;
            snapshots.push(Snapshot {
                iteration: it + 1,
                sr: report.sr,
                spl: report.spl,
                tl: report.tl,
            });
        }
    }
    Ok(TrainOutcome {
        params: store,
        losses,
        snapshots,
        clamped_steps,
        absent_targets,
    })
}

/// Rolls out every episode of a split against frozen parameters.
pub fn run_split(
    store: &ParamStore,
    cfg: &TrainConfig,
    data: &Dataset,
    split: SplitName,
    xi: f64,
    mode: RolloutMode,
) -> Result<Vec<EpisodeTrace>> {
    let s = data.split(split);
    let opts = RolloutOptions {
        xi,
        ..cfg.rollout(mode)
    };
    s.episodes
        .par_iter()
        .map(|spec| {
            let env = s.env(spec.env).ok_or(Error::Index {
                what: "environment",
                index: spec.env,
                limit: s.envs.len(),
            })?;
            let ctx = RolloutContext {
                env,
                store,
                relations: &data.relations,
                nouns: &data.nouns,
                toggles: cfg.toggles.relations(),
            };
            let mut g = Graph::new();
            let mut r = rng::stream(cfg.seed, &[label::ROLLOUT, u64::MAX, spec.id as u64]);
            Ok(rollout(&mut g, &ctx, spec, &opts, &mut r)?.0)
        })
        .collect()
}

/// Greedy (or other mode) evaluation with metrics and annotated traces.
pub fn evaluate(
    store: &ParamStore,
    cfg: &TrainConfig,
    data: &Dataset,
    split: SplitName,
    xi: f64,
    mode: RolloutMode,
) -> Result<(MetricsReport, Vec<EpisodeTrace>)> {
    let mut traces = run_split(store, cfg, data, split, xi, mode)?;
    let s = data.split(split);
    let report = compute_metrics(&traces, |t| s.env(t.env), SUCCESS_RADIUS)?;
    annotate(&mut traces, &report);
    Ok((report, traces))
}

/// Uniform-random policy over the same candidate set.
pub fn random_baseline(cfg: &TrainConfig, data: &Dataset, split: SplitName) -> Result<MetricsReport> {
    let store = init_params(&cfg.model_config());
    Ok(evaluate(&store, cfg, data, split, 1.0, RolloutMode::Uniform)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, params: ParamStore) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let format = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("not a checkpoint file (format {format:?})")));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0);
        if version != u64::from(CHECKPOINT_VERSION) {
            return Err(Error::Format {
                kind: "checkpoint",
                found: u32::try_from(version).unwrap_or(u32::MAX),
                expected: CHECKPOINT_VERSION,
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub tor: bool,
    pub sor: bool,
    pub tbp: bool,
    pub seeds: Vec<u64>,
    pub reports: Vec<MetricsReport>,
}

impl AblationRow {
    pub fn median_of(&self, f: impl Fn(&MetricsReport) -> f64) -> f64 {
        median(&self.reports.iter().map(f).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, tor: bool, sor: bool, tbp: bool) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.tor == tor && r.sor == sor && r.tbp == tbp)
    }

    /// One line per (row, seed) plus a median line per row.
    pub fn to_csv(&self) -> String {
        let mut out = format!("row,tor,sor,tbp,seed,{}\n", MetricsReport::CSV_HEADER);
        for r in &self.rows {
            for (seed, rep) in r.seeds.iter().zip(&r.reports) {
                out.push_str(&format!(
                    "{},{},{},{},{seed},{}\n",
                    r.name,
                    r.tor,
                    r.sor,
                    r.tbp,
                    rep.csv_row()
                ));
            }
            let med = |f: fn(&MetricsReport) -> f64| r.median_of(f);
            out.push_str(&format!(
                "{},{},{},{},median,{},{},{},{},{},{},{},{},{},{},\n",
                r.name,
                r.tor,
                r.sor,
                r.tbp,
                r.reports.first().map_or(0, |x| x.episodes),
                med(|x| x.tl),
                med(|x| x.ne),
                med(|x| x.sr),
                med(|x| x.osr),
                med(|x| x.spl),
                med(|x| x.rgs),
                med(|x| x.rgspl),
                med(|x| x.reuse),
                med(|x| x.revisit),
            ));
        }
        out
    }
}

/// The relation grid without the revisit penalty, then the penalty with both
/// relation branches on.
pub fn ablation_grid() -> Vec<(&'static str, bool, bool, bool)> {
    vec![
        ("baseline", false, false, false),
        ("tor", true, false, false),
        ("sor", false, true, false),
        ("tor+sor", true, true, false),
        ("tor+sor+tbp", true, true, true),
    ]
}

pub fn ablate(base: &TrainConfig, data: &Dataset, seeds: &[u64]) -> Result<AblationTable> {
    let mut rows = Vec::new();
    for (name, tor, sor, tbp) in ablation_grid() {
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                toggles: Toggles {
                    tor,
                    sor,
                    tbp,
                    ..base.toggles
                },
                ..base.clone()
            };
            let out = train(&cfg, data)?;
            reports.push(
                evaluate(
                    &out.params,
                    &cfg,
                    data,
                    SplitName::ValUnseen,
                    cfg.xi,
                    RolloutMode::Greedy,
                )?
                .0,
            );
        }
        rows.push(AblationRow {
            name: name.to_string(),
            tor,
            sor,
            tbp,
            seeds: seeds.to_vec(),
            reports,
        });
    }
    Ok(AblationTable { rows })
}
