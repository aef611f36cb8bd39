//! Fixtures shared by the benchmarks.

use relnav::agent::{EpisodeSpec, RolloutContext};
use relnav::env::{generate_environment, EnvConfig, EnvironmentGraph};
use relnav::instruction::{NounDb, Vocabulary};
use relnav::model::{init_params, ModelConfig};
use relnav::params::ParamStore;
use relnav::relations::{sor_build, RelationMatrix, SorConstants};
use relnav::train::{sample_episode, SplitConfig};

pub struct Fixture {
    pub envs: Vec<EnvironmentGraph>,
    pub store: ParamStore,
    pub relations: RelationMatrix,
    pub nouns: NounDb,
    pub episodes: Vec<EpisodeSpec>,
}

impl Fixture {
    pub fn new(envs: usize) -> Self {
        let cfg = EnvConfig::default();
        let envs: Vec<EnvironmentGraph> = (0..envs as u64)
            .map(|s| generate_environment(s, &cfg).expect("environment"))
            .collect();
        let vocab = Vocabulary::for_categories(cfg.vocab_size);
        let refs: Vec<&EnvironmentGraph> = envs.iter().collect();
        let relations = sor_build(&refs, SorConstants::default()).expect("relations");
        let episodes = (0..8)
            .map(|i| sample_episode(&envs[0], &vocab, &SplitConfig::default(), i, 0, i as u64).expect("episode"))
            .collect();
        Self {
            store: init_params(&ModelConfig::default()),
            nouns: vocab.noun_db(),
            envs,
            relations,
            episodes,
        }
    }

    pub fn context(&self) -> RolloutContext<'_> {
        RolloutContext {
            env: &self.envs[0],
            store: &self.store,
            relations: &self.relations,
            nouns: &self.nouns,
            toggles: Default::default(),
        }
    }
}
