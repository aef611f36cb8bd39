//! Topological map, policy head and episode rollout.

mod policy;
mod rollout;
mod topomap;

pub use policy::{
    argmax, assemble_panoramic, build_panorama, encode_text, predict_object, score_candidates, ActionScores, Panorama,
    RelationToggles, TextContext,
};
pub use rollout::{
    rollout, select_forced_stop, ActionDistribution, EpisodeSpec, EpisodeTape, EpisodeTrace, RolloutContext,
    RolloutMode, RolloutOptions, StepTape,
};
pub use topomap::{KnownRoutes, TopoMap, TraversedEdge};
