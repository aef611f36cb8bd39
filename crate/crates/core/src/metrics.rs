//! Navigation and grounding metrics over finished episodes.

use serde::{Deserialize, Serialize};

use crate::agent::EpisodeTrace;
use crate::env::EnvironmentGraph;
use crate::error::{Error, Result};

pub const SUCCESS_RADIUS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub env: usize,
    pub trajectory_length: f64,
    pub shortest_length: f64,
    pub nav_error: f64,
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub grounded: bool,
    pub rgspl: f64,
    pub reused_length: f64,
    pub revisit_length: f64,
    pub forced_stop: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub episodes: usize,
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub rgs: f64,
    pub rgspl: f64,
    /// Mean length per episode of edge traversals repeating an earlier one.
    pub reuse: f64,
    /// Mean per-episode sum of the chosen candidates' revisit distances.
    pub revisit: f64,
    /// Mean TL over successful episodes, if any succeeded.
    pub tl_success: Option<f64>,
    pub rows: Vec<EpisodeMetrics>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "episodes,tl,ne,sr,osr,spl,rgs,rgspl,reuse,revisit,tl_success";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.episodes,
            self.tl,
            self.ne,
            self.sr,
            self.osr,
            self.spl,
            self.rgs,
            self.rgspl,
            self.reuse,
            self.revisit,
            self.tl_success.map(|v| v.to_string()).unwrap_or_default()
        )
    }

    /// SPL ≤ SR ≤ OSR, RGSPL ≤ RGS ≤ SR, fractions in [0, 1], lengths ≥ 0.
    pub fn invariants_hold(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let eps = 1e-12;
        [self.sr, self.osr, self.spl, self.rgs, self.rgspl]
            .iter()
            .all(|&x| unit(x))
            && self.spl <= self.sr + eps
            && self.sr <= self.osr + eps
            && self.rgspl <= self.rgs + eps
            && self.rgs <= self.sr + eps
            && self.tl >= 0.0
            && self.ne >= 0.0
    }
}

fn path_weight(shortest: f64, travelled: f64) -> f64 {
    let denom = shortest.max(travelled);
    if denom > 0.0 {
        shortest / denom
    } else {
        1.0
    }
}

/// Scores one episode. `env` must be the episode's environment.
pub fn episode_metrics(trace: &EpisodeTrace, env: &EnvironmentGraph, radius: f64) -> Result<EpisodeMetrics> {
    let (_, tl) = trace.replay(env)?;
    let geo = env.geodesic_table();
    let n = env.node_count();
    for node in [trace.start, trace.target, trace.final_node] {
        if node >= n {
            return Err(Error::UnknownNode(node));
        }
    }
    let shortest = geo[trace.start][trace.target];
    let nav_error = geo[trace.final_node][trace.target];
    let success = nav_error < radius;
    let oracle_success = trace.nodes.iter().any(|&v| geo[v][trace.target] < radius);
    let weight = path_weight(shortest, tl);
    let grounded = success && trace.predicted_category == Some(trace.target_category);
    Ok(EpisodeMetrics {
        episode: trace.episode,
        env: trace.env,
        trajectory_length: tl,
        shortest_length: shortest,
        nav_error,
        success,
        oracle_success,
        spl: if success { weight } else { 0.0 },
        grounded,
        rgspl: if grounded { weight } else { 0.0 },
        reused_length: trace.reused_length(),
        revisit_length: trace.revisit_length(),
        forced_stop: trace.forced_stop,
    })
}

/// Aggregates episodes; `env_of` maps a trace to its environment.
pub fn compute_metrics<'a, F>(traces: &[EpisodeTrace], env_of: F, radius: f64) -> Result<MetricsReport>
where
    F: Fn(&EpisodeTrace) -> Option<&'a EnvironmentGraph>,
{
    if traces.is_empty() {
        return Err(Error::Empty("episode traces"));
    }
    let rows = traces
        .iter()
        .map(|t| {
            let env = env_of(t).ok_or(Error::Index {
                what: "environment",
                index: t.env,
                limit: 0,
            })?;
            episode_metrics(t, env, radius)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = rows.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let frac = |f: &dyn Fn(&EpisodeMetrics) -> bool| rows.iter().filter(|r| f(r)).count() as f64 / n;
    let successes: Vec<f64> = rows.iter().filter(|r| r.success).map(|r| r.trajectory_length).collect();
    Ok(MetricsReport {
        episodes: rows.len(),
        tl: mean(&|r| r.trajectory_length),
        ne: mean(&|r| r.nav_error),
        sr: frac(&|r| r.success),
        osr: frac(&|r| r.oracle_success),
        spl: mean(&|r| r.spl),
        rgs: frac(&|r| r.grounded),
        rgspl: mean(&|r| r.rgspl),
        reuse: mean(&|r| r.reused_length),
        revisit: mean(&|r| r.revisit_length),
        tl_success: (!successes.is_empty()).then(|| successes.iter().sum::<f64>() / successes.len() as f64),
        rows,
    })
}

/// Fills the success flags of each trace from its metrics row.
pub fn annotate(traces: &mut [EpisodeTrace], report: &MetricsReport) {
    for (t, r) in traces.iter_mut().zip(&report.rows) {
        t.success = Some(r.success);
        t.oracle_success = Some(r.oracle_success);
        t.grounded = Some(r.grounded);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_weight_cases() {
        assert_eq!(path_weight(10.0, 20.0), 0.5);
        assert_eq!(path_weight(10.0, 10.0), 1.0);
        assert_eq!(path_weight(0.0, 0.0), 1.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        let r = compute_metrics(&[], |_| None, SUCCESS_RADIUS);
        assert!(matches!(r, Err(Error::Empty(_))));
    }
}
