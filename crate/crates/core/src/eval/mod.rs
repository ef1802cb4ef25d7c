//! Navigation metrics: distance to goal (DTG), success rate (SR) and success
//! weighted by path length (SPL), plus aggregation into a [`Report`].

pub mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Point;
use crate::navloop::trace::TraceSummary;
use crate::navloop::EpisodeResult;
pub use report::{bundled_baselines, emit_report, Baseline, ReportFormat};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no episode results to evaluate")]
    EmptyResults,
    #[error("episode {episode_id} has non-positive shortest path length {value}")]
    InvalidEpisode { episode_id: String, value: f64 },
    #[error("unknown report format {0:?} (expected json, csv or table)")]
    UnknownFormat(String),
    #[error("baseline data: {0}")]
    Baselines(String),
}

/// Euclidean distance from the final position to the goal.
pub fn dtg(final_pos: Point, goal: Point) -> f64 {
    final_pos.distance(&goal)
}

/// The per-episode quantities the metrics need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode_id: String,
    pub dtg: f64,
    pub success: bool,
    pub shortest_path_length: f64,
    pub path_length: f64,
}

impl From<&EpisodeResult> for EpisodeOutcome {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            episode_id: r.episode.episode_id.clone(),
            dtg: dtg(r.final_pose.position(), r.episode.goal),
            success: r.success,
            shortest_path_length: r.episode.shortest_path_length,
            path_length: r.path_length,
        }
    }
}

impl From<&TraceSummary> for EpisodeOutcome {
    fn from(s: &TraceSummary) -> Self {
        Self {
            episode_id: s.episode_id.clone(),
            dtg: dtg(s.final_pose.position(), s.goal),
            success: s.success,
            shortest_path_length: s.shortest_path_length,
            path_length: s.path_length,
        }
    }
}

impl EpisodeOutcome {
    /// `S * l / max(p, l)`.
    pub fn spl_term(&self) -> f64 {
        if !self.success {
            return 0.0;
        }
        let l = self.shortest_path_length;
        l / self.path_length.max(l)
    }
}

fn check_nonempty(outcomes: &[EpisodeOutcome]) -> Result<(), EvalError> {
    if outcomes.is_empty() {
        Err(EvalError::EmptyResults)
    } else {
        Ok(())
    }
}

/// SPL as a fraction in `[0, 1]`.
pub fn spl(outcomes: &[EpisodeOutcome]) -> Result<f64, EvalError> {
    check_nonempty(outcomes)?;
    for o in outcomes {
        if !(o.shortest_path_length > 0.0) {
            return Err(EvalError::InvalidEpisode {
                episode_id: o.episode_id.clone(),
                value: o.shortest_path_length,
            });
        }
    }
    let total: f64 = outcomes.iter().map(EpisodeOutcome::spl_term).sum();
    Ok(total / outcomes.len() as f64)
}

/// Percentage of successful episodes.
pub fn success_rate(outcomes: &[EpisodeOutcome]) -> Result<f64, EvalError> {
    check_nonempty(outcomes)?;
    let hits = outcomes.iter().filter(|o| o.success).count();
    Ok(100.0 * hits as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode_id: String,
    pub dtg: f64,
    pub success: bool,
    pub shortest_path_length: f64,
    pub path_length: f64,
    pub spl_term: f64,
}

/// Aggregate metrics. `sr` and `spl` are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub n_episodes: usize,
    pub dtg_mean: f64,
    pub sr: f64,
    pub spl: f64,
    pub per_episode: Vec<EpisodeMetrics>,
}

/// Builds the report with per-episode rows sorted by episode id.
pub fn aggregate(outcomes: &[EpisodeOutcome]) -> Result<Report, EvalError> {
    check_nonempty(outcomes)?;
    let mut sorted: Vec<&EpisodeOutcome> = outcomes.iter().collect();
    sorted.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    let sorted_owned: Vec<EpisodeOutcome> = sorted.iter().map(|o| (*o).clone()).collect();
    let spl_fraction = spl(&sorted_owned)?;
    let sr = success_rate(&sorted_owned)?;
    let dtg_mean = sorted.iter().map(|o| o.dtg).sum::<f64>() / sorted.len() as f64;
    Ok(Report {
        n_episodes: sorted.len(),
        dtg_mean,
        sr,
        spl: 100.0 * spl_fraction,
        per_episode: sorted
            .iter()
            .map(|o| EpisodeMetrics {
                episode_id: o.episode_id.clone(),
                dtg: o.dtg,
                success: o.success,
                shortest_path_length: o.shortest_path_length,
                path_length: o.path_length,
                spl_term: o.spl_term(),
            })
            .collect(),
    })
}
