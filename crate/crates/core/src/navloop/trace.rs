//! JSON Lines trace files.
//!
//! A trace holds an `episode` header line, one `step` line per decision and
//! a closing `summary` line (or `aborted` when the episode failed).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{EpisodeFailure, EpisodeResult, StepRecord, StopReason};
use crate::model::{Episode, Point, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub episode_id: String,
    pub final_pose: Pose,
    pub path_length: f64,
    pub success: bool,
    pub stop_reason: StopReason,
    pub steps_taken: usize,
    pub distance_to_goal: f64,
    pub goal: Point,
    pub shortest_path_length: f64,
}

impl TraceSummary {
    pub fn from_result(result: &EpisodeResult) -> Self {
        Self {
            episode_id: result.episode.episode_id.clone(),
            final_pose: result.final_pose,
            path_length: result.path_length,
            success: result.success,
            stop_reason: result.stop_reason,
            steps_taken: result.steps_taken,
            distance_to_goal: result.final_distance(),
            goal: result.episode.goal,
            shortest_path_length: result.episode.shortest_path_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceLine {
    Episode { episode: Episode },
    Step(StepRecord),
    Summary(TraceSummary),
    Aborted { step: usize, error: String },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{path}:{line}: malformed trace: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn push_line(out: &mut String, line: &TraceLine) {
    out.push_str(&serde_json::to_string(line).expect("trace lines serialize"));
    out.push('\n');
}

/// Renders a completed episode as trace text.
pub fn render_trace(result: &EpisodeResult) -> String {
    let mut out = String::new();
    push_line(
        &mut out,
        &TraceLine::Episode {
            episode: result.episode.clone(),
        },
    );
    for record in &result.trace {
        push_line(&mut out, &TraceLine::Step(record.clone()));
    }
    push_line(&mut out, &TraceLine::Summary(TraceSummary::from_result(result)));
    out
}

/// Renders an aborted episode; such traces have no summary line.
pub fn render_failed_trace(episode: &Episode, failure: &EpisodeFailure) -> String {
    let mut out = String::new();
    push_line(
        &mut out,
        &TraceLine::Episode {
            episode: episode.clone(),
        },
    );
    for record in &failure.trace {
        push_line(&mut out, &TraceLine::Step(record.clone()));
    }
    push_line(
        &mut out,
        &TraceLine::Aborted {
            step: failure.step,
            error: failure.error.to_string(),
        },
    );
    out
}

/// A trace read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrace {
    pub episode: Episode,
    pub steps: Vec<StepRecord>,
    pub summary: TraceSummary,
}

/// Parses trace text. Requires the header first, the summary last, and
/// contiguous step numbers from 0.
pub fn parse_trace(text: &str, path: &Path) -> Result<ParsedTrace, TraceError> {
    let malformed = |line: usize, message: String| TraceError::Malformed {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut episode = None;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut summary = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        if raw.trim().is_empty() {
            continue;
        }
        if summary.is_some() {
            return Err(malformed(line_no, "content after summary line".into()));
        }
        let line: TraceLine =
            serde_json::from_str(raw).map_err(|e| malformed(line_no, e.to_string()))?;
        match line {
            TraceLine::Episode { episode: ep } => {
                if episode.is_some() || !steps.is_empty() {
                    return Err(malformed(line_no, "episode header must be the first line".into()));
                }
                episode = Some(ep);
            }
            TraceLine::Step(record) => {
                if episode.is_none() {
                    return Err(malformed(line_no, "step before episode header".into()));
                }
                if record.step != steps.len() {
                    return Err(malformed(
                        line_no,
                        format!("expected step {}, found {}", steps.len(), record.step),
                    ));
                }
                steps.push(record);
            }
            TraceLine::Summary(s) => summary = Some(s),
            TraceLine::Aborted { step, error } => {
                return Err(malformed(line_no, format!("episode aborted at step {step}: {error}")))
            }
        }
    }
    let episode = episode.ok_or_else(|| malformed(1, "missing episode header".into()))?;
    let summary = summary.ok_or_else(|| malformed(last_line.max(1), "missing summary line".into()))?;
    Ok(ParsedTrace {
        episode,
        steps,
        summary,
    })
}

pub fn read_trace(path: &Path) -> Result<ParsedTrace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_trace(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Action;

    fn result() -> EpisodeResult {
        let episode = Episode {
            episode_id: "e1".into(),
            map_ref: PathBuf::from("maps/a.txt"),
            start: Pose::new(1.0, 1.0, 0.0).unwrap(),
            goal: Point::new(4.0, 1.0),
            instruction: "walk \"east\"".into(),
            shortest_path_length: 3.0,
        };
        let p0 = episode.start;
        let p1 = Pose::new(1.25, 1.0, 0.0).unwrap();
        let record = |step, action, before, after| StepRecord {
            step,
            action,
            reflection: "r".into(),
            pose_before: before,
            pose_after: after,
            collided: false,
            distance_to_goal: None,
            parse_events: vec![],
            frame_before: None,
            frame_after: None,
            latency: None,
        };
        EpisodeResult {
            episode,
            final_pose: p1,
            path_length: 0.25,
            success: true,
            stop_reason: StopReason::AgentStopped,
            steps_taken: 1,
            trace: vec![
                record(0, Action::MoveForward, p0, p1),
                record(1, Action::Stop, p1, p1),
            ],
        }
    }

    #[test]
    fn render_then_parse() {
        let r = result();
        let text = render_trace(&r);
        assert_eq!(text.lines().count(), 4);
        let parsed = parse_trace(&text, Path::new("t.jsonl")).unwrap();
        assert_eq!(parsed.steps, r.trace);
        assert_eq!(parsed.summary, TraceSummary::from_result(&r));
        assert_eq!(parsed.episode, r.episode);
    }

    #[test]
    fn truncated_summary_is_malformed() {
        let text = render_trace(&result());
        let cut = &text[..text.len() - 20];
        match parse_trace(cut, Path::new("t.jsonl")).unwrap_err() {
            TraceError::Malformed { line, path, .. } => {
                assert_eq!(line, 4);
                assert_eq!(path, PathBuf::from("t.jsonl"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_summary_is_malformed() {
        let text = render_trace(&result());
        let without: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(matches!(
            parse_trace(&without, Path::new("t")),
            Err(TraceError::Malformed { .. })
        ));
    }

    #[test]
    fn step_gap_is_malformed() {
        let text = render_trace(&result()).replace("\"step\":1,", "\"step\":7,");
        assert!(matches!(
            parse_trace(&text, Path::new("t")),
            Err(TraceError::Malformed { line: 3, .. })
        ));
    }
}
