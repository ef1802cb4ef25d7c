//! The per-step inference loop: observe, assemble prompts from the history
//! window, query the policy, act, record, and check the stop criteria.

pub mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::model::{Action, Episode, HistoryBuffer, HistoryEntry, ModelError, Point, Pose};
use crate::policy::{ParseEvent, Policy, PolicyContext, PolicyError};
use crate::prompt::{assemble_request, FramePair, PromptConfig, PromptError};
use crate::sim::{displacement, Observation, SimError, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub max_steps: usize,
    pub success_radius: f64,
    pub stop_on_goal_proximity: bool,
    pub window: usize,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_steps: 50,
            success_radius: 3.0,
            stop_on_goal_proximity: true,
            window: crate::prompt::DEFAULT_WINDOW,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1".into());
        }
        if !(self.success_radius > 0.0 && self.success_radius.is_finite()) {
            return Err(format!("success_radius must be > 0, got {}", self.success_radius));
        }
        if self.window == 0 {
            return Err("window must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxStepsReached,
    GoalReached,
    AgentStopped,
}

/// Stop criteria in priority order: an agent-issued stop, then goal
/// proximity (when enabled), then the step budget.
pub fn check_stop(
    distance_to_goal: f64,
    step_count: usize,
    last_action: Option<Action>,
    cfg: &LoopConfig,
) -> Option<StopReason> {
    if last_action == Some(Action::Stop) {
        Some(StopReason::AgentStopped)
    } else if cfg.stop_on_goal_proximity && distance_to_goal <= cfg.success_radius {
        Some(StopReason::GoalReached)
    } else if step_count >= cfg.max_steps {
        Some(StopReason::MaxStepsReached)
    } else {
        None
    }
}

/// One decision of the loop. A `stop` decision is recorded with
/// `pose_after == pose_before` and no simulator step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub reflection: String,
    pub pose_before: Pose,
    pub pose_after: Pose,
    pub collided: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distance_to_goal: Option<f64>,
    pub parse_events: Vec<ParseEvent>,
    pub frame_before: Option<String>,
    pub frame_after: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode: Episode,
    pub final_pose: Pose,
    pub path_length: f64,
    pub success: bool,
    pub stop_reason: StopReason,
    /// Simulator actions executed; a final `stop` is not counted.
    pub steps_taken: usize,
    pub trace: Vec<StepRecord>,
}

impl EpisodeResult {
    pub fn final_distance(&self) -> f64 {
        self.final_pose.position().distance(&self.episode.goal)
    }
}

#[derive(Debug, Error)]
pub enum LoopError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    History(#[from] ModelError),
    #[error("invalid loop config: {0}")]
    Config(String),
    #[error("frame sink: {0}")]
    FrameSink(String),
}

/// An episode that aborted, with the steps recorded before the failure.
#[derive(Debug, Error)]
#[error("episode {episode_id} aborted at step {step}: {error}")]
pub struct EpisodeFailure {
    pub episode_id: String,
    pub step: usize,
    pub error: LoopError,
    pub trace: Vec<StepRecord>,
}

/// Receives every observation the loop sees and returns a reference to
/// record in the trace.
pub trait FrameSink {
    fn save(&mut self, episode_id: &str, obs: &Observation) -> Result<Option<String>, String>;
}

/// Discards frames.
pub struct NoFrames;

impl FrameSink for NoFrames {
    fn save(&mut self, _episode_id: &str, _obs: &Observation) -> Result<Option<String>, String> {
        Ok(None)
    }
}

/// Path length as the sum of straight-line displacements between consecutive poses.
pub fn path_length(trace: &[StepRecord]) -> f64 {
    trace
        .iter()
        .map(|r| displacement(&r.pose_before, &r.pose_after))
        .sum()
}

pub fn is_success(final_pose: &Pose, goal: &Point, success_radius: f64) -> bool {
    final_pose.position().distance(goal) <= success_radius
}

/// Runs one episode to completion.
pub fn run_episode<S, P>(
    episode: &Episode,
    sim: &mut S,
    policy: &mut P,
    cfg: &LoopConfig,
    prompt: &PromptConfig,
    frames: &mut dyn FrameSink,
) -> Result<EpisodeResult, EpisodeFailure>
where
    S: Simulator + ?Sized,
    P: Policy + ?Sized,
{
    let mut trace = Vec::new();
    let mut step = 0;
    let outcome = drive(episode, sim, policy, cfg, prompt, frames, &mut trace, &mut step);
    match outcome {
        Ok((final_pose, stop_reason, steps_taken)) => Ok(EpisodeResult {
            episode: episode.clone(),
            final_pose,
            path_length: path_length(&trace),
            success: is_success(&final_pose, &episode.goal, cfg.success_radius),
            stop_reason,
            steps_taken,
            trace,
        }),
        Err(error) => Err(EpisodeFailure {
            episode_id: episode.episode_id.clone(),
            step,
            error,
            trace,
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn drive<S, P>(
    episode: &Episode,
    sim: &mut S,
    policy: &mut P,
    cfg: &LoopConfig,
    prompt: &PromptConfig,
    frames: &mut dyn FrameSink,
    trace: &mut Vec<StepRecord>,
    step: &mut usize,
) -> Result<(Pose, StopReason, usize), LoopError>
where
    S: Simulator + ?Sized,
    P: Policy + ?Sized,
{
    cfg.validate().map_err(LoopError::Config)?;
    let prompt = PromptConfig {
        window: cfg.window,
        ..prompt.clone()
    };
    let mut history = HistoryBuffer::new();
    let reset = sim.reset(episode)?;
    policy.begin_episode(episode)?;

    let mut pose = reset.pose;
    let mut current = reset.observation;
    let mut current_ref = save(frames, episode, &current)?;
    let mut previous: Option<Observation> = None;

    let distance = |p: &Pose| p.position().distance(&episode.goal);
    if let Some(reason) = check_stop(distance(&pose), 0, None, cfg) {
        return Ok((pose, reason, 0));
    }

    loop {
        let pair = FramePair {
            previous: previous.take(),
            current: current.clone(),
        };
        let request = assemble_request(
            &prompt,
            &episode.instruction,
            history.window(cfg.window),
            &pair,
            *step,
        )?;
        let ctx = PolicyContext {
            episode,
            step: *step,
            pose,
            request: &request,
        };
        let output = policy.decide(&ctx)?;
        let decision = output.decision;
        debug!(episode = %episode.episode_id, step = *step, action = %decision.action, "decision");

        if decision.action == Action::Stop {
            trace.push(StepRecord {
                step: *step,
                action: Action::Stop,
                reflection: decision.reflection,
                pose_before: pose,
                pose_after: pose,
                collided: false,
                distance_to_goal: None,
                parse_events: output.events,
                frame_before: current_ref,
                frame_after: None,
                latency: output.latency,
            });
            return Ok((pose, StopReason::AgentStopped, *step));
        }

        let response = sim.step(decision.action)?;
        let after_ref = save(frames, episode, &response.observation)?;
        trace.push(StepRecord {
            step: *step,
            action: decision.action,
            reflection: decision.reflection.clone(),
            pose_before: pose,
            pose_after: response.pose,
            collided: response.collided,
            distance_to_goal: Some(response.distance_to_goal),
            parse_events: output.events,
            frame_before: current_ref,
            frame_after: after_ref.clone(),
            latency: output.latency,
        });
        history.append(HistoryEntry::new(*step, decision.action, decision.reflection))?;

        pose = response.pose;
        previous = Some(std::mem::replace(&mut current, response.observation));
        current_ref = after_ref;
        *step += 1;

        if let Some(reason) = check_stop(distance(&pose), *step, Some(decision.action), cfg) {
            return Ok((pose, reason, *step));
        }
    }
}

fn save(
    frames: &mut dyn FrameSink,
    episode: &Episode,
    obs: &Observation,
) -> Result<Option<String>, LoopError> {
    frames
        .save(&episode.episode_id, obs)
        .map_err(LoopError::FrameSink)
}
