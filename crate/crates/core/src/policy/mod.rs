//! Decision policies: the remote vision-language model client, scripted
//! local policies, and the decision parser they share.

pub mod parse;
pub mod remote;
pub mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::model::{Action, Decision, Episode, Pose};
use crate::prompt::VlmRequest;
pub use parse::{parse_decision, ParseError, RawModelOutput};
pub use remote::{GatewayError, PolicyEndpointConfig, RemoteClient};
pub use scripted::{OraclePolicy, ReplayPolicy, ZeroMovementPolicy};

/// Appended to the user prompt when re-asking after an unparseable answer.
pub const CORRECTIVE_SENTENCE: &str = "Your previous reply could not be parsed. Reply with only a JSON object of the form {\"action\": \"<turn_left|turn_right|move_forward|stop>\", \"reflection\": \"<text>\"}.";

pub const FALLBACK_ACTION: Action = Action::TurnLeft;
pub const FALLBACK_REFLECTION: &str = "(fallback: model output could not be parsed)";

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("replay exhausted for episode {episode} at step {step}")]
    ReplayExhausted { episode: String, step: usize },
    #[error("oracle: {0}")]
    Oracle(String),
    #[error("policy used before begin_episode")]
    NotStarted,
}

/// A parser failure or fallback recorded in the step trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseEvent {
    pub attempt: u32,
    pub kind: ParseEventKind,
    pub error: String,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseEventKind {
    ParseFailure,
    Fallback,
}

/// Inputs available to a policy at one step. Scripted policies may use the
/// privileged pose; the remote policy only sees the assembled request.
pub struct PolicyContext<'a> {
    pub episode: &'a Episode,
    pub step: usize,
    pub pose: Pose,
    pub request: &'a VlmRequest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub decision: Decision,
    pub events: Vec<ParseEvent>,
    pub latency: Option<f64>,
}

impl From<Decision> for PolicyOutput {
    fn from(decision: Decision) -> Self {
        Self {
            decision,
            events: Vec::new(),
            latency: None,
        }
    }
}

pub trait Policy {
    /// Called once before the first step of each episode.
    fn begin_episode(&mut self, _episode: &Episode) -> Result<(), PolicyError> {
        Ok(())
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyOutput, PolicyError>;
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn begin_episode(&mut self, episode: &Episode) -> Result<(), PolicyError> {
        (**self).begin_episode(episode)
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyOutput, PolicyError> {
        (**self).decide(ctx)
    }
}

/// Anything that turns a request into raw model text.
pub trait ModelBackend {
    fn infer(&self, req: &VlmRequest) -> Result<RawModelOutput, GatewayError>;
}

impl ModelBackend for RemoteClient {
    fn infer(&self, req: &VlmRequest) -> Result<RawModelOutput, GatewayError> {
        RemoteClient::infer(self, req)
    }
}

/// Policy backed by a model. An unparseable answer is re-asked once with a
/// corrective sentence; a second failure falls back to [`FALLBACK_ACTION`].
pub struct ModelPolicy<B> {
    backend: B,
}

impl<B: ModelBackend> ModelPolicy<B> {
    pub fn new(backend: B) -> Self {
        Self { backend }
    }
}

impl<B: ModelBackend> Policy for ModelPolicy<B> {
    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyOutput, PolicyError> {
        let mut events = Vec::new();
        let mut latency = 0.0;
        let mut request = ctx.request.clone();
        for attempt in 1..=2u32 {
            let raw = self.backend.infer(&request)?;
            latency += raw.latency;
            match parse_decision(&raw) {
                Ok(decision) => {
                    return Ok(PolicyOutput {
                        decision,
                        events,
                        latency: Some(latency),
                    })
                }
                Err(e) => {
                    warn!(step = ctx.step, attempt, "unparseable model output: {e}");
                    events.push(ParseEvent {
                        attempt,
                        kind: ParseEventKind::ParseFailure,
                        error: e.to_string(),
                        raw: raw.text,
                    });
                }
            }
            request.user_text = format!("{}\n{}\n", request.user_text.trim_end(), CORRECTIVE_SENTENCE);
        }
        events.push(ParseEvent {
            attempt: 2,
            kind: ParseEventKind::Fallback,
            error: format!("falling back to {FALLBACK_ACTION}"),
            raw: String::new(),
        });
        Ok(PolicyOutput {
            decision: Decision::new(FALLBACK_ACTION, FALLBACK_REFLECTION),
            events,
            latency: Some(latency),
        })
    }
}

pub type RemotePolicy = ModelPolicy<RemoteClient>;
