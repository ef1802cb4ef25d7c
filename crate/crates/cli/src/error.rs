use std::path::PathBuf;

use serde_json::json;
use thiserror::Error;

use vlnloop_core::eval::EvalError;
use vlnloop_core::model::EpisodeFileError;
use vlnloop_core::navloop::trace::TraceError;
use vlnloop_core::navloop::{EpisodeFailure, LoopError};
use vlnloop_core::policy::PolicyError;
use vlnloop_core::sim::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Episodes(#[from] EpisodeFileError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Episode(#[from] EpisodeFailure),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: replay diverged at step {step}: {detail}")]
    Divergence {
        path: PathBuf,
        step: usize,
        detail: String,
    },
    #[error("validation failed with {0} problem(s)")]
    Invalid(usize),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable short name for the error line.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Episodes(_) => "episode_set",
            CliError::Sim(e) => sim_kind(e),
            CliError::Policy(e) => policy_kind(e),
            CliError::Episode(f) => match &f.error {
                LoopError::Sim(e) => sim_kind(e),
                LoopError::Policy(e) => policy_kind(e),
                _ => "episode",
            },
            CliError::Trace(TraceError::Malformed { .. }) => "malformed_trace",
            CliError::Trace(TraceError::Io { .. }) => "io",
            CliError::Eval(EvalError::EmptyResults) => "empty_results",
            CliError::Eval(_) => "eval",
            CliError::Divergence { .. } => "divergence",
            CliError::Invalid(_) => "validation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    /// One-line JSON description written to stderr on failure.
    pub fn error_line(&self) -> String {
        let mut value = json!({ "error": { "kind": self.kind(), "message": self.to_string() } });
        if let CliError::Divergence { step, path, .. } = self {
            value["error"]["step"] = json!(step);
            value["error"]["path"] = json!(path);
        }
        if let CliError::Episode(f) = self {
            value["error"]["episode_id"] = json!(f.episode_id);
            value["error"]["step"] = json!(f.step);
        }
        value.to_string()
    }
}

fn sim_kind(e: &SimError) -> &'static str {
    match e {
        SimError::MapNotFound(_) => "map_not_found",
        SimError::Protocol(_) => "protocol",
        SimError::Io(_) => "io",
        _ => "simulator",
    }
}

fn policy_kind(e: &PolicyError) -> &'static str {
    use vlnloop_core::policy::GatewayError;
    match e {
        PolicyError::Gateway(GatewayError::Transport { .. }) => "transport",
        PolicyError::Gateway(GatewayError::Timeout { .. }) => "timeout",
        PolicyError::Gateway(_) => "gateway",
        _ => "policy",
    }
}
