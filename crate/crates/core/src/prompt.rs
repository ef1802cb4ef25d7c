//! Prompt assembly: the system prompt (persona, agent parameters, common
//! sense, history context), the user prompt (reflection reactivation and
//! output format), and the one- or two-frame visual attachment.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, HistoryEntry};
use crate::sim::{Frame, Observation};

pub const DEFAULT_PERSONA: &str = include_str!("../templates/persona.v1.txt");
pub const DEFAULT_AGENT_PARAMETERS: &str = include_str!("../templates/agent_parameters.v1.txt");
pub const DEFAULT_COMMON_SENSE: &str = include_str!("../templates/common_sense.v1.txt");
pub const DEFAULT_OUTPUT_FORMAT: &str = include_str!("../templates/output_format.v1.txt");

pub const NO_HISTORY_LINE: &str = "No history yet.";
pub const DEFAULT_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("frame pair inconsistent: previous step {previous}, current step {current}")]
    FramePair { previous: usize, current: usize },
    #[error("frame pair missing previous frame at step {0}")]
    MissingPrevious(usize),
    #[error("current frame is from step {frame_step}, request is for step {step}")]
    StepMismatch { frame_step: usize, step: usize },
    #[error("prompt config: {0}")]
    Config(String),
    #[error("reading template {path}: {source}")]
    Template {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 256,
            seed: None,
        }
    }
}

/// Prompt texts and the agent parameters they advertise. Template texts may
/// use `{turn_angle}`, `{forward_step}` and `{actions}` placeholders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub persona_text: String,
    pub agent_parameters_text: String,
    pub common_sense_text: String,
    pub output_schema_text: String,
    pub turn_angle: f64,
    pub forward_step: f64,
    pub window: usize,
    pub decode: DecodeParams,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            persona_text: DEFAULT_PERSONA.to_string(),
            agent_parameters_text: DEFAULT_AGENT_PARAMETERS.to_string(),
            common_sense_text: DEFAULT_COMMON_SENSE.to_string(),
            output_schema_text: DEFAULT_OUTPUT_FORMAT.to_string(),
            turn_angle: 15.0,
            forward_step: 0.25,
            window: DEFAULT_WINDOW,
            decode: DecodeParams::default(),
        }
    }
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        let texts = [
            ("persona_text", &self.persona_text),
            ("agent_parameters_text", &self.agent_parameters_text),
            ("common_sense_text", &self.common_sense_text),
            ("output_schema_text", &self.output_schema_text),
        ];
        for (name, text) in texts {
            if text.trim().is_empty() {
                return Err(PromptError::Config(format!("{name} is empty")));
            }
        }
        if self.window == 0 {
            return Err(PromptError::Config("window must be at least 1".into()));
        }
        Ok(())
    }

    /// Replaces any of the four template texts found in `dir` (same file
    /// names as the shipped defaults).
    pub fn with_template_dir(mut self, dir: &Path) -> Result<Self, PromptError> {
        let slots: [(&str, &mut String); 4] = [
            ("persona.v1.txt", &mut self.persona_text),
            ("agent_parameters.v1.txt", &mut self.agent_parameters_text),
            ("common_sense.v1.txt", &mut self.common_sense_text),
            ("output_format.v1.txt", &mut self.output_schema_text),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| PromptError::Template {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(self)
    }

    fn fill(&self, template: &str) -> String {
        fill_template(
            template,
            &[
                ("turn_angle", &self.turn_angle.to_string()),
                ("forward_step", &self.forward_step.to_string()),
                ("actions", &action_list()),
            ],
        )
    }
}

/// Comma-separated canonical action names.
pub fn action_list() -> String {
    Action::ALL
        .iter()
        .map(Action::as_str)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Substitutes `{name}` placeholders. Unknown placeholders and other braces
/// are left untouched.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in values {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

pub fn format_history_line(entry: &HistoryEntry) -> String {
    format!(
        "step {}: action={}; reflection={}",
        entry.step, entry.action, entry.reflection
    )
}

/// System prompt with the four labeled sections in fixed order. At most
/// `cfg.window` of the most recent history entries are rendered.
pub fn build_system_prompt(cfg: &PromptConfig, history: &[HistoryEntry]) -> String {
    let start = history.len().saturating_sub(cfg.window);
    let history_block = if history[start..].is_empty() {
        NO_HISTORY_LINE.to_string()
    } else {
        history[start..]
            .iter()
            .map(format_history_line)
            .collect::<Vec<_>>()
            .join("\n")
    };
    format!(
        "## Persona\n{}\n\n## Agent Parameters\n{}\n\n## Human Common Sense\n{}\n\n## History Context\n{}\n",
        cfg.fill(&cfg.persona_text).trim_end(),
        cfg.fill(&cfg.agent_parameters_text).trim_end(),
        cfg.fill(&cfg.common_sense_text).trim_end(),
        history_block,
    )
}

/// User prompt: the instruction verbatim, the reflection reactivation
/// sentence when a prior reflection exists, and the output-format directive.
pub fn build_user_prompt(
    cfg: &PromptConfig,
    instruction: &str,
    step: usize,
    last_reflection: Option<&str>,
) -> String {
    let mut out = String::new();
    out.push_str("Instruction: ");
    out.push_str(instruction);
    out.push_str("\n\n");
    out.push_str(&format!("This is step {step}. "));
    if step == 0 {
        out.push_str("The attached image is your current view.\n");
    } else {
        out.push_str(
            "The first attached image is your view before your last action; the second is your view now.\n",
        );
    }
    if let Some(reflection) = last_reflection {
        out.push_str(&format!(
            "Your previous reflection was: \"{reflection}\"\nBuild on it to decide what to do next.\n"
        ));
    }
    out.push('\n');
    out.push_str(cfg.fill(&cfg.output_schema_text).trim_end());
    out.push('\n');
    out
}

/// Frames shown to the policy: the view before the last action, if any, and the current view.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub previous: Option<Observation>,
    pub current: Observation,
}

impl FramePair {
    pub fn first(current: Observation) -> Self {
        Self {
            previous: None,
            current,
        }
    }

    pub fn check(&self) -> Result<(), PromptError> {
        if let Some(prev) = &self.previous {
            if prev.step + 1 != self.current.step {
                return Err(PromptError::FramePair {
                    previous: prev.step,
                    current: self.current.step,
                });
            }
        }
        Ok(())
    }
}

/// A fully assembled policy query.
#[derive(Debug, Clone)]
pub struct VlmRequest {
    pub system_text: String,
    pub user_text: String,
    /// Older frame first.
    pub images: Vec<Frame>,
    pub decode: DecodeParams,
}

pub fn assemble_request(
    cfg: &PromptConfig,
    instruction: &str,
    history: &[HistoryEntry],
    frames: &FramePair,
    step: usize,
) -> Result<VlmRequest, PromptError> {
    frames.check()?;
    if frames.current.step != step {
        return Err(PromptError::StepMismatch {
            frame_step: frames.current.step,
            step,
        });
    }
    let images = match (&frames.previous, step) {
        (_, 0) => vec![frames.current.frame.clone()],
        (Some(prev), _) => vec![prev.frame.clone(), frames.current.frame.clone()],
        (None, _) => return Err(PromptError::MissingPrevious(step)),
    };
    let last_reflection = history.last().map(|e| e.reflection.as_str());
    Ok(VlmRequest {
        system_text: build_system_prompt(cfg, history),
        user_text: build_user_prompt(cfg, instruction, step, last_reflection),
        images,
        decode: cfg.decode,
    })
}
