//! Decision extraction from free-form model text.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::model::{action_from_text, Decision};

pub const MISSING_REFLECTION: &str = "(no reflection)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in model output")]
    NoJsonFound { raw: String },
    #[error("invalid action {found:?} in model output")]
    InvalidAction { found: Option<String>, raw: String },
}

impl ParseError {
    pub fn raw(&self) -> &str {
        match self {
            ParseError::NoJsonFound { raw } | ParseError::InvalidAction { raw, .. } => raw,
        }
    }
}

/// Full model response text with its round-trip latency in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct RawModelOutput {
    pub text: String,
    pub latency: f64,
}

impl RawModelOutput {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            latency: 0.0,
        }
    }
}

/// Parses a decision out of model text. Tries, in order: the whole text as
/// JSON, the contents of a single markdown code fence, then the first
/// balanced `{...}` block that parses as a JSON object.
pub fn parse_decision(raw: &RawModelOutput) -> Result<Decision, ParseError> {
    let object = extract_object(&raw.text).ok_or_else(|| ParseError::NoJsonFound {
        raw: raw.text.clone(),
    })?;
    decision_from_object(&object, &raw.text)
}

fn decision_from_object(object: &Map<String, Value>, raw: &str) -> Result<Decision, ParseError> {
    let invalid = |found: Option<String>| ParseError::InvalidAction {
        found,
        raw: raw.to_string(),
    };
    let action = match object.get("action") {
        Some(Value::String(s)) => action_from_text(s).map_err(|_| invalid(Some(s.clone())))?,
        Some(other) => return Err(invalid(Some(other.to_string()))),
        None => return Err(invalid(None)),
    };
    let reflection = match object.get("reflection") {
        Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
        Some(Value::Null) | None => MISSING_REFLECTION.to_string(),
        Some(Value::String(_)) => MISSING_REFLECTION.to_string(),
        Some(other) => other.to_string(),
    };
    Ok(Decision { action, reflection })
}

/// Locates the first JSON object in `text` using the three-stage pipeline.
pub fn extract_object(text: &str) -> Option<Map<String, Value>> {
    let trimmed = text.trim();
    if let Some(obj) = parse_object(trimmed) {
        return Some(obj);
    }
    if let Some(inner) = strip_code_fence(trimmed) {
        if let Some(obj) = parse_object(inner.trim()) {
            return Some(obj);
        }
    }
    first_balanced_object(text)
}

fn parse_object(s: &str) -> Option<Map<String, Value>> {
    match serde_json::from_str::<Value>(s) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

/// Contents of the first ```-fenced block, with any language tag removed.
pub fn strip_code_fence(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1)?;
    let body = &after[body_start..];
    let close = body.find("```")?;
    Some(&body[..close])
}

/// Scans for balanced brace blocks, honoring JSON string quoting, and returns
/// the first one that parses as an object. Total scanning work is capped so
/// adversarial input with many unclosed braces stays cheap.
fn first_balanced_object(text: &str) -> Option<Map<String, Value>> {
    const SCAN_BUDGET: usize = 1 << 22;
    let bytes = text.as_bytes();
    let mut budget = SCAN_BUDGET;
    let mut start = 0;
    while let Some(offset) = bytes[start..].iter().position(|&b| b == b'{') {
        let open = start + offset;
        let (close, scanned) = matching_brace(bytes, open, budget);
        budget = budget.saturating_sub(scanned);
        if let Some(close) = close {
            if let Some(obj) = parse_object(&text[open..=close]) {
                return Some(obj);
            }
        }
        if budget == 0 {
            return None;
        }
        start = open + 1;
    }
    None
}

/// Index of the brace closing the one at `open`, and the number of bytes examined.
fn matching_brace(bytes: &[u8], open: usize, budget: usize) -> (Option<usize>, usize) {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (n, (i, &b)) in bytes.iter().enumerate().skip(open).enumerate() {
        if n >= budget {
            return (None, n);
        }
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return (Some(i), n + 1);
                }
            }
            _ => {}
        }
    }
    (None, bytes.len() - open)
}

/// Serializes a decision the way a well-behaved model would answer.
pub fn decision_to_json(decision: &Decision) -> String {
    serde_json::json!({
        "action": decision.action.as_str(),
        "reflection": decision.reflection,
    })
    .to_string()
}
