//! Domain types shared across the harness: poses, actions, episodes,
//! the per-episode history buffer and parsed decisions.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("history step mismatch: expected step {expected}, got {got}")]
    StepMismatch { expected: usize, got: usize },
    #[error("non-finite coordinate in pose ({x}, {y}, {heading})")]
    NonFinite { x: f64, y: f64, heading: f64 },
}

/// A 2D point in world meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Agent pose. Heading is in degrees, counterclockwise from +x, kept in `[0, 360)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Result<Self, ModelError> {
        if !(x.is_finite() && y.is_finite() && heading.is_finite()) {
            return Err(ModelError::NonFinite { x, y, heading });
        }
        Ok(Self {
            x,
            y,
            heading: normalize_heading(heading),
        })
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Returns this pose rotated by `delta` degrees (positive is counterclockwise).
    pub fn rotated(&self, delta: f64) -> Self {
        Self {
            heading: normalize_heading(self.heading + delta),
            ..*self
        }
    }

    /// Unit vector along the heading.
    pub fn direction(&self) -> (f64, f64) {
        let rad = self.heading.to_radians();
        (rad.cos(), rad.sin())
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            x: f64,
            y: f64,
            heading: f64,
        }
        let raw = Raw::deserialize(deserializer)?;
        Pose::new(raw.x, raw.y, raw.heading).map_err(serde::de::Error::custom)
    }
}

/// Wraps any finite angle into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negatives up to exactly 360.0
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// The closed four-action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    TurnLeft,
    TurnRight,
    MoveForward,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [
        Action::TurnLeft,
        Action::TurnRight,
        Action::MoveForward,
        Action::Stop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::MoveForward => "move_forward",
            Action::Stop => "stop",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        action_from_text(s)
    }
}

/// Exact, case-insensitive match on the four canonical names after trimming.
pub fn action_from_text(s: &str) -> Result<Action, ModelError> {
    let trimmed = s.trim();
    Action::ALL
        .into_iter()
        .find(|a| a.as_str().eq_ignore_ascii_case(trimmed))
        .ok_or_else(|| ModelError::UnknownAction(s.to_string()))
}

impl Serialize for Action {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        action_from_text(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: usize,
    pub action: Action,
    pub reflection: String,
}

impl HistoryEntry {
    pub fn new(step: usize, action: Action, reflection: impl Into<String>) -> Self {
        Self {
            step,
            action,
            reflection: reflection.into(),
        }
    }
}

/// Append-only record of `(step, action, reflection)` tuples for one episode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryBuffer {
    entries: Vec<HistoryEntry>,
}

impl HistoryBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `entry`; its step must equal the current length.
    pub fn append(&mut self, entry: HistoryEntry) -> Result<(), ModelError> {
        let expected = self.entries.len();
        if entry.step != expected {
            return Err(ModelError::StepMismatch {
                expected,
                got: entry.step,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// The last `min(window, len)` entries in chronological order.
    pub fn window(&self, window: usize) -> &[HistoryEntry] {
        let start = self.entries.len().saturating_sub(window);
        &self.entries[start..]
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn last(&self) -> Option<&HistoryEntry> {
        self.entries.last()
    }
}

/// One parsed policy output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub reflection: String,
}

impl Decision {
    pub fn new(action: Action, reflection: impl Into<String>) -> Self {
        Self {
            action,
            reflection: reflection.into(),
        }
    }
}

/// One navigation task. Field names match the episode file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub episode_id: String,
    #[serde(rename = "map")]
    pub map_ref: PathBuf,
    pub start: Pose,
    pub goal: Point,
    pub instruction: String,
    pub shortest_path_length: f64,
}

impl Episode {
    pub fn straight_line_distance(&self) -> f64 {
        self.start.position().distance(&self.goal)
    }

    /// Resolves `map_ref` against the directory holding the episode file.
    pub fn resolve_map(&self, base_dir: &Path) -> PathBuf {
        if self.map_ref.is_absolute() {
            self.map_ref.clone()
        } else {
            base_dir.join(&self.map_ref)
        }
    }
}

#[derive(Debug, Error)]
pub enum EpisodeFileError {
    #[error("reading episode file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing episode file {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Loads an episode-set file (a JSON array of episodes). Map references are
/// rewritten relative to the file's directory.
pub fn load_episode_set(path: &Path) -> Result<Vec<Episode>, EpisodeFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| EpisodeFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut episodes: Vec<Episode> =
        serde_json::from_str(&text).map_err(|source| EpisodeFileError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    for ep in &mut episodes {
        ep.map_ref = ep.resolve_map(base);
    }
    Ok(episodes)
}
