//! Built-in continuous 2D simulator on an occupancy grid, plus the
//! newline-delimited JSON wire protocol that external simulators also speak.

pub mod frame;
pub mod geodesic;
pub mod map;
pub mod protocol;
pub mod raycast;
pub mod render;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, Episode, Point, Pose};
pub use frame::{Frame, Observation, FRAME_SIZE};
pub use geodesic::{geodesic_distance, DistanceField, GeodesicError};
pub use map::{load_map, load_map_file, MapError, WorldMap};
use raycast::cast_ray;
pub use render::render_view;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("episode start ({x}, {y}) is inside a wall")]
    StartInWall { x: f64, y: f64 },
    #[error("pose ({x}, {y}) is inside a wall")]
    PoseInWall { x: f64, y: f64 },
    #[error("stop must be handled by the loop, not passed to the simulator")]
    StopPassedToSimulator,
    #[error("simulator has not been reset")]
    NotReset,
    #[error("map not found: {0}")]
    MapNotFound(PathBuf),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("episode not found: {0}")]
    EpisodeNotFound(String),
    #[error("simulator protocol error: {0}")]
    Protocol(String),
    #[error("simulator i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Motion parameters. Defaults follow the common R2R continuous-environment settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Meters advanced by `move_forward`.
    pub forward_step: f64,
    /// Degrees rotated by `turn_left` / `turn_right`.
    pub turn_angle: f64,
    /// Gap left between the agent and a wall it runs into.
    pub clearance: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            forward_step: 0.25,
            turn_angle: 15.0,
            clearance: 0.01,
        }
    }
}

/// Pose update for one non-stop action. Forward motion stops `clearance`
/// meters short of the first wall face on the path; there is no sliding.
pub fn apply_action(
    map: &WorldMap,
    pose: &Pose,
    action: Action,
    params: &SimParams,
) -> Result<(Pose, bool), SimError> {
    match action {
        Action::TurnLeft => Ok((pose.rotated(params.turn_angle), false)),
        Action::TurnRight => Ok((pose.rotated(-params.turn_angle), false)),
        Action::Stop => Err(SimError::StopPassedToSimulator),
        Action::MoveForward => {
            let dir = pose.direction();
            let (travel, collided) = match cast_ray(map, pose.position(), dir, params.forward_step) {
                Some(hit) => ((hit.distance - params.clearance).max(0.0), true),
                None => (params.forward_step, false),
            };
            let moved = Pose {
                x: pose.x + dir.0 * travel,
                y: pose.y + dir.1 * travel,
                heading: pose.heading,
            };
            if map.is_free_point(moved.position()) {
                Ok((moved, collided))
            } else {
                // Only reachable when the step ends exactly on a wall face.
                Ok((*pose, true))
            }
        }
    }
}

/// Everything a simulator reports after a reset or step.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResponse {
    pub observation: Observation,
    pub pose: Pose,
    pub collided: bool,
    pub step: usize,
    /// Ground truth for the harness only; never shown to the policy.
    pub distance_to_goal: f64,
}

/// Common interface over the built-in simulator and remote protocol peers.
pub trait Simulator {
    fn reset(&mut self, episode: &Episode) -> Result<SimResponse, SimError>;
    fn step(&mut self, action: Action) -> Result<SimResponse, SimError>;
}

impl<S: Simulator + ?Sized> Simulator for Box<S> {
    fn reset(&mut self, episode: &Episode) -> Result<SimResponse, SimError> {
        (**self).reset(episode)
    }

    fn step(&mut self, action: Action) -> Result<SimResponse, SimError> {
        (**self).step(action)
    }
}

/// State of one built-in simulator episode.
#[derive(Debug, Clone)]
pub struct SimState {
    pub pose: Pose,
    pub step_count: usize,
    pub episode: Episode,
    pub last_collided: bool,
    map: Arc<WorldMap>,
    params: SimParams,
}

impl SimState {
    pub fn reset(
        map: Arc<WorldMap>,
        episode: &Episode,
        params: SimParams,
    ) -> Result<(Self, Observation), SimError> {
        let start = episode.start;
        if !map.is_free_point(start.position()) {
            return Err(SimError::StartInWall { x: start.x, y: start.y });
        }
        let state = Self {
            pose: start,
            step_count: 0,
            episode: episode.clone(),
            last_collided: false,
            map,
            params,
        };
        let obs = state.observe();
        Ok((state, obs))
    }

    pub fn step(&mut self, action: Action) -> Result<(Observation, bool), SimError> {
        let (pose, collided) = apply_action(&self.map, &self.pose, action, &self.params)?;
        self.pose = pose;
        self.last_collided = collided;
        self.step_count += 1;
        Ok((self.observe(), collided))
    }

    pub fn observe(&self) -> Observation {
        Observation {
            frame: render_view(&self.map, &self.pose),
            step: self.step_count,
        }
    }

    pub fn map(&self) -> &WorldMap {
        &self.map
    }

    pub fn distance_to_goal(&self) -> f64 {
        self.pose.position().distance(&self.episode.goal)
    }

    fn response(&self, observation: Observation) -> SimResponse {
        SimResponse {
            observation,
            pose: self.pose,
            collided: self.last_collided,
            step: self.step_count,
            distance_to_goal: self.distance_to_goal(),
        }
    }
}

/// Renders the view at `pose`, rejecting poses inside walls.
pub fn render(map: &WorldMap, pose: &Pose, step: usize) -> Result<Observation, SimError> {
    if !map.is_free_point(pose.position()) {
        return Err(SimError::PoseInWall { x: pose.x, y: pose.y });
    }
    Ok(Observation {
        frame: render_view(map, pose),
        step,
    })
}

/// Loads maps from disk on demand, caching them by path.
#[derive(Debug, Default, Clone)]
pub struct MapCache {
    maps: HashMap<PathBuf, Arc<WorldMap>>,
}

impl MapCache {
    pub fn get(&mut self, path: &std::path::Path) -> Result<Arc<WorldMap>, SimError> {
        if let Some(map) = self.maps.get(path) {
            return Ok(map.clone());
        }
        if !path.exists() {
            return Err(SimError::MapNotFound(path.to_path_buf()));
        }
        let map = Arc::new(load_map_file(path)?);
        self.maps.insert(path.to_path_buf(), map.clone());
        Ok(map)
    }
}

enum MapSource {
    Fixed(Arc<WorldMap>),
    Files(MapCache),
}

/// The in-process simulator.
pub struct BuiltinSimulator {
    source: MapSource,
    params: SimParams,
    state: Option<SimState>,
}

impl BuiltinSimulator {
    /// Loads each episode's map from its `map` path.
    pub fn new(params: SimParams) -> Self {
        Self {
            source: MapSource::Files(MapCache::default()),
            params,
            state: None,
        }
    }

    /// Uses `map` for every episode regardless of its map reference.
    pub fn with_map(map: WorldMap, params: SimParams) -> Self {
        Self {
            source: MapSource::Fixed(Arc::new(map)),
            params,
            state: None,
        }
    }

    pub fn state(&self) -> Option<&SimState> {
        self.state.as_ref()
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }
}

impl Simulator for BuiltinSimulator {
    fn reset(&mut self, episode: &Episode) -> Result<SimResponse, SimError> {
        let map = match &mut self.source {
            MapSource::Fixed(map) => map.clone(),
            MapSource::Files(cache) => cache.get(&episode.map_ref)?,
        };
        let (state, obs) = SimState::reset(map, episode, self.params)?;
        let response = state.response(obs);
        self.state = Some(state);
        Ok(response)
    }

    fn step(&mut self, action: Action) -> Result<SimResponse, SimError> {
        let state = self.state.as_mut().ok_or(SimError::NotReset)?;
        let (obs, _) = state.step(action)?;
        Ok(state.response(obs))
    }
}

/// Straight-line displacement between two poses, ignoring heading.
pub fn displacement(a: &Pose, b: &Pose) -> f64 {
    Point::new(a.x, a.y).distance(&Point::new(b.x, b.y))
}
