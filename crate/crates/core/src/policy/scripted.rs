//! Scripted policies: the zero-movement baseline, a shortest-path oracle
//! with privileged map access, and replay of a recorded action list.

use std::collections::HashMap;
use std::sync::Arc;

use super::{Policy, PolicyContext, PolicyError, PolicyOutput};
use crate::model::{normalize_heading, Action, Decision, Episode, Point, Pose};
use crate::sim::geodesic::DistanceField;
use crate::sim::map::CellIndex;
use crate::sim::raycast::line_of_sight;
use crate::sim::{apply_action, MapCache, SimParams, WorldMap};

/// Stops immediately on every episode.
#[derive(Debug, Default, Clone)]
pub struct ZeroMovementPolicy;

impl Policy for ZeroMovementPolicy {
    fn decide(&mut self, _ctx: &PolicyContext<'_>) -> Result<PolicyOutput, PolicyError> {
        Ok(Decision::new(Action::Stop, "baseline").into())
    }
}

/// Signed angle in degrees from `heading` to the direction `from -> to`,
/// in `(-180, 180]`; positive means the target is to the left.
pub fn bearing_to(from: Point, heading: f64, to: Point) -> f64 {
    let absolute = (to.y - from.y).atan2(to.x - from.x).to_degrees();
    let rel = normalize_heading(absolute - heading);
    if rel > 180.0 {
        rel - 360.0
    } else {
        rel
    }
}

/// Greedy choice among the three motions given a target bearing: move
/// forward when the target is within half a turn of straight ahead,
/// otherwise turn toward it.
pub fn steer(bearing: f64, turn_angle: f64) -> Action {
    if bearing.abs() <= turn_angle / 2.0 {
        Action::MoveForward
    } else if bearing > 0.0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

struct OracleEpisode {
    map: Arc<WorldMap>,
    field: DistanceField,
    goal: Point,
}

/// Follows the geodesic path to the goal using privileged map access.
pub struct OraclePolicy {
    params: SimParams,
    success_radius: f64,
    /// Farthest waypoint considered when picking a target, meters.
    lookahead: f64,
    /// Side clearance required along the straight line to a target, meters.
    margin: f64,
    maps: MapCache,
    fixed_map: Option<Arc<WorldMap>>,
    current: Option<OracleEpisode>,
}

impl OraclePolicy {
    /// Loads each episode's map from its map reference.
    pub fn new(params: SimParams, success_radius: f64) -> Self {
        Self {
            params,
            success_radius,
            lookahead: 2.0,
            margin: 0.12,
            maps: MapCache::default(),
            fixed_map: None,
            current: None,
        }
    }

    /// Uses `map` for every episode.
    pub fn with_map(map: WorldMap, params: SimParams, success_radius: f64) -> Self {
        Self {
            fixed_map: Some(Arc::new(map)),
            ..Self::new(params, success_radius)
        }
    }

    fn corridor_clear(map: &WorldMap, from: Point, to: Point, margin: f64) -> bool {
        if !line_of_sight(map, from, to) {
            return false;
        }
        let len = from.distance(&to);
        if len == 0.0 {
            return true;
        }
        let (nx, ny) = (-(to.y - from.y) / len * margin, (to.x - from.x) / len * margin);
        [1.0, -1.0].iter().all(|s| {
            let a = Point::new(from.x + s * nx, from.y + s * ny);
            let b = Point::new(to.x + s * nx, to.y + s * ny);
            map.is_free_point(a) && line_of_sight(map, a, b)
        })
    }

    fn choose_target(&self, ep: &OracleEpisode, pos: Point, path: &[CellIndex]) -> Point {
        let mut candidates: Vec<Point> = Vec::with_capacity(path.len() + 1);
        candidates.push(ep.goal);
        candidates.extend(path.iter().rev().map(|c| ep.map.cell_center(*c)));
        candidates
            .iter()
            .copied()
            .filter(|c| pos.distance(c) <= self.lookahead)
            .find(|c| Self::corridor_clear(&ep.map, pos, *c, self.margin))
            .unwrap_or_else(|| match path.get(1) {
                Some(next) => ep.map.cell_center(*next),
                None => ep.goal,
            })
    }

    fn next_action(&self, ep: &OracleEpisode, pose: &Pose) -> Result<Action, PolicyError> {
        let pos = pose.position();
        if pos.distance(&ep.goal) <= self.success_radius {
            return Ok(Action::Stop);
        }
        let cell = ep.map.cell_of(pos);
        let path = ep
            .field
            .path_to_source(&ep.map, cell)
            .ok_or_else(|| PolicyError::Oracle(format!("goal unreachable from cell {cell:?}")))?;
        let target = self.choose_target(ep, pos, &path);
        let bearing = bearing_to(pos, pose.heading, target);
        let mut action = steer(bearing, self.params.turn_angle);
        if action != Action::MoveForward && bearing.abs() <= self.params.turn_angle {
            // Within one turn of the target: a forward step that stays in the
            // clear corridor beats a correction that would overshoot.
            let (moved, collided) = apply_action(&ep.map, pose, Action::MoveForward, &self.params)
                .map_err(|e| PolicyError::Oracle(e.to_string()))?;
            if !collided && Self::corridor_clear(&ep.map, moved.position(), target, self.margin) {
                action = Action::MoveForward;
            }
        }
        if action == Action::MoveForward {
            let (moved, collided) = apply_action(&ep.map, pose, action, &self.params)
                .map_err(|e| PolicyError::Oracle(e.to_string()))?;
            if collided && moved.position().distance(&pos) < 1e-9 {
                // Blocked dead ahead: rotate toward the target side.
                return Ok(if bearing >= 0.0 { Action::TurnLeft } else { Action::TurnRight });
            }
        }
        Ok(action)
    }
}

impl Policy for OraclePolicy {
    fn begin_episode(&mut self, episode: &Episode) -> Result<(), PolicyError> {
        let map = match &self.fixed_map {
            Some(m) => m.clone(),
            None => self
                .maps
                .get(&episode.map_ref)
                .map_err(|e| PolicyError::Oracle(e.to_string()))?,
        };
        if !map.is_free_point(episode.goal) {
            return Err(PolicyError::Oracle(format!(
                "goal ({}, {}) is not in free space",
                episode.goal.x, episode.goal.y
            )));
        }
        let field = DistanceField::from_cell(&map, map.cell_of(episode.goal));
        self.current = Some(OracleEpisode {
            map,
            field,
            goal: episode.goal,
        });
        Ok(())
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyOutput, PolicyError> {
        let ep = self.current.as_ref().ok_or(PolicyError::NotStarted)?;
        let action = self.next_action(ep, &ctx.pose)?;
        let reflection = match action {
            Action::Stop => "goal within success radius",
            Action::MoveForward => "path ahead is clear",
            _ => "turning toward the next waypoint",
        };
        Ok(Decision::new(action, reflection).into())
    }
}

/// Replays recorded actions, either one list for every episode or a list per episode id.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    shared: Option<Vec<Action>>,
    per_episode: HashMap<String, Vec<Action>>,
    current: Vec<Action>,
    episode_id: String,
    cursor: usize,
}

impl ReplayPolicy {
    pub fn from_actions(actions: Vec<Action>) -> Self {
        Self {
            shared: Some(actions.clone()),
            per_episode: HashMap::new(),
            current: actions,
            episode_id: String::new(),
            cursor: 0,
        }
    }

    pub fn per_episode(actions: HashMap<String, Vec<Action>>) -> Self {
        Self {
            shared: None,
            per_episode: actions,
            current: Vec::new(),
            episode_id: String::new(),
            cursor: 0,
        }
    }
}

impl Policy for ReplayPolicy {
    fn begin_episode(&mut self, episode: &Episode) -> Result<(), PolicyError> {
        self.episode_id = episode.episode_id.clone();
        self.cursor = 0;
        self.current = match &self.shared {
            Some(list) => list.clone(),
            None => self
                .per_episode
                .get(&episode.episode_id)
                .cloned()
                .unwrap_or_default(),
        };
        Ok(())
    }

    fn decide(&mut self, ctx: &PolicyContext<'_>) -> Result<PolicyOutput, PolicyError> {
        let action = *self
            .current
            .get(self.cursor)
            .ok_or_else(|| PolicyError::ReplayExhausted {
                episode: self.episode_id.clone(),
                step: ctx.step,
            })?;
        self.cursor += 1;
        Ok(Decision::new(action, "replay").into())
    }
}
