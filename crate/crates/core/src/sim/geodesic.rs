//! Shortest obstacle-avoiding distances on the 8-connected free-cell graph.
//!
//! Orthogonal moves cost one cell size, diagonal moves cost `sqrt(2)` cell
//! sizes. A diagonal move is only allowed when both orthogonal cells it
//! passes between are free, so paths never cut wall corners.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use super::map::{CellIndex, WorldMap};
use crate::model::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesicError {
    #[error("point ({x}, {y}) is not in free space")]
    NotFree { x: f64, y: f64 },
    #[error("no free path between ({ax}, {ay}) and ({bx}, {by})")]
    Unreachable { ax: f64, ay: f64, bx: f64, by: f64 },
}

const NEIGHBORS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Free neighbors of `cell` with the metric cost of the move.
pub fn neighbors(map: &WorldMap, cell: CellIndex) -> impl Iterator<Item = (CellIndex, f64)> + '_ {
    let s = map.cell_size();
    NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
        let next = (cell.0 + dx, cell.1 + dy);
        if map.is_wall(next) {
            return None;
        }
        if dx != 0 && dy != 0 {
            if map.is_wall((cell.0 + dx, cell.1)) || map.is_wall((cell.0, cell.1 + dy)) {
                return None;
            }
            Some((next, s * std::f64::consts::SQRT_2))
        } else {
            Some((next, s))
        }
    })
}

#[derive(Copy, Clone, PartialEq)]
struct QueueItem {
    cost: f64,
    index: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest distances from one cell to every free cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    source: CellIndex,
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn from_cell(map: &WorldMap, source: CellIndex) -> Self {
        Self::run(map, source, None)
    }

    fn run(map: &WorldMap, source: CellIndex, target: Option<CellIndex>) -> Self {
        let width = map.width();
        let mut dist = vec![f64::INFINITY; width * map.height()];
        let idx = |c: CellIndex| c.1 as usize * width + c.0 as usize;
        let mut heap = BinaryHeap::new();
        if map.is_free(source) {
            dist[idx(source)] = 0.0;
            heap.push(QueueItem { cost: 0.0, index: idx(source) });
        }
        while let Some(QueueItem { cost, index }) = heap.pop() {
            if cost > dist[index] {
                continue;
            }
            let cell = ((index % width) as i64, (index / width) as i64);
            if Some(cell) == target {
                break;
            }
            for (next, w) in neighbors(map, cell) {
                let ni = idx(next);
                let candidate = cost + w;
                if candidate < dist[ni] {
                    dist[ni] = candidate;
                    heap.push(QueueItem { cost: candidate, index: ni });
                }
            }
        }
        Self { width, source, dist }
    }

    pub fn source(&self) -> CellIndex {
        self.source
    }

    /// Distance from the source to `cell`; infinite when unreachable or walled.
    pub fn get(&self, cell: CellIndex) -> f64 {
        if cell.0 < 0 || cell.1 < 0 || cell.0 as usize >= self.width {
            return f64::INFINITY;
        }
        self.dist
            .get(cell.1 as usize * self.width + cell.0 as usize)
            .copied()
            .unwrap_or(f64::INFINITY)
    }

    /// Cell path from `from` back to the source by steepest descent.
    pub fn path_to_source(&self, map: &WorldMap, from: CellIndex) -> Option<Vec<CellIndex>> {
        if !self.get(from).is_finite() {
            return None;
        }
        let mut path = vec![from];
        let mut current = from;
        while current != self.source {
            let here = self.get(current);
            let (next, _) = neighbors(map, current)
                .map(|(n, w)| (n, self.get(n) + w))
                .filter(|(n, _)| self.get(*n) < here)
                .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)))?;
            path.push(next);
            current = next;
        }
        Some(path)
    }
}

/// Shortest cell-graph distance between two cells, if connected.
pub fn cell_distance(map: &WorldMap, a: CellIndex, b: CellIndex) -> Option<f64> {
    if map.is_wall(a) || map.is_wall(b) {
        return None;
    }
    let field = DistanceField::run(map, a, Some(b));
    let d = field.get(b);
    d.is_finite().then_some(d)
}

/// Geodesic distance between two free points: straight-line distance when
/// they share a cell, otherwise the offsets from each point to its cell
/// center plus the cell-graph distance between the centers.
pub fn geodesic_distance(map: &WorldMap, a: Point, b: Point) -> Result<f64, GeodesicError> {
    for p in [a, b] {
        if !map.is_free_point(p) {
            return Err(GeodesicError::NotFree { x: p.x, y: p.y });
        }
    }
    let ca = map.cell_of(a);
    let cb = map.cell_of(b);
    if ca == cb {
        return Ok(a.distance(&b));
    }
    let graph = cell_distance(map, ca, cb).ok_or(GeodesicError::Unreachable {
        ax: a.x,
        ay: a.y,
        bx: b.x,
        by: b.y,
    })?;
    Ok(a.distance(&map.cell_center(ca)) + graph + map.cell_center(cb).distance(&b))
}
