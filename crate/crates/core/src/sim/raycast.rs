//! Grid traversal for rays through a [`WorldMap`].

use super::map::{CellIndex, WorldMap};
use crate::model::Point;

/// Which family of cell faces a ray crossed when it entered the hit cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HitSide {
    /// A face perpendicular to the x axis.
    X,
    /// A face perpendicular to the y axis.
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    /// Distance in meters from the origin to the wall face.
    pub distance: f64,
    pub cell: CellIndex,
    pub side: HitSide,
}

/// Walks the grid from `origin` along the unit vector `dir` and returns the
/// first wall face crossed within `max_distance` meters.
///
/// When the ray passes exactly through a cell corner, either orthogonal wall
/// neighbor blocks it, so a point agent cannot squeeze between two
/// diagonally touching walls.
pub fn cast_ray(map: &WorldMap, origin: Point, dir: (f64, f64), max_distance: f64) -> Option<RayHit> {
    let s = map.cell_size();
    let (dx, dy) = dir;
    let mut cell = map.cell_of(origin);
    if map.is_wall(cell) {
        return Some(RayHit {
            distance: 0.0,
            cell,
            side: HitSide::X,
        });
    }

    let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
    let mut t_max_x = boundary_t(origin.x, cell.0, dx, s);
    let mut t_max_y = boundary_t(origin.y, cell.1, dy, s);
    let t_delta_x = if dx != 0.0 { s / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { s / dy.abs() } else { f64::INFINITY };

    loop {
        let t = t_max_x.min(t_max_y);
        if !t.is_finite() || t > max_distance {
            return None;
        }
        if t_max_x < t_max_y {
            cell.0 += step_x;
            if map.is_wall(cell) {
                return Some(RayHit { distance: t, cell, side: HitSide::X });
            }
            t_max_x += t_delta_x;
        } else if t_max_y < t_max_x {
            cell.1 += step_y;
            if map.is_wall(cell) {
                return Some(RayHit { distance: t, cell, side: HitSide::Y });
            }
            t_max_y += t_delta_y;
        } else {
            let x_neighbor = (cell.0 + step_x, cell.1);
            let y_neighbor = (cell.0, cell.1 + step_y);
            if map.is_wall(x_neighbor) {
                return Some(RayHit { distance: t, cell: x_neighbor, side: HitSide::X });
            }
            if map.is_wall(y_neighbor) {
                return Some(RayHit { distance: t, cell: y_neighbor, side: HitSide::Y });
            }
            cell = (cell.0 + step_x, cell.1 + step_y);
            if map.is_wall(cell) {
                return Some(RayHit { distance: t, cell, side: HitSide::X });
            }
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
    }
}

/// Distance along the ray to the first cell boundary on one axis.
fn boundary_t(coord: f64, cell: i64, d: f64, s: f64) -> f64 {
    if d > 0.0 {
        ((cell as f64 + 0.5) * s - coord) / d
    } else if d < 0.0 {
        ((cell as f64 - 0.5) * s - coord) / d
    } else {
        f64::INFINITY
    }
}

/// True when the straight segment `a -> b` crosses no wall cell.
pub fn line_of_sight(map: &WorldMap, a: Point, b: Point) -> bool {
    let len = a.distance(&b);
    if len == 0.0 {
        return map.is_free_point(a);
    }
    let dir = ((b.x - a.x) / len, (b.y - a.y) / len);
    cast_ray(map, a, dir, len).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::map::load_map;

    fn room() -> WorldMap {
        // 8x6, interior cols 1..=6, rows 1..=4
        load_map("########\n#......#\n#......#\n#......#\n#......#\n########\n").unwrap()
    }

    #[test]
    fn axis_aligned_hits() {
        let map = room();
        // east wall cell col 7 has its face at x = 6.5 * 0.25 = 1.625
        let hit = cast_ray(&map, Point::new(1.0, 0.5), (1.0, 0.0), 10.0).unwrap();
        assert!((hit.distance - 0.625).abs() < 1e-12);
        assert_eq!(hit.cell, (7, 2));
        assert_eq!(hit.side, HitSide::X);
        let hit = cast_ray(&map, Point::new(1.0, 0.5), (0.0, -1.0), 10.0).unwrap();
        assert!((hit.distance - 0.375).abs() < 1e-12);
        assert_eq!(hit.side, HitSide::Y);
    }

    #[test]
    fn respects_max_distance() {
        let map = room();
        assert!(cast_ray(&map, Point::new(1.0, 0.5), (1.0, 0.0), 0.6).is_none());
    }

    #[test]
    fn corner_gap_blocks() {
        // free cells (1,1) and (2,2) touch only at a corner
        let map = load_map("####\n#.##\n##.#\n####\n").unwrap();
        let a = Point::new(0.25, 0.25);
        let b = Point::new(0.5, 0.5);
        assert!(!line_of_sight(&map, a, b));
    }

    #[test]
    fn diagonal_through_open_room() {
        let map = room();
        assert!(line_of_sight(&map, Point::new(0.25, 0.25), Point::new(1.5, 1.0)));
    }
}
