//! Flat-shaded column raycaster.
//!
//! One ray per image column over a 90 degree horizontal field of view. Each
//! ray that hits a wall draws a vertical slab whose height is inversely
//! proportional to the hit distance, so nearer wall segments look taller.
//! Faces perpendicular to the y axis are drawn darker than x faces to make
//! corners readable.

use super::frame::{Frame, FRAME_SIZE};
use super::map::{Rgb, WorldMap};
use super::raycast::{cast_ray, HitSide};
use crate::model::Pose;

pub const FIELD_OF_VIEW_DEG: f64 = 90.0;
pub const CEILING: Rgb = [200, 200, 200];
pub const FLOOR: Rgb = [64, 64, 64];

/// Vertical extent of walls in meters; the camera sits at half this height.
const WALL_HEIGHT: f64 = 2.0;

/// Angle of column `col` relative to the heading, in degrees; column 0 is
/// the leftmost (counterclockwise) edge.
pub fn column_offset_deg(col: usize) -> f64 {
    FIELD_OF_VIEW_DEG / 2.0 - (col as f64 + 0.5) * FIELD_OF_VIEW_DEG / FRAME_SIZE as f64
}

/// Color drawn for a wall cell seen from `side`.
pub fn shade(color: Rgb, side: HitSide) -> Rgb {
    match side {
        HitSide::X => color,
        HitSide::Y => color.map(|c| (c as u16 * 3 / 4) as u8),
    }
}

/// Slab height in pixels for a wall at `distance` meters.
pub fn slab_height(distance: f64) -> f64 {
    let focal = (FRAME_SIZE as f64 / 2.0) / (FIELD_OF_VIEW_DEG / 2.0).to_radians().tan();
    focal * WALL_HEIGHT / distance.max(1e-6)
}

/// Renders the view from `pose`. The caller guarantees the pose is in free space.
pub fn render_view(map: &WorldMap, pose: &Pose) -> Frame {
    let mut pixels = vec![0u8; FRAME_SIZE * FRAME_SIZE * 3];
    let max_range = (map.width() as f64).hypot(map.height() as f64) * map.cell_size() * 2.0;
    let center = FRAME_SIZE as f64 / 2.0;

    for col in 0..FRAME_SIZE {
        let angle = (pose.heading + column_offset_deg(col)).to_radians();
        let hit = cast_ray(map, pose.position(), (angle.cos(), angle.sin()), max_range);
        let (half, wall) = match hit {
            Some(h) => (slab_height(h.distance) / 2.0, shade(map.wall_color(h.cell), h.side)),
            None => (0.0, FLOOR),
        };
        for row in 0..FRAME_SIZE {
            let y = row as f64 + 0.5;
            let color = if (y - center).abs() < half {
                wall
            } else if y < center {
                CEILING
            } else {
                FLOOR
            };
            let i = (row * FRAME_SIZE + col) * 3;
            pixels[i..i + 3].copy_from_slice(&color);
        }
    }
    Frame::from_rgb(pixels).expect("renderer writes a full frame")
}

/// Number of wall pixels in one column, found by scanning the frame.
pub fn column_wall_height(frame: &Frame, col: usize) -> usize {
    (0..FRAME_SIZE)
        .filter(|&row| {
            let p = frame.pixel(col, row);
            p != CEILING && p != FLOOR
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::map::load_map;

    #[test]
    fn column_offsets_span_fov() {
        assert!((column_offset_deg(0) - (45.0 - 90.0 / 512.0)).abs() < 1e-12);
        assert!((column_offset_deg(FRAME_SIZE - 1) + (45.0 - 90.0 / 512.0)).abs() < 1e-12);
    }

    #[test]
    fn nearer_is_taller() {
        assert!(slab_height(1.0) > slab_height(1.5));
    }

    #[test]
    fn y_faces_darker() {
        assert_eq!(shade([100, 200, 40], HitSide::Y), [75, 150, 30]);
        assert_eq!(shade([100, 200, 40], HitSide::X), [100, 200, 40]);
    }

    #[test]
    fn deterministic() {
        let map = load_map("######\n#....#\n#....#\n######\n").unwrap();
        let pose = Pose::new(0.5, 0.375, 30.0).unwrap();
        assert_eq!(render_view(&map, &pose), render_view(&map, &pose));
    }
}
