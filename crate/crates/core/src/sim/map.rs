//! Occupancy grid maps.
//!
//! Cell `(col, row)` is centered at world point `(col * cell_size, row * cell_size)`
//! and spans half a cell on each side, so a point belongs to the cell
//! `floor(coord / cell_size + 0.5)` along each axis. Rows follow the text
//! lines of the map file, so the first line is `y = 0` and `y` grows downward
//! in the file.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::model::Point;

pub const DEFAULT_CELL_SIZE: f64 = 0.25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("ragged rows: row {row} has length {len}, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("open border: free cell at column {col}, row {row}")]
    OpenBorder { col: usize, row: usize },
    #[error("unknown character {ch:?} at column {col}, row {row}")]
    UnknownChar { ch: char, col: usize, row: usize },
    #[error("map must be at least 3x3, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("invalid header line {0:?}")]
    BadHeader(String),
    #[error("map file {path}: {message}")]
    Io { path: String, message: String },
}

pub type Rgb = [u8; 3];

/// Grid cell coordinates `(col, row)`. Signed so neighbor arithmetic can leave the grid.
pub type CellIndex = (i64, i64);

#[derive(Debug, Clone, PartialEq)]
pub struct WorldMap {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    cell_size: f64,
    wall_colors: HashMap<(usize, usize), Rgb>,
}

const PALETTE: [Rgb; 8] = [
    [178, 34, 34],
    [34, 139, 34],
    [30, 90, 200],
    [218, 165, 32],
    [148, 0, 211],
    [0, 150, 150],
    [205, 92, 92],
    [110, 110, 40],
];

impl WorldMap {
    /// Builds a map from row-major wall flags. Enforces the closed-border invariant.
    pub fn from_walls(
        width: usize,
        height: usize,
        walls: Vec<bool>,
        cell_size: f64,
    ) -> Result<Self, MapError> {
        if width < 3 || height < 3 {
            return Err(MapError::TooSmall { width, height });
        }
        assert_eq!(walls.len(), width * height, "wall vector size");
        for row in 0..height {
            for col in 0..width {
                let border = row == 0 || col == 0 || row == height - 1 || col == width - 1;
                if border && !walls[row * width + col] {
                    return Err(MapError::OpenBorder { col, row });
                }
            }
        }
        Ok(Self {
            width,
            height,
            walls,
            cell_size,
            wall_colors: HashMap::new(),
        })
    }

    /// Overrides the render color of one wall cell.
    pub fn with_wall_color(mut self, col: usize, row: usize, color: Rgb) -> Self {
        self.wall_colors.insert((col, row), color);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn in_bounds(&self, cell: CellIndex) -> bool {
        cell.0 >= 0 && cell.1 >= 0 && (cell.0 as usize) < self.width && (cell.1 as usize) < self.height
    }

    /// Out-of-bounds cells count as walls.
    pub fn is_wall(&self, cell: CellIndex) -> bool {
        if !self.in_bounds(cell) {
            return true;
        }
        self.walls[cell.1 as usize * self.width + cell.0 as usize]
    }

    pub fn is_free(&self, cell: CellIndex) -> bool {
        !self.is_wall(cell)
    }

    pub fn cell_of(&self, p: Point) -> CellIndex {
        (
            (p.x / self.cell_size + 0.5).floor() as i64,
            (p.y / self.cell_size + 0.5).floor() as i64,
        )
    }

    pub fn cell_center(&self, cell: CellIndex) -> Point {
        Point::new(cell.0 as f64 * self.cell_size, cell.1 as f64 * self.cell_size)
    }

    pub fn is_free_point(&self, p: Point) -> bool {
        p.x.is_finite() && p.y.is_finite() && self.is_free(self.cell_of(p))
    }

    pub fn free_cell_count(&self) -> usize {
        self.walls.iter().filter(|w| !**w).count()
    }

    pub fn free_cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (0..self.height).flat_map(move |row| {
            (0..self.width)
                .filter(move |&col| !self.walls[row * self.width + col])
                .map(move |col| (col as i64, row as i64))
        })
    }

    /// Render color of a wall cell: the explicit tag if set, else a palette
    /// entry picked by hashing the cell coordinates.
    pub fn wall_color(&self, cell: CellIndex) -> Rgb {
        if cell.0 >= 0 && cell.1 >= 0 {
            if let Some(c) = self.wall_colors.get(&(cell.0 as usize, cell.1 as usize)) {
                return *c;
            }
        }
        let mut h = (cell.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (cell.1 as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
        h ^= h >> 29;
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 32;
        PALETTE[(h % PALETTE.len() as u64) as usize]
    }
}

/// Parses an ASCII grid: `#` wall, `.` free, one row per line, with an optional
/// leading `cell_size=<meters>` header.
pub fn load_map(text: &str) -> Result<WorldMap, MapError> {
    let mut lines = text.lines().map(|l| l.trim_end_matches('\r')).peekable();
    let mut cell_size = DEFAULT_CELL_SIZE;
    if let Some(first) = lines.peek() {
        if let Some(value) = first.trim().strip_prefix("cell_size=") {
            cell_size = value
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(|| MapError::BadHeader(first.to_string()))?;
            lines.next();
        }
    }
    let rows: Vec<&str> = lines.filter(|l| !l.trim().is_empty()).collect();
    if rows.is_empty() {
        return Err(MapError::Empty);
    }
    let width = rows[0].chars().count();
    let mut walls = Vec::with_capacity(width * rows.len());
    for (row, line) in rows.iter().enumerate() {
        let len = line.chars().count();
        if len != width {
            return Err(MapError::Ragged {
                row,
                len,
                expected: width,
            });
        }
        for (col, ch) in line.chars().enumerate() {
            match ch {
                '#' => walls.push(true),
                '.' => walls.push(false),
                other => return Err(MapError::UnknownChar { ch: other, col, row }),
            }
        }
    }
    WorldMap::from_walls(width, rows.len(), walls, cell_size)
}

pub fn load_map_file(path: &Path) -> Result<WorldMap, MapError> {
    let text = std::fs::read_to_string(path).map_err(|e| MapError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_map(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_by_five_room() {
        let map = load_map("#####\n#...#\n#...#\n#...#\n#####\n").unwrap();
        assert_eq!((map.width(), map.height()), (5, 5));
        assert_eq!(map.free_cell_count(), 9);
        assert_eq!(map.cell_size(), DEFAULT_CELL_SIZE);
    }

    #[test]
    fn open_border_rejected() {
        let err = load_map("#####\n#....\n#...#\n#####\n").unwrap_err();
        assert_eq!(err, MapError::OpenBorder { col: 4, row: 1 });
    }

    #[test]
    fn unknown_character_rejected() {
        let err = load_map("#####\n#.x.#\n#####\n").unwrap_err();
        assert_eq!(err, MapError::UnknownChar { ch: 'x', col: 2, row: 1 });
    }

    #[test]
    fn ragged_rejected() {
        let err = load_map("#####\n#..#\n#####\n").unwrap_err();
        assert!(matches!(err, MapError::Ragged { row: 1, len: 4, expected: 5 }));
    }

    #[test]
    fn header_sets_cell_size() {
        let map = load_map("cell_size=0.5\n###\n#.#\n###\n").unwrap();
        assert_eq!(map.cell_size(), 0.5);
        assert!(matches!(
            load_map("cell_size=-1\n###\n#.#\n###\n"),
            Err(MapError::BadHeader(_))
        ));
    }

    #[test]
    fn too_small_rejected() {
        assert!(matches!(load_map("##\n##\n"), Err(MapError::TooSmall { .. })));
    }

    #[test]
    fn cell_convention() {
        let map = load_map("#####\n#...#\n#...#\n#...#\n#####\n").unwrap();
        assert_eq!(map.cell_of(Point::new(0.25, 0.5)), (1, 2));
        // cell 1 spans [0.125, 0.375)
        assert_eq!(map.cell_of(Point::new(0.125, 0.25)), (1, 1));
        assert_eq!(map.cell_of(Point::new(0.1249, 0.25)), (0, 1));
        assert!(map.is_wall((-1, 2)));
        assert!(map.is_free_point(Point::new(0.5, 0.5)));
        assert!(!map.is_free_point(Point::new(0.0, 0.5)));
    }

    #[test]
    fn explicit_color_overrides_palette() {
        let map = load_map("###\n#.#\n###\n").unwrap().with_wall_color(0, 1, [1, 2, 3]);
        assert_eq!(map.wall_color((0, 1)), [1, 2, 3]);
        assert!(PALETTE.contains(&map.wall_color((2, 1))));
    }
}
