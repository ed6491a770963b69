use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Game, GameError};

/// Level dimensions in tiles. Displayed, parsed and serialized as `WxH`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Size {
    pub w: usize,
    pub h: usize,
}

impl Size {
    pub const fn new(w: usize, h: usize) -> Self {
        Self { w, h }
    }

    pub fn area(self) -> usize {
        self.w * self.h
    }

    /// Manhattan distance between sizes, used to pick the closest trained size.
    pub fn distance(self, other: Size) -> usize {
        self.w.abs_diff(other.w) + self.h.abs_diff(other.h)
    }

    /// Closest size under `|Δw| + |Δh|`, ties broken by smaller area then ordering.
    pub fn closest<'a, I: IntoIterator<Item = &'a Size>>(self, candidates: I) -> Option<Size> {
        candidates
            .into_iter()
            .copied()
            .min_by_key(|c| (c.distance(self), c.area(), *c))
    }
}

impl fmt::Display for Size {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.w, self.h)
    }
}

impl FromStr for Size {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GameError::BadSize(s.to_string());
        let (w, h) = s.trim().split_once(['x', 'X', '×']).ok_or_else(bad)?;
        let w: usize = w.trim().parse().map_err(|_| bad())?;
        let h: usize = h.trim().parse().map_err(|_| bad())?;
        if w == 0 || h == 0 {
            return Err(bad());
        }
        Ok(Size { w, h })
    }
}

impl From<Size> for String {
    fn from(s: Size) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for Size {
    type Error = GameError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Mirror axis. `Horizontal` mirrors columns (left-right), `Vertical` mirrors rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    Horizontal,
    Vertical,
}

/// Rectangular grid of tile ids, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Level {
    game: Game,
    width: usize,
    height: usize,
    cells: Vec<u8>,
}

impl Level {
    pub fn new(game: Game, width: usize, height: usize, cells: Vec<u8>) -> Result<Self, GameError> {
        if width == 0 || height == 0 || cells.len() != width * height {
            return Err(GameError::BadDimensions {
                width,
                height,
                cells: cells.len(),
            });
        }
        let n = game.num_tiles() as u8;
        if let Some(pos) = cells.iter().position(|&c| c >= n) {
            return Err(GameError::BadTile {
                row: pos / width,
                col: pos % width,
                tile: cells[pos],
            });
        }
        Ok(Self {
            game,
            width,
            height,
            cells,
        })
    }

    pub fn filled(game: Game, size: Size, tile: u8) -> Self {
        Self::new(game, size.w, size.h, vec![tile; size.area()]).expect("valid fill tile")
    }

    pub fn game(&self) -> Game {
        self.game
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn size(&self) -> Size {
        Size::new(self.width, self.height)
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, tile: u8) {
        assert!((tile as usize) < self.game.num_tiles());
        self.cells[row * self.width + col] = tile;
    }

    pub fn count(&self, tile: u8) -> usize {
        self.cells.iter().filter(|&&c| c == tile).count()
    }

    /// Parses the one-character-per-cell text format.
    pub fn parse(text: &str, game: Game) -> Result<Self, GameError> {
        let rows: Vec<&str> = text.trim_end_matches(['\n', '\r']).lines().collect();
        if rows.is_empty() {
            return Err(GameError::Empty);
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (r, row) in rows.iter().enumerate() {
            let row = row.trim_end_matches('\r');
            let len = row.chars().count();
            if len != width {
                return Err(GameError::Ragged {
                    row: r,
                    expected: width,
                    got: len,
                });
            }
            for (c, ch) in row.chars().enumerate() {
                let tile = game.tile_of(ch).ok_or(GameError::UnknownChar { row: r, col: c, ch })?;
                cells.push(tile);
            }
        }
        Self::new(game, width, rows.len(), cells)
    }

    /// Inverse of [`Level::parse`]: rows joined by `\n`, no trailing newline.
    pub fn render(&self) -> String {
        let chars = self.game.chars();
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            if r > 0 {
                out.push('\n');
            }
            for c in 0..self.width {
                out.push(chars[self.get(r, c) as usize]);
            }
        }
        out
    }

    /// Mirrors the grid along each axis in `axes`. Fails for axes the game does not allow.
    pub fn flip(&self, axes: &[Axis]) -> Result<Self, GameError> {
        for axis in axes {
            if !self.game.flip_axes().contains(axis) {
                return Err(GameError::DisallowedFlip(self.game, *axis));
            }
        }
        let mut out = self.clone();
        for axis in axes {
            out = out.mirrored(*axis);
        }
        Ok(out)
    }

    fn mirrored(&self, axis: Axis) -> Self {
        let (w, h) = (self.width, self.height);
        let cells = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| match axis {
                Axis::Horizontal => self.get(r, w - 1 - c),
                Axis::Vertical => self.get(h - 1 - r, c),
            })
            .collect();
        Self {
            cells,
            ..self.clone()
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
