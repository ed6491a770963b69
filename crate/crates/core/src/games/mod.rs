//! Level representation, tilesets, analyzers and control definitions for the
//! three supported games.

mod controls;
pub mod dave;
mod level;
pub mod sokoban;
pub mod zelda;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use controls::{cluster_key, measure_controls, ClusterKey, ControlSpec, Denominator};
pub use level::{Axis, Level, Size};

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("level text is empty")]
    Empty,
    #[error("row {row} has {got} cells, expected {expected}")]
    Ragged { row: usize, expected: usize, got: usize },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { row: usize, col: usize, ch: char },
    #[error("tile id {tile} at row {row}, column {col} is outside the tileset")]
    BadTile { row: usize, col: usize, tile: u8 },
    #[error("{width}x{height} level cannot hold {cells} cells")]
    BadDimensions { width: usize, height: usize, cells: usize },
    #[error("invalid size {0:?}, expected WxH")]
    BadSize(String),
    #[error("unknown game {0:?}")]
    UnknownGame(String),
    #[error("{0} levels cannot be flipped along {1:?}")]
    DisallowedFlip(Game, Axis),
    #[error("level is not playable, control `{0}` is unavailable")]
    MissingProperty(&'static str),
    #[error("solution does not solve the level")]
    InvalidSolution,
    #[error("expected a {expected} level, got {got}")]
    WrongGame { expected: Game, got: Game },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Game {
    Sokoban,
    Zelda,
    DangerDave,
}

/// One entry of a tileset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tile {
    pub id: u8,
    pub name: &'static str,
    pub ch: char,
}

const SOKOBAN_TILES: [Tile; 7] = [
    Tile { id: 0, name: "empty", ch: ' ' },
    Tile { id: 1, name: "wall", ch: '#' },
    Tile { id: 2, name: "player", ch: '@' },
    Tile { id: 3, name: "crate", ch: '$' },
    Tile { id: 4, name: "goal", ch: '.' },
    Tile { id: 5, name: "crate on goal", ch: '*' },
    Tile { id: 6, name: "player on goal", ch: '+' },
];

const ZELDA_TILES: [Tile; 8] = [
    Tile { id: 0, name: "empty", ch: '.' },
    Tile { id: 1, name: "wall", ch: 'w' },
    Tile { id: 2, name: "player", ch: 'A' },
    Tile { id: 3, name: "key", ch: '+' },
    Tile { id: 4, name: "door", ch: 'g' },
    Tile { id: 5, name: "bat", ch: '1' },
    Tile { id: 6, name: "spider", ch: '2' },
    Tile { id: 7, name: "scorpion", ch: '3' },
];

const DAVE_TILES: [Tile; 7] = [
    Tile { id: 0, name: "empty", ch: '.' },
    Tile { id: 1, name: "wall", ch: '#' },
    Tile { id: 2, name: "player", ch: 'A' },
    Tile { id: 3, name: "key", ch: '+' },
    Tile { id: 4, name: "door", ch: 'g' },
    Tile { id: 5, name: "diamond", ch: '$' },
    Tile { id: 6, name: "spike", ch: '^' },
];

impl Game {
    pub const ALL: [Game; 3] = [Game::Sokoban, Game::Zelda, Game::DangerDave];

    pub fn name(self) -> &'static str {
        match self {
            Game::Sokoban => "sokoban",
            Game::Zelda => "zelda",
            Game::DangerDave => "dave",
        }
    }

    pub fn tileset(self) -> &'static [Tile] {
        match self {
            Game::Sokoban => &SOKOBAN_TILES,
            Game::Zelda => &ZELDA_TILES,
            Game::DangerDave => &DAVE_TILES,
        }
    }

    pub fn num_tiles(self) -> usize {
        self.tileset().len()
    }

    pub fn chars(self) -> Vec<char> {
        self.tileset().iter().map(|t| t.ch).collect()
    }

    pub fn tile_of(self, ch: char) -> Option<u8> {
        self.tileset().iter().find(|t| t.ch == ch).map(|t| t.id)
    }

    pub fn flip_axes(self) -> &'static [Axis] {
        match self {
            Game::Sokoban | Game::Zelda => &[Axis::Horizontal, Axis::Vertical],
            Game::DangerDave => &[Axis::Horizontal],
        }
    }

    pub fn controls(self) -> &'static [ControlSpec] {
        controls::specs(self)
    }

    pub fn control_index(self, name: &str) -> Option<usize> {
        self.controls().iter().position(|c| c.name == name)
    }

    /// Control whose logarithm is used as the property reward, if any.
    pub fn property_reward_control(self) -> Option<usize> {
        match self {
            Game::Sokoban => self.control_index("solution_length"),
            Game::Zelda => self.control_index("path_length"),
            Game::DangerDave => None,
        }
    }

    /// Search budget (expanded states) used by the game's solver at `size`.
    pub fn solver_budget(self, size: Size) -> usize {
        match self {
            Game::Sokoban => sokoban::budget_for(size),
            Game::Zelda => usize::MAX,
            Game::DangerDave => dave::DEFAULT_BUDGET,
        }
    }

    /// Checks functional requirements, solves and measures with the default budget.
    pub fn analyze(self, level: &Level) -> Analysis {
        debug_assert_eq!(level.game(), self);
        match self {
            Game::Sokoban => sokoban::analyze(level, self.solver_budget(level.size())),
            Game::Zelda => zelda::analyze(level),
            Game::DangerDave => dave::analyze(level, self.solver_budget(level.size())),
        }
    }

    /// Sizes used for training and testing in the reference experiments.
    pub fn preset_sizes(self) -> PresetSizes {
        match self {
            Game::Sokoban => PresetSizes {
                seed: vec![Size::new(3, 3)],
                intermediate: vec![Size::new(4, 4), Size::new(5, 5), Size::new(6, 6)],
                desired: vec![Size::new(7, 7)],
                test_only: vec![Size::new(8, 8), Size::new(9, 9)],
            },
            Game::Zelda | Game::DangerDave => PresetSizes {
                seed: vec![Size::new(3, 4)],
                intermediate: vec![Size::new(3, 6), Size::new(5, 4), Size::new(5, 6), Size::new(7, 6), Size::new(5, 11)],
                desired: vec![Size::new(7, 11)],
                test_only: vec![Size::new(6, 10), Size::new(10, 6), Size::new(8, 12), Size::new(9, 13)],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresetSizes {
    pub seed: Vec<Size>,
    pub intermediate: Vec<Size>,
    pub desired: Vec<Size>,
    pub test_only: Vec<Size>,
}

impl fmt::Display for Game {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Game {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "sokoban" => Ok(Game::Sokoban),
            "zelda" => Ok(Game::Zelda),
            "dave" | "dangerdave" => Ok(Game::DangerDave),
            _ => Err(GameError::UnknownGame(s.to_string())),
        }
    }
}

impl From<Game> for String {
    fn from(g: Game) -> String {
        g.name().to_string()
    }
}

impl TryFrom<String> for Game {
    type Error = GameError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Player action. Sokoban and Zelda use the four moves; Danger Dave adds
/// `Jump` and `Wait`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Jump,
    Wait,
}

impl Action {
    pub fn as_char(self) -> char {
        match self {
            Action::Up => 'U',
            Action::Down => 'D',
            Action::Left => 'L',
            Action::Right => 'R',
            Action::Jump => 'J',
            Action::Wait => 'W',
        }
    }

    /// Row/column step of a move action.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
            Action::Jump | Action::Wait => (0, 0),
        }
    }
}

pub fn actions_to_string(actions: &[Action]) -> String {
    actions.iter().map(|a| a.as_char()).collect()
}

/// Why a level was judged unplayable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Failure {
    /// A functional requirement other than solvability failed.
    Requirement(&'static str),
    /// The search finished without reaching a win.
    Unsolvable,
    /// The search budget ran out before a verdict.
    Budget,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Requirement(r) => write!(f, "requirements: {r}"),
            Failure::Unsolvable => f.write_str("unsolvable"),
            Failure::Budget => f.write_str("budget exhausted"),
        }
    }
}

/// Verdict and measured properties of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct Analysis {
    pub playable: bool,
    /// Measured value per control of the game, in the order of [`Game::controls`].
    /// `None` when the value cannot be computed for this level.
    pub properties: Vec<Option<f64>>,
    pub solution: Option<Vec<Action>>,
    pub failure: Option<Failure>,
}

impl Analysis {
    pub fn unplayable(failure: Failure, properties: Vec<Option<f64>>) -> Self {
        Self {
            playable: false,
            properties,
            solution: None,
            failure: Some(failure),
        }
    }

    pub fn property(&self, game: Game, name: &str) -> Option<f64> {
        game.control_index(name).and_then(|i| self.properties[i])
    }

    /// All properties, if every one is available.
    pub fn complete_properties(&self) -> Option<Vec<f64>> {
        self.properties.iter().copied().collect()
    }
}

/// Row/column neighbour inside a `w × h` grid.
pub(crate) fn step(pos: usize, w: usize, h: usize, (dr, dc): (isize, isize)) -> Option<usize> {
    let r = (pos / w) as isize + dr;
    let c = (pos % w) as isize + dc;
    if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
        None
    } else {
        Some(r as usize * w + c as usize)
    }
}

pub(crate) const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
