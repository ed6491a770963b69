//! Sokoban requirements, breadth-first solver and solution signatures.

use rustc_hash::FxHashSet;
use smallvec::SmallVec;

use super::{step, Action, Analysis, Failure, Game, GameError, Level, Size, MOVES};

pub const EMPTY: u8 = 0;
pub const WALL: u8 = 1;
pub const PLAYER: u8 = 2;
pub const CRATE: u8 = 3;
pub const GOAL: u8 = 4;
pub const CRATE_ON_GOAL: u8 = 5;
pub const PLAYER_ON_GOAL: u8 = 6;

/// Expanded-state limit for a level of the given size.
pub fn budget_for(size: Size) -> usize {
    match size.area() {
        0..=9 => 500,
        10..=16 => 50_000,
        17..=25 => 500_000,
        _ => 1_000_000,
    }
}

type Crates = SmallVec<[u16; 8]>;

/// Static layout extracted from a level.
struct Board {
    w: usize,
    h: usize,
    wall: Vec<bool>,
    goal: Vec<bool>,
    /// Cells from which a crate can still be pushed onto some goal.
    live: Vec<bool>,
    player: usize,
    crates: Crates,
}

impl Board {
    fn new(level: &Level) -> Self {
        let (w, h) = (level.width(), level.height());
        let cells = level.cells();
        let wall: Vec<bool> = cells.iter().map(|&c| c == WALL).collect();
        let goal: Vec<bool> = cells
            .iter()
            .map(|&c| matches!(c, GOAL | CRATE_ON_GOAL | PLAYER_ON_GOAL))
            .collect();
        let player = cells
            .iter()
            .position(|&c| c == PLAYER || c == PLAYER_ON_GOAL)
            .unwrap_or(0);
        let crates: Crates = cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == CRATE || c == CRATE_ON_GOAL)
            .map(|(i, _)| i as u16)
            .collect();
        let live = live_cells(w, h, &wall, &goal);
        Self {
            w,
            h,
            wall,
            goal,
            live,
            player,
            crates,
        }
    }

    fn open(&self, pos: usize) -> bool {
        !self.wall[pos]
    }

    fn solved(&self, crates: &Crates) -> bool {
        crates.iter().all(|&c| self.goal[c as usize])
    }
}

/// Reverse "pull" search from the goals: a crate on a cell outside this set can
/// never reach a goal.
fn live_cells(w: usize, h: usize, wall: &[bool], goal: &[bool]) -> Vec<bool> {
    let mut live = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| goal[i] && !wall[i]).collect();
    for &g in &stack {
        live[g] = true;
    }
    while let Some(b) = stack.pop() {
        for a in MOVES {
            let (dr, dc) = a.delta();
            // crate came from b - d, pushed by a player standing at b - 2d
            let Some(from) = step(b, w, h, (-dr, -dc)) else { continue };
            let Some(player) = step(from, w, h, (-dr, -dc)) else { continue };
            if !wall[from] && !wall[player] && !live[from] {
                live[from] = true;
                stack.push(from);
            }
        }
    }
    live
}

/// Outcome of a bounded search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    Solved(Vec<Action>),
    Unsolvable,
    Budget,
}

impl SolveOutcome {
    pub fn solution(self) -> Option<Vec<Action>> {
        match self {
            SolveOutcome::Solved(s) => Some(s),
            _ => None,
        }
    }
}

struct SearchNode {
    player: u16,
    crates: Crates,
    parent: u32,
    action: Action,
}

/// Shortest solution in player moves, expanding at most `iteration_limit` states.
/// Returns the empty path when every crate already sits on a goal.
pub fn solve(level: &Level, iteration_limit: usize) -> SolveOutcome {
    let board = Board::new(level);
    if board.solved(&board.crates) {
        return SolveOutcome::Solved(Vec::new());
    }
    let (w, h) = (board.w, board.h);
    let mut nodes = vec![SearchNode {
        player: board.player as u16,
        crates: board.crates.clone(),
        parent: u32::MAX,
        action: Action::Wait,
    }];
    let mut seen: FxHashSet<(u16, Crates)> = FxHashSet::default();
    seen.insert((board.player as u16, board.crates.clone()));
    let mut head = 0;
    let mut expanded = 0;
    while head < nodes.len() {
        if expanded >= iteration_limit {
            return SolveOutcome::Budget;
        }
        expanded += 1;
        let idx = head;
        head += 1;
        let player = nodes[idx].player as usize;
        for action in MOVES {
            let delta = action.delta();
            let Some(next) = step(player, w, h, delta) else { continue };
            if !board.open(next) {
                continue;
            }
            let mut crates = nodes[idx].crates.clone();
            if let Some(ci) = crates.iter().position(|&c| c as usize == next) {
                let Some(dest) = step(next, w, h, delta) else { continue };
                if !board.open(dest) || !board.live[dest] || crates.contains(&(dest as u16)) {
                    continue;
                }
                crates[ci] = dest as u16;
                crates.sort_unstable();
            }
            let key = (next as u16, crates);
            if seen.contains(&key) {
                continue;
            }
            let (player_next, crates) = key;
            seen.insert((player_next, crates.clone()));
            let won = board.solved(&crates);
            nodes.push(SearchNode {
                player: player_next,
                crates,
                parent: idx as u32,
                action,
            });
            if won {
                let mut path = Vec::new();
                let mut cur = nodes.len() - 1;
                while nodes[cur].parent != u32::MAX {
                    path.push(nodes[cur].action);
                    cur = nodes[cur].parent as usize;
                }
                path.reverse();
                return SolveOutcome::Solved(path);
            }
        }
    }
    SolveOutcome::Unsolvable
}

/// Functional requirements other than solvability; `Err` names the failed one.
pub fn check_requirements(level: &Level) -> Result<(), &'static str> {
    let players = level.count(PLAYER) + level.count(PLAYER_ON_GOAL);
    if players != 1 {
        return Err("exactly one player");
    }
    let crates = level.count(CRATE) + level.count(CRATE_ON_GOAL);
    let goals = level.count(GOAL) + level.count(CRATE_ON_GOAL) + level.count(PLAYER_ON_GOAL);
    if crates != goals {
        return Err("crate count equals goal count");
    }
    if level.count(CRATE) == 0 {
        return Err("at least one crate off a goal");
    }
    Ok(())
}

/// One push of the solution: the crate (indexed by its initial cell in row-major
/// order) and the push direction.
pub type Push = (usize, Action);

/// Replays `solution` and returns every push in order.
pub fn replay_pushes(level: &Level, solution: &[Action]) -> Result<Vec<Push>, GameError> {
    let board = Board::new(level);
    let (w, h) = (board.w, board.h);
    let mut crates: Vec<usize> = board.crates.iter().map(|&c| c as usize).collect();
    let mut player = board.player;
    let mut pushes = Vec::new();
    for &action in solution {
        let delta = action.delta();
        if delta == (0, 0) {
            return Err(GameError::InvalidSolution);
        }
        let next = step(player, w, h, delta).ok_or(GameError::InvalidSolution)?;
        if !board.open(next) {
            return Err(GameError::InvalidSolution);
        }
        if let Some(ci) = crates.iter().position(|&c| c == next) {
            let dest = step(next, w, h, delta).ok_or(GameError::InvalidSolution)?;
            if !board.open(dest) || crates.contains(&dest) {
                return Err(GameError::InvalidSolution);
            }
            crates[ci] = dest;
            pushes.push((ci, action));
        }
        player = next;
    }
    if crates.iter().all(|&c| board.goal[c]) {
        Ok(pushes)
    } else {
        Err(GameError::InvalidSolution)
    }
}

/// Push segments of a solution with consecutive same-crate, same-direction pushes
/// collapsed into one.
pub fn solution_signature(level: &Level, solution: &[Action]) -> Result<Vec<Push>, GameError> {
    let mut sig: Vec<Push> = replay_pushes(level, solution)?;
    sig.dedup();
    Ok(sig)
}

/// Number of distinct crates moved by a solution.
pub fn pushed_crates(level: &Level, solution: &[Action]) -> Result<usize, GameError> {
    let pushes = replay_pushes(level, solution)?;
    let mut ids: Vec<usize> = pushes.into_iter().map(|(c, _)| c).collect();
    ids.sort_unstable();
    ids.dedup();
    Ok(ids.len())
}

/// Requirements, solver verdict and measured properties
/// (`pushed_crates`, `solution_length`).
pub fn analyze(level: &Level, budget: usize) -> Analysis {
    debug_assert_eq!(level.game(), Game::Sokoban);
    let none = vec![None; 2];
    if let Err(req) = check_requirements(level) {
        return Analysis::unplayable(Failure::Requirement(req), none);
    }
    match solve(level, budget) {
        SolveOutcome::Solved(solution) => {
            let pushed = pushed_crates(level, &solution).expect("solver output replays") as f64;
            Analysis {
                playable: true,
                properties: vec![Some(pushed), Some(solution.len() as f64)],
                solution: Some(solution),
                failure: None,
            }
        }
        SolveOutcome::Unsolvable => Analysis::unplayable(Failure::Unsolvable, none),
        SolveOutcome::Budget => Analysis::unplayable(Failure::Budget, none),
    }
}
