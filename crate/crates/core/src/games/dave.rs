//! Danger Dave requirements, physics and solver.
//!
//! Turn-based physics. Each turn applies the horizontal part of the action
//! first, then one vertical step: rising if a jump is in progress, falling if
//! the player is unsupported. A jump lasts two rising turns, the first being the
//! turn of the jump itself; a wall above ends the rise early. Supported means a
//! wall directly below or standing on the bottom row. Spikes kill, the key is
//! collected on entry and the door ends the level only once the key is held.

use rustc_hash::FxHashMap;

use super::{Action, Analysis, Failure, Game, Level, Size};

pub const EMPTY: u8 = 0;
pub const WALL: u8 = 1;
pub const PLAYER: u8 = 2;
pub const KEY: u8 = 3;
pub const DOOR: u8 = 4;
pub const DIAMOND: u8 = 5;
pub const SPIKE: u8 = 6;

pub const DEFAULT_BUDGET: usize = 1_000_000;
pub const ACTIONS: [Action; 4] = [Action::Left, Action::Right, Action::Jump, Action::Wait];
const JUMP_HEIGHT: u8 = 2;

/// Spike counts must stay strictly below this value.
pub fn spike_limit(size: Size) -> usize {
    (size.w.saturating_sub(1)) * (size.h / 2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct State {
    pub pos: usize,
    /// Remaining rising turns.
    pub rise: u8,
    pub has_key: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Alive(State),
    Won,
    Dead,
}

struct Physics<'a> {
    cells: &'a [u8],
    w: usize,
    h: usize,
}

impl Physics<'_> {
    fn supported(&self, pos: usize) -> bool {
        pos / self.w == self.h - 1 || self.cells[pos + self.w] == WALL
    }

    /// Moves into `to` and resolves the tile there.
    fn enter(&self, mut s: State, to: usize) -> Outcome {
        s.pos = to;
        match self.cells[to] {
            SPIKE => Outcome::Dead,
            KEY => {
                s.has_key = true;
                Outcome::Alive(s)
            }
            DOOR if s.has_key => Outcome::Won,
            _ => Outcome::Alive(s),
        }
    }

    /// Cell entered by the horizontal part of `action`, if any.
    fn sideways(&self, pos: usize, action: Action) -> Option<usize> {
        let col = pos % self.w;
        let to = match action {
            Action::Left => (col > 0).then(|| pos - 1),
            Action::Right => (col + 1 < self.w).then(|| pos + 1),
            _ => None,
        };
        to.filter(|&t| self.cells[t] != WALL)
    }

    fn step(&self, s: State, action: Action) -> Option<Outcome> {
        let (w, cells) = (self.w, self.cells);
        let mut s = s;
        match action {
            Action::Jump => {
                if s.rise > 0 || !self.supported(s.pos) {
                    return None;
                }
                s.rise = JUMP_HEIGHT;
            }
            Action::Left | Action::Right => {
                if let Some(to) = self.sideways(s.pos, action) {
                    match self.enter(s, to) {
                        Outcome::Alive(next) => s = next,
                        end => return Some(end),
                    }
                }
            }
            Action::Wait => {}
            Action::Up | Action::Down => return None,
        }
        if s.rise > 0 {
            if s.pos >= w && cells[s.pos - w] != WALL {
                s.rise -= 1;
                return Some(self.enter(s, s.pos - w));
            }
            s.rise = 0;
            return Some(Outcome::Alive(s));
        }
        if !self.supported(s.pos) {
            return Some(self.enter(s, s.pos + w));
        }
        Some(Outcome::Alive(s))
    }
}

fn find(level: &Level, tile: u8) -> Option<usize> {
    level.cells().iter().position(|&c| c == tile)
}

/// Applies `actions` from the initial state. `None` if an action is invalid.
pub fn simulate(level: &Level, actions: &[Action]) -> Option<Outcome> {
    let physics = Physics {
        cells: level.cells(),
        w: level.width(),
        h: level.height(),
    };
    let mut out = Outcome::Alive(State {
        pos: find(level, PLAYER)?,
        rise: 0,
        has_key: false,
    });
    for &a in actions {
        match out {
            Outcome::Alive(s) => out = physics.step(s, a)?,
            _ => return None,
        }
    }
    Some(out)
}

pub enum SearchOutcome {
    /// Shortest solution with fewest jumps, and whether every diamond was reached.
    Solved { actions: Vec<Action>, diamonds_reached: bool },
    Unsolvable { diamonds_reached: bool },
    Budget,
}

struct Node {
    parent: Option<(State, Action)>,
    depth: usize,
    jumps: usize,
}

/// Layered BFS over (position, rise, key). Runs until a win has been found and
/// all diamonds were visited, or the state space is exhausted.
pub fn search(level: &Level, iteration_limit: usize) -> SearchOutcome {
    let (w, h) = (level.width(), level.height());
    let physics = Physics { cells: level.cells(), w, h };
    let Some(start_pos) = find(level, PLAYER) else {
        return SearchOutcome::Unsolvable { diamonds_reached: false };
    };
    let start = State {
        pos: start_pos,
        rise: 0,
        has_key: false,
    };
    let mut reached = vec![false; w * h];
    reached[start_pos] = true;
    let diamonds: Vec<usize> = (0..w * h).filter(|&i| level.cells()[i] == DIAMOND).collect();
    let all_reached = |reached: &[bool]| diamonds.iter().all(|&d| reached[d]);

    let mut nodes: FxHashMap<State, Node> = FxHashMap::default();
    nodes.insert(start, Node { parent: None, depth: 0, jumps: 0 });
    let mut layer = vec![start];
    let mut win: Option<(State, Action, usize)> = None;
    let mut expanded = 0usize;

    while !layer.is_empty() {
        if win.is_some() && all_reached(&reached) {
            break;
        }
        let depth = nodes[&layer[0]].depth;
        let mut next = Vec::new();
        let mut layer_win: Option<(State, Action, usize)> = None;
        for &s in &layer {
            expanded += 1;
            if expanded > iteration_limit {
                return SearchOutcome::Budget;
            }
            let jumps = nodes[&s].jumps;
            for a in ACTIONS {
                let Some(out) = physics.step(s, a) else { continue };
                if let Some(via) = physics.sideways(s.pos, a) {
                    reached[via] = true;
                }
                let j = jumps + usize::from(a == Action::Jump);
                match out {
                    Outcome::Dead => {}
                    Outcome::Won => {
                        if win.is_none() && layer_win.is_none_or(|(_, _, best)| j < best) {
                            layer_win = Some((s, a, j));
                        }
                    }
                    Outcome::Alive(n) => {
                        reached[n.pos] = true;
                        match nodes.get_mut(&n) {
                            None => {
                                nodes.insert(n, Node { parent: Some((s, a)), depth: depth + 1, jumps: j });
                                next.push(n);
                            }
                            Some(node) if node.depth == depth + 1 && j < node.jumps => {
                                node.jumps = j;
                                node.parent = Some((s, a));
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        }
        if win.is_none() {
            win = layer_win;
        }
        layer = next;
    }

    let diamonds_reached = all_reached(&reached);
    match win {
        None => SearchOutcome::Unsolvable { diamonds_reached },
        Some((last, action, _)) => {
            let mut actions = vec![action];
            let mut cur = last;
            while let Some((p, a)) = nodes[&cur].parent {
                actions.push(a);
                cur = p;
            }
            actions.reverse();
            SearchOutcome::Solved { actions, diamonds_reached }
        }
    }
}

fn check_requirements(level: &Level) -> Result<(), &'static str> {
    let singles = [(PLAYER, "exactly one player"), (KEY, "exactly one key"), (DOOR, "exactly one door")];
    for (tile, msg) in singles {
        if level.count(tile) != 1 {
            return Err(msg);
        }
    }
    let (w, h) = (level.width(), level.height());
    let physics = Physics { cells: level.cells(), w, h };
    if !physics.supported(find(level, PLAYER).unwrap()) {
        return Err("player starts on the ground");
    }
    if level.count(SPIKE) >= spike_limit(level.size()) {
        return Err("spike count below (w-1)*floor(h/2)");
    }
    let diamonds = level.count(DIAMOND);
    if diamonds < 1 || diamonds > w.max(h) {
        return Err("diamond count in [1, max(w, h)]");
    }
    Ok(())
}

/// Requirements and properties (`solution_length`, `jumps`, `spikes`).
pub fn analyze(level: &Level, iteration_limit: usize) -> Analysis {
    debug_assert_eq!(level.game(), Game::DangerDave);
    let mut props = vec![None, None, Some(level.count(SPIKE) as f64)];
    if let Err(msg) = check_requirements(level) {
        return Analysis::unplayable(Failure::Requirement(msg), props);
    }
    match search(level, iteration_limit) {
        SearchOutcome::Budget => Analysis::unplayable(Failure::Budget, props),
        SearchOutcome::Unsolvable { .. } => Analysis::unplayable(Failure::Unsolvable, props),
        SearchOutcome::Solved { actions, diamonds_reached } => {
            props[0] = Some(actions.len() as f64);
            props[1] = Some(actions.iter().filter(|&&a| a == Action::Jump).count() as f64);
            if !diamonds_reached {
                return Analysis::unplayable(Failure::Requirement("all diamonds reachable"), props);
            }
            Analysis {
                playable: true,
                properties: props,
                solution: Some(actions),
                failure: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::actions_to_string;

    fn lvl(s: &str) -> Level {
        Level::parse(s, Game::DangerDave).unwrap()
    }

    #[test]
    fn flat_run() {
        let a = analyze(&lvl(".....\nA+.$g\n#####"), DEFAULT_BUDGET);
        assert!(a.playable);
        assert_eq!(a.properties, vec![Some(4.0), Some(0.0), Some(0.0)]);
        assert_eq!(actions_to_string(a.solution.as_deref().unwrap()), "RRRR");
    }

    #[test]
    fn floating_player_is_unplayable() {
        let a = analyze(&lvl("A+$g\n....\n####"), DEFAULT_BUDGET);
        assert_eq!(a.failure, Some(Failure::Requirement("player starts on the ground")));
    }

    #[test]
    fn bottom_row_counts_as_ground() {
        assert!(analyze(&lvl("....\nA+$g"), DEFAULT_BUDGET).playable);
    }

    #[test]
    fn zero_diamonds_unplayable() {
        assert!(!analyze(&lvl(".....\nA+..g\n#####"), DEFAULT_BUDGET).playable);
    }

    #[test]
    fn jump_over_spike() {
        // spike between the player and the key
        let a = analyze(&lvl(".....\n.....\nA^+$g"), DEFAULT_BUDGET);
        assert!(a.playable);
        let sol = a.solution.unwrap();
        assert_eq!(sol.len(), 6);
        assert_eq!(a.properties[1], Some(1.0));
        assert_eq!(simulate(&lvl(".....\n.....\nA^+$g"), &sol), Some(Outcome::Won));
    }

    #[test]
    fn jump_only_when_supported() {
        let level = lvl("...\n...\nA+g\n$..");
        let physics = Physics { cells: level.cells(), w: 3, h: 4 };
        let s = State { pos: 4, rise: 0, has_key: false };
        assert!(physics.step(s, Action::Jump).is_none());
    }

    #[test]
    fn walls_end_the_rise() {
        let level = lvl("###\n...\nA+g\n###");
        let after = simulate(&level, &[Action::Jump]).unwrap();
        assert_eq!(after, Outcome::Alive(State { pos: 3, rise: 1, has_key: false }));
        let after = simulate(&level, &[Action::Jump, Action::Wait]).unwrap();
        assert_eq!(after, Outcome::Alive(State { pos: 3, rise: 0, has_key: false }));
        let after = simulate(&level, &[Action::Jump, Action::Wait, Action::Wait]).unwrap();
        assert_eq!(after, Outcome::Alive(State { pos: 6, rise: 0, has_key: false }));
    }

    #[test]
    fn door_needs_key() {
        // the door is passable without the key
        let a = analyze(&lvl("....\nAg+$\n####"), DEFAULT_BUDGET);
        assert!(a.playable);
        assert_eq!(actions_to_string(&a.solution.unwrap()), "RRL");
    }

    #[test]
    fn unreachable_diamond_fails() {
        let a = analyze(&lvl("$#...\n##...\nA+..g\n#####"), DEFAULT_BUDGET);
        assert_eq!(a.failure, Some(Failure::Requirement("all diamonds reachable")));
    }

    #[test]
    fn diamonds_passed_mid_air_count_as_reached() {
        // the diamond hangs above the gap and can only be touched while falling
        let a = analyze(&lvl("....\nA$..\n#..#\n#+g#"), DEFAULT_BUDGET);
        assert!(a.playable, "{:?}", a.failure);
    }

    #[test]
    fn tiny_budget_reports_budget() {
        let a = analyze(&lvl(".....\nA+.$g\n#####"), 2);
        assert_eq!(a.failure, Some(Failure::Budget));
    }

    #[test]
    fn spike_limit_values() {
        assert_eq!(spike_limit(Size::new(7, 11)), 30);
        assert_eq!(spike_limit(Size::new(3, 4)), 4);
    }
}
