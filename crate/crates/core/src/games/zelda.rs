//! Zelda requirements and path measurements.
//!
//! Paths are static: walls and the door block movement, every other tile
//! (including enemies) is walkable. The player→key leg may not cross the door;
//! the key→door leg ends on the door.

use std::collections::VecDeque;

use super::{step, Analysis, Failure, Game, Level, MOVES};

pub const EMPTY: u8 = 0;
pub const WALL: u8 = 1;
pub const PLAYER: u8 = 2;
pub const KEY: u8 = 3;
pub const DOOR: u8 = 4;
pub const BAT: u8 = 5;
pub const SPIDER: u8 = 6;
pub const SCORPION: u8 = 7;

pub fn is_enemy(tile: u8) -> bool {
    matches!(tile, BAT | SPIDER | SCORPION)
}

/// BFS distances from `start`; `target` may be entered even if it blocks.
fn distances(level: &Level, start: usize, target: Option<usize>) -> Vec<Option<usize>> {
    let (w, h) = (level.width(), level.height());
    let cells = level.cells();
    let mut dist = vec![None; w * h];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        if Some(p) == target && p != start {
            continue;
        }
        let d = dist[p].unwrap();
        for a in MOVES {
            let Some(n) = step(p, w, h, a.delta()) else { continue };
            if dist[n].is_some() {
                continue;
            }
            let blocked = matches!(cells[n], WALL | DOOR);
            if blocked && Some(n) != target {
                continue;
            }
            dist[n] = Some(d + 1);
            queue.push_back(n);
        }
    }
    dist
}

fn find(level: &Level, tile: u8) -> Option<usize> {
    level.cells().iter().position(|&c| c == tile)
}

/// Requirements and properties (`nearest_enemy`, `path_length`, `enemies`).
pub fn analyze(level: &Level) -> Analysis {
    debug_assert_eq!(level.game(), Game::Zelda);
    let enemies = level.cells().iter().filter(|&&c| is_enemy(c)).count();
    let enemy_prop = Some(enemies as f64);
    let mut props = vec![None, None, enemy_prop];

    let singles = [(PLAYER, "exactly one player"), (KEY, "exactly one key"), (DOOR, "exactly one door")];
    for (tile, msg) in singles {
        if level.count(tile) != 1 {
            return Analysis::unplayable(Failure::Requirement(msg), props);
        }
    }
    let player = find(level, PLAYER).unwrap();
    let key = find(level, KEY).unwrap();
    let door = find(level, DOOR).unwrap();

    let from_player = distances(level, player, None);
    let enemy_dists: Vec<Option<usize>> = level
        .cells()
        .iter()
        .enumerate()
        .filter(|(_, &c)| is_enemy(c))
        .map(|(i, _)| from_player[i])
        .collect();
    if let Some(nearest) = enemy_dists.iter().flatten().min() {
        props[0] = Some(*nearest as f64);
    }
    let to_key = from_player[key];
    let to_door = distances(level, key, Some(door))[door];
    if let (Some(a), Some(b)) = (to_key, to_door) {
        props[1] = Some((a + b) as f64);
    }

    let max_side = level.width().max(level.height());
    if enemies < 1 || enemies > max_side {
        return Analysis::unplayable(Failure::Requirement("enemy count in [1, max(w, h)]"), props);
    }
    if to_key.is_none() || to_door.is_none() {
        return Analysis::unplayable(Failure::Requirement("path from player to key to door"), props);
    }
    if enemy_dists.iter().any(|d| d.is_none()) {
        return Analysis::unplayable(Failure::Requirement("every enemy reaches the player"), props);
    }
    Analysis {
        playable: true,
        properties: props,
        solution: None,
        failure: None,
    }
}
