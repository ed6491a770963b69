//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod gradcheck;

use std::collections::HashMap;

use gfn_levels::games::{Game, Level};
use gfn_levels::numerics::{ParamStore, Tensor};
use rand::Rng;

/// Central finite difference with step `h`.
pub fn central_diff(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with a small floor so that vanishing gradients compare in
/// absolute terms.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Numerical gradient of `loss` with respect to every coordinate of every
/// parameter in `store`.
pub fn numeric_param_grads(store: &ParamStore, h: f64, loss: impl Fn(&ParamStore) -> f64) -> Vec<Tensor> {
    let mut work = store.clone();
    let mut out = Vec::new();
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = work.get(id).len();
        let mut g = Tensor::zeros(work.get(id).shape());
        for i in 0..n {
            let orig = work.get(id).data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = loss(&work);
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = loss(&work);
            work.get_mut(id).data_mut()[i] = orig;
            g.data_mut()[i] = (up - down) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Mean pairwise Hamming distance over area, by direct pair enumeration.
pub fn brute_force_diversity(levels: &[Level]) -> f64 {
    let area = levels[0].size().area() as f64;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..levels.len() {
        for j in i + 1..levels.len() {
            let d = levels[i]
                .cells()
                .iter()
                .zip(levels[j].cells())
                .filter(|(a, b)| a != b)
                .count();
            total += d as f64 / area;
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Exhaustive depth-first Sokoban search: explores every move sequence, pruning
/// a state only when it was already reached with no more moves, and returns
/// the fewest moves that put every crate on a goal.
pub fn sokoban_dfs_optimum(level: &Level, max_moves: usize) -> Option<usize> {
    assert_eq!(level.game(), Game::Sokoban);
    let (w, h) = (level.width() as isize, level.height() as isize);
    let cells = level.cells();
    let wall: Vec<bool> = cells.iter().map(|&c| c == 1).collect();
    let goal: Vec<bool> = cells.iter().map(|&c| c == 4 || c == 5 || c == 6).collect();
    let player = cells.iter().position(|&c| c == 2 || c == 6)?;
    let crates: Vec<bool> = cells.iter().map(|&c| c == 3 || c == 5).collect();

    struct Search<'a> {
        w: isize,
        h: isize,
        wall: &'a [bool],
        goal: &'a [bool],
        seen: HashMap<(usize, Vec<bool>), usize>,
        best: usize,
    }
    impl Search<'_> {
        fn cell(&self, pos: usize, dr: isize, dc: isize) -> Option<usize> {
            let r = pos as isize / self.w + dr;
            let c = pos as isize % self.w + dc;
            (r >= 0 && c >= 0 && r < self.h && c < self.w).then(|| (r * self.w + c) as usize)
        }
        fn go(&mut self, player: usize, crates: &mut Vec<bool>, depth: usize) {
            if depth >= self.best {
                return;
            }
            if crates.iter().zip(self.goal).all(|(c, g)| !c || *g) {
                self.best = depth;
                return;
            }
            let key = (player, crates.clone());
            if let Some(&d) = self.seen.get(&key) {
                if d <= depth {
                    return;
                }
            }
            self.seen.insert(key, depth);
            for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                let Some(next) = self.cell(player, dr, dc) else { continue };
                if self.wall[next] {
                    continue;
                }
                if crates[next] {
                    let Some(beyond) = self.cell(next, dr, dc) else { continue };
                    if self.wall[beyond] || crates[beyond] {
                        continue;
                    }
                    crates[next] = false;
                    crates[beyond] = true;
                    self.go(next, crates, depth + 1);
                    crates[beyond] = false;
                    crates[next] = true;
                } else {
                    self.go(next, crates, depth + 1);
                }
            }
        }
    }
    let mut s = Search {
        w,
        h,
        wall: &wall,
        goal: &goal,
        seen: HashMap::new(),
        best: max_moves + 1,
    };
    let mut crates = crates;
    s.go(player, &mut crates, 0);
    (s.best <= max_moves).then_some(s.best)
}

/// Random Sokoban level: walls with probability `p_wall`, one player and
/// `crates` crate/goal pairs on distinct free cells.
pub fn random_sokoban<R: Rng>(rng: &mut R, w: usize, h: usize, p_wall: f64, crates: usize) -> Option<Level> {
    let n = w * h;
    let mut cells: Vec<u8> = (0..n).map(|_| if rng.random_bool(p_wall) { 1 } else { 0 }).collect();
    let mut free: Vec<usize> = (0..n).filter(|&i| cells[i] == 0).collect();
    if free.len() < 1 + 2 * crates {
        return None;
    }
    for i in (1..free.len()).rev() {
        let j = rng.random_range(0..=i);
        free.swap(i, j);
    }
    cells[free[0]] = 2;
    for k in 0..crates {
        cells[free[1 + 2 * k]] = 3;
        cells[free[2 + 2 * k]] = 4;
    }
    Level::new(Game::Sokoban, w, h, cells).ok()
}

/// Uniformly random grid over the game's whole tile alphabet.
pub fn uniform_level<R: Rng>(rng: &mut R, game: Game, w: usize, h: usize) -> Level {
    let a = game.num_tiles() as u8;
    Level::new(game, w, h, (0..w * h).map(|_| rng.random_range(0..a)).collect()).unwrap()
}

/// Kolmogorov–Smirnov distance between two samples.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Two-component, two-dimensional mixture with correlated components.
pub fn mixture_2d() -> gfn_levels::condmodel::Gmm {
    gfn_levels::condmodel::Gmm {
        labels: vec!["a".into(), "b".into()],
        size: None,
        weights: vec![0.35, 0.65],
        means: vec![vec![0.0, 1.0], vec![1.5, -1.0]],
        covs: vec![vec![1.0, 0.6, 0.6, 0.8], vec![0.7, -0.3, -0.3, 0.5]],
    }
}

/// Draws from a two-dimensional mixture with a hand-rolled 2×2 Cholesky factor.
pub fn draw_2d<R: Rng>(g: &gfn_levels::condmodel::Gmm, rng: &mut R) -> [f64; 2] {
    let u: f64 = rng.random::<f64>() * g.weights.iter().sum::<f64>();
    let mut k = 0;
    let mut acc = g.weights[0];
    while u >= acc && k + 1 < g.weights.len() {
        k += 1;
        acc += g.weights[k];
    }
    let c = &g.covs[k];
    let l11 = c[0].sqrt();
    let l21 = c[2] / l11;
    let l22 = (c[3] - l21 * l21).sqrt();
    let z0: f64 = rng.sample(rand_distr::StandardNormal);
    let z1: f64 = rng.sample(rand_distr::StandardNormal);
    [g.means[k][0] + l11 * z0, g.means[k][1] + l21 * z0 + l22 * z1]
}

/// Samples of dimension 1 given dimension 0 within `delta` of `value`, by
/// rejection from the joint.
pub fn rejection_conditional<R: Rng>(
    g: &gfn_levels::condmodel::Gmm,
    value: f64,
    delta: f64,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let [a, b] = draw_2d(g, rng);
        if (a - value).abs() < delta {
            out.push(b);
        }
    }
    out
}
