use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Analysis, Game, GameError, Level, Size};

/// Size-dependent normalizer of a control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Denominator {
    /// `(w + h) / 2`
    HalfPerimeter,
    /// `w · h`
    Area,
    /// `max(w, h)`
    MaxSide,
}

impl Denominator {
    pub fn value(self, size: Size) -> f64 {
        let (w, h) = (size.w as f64, size.h as f64);
        match self {
            Denominator::HalfPerimeter => (w + h) / 2.0,
            Denominator::Area => w * h,
            Denominator::MaxSide => w.max(h),
        }
    }
}

impl fmt::Display for Denominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Denominator::HalfPerimeter => "(w+h)/2",
            Denominator::Area => "w*h",
            Denominator::MaxSide => "max(w,h)",
        })
    }
}

/// A user-facing level property the generator is conditioned on.
#[derive(Clone, Copy, Debug)]
pub struct ControlSpec {
    pub name: &'static str,
    pub den: Denominator,
    /// Training noise `z_s ~ U[lo, hi]`, in property units.
    pub noise: (f64, f64),
    /// Inclusive clamp bounds after rounding.
    pub bounds: fn(Size) -> (f64, f64),
    /// Levels generated per tested value.
    pub n_test: usize,
    /// Inclusive range of tested values.
    pub test_values: fn(Size) -> (i64, i64),
    /// Accepted absolute error for the control score.
    pub tolerance: f64,
}

impl ControlSpec {
    pub fn normalize(&self, value: f64, size: Size) -> f64 {
        value / self.den.value(size)
    }

    pub fn denormalize(&self, value: f64, size: Size) -> f64 {
        value * self.den.value(size)
    }

    /// Rounds to the nearest integer and clamps into the control's bounds.
    pub fn snap(&self, value: f64, size: Size) -> f64 {
        let (lo, hi) = (self.bounds)(size);
        let v = if value.is_finite() { value.round() } else { lo };
        v.clamp(lo, hi)
    }

    pub fn test_grid(&self, size: Size) -> Vec<i64> {
        let (lo, hi) = (self.test_values)(size);
        (lo..=hi).collect()
    }
}

fn wh(s: Size) -> f64 {
    s.area() as f64
}

fn max_side(s: Size) -> f64 {
    s.w.max(s.h) as f64
}

const SOKOBAN: [ControlSpec; 2] = [
    ControlSpec {
        name: "pushed_crates",
        den: Denominator::HalfPerimeter,
        noise: (-1.0, 1.0),
        bounds: |s| (1.0, (wh(s) - 2.0).max(1.0)),
        n_test: 1000,
        test_values: |_| (1, 10),
        tolerance: 2.0,
    },
    ControlSpec {
        name: "solution_length",
        den: Denominator::Area,
        noise: (-5.0, 10.0),
        bounds: |_| (1.0, f64::INFINITY),
        n_test: 100,
        test_values: |_| (1, 100),
        tolerance: 10.0,
    },
];

const ZELDA: [ControlSpec; 3] = [
    ControlSpec {
        name: "nearest_enemy",
        den: Denominator::Area,
        noise: (-2.0, 5.0),
        bounds: |s| (1.0, wh(s)),
        n_test: 100,
        test_values: |s| (1, (s.area() / 2).max(1) as i64),
        tolerance: 0.0,
    },
    ControlSpec {
        name: "path_length",
        den: Denominator::Area,
        noise: (-5.0, 10.0),
        bounds: |s| (2.0, 2.0 * wh(s)),
        n_test: 100,
        test_values: |s| (2, s.area().max(2) as i64),
        tolerance: 0.0,
    },
    ControlSpec {
        name: "enemies",
        den: Denominator::Area,
        noise: (-1.0, 2.0),
        bounds: |s| (1.0, max_side(s)),
        n_test: 1000,
        test_values: |s| (1, s.w.max(s.h) as i64),
        tolerance: 0.0,
    },
];

const DAVE: [ControlSpec; 3] = [
    ControlSpec {
        name: "solution_length",
        den: Denominator::Area,
        noise: (-5.0, 10.0),
        bounds: |_| (1.0, f64::INFINITY),
        n_test: 100,
        test_values: |s| (2, s.area().max(2) as i64),
        tolerance: 0.0,
    },
    ControlSpec {
        name: "jumps",
        den: Denominator::MaxSide,
        noise: (-1.0, 2.0),
        bounds: |s| (0.0, wh(s)),
        n_test: 100,
        test_values: |s| (1, (s.area() / 4).max(1) as i64),
        tolerance: 0.0,
    },
    ControlSpec {
        name: "spikes",
        den: Denominator::Area,
        noise: (-1.0, 1.0),
        bounds: |s| (0.0, (super::dave::spike_limit(s) as f64 - 1.0).max(0.0)),
        n_test: 1000,
        test_values: |s| (1, s.w.max(s.h) as i64),
        tolerance: 0.0,
    },
];

pub(super) fn specs(game: Game) -> &'static [ControlSpec] {
    match game {
        Game::Sokoban => &SOKOBAN,
        Game::Zelda => &ZELDA,
        Game::DangerDave => &DAVE,
    }
}

/// Normalized control vector `u[i] = property_i / den_i(w, h)` of a playable level.
pub fn measure_controls(level: &Level, analysis: &Analysis) -> Result<Vec<f64>, GameError> {
    let game = level.game();
    let size = level.size();
    game.controls()
        .iter()
        .zip(&analysis.properties)
        .map(|(spec, p)| {
            if !analysis.playable {
                return Err(GameError::MissingProperty(spec.name));
            }
            p.map(|v| spec.normalize(v, size))
                .ok_or(GameError::MissingProperty(spec.name))
        })
        .collect()
}

/// Replay-buffer cluster identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterKey(pub Vec<i64>);

impl fmt::Display for ClusterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Tuple key of a playable level: the game's two clustering properties, each
/// floored by its granularity.
pub fn cluster_key(level: &Level, analysis: &Analysis) -> Result<ClusterKey, GameError> {
    let game = level.game();
    let (w, h) = (level.width() as i64, level.height() as i64);
    let prop = |name: &'static str| -> Result<i64, GameError> {
        if !analysis.playable {
            return Err(GameError::MissingProperty(name));
        }
        analysis
            .property(game, name)
            .map(|v| v as i64)
            .ok_or(GameError::MissingProperty(name))
    };
    let half = ((w + h) / 2).max(1);
    let key = match game {
        Game::Sokoban => vec![prop("pushed_crates")?, prop("solution_length")? / (w + h)],
        Game::Zelda => vec![prop("nearest_enemy")? / half, prop("path_length")? / half],
        Game::DangerDave => vec![prop("jumps")?, prop("solution_length")? / half],
    };
    Ok(ClusterKey(key))
}
