use crate::games::{Analysis, ClusterKey, Game, Level, Size};

use super::replay::SizeBuffer;
use super::TrainingError;

/// `log R⁻ = −wh·ln|A|`, the reward of every level that misses its request.
pub fn unplayable_log_reward(size: Size, num_tiles: usize) -> f64 {
    -(size.area() as f64) * (num_tiles as f64).ln()
}

/// 0 if the level is playable and every measured property equals the request,
/// `log R⁻` otherwise.
pub fn log_reward(level: &Level, requested: &[f64], analysis: &Analysis) -> f64 {
    let hit = analysis.playable
        && analysis.properties.len() == requested.len()
        && analysis.properties.iter().zip(requested).all(|(m, r)| *m == Some(*r));
    if hit {
        0.0
    } else {
        unplayable_log_reward(level.size(), level.game().num_tiles())
    }
}

/// `ln max|C| − ln|C_key|` with the level counted in its own cluster; 0 when
/// unplayable.
pub fn diversity_log_reward(level: &Level, key: Option<&ClusterKey>, buffer: Option<&SizeBuffer>) -> f64 {
    let Some(key) = key else { return 0.0 };
    let (existing, max, present) = buffer.map_or((0, 0, false), |b| {
        (b.cluster_size(key), b.max_cluster_size(), b.contains(level))
    });
    let own = existing + usize::from(!present);
    (max.max(own) as f64).ln() - (own as f64).ln()
}

/// Log of the game's designated property for playable levels, else 0.
pub fn property_log_reward(game: Game, analysis: &Analysis) -> f64 {
    if !analysis.playable {
        return 0.0;
    }
    game.property_reward_control()
        .and_then(|i| analysis.properties[i])
        .map_or(0.0, |v| v.max(1.0).ln())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RewardConfig {
    pub diversity: bool,
    pub property: bool,
}

/// Sum of the control, diversity and property terms in log space.
pub fn total_log_reward(
    level: &Level,
    requested: &[f64],
    analysis: &Analysis,
    key: Option<&ClusterKey>,
    buffer: Option<&SizeBuffer>,
    config: RewardConfig,
) -> f64 {
    let mut r = log_reward(level, requested, analysis);
    if config.diversity && analysis.playable {
        r += diversity_log_reward(level, key, buffer);
    }
    if config.property {
        r += property_log_reward(level.game(), analysis);
    }
    r
}

/// Trajectory balance with a unit backward policy: `(log z0 + Σ log P_f − log R)²`.
pub fn tb_loss(log_z0: f64, sum_log_pf: f64, log_r: f64) -> Result<f64, TrainingError> {
    if !(log_z0.is_finite() && sum_log_pf.is_finite() && log_r.is_finite()) {
        return Err(TrainingError::NonFiniteInput);
    }
    let d = log_z0 + sum_log_pf - log_r;
    Ok(d * d)
}
