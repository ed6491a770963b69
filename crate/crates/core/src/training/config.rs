use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::games::{Game, Size};

use super::TrainingError;

/// Training sizes split by curriculum role.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSets {
    pub seed: Vec<Size>,
    #[serde(default)]
    pub intermediate: Vec<Size>,
    #[serde(default)]
    pub desired: Vec<Size>,
}

impl SizeSets {
    /// Seed, then intermediate, then desired sizes.
    pub fn all(&self) -> Vec<Size> {
        self.seed
            .iter()
            .chain(&self.intermediate)
            .chain(&self.desired)
            .copied()
            .collect()
    }
}

/// Everything that defines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub game: Game,
    pub seed: u64,
    pub iterations: u64,
    /// On-policy rollouts per size per iteration.
    pub batch_size: usize,
    /// Replay samples per active size per iteration.
    pub replay_batch: usize,
    pub lr_policy: f64,
    pub lr_flow: f64,
    pub rms_alpha: f64,
    pub rms_eps: f64,
    /// Cluster-uniform replay and condition sampling plus the diversity reward.
    pub diversity_sampling: bool,
    pub property_reward: bool,
    pub augmentation: bool,
    /// Cluster Sokoban levels by solution signature instead of the property tuple.
    pub signature_key: bool,
    pub checkpoint_every: u64,
    pub threads: usize,
    /// Output directory; relative paths resolve against the output root.
    pub output: Option<String>,
    pub sizes: SizeSets,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    game: Game,
    seed: Option<u64>,
    iterations: Option<u64>,
    batch_size: Option<usize>,
    replay_batch: Option<usize>,
    lr_policy: Option<f64>,
    lr_flow: Option<f64>,
    rms_alpha: Option<f64>,
    rms_eps: Option<f64>,
    diversity_sampling: Option<bool>,
    property_reward: Option<bool>,
    augmentation: Option<bool>,
    signature_key: Option<bool>,
    checkpoint_every: Option<u64>,
    threads: Option<usize>,
    output: Option<String>,
    sizes: Option<SizeSets>,
}

impl TrainConfig {
    /// Defaults of the best reported configuration for `game`.
    pub fn defaults(game: Game) -> Self {
        let preset = game.preset_sizes();
        Self {
            game,
            seed: 0,
            iterations: 10_000,
            batch_size: 32,
            replay_batch: 16,
            lr_policy: 1e-3,
            lr_flow: 1e-2,
            rms_alpha: 0.99,
            rms_eps: 1e-8,
            diversity_sampling: true,
            property_reward: game.property_reward_control().is_some(),
            augmentation: true,
            signature_key: false,
            checkpoint_every: 500,
            threads: 1,
            output: None,
            sizes: SizeSets {
                seed: preset.seed,
                intermediate: preset.intermediate,
                desired: preset.desired,
            },
        }
    }

    /// Parses a TOML config. Missing fields take the game's defaults; unknown
    /// fields are rejected.
    pub fn from_toml(text: &str) -> Result<Self, TrainingError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| TrainingError::Config(e.to_string()))?;
        let d = Self::defaults(raw.game);
        let config = Self {
            game: raw.game,
            seed: raw.seed.unwrap_or(d.seed),
            iterations: raw.iterations.unwrap_or(d.iterations),
            batch_size: raw.batch_size.unwrap_or(d.batch_size),
            replay_batch: raw.replay_batch.unwrap_or(d.replay_batch),
            lr_policy: raw.lr_policy.unwrap_or(d.lr_policy),
            lr_flow: raw.lr_flow.unwrap_or(d.lr_flow),
            rms_alpha: raw.rms_alpha.unwrap_or(d.rms_alpha),
            rms_eps: raw.rms_eps.unwrap_or(d.rms_eps),
            diversity_sampling: raw.diversity_sampling.unwrap_or(d.diversity_sampling),
            property_reward: raw.property_reward.unwrap_or(d.property_reward),
            augmentation: raw.augmentation.unwrap_or(d.augmentation),
            signature_key: raw.signature_key.unwrap_or(d.signature_key),
            checkpoint_every: raw.checkpoint_every.unwrap_or(d.checkpoint_every),
            threads: raw.threads.unwrap_or(d.threads),
            output: raw.output.or(d.output),
            sizes: raw.sizes.unwrap_or(d.sizes),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        let err = |field: &str, msg: &str| Err(TrainingError::Config(format!("{field}: {msg}")));
        if self.sizes.seed.is_empty() {
            return err("sizes.seed", "at least one seed size is required");
        }
        let all = self.sizes.all();
        if all.iter().collect::<BTreeSet<_>>().len() != all.len() {
            return err("sizes", "sizes must be distinct");
        }
        if self.batch_size == 0 {
            return err("batch_size", "must be at least 1");
        }
        for (name, lr) in [("lr_policy", self.lr_policy), ("lr_flow", self.lr_flow)] {
            if !(lr.is_finite() && lr > 0.0) {
                return err(name, "must be positive");
            }
        }
        if !(self.rms_alpha > 0.0 && self.rms_alpha < 1.0) {
            return err("rms_alpha", "must lie in (0, 1)");
        }
        if !(self.rms_eps.is_finite() && self.rms_eps > 0.0) {
            return err("rms_eps", "must be positive");
        }
        if self.threads == 0 {
            return err("threads", "must be at least 1");
        }
        if self.signature_key && self.game != Game::Sokoban {
            return err("signature_key", "only available for sokoban");
        }
        Ok(())
    }
}
