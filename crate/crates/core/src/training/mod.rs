//! Multi-size curriculum training with trajectory balance.
//!
//! Each iteration rolls out a batch at every configured size, analyzes the
//! results, stores playable levels in the replay buffer and takes one RMSProp
//! step on the mean loss over the active sizes. A size becomes active once it
//! has produced a playable level.

mod config;
mod replay;
mod rewards;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::games::{cluster_key, measure_controls, sokoban, Analysis, ClusterKey, Game, GameError, Level, Size};
use crate::model::{Model, ModelError, Pass};
use crate::numerics::{Grads, NumericsError, RmsProp, Tape};

pub use config::{SizeSets, TrainConfig};
pub use replay::{Entry, ReplayBuffer, SizeBuffer};
pub use rewards::{
    diversity_log_reward, log_reward, property_log_reward, tb_loss, total_log_reward, unplayable_log_reward,
    RewardConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("replay buffer for {0} is empty")]
    EmptyBuffer(Size),
    #[error("non-finite loss input")]
    NonFiniteInput,
    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: u64,
        #[source]
        source: Box<TrainingError>,
    },
    #[error("thread pool: {0}")]
    Threads(String),
}

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    Init = 1,
    Conditions = 2,
    Rollout = 3,
    Replay = 4,
    FlowInit = 5,
    Evaluation = 6,
    Gmm = 7,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent generator for `(seed, iteration, size index, batch index, purpose)`.
pub fn stream(seed: u64, iteration: u64, size_index: usize, batch_index: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for v in [iteration, size_index as u64, batch_index as u64, purpose as u64] {
        h = splitmix(h ^ v);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Cluster key of a playable level, by property tuple or by Sokoban solution signature.
pub fn replay_key(level: &Level, analysis: &Analysis, signature: bool) -> Result<ClusterKey, GameError> {
    if !signature {
        return cluster_key(level, analysis);
    }
    let solution = analysis.solution.as_deref().ok_or(GameError::MissingProperty("solution"))?;
    let sig = sokoban::solution_signature(level, solution)?;
    Ok(ClusterKey(
        sig.iter().map(|&(c, a)| (c * 4 + a as usize) as i64).collect(),
    ))
}

/// Builds a replay entry from a playable level's analysis.
pub fn make_entry(level: &Level, analysis: &Analysis, signature: bool) -> Result<Entry, GameError> {
    let properties = analysis
        .complete_properties()
        .filter(|_| analysis.playable)
        .ok_or(GameError::MissingProperty("all"))?;
    Ok(Entry {
        controls: measure_controls(level, analysis)?,
        key: replay_key(level, analysis, signature)?,
        level: level.clone(),
        properties,
    })
}

/// Requested control values: `requested` in property units (snapped),
/// `u` normalized for the network.
#[derive(Clone, Debug, PartialEq)]
pub struct Condition {
    pub requested: Vec<f64>,
    pub u: Vec<f64>,
}

impl Condition {
    /// Snaps raw property values for `size` and normalizes them.
    pub fn from_values(game: Game, size: Size, values: &[f64]) -> Self {
        let requested: Vec<f64> = game
            .controls()
            .iter()
            .zip(values)
            .map(|(spec, &v)| spec.snap(v, size))
            .collect();
        let u = game
            .controls()
            .iter()
            .zip(&requested)
            .map(|(spec, &v)| spec.normalize(v, size))
            .collect();
        Self { requested, u }
    }

    /// Snaps normalized controls, e.g. drawn from a mixture model.
    pub fn from_normalized(game: Game, size: Size, u: &[f64]) -> Self {
        let values: Vec<f64> = game
            .controls()
            .iter()
            .zip(u)
            .map(|(spec, &v)| spec.denormalize(v, size))
            .collect();
        Self::from_values(game, size, &values)
    }
}

/// Draws a training request: a replay level's properties plus noise, snapped for
/// `size`. Uses the closest populated buffer, or uniform normalized controls when
/// every buffer is empty.
pub fn sample_conditions<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    game: Game,
    size: Size,
    diversity: bool,
    rng: &mut R,
) -> Condition {
    let source = buffer
        .closest_populated(size)
        .and_then(|s| buffer.get(s))
        .and_then(|b| b.sample(diversity, rng));
    match source {
        Some(entry) => {
            let values: Vec<f64> = game
                .controls()
                .iter()
                .zip(&entry.properties)
                .map(|(spec, &p)| p + rng.random_range(spec.noise.0..=spec.noise.1))
                .collect();
            Condition::from_values(game, size, &values)
        }
        None => {
            let u: Vec<f64> = game.controls().iter().map(|_| rng.random::<f64>()).collect();
            Condition::from_normalized(game, size, &u)
        }
    }
}

/// Flips along each allowed axis with probability 1/2.
pub fn augment<R: Rng + ?Sized>(level: &Level, rng: &mut R) -> Level {
    let axes: Vec<_> = level
        .game()
        .flip_axes()
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.5))
        .collect();
    level.flip(&axes).expect("allowed axes")
}

/// Which sizes are trained on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Curriculum {
    pub sizes: Vec<Size>,
    pub seeds: Vec<Size>,
    pub active: BTreeSet<Size>,
    /// Iteration of the first playable rollout per size.
    pub first_playable: BTreeMap<Size, u64>,
}

impl Curriculum {
    pub fn new(sets: &SizeSets) -> Self {
        Self {
            sizes: sets.all(),
            seeds: sets.seed.clone(),
            active: sets.seed.iter().copied().collect(),
            first_playable: BTreeMap::new(),
        }
    }

    /// Records a playable rollout. Returns whether the size became active.
    pub fn record_playable(&mut self, size: Size, iteration: u64) -> bool {
        self.first_playable.entry(size).or_insert(iteration);
        self.active.insert(size)
    }

    pub fn is_active(&self, size: Size) -> bool {
        self.active.contains(&size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeStats {
    pub size: Size,
    /// Whether this size contributed loss terms.
    pub trained: bool,
    pub rollouts: usize,
    pub playable: usize,
    pub inserted: usize,
    pub activated: bool,
    /// Mean loss over this size's batch items.
    pub loss: Option<f64>,
    pub mean_log_z0: Option<f64>,
    pub mean_log_reward: Option<f64>,
    pub buffer_len: usize,
    pub clusters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationStats {
    pub iteration: u64,
    pub loss: f64,
    pub sizes: Vec<SizeStats>,
    /// Wall-clock seconds spent in rollouts, analysis and the update.
    pub timing: [f64; 3],
}

pub const LOG_HEADER: &str =
    "iteration,size,trained,rollouts,playable,inserted,activated,loss,log_z0,log_reward,buffer,clusters";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

impl IterationStats {
    /// One delimited row per size.
    pub fn log_rows(&self) -> String {
        let mut out = String::new();
        for s in &self.sizes {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                self.iteration,
                s.size,
                u8::from(s.trained),
                s.rollouts,
                s.playable,
                s.inserted,
                u8::from(s.activated),
                opt(s.loss),
                opt(s.mean_log_z0),
                opt(s.mean_log_reward),
                s.buffer_len,
                s.clusters
            );
        }
        out
    }
}

/// Analyzes levels in order, in parallel when a pool is given.
pub fn analyze_all(game: Game, levels: &[Level], pool: Option<&rayon::ThreadPool>) -> Vec<Analysis> {
    match pool {
        Some(pool) => pool.install(|| {
            use rayon::prelude::*;
            levels.par_iter().map(|l| game.analyze(l)).collect()
        }),
        None => levels.iter().map(|l| game.analyze(l)).collect(),
    }
}

pub fn thread_pool(threads: usize) -> Result<Option<Arc<rayon::ThreadPool>>, TrainingError> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(|p| Some(Arc::new(p)))
        .map_err(|e| TrainingError::Threads(e.to_string()))
}

/// Adds the trajectory-balance terms of one pass to its tape, scaled by `scale`,
/// and backpropagates them.
/// Returns per-row losses, log z0 values and the parameter gradients.
pub fn pass_loss(model: &Model, pass: &mut Pass, log_r: &[f64], scale: f64) -> Result<(Vec<f64>, Vec<f64>, Grads), TrainingError> {
    let size = pass.trajectories[0].size;
    let conds: Vec<Vec<f64>> = pass.trajectories.iter().map(|t| t.conditions.clone()).collect();
    let tape: &mut Tape = &mut pass.tape;
    let z = model.log_z0_node(tape, size, &conds)?;
    let total = tape.sum(&[z, pass.log_pf])?;
    let neg: Vec<f64> = log_r.iter().map(|r| -r).collect();
    let diff = tape.offset(total, &neg)?;
    let sq = tape.square(diff)?;
    let sum = tape.sum_all(sq)?;
    let loss = tape.scale(sum, scale)?;
    let grads = tape.backward(loss, &model.store)?.params;
    let losses = tape.value(sq).data().to_vec();
    let zs = tape.value(z).data().to_vec();
    Ok((losses, zs, grads))
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Full training state.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub buffer: ReplayBuffer,
    pub curriculum: Curriculum,
    /// Iterations completed so far.
    pub iteration: u64,
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainingError> {
        config.validate()?;
        let game = config.game;
        let mut rng = stream(config.seed, 0, 0, 0, Purpose::Init);
        let model = Model::new(game.num_tiles(), game.controls().len(), &mut rng)?;
        Self::from_parts(config, model, ReplayBuffer::new(), None, 0)
    }

    /// Reassembles a trainer, e.g. from a checkpoint.
    pub fn from_parts(
        config: TrainConfig,
        model: Model,
        buffer: ReplayBuffer,
        curriculum: Option<Curriculum>,
        iteration: u64,
    ) -> Result<Self, TrainingError> {
        let pool = thread_pool(config.threads)?;
        let curriculum = curriculum.unwrap_or_else(|| Curriculum::new(&config.sizes));
        Ok(Self {
            config,
            model,
            buffer,
            curriculum,
            iteration,
            pool,
        })
    }

    pub fn set_threads(&mut self, threads: usize) -> Result<(), TrainingError> {
        self.config.threads = threads.max(1);
        self.pool = thread_pool(self.config.threads)?;
        Ok(())
    }

    pub fn optimizer(&self) -> RmsProp {
        RmsProp {
            alpha: self.config.rms_alpha,
            eps: self.config.rms_eps,
            lr_policy: self.config.lr_policy,
            lr_flow: self.config.lr_flow,
            clip_norm: None,
        }
    }

    fn reward_config(&self) -> RewardConfig {
        RewardConfig {
            diversity: self.config.diversity_sampling,
            property: self.config.property_reward,
        }
    }

    pub fn train_iteration(&mut self) -> Result<IterationStats, TrainingError> {
        let iteration = self.iteration;
        self.step().map_err(|e| TrainingError::Iteration {
            iteration,
            source: Box::new(e),
        })
    }

    fn step(&mut self) -> Result<IterationStats, TrainingError> {
        let it = self.iteration;
        let seed = self.config.seed;
        let game = self.config.game;
        let signature = self.config.signature_key;
        let ds = self.config.diversity_sampling;
        let active: Vec<(usize, Size)> = self
            .curriculum
            .sizes
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, s)| self.curriculum.is_active(*s))
            .collect();
        for &(si, size) in &active {
            let mut rng = stream(seed, it, si, 0, Purpose::FlowInit);
            self.model.ensure_flow_head(size, &mut rng)?;
        }

        // rollouts and analysis at every size
        struct Rolled {
            size_index: usize,
            size: Size,
            pass: Pass,
            levels: Vec<Level>,
            conds: Vec<Condition>,
            analyses: Vec<Analysis>,
            inserted: usize,
            activated: bool,
        }
        let mut rolled = Vec::new();
        let mut timing = [0.0; 3];
        for (si, size) in self.curriculum.sizes.clone().into_iter().enumerate() {
            let clock = std::time::Instant::now();
            let mut crng = stream(seed, it, si, 0, Purpose::Conditions);
            let conds: Vec<Condition> = (0..self.config.batch_size)
                .map(|_| sample_conditions(&self.buffer, game, size, ds, &mut crng))
                .collect();
            let mut rngs: Vec<ChaCha8Rng> =
                (0..conds.len()).map(|b| stream(seed, it, si, b, Purpose::Rollout)).collect();
            let us: Vec<Vec<f64>> = conds.iter().map(|c| c.u.clone()).collect();
            let pass = self.model.rollout_batch(size, &us, &mut rngs)?;
            let levels: Vec<Level> = pass
                .trajectories
                .iter()
                .map(|t| Level::new(game, size.w, size.h, t.cells()))
                .collect::<Result<_, _>>()?;
            timing[0] += clock.elapsed().as_secs_f64();
            let t = std::time::Instant::now();
            let analyses = analyze_all(game, &levels, self.pool.as_deref());
            timing[1] += t.elapsed().as_secs_f64();
            rolled.push(Rolled {
                size_index: si,
                size,
                pass,
                levels,
                conds,
                analyses,
                inserted: 0,
                activated: false,
            });
        }
        for r in &mut rolled {
            for (level, analysis) in r.levels.iter().zip(&r.analyses) {
                if analysis.playable {
                    if self.buffer.insert(make_entry(level, analysis, signature)?) {
                        r.inserted += 1;
                    }
                    r.activated |= self.curriculum.record_playable(r.size, it);
                }
            }
        }

        let clock = std::time::Instant::now();
        // loss over sizes active at the start of the iteration
        let total_items: usize = active
            .iter()
            .map(|&(_, s)| self.config.batch_size + if self.buffer.len(s) > 0 { self.config.replay_batch } else { 0 })
            .sum();
        let scale = 1.0 / total_items.max(1) as f64;
        let mut grads = Grads::zeros_like(&self.model.store);
        let mut total_loss = 0.0;
        let reward_cfg = self.reward_config();
        let mut stats = Vec::new();
        for r in &mut rolled {
            let sb = self.buffer.get(r.size);
            let mut s = SizeStats {
                size: r.size,
                trained: false,
                rollouts: r.levels.len(),
                playable: r.analyses.iter().filter(|a| a.playable).count(),
                inserted: r.inserted,
                activated: r.activated,
                loss: None,
                mean_log_z0: None,
                mean_log_reward: None,
                buffer_len: sb.map_or(0, SizeBuffer::len),
                clusters: sb.map_or(0, SizeBuffer::num_clusters),
            };
            if !active.iter().any(|&(_, a)| a == r.size) {
                stats.push(s);
                continue;
            }
            s.trained = true;
            let mut log_r = Vec::with_capacity(r.levels.len());
            for ((level, analysis), cond) in r.levels.iter().zip(&r.analyses).zip(&r.conds) {
                let key = if analysis.playable {
                    Some(replay_key(level, analysis, signature)?)
                } else {
                    None
                };
                log_r.push(total_log_reward(level, &cond.requested, analysis, key.as_ref(), sb, reward_cfg));
            }
            let (mut losses, mut zs, g) = pass_loss(&self.model, &mut r.pass, &log_r, scale)?;
            grads.accumulate(&g);
            let mut all_r = log_r;

            if let Some(sb) = sb.filter(|b| !b.is_empty()) {
                let mut rrng = stream(seed, it, r.size_index, 0, Purpose::Replay);
                let mut levels = Vec::with_capacity(self.config.replay_batch);
                let mut us = Vec::with_capacity(self.config.replay_batch);
                let mut replay_r = Vec::with_capacity(self.config.replay_batch);
                for _ in 0..self.config.replay_batch {
                    let e = sb.sample(ds, &mut rrng).ok_or(TrainingError::EmptyBuffer(r.size))?;
                    let level = if self.config.augmentation { augment(&e.level, &mut rrng) } else { e.level.clone() };
                    let mut lr = 0.0;
                    if reward_cfg.diversity {
                        lr += diversity_log_reward(&e.level, Some(&e.key), Some(sb));
                    }
                    if reward_cfg.property {
                        if let Some(i) = game.property_reward_control() {
                            lr += e.properties[i].max(1.0).ln();
                        }
                    }
                    replay_r.push(lr);
                    us.push(e.controls.clone());
                    levels.push(level);
                }
                let refs: Vec<&Level> = levels.iter().collect();
                let mut pass = self.model.teacher_force_batch(&refs, &us)?;
                let (l2, z2, g2) = pass_loss(&self.model, &mut pass, &replay_r, scale)?;
                grads.accumulate(&g2);
                losses.extend(l2);
                zs.extend(z2);
                all_r.extend(replay_r);
            }
            total_loss += losses.iter().sum::<f64>() * scale;
            s.loss = mean(&losses);
            s.mean_log_z0 = mean(&zs);
            s.mean_log_reward = mean(&all_r);
            stats.push(s);
        }
        if !total_loss.is_finite() {
            return Err(TrainingError::NonFiniteInput);
        }
        if !active.is_empty() {
            self.optimizer().step(&mut self.model.store, &grads)?;
        }
        self.iteration += 1;
        timing[2] = clock.elapsed().as_secs_f64();
        Ok(IterationStats {
            iteration: it,
            loss: total_loss,
            sizes: stats,
            timing,
        })
    }
}
