//! Quality, diversity and controllability metrics.
//!
//! Everything here talks to a [`Generator`], so the metrics can be exercised
//! with hand-written stub policies as well as trained models.

mod range;
mod timing;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashSet;
use serde::Serialize;

use crate::condmodel::{CondModelError, Gmm};
use crate::games::{sokoban, Analysis, Game, GameError, Level, Size};
use crate::model::{Model, ModelError};
use crate::training::{analyze_all, Condition};

pub use range::{ExpressiveRange, RangeAxes};
pub use timing::{linear_fit, model_call_times, timing_report, LinearFit, ModelCallTime, TimingRow};

/// Rollouts per model call when generating many levels.
pub const GENERATION_BATCH: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("levels of different sizes: {0} and {1}")]
    SizeMismatch(Size, Size),
    #[error("need at least {needed} levels, got {got}")]
    TooFewLevels { needed: usize, got: usize },
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("generator returned {got} levels for {expected} requests")]
    BatchLength { expected: usize, got: usize },
    #[error("control index {0} out of range")]
    Control(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    CondModel(#[from] CondModelError),
}

/// Something that turns control requests into levels.
pub trait Generator {
    fn game(&self) -> Game;

    /// One level of `size` per normalized request in `u`.
    fn generate(&self, size: Size, u: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Level>, EvalError>;
}

/// A trained forward policy used as a generator.
#[derive(Clone, Copy)]
pub struct PolicyGenerator<'a> {
    pub model: &'a Model,
    pub game: Game,
}

impl Generator for PolicyGenerator<'_> {
    fn game(&self) -> Game {
        self.game
    }

    fn generate(&self, size: Size, u: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Result<Vec<Level>, EvalError> {
        let mut levels = Vec::with_capacity(u.len());
        for chunk in u.chunks(GENERATION_BATCH) {
            let mut rngs: Vec<ChaCha8Rng> = chunk.iter().map(|_| ChaCha8Rng::seed_from_u64(rng.random())).collect();
            let pass = self.model.rollout_batch(size, chunk, &mut rngs)?;
            for t in &pass.trajectories {
                levels.push(Level::new(self.game, size.w, size.h, t.cells())?);
            }
        }
        Ok(levels)
    }
}

fn generate_checked<G: Generator + ?Sized>(
    generator: &G,
    size: Size,
    u: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Level>, EvalError> {
    let levels = generator.generate(size, u, rng)?;
    if levels.len() != u.len() {
        return Err(EvalError::BatchLength {
            expected: u.len(),
            got: levels.len(),
        });
    }
    Ok(levels)
}

/// Unconditional request: a mixture sample snapped for `size`.
pub fn unconditional_request<R: Rng + ?Sized>(gmm: &Gmm, game: Game, size: Size, rng: &mut R) -> Condition {
    Condition::from_normalized(game, size, &gmm.sample(rng))
}

/// Request with some controls fixed (in property units) and the rest drawn
/// from the mixture conditioned on them.
pub fn controlled_request<R: Rng + ?Sized>(
    gmm: &Gmm,
    game: Game,
    size: Size,
    fixed: &[(usize, f64)],
    rng: &mut R,
) -> Result<Condition, EvalError> {
    let specs = game.controls();
    let mut normalized = Vec::with_capacity(fixed.len());
    for &(i, v) in fixed {
        let spec = specs.get(i).ok_or(EvalError::Control(i))?;
        normalized.push((i, spec.normalize(v, size)));
    }
    let mut cond = if normalized.is_empty() {
        unconditional_request(gmm, game, size, rng)
    } else if normalized.len() >= specs.len() {
        Condition::from_normalized(game, size, &gmm.means[0])
    } else {
        let draw = gmm.conditional_sample(&normalized, rng)?;
        Condition::from_normalized(game, size, &draw.u)
    };
    // keep the user's values even where they fall outside the training clamp
    for &(i, v) in fixed {
        cond.requested[i] = v;
        cond.u[i] = specs[i].normalize(v, size);
    }
    Ok(cond)
}

/// Mean pairwise Hamming distance divided by the area, computed from per-cell
/// tile counts.
pub fn tile_diversity(levels: &[&Level]) -> Result<f64, EvalError> {
    if levels.len() < 2 {
        return Err(EvalError::TooFewLevels {
            needed: 2,
            got: levels.len(),
        });
    }
    let size = levels[0].size();
    if let Some(l) = levels.iter().find(|l| l.size() != size) {
        return Err(EvalError::SizeMismatch(size, l.size()));
    }
    let area = size.area();
    let mut counts = vec![0u64; 256];
    let mut agreements = 0u128;
    for cell in 0..area {
        counts.fill(0);
        for l in levels {
            counts[usize::from(l.cells()[cell])] += 1;
        }
        agreements += counts.iter().map(|&n| u128::from(n * n.saturating_sub(1) / 2)).sum::<u128>();
    }
    let n = levels.len() as u128;
    let pairs = n * (n - 1) / 2;
    Ok(1.0 - agreements as f64 / (pairs as f64 * area as f64))
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64;
    Some((m, var.sqrt()))
}

/// Unconditional quality and diversity of one generator at one size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QualityReport {
    pub game: Game,
    pub size: Size,
    pub generated: usize,
    pub playable: usize,
    pub playable_frac: f64,
    /// Over playable levels; `None` with fewer than two.
    pub tile_diversity: Option<f64>,
    /// Playable levels repeating an earlier playable grid, over playable levels.
    pub duplicate_frac: f64,
    /// Distinct solution signatures over playable levels (Sokoban only).
    pub unique_signature_frac: Option<f64>,
    /// Mean and std of the solution length over distinct playable grids.
    pub solution_length: Option<(f64, f64)>,
}

impl QualityReport {
    pub const CSV_HEADER: &'static str =
        "game,size,generated,playable,playable_frac,tile_diversity,duplicate_frac,unique_signature_frac,solution_length_mean,solution_length_std";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        format!(
            "{},{},{},{},{:.6},{},{:.6},{},{},{}",
            self.game,
            self.size,
            self.generated,
            self.playable,
            self.playable_frac,
            opt(self.tile_diversity),
            self.duplicate_frac,
            opt(self.unique_signature_frac),
            opt(self.solution_length.map(|s| s.0)),
            opt(self.solution_length.map(|s| s.1)),
        )
    }
}

/// Generated levels with their analyses and requests.
#[derive(Clone, Debug)]
pub struct Sample {
    pub levels: Vec<Level>,
    pub analyses: Vec<Analysis>,
    pub requests: Vec<Condition>,
}

/// Generates and analyzes `n` levels with unconditional requests.
pub fn sample_unconditional<G: Generator + ?Sized>(
    generator: &G,
    gmm: &Gmm,
    size: Size,
    n: usize,
    rng: &mut ChaCha8Rng,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Sample, EvalError> {
    let game = generator.game();
    let requests: Vec<Condition> = (0..n).map(|_| unconditional_request(gmm, game, size, rng)).collect();
    let u: Vec<Vec<f64>> = requests.iter().map(|c| c.u.clone()).collect();
    let levels = generate_checked(generator, size, &u, rng)?;
    let analyses = analyze_all(game, &levels, pool);
    Ok(Sample {
        levels,
        analyses,
        requests,
    })
}

/// Quality metrics of an already analyzed sample.
pub fn quality_of(game: Game, size: Size, levels: &[Level], analyses: &[Analysis]) -> Result<QualityReport, EvalError> {
    let playable: Vec<(&Level, &Analysis)> = levels.iter().zip(analyses).filter(|(_, a)| a.playable).collect();
    let np = playable.len();
    let frac = |k: usize, of: usize| if of == 0 { 0.0 } else { k as f64 / of as f64 };

    let grids: Vec<&Level> = playable.iter().map(|(l, _)| *l).collect();
    let tile_diversity = if np >= 2 { Some(tile_diversity(&grids)?) } else { None };

    let mut seen = FxHashSet::default();
    let mut unique_lengths = Vec::new();
    let length_index = game.control_index("solution_length");
    for (l, a) in &playable {
        if seen.insert(l.cells()) {
            if let Some(v) = length_index.and_then(|i| a.properties[i]) {
                unique_lengths.push(v);
            }
        }
    }
    let duplicates = np - seen.len();

    let unique_signature_frac = if game == Game::Sokoban {
        let mut sigs = BTreeSet::new();
        for (l, a) in &playable {
            if let Some(sol) = &a.solution {
                sigs.insert(sokoban::solution_signature(l, sol)?);
            }
        }
        Some(frac(sigs.len(), np))
    } else {
        None
    };

    Ok(QualityReport {
        game,
        size,
        generated: levels.len(),
        playable: np,
        playable_frac: frac(np, levels.len()),
        tile_diversity,
        duplicate_frac: frac(duplicates, np),
        unique_signature_frac,
        solution_length: mean_std(&unique_lengths),
    })
}

/// Generates `n` levels with requests drawn from `gmm` and measures them.
pub fn quality_eval<G: Generator + ?Sized>(
    generator: &G,
    gmm: &Gmm,
    size: Size,
    n: usize,
    rng: &mut ChaCha8Rng,
    pool: Option<&rayon::ThreadPool>,
) -> Result<QualityReport, EvalError> {
    let sample = sample_unconditional(generator, gmm, size, n, rng, pool)?;
    quality_of(generator.game(), size, &sample.levels, &sample.analyses)
}

/// Controllability of one control at one size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlReport {
    pub game: Game,
    pub size: Size,
    pub control: String,
    pub values: Vec<i64>,
    pub per_value: usize,
    pub playable_frac: f64,
    /// Mean absolute error over playable levels.
    pub mae: Option<f64>,
    /// Coefficient of determination with the requests as the truth, pooled
    /// over playable levels. `None` when the requests have no variance.
    pub r2: Option<f64>,
    pub tolerance: f64,
    /// Mean over tested values of the fraction of levels that are playable and
    /// within tolerance.
    pub score: f64,
}

impl ControlReport {
    pub const CSV_HEADER: &'static str = "game,size,control,values,per_value,playable_frac,mae,r2,tolerance,score";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let range = match (self.values.first(), self.values.last()) {
            (Some(a), Some(b)) => format!("{a}..{b}"),
            _ => String::new(),
        };
        format!(
            "{},{},{},{},{},{:.6},{},{},{},{:.6}",
            self.game,
            self.size,
            self.control,
            range,
            self.per_value,
            self.playable_frac,
            opt(self.mae),
            opt(self.r2),
            self.tolerance,
            self.score
        )
    }
}

/// Summary statistics of `(requested, measured)` pairs.
pub fn control_metrics(pairs: &[(f64, f64)]) -> (Option<f64>, Option<f64>) {
    if pairs.is_empty() {
        return (None, None);
    }
    let n = pairs.len() as f64;
    let mae = pairs.iter().map(|(c, m)| (m - c).abs()).sum::<f64>() / n;
    let mean_c = pairs.iter().map(|(c, _)| c).sum::<f64>() / n;
    let ss_res: f64 = pairs.iter().map(|(c, m)| (m - c).powi(2)).sum();
    let ss_tot: f64 = pairs.iter().map(|(c, _)| (c - mean_c).powi(2)).sum();
    let r2 = (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot);
    (Some(mae), r2)
}

/// Fixes control `index` at each of `values` in turn, draws the other controls
/// conditionally, and generates `per_value` levels per value.
#[allow(clippy::too_many_arguments)]
pub fn control_eval<G: Generator + ?Sized>(
    generator: &G,
    gmm: &Gmm,
    size: Size,
    index: usize,
    values: &[i64],
    per_value: usize,
    rng: &mut ChaCha8Rng,
    pool: Option<&rayon::ThreadPool>,
) -> Result<ControlReport, EvalError> {
    let game = generator.game();
    let spec = game.controls().get(index).ok_or(EvalError::Control(index))?;
    let mut pairs = Vec::new();
    let mut playable = 0usize;
    let mut score = 0.0;
    for &c in values {
        let target = c as f64;
        let requests = (0..per_value)
            .map(|_| controlled_request(gmm, game, size, &[(index, target)], rng))
            .collect::<Result<Vec<_>, _>>()?;
        let u: Vec<Vec<f64>> = requests.iter().map(|r| r.u.clone()).collect();
        let levels = generate_checked(generator, size, &u, rng)?;
        let mut hits = 0usize;
        for a in analyze_all(game, &levels, pool) {
            if !a.playable {
                continue;
            }
            playable += 1;
            if let Some(m) = a.properties[index] {
                pairs.push((target, m));
                if (m - target).abs() <= spec.tolerance {
                    hits += 1;
                }
            }
        }
        score += if per_value == 0 { 0.0 } else { hits as f64 / per_value as f64 };
    }
    let total = values.len() * per_value;
    let (mae, r2) = control_metrics(&pairs);
    Ok(ControlReport {
        game,
        size,
        control: spec.name.to_string(),
        values: values.to_vec(),
        per_value,
        playable_frac: if total == 0 { 0.0 } else { playable as f64 / total as f64 },
        mae,
        r2,
        tolerance: spec.tolerance,
        score: if values.is_empty() { 0.0 } else { score / values.len() as f64 },
    })
}

/// Outcome of [`generate_with_retries`].
#[derive(Clone, Debug)]
pub struct Retried {
    pub level: Level,
    pub analysis: Analysis,
    pub request: Condition,
    /// Trials consumed, counting the returned one.
    pub trials: usize,
    /// Sum of absolute errors over the fixed controls, for playable levels.
    pub error: Option<f64>,
}

fn control_error(fixed: &[(usize, f64)], analysis: &Analysis) -> Option<f64> {
    if !analysis.playable {
        return None;
    }
    fixed
        .iter()
        .map(|&(i, v)| analysis.properties.get(i).copied().flatten().map(|m| (m - v).abs()))
        .sum()
}

/// Retries generation up to `trials` times. Without fixed controls it stops at
/// the first playable level; with fixed controls it keeps the playable level
/// with the smallest error, stopping early at zero error. When nothing is
/// playable the last attempt is returned.
pub fn generate_with_retries<G: Generator + ?Sized>(
    generator: &G,
    gmm: &Gmm,
    size: Size,
    fixed: &[(usize, f64)],
    trials: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Retried, EvalError> {
    if trials == 0 {
        return Err(EvalError::NoTrials);
    }
    let game = generator.game();
    let mut best: Option<Retried> = None;
    let mut last = None;
    for t in 1..=trials {
        let request = controlled_request(gmm, game, size, fixed, rng)?;
        let level = generate_checked(generator, size, std::slice::from_ref(&request.u), rng)?
            .pop()
            .expect("one level");
        let analysis = game.analyze(&level);
        let error = control_error(fixed, &analysis);
        let attempt = Retried {
            level,
            analysis,
            request,
            trials: t,
            error,
        };
        if attempt.analysis.playable {
            if fixed.is_empty() || error == Some(0.0) {
                return Ok(attempt);
            }
            let better = match &best {
                None => true,
                Some(b) => error.unwrap_or(f64::INFINITY) < b.error.unwrap_or(f64::INFINITY),
            };
            if better {
                best = Some(attempt);
            }
        } else {
            last = Some(attempt);
        }
    }
    let mut out = best.or(last).expect("at least one trial");
    out.trials = trials;
    Ok(out)
}

/// Success rate of [`generate_with_retries`] over `n` independent requests.
pub fn retry_success_rate<G: Generator + ?Sized>(
    generator: &G,
    gmm: &Gmm,
    size: Size,
    trials: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, EvalError> {
    let mut ok = 0usize;
    for _ in 0..n {
        if generate_with_retries(generator, gmm, size, &[], trials, rng)?.analysis.playable {
            ok += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { ok as f64 / n as f64 })
}
