use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::Checkpoint;
use crate::condmodel::{self, Gmm, DEFAULT_COMPONENTS, DEFAULT_ITERATIONS, TAILORED_SAMPLES};
use crate::eval::{
    self, control_eval, generate_with_retries, model_call_times, quality_of, sample_unconditional, timing_report,
    ControlReport, ExpressiveRange, LinearFit, PolicyGenerator, QualityReport, RangeAxes, TimingRow,
};
use crate::games::{actions_to_string, Game, Level, Size};
use crate::training::{stream, thread_pool, IterationStats, Purpose, TrainConfig, Trainer, LOG_HEADER};

/// Environment variable overriding the default output root `runs`.
pub const OUTPUT_ROOT_VAR: &str = "GFN_LEVELS_OUT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

/// Resolves a relative path against the output root.
pub fn resolve_output(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        output_root().join(path)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

/// Fits a condition model per trained size on the replay buffer's controls.
pub fn fit_condition_models(trainer: &Trainer) -> Result<BTreeMap<Size, Gmm>> {
    let game = trainer.config.game;
    let mut out = BTreeMap::new();
    for (si, &size) in trainer.curriculum.sizes.iter().enumerate() {
        let Some(buffer) = trainer.buffer.get(size).filter(|b| !b.is_empty()) else { continue };
        let points: Vec<Vec<f64>> = buffer.entries().map(|e| e.controls.clone()).collect();
        let mut rng = stream(trainer.config.seed, trainer.iteration, si, 0, Purpose::Gmm);
        let fit = condmodel::fit(&points, DEFAULT_COMPONENTS, DEFAULT_ITERATIONS, &mut rng)
            .with_context(|| format!("fitting the condition model at {size}"))?;
        out.insert(size, fit.model.with_game_labels(game, size));
    }
    Ok(out)
}

pub fn checkpoint_path(dir: &Path, iteration: u64) -> PathBuf {
    dir.join(format!("checkpoint-{iteration:06}.ckpt"))
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("final.ckpt")
}

pub const LOG_FILE: &str = "train_log.csv";

/// Trains for `config.iterations` iterations in total, counting those already
/// in `resume`. Writes the config, an append-only log, periodic checkpoints and
/// a final checkpoint with condition models into `dir`.
pub fn train(
    config: TrainConfig,
    dir: &Path,
    resume: Option<Checkpoint>,
    mut progress: impl FnMut(&IterationStats),
) -> Result<Checkpoint> {
    config.validate()?;
    create_dir(dir)?;
    let mut trainer = match resume {
        Some(ck) => {
            if ck.config.game != config.game {
                bail!("checkpoint is for {}, config for {}", ck.config.game, config.game);
            }
            let mut t = ck.into_trainer()?;
            t.config.iterations = config.iterations;
            t.set_threads(config.threads)?;
            t
        }
        None => Trainer::new(config)?,
    };
    fs::write(dir.join("config.toml"), trainer.config.to_toml())?;
    let log_path = dir.join(LOG_FILE);
    let fresh_log = trainer.iteration == 0 || !log_path.exists();
    let mut log = fs::OpenOptions::new()
        .create(true)
        .append(!fresh_log)
        .write(true)
        .truncate(fresh_log)
        .open(&log_path)
        .with_context(|| format!("cannot open {}", log_path.display()))?;
    if fresh_log {
        writeln!(log, "{LOG_HEADER}")?;
    }
    let every = trainer.config.checkpoint_every;
    while trainer.iteration < trainer.config.iterations {
        let stats = trainer.train_iteration()?;
        log.write_all(stats.log_rows().as_bytes())?;
        progress(&stats);
        if every > 0 && trainer.iteration % every == 0 && trainer.iteration < trainer.config.iterations {
            Checkpoint::from_trainer(&trainer, BTreeMap::new()).save(&checkpoint_path(dir, trainer.iteration))?;
        }
    }
    log.flush()?;
    let gmms = fit_condition_models(&trainer)?;
    let ck = Checkpoint::from_trainer(&trainer, gmms);
    ck.save(&final_checkpoint_path(dir))?;
    Ok(ck)
}

/// Where generation conditions come from.
#[derive(Clone, Debug)]
pub struct ConditionSource {
    pub gmm: Gmm,
    pub description: String,
}

/// The embedded model of `size` if there is one; otherwise the closest trained
/// size's model for Sokoban and a tailored model for the other games, falling
/// back to the closest model when tailoring fails.
pub fn condition_source(ck: &Checkpoint, size: Size, rng: &mut ChaCha8Rng) -> Result<ConditionSource> {
    if let Some(gmm) = ck.gmms.get(&size) {
        return Ok(ConditionSource {
            gmm: gmm.clone(),
            description: format!("fitted at {size}"),
        });
    }
    let (base_size, base) = ck
        .closest_gmm(size)
        .context("checkpoint has no condition models; train to completion first")?;
    if ck.game() == Game::Sokoban {
        return Ok(ConditionSource {
            gmm: base.clone(),
            description: format!("closest trained size {base_size}"),
        });
    }
    match condmodel::tailored(&ck.model, ck.game(), base, size, TAILORED_SAMPLES, rng) {
        Ok(gmm) => Ok(ConditionSource {
            gmm,
            description: format!("tailored from {base_size}"),
        }),
        Err(e) => {
            log::warn!("tailored model for {size} failed ({e}); using the model of {base_size}");
            Ok(ConditionSource {
                gmm: base.clone(),
                description: format!("closest trained size {base_size} (tailoring failed)"),
            })
        }
    }
}

/// Parses `name=value[,name=value…]` into `(control index, value)` pairs.
pub fn parse_controls(game: Game, text: &str) -> Result<Vec<(usize, f64)>> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, value) = part
            .split_once('=')
            .with_context(|| format!("control {part:?} is not name=value"))?;
        let index = game.control_index(name.trim()).with_context(|| {
            let names: Vec<&str> = game.controls().iter().map(|c| c.name).collect();
            format!("unknown control {name:?} for {game}; expected one of {}", names.join(", "))
        })?;
        let value: f64 = value
            .trim()
            .parse()
            .with_context(|| format!("control {name}: {value:?} is not a number"))?;
        if out.iter().any(|(i, _)| *i == index) {
            bail!("control {name} given twice");
        }
        out.push((index, value));
    }
    Ok(out)
}

/// One generated level in the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct Generated {
    pub index: usize,
    pub file: Option<String>,
    pub level: String,
    pub playable: bool,
    pub failure: Option<String>,
    pub properties: BTreeMap<String, Option<f64>>,
    pub requested: BTreeMap<String, f64>,
    pub fixed: BTreeMap<String, f64>,
    pub error: Option<f64>,
    pub trials: usize,
    pub solution: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub game: Game,
    pub size: Size,
    pub seed: u64,
    pub trials: usize,
    pub condition_source: String,
    pub levels: Vec<Generated>,
}

pub struct GenerateRequest<'a> {
    pub size: Size,
    pub count: usize,
    pub fixed: &'a [(usize, f64)],
    pub trials: usize,
    pub seed: u64,
}

/// Generates levels, writing `level-NNNN.txt` files and `manifest.json` into
/// `out` when given.
pub fn generate(ck: &Checkpoint, req: &GenerateRequest<'_>, out: Option<&Path>) -> Result<Manifest> {
    if req.size.w == 0 || req.size.h == 0 {
        bail!("size must be at least 1x1");
    }
    let game = ck.game();
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let source = condition_source(ck, req.size, &mut rng)?;
    let generator = PolicyGenerator { model: &ck.model, game };
    let names: Vec<&str> = game.controls().iter().map(|c| c.name).collect();
    if let Some(dir) = out {
        create_dir(dir)?;
    }
    let mut levels = Vec::with_capacity(req.count);
    for index in 0..req.count {
        let r = generate_with_retries(&generator, &source.gmm, req.size, req.fixed, req.trials, &mut rng)?;
        let file = match out {
            Some(dir) => {
                let name = format!("level-{index:04}.txt");
                fs::write(dir.join(&name), format!("{}\n", r.level.render()))?;
                Some(name)
            }
            None => None,
        };
        levels.push(Generated {
            index,
            file,
            level: r.level.render(),
            playable: r.analysis.playable,
            failure: r.analysis.failure.map(|f| f.to_string()),
            properties: names.iter().map(|n| n.to_string()).zip(r.analysis.properties.clone()).collect(),
            requested: names.iter().map(|n| n.to_string()).zip(r.request.requested.clone()).collect(),
            fixed: req.fixed.iter().map(|&(i, v)| (names[i].to_string(), v)).collect(),
            error: r.error,
            trials: r.trials,
            solution: r.analysis.solution.as_deref().map(actions_to_string),
        });
    }
    let manifest = Manifest {
        game,
        size: req.size,
        seed: req.seed,
        trials: req.trials,
        condition_source: source.description,
        levels,
    };
    if let Some(dir) = out {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    }
    Ok(manifest)
}

/// Sample counts of an evaluation run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Protocol {
    pub quality_samples: usize,
    /// Divisor applied to each control's per-value count.
    pub control_divisor: usize,
    /// At most this many tested values per control, evenly spaced.
    pub max_values: Option<usize>,
    pub timing_batches: usize,
    pub timing_batch_size: usize,
    pub model_calls: usize,
}

impl Protocol {
    pub const FULL: Protocol = Protocol {
        quality_samples: 10_000,
        control_divisor: 1,
        max_values: None,
        timing_batches: 5,
        timing_batch_size: 100,
        model_calls: 1000,
    };
    pub const SMOKE: Protocol = Protocol {
        quality_samples: 500,
        control_divisor: 20,
        max_values: Some(10),
        timing_batches: 2,
        timing_batch_size: 20,
        model_calls: 50,
    };

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::FULL),
            "smoke" => Ok(Self::SMOKE),
            _ => bail!("unknown protocol {name:?}; expected smoke or full"),
        }
    }

    fn values(&self, grid: Vec<i64>) -> Vec<i64> {
        match self.max_values {
            Some(m) if grid.len() > m && m > 0 => (0..m).map(|i| grid[i * (grid.len() - 1) / (m - 1).max(1)]).collect(),
            _ => grid,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Evaluation {
    pub quality: Vec<QualityReport>,
    pub controls: Vec<ControlReport>,
    pub timing: Vec<TimingRow>,
    pub ranges: Vec<(Size, ExpressiveRange)>,
    pub model_calls: Vec<eval::ModelCallTime>,
    pub model_call_fit: Option<LinearFit>,
}

/// Runs every metric at every size and writes CSV tables and SVG heatmaps.
pub fn evaluate(
    ck: &Checkpoint,
    sizes: &[Size],
    protocol: Protocol,
    seed: u64,
    threads: usize,
    out: Option<&Path>,
) -> Result<Evaluation> {
    let game = ck.game();
    let pool = thread_pool(threads)?;
    let pool = pool.as_deref();
    let generator = PolicyGenerator { model: &ck.model, game };
    let mut ev = Evaluation {
        quality: Vec::new(),
        controls: Vec::new(),
        timing: Vec::new(),
        ranges: Vec::new(),
        model_calls: Vec::new(),
        model_call_fit: None,
    };
    for (k, &size) in sizes.iter().enumerate() {
        let mut rng = stream(seed, 0, k, 0, Purpose::Evaluation);
        let source = condition_source(ck, size, &mut rng)?;
        let sample = sample_unconditional(&generator, &source.gmm, size, protocol.quality_samples, &mut rng, pool)?;
        ev.quality.push(quality_of(game, size, &sample.levels, &sample.analyses)?);
        ev.ranges
            .push((size, ExpressiveRange::build(game, &sample.analyses, RangeAxes::for_game(game))));
        for (i, spec) in game.controls().iter().enumerate() {
            let values = protocol.values(spec.test_grid(size));
            let per_value = (spec.n_test / protocol.control_divisor).max(1);
            ev.controls
                .push(control_eval(&generator, &source.gmm, size, i, &values, per_value, &mut rng, pool)?);
        }
        ev.timing.extend(timing_report(
            &generator,
            &source.gmm,
            &[size],
            protocol.timing_batches,
            protocol.timing_batch_size,
            &mut rng,
            pool,
        )?);
    }
    ev.model_calls = model_call_times(&ck.model, sizes, protocol.model_calls, seed)?;
    let xs: Vec<f64> = ev.model_calls.iter().map(|m| m.size.area() as f64).collect();
    let ys: Vec<f64> = ev.model_calls.iter().map(|m| m.median).collect();
    ev.model_call_fit = eval::linear_fit(&xs, &ys);

    if let Some(dir) = out {
        create_dir(dir)?;
        let table = |header: &str, rows: Vec<String>| {
            let mut s = format!("{header}\n");
            for r in rows {
                s.push_str(&r);
                s.push('\n');
            }
            s
        };
        fs::write(
            dir.join("quality.csv"),
            table(QualityReport::CSV_HEADER, ev.quality.iter().map(QualityReport::csv_row).collect()),
        )?;
        fs::write(
            dir.join("controls.csv"),
            table(ControlReport::CSV_HEADER, ev.controls.iter().map(ControlReport::csv_row).collect()),
        )?;
        fs::write(
            dir.join("timing.csv"),
            table(TimingRow::CSV_HEADER, ev.timing.iter().map(TimingRow::csv_row).collect()),
        )?;
        let mut calls = String::from("size,area,calls,median_s\n");
        for m in &ev.model_calls {
            let _ = writeln!(calls, "{},{},{},{:.9}", m.size, m.size.area(), m.calls, m.median);
        }
        if let Some(f) = ev.model_call_fit {
            let _ = writeln!(calls, "# fit: seconds = {:.6e}*wh + {:.6e}, r = {:.5}", f.slope, f.intercept, f.r);
        }
        fs::write(dir.join("model_calls.csv"), calls)?;
        for (size, range) in &ev.ranges {
            let stem = format!("range-{}-{size}", game.name());
            fs::write(dir.join(format!("{stem}.csv")), range.to_csv())?;
            fs::write(dir.join(format!("{stem}.svg")), range.to_svg())?;
        }
    }
    Ok(ev)
}

/// Human-readable analysis of one level.
pub fn solve(text: &str, game: Game) -> Result<String> {
    let level = Level::parse(text, game).context("cannot parse level")?;
    let analysis = game.analyze(&level);
    let mut out = String::new();
    let _ = writeln!(out, "game: {game}");
    let _ = writeln!(out, "size: {}", level.size());
    let _ = writeln!(out, "playable: {}", analysis.playable);
    if let Some(f) = analysis.failure {
        let _ = writeln!(out, "reason: {f}");
    }
    for (spec, p) in game.controls().iter().zip(&analysis.properties) {
        match p {
            Some(v) => {
                let _ = writeln!(out, "{}: {v}", spec.name);
            }
            None => {
                let _ = writeln!(out, "{}: -", spec.name);
            }
        }
    }
    if let Some(sol) = &analysis.solution {
        let _ = writeln!(out, "solution: {}", actions_to_string(sol));
    }
    Ok(out)
}

/// Per-size curriculum summary reconstructed from a training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogSummary {
    pub size: Size,
    pub first_playable: Option<u64>,
    pub first_trained: Option<u64>,
    pub rollouts: usize,
    pub playable: usize,
    pub final_buffer: usize,
    pub final_clusters: usize,
}

/// Reads a training log into per-size summaries, in order of appearance.
pub fn summarize_log(text: &str) -> Result<Vec<LogSummary>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == LOG_HEADER => {}
        _ => bail!("not a training log"),
    }
    let mut out: Vec<LogSummary> = Vec::new();
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            bail!("log line {}: expected 12 fields", n + 2);
        }
        let it: u64 = f[0].parse().with_context(|| format!("log line {}", n + 2))?;
        let size: Size = f[1].parse().map_err(|e| anyhow::anyhow!("log line {}: {e}", n + 2))?;
        let num = |s: &str| s.parse::<usize>().with_context(|| format!("log line {}", n + 2));
        let idx = match out.iter().position(|s| s.size == size) {
            Some(i) => i,
            None => {
                out.push(LogSummary {
                    size,
                    first_playable: None,
                    first_trained: None,
                    rollouts: 0,
                    playable: 0,
                    final_buffer: 0,
                    final_clusters: 0,
                });
                out.len() - 1
            }
        };
        let s = &mut out[idx];
        let playable = num(f[4])?;
        if f[2] == "1" && s.first_trained.is_none() {
            s.first_trained = Some(it);
        }
        if playable > 0 && s.first_playable.is_none() {
            s.first_playable = Some(it);
        }
        s.rollouts += num(f[3])?;
        s.playable += playable;
        s.final_buffer = num(f[10])?;
        s.final_clusters = num(f[11])?;
    }
    Ok(out)
}

/// Markdown summary of a checkpoint and, optionally, its training log.
pub fn report(ck: &Checkpoint, log: Option<&str>) -> Result<String> {
    let mut s = String::new();
    let c = &ck.config;
    let _ = writeln!(s, "# {} generator\n", c.game);
    let _ = writeln!(s, "- iterations: {} of {}", ck.iteration, c.iterations);
    let _ = writeln!(s, "- seed: {}", c.seed);
    let _ = writeln!(
        s,
        "- features: diversity sampling {}, property reward {}, augmentation {}, signature key {}",
        c.diversity_sampling, c.property_reward, c.augmentation, c.signature_key
    );
    let _ = writeln!(s, "- parameters: {}\n", ck.model.store.numel());
    let _ = writeln!(s, "| size | active | first playable | buffer | clusters | mixture components |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    for &size in &ck.curriculum.sizes {
        let b = ck.buffer.get(size);
        let _ = writeln!(
            s,
            "| {size} | {} | {} | {} | {} | {} |",
            ck.curriculum.is_active(size),
            ck.curriculum.first_playable.get(&size).map_or("-".to_string(), u64::to_string),
            b.map_or(0, |b| b.len()),
            b.map_or(0, |b| b.num_clusters()),
            ck.gmms.get(&size).map_or("-".to_string(), |g| g.components().to_string()),
        );
    }
    if let Some(text) = log {
        let _ = writeln!(s, "\n| size | first trained | first playable | playable rollouts |");
        let _ = writeln!(s, "|---|---|---|---|");
        for l in summarize_log(text)? {
            let opt = |v: Option<u64>| v.map_or("-".to_string(), |x| x.to_string());
            let _ = writeln!(
                s,
                "| {} | {} | {} | {}/{} |",
                l.size,
                opt(l.first_trained),
                opt(l.first_playable),
                l.playable,
                l.rollouts
            );
        }
    }
    Ok(s)
}
