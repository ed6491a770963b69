use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{sample_unconditional, EvalError, Generator};
use crate::condmodel::Gmm;
use crate::games::Size;
use crate::model::Model;

/// Wall-clock seconds to generate and verify one batch, per size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub size: Size,
    pub batch_size: usize,
    pub seconds: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl TimingRow {
    pub const CSV_HEADER: &'static str = "size,batches,batch_size,mean_s,std_s,min_s,max_s";

    fn new(size: Size, batch_size: usize, seconds: Vec<f64>) -> Self {
        let n = seconds.len().max(1) as f64;
        let mean = seconds.iter().sum::<f64>() / n;
        let std = (seconds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt();
        let min = seconds.iter().copied().fold(f64::INFINITY, f64::min);
        let max = seconds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            size,
            batch_size,
            seconds,
            mean,
            std,
            min,
            max,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.size,
            self.seconds.len(),
            self.batch_size,
            self.mean,
            self.std,
            self.min,
            self.max
        )
    }
}

/// Times `batches` unconditional batches of `batch_size` levels at each size,
/// generation plus verification.
pub fn timing_report<G: Generator + ?Sized>(
    generator: &G,
    gmm: &Gmm,
    sizes: &[Size],
    batches: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<TimingRow>, EvalError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let mut seconds = Vec::with_capacity(batches);
        for _ in 0..batches {
            let start = Instant::now();
            sample_unconditional(generator, gmm, size, batch_size, rng, pool)?;
            seconds.push(start.elapsed().as_secs_f64());
        }
        rows.push(TimingRow::new(size, batch_size, seconds));
    }
    Ok(rows)
}

/// Median seconds of a single-level model call at one size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelCallTime {
    pub size: Size,
    pub calls: usize,
    pub median: f64,
}

/// Times `calls` single-level rollouts per size, without verification.
/// Sizes are interleaved call by call so that slow periods of the machine
/// spread over all sizes.
pub fn model_call_times(model: &Model, sizes: &[Size], calls: usize, seed: u64) -> Result<Vec<ModelCallTime>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let controls = model.policy.num_controls;
    let mut times = vec![Vec::with_capacity(calls); sizes.len()];
    for _ in 0..calls.max(1) {
        for (i, &size) in sizes.iter().enumerate() {
            let u: Vec<f64> = (0..controls).map(|_| rng.random()).collect();
            let mut call_rng = ChaCha8Rng::seed_from_u64(rng.random());
            let start = Instant::now();
            let t = model.rollout(size, &u, &mut call_rng)?;
            times[i].push(start.elapsed().as_secs_f64());
            std::hint::black_box(t);
        }
    }
    Ok(sizes
        .iter()
        .zip(times)
        .map(|(&size, mut t)| {
            t.sort_by(f64::total_cmp);
            ModelCallTime {
                size,
                calls: t.len(),
                median: t[t.len() / 2],
            }
        })
        .collect())
}

/// Least-squares line `y = slope·x + intercept` and Pearson correlation `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r: sxy / (sxx * syy).sqrt(),
    })
}
