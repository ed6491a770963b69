//! Gaussian mixtures over normalized control vectors.
//!
//! Fitted with EM from a k-means++ start. Each M-step adds `1e-6·I` to every
//! covariance and drops components whose weight falls below `1e-6`. A step
//! that would lower the data log-likelihood is rejected and ends the fit.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::games::{Game, Level, Size};
use crate::model::Model;
use crate::numerics::segment::{read_u32, write_u32};
use crate::training::{analyze_all, Condition};

pub const DEFAULT_COMPONENTS: usize = 16;
pub const DEFAULT_ITERATIONS: usize = 100;
pub const REGULARIZATION: f64 = 1e-6;
pub const MIN_WEIGHT: f64 = 1e-6;
pub const TAILORED_SAMPLES: usize = 1000;
const MAGIC: &[u8; 4] = b"GMM1";

#[derive(Debug, thiserror::Error)]
pub enum CondModelError {
    #[error("no points to fit")]
    Empty,
    #[error("points have dimension 0")]
    ZeroDim,
    #[error("point {index} has dimension {got}, expected {expected}")]
    Ragged { index: usize, expected: usize, got: usize },
    #[error("covariance of component {0} is not positive definite")]
    NotPositiveDefinite(usize),
    #[error("cannot fix {fixed} of {dim} dimensions")]
    TooManyFixed { fixed: usize, dim: usize },
    #[error("fixed dimension {0} out of range")]
    BadDimension(usize),
    #[error("no playable levels at {0}; use the closest-size model instead")]
    NoPlayable(Size),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Game(#[from] crate::games::GameError),
}

/// Mixture of full-covariance Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct Gmm {
    /// One label per dimension, e.g. `pushed_crates/(w+h)/2`.
    pub labels: Vec<String>,
    /// Size the model was fitted at, if any.
    pub size: Option<Size>,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major `d × d` covariances.
    pub covs: Vec<Vec<f64>>,
}

/// Result of [`fit`].
#[derive(Clone, Debug)]
pub struct Fit {
    pub model: Gmm,
    /// Data log-likelihood after initialization and after every accepted step.
    pub log_likelihood: Vec<f64>,
    /// Whether a step was rejected for lowering the log-likelihood.
    pub stopped_early: bool,
}

/// Outcome of a conditional draw.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalSample {
    pub u: Vec<f64>,
    pub component: usize,
    /// All reweighted weights underflowed and the nearest component was used.
    pub fallback: bool,
}

fn log_gauss(x: &DVector<f64>, mean: &DVector<f64>, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let d = x.len() as f64;
    let diff = x - mean;
    let sol = chol.l().solve_lower_triangular(&diff).expect("triangular solve");
    let log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + log_det + sol.norm_squared())
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

struct Params {
    weights: Vec<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl Params {
    fn chols(&self) -> Result<Vec<nalgebra::Cholesky<f64, nalgebra::Dyn>>, CondModelError> {
        self.covs
            .iter()
            .enumerate()
            .map(|(k, c)| c.clone().cholesky().ok_or(CondModelError::NotPositiveDefinite(k)))
            .collect()
    }

    /// Log responsibilities (unnormalized, per point and component) and total log-likelihood.
    fn e_step(&self, xs: &[DVector<f64>]) -> Result<(Vec<Vec<f64>>, f64), CondModelError> {
        let chols = self.chols()?;
        let mut ll = 0.0;
        let mut resp = Vec::with_capacity(xs.len());
        for x in xs {
            let row: Vec<f64> = (0..self.weights.len())
                .map(|k| self.weights[k].ln() + log_gauss(x, &self.means[k], &chols[k]))
                .collect();
            let lse = log_sum_exp(&row);
            ll += lse;
            resp.push(row.iter().map(|v| (v - lse).exp()).collect());
        }
        Ok((resp, ll))
    }

    fn m_step(xs: &[DVector<f64>], resp: &[Vec<f64>], k: usize) -> Self {
        let d = xs[0].len();
        let n = xs.len() as f64;
        let mut weights = Vec::new();
        let mut means = Vec::new();
        let mut covs = Vec::new();
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk / n < MIN_WEIGHT {
                continue;
            }
            let mut mean = DVector::zeros(d);
            for (x, r) in xs.iter().zip(resp) {
                mean += x * r[c];
            }
            mean /= nk;
            let mut cov = DMatrix::identity(d, d) * REGULARIZATION;
            for (x, r) in xs.iter().zip(resp) {
                let diff = x - &mean;
                cov += &diff * diff.transpose() * (r[c] / nk);
            }
            weights.push(nk / n);
            means.push(mean);
            covs.push(cov);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        Self { weights, means, covs }
    }
}

/// k-means++ seeding over distinct points.
fn kmeans_pp<R: Rng + ?Sized>(distinct: &[DVector<f64>], k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let mut centers = vec![distinct[rng.random_range(0..distinct.len())].clone()];
    while centers.len() < k {
        let d2: Vec<f64> = distinct
            .iter()
            .map(|x| centers.iter().map(|c| (x - c).norm_squared()).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = d2.len() - 1;
        for (i, v) in d2.iter().enumerate() {
            if target < *v {
                pick = i;
                break;
            }
            target -= v;
        }
        centers.push(distinct[pick].clone());
    }
    centers
}

/// Fits a mixture of at most `k` components with `iters` EM steps.
pub fn fit<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, iters: usize, rng: &mut R) -> Result<Fit, CondModelError> {
    let first = points.first().ok_or(CondModelError::Empty)?;
    let d = first.len();
    if d == 0 {
        return Err(CondModelError::ZeroDim);
    }
    if let Some((i, p)) = points.iter().enumerate().find(|(_, p)| p.len() != d) {
        return Err(CondModelError::Ragged { index: i, expected: d, got: p.len() });
    }
    let xs: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    sorted.dedup();
    let distinct: Vec<DVector<f64>> = sorted.iter().map(|p| DVector::from_column_slice(p)).collect();
    let k = k.clamp(1, distinct.len());
    let centers = kmeans_pp(&distinct, k, rng);

    // hard assignment to the nearest center gives the initial parameters
    let resp: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| {
            let best = (0..centers.len())
                .min_by(|&a, &b| (x - &centers[a]).norm_squared().total_cmp(&(x - &centers[b]).norm_squared()))
                .unwrap();
            (0..centers.len()).map(|c| if c == best { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    let mut params = Params::m_step(&xs, &resp, centers.len());
    let (mut resp, mut ll) = params.e_step(&xs)?;
    let mut history = vec![ll];
    let mut stopped_early = false;
    for _ in 0..iters {
        let next = Params::m_step(&xs, &resp, params.weights.len());
        let (next_resp, next_ll) = next.e_step(&xs)?;
        if next_ll < ll {
            stopped_early = true;
            break;
        }
        params = next;
        resp = next_resp;
        ll = next_ll;
        history.push(ll);
    }
    Ok(Fit {
        model: Gmm {
            labels: (0..d).map(|i| format!("u{i}")).collect(),
            size: None,
            weights: params.weights,
            means: params.means.iter().map(|m| m.iter().copied().collect()).collect(),
            covs: params.covs.iter().map(|c| c.transpose().iter().copied().collect()).collect(),
        },
        log_likelihood: history,
        stopped_early,
    })
}

fn draw_normal<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let n = mean.len();
    let l = cov
        .clone()
        .cholesky()
        .or_else(|| (cov + DMatrix::identity(n, n) * REGULARIZATION).cholesky())
        .map(|c| c.l())
        .unwrap_or_else(|| DMatrix::from_diagonal(&cov.diagonal().map(|v| v.max(0.0).sqrt())));
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    mean + l * z
}

impl Gmm {
    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    fn mean(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.means[k])
    }

    fn cov(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covs[k])
    }

    /// Labels dimensions after a game's controls and their denominators.
    pub fn with_game_labels(mut self, game: Game, size: Size) -> Self {
        self.labels = game.controls().iter().map(|c| format!("{}/{}", c.name, c.den)).collect();
        self.size = Some(size);
        self
    }

    fn pick_component<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
        let x: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if x < acc {
                return i;
            }
        }
        weights.len() - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = Self::pick_component(&self.weights, rng);
        draw_normal(&self.mean(k), &self.cov(k), rng).iter().copied().collect()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, CondModelError> {
        let x = DVector::from_column_slice(x);
        let mut terms = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let chol = self.cov(k).cholesky().ok_or(CondModelError::NotPositiveDefinite(k))?;
            terms.push(self.weights[k].ln() + log_gauss(&x, &self.mean(k), &chol));
        }
        Ok(log_sum_exp(&terms))
    }

    /// Draws the free dimensions given `fixed` `(dimension, value)` pairs by exact
    /// Gaussian conditioning. Fixed dimensions keep their values bit for bit.
    pub fn conditional_sample<R: Rng + ?Sized>(
        &self,
        fixed: &[(usize, f64)],
        rng: &mut R,
    ) -> Result<ConditionalSample, CondModelError> {
        let d = self.dim();
        if fixed.len() >= d {
            return Err(CondModelError::TooManyFixed { fixed: fixed.len(), dim: d });
        }
        if let Some(&(j, _)) = fixed.iter().find(|(j, _)| *j >= d) {
            return Err(CondModelError::BadDimension(j));
        }
        let js: Vec<usize> = fixed.iter().map(|f| f.0).collect();
        let fs: Vec<usize> = (0..d).filter(|i| !js.contains(i)).collect();
        let v = DVector::from_iterator(js.len(), fixed.iter().map(|f| f.1));

        let sub = |m: &DMatrix<f64>, rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
        };
        let pick = |m: &DVector<f64>, idx: &[usize]| DVector::from_iterator(idx.len(), idx.iter().map(|&i| m[i]));

        let mut logw = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let cov = self.cov(k);
            let chol = sub(&cov, &js, &js).cholesky().ok_or(CondModelError::NotPositiveDefinite(k))?;
            logw.push(self.weights[k].ln() + log_gauss(&v, &pick(&self.mean(k), &js), &chol));
        }
        let lse = log_sum_exp(&logw);
        let (k, fallback) = if lse.is_finite() {
            let w: Vec<f64> = logw.iter().map(|l| (l - lse).exp()).collect();
            (Self::pick_component(&w, rng), false)
        } else {
            let nearest = (0..self.components())
                .min_by(|&a, &b| {
                    let da = (pick(&self.mean(a), &js) - &v).norm_squared();
                    let db = (pick(&self.mean(b), &js) - &v).norm_squared();
                    da.total_cmp(&db)
                })
                .unwrap();
            (nearest, true)
        };
        let mean = self.mean(k);
        let cov = self.cov(k);
        let s_jj = sub(&cov, &js, &js);
        let s_fj = sub(&cov, &fs, &js);
        let s_ff = sub(&cov, &fs, &fs);
        let chol = s_jj.cholesky().ok_or(CondModelError::NotPositiveDefinite(k))?;
        let gain = chol.solve(&s_fj.transpose()).transpose();
        let cmean = pick(&mean, &fs) + &gain * (&v - pick(&mean, &js));
        let mut ccov = s_ff - &gain * s_fj.transpose();
        ccov = (&ccov + ccov.transpose()) * 0.5;
        let free = draw_normal(&cmean, &ccov, rng);
        let mut u = vec![0.0; d];
        for (i, &f) in fs.iter().enumerate() {
            u[f] = free[i];
        }
        for &(j, val) in fixed {
            u[j] = val;
        }
        Ok(ConditionalSample { u, component: k, fallback })
    }

    pub fn write<W: Write>(&self, w: &mut W) -> Result<(), CondModelError> {
        let d = self.dim();
        w.write_all(MAGIC)?;
        write_u32(w, d as u32)?;
        write_u32(w, self.components() as u32)?;
        for l in &self.labels {
            write_u32(w, l.len() as u32)?;
            w.write_all(l.as_bytes())?;
        }
        let (sw, sh) = self.size.map_or((0, 0), |s| (s.w as u32, s.h as u32));
        write_u32(w, sw)?;
        write_u32(w, sh)?;
        let values = self
            .weights
            .iter()
            .chain(self.means.iter().flatten())
            .chain(self.covs.iter().flatten());
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(&mut out).expect("writing to memory");
        out
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, CondModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CondModelError::Format("bad magic".into()));
        }
        let d = read_u32(r)? as usize;
        let k = read_u32(r)? as usize;
        if d == 0 || d > 64 || k == 0 || k > 4096 {
            return Err(CondModelError::Format(format!("dimension {d}, components {k}")));
        }
        let mut labels = Vec::with_capacity(d);
        for _ in 0..d {
            let len = read_u32(r)? as usize;
            if len > 1024 {
                return Err(CondModelError::Format("label too long".into()));
            }
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf)?;
            labels.push(String::from_utf8(buf).map_err(|e| CondModelError::Format(e.to_string()))?);
        }
        let (sw, sh) = (read_u32(r)? as usize, read_u32(r)? as usize);
        let size = (sw > 0 && sh > 0).then(|| Size::new(sw, sh));
        let mut next = || -> Result<f64, CondModelError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let weights = (0..k).map(|_| next()).collect::<Result<Vec<_>, _>>()?;
        let means = (0..k)
            .map(|_| (0..d).map(|_| next()).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let covs = (0..k)
            .map(|_| (0..d * d).map(|_| next()).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { labels, size, weights, means, covs })
    }
}

/// Fits a model for `target` from the playable part of a sample generated with
/// controls drawn from `base`.
pub fn tailored<R: Rng>(
    model: &Model,
    game: Game,
    base: &Gmm,
    target: Size,
    sample_n: usize,
    rng: &mut R,
) -> Result<Gmm, CondModelError> {
    let mut points = Vec::new();
    let mut remaining = sample_n;
    while remaining > 0 {
        let n = remaining.min(32);
        remaining -= n;
        let conds: Vec<Vec<f64>> = (0..n)
            .map(|_| Condition::from_normalized(game, target, &base.sample(rng)).u)
            .collect();
        let mut rngs: Vec<rand_chacha::ChaCha8Rng> = (0..n)
            .map(|_| rand::SeedableRng::seed_from_u64(rng.random()))
            .collect();
        let pass = model.rollout_batch(target, &conds, &mut rngs)?;
        let levels: Vec<Level> = pass
            .trajectories
            .iter()
            .map(|t| Level::new(game, target.w, target.h, t.cells()))
            .collect::<Result<_, _>>()?;
        for (level, analysis) in levels.iter().zip(analyze_all(game, &levels, None)) {
            if analysis.playable {
                points.push(crate::games::measure_controls(level, &analysis)?);
            }
        }
    }
    if points.is_empty() {
        return Err(CondModelError::NoPlayable(target));
    }
    let fit = fit(&points, DEFAULT_COMPONENTS, DEFAULT_ITERATIONS, rng)?;
    Ok(fit.model.with_game_labels(game, target))
}
