//! Denoising score matching with a time-binned, per-mode affine score model.
//!
//! For each time bin the model is `S(t, u)_n = a_n u_n + b_n`. Because the
//! DSM loss is measured in coefficient space it decouples across modes, and
//! each `(bin, mode)` pair is an independent ridge regression solved in closed
//! form. For single-Gaussian data the Bayes-optimal score is affine, so the
//! fit converges to `a_n = -lambda_n / v_n(t)`, `b_n = lambda_n m(t) mu_n / v_n(t)`.

use rayon::prelude::*;

use crate::diffusion::{perturb_with, Schedule};
use crate::error::{Error, Result};
use crate::oracle::{conditional_log_gradient, MixtureDataSpec};
use crate::rng::{derive_seed, substream, Stream};
use crate::sampler::{ScoreFn, DEFAULT_T_EPS};

pub const DEFAULT_BINS: usize = 32;
pub const DEFAULT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub samples_per_bin: usize,
    pub ridge: f64,
    pub seed: u64,
    pub bins: usize,
    pub t_eps: f64,
}

impl TrainingConfig {
    pub fn new(samples_per_bin: usize, seed: u64) -> Self {
        Self {
            samples_per_bin,
            ridge: DEFAULT_RIDGE,
            seed,
            bins: DEFAULT_BINS,
            t_eps: DEFAULT_T_EPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_bin < 10 {
            return Err(Error::InvalidParameter(format!(
                "samples_per_bin must be >= 10, got {}",
                self.samples_per_bin
            )));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        if self.bins == 0 {
            return Err(Error::InvalidParameter("need at least one time bin".into()));
        }
        if !(self.t_eps > 0.0 && self.t_eps < 1.0) {
            return Err(Error::InvalidParameter(format!("t_eps {} not in (0, 1)", self.t_eps)));
        }
        Ok(())
    }
}

/// One DSM training pair: a noised state and its conditional target.
#[derive(Debug, Clone, PartialEq)]
pub struct DsmPair {
    pub xt: Vec<f64>,
    pub target: Vec<f64>,
}

/// Draws `X_0 ~ P_0`, `X_t ~ mu_{t|X_0}` and the target
/// `rho^{mu_{t|X_0}}(X_t)`; pair `i` uses its own substreams.
pub fn dsm_targets(
    spec: &MixtureDataSpec,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    t: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<DsmPair>> {
    let lambdas = &eigenvalues[..spec.modes().min(eigenvalues.len())];
    if lambdas.len() != spec.modes() {
        return Err(Error::DimensionMismatch {
            expected: spec.modes(),
            got: eigenvalues.len(),
        });
    }
    (0..count as u64)
        .map(|i| {
            let x0 = spec.sample_with(&mut substream(seed, Stream::Data, i));
            let xt = perturb_with(&x0, lambdas, schedule, t, &mut substream(seed, Stream::Perturb, i))?;
            let target = conditional_log_gradient(&x0, schedule, t, &xt)?;
            Ok(DsmPair { xt, target })
        })
        .collect()
}

/// Piecewise-constant-in-time affine score.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineScoreModel {
    edges: Vec<f64>,
    slope: Vec<Vec<f64>>,
    intercept: Vec<Vec<f64>>,
}

impl AffineScoreModel {
    pub fn new(edges: Vec<f64>, slope: Vec<Vec<f64>>, intercept: Vec<Vec<f64>>) -> Result<Self> {
        if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
        }
        let bins = edges.len() - 1;
        if slope.len() != bins || intercept.len() != bins {
            return Err(Error::DimensionMismatch {
                expected: bins,
                got: slope.len().min(intercept.len()),
            });
        }
        let m = slope[0].len();
        if slope.iter().chain(&intercept).any(|row| row.len() != m) {
            return Err(Error::InvalidParameter("ragged coefficient table".into()));
        }
        Ok(Self {
            edges,
            slope,
            intercept,
        })
    }

    /// All-zero model on the given edges.
    pub fn zeros(edges: Vec<f64>, modes: usize) -> Result<Self> {
        let bins = edges.len().saturating_sub(1);
        Self::new(edges, vec![vec![0.0; modes]; bins], vec![vec![0.0; modes]; bins])
    }

    /// `bins` equal-width bins on `[t_eps, 1]`.
    pub fn uniform_edges(bins: usize, t_eps: f64) -> Vec<f64> {
        let w = (1.0 - t_eps) / bins as f64;
        let mut edges: Vec<f64> = (0..=bins).map(|i| t_eps + w * i as f64).collect();
        edges[bins] = 1.0;
        edges
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn slope(&self) -> &[Vec<f64>] {
        &self.slope
    }

    pub fn intercept(&self) -> &[Vec<f64>] {
        &self.intercept
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn modes(&self) -> usize {
        self.slope[0].len()
    }

    pub fn bin_center(&self, bin: usize) -> f64 {
        0.5 * (self.edges[bin] + self.edges[bin + 1])
    }

    /// Bin containing `t`; bins are right-closed and the first also holds its left edge.
    pub fn bin_of(&self, t: f64) -> Result<usize> {
        let (lo, hi) = (self.edges[0], self.edges[self.edges.len() - 1]);
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        // first edge >= t, minus one
        let idx = self.edges.partition_point(|&e| e < t);
        Ok(idx.saturating_sub(1).min(self.bins() - 1))
    }

    pub fn evaluate(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        let bin = self.bin_of(t)?;
        if u.len() > self.modes() {
            return Err(Error::DimensionMismatch {
                expected: self.modes(),
                got: u.len(),
            });
        }
        Ok(u.iter()
            .zip(&self.slope[bin])
            .zip(&self.intercept[bin])
            .map(|((&x, &a), &b)| a * x + b)
            .collect())
    }
}

impl ScoreFn for AffineScoreModel {
    fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(t, u)
    }
}

/// Closed-form minimiser of `sum (a x + b - y)^2 + ridge (a^2 + b^2)`.
///
/// Sums are accumulated about the sample means so that the `ridge = 0`
/// solution is the ordinary centred least-squares fit.
pub fn ridge_line(x: &[f64], y: &[f64], ridge: f64) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    if x.is_empty() {
        return None;
    }
    let xm = x.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    if x.iter().any(|&v| v != x[0]) {
        for (&a, &b) in x.iter().zip(y) {
            sxx += (a - xm) * (a - xm);
            sxy += (a - xm) * (b - ym);
        }
    }
    let raw_sxx = sxx + n * xm * xm;
    let det = n * sxx + ridge * (raw_sxx + n) + ridge * ridge;
    if !(det > 0.0) || !det.is_finite() {
        return None;
    }
    let num_a = n * sxy + ridge * (sxy + n * xm * ym);
    let num_b = n * ym * sxx + ridge * n * ym - n * xm * sxy;
    Some((num_a / det, num_b / det))
}

/// Fits one affine score per `(bin, mode)` on DSM pairs drawn at the bin centre.
pub fn fit(
    spec: &MixtureDataSpec,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &TrainingConfig,
) -> Result<AffineScoreModel> {
    cfg.validate()?;
    let edges = AffineScoreModel::uniform_edges(cfg.bins, cfg.t_eps);
    let modes = spec.modes();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.bins)
        .into_par_iter()
        .map(|bin| {
            let t = 0.5 * (edges[bin] + edges[bin + 1]);
            let pairs = dsm_targets(
                spec,
                eigenvalues,
                schedule,
                t,
                cfg.samples_per_bin,
                derive_seed(cfg.seed, Stream::Fit, bin as u64),
            )?;
            let mut slope = Vec::with_capacity(modes);
            let mut intercept = Vec::with_capacity(modes);
            let mut x = vec![0.0; pairs.len()];
            let mut y = vec![0.0; pairs.len()];
            for mode in 0..modes {
                for (i, p) in pairs.iter().enumerate() {
                    x[i] = p.xt[mode];
                    y[i] = p.target[mode];
                }
                let (a, b) = ridge_line(&x, &y, cfg.ridge).ok_or(Error::SingularFit { bin, mode })?;
                slope.push(a);
                intercept.push(b);
            }
            Ok((slope, intercept))
        })
        .collect::<Result<_>>()?;
    let (slope, intercept) = rows.into_iter().unzip();
    AffineScoreModel::new(edges, slope, intercept)
}

/// Mean squared DSM residual of `score` on pairs drawn at time `t`.
pub fn dsm_loss(score: &dyn ScoreFn, t: f64, pairs: &[DsmPair]) -> Result<f64> {
    let mut total = 0.0;
    for p in pairs {
        let s = score.eval(t, &p.xt)?;
        total += s.iter().zip(&p.target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / pairs.len().max(1) as f64)
}
