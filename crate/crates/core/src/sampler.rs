//! Reverse-time generation in spectral coordinates.
//!
//! Time runs backwards as `s = 1 - t`. Starting from `Y_0 ~ N(0, Q)` truncated
//! to `M` modes, the probability-flow ODE
//!
//! ```text
//! dY/ds = alpha(1 - s)/2 * [Y + rho(1 - s, Y)]
//! ```
//!
//! is integrated with explicit Euler on a uniform grid over `[0, 1 - t_eps]`.
//! The reverse SDE uses the same grid with drift `alpha/2 Y + alpha rho` and
//! per-mode noise of variance `alpha * lambda_n * ds`. Every step costs one
//! score evaluation.

use std::sync::atomic::{AtomicU64, Ordering};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::diffusion::Schedule;
use crate::error::{Error, Result};
use crate::oracle::{log_gradient_coeffs, MixtureDataSpec};
use crate::rng::{substream, Stream};
use crate::spectral::{prior_draw, FunctionSample};

pub const DEFAULT_T_EPS: f64 = 1e-3;

/// A (possibly learned) approximation of the logarithmic gradient
/// `rho^{mu_t}` in coefficient form: `lambda_n`-weighted mode scores.
pub trait ScoreFn: Sync {
    fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>>;
}

impl<F> ScoreFn for F
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>> + Sync,
{
    fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        self(t, u)
    }
}

/// The exact logarithmic gradient of a mixture data law.
pub struct OracleScore<'a> {
    spec: &'a MixtureDataSpec,
    eigenvalues: &'a [f64],
    schedule: &'a dyn Schedule,
}

impl<'a> OracleScore<'a> {
    pub fn new(spec: &'a MixtureDataSpec, eigenvalues: &'a [f64], schedule: &'a dyn Schedule) -> Self {
        Self {
            spec,
            eigenvalues,
            schedule,
        }
    }
}

impl ScoreFn for OracleScore<'_> {
    fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        log_gradient_coeffs(self.spec, self.eigenvalues, self.schedule, t, u)
    }
}

/// Wraps a score and counts evaluations.
pub struct CountingScore<'a> {
    inner: &'a dyn ScoreFn,
    calls: AtomicU64,
}

impl<'a> CountingScore<'a> {
    pub fn new(inner: &'a dyn ScoreFn) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ScoreFn for CountingScore<'_> {
    fn eval(&self, t: f64, u: &[f64]) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.eval(t, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ode,
    Sde,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ode => "ode",
            Method::Sde => "sde",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ode" => Ok(Method::Ode),
            "sde" => Ok(Method::Sde),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub nfe: usize,
    pub method: Method,
    pub t_eps: f64,
    pub truncation: usize,
    pub seed: u64,
    pub count: usize,
    /// Pair path `2j + 1` with path `2j` by negating its prior draw and
    /// path noise. Each sample keeps its law; for odd scores the output set
    /// is exactly symmetric.
    pub antithetic: bool,
}

impl SamplerConfig {
    pub fn new(method: Method, nfe: usize, truncation: usize, count: usize, seed: u64) -> Self {
        Self {
            nfe,
            method,
            t_eps: DEFAULT_T_EPS,
            truncation,
            seed,
            count,
            antithetic: false,
        }
    }

    pub fn validate(&self, available_modes: usize) -> Result<()> {
        if self.nfe == 0 {
            return Err(Error::InvalidParameter("nfe must be >= 1".into()));
        }
        if !(self.t_eps > 0.0 && self.t_eps < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_eps must lie in (0, 1), got {}",
                self.t_eps
            )));
        }
        if self.truncation == 0 || self.truncation > available_modes {
            return Err(Error::InvalidParameter(format!(
                "truncation {} not in 1..={available_modes}",
                self.truncation
            )));
        }
        Ok(())
    }

    /// Reverse-time step size.
    pub fn step(&self) -> f64 {
        (1.0 - self.t_eps) / self.nfe as f64
    }
}

/// Knobs of the reverse SDE. The defaults give the standard time reversal;
/// `score_weight = 0.5` with `diffusion_scale = 0` is exactly the PF-ODE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeOptions {
    pub score_weight: f64,
    pub diffusion_scale: f64,
}

impl Default for SdeOptions {
    fn default() -> Self {
        Self {
            score_weight: 1.0,
            diffusion_scale: 1.0,
        }
    }
}

const ODE_DYNAMICS: SdeOptions = SdeOptions {
    score_weight: 0.5,
    diffusion_scale: 0.0,
};

/// Euler(-Maruyama) integration of one path from `y` at `t = 1` down to `t_eps`.
#[allow(clippy::too_many_arguments)]
fn integrate_path(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
    mut y: Vec<f64>,
    dynamics: SdeOptions,
    path: u64,
    sign: f64,
) -> Result<Vec<f64>> {
    let ds = cfg.step();
    let score_coeff = 2.0 * dynamics.score_weight;
    let mut noise = (dynamics.diffusion_scale != 0.0).then(|| substream(cfg.seed, Stream::PathNoise, path));

    for step in 0..cfg.nfe {
        let t = 1.0 - step as f64 * ds;
        let alpha = schedule.alpha(t)?;
        let s = score.eval(t, &y)?;
        if s.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: y.len(),
                got: s.len(),
            });
        }
        let half = 0.5 * alpha;
        for ((yn, &sn), &lambda) in y.iter_mut().zip(&s).zip(eigenvalues) {
            let mut next = *yn + ds * (half * (*yn + score_coeff * sn));
            if let Some(rng) = noise.as_mut() {
                let z: f64 = StandardNormal.sample(rng);
                let z = sign * z;
                next += dynamics.diffusion_scale * (alpha * lambda * ds).sqrt() * z;
            }
            *yn = next;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step, t });
        }
    }
    Ok(y)
}

fn run(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
    dynamics: SdeOptions,
) -> Result<Vec<FunctionSample>> {
    cfg.validate(eigenvalues.len())?;
    let lambdas = &eigenvalues[..cfg.truncation];
    (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| {
            let (path, sign) = if cfg.antithetic {
                (i / 2, if i % 2 == 1 { -1.0 } else { 1.0 })
            } else {
                (i, 1.0)
            };
            let y0: Vec<f64> = prior_draw(lambdas, cfg.seed, path)
                .into_iter()
                .map(|v| sign * v)
                .collect();
            integrate_path(score, lambdas, schedule, cfg, y0, dynamics, path, sign).map(FunctionSample::from_coeffs)
        })
        .collect()
}

/// Probability-flow ODE samples; the only randomness is `Y_0`.
pub fn pf_ode_sample(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
) -> Result<Vec<FunctionSample>> {
    run(score, eigenvalues, schedule, cfg, ODE_DYNAMICS)
}

/// Reverse-SDE samples with the standard drift and diffusion.
pub fn reverse_sde_sample(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
) -> Result<Vec<FunctionSample>> {
    reverse_sde_sample_with(score, eigenvalues, schedule, cfg, SdeOptions::default())
}

pub fn reverse_sde_sample_with(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
    options: SdeOptions,
) -> Result<Vec<FunctionSample>> {
    run(score, eigenvalues, schedule, cfg, options)
}

/// Dispatches on `cfg.method`.
pub fn sample(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
) -> Result<Vec<FunctionSample>> {
    match cfg.method {
        Method::Ode => pf_ode_sample(score, eigenvalues, schedule, cfg),
        Method::Sde => reverse_sde_sample(score, eigenvalues, schedule, cfg),
    }
}

/// ODE and SDE samples from the same `Y_0` draws.
pub fn paired_sample(
    score: &dyn ScoreFn,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    cfg: &SamplerConfig,
) -> Result<(Vec<FunctionSample>, Vec<FunctionSample>)> {
    let ode = pf_ode_sample(score, eigenvalues, schedule, cfg)?;
    let sde = reverse_sde_sample(score, eigenvalues, schedule, cfg)?;
    Ok((ode, sde))
}

/// Exact PF-ODE flow from `t = 1` to `t_target` for single-Gaussian data.
///
/// With an affine score the flow keeps each standardised coordinate
/// `(y - m(t) mu) / sqrt(v(t))` constant, where `v(t) = m^2 c + lambda (1 - m^2)`.
pub fn exact_gaussian_transport(
    spec: &MixtureDataSpec,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    y0: &[f64],
    t_target: f64,
) -> Result<Vec<f64>> {
    if spec.components() != 1 {
        return Err(Error::InvalidParameter(format!(
            "exact transport needs a single Gaussian component, got {}",
            spec.components()
        )));
    }
    if y0.len() > spec.modes() || y0.len() > eigenvalues.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.modes().min(eigenvalues.len()),
            got: y0.len(),
        });
    }
    let (m1, mt) = (schedule.mean_factor(1.0)?, schedule.mean_factor(t_target)?);
    let (m1_sq, mt_sq) = (m1 * m1, mt * mt);
    let (mu, c) = (&spec.means()[0], &spec.variances()[0]);
    Ok(y0
        .iter()
        .enumerate()
        .map(|(n, &y)| {
            let lambda = eigenvalues[n];
            if lambda == 0.0 {
                return y * (mt / m1);
            }
            let v1 = lambda + m1_sq * (c[n] - lambda);
            let vt = lambda + mt_sq * (c[n] - lambda);
            mt * mu[n] + (vt / v1).sqrt() * (y - m1 * mu[n])
        })
        .collect())
}
