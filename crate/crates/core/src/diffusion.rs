//! Forward noising: the cosine log-SNR schedule, closed-form variance-preserving
//! marginals per spectral mode, and a quadrature marginal for arbitrary linear
//! per-mode SDEs `dX = b(t) X dt + sqrt(lambda) sigma(t) dB`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_unit_interval(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::OutOfRange { t, lo: 0.0, hi: 1.0 })
    }
}

/// A noise schedule on `t in [0, 1]`, described by its log signal-to-noise ratio.
///
/// Everything else (mean factor, drift coefficient) follows from the
/// variance-preserving identity `m(t)^2 = sigmoid(log_snr(t))`.
pub trait Schedule: Send + Sync {
    fn log_snr(&self, t: f64) -> Result<f64>;

    fn log_snr_derivative(&self, t: f64) -> Result<f64>;

    /// `m(t)^2`.
    fn mean_factor_sq(&self, t: f64) -> Result<f64> {
        Ok(sigmoid(self.log_snr(t)?))
    }

    fn mean_factor(&self, t: f64) -> Result<f64> {
        Ok(self.mean_factor_sq(t)?.sqrt())
    }

    /// Drift coefficient `alpha(t) = -d/dt log m(t)^2 = -log_snr'(t) * sigmoid(-log_snr(t))`.
    fn alpha(&self, t: f64) -> Result<f64> {
        let l = self.log_snr(t)?;
        Ok(-self.log_snr_derivative(t)? * sigmoid(-l))
    }

    fn marginal(&self, t: f64) -> Result<ModeMarginal> {
        let m = self.mean_factor(t)?;
        Ok(ModeMarginal {
            mean_factor: m,
            noise_variance_factor: 1.0 - m * m,
        })
    }
}

/// Shifted-cosine schedule `log_snr(t) = -2 ln tan(a t + b)` fitted to the
/// endpoint values at `t = 0` and `t = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSchedule {
    logsnr_max: f64,
    logsnr_min: f64,
    slope: f64,
    offset: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::cosine(10.0, -10.0).expect("default endpoints are valid")
    }
}

impl NoiseSchedule {
    pub fn cosine(logsnr_max: f64, logsnr_min: f64) -> Result<Self> {
        if !(logsnr_max.is_finite() && logsnr_min.is_finite() && logsnr_max > logsnr_min) {
            return Err(Error::InvalidParameter(format!(
                "need finite logsnr_max > logsnr_min, got {logsnr_max} and {logsnr_min}"
            )));
        }
        let offset = (-0.5 * logsnr_max).exp().atan();
        let slope = (-0.5 * logsnr_min).exp().atan() - offset;
        Ok(Self {
            logsnr_max,
            logsnr_min,
            slope,
            offset,
        })
    }

    pub fn logsnr_max(&self) -> f64 {
        self.logsnr_max
    }

    pub fn logsnr_min(&self) -> f64 {
        self.logsnr_min
    }

    fn angle(&self, t: f64) -> f64 {
        self.slope * t + self.offset
    }
}

impl Schedule for NoiseSchedule {
    fn log_snr(&self, t: f64) -> Result<f64> {
        check_unit_interval(t)?;
        Ok(-2.0 * self.angle(t).tan().ln())
    }

    fn log_snr_derivative(&self, t: f64) -> Result<f64> {
        check_unit_interval(t)?;
        Ok(-4.0 * self.slope / (2.0 * self.angle(t)).sin())
    }

    // same value as the trait formula; tan form avoids 0 * inf-like cancellation
    fn alpha(&self, t: f64) -> Result<f64> {
        check_unit_interval(t)?;
        Ok(2.0 * self.slope * self.angle(t).tan())
    }
}

/// Closed-form VP marginal of one mode: `X_t | X_0 ~ N(m X_0, lambda (1 - m^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeMarginal {
    pub mean_factor: f64,
    pub noise_variance_factor: f64,
}

impl ModeMarginal {
    pub fn variance(&self, lambda: f64) -> f64 {
        lambda * self.noise_variance_factor
    }
}

/// Draws `X_t` given `X_0`, independently per mode, from `rng`.
pub fn perturb_with<R: Rng + ?Sized>(
    x0: &[f64],
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    t: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if x0.len() != eigenvalues.len() {
        return Err(Error::DimensionMismatch {
            expected: eigenvalues.len(),
            got: x0.len(),
        });
    }
    let marginal = schedule.marginal(t)?;
    Ok(x0
        .iter()
        .zip(eigenvalues)
        .map(|(&x, &lambda)| {
            let z: f64 = StandardNormal.sample(rng);
            marginal.mean_factor * x + marginal.variance(lambda).sqrt() * z
        })
        .collect())
}

/// Seeded version of [`perturb_with`].
pub fn perturb(x0: &[f64], eigenvalues: &[f64], schedule: &dyn Schedule, t: f64, seed: u64) -> Result<Vec<f64>> {
    perturb_with(x0, eigenvalues, schedule, t, &mut substream(seed, Stream::Perturb, 0))
}

/// A scalar linear SDE for one spectral coordinate:
/// `dX = b(t) X dt + sqrt(lambda) sigma(t) dB`.
pub struct LinearModeSde<'a> {
    drift: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
    diffusion: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
}

impl<'a> LinearModeSde<'a> {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'a,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'a,
    ) -> Self {
        Self {
            drift: Box::new(drift),
            diffusion: Box::new(diffusion),
        }
    }

    /// The variance-preserving SDE: `b = -alpha/2`, `sigma = sqrt(alpha)`.
    pub fn variance_preserving(schedule: &'a dyn Schedule) -> Self {
        Self::new(
            move |t| -0.5 * schedule.alpha(t).unwrap_or(f64::NAN),
            move |t| schedule.alpha(t).unwrap_or(f64::NAN).sqrt(),
        )
    }

    pub fn drift(&self, t: f64) -> f64 {
        (self.drift)(t)
    }

    pub fn diffusion(&self, t: f64) -> f64 {
        (self.diffusion)(t)
    }
}

/// Law of one mode at time zero: `X_0 = mean_factor * x + N(0, variance)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialLaw {
    pub mean_factor: f64,
    pub variance: f64,
}

impl InitialLaw {
    pub const POINT: Self = Self {
        mean_factor: 1.0,
        variance: 0.0,
    };
}

/// Marginal `(mean_factor, variance)` at time `t` of a linear mode SDE started
/// from a point mass, by trapezoid quadrature with `steps` intervals.
///
/// With `m(s) = exp(int_0^s b)`, the mean factor is `m(t)` and the variance is
/// `m(t)^2 int_0^t lambda sigma(s)^2 / m(s)^2 ds`.
pub fn marginal_stats_quadrature(sde: &LinearModeSde<'_>, lambda: f64, t: f64, steps: usize) -> Result<(f64, f64)> {
    marginal_stats_quadrature_from(sde, lambda, t, steps, InitialLaw::POINT)
}

/// As [`marginal_stats_quadrature`], propagating a nondegenerate law at time zero.
pub fn marginal_stats_quadrature_from(
    sde: &LinearModeSde<'_>,
    lambda: f64,
    t: f64,
    steps: usize,
    initial: InitialLaw,
) -> Result<(f64, f64)> {
    if steps < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 quadrature steps, got {steps}"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::OutOfRange {
            t,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let h = t / steps as f64;
    let integrand = |s: f64, log_m: f64| -> Result<f64> {
        let sigma = sde.diffusion(s);
        let v = lambda * sigma * sigma * (-2.0 * log_m).exp();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::QuadratureDivergence { s })
        }
    };

    let mut log_m = 0.0;
    let mut b_prev = sde.drift(0.0);
    if !b_prev.is_finite() {
        return Err(Error::QuadratureDivergence { s: 0.0 });
    }
    let mut g_prev = integrand(0.0, 0.0)?;
    let mut acc = 0.0;
    for i in 1..=steps {
        let s = h * i as f64;
        let b = sde.drift(s);
        if !b.is_finite() {
            return Err(Error::QuadratureDivergence { s });
        }
        log_m += 0.5 * h * (b_prev + b);
        let g = integrand(s, log_m)?;
        acc += 0.5 * h * (g_prev + g);
        b_prev = b;
        g_prev = g;
    }
    let m = log_m.exp();
    Ok((initial.mean_factor * m, m * m * (initial.variance + acc)))
}
