//! Exact logarithmic gradients for data laws that are diagonal Gaussian
//! mixtures in the eigenbasis of `Q`.
//!
//! Under the VP forward process each spectral coordinate evolves
//! independently, so the noised law of mode `n` at time `t` is the
//! one-dimensional mixture `sum_k w_k N(m mu_kn, m^2 c_kn + lambda_n (1 - m^2))`.
//! The logarithmic gradient in the Cameron-Martin geometry has coefficients
//! `lambda_n * d/dx log p_t^(n)(x_n)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffusion::Schedule;
use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::spectral::{FunctionSample, SpectralBasis};

/// A data law `P_0 = sum_k w_k N(mu_k, diag(c_k))` in spectral coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDataSpec {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl MixtureDataSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, variances: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        if means.len() != k || variances.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: means.len().min(variances.len()),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        let m = means[0].len();
        for (mu, c) in means.iter().zip(&variances) {
            if mu.len() != m || c.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: if mu.len() != m { mu.len() } else { c.len() },
                });
            }
            if mu.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter("component means must be finite".into()));
            }
            if c.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::InvalidParameter("component variances must be >= 0".into()));
            }
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Single Gaussian component.
    pub fn gaussian(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![means], vec![variances])
    }

    /// Dirac mass at `x0`.
    pub fn point_mass(x0: Vec<f64>) -> Result<Self> {
        let m = x0.len();
        Self::gaussian(x0, vec![0.0; m])
    }

    /// The reference measure itself, `N(0, Q)`.
    pub fn stationary(eigenvalues: &[f64]) -> Result<Self> {
        Self::gaussian(vec![0.0; eigenvalues.len()], eigenvalues.to_vec())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn modes(&self) -> usize {
        self.means[0].len()
    }

    /// Restricts every component to the leading `m` modes.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.modes() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate {} modes to {m}",
                self.modes()
            )));
        }
        Ok(Self {
            weights: self.weights.clone(),
            means: self.means.iter().map(|v| v[..m].to_vec()).collect(),
            variances: self.variances.iter().map(|v| v[..m].to_vec()).collect(),
        })
    }

    /// One draw of spectral coefficients.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.components() - 1;
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        self.means[k]
            .iter()
            .zip(&self.variances[k])
            .map(|(&mu, &c)| {
                let z: f64 = StandardNormal.sample(rng);
                mu + c.sqrt() * z
            })
            .collect()
    }

    /// `count` independent draws; draw `i` uses its own substream.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..count as u64)
            .map(|i| self.sample_with(&mut substream(seed, Stream::Data, i)))
            .collect()
    }
}

/// The two-component `Quadratic` law: `f(x) = a x^2 + eps` with `a = +-1`
/// equally likely and `eps` i.i.d. `N(0, noise_variance)` per grid point.
///
/// Projected white noise has variance `noise_variance * w` on every mode of a
/// `w`-orthonormal basis.
pub fn quadratic_dataset_spec(basis: &SpectralBasis, noise_variance: f64) -> Result<MixtureDataSpec> {
    if basis.grid().dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: basis.grid().dim(),
        });
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise variance {noise_variance}")));
    }
    let sq: Vec<f64> = basis.grid().axis_coords(0).iter().map(|x| x * x).collect();
    let up = basis.to_coeffs(&sq)?;
    let down: Vec<f64> = up.iter().map(|c| -c).collect();
    let c = vec![noise_variance * basis.quadrature_weight(); basis.truncation()];
    MixtureDataSpec::new(vec![0.5, 0.5], vec![down, up], vec![c.clone(), c])
}

/// Noised one-dimensional law of a single mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeDensityParams {
    pub weights: Vec<f64>,
    pub component_means: Vec<f64>,
    pub component_variances: Vec<f64>,
}

impl ModeDensityParams {
    /// `log sum_k w_k N(x; m_k, v_k)`.
    pub fn log_density(&self, x: f64) -> Result<f64> {
        let logs = self.component_log_terms(x)?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln())
    }

    fn component_log_terms(&self, x: f64) -> Result<Vec<f64>> {
        if self.component_variances.iter().all(|&v| v <= 0.0) {
            return Err(Error::DegenerateDensity);
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.component_means)
            .zip(&self.component_variances)
            .map(|((&w, &m), &v)| {
                if v <= 0.0 || w <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    let d = x - m;
                    w.ln() - 0.5 * (2.0 * std::f64::consts::PI * v).ln() - 0.5 * d * d / v
                }
            })
            .collect())
    }

    /// Posterior component probabilities at `x`, via log-sum-exp.
    fn responsibilities(&self, x: f64) -> Result<Vec<f64>> {
        let mut logs = self.component_log_terms(x)?;
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateDensity);
        }
        let mut total = 0.0;
        for l in logs.iter_mut() {
            *l = (*l - max).exp();
            total += *l;
        }
        logs.iter_mut().for_each(|r| *r /= total);
        Ok(logs)
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange { t, lo: 0.0, hi: 1.0 })
    }
}

/// Noised law of mode `n` at time `t`: means `m mu_kn`, variances
/// `m^2 c_kn + lambda_n (1 - m^2)`.
pub fn mode_density_params(
    spec: &MixtureDataSpec,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    t: f64,
    n: usize,
) -> Result<ModeDensityParams> {
    check_positive_time(t)?;
    if n >= spec.modes() || n >= eigenvalues.len() {
        return Err(Error::InvalidParameter(format!("mode {n} out of range")));
    }
    let m2 = schedule.mean_factor_sq(t)?;
    let params = build_params(spec, eigenvalues[n], m2.sqrt(), m2, n);
    if params.component_variances.iter().all(|&v| v <= 0.0) {
        return Err(Error::DegenerateDensity);
    }
    Ok(params)
}

fn build_params(spec: &MixtureDataSpec, lambda: f64, m: f64, m2: f64, n: usize) -> ModeDensityParams {
    ModeDensityParams {
        weights: spec.weights.clone(),
        component_means: spec.means.iter().map(|mu| m * mu[n]).collect(),
        // lambda + m^2 (c - lambda): exact when c == lambda
        component_variances: spec.variances.iter().map(|c| lambda + m2 * (c[n] - lambda)).collect(),
    }
}

/// `d/dx log p(x)` of a one-dimensional Gaussian mixture.
pub fn mode_score(params: &ModeDensityParams, x: f64) -> Result<f64> {
    let r = params.responsibilities(x)?;
    let mut acc = 0.0;
    for ((&rk, &mk), &vk) in r.iter().zip(&params.component_means).zip(&params.component_variances) {
        if rk > 0.0 {
            acc += rk * ((x - mk) / vk);
        }
    }
    Ok(-acc)
}

fn check_modes(spec: &MixtureDataSpec, eigenvalues: &[f64], modes: usize) -> Result<()> {
    if modes > spec.modes() || modes > eigenvalues.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.modes().min(eigenvalues.len()),
            got: modes,
        });
    }
    Ok(())
}

/// Coefficients of the logarithmic gradient `rho^{mu_t}(u)` of the noised
/// mixture, restricted to the first `u.len()` modes.
///
/// Component responsibilities come from the joint likelihood of all given
/// coordinates, since the component label is shared across modes. For a
/// single component this is the mode-wise Gaussian score
/// `-(x - m mu) lambda / v`, and modes with `lambda = 0` give 0.
pub fn log_gradient_coeffs(
    spec: &MixtureDataSpec,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    t: f64,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_positive_time(t)?;
    check_modes(spec, eigenvalues, u.len())?;
    let m2 = schedule.mean_factor_sq(t)?;
    let m = m2.sqrt();
    let k = spec.components();

    if k == 1 {
        let (mu, c) = (&spec.means[0], &spec.variances[0]);
        let mut out = Vec::with_capacity(u.len());
        for (n, &x) in u.iter().enumerate() {
            let lambda = eigenvalues[n];
            if lambda == 0.0 {
                out.push(0.0);
                continue;
            }
            let v = lambda + m2 * (c[n] - lambda);
            if v <= 0.0 {
                return Err(Error::DegenerateDensity);
            }
            out.push(-((x - m * mu[n]) * (lambda / v)));
        }
        return Ok(out);
    }

    let mut logs = vec![f64::NEG_INFINITY; k];
    for (j, log) in logs.iter_mut().enumerate() {
        if spec.weights[j] <= 0.0 {
            continue;
        }
        let mut acc = spec.weights[j].ln();
        for (n, &x) in u.iter().enumerate() {
            let lambda = eigenvalues[n];
            let v = lambda + m2 * (spec.variances[j][n] - lambda);
            if v > 0.0 {
                let d = x - m * spec.means[j][n];
                acc -= 0.5 * (v.ln() + d * d / v);
            } else if x != m * spec.means[j][n] {
                // off a degenerate coordinate: zero density
                acc = f64::NEG_INFINITY;
                break;
            }
        }
        *log = acc;
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateDensity);
    }
    let mut total = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    let mut out = Vec::with_capacity(u.len());
    for (n, &x) in u.iter().enumerate() {
        let lambda = eigenvalues[n];
        if lambda == 0.0 {
            out.push(0.0);
            continue;
        }
        let mut acc = 0.0;
        for (j, &weight) in logs.iter().enumerate() {
            let r = weight / total;
            if r > 0.0 {
                let v = lambda + m2 * (spec.variances[j][n] - lambda);
                if v <= 0.0 {
                    return Err(Error::DegenerateDensity);
                }
                acc += r * ((x - m * spec.means[j][n]) * (lambda / v));
            }
        }
        out.push(-acc);
    }
    Ok(out)
}

/// `lambda_n * mode_score(params(t, n), u_n)` for every mode: the gradient of
/// the product of the one-dimensional marginals.
///
/// This coincides with [`log_gradient_coeffs`] when the modes of the noised
/// law are independent (always for `K = 1`). For a mixture whose label is
/// shared across modes it targets the product of marginals instead.
pub fn factorized_log_gradient_coeffs(
    spec: &MixtureDataSpec,
    eigenvalues: &[f64],
    schedule: &dyn Schedule,
    t: f64,
    u: &[f64],
) -> Result<Vec<f64>> {
    check_positive_time(t)?;
    check_modes(spec, eigenvalues, u.len())?;
    let m2 = schedule.mean_factor_sq(t)?;
    let m = m2.sqrt();
    u.iter()
        .enumerate()
        .map(|(n, &x)| {
            let lambda = eigenvalues[n];
            if lambda == 0.0 {
                return Ok(0.0);
            }
            let params = build_params(spec, lambda, m, m2, n);
            if params.component_variances.iter().all(|&v| v <= 0.0) {
                return Err(Error::DegenerateDensity);
            }
            Ok(lambda * mode_score(&params, x)?)
        })
        .collect()
}

/// `rho^{mu_t}(u)` as a function sample.
pub fn log_gradient(
    spec: &MixtureDataSpec,
    basis: &SpectralBasis,
    schedule: &dyn Schedule,
    t: f64,
    u: &FunctionSample,
) -> Result<FunctionSample> {
    log_gradient_coeffs(spec, basis.eigenvalues(), schedule, t, &u.coeffs).map(FunctionSample::from_coeffs)
}

/// Logarithmic gradient of the perturbation kernel `mu_{t|x0}`:
/// `-(x_t - m x_0) / (1 - m^2)` per mode, independent of the eigenvalues.
pub fn conditional_log_gradient(x0: &[f64], schedule: &dyn Schedule, t: f64, xt: &[f64]) -> Result<Vec<f64>> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::OutOfRange { t, lo: 0.0, hi: 1.0 });
    }
    if x0.len() != xt.len() {
        return Err(Error::DimensionMismatch {
            expected: x0.len(),
            got: xt.len(),
        });
    }
    let marginal = schedule.marginal(t)?;
    let (m, s) = (marginal.mean_factor, marginal.noise_variance_factor);
    Ok(x0.iter().zip(xt).map(|(&a, &b)| -(b - m * a) / s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::NoiseSchedule;
    use crate::spectral::{rbf_basis, Grid, RbfKernelSpec};
    use approx::assert_relative_eq;

    fn quadratic_basis(m: usize) -> SpectralBasis {
        let grid = Grid::line(100, -10.0, 10.0).unwrap();
        rbf_basis(&grid, &RbfKernelSpec::new(1.0, 0.8).unwrap(), m).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(MixtureDataSpec::new(vec![0.5, 0.4], vec![vec![0.0]; 2], vec![vec![1.0]; 2]).is_err());
        assert!(MixtureDataSpec::new(vec![1.0], vec![vec![0.0]], vec![vec![-1.0]]).is_err());
        assert!(MixtureDataSpec::new(vec![1.0], vec![vec![0.0, 1.0]], vec![vec![1.0]]).is_err());
        assert!(MixtureDataSpec::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn quadratic_spec_shape() {
        let basis = quadratic_basis(16);
        let spec = quadratic_dataset_spec(&basis, 0.0).unwrap();
        assert_eq!(spec.components(), 2);
        assert_eq!(spec.weights(), &[0.5, 0.5]);
        for n in 0..16 {
            assert_eq!(spec.means()[0][n], -spec.means()[1][n]);
            assert_eq!(spec.variances()[0][n], 0.0);
        }
        let noisy = quadratic_dataset_spec(&basis, 1.0).unwrap();
        assert!(noisy.variances().iter().flatten().all(|&c| (c - 0.2).abs() < 1e-15));
    }

    #[test]
    fn mode_params_near_terminal_time_approach_prior() {
        let s = NoiseSchedule::default();
        let basis = quadratic_basis(8);
        let spec = quadratic_dataset_spec(&basis, 1.0).unwrap();
        let m2 = s.mean_factor_sq(1.0).unwrap();
        assert_relative_eq!(m2, 4.539786870243442e-5, max_relative = 1e-9);
        for n in 0..8 {
            let p = mode_density_params(&spec, basis.eigenvalues(), &s, 1.0, n).unwrap();
            let lambda = basis.eigenvalues()[n];
            for k in 0..2 {
                let mu = spec.means()[k][n];
                assert_relative_eq!(p.component_means[k], m2.sqrt() * mu, max_relative = 1e-12);
                assert!((p.component_variances[k] - lambda).abs() <= m2 * (0.2 + lambda) + 1e-15);
            }
            let mid = mode_density_params(&spec, basis.eigenvalues(), &s, 0.5, n).unwrap();
            assert_eq!(mid.component_variances[0], mid.component_variances[1]);
        }
    }

    #[test]
    fn mode_params_point_mass_is_perturbation_kernel() {
        let s = NoiseSchedule::default();
        let spec = MixtureDataSpec::point_mass(vec![1.0]).unwrap();
        let p = mode_density_params(&spec, &[0.7], &s, 0.3, 0).unwrap();
        let nv = s.marginal(0.3).unwrap().variance(0.7);
        assert_relative_eq!(p.component_variances[0], nv, max_relative = 1e-12);
        assert!(mode_density_params(&spec, &[0.7], &s, 0.0, 0).is_err());
        assert!(matches!(
            mode_density_params(&spec, &[0.0], &s, 0.3, 0),
            Err(Error::DegenerateDensity)
        ));
    }

    #[test]
    fn mode_score_examples() {
        let single = ModeDensityParams {
            weights: vec![1.0],
            component_means: vec![0.0],
            component_variances: vec![2.0],
        };
        assert_eq!(mode_score(&single, 3.0).unwrap(), -1.5);

        let sym = ModeDensityParams {
            weights: vec![0.5, 0.5],
            component_means: vec![-1.0, 1.0],
            component_variances: vec![1.0, 1.0],
        };
        assert_eq!(mode_score(&sym, 0.0).unwrap(), 0.0);

        let h = 1e-6;
        let fd = (sym.log_density(0.5 + h).unwrap() - sym.log_density(0.5 - h).unwrap()) / (2.0 * h);
        assert!((mode_score(&sym, 0.5).unwrap() - fd).abs() <= 1e-6);

        let dead = ModeDensityParams {
            weights: vec![1.0],
            component_means: vec![0.0],
            component_variances: vec![0.0],
        };
        assert!(matches!(mode_score(&dead, 0.0), Err(Error::DegenerateDensity)));
    }

    #[test]
    fn far_tail_score_is_stable() {
        // log-sum-exp keeps responsibilities finite far from every component
        let p = ModeDensityParams {
            weights: vec![0.5, 0.5],
            component_means: vec![-100.0, 100.0],
            component_variances: vec![1e-4, 1e-4],
        };
        let s = mode_score(&p, 5000.0).unwrap();
        assert_relative_eq!(s, -(5000.0 - 100.0) / 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn stationary_data_gives_minus_identity() {
        let s = NoiseSchedule::default();
        let lambdas = [1.4, 0.7, 0.2, 0.05];
        let spec = MixtureDataSpec::stationary(&lambdas).unwrap();
        let u = [0.3, -1.2, 2.5, 0.01];
        for &t in &[0.01, 0.3, 0.77, 1.0] {
            let g = log_gradient_coeffs(&spec, &lambdas, &s, t, &u).unwrap();
            for (a, b) in g.iter().zip(&u) {
                assert_eq!(*a, -*b);
            }
        }
    }

    #[test]
    fn zero_eigenvalue_modes_are_zero_and_symmetric_mixture_is_odd() {
        let s = NoiseSchedule::default();
        let basis = quadratic_basis(12);
        let spec = quadratic_dataset_spec(&basis, 1.0).unwrap();
        let zero = vec![0.0; 12];
        let g = log_gradient_coeffs(&spec, basis.eigenvalues(), &s, 0.4, &zero).unwrap();
        assert!(g.iter().all(|&x| x == 0.0));

        let mut lambdas = basis.eigenvalues().to_vec();
        lambdas[5] = 0.0;
        let u: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let g = log_gradient_coeffs(&spec, &lambdas, &s, 0.4, &u).unwrap();
        assert_eq!(g[5], 0.0);
    }

    #[test]
    fn point_mass_log_gradient_is_conditional_score() {
        let s = NoiseSchedule::default();
        let x0 = vec![1.0, -0.5, 2.0];
        let lambdas = [2.0, 0.5, 0.01];
        let spec = MixtureDataSpec::point_mass(x0.clone()).unwrap();
        let xt = vec![0.2, 0.4, -0.3];
        for &t in &[0.1, 0.5, 0.9] {
            let a = log_gradient_coeffs(&spec, &lambdas, &s, t, &xt).unwrap();
            let b = conditional_log_gradient(&x0, &s, t, &xt).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn factorized_gradient_is_scaled_mode_score() {
        let s = NoiseSchedule::default();
        let basis = quadratic_basis(10);
        let spec = quadratic_dataset_spec(&basis, 1.0).unwrap();
        let u: Vec<f64> = (0..10).map(|i| 3.0 * (i as f64 * 1.3).cos()).collect();
        for &t in &[0.05, 0.5, 0.95] {
            let fact = factorized_log_gradient_coeffs(&spec, basis.eigenvalues(), &s, t, &u).unwrap();
            for n in 0..10 {
                let p = mode_density_params(&spec, basis.eigenvalues(), &s, t, n).unwrap();
                let slow = basis.eigenvalues()[n] * mode_score(&p, u[n]).unwrap();
                assert!((fact[n] - slow).abs() <= 1e-10 * slow.abs().max(1.0));
            }
        }
    }

    fn joint_log_density(spec: &MixtureDataSpec, lambdas: &[f64], m2: f64, u: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..spec.components())
            .map(|j| {
                spec.weights()[j].ln()
                    + u.iter()
                        .enumerate()
                        .map(|(n, x)| {
                            let v = m2 * spec.variances()[j][n] + lambdas[n] * (1.0 - m2);
                            let d = x - m2.sqrt() * spec.means()[j][n];
                            -0.5 * (v.ln() + d * d / v)
                        })
                        .sum::<f64>()
            })
            .collect();
        let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    #[test]
    fn joint_gradient_matches_finite_differences() {
        let s = NoiseSchedule::default();
        let lambdas = [1.2, 0.7, 0.3];
        let spec = MixtureDataSpec::new(
            vec![0.3, 0.7],
            vec![vec![1.0, -0.5, 0.2], vec![-0.8, 0.4, 0.0]],
            vec![vec![0.2, 0.3, 0.1], vec![0.5, 0.1, 0.05]],
        )
        .unwrap();
        let u = [0.3, -0.2, 0.45];
        for &t in &[0.2, 0.5, 0.8] {
            let m2 = s.mean_factor_sq(t).unwrap();
            let g = log_gradient_coeffs(&spec, &lambdas, &s, t, &u).unwrap();
            for n in 0..3 {
                let h = 1e-6;
                let (mut up, mut dn) = (u, u);
                up[n] += h;
                dn[n] -= h;
                let fd = (joint_log_density(&spec, &lambdas, m2, &up) - joint_log_density(&spec, &lambdas, m2, &dn))
                    / (2.0 * h);
                assert!(
                    (g[n] - lambdas[n] * fd).abs() < 1e-6,
                    "t {t} mode {n}: {} vs {}",
                    g[n],
                    lambdas[n] * fd
                );
            }
        }
    }

    #[test]
    fn joint_and_factorized_agree_on_product_laws_only() {
        let s = NoiseSchedule::default();
        let lambdas = [1.0, 0.5];
        // components differ in mode 0 only, so the law is a product
        let product = MixtureDataSpec::new(
            vec![0.5, 0.5],
            vec![vec![-1.0, 0.3], vec![1.0, 0.3]],
            vec![vec![0.1, 0.2], vec![0.1, 0.2]],
        )
        .unwrap();
        let u = [0.4, -0.7];
        let joint = log_gradient_coeffs(&product, &lambdas, &s, 0.4, &u).unwrap();
        let fact = factorized_log_gradient_coeffs(&product, &lambdas, &s, 0.4, &u).unwrap();
        for (a, b) in joint.iter().zip(&fact) {
            assert!((a - b).abs() < 1e-12);
        }
        let shared = MixtureDataSpec::new(
            vec![0.5, 0.5],
            vec![vec![-1.0, -1.0], vec![1.0, 1.0]],
            vec![vec![0.1, 0.1], vec![0.1, 0.1]],
        )
        .unwrap();
        let joint = log_gradient_coeffs(&shared, &lambdas, &s, 0.4, &u).unwrap();
        let fact = factorized_log_gradient_coeffs(&shared, &lambdas, &s, 0.4, &u).unwrap();
        assert!((joint[1] - fact[1]).abs() > 1e-3);
    }

    #[test]
    fn conditional_examples() {
        let s = NoiseSchedule::default();
        let m = s.mean_factor(0.4).unwrap();
        let x0 = [1.0, -2.0];
        let xt = [m * 1.0, m * -2.0];
        assert!(conditional_log_gradient(&x0, &s, 0.4, &xt)
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
        assert!(conditional_log_gradient(&x0, &s, 1.0, &xt).is_err());
        assert!(conditional_log_gradient(&x0, &s, 0.0, &xt).is_err());
        assert!(conditional_log_gradient(&x0, &s, 0.5, &xt[..1]).is_err());
    }

    /// Schedule double with a fixed mean factor `m`.
    struct FixedMean(f64);
    impl Schedule for FixedMean {
        fn log_snr(&self, _t: f64) -> Result<f64> {
            let m2 = self.0 * self.0;
            Ok((m2 / (1.0 - m2)).ln())
        }
        fn log_snr_derivative(&self, _t: f64) -> Result<f64> {
            Ok(0.0)
        }
    }

    #[test]
    fn conditional_arithmetic_example() {
        let g = conditional_log_gradient(&[1.0], &FixedMean(0.6), 0.5, &[1.0]).unwrap();
        assert!((g[0] + 0.625).abs() < 1e-12);
    }

    #[test]
    fn mixture_sampling_is_seeded() {
        let basis = quadratic_basis(6);
        let spec = quadratic_dataset_spec(&basis, 1.0).unwrap();
        assert_eq!(spec.sample(10, 3), spec.sample(10, 3));
        let draws = spec.sample(2000, 4);
        let ups = draws.iter().filter(|x| x[0] * spec.means()[1][0] > 0.0).count();
        assert!((800..1200).contains(&ups));
    }
}
