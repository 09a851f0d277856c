//! Builders for the three desk-scale experiments: the `Quadratic` mixture, a
//! single-Gaussian sanity law, and space-time heat-equation fields.

use crate::error::{Error, Result};
use crate::heat::{heat_solve, lp_distance, regenerate_ground_truth, Boundary, HeatProblem, Norm, SpaceTimeField};
use crate::oracle::{quadratic_dataset_spec, MixtureDataSpec};
use crate::spectral::{bessel_basis, rbf_basis, BesselPriorSpec, Grid, RbfKernelSpec, SpectralBasis};

/// A basis together with a data law in its coordinates.
#[derive(Debug, Clone)]
pub struct Setup {
    pub basis: SpectralBasis,
    pub spec: MixtureDataSpec,
}

impl Setup {
    pub fn eigenvalues(&self) -> &[f64] {
        self.basis.eigenvalues()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineBasisConfig {
    pub points: usize,
    pub bounds: (f64, f64),
    pub kernel: RbfKernelSpec,
    pub truncation: usize,
}

impl Default for LineBasisConfig {
    fn default() -> Self {
        Self {
            points: 100,
            bounds: (-10.0, 10.0),
            kernel: RbfKernelSpec { gain: 1.0, len: 0.8 },
            truncation: 32,
        }
    }
}

impl LineBasisConfig {
    pub fn build(&self) -> Result<SpectralBasis> {
        let grid = Grid::line(self.points, self.bounds.0, self.bounds.1)?;
        rbf_basis(&grid, &self.kernel, self.truncation)
    }
}

/// `f(x) = a x^2 + eps`, `a = +-1`, per-point noise of the given variance.
pub fn quadratic(basis: &LineBasisConfig, noise_variance: f64) -> Result<Setup> {
    let basis = basis.build()?;
    let spec = quadratic_dataset_spec(&basis, noise_variance)?;
    Ok(Setup { basis, spec })
}

/// Single Gaussian with mean `mean_scale * sqrt(lambda_n)` and variance
/// `variance_ratio * lambda_n` on every mode.
pub fn gaussian_sanity(basis: &LineBasisConfig, mean_scale: f64, variance_ratio: f64) -> Result<Setup> {
    if !(variance_ratio >= 0.0) {
        return Err(Error::InvalidParameter(format!("variance ratio {variance_ratio}")));
    }
    let basis = basis.build()?;
    let lambdas = basis.eigenvalues();
    let spec = MixtureDataSpec::gaussian(
        lambdas.iter().map(|l| mean_scale * l.sqrt()).collect(),
        lambdas.iter().map(|l| variance_ratio * l).collect(),
    )?;
    Ok(Setup { basis, spec })
}

/// Exact draws from `spec`; with `antithetic` the set is `{x_j, -x_j}`.
pub fn reference_draws(spec: &MixtureDataSpec, count: usize, seed: u64, antithetic: bool) -> Vec<Vec<f64>> {
    if !antithetic {
        return spec.sample(count, seed);
    }
    let base = spec.sample(count.div_ceil(2), seed);
    base.into_iter()
        .flat_map(|x| {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            [x, neg]
        })
        .take(count)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatExperiment {
    pub points_per_axis: usize,
    pub frames: usize,
    pub t_end: f64,
    pub beta: f64,
    pub dt: f64,
    pub boundary: Boundary,
    pub prior: BesselPriorSpec,
    /// Spatial modes kept per frame.
    pub truncation: usize,
    /// Data variance as a multiple of the prior eigenvalue.
    pub variance_ratio: f64,
    pub ic_terms: usize,
    pub ic_seed: u64,
}

impl Default for HeatExperiment {
    fn default() -> Self {
        Self {
            points_per_axis: 64,
            frames: 5,
            t_end: 1.0,
            beta: 0.05,
            dt: 1e-3,
            boundary: Boundary::Dirichlet,
            prior: BesselPriorSpec {
                scale: 8.0,
                power: 0.55,
            },
            truncation: 64,
            variance_ratio: 1.0,
            ic_terms: 4,
            ic_seed: 0,
        }
    }
}

/// Space-time field law: frame `f`, spatial mode `n` is coefficient
/// `f * M + n`, and every frame shares the spatial prior eigenvalues.
#[derive(Debug, Clone)]
pub struct HeatSetup {
    pub problem: HeatProblem,
    pub basis: SpectralBasis,
    pub save_times: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub spec: MixtureDataSpec,
    /// Solver output the data law is centred on.
    pub structure: SpaceTimeField,
}

impl HeatExperiment {
    pub fn build(&self) -> Result<HeatSetup> {
        if self.frames == 0 || !(self.t_end > 0.0) {
            return Err(Error::InvalidParameter("need at least one frame and t_end > 0".into()));
        }
        if self.ic_terms == 0 {
            return Err(Error::InvalidParameter("ic_terms must be >= 1".into()));
        }
        let grid = Grid::square(self.points_per_axis, -1.0, 1.0)?;
        let problem = HeatProblem::new(self.beta, grid.clone(), self.dt, self.boundary)?;
        let basis = bessel_basis(&grid, &self.prior, self.truncation)?;
        let save_times: Vec<f64> = if self.frames == 1 {
            vec![0.0]
        } else {
            (0..self.frames)
                .map(|f| self.t_end * f as f64 / (self.frames - 1) as f64)
                .collect()
        };
        let ic = crate::heat::sine_mixture_ic(&grid, self.ic_terms, self.ic_seed);
        let structure = heat_solve(&problem, &ic, &save_times)?;
        let mut mean = Vec::with_capacity(self.frames * self.truncation);
        for frame in &structure.frames {
            mean.extend(basis.to_coeffs(frame)?);
        }
        let eigenvalues: Vec<f64> = (0..self.frames)
            .flat_map(|_| basis.eigenvalues().iter().copied())
            .collect();
        let spec = MixtureDataSpec::gaussian(mean, eigenvalues.iter().map(|l| self.variance_ratio * l).collect())?;
        Ok(HeatSetup {
            problem,
            basis,
            save_times,
            eigenvalues,
            spec,
            structure,
        })
    }
}

/// L2 and Linf distance between a synthetic field and its re-solved truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldError {
    pub l2: f64,
    pub linf: f64,
}

impl HeatSetup {
    pub fn frames(&self) -> usize {
        self.save_times.len()
    }

    /// Grid field of a space-time coefficient vector.
    pub fn decode(&self, coeffs: &[f64]) -> Result<SpaceTimeField> {
        let m = self.basis.truncation();
        if coeffs.len() != m * self.frames() {
            return Err(Error::DimensionMismatch {
                expected: m * self.frames(),
                got: coeffs.len(),
            });
        }
        let frames = coeffs
            .chunks(m)
            .map(|c| self.basis.from_coeffs(c))
            .collect::<Result<Vec<_>>>()?;
        SpaceTimeField::new(self.basis.grid().clone(), self.save_times.clone(), frames)
    }

    /// Distances of a field to the heat solution from its own first frame.
    pub fn field_error(&self, field: &SpaceTimeField) -> Result<FieldError> {
        let truth = regenerate_ground_truth(field, &self.problem)?;
        Ok(FieldError {
            l2: lp_distance(field, &truth, Norm::L2)?,
            linf: lp_distance(field, &truth, Norm::LInf)?,
        })
    }

    pub fn evaluate(&self, coeffs: &[f64]) -> Result<FieldError> {
        self.field_error(&self.decode(coeffs)?)
    }
}
