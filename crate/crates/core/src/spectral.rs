//! Gaussian reference measures `N(0, Q)` on discrete grids.
//!
//! A [`SpectralBasis`] stores the leading eigenpairs of the covariance operator
//! `Q`, with eigenvectors orthonormal under the weighted inner product
//! `<f, g>_w = w * sum_i f_i g_i`, where `w` is the grid-cell measure. Functions
//! move between grid values and spectral coefficients through that inner
//! product.
//!
//! Two constructions are provided: a 1D squared-exponential (RBF) kernel whose
//! discretised integral operator is diagonalised numerically, and the 2D Bessel
//! prior `(gamma - Laplacian)^(-s)`, which is diagonal in the real Fourier basis
//! of the periodic grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Tolerance handed to the symmetric eigensolver.
pub const EIGEN_TOLERANCE: f64 = 1e-10;

/// A uniform tensor grid on a box. Points include both endpoints of every axis.
///
/// In 2D, flat indices are row-major: `idx = row * n + col`, with rows running
/// along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    bounds: Vec<(f64, f64)>,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, bounds: Vec<(f64, f64)>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if points_per_axis < 2 {
            return Err(Error::InvalidGrid(format!(
                "points_per_axis must be >= 2, got {points_per_axis}"
            )));
        }
        if bounds.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} axis bounds, got {}",
                bounds.len()
            )));
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis}: bounds must satisfy lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self {
            dim,
            points_per_axis,
            bounds,
        })
    }

    pub fn line(points: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(1, points, vec![(lo, hi)])
    }

    pub fn square(points_per_axis: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(2, points_per_axis, vec![(lo, hi), (lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    /// Total number of grid points, `N^dim`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// Uniform quadrature weight `volume / P`.
    pub fn quadrature_weight(&self) -> f64 {
        self.volume() / self.len() as f64
    }

    /// Node spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        let (lo, hi) = self.bounds[axis];
        (hi - lo) / (self.points_per_axis - 1) as f64
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let (lo, _) = self.bounds[axis];
        let h = self.spacing(axis);
        (0..self.points_per_axis).map(|i| lo + h * i as f64).collect()
    }

    /// Coordinates of every point, in flat-index order.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self.dim {
            1 => self.axis_coords(0).into_iter().map(|x| vec![x]).collect(),
            _ => {
                let xs = self.axis_coords(0);
                let ys = self.axis_coords(1);
                xs.iter().flat_map(|&x| ys.iter().map(move |&y| vec![x, y])).collect()
            }
        }
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let n = self.points_per_axis;
        match self.dim {
            1 => idx == 0 || idx == n - 1,
            _ => {
                let (r, c) = (idx / n, idx % n);
                r == 0 || c == 0 || r == n - 1 || c == n - 1
            }
        }
    }
}

/// Squared-exponential kernel `gain * exp(-|x - y|^2 / len^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernelSpec {
    pub gain: f64,
    pub len: f64,
}

impl RbfKernelSpec {
    pub fn new(gain: f64, len: f64) -> Result<Self> {
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::InvalidParameter(format!("gain must be > 0, got {gain}")));
        }
        if !(len > 0.0 && len.is_finite()) {
            return Err(Error::InvalidParameter(format!("len must be > 0, got {len}")));
        }
        Ok(Self { gain, len })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.gain * (-(d * d) / (self.len * self.len)).exp()
    }
}

/// Bessel prior `N(0, (scale - Laplacian)^(-power))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselPriorSpec {
    pub scale: f64,
    pub power: f64,
}

impl BesselPriorSpec {
    pub fn new(scale: f64, power: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be > 0, got {scale}")));
        }
        if !(power >= 0.0 && power.is_finite()) {
            return Err(Error::InvalidParameter(format!("power must be > 0, got {power}")));
        }
        Ok(Self { scale, power })
    }

    /// Eigenvalue for a squared frequency magnitude.
    pub fn eigenvalue(&self, omega_sq: f64) -> f64 {
        (self.scale + omega_sq).powf(-self.power)
    }
}

/// Truncated eigensystem of a covariance operator on a grid.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    grid: Grid,
    eigenvalues: Vec<f64>,
    // row-major, one grid vector of length P per mode
    eigenvectors: Vec<f64>,
    weight: f64,
}

impl SpectralBasis {
    /// Assembles a basis from precomputed eigenpairs, checking the invariants.
    pub fn from_parts(grid: Grid, eigenvalues: Vec<f64>, eigenvectors: Vec<Vec<f64>>) -> Result<Self> {
        let p = grid.len();
        if eigenvalues.len() != eigenvectors.len() {
            return Err(Error::DimensionMismatch {
                expected: eigenvalues.len(),
                got: eigenvectors.len(),
            });
        }
        if eigenvalues.len() > p {
            return Err(Error::InvalidParameter(format!(
                "truncation {} exceeds grid size {p}",
                eigenvalues.len()
            )));
        }
        if eigenvalues.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter("eigenvalues must be finite and >= 0".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("eigenvalues must be nonincreasing".into()));
        }
        let mut flat = Vec::with_capacity(p * eigenvectors.len());
        for v in &eigenvectors {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: v.len(),
                });
            }
            flat.extend_from_slice(v);
        }
        let weight = grid.quadrature_weight();
        Ok(Self {
            grid,
            eigenvalues,
            eigenvectors: flat,
            weight,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, mode: usize) -> &[f64] {
        let p = self.grid.len();
        &self.eigenvectors[mode * p..(mode + 1) * p]
    }

    pub fn quadrature_weight(&self) -> f64 {
        self.weight
    }

    /// Number of retained modes `M`.
    pub fn truncation(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Keeps the leading `m` modes.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m > self.truncation() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate {} modes to {m}",
                self.truncation()
            )));
        }
        let p = self.grid.len();
        Ok(Self {
            grid: self.grid.clone(),
            eigenvalues: self.eigenvalues[..m].to_vec(),
            eigenvectors: self.eigenvectors[..m * p].to_vec(),
            weight: self.weight,
        })
    }

    /// Same eigenfunctions, eigenvalues multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return Err(Error::InvalidParameter(format!("rescale factor {factor}")));
        }
        let mut out = self.clone();
        out.eigenvalues.iter_mut().for_each(|l| *l *= factor);
        Ok(out)
    }

    /// Weighted inner product on grid values.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weight * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Projection coefficients `<f, phi_n>_w`.
    pub fn to_coeffs(&self, values: &[f64]) -> Result<Vec<f64>> {
        let p = self.grid.len();
        if values.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: values.len(),
            });
        }
        Ok((0..self.truncation())
            .map(|n| self.inner(values, self.eigenvector(n)))
            .collect())
    }

    /// Grid values of `sum_n coeffs[n] * phi_n`.
    pub fn from_coeffs(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let m = self.truncation();
        if coeffs.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: coeffs.len(),
            });
        }
        let mut out = vec![0.0; self.grid.len()];
        for (n, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, &phi) in out.iter_mut().zip(self.eigenvector(n)) {
                *o += c * phi;
            }
        }
        Ok(out)
    }

    /// Largest deviation of the Gram matrix of the eigenvectors from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.truncation();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in i..m {
                let g = self.inner(self.eigenvector(i), self.eigenvector(j));
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// A function carried by its spectral coefficients, optionally with grid values.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSample {
    pub coeffs: Vec<f64>,
    pub grid_values: Option<Vec<f64>>,
}

impl FunctionSample {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        Self {
            coeffs,
            grid_values: None,
        }
    }

    pub fn from_grid(values: Vec<f64>, basis: &SpectralBasis) -> Result<Self> {
        let coeffs = basis.to_coeffs(&values)?;
        Ok(Self {
            coeffs,
            grid_values: Some(values),
        })
    }

    /// Fills `grid_values` from the coefficients.
    pub fn with_grid_values(mut self, basis: &SpectralBasis) -> Result<Self> {
        self.grid_values = Some(basis.from_coeffs(&self.coeffs)?);
        Ok(self)
    }
}

/// Gram matrix `K[i][j] = k(x_i, x_j)` on a 1D grid.
pub fn rbf_gram(grid: &Grid, spec: &RbfKernelSpec) -> Result<DMatrix<f64>> {
    if grid.dim() != 1 {
        return Err(Error::InvalidGrid("RBF kernel requires a 1D grid".into()));
    }
    let x = grid.axis_coords(0);
    let p = x.len();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            spec.gain
        } else {
            spec.eval(x[i], x[j])
        }
    }))
}

/// Eigendecomposition of a symmetric matrix, sorted by descending eigenvalue.
///
/// Negative eigenvalues are clamped to zero. Eigenvectors are rescaled to unit
/// norm under the grid's weighted inner product, so that
/// `K = w * sum_n lambda_n phi_n phi_n^T`.
pub fn eigendecompose(k: &DMatrix<f64>, grid: &Grid, truncation: usize) -> Result<SpectralBasis> {
    let p = grid.len();
    if k.nrows() != p || k.ncols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: k.nrows(),
        });
    }
    if truncation > p {
        return Err(Error::InvalidParameter(format!(
            "truncation {truncation} exceeds matrix size {p}"
        )));
    }
    let scale = k.amax().max(f64::MIN_POSITIVE);
    for i in 0..p {
        for j in (i + 1)..p {
            if (k[(i, j)] - k[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::InvalidParameter(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let max_iter = 100 * p.max(10);
    let eig = k
        .clone()
        .try_symmetric_eigen(EIGEN_TOLERANCE, max_iter)
        .ok_or(Error::NonConvergence {
            tolerance: EIGEN_TOLERANCE,
            max_iter,
        })?;

    let mut order: Vec<usize> = (0..p).collect();
    // stable: ties keep ascending index order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let inv_sqrt_w = grid.quadrature_weight().sqrt().recip();
    let mut eigenvalues = Vec::with_capacity(truncation);
    let mut eigenvectors = Vec::with_capacity(truncation);
    for &col in order.iter().take(truncation) {
        eigenvalues.push(eig.eigenvalues[col].max(0.0));
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().map(|x| x * inv_sqrt_w).collect();
        canonical_sign(&mut v);
        eigenvectors.push(v);
    }
    SpectralBasis::from_parts(grid.clone(), eigenvalues, eigenvectors)
}

/// Flip so that the first clearly nonzero entry is positive.
fn canonical_sign(v: &mut [f64]) {
    let amax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-6 * amax) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// Eigensystem of the RBF covariance operator on a 1D grid.
///
/// The integral operator is discretised as `w * K`, so the eigenvalues are
/// those of the operator (grid-resolution consistent) and draws
/// `sum_n sqrt(lambda_n) z_n phi_n` have grid covariance exactly `K`.
pub fn rbf_basis(grid: &Grid, spec: &RbfKernelSpec, truncation: usize) -> Result<SpectralBasis> {
    let k = rbf_gram(grid, spec)? * grid.quadrature_weight();
    eigendecompose(&k, grid, truncation)
}

/// Squared symbol of the periodic second-difference operator for frequency `k`.
pub fn laplacian_symbol(k: usize, n: usize, length: f64) -> f64 {
    let scale = n as f64 / length;
    (2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos()) * scale * scale
}

/// Real Fourier vectors on `n` periodic points, Euclidean-normalised.
///
/// Ordering: constant, then `cos k`, `sin k` for `k = 1..n/2`, then the
/// Nyquist cosine. Returns `(frequency, vector)` pairs.
fn real_fourier_1d(n: usize) -> Vec<(usize, Vec<f64>)> {
    let nf = n as f64;
    let mut out = Vec::with_capacity(n);
    out.push((0, vec![nf.sqrt().recip(); n]));
    let c = (2.0 / nf).sqrt();
    for k in 1..n / 2 {
        let arg = |j: usize| 2.0 * PI * (k * j) as f64 / nf;
        out.push((k, (0..n).map(|j| c * arg(j).cos()).collect()));
        out.push((k, (0..n).map(|j| c * arg(j).sin()).collect()));
    }
    out.push((
        n / 2,
        (0..n)
            .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } / nf.sqrt())
            .collect(),
    ));
    out
}

/// Eigensystem of the Bessel prior on a periodic 2D grid.
///
/// The eigenfunctions are products of real discrete Fourier modes; the mode
/// with frequencies `(k1, k2)` has eigenvalue
/// `(scale + w_{k1}^2 + w_{k2}^2)^(-power)` with `w_k` the periodic Laplacian
/// symbol. Modes are ordered by descending eigenvalue, ties by the flat index
/// of the frequency pair.
pub fn bessel_basis(grid: &Grid, spec: &BesselPriorSpec, truncation: usize) -> Result<SpectralBasis> {
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid("Bessel prior requires a 2D grid".into()));
    }
    let n = grid.points_per_axis();
    if !n.is_power_of_two() {
        return Err(Error::InvalidGrid(format!(
            "points_per_axis must be a power of two, got {n}"
        )));
    }
    let p = grid.len();
    if truncation > p {
        return Err(Error::InvalidParameter(format!(
            "truncation {truncation} exceeds grid size {p}"
        )));
    }
    let (lx, ly) = (
        grid.bounds()[0].1 - grid.bounds()[0].0,
        grid.bounds()[1].1 - grid.bounds()[1].0,
    );
    let modes = real_fourier_1d(n);

    let mut pairs: Vec<(f64, usize)> = (0..p)
        .map(|flat| {
            let (a, b) = (flat / n, flat % n);
            let omega_sq = laplacian_symbol(modes[a].0, n, lx) + laplacian_symbol(modes[b].0, n, ly);
            (spec.eigenvalue(omega_sq), flat)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));

    let inv_sqrt_w = grid.quadrature_weight().sqrt().recip();
    let mut eigenvalues = Vec::with_capacity(truncation);
    let mut eigenvectors = Vec::with_capacity(truncation);
    for &(lambda, flat) in pairs.iter().take(truncation) {
        let (ua, ub) = (&modes[flat / n].1, &modes[flat % n].1);
        let v: Vec<f64> = ua
            .iter()
            .flat_map(|&x| ub.iter().map(move |&y| x * y * inv_sqrt_w))
            .collect();
        eigenvalues.push(lambda);
        eigenvectors.push(v);
    }
    SpectralBasis::from_parts(grid.clone(), eigenvalues, eigenvectors)
}

/// One prior draw: independent `N(0, lambda_n)` coefficients.
///
/// Mode `n` always consumes the `n`-th normal of the stream, so the leading
/// coefficients do not depend on how many modes are drawn.
pub fn prior_draw(eigenvalues: &[f64], seed: u64, index: u64) -> Vec<f64> {
    let mut rng = substream(seed, Stream::Prior, index);
    eigenvalues
        .iter()
        .map(|&l| {
            let z: f64 = StandardNormal.sample(&mut rng);
            l.sqrt() * z
        })
        .collect()
}

/// `count` independent draws from `N(0, Q)` truncated to the basis.
pub fn sample_noise(basis: &SpectralBasis, count: usize, seed: u64) -> Vec<FunctionSample> {
    (0..count as u64)
        .map(|i| FunctionSample::from_coeffs(prior_draw(basis.eigenvalues(), seed, i)))
        .collect()
}

/// Cameron-Martin inner product `sum_n f_n g_n / lambda_n`.
pub fn cameron_martin_inner(f: &FunctionSample, g: &FunctionSample, basis: &SpectralBasis) -> Result<f64> {
    let m = basis.truncation();
    for s in [f, g] {
        if s.coeffs.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: s.coeffs.len(),
            });
        }
    }
    let mut acc = 0.0;
    for (n, &lambda) in basis.eigenvalues().iter().enumerate() {
        let (a, b) = (f.coeffs[n], g.coeffs[n]);
        if lambda > 0.0 {
            acc += a * b / lambda;
        } else if a != 0.0 || b != 0.0 {
            return Err(Error::NotInCameronMartin { mode: n });
        }
    }
    Ok(acc)
}

/// Bessel-prior noise by filtering white noise in Fourier space:
/// `IFFT(sqrt(eigenvalues) * FFT(Z))`, `Z ~ N(0, I)`.
///
/// Grid covariance is `F^-1 diag(lambda) F`, which equals `w` times the grid
/// covariance of [`bessel_basis`] draws at full truncation.
pub fn fft_recipe_sample(grid: &Grid, spec: &BesselPriorSpec, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if grid.dim() != 2 || !grid.points_per_axis().is_power_of_two() {
        return Err(Error::InvalidGrid("FFT recipe requires a 2D power-of-two grid".into()));
    }
    let n = grid.points_per_axis();
    let (lx, ly) = (
        grid.bounds()[0].1 - grid.bounds()[0].0,
        grid.bounds()[1].1 - grid.bounds()[1].0,
    );
    let filter: Vec<f64> = (0..n * n)
        .map(|flat| {
            let omega_sq = laplacian_symbol(flat / n, n, lx) + laplacian_symbol(flat % n, n, ly);
            spec.eigenvalue(omega_sq).sqrt()
        })
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let norm = 1.0 / (n * n) as f64;

    let mut out = Vec::with_capacity(count);
    for i in 0..count as u64 {
        let mut rng = substream(seed, Stream::Prior, i);
        let mut buf: Vec<Complex<f64>> = (0..n * n)
            .map(|_| Complex::new(StandardNormal.sample(&mut rng), 0.0))
            .collect();
        fft_2d(&mut buf, n, fwd.as_ref());
        buf.iter_mut().zip(&filter).for_each(|(z, f)| *z *= f);
        fft_2d(&mut buf, n, inv.as_ref());
        out.push(buf.iter().map(|z| z.re * norm).collect());
    }
    Ok(out)
}

fn fft_2d(buf: &mut [Complex<f64>], n: usize, fft: &dyn rustfft::Fft<f64>) {
    for row in buf.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); n];
    for c in 0..n {
        for r in 0..n {
            col[r] = buf[r * n + c];
        }
        fft.process(&mut col);
        for r in 0..n {
            buf[r * n + c] = col[r];
        }
    }
}
