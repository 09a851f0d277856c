//! Sample-quality metrics: sliced Wasserstein-2, FPCA + MMD two-sample test.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream, Stream};

/// Rows of function values (or coefficients) sharing one inner-product weight.
///
/// `weight` is the quadrature weight of the underlying grid; coefficient rows
/// use 1. Projections and FPCA scores are taken in `<f, g> = weight * f.g`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    rows: Vec<Vec<f64>>,
    weight: f64,
}

impl SampleSet {
    pub fn new(rows: Vec<Vec<f64>>, weight: f64) -> Result<Self> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight must be positive, got {weight}"
            )));
        }
        if let Some(first) = rows.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::ShapeMismatch("rows must be non-empty".into()));
            }
            if let Some(bad) = rows.iter().find(|r| r.len() != d) {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: bad.len(),
                });
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("sample contains non-finite values".into()));
            }
        }
        Ok(Self { rows, weight })
    }

    pub fn coefficients(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows, 1.0)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn check_pair(&self, other: &Self, min_rows: usize) -> Result<()> {
        if self.len() < min_rows || other.len() < min_rows {
            return Err(Error::InvalidParameter(format!(
                "need at least {min_rows} samples per set, got {} and {}",
                self.len(),
                other.len()
            )));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        if self.weight != other.weight {
            return Err(Error::InvalidParameter("sample sets use different grid weights".into()));
        }
        Ok(())
    }
}

/// `count` Gaussian directions normalised to the unit sphere in `R^dim`.
pub fn projection_directions(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = substream(seed, Stream::Directions, 0);
    (0..count)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Squared W2 between two empirical measures on the line.
///
/// Both inputs must be sorted. Unequal sizes are handled by integrating the
/// squared gap between the two quantile step functions exactly.
pub fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    if n == m {
        return a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
    }
    // breakpoints i/n and j/m in units of 1/(n m)
    let (mut i, mut j, mut u) = (0usize, 0usize, 0usize);
    let mut acc = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let d = a[i] - b[j];
        acc += (next - u) as f64 * d * d;
        u = next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    acc / (n * m) as f64
}

fn sorted_projection(set: &SampleSet, dir: &[f64]) -> Vec<f64> {
    let s = set.weight.sqrt();
    let mut p: Vec<f64> = set
        .rows
        .iter()
        .map(|r| s * r.iter().zip(dir).map(|(x, d)| x * d).sum::<f64>())
        .collect();
    p.sort_by(f64::total_cmp);
    p
}

/// Monte Carlo sliced W2 over `n_projections` random directions.
pub fn sliced_wasserstein(a: &SampleSet, b: &SampleSet, n_projections: usize, seed: u64) -> Result<f64> {
    a.check_pair(b, 1)?;
    if n_projections == 0 {
        return Err(Error::InvalidParameter("need at least one projection".into()));
    }
    let dirs = projection_directions(a.dim(), n_projections, seed);
    let total: f64 = dirs
        .par_iter()
        .map(|d| w2_sq_sorted(&sorted_projection(a, d), &sorted_projection(b, d)))
        .sum();
    Ok((total / n_projections as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fpca {
    pub mean: Vec<f64>,
    /// Components, orthonormal in the weighted inner product.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    /// One row of `r` scores per input row.
    pub scores: Vec<Vec<f64>>,
}

/// Functional PCA of the pooled rows, keeping `r` components.
pub fn fpca_scores(pooled: &SampleSet, r: usize) -> Result<Fpca> {
    let (n, p) = (pooled.len(), pooled.dim());
    if r == 0 || n < 2 || r > (n - 1).min(p) {
        return Err(Error::InvalidParameter(format!(
            "cannot keep {r} components from {n} samples of dimension {p}"
        )));
    }
    let sw = pooled.weight.sqrt();
    let mut mean = vec![0.0; p];
    for row in &pooled.rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, p, |i, j| sw * (pooled.rows[i][j] - mean[j]));
    let svd = x.clone().svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::InvalidParameter("SVD failed".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));
    let smax = sv[order[0]];
    let tol = smax * 1e-10;
    let rank = sv.iter().filter(|&&s| s > tol && smax > 0.0).count();
    if rank < r {
        return Err(Error::RankDeficient { requested: r, rank });
    }
    let mut components = Vec::with_capacity(r);
    let mut explained_variance = Vec::with_capacity(r);
    let mut dirs = Vec::with_capacity(r);
    for &k in order.iter().take(r) {
        let mut v: Vec<f64> = v_t.row(k).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map_or(1.0, |(_, x)| *x);
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v.iter().map(|x| x / sw).collect());
        explained_variance.push(sv[k] * sv[k] / (n - 1) as f64);
        dirs.push(v);
    }
    let scores = (0..n)
        .map(|i| {
            dirs.iter()
                .map(|v| x.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(Fpca {
        mean,
        components,
        explained_variance,
        scores,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of pairwise Euclidean distances; 1 if all points coincide.
pub fn median_bandwidth(points: &[Vec<f64>]) -> f64 {
    let mut d: Vec<f64> = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, &mut med, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn gaussian_gram(points: &[Vec<f64>], bandwidth: f64) -> Vec<f64> {
    let n = points.len();
    let c = -0.5 / (bandwidth * bandwidth);
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        k[i * n + i] = 1.0;
        for j in i + 1..n {
            let v = (c * sq_dist(&points[i], &points[j])).exp();
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

/// Unbiased MMD^2 for an even split: the first `n_a` points against the rest,
/// encoded as labels `s_i = +1 / -1` so a permutation only relabels.
fn mmd2_labels(k: &[f64], labels: &[f64], n_a: usize, total_offdiag: f64) -> f64 {
    let n = labels.len();
    let n_b = n - n_a;
    let mut q = 0.0;
    for i in 0..n {
        let row = &k[i * n..(i + 1) * n];
        let dot: f64 = row.iter().zip(labels).map(|(a, b)| a * b).sum();
        q += labels[i] * (dot - row[i] * labels[i]);
    }
    // q = S_AA + S_BB - 2 S_AB, total = S_AA + S_BB + 2 S_AB, all off-diagonal
    let s_ab = 0.25 * (total_offdiag - q);
    let within = 0.5 * (total_offdiag + q);
    if n_a == n_b {
        within / (n_a * (n_a - 1)) as f64 - 2.0 * s_ab / (n_a * n_b) as f64
    } else {
        // uneven splits need the two within sums separately
        let mut s_aa = 0.0;
        let mut s_bb = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j && labels[i] == labels[j] {
                    if labels[i] > 0.0 {
                        s_aa += k[i * n + j];
                    } else {
                        s_bb += k[i * n + j];
                    }
                }
            }
        }
        s_aa / (n_a * (n_a - 1)) as f64 + s_bb / (n_b * (n_b - 1)) as f64 - 2.0 * s_ab / (n_a * n_b) as f64
    }
}

/// Unbiased MMD^2 with a Gaussian kernel; `bandwidth = None` uses the median
/// heuristic on the pooled points.
pub fn mmd2(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: Option<f64>) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter("MMD needs at least two points per set".into()));
    }
    let pooled: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    let h = bandwidth.unwrap_or_else(|| median_bandwidth(&pooled));
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("bandwidth must be positive, got {h}")));
    }
    let k = gaussian_gram(&pooled, h);
    let labels: Vec<f64> = (0..pooled.len())
        .map(|i| if i < a.len() { 1.0 } else { -1.0 })
        .collect();
    let total = k.iter().sum::<f64>() - pooled.len() as f64;
    Ok(mmd2_labels(&k, &labels, a.len(), total))
}

/// Biased (V-statistic) MMD^2, which includes the diagonal kernel terms and
/// is exactly 0 for identical multisets.
pub fn mmd2_biased(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: Option<f64>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidParameter("MMD needs non-empty sets".into()));
    }
    let pooled: Vec<Vec<f64>> = a.iter().chain(b).cloned().collect();
    let h = bandwidth.unwrap_or_else(|| median_bandwidth(&pooled));
    let c = -0.5 / (h * h);
    let mean_k = |x: &[Vec<f64>], y: &[Vec<f64>]| {
        let mut s = 0.0;
        for p in x {
            for q in y {
                s += (c * sq_dist(p, q)).exp();
            }
        }
        s / (x.len() * y.len()) as f64
    };
    Ok(mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub level: f64,
    pub permutations: usize,
    pub trials: usize,
    pub fpca_components: usize,
    pub rng_seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            level: 0.05,
            permutations: 500,
            trials: 100,
            fpca_components: 10,
            rng_seed: 0,
        }
    }
}

/// Outcome of one permutation test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// FPCA-projected MMD permutation test between two sample sets.
pub fn permutation_test(a: &SampleSet, b: &SampleSet, cfg: &TestConfig, seed: u64) -> Result<PermutationTest> {
    a.check_pair(b, 2)?;
    let pooled = SampleSet::new(a.rows.iter().chain(&b.rows).cloned().collect(), a.weight)?;
    let scores = fpca_scores(&pooled, cfg.fpca_components)?.scores;
    let h = median_bandwidth(&scores);
    let k = gaussian_gram(&scores, h);
    let n = scores.len();
    let total = k.iter().sum::<f64>() - n as f64;
    let mut labels: Vec<f64> = (0..n).map(|i| if i < a.len() { 1.0 } else { -1.0 }).collect();
    let observed = mmd2_labels(&k, &labels, a.len(), total);
    let mut rng = substream(seed, Stream::Permutation, 0);
    let mut exceed = 0usize;
    for _ in 0..cfg.permutations {
        labels.shuffle(&mut rng);
        if mmd2_labels(&k, &labels, a.len(), total) >= observed {
            exceed += 1;
        }
    }
    Ok(PermutationTest {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + cfg.permutations) as f64,
    })
}

/// Something that can produce `count` samples for a given seed.
pub trait SampleSource: Sync {
    fn draw(&self, count: usize, seed: u64) -> Result<SampleSet>;
}

impl<F> SampleSource for F
where
    F: Fn(usize, u64) -> Result<SampleSet> + Sync,
{
    fn draw(&self, count: usize, seed: u64) -> Result<SampleSet> {
        self(count, seed)
    }
}

/// Fraction of `cfg.trials` independent trials in which the permutation test
/// rejects `generated ~ reference` at `cfg.level`.
pub fn test_power(
    generated: &dyn SampleSource,
    reference: &dyn SampleSource,
    sample_size: usize,
    cfg: &TestConfig,
) -> Result<f64> {
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidParameter(format!("level {} not in (0, 1)", cfg.level)));
    }
    if cfg.trials == 0 || cfg.permutations == 0 {
        return Err(Error::InvalidParameter(
            "trials and permutations must be positive".into(),
        ));
    }
    let rejections: usize = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let a = generated.draw(sample_size, derive_seed(cfg.rng_seed, Stream::Trial, 2 * trial))?;
            let b = reference.draw(sample_size, derive_seed(cfg.rng_seed, Stream::Trial, 2 * trial + 1))?;
            let test = permutation_test(&a, &b, cfg, derive_seed(cfg.rng_seed, Stream::Permutation, trial))?;
            Ok(usize::from(test.p_value <= cfg.level))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(rejections as f64 / cfg.trials as f64)
}
