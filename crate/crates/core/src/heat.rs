//! Explicit finite-difference heat equation on a square and space-time norms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::spectral::Grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Boundary nodes held at zero.
    #[default]
    Dirichlet,
    /// Zero normal derivative via mirrored ghost nodes.
    Neumann,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatProblem {
    pub diffusivity: f64,
    pub grid: Grid,
    pub dt: f64,
    pub boundary: Boundary,
}

impl HeatProblem {
    pub fn new(diffusivity: f64, grid: Grid, dt: f64, boundary: Boundary) -> Result<Self> {
        if grid.dim() != 2 || grid.points_per_axis() < 3 {
            return Err(Error::InvalidGrid(
                "heat solver needs a 2D grid with >= 3 points per axis".into(),
            ));
        }
        if !(diffusivity > 0.0 && dt > 0.0) {
            return Err(Error::InvalidParameter("diffusivity and dt must be positive".into()));
        }
        let problem = Self {
            diffusivity,
            grid,
            dt,
            boundary,
        };
        let ratio = problem.cfl_ratio();
        if ratio > 0.5 {
            return Err(Error::CflViolation { ratio });
        }
        Ok(problem)
    }

    /// `beta dt (1/dx^2 + 1/dy^2)`; FTCS is stable and monotone up to 1/2.
    pub fn cfl_ratio(&self) -> f64 {
        let dx = self.grid.spacing(0);
        let dy = self.grid.spacing(1);
        self.diffusivity * self.dt * (1.0 / (dx * dx) + 1.0 / (dy * dy))
    }

    /// Largest stable step for this grid and diffusivity.
    pub fn max_stable_dt(diffusivity: f64, grid: &Grid) -> f64 {
        let dx = grid.spacing(0);
        let dy = grid.spacing(1);
        0.5 / (diffusivity * (1.0 / (dx * dx) + 1.0 / (dy * dy)))
    }

    fn step(&self, u: &[f64], out: &mut [f64], dt: f64) {
        let n = self.grid.points_per_axis();
        let dx2 = self.grid.spacing(0).powi(2);
        let dy2 = self.grid.spacing(1).powi(2);
        let (cx, cy) = (self.diffusivity * dt / dx2, self.diffusivity * dt / dy2);
        let reflect = |i: isize| -> usize {
            if i < 0 {
                1
            } else if i as usize >= n {
                n - 2
            } else {
                i as usize
            }
        };
        for r in 0..n {
            for c in 0..n {
                let idx = r * n + c;
                if self.boundary == Boundary::Dirichlet && (r == 0 || c == 0 || r == n - 1 || c == n - 1) {
                    out[idx] = 0.0;
                    continue;
                }
                let (ri, ci) = (r as isize, c as isize);
                let up = u[reflect(ri - 1) * n + c];
                let down = u[reflect(ri + 1) * n + c];
                let left = u[r * n + reflect(ci - 1)];
                let right = u[r * n + reflect(ci + 1)];
                let centre = u[idx];
                out[idx] = centre + cx * (up - 2.0 * centre + down) + cy * (left - 2.0 * centre + right);
            }
        }
    }
}

/// Frames of a field on a 2D grid at increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub frames: Vec<Vec<f64>>,
}

impl SpaceTimeField {
    pub fn new(grid: Grid, times: Vec<f64>, frames: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() || times.len() != frames.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} times for {} frames",
                times.len(),
                frames.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "frame times must be strictly increasing".into(),
            ));
        }
        if let Some(f) = frames.iter().find(|f| f.len() != grid.len()) {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: f.len(),
            });
        }
        Ok(Self { grid, times, frames })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Flattened frames, frame-major.
    pub fn flatten(&self) -> Vec<f64> {
        self.frames.concat()
    }
}

/// Marches `ic` with FTCS and records it at each of `save_times`.
///
/// Times are measured from the initial condition; a save time of 0 returns
/// `ic` unchanged. Each interval is split into equal substeps no longer than
/// `problem.dt`, so every save time is hit exactly.
pub fn heat_solve(problem: &HeatProblem, ic: &[f64], save_times: &[f64]) -> Result<SpaceTimeField> {
    if ic.len() != problem.grid.len() {
        return Err(Error::DimensionMismatch {
            expected: problem.grid.len(),
            got: ic.len(),
        });
    }
    if save_times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("save times must be non-negative".into()));
    }
    let mut u = ic.to_vec();
    let mut scratch = vec![0.0; u.len()];
    let mut now = 0.0;
    let mut frames = Vec::with_capacity(save_times.len());
    for (i, &target) in save_times.iter().enumerate() {
        if i > 0 && !(target > save_times[i - 1]) {
            return Err(Error::InvalidParameter("save times must be strictly increasing".into()));
        }
        let span = target - now;
        if span > 0.0 {
            let steps = (span / problem.dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for k in 0..steps {
                problem.step(&u, &mut scratch, h);
                std::mem::swap(&mut u, &mut scratch);
                if u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteState {
                        step: k,
                        t: now + h * (k + 1) as f64,
                    });
                }
            }
            now = target;
        }
        frames.push(u.clone());
    }
    SpaceTimeField::new(problem.grid.clone(), save_times.to_vec(), frames)
}

/// Ground truth for a synthesised field: re-solve from its first frame.
pub fn regenerate_ground_truth(synthetic: &SpaceTimeField, problem: &HeatProblem) -> Result<SpaceTimeField> {
    let t0 = synthetic.times[0];
    let rel: Vec<f64> = synthetic.times.iter().map(|t| t - t0).collect();
    let mut truth = heat_solve(problem, &synthetic.frames[0], &rel)?;
    truth.times = synthetic.times.clone();
    Ok(truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    LInf,
}

/// Space-time distance. `L2` integrates with the grid quadrature weight in
/// space and the trapezoid rule in time (a single frame gets weight 1).
pub fn lp_distance(a: &SpaceTimeField, b: &SpaceTimeField, norm: Norm) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::ShapeMismatch("fields live on different grids".into()));
    }
    if a.frame_count() != b.frame_count() {
        return Err(Error::DimensionMismatch {
            expected: a.frame_count(),
            got: b.frame_count(),
        });
    }
    match norm {
        Norm::LInf => Ok(a
            .frames
            .iter()
            .flatten()
            .zip(b.frames.iter().flatten())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)),
        Norm::L2 => {
            let w = a.grid.quadrature_weight();
            let sq: Vec<f64> = a
                .frames
                .iter()
                .zip(&b.frames)
                .map(|(fa, fb)| w * fa.iter().zip(fb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
                .collect();
            let total = if sq.len() == 1 {
                sq[0]
            } else {
                a.times
                    .windows(2)
                    .zip(sq.windows(2))
                    .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
                    .sum()
            };
            Ok(total.sqrt())
        }
    }
}

/// `sin(k pi (x+1)/2) sin(l pi (y+1)/2)` for bounds `[-1,1]`, generally the
/// Dirichlet eigenfunction of the box; vanishes on the boundary.
pub fn sine_mode(grid: &Grid, k: usize, l: usize) -> Vec<f64> {
    let (lo0, hi0) = grid.bounds()[0];
    let (lo1, hi1) = grid.bounds()[1];
    grid.points()
        .iter()
        .map(|p| {
            let sx = (k as f64 * std::f64::consts::PI * (p[0] - lo0) / (hi0 - lo0)).sin();
            let sy = (l as f64 * std::f64::consts::PI * (p[1] - lo1) / (hi1 - lo1)).sin();
            sx * sy
        })
        .collect()
}

/// Random initial condition: `terms` sine modes with frequencies drawn from
/// `1..=4` per axis and `N(0,1)` amplitudes. Vanishes on the boundary.
pub fn sine_mixture_ic(grid: &Grid, terms: usize, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, Stream::InitialCondition, 0);
    let mut u = vec![0.0; grid.len()];
    for _ in 0..terms {
        let k = rng.random_range(1..=4usize);
        let l = rng.random_range(1..=4usize);
        let amp: f64 = rng.sample(rand_distr::StandardNormal);
        for (v, s) in u.iter_mut().zip(sine_mode(grid, k, l)) {
            *v += amp * s;
        }
    }
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn square(n: usize) -> Grid {
        Grid::square(n, -1.0, 1.0).unwrap()
    }

    #[test]
    fn cfl_is_enforced() {
        let g = square(17);
        let dt = HeatProblem::max_stable_dt(1.0, &g);
        assert!(HeatProblem::new(1.0, g.clone(), dt, Boundary::Dirichlet).is_ok());
        assert!(matches!(
            HeatProblem::new(1.0, g, dt * 1.01, Boundary::Dirichlet),
            Err(Error::CflViolation { .. })
        ));
    }

    #[test]
    fn zero_and_constant_fields() {
        let g = square(9);
        let dt = HeatProblem::max_stable_dt(1.0, &g);
        let dirichlet = HeatProblem::new(1.0, g.clone(), dt, Boundary::Dirichlet).unwrap();
        let z = heat_solve(&dirichlet, &vec![0.0; g.len()], &[0.0, 0.1]).unwrap();
        assert!(z.frames.iter().flatten().all(|&v| v == 0.0));
        let neumann = HeatProblem::new(1.0, g.clone(), dt, Boundary::Neumann).unwrap();
        let c = heat_solve(&neumann, &vec![3.0; g.len()], &[0.0, 0.1]).unwrap();
        for v in c.frames.iter().flatten() {
            assert_relative_eq!(*v, 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_frame_l2_of_constant_gap() {
        let g = Grid::square(5, 0.0, 1.0).unwrap();
        let a = SpaceTimeField::new(g.clone(), vec![0.0], vec![vec![0.0; 25]]).unwrap();
        let b = SpaceTimeField::new(g, vec![0.0], vec![vec![0.5; 25]]).unwrap();
        assert_relative_eq!(lp_distance(&a, &b, Norm::L2).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(lp_distance(&a, &b, Norm::LInf).unwrap(), 0.5);
        assert_eq!(lp_distance(&a, &a, Norm::L2).unwrap(), 0.0);
    }

    #[test]
    fn frame_zero_is_the_initial_condition() {
        let g = square(9);
        let dt = HeatProblem::max_stable_dt(0.5, &g);
        let p = HeatProblem::new(0.5, g.clone(), dt, Boundary::Dirichlet).unwrap();
        let ic = sine_mixture_ic(&g, 4, 3);
        let f = heat_solve(&p, &ic, &[0.0, 0.05]).unwrap();
        assert_eq!(f.frames[0], ic);
        let truth = regenerate_ground_truth(&f, &p).unwrap();
        assert_eq!(lp_distance(&f, &truth, Norm::LInf).unwrap(), 0.0);
    }

    #[test]
    fn save_times_validation() {
        let g = square(5);
        let p = HeatProblem::new(1.0, g.clone(), 1e-3, Boundary::Dirichlet).unwrap();
        assert!(heat_solve(&p, &[0.0; 25], &[0.1, 0.1]).is_err());
        assert!(heat_solve(&p, &[0.0; 24], &[0.1]).is_err());
        assert!(heat_solve(&p, &[0.0; 25], &[-0.1]).is_err());
    }
}
