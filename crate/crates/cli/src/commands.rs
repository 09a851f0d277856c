use std::time::Instant;

use rayon::prelude::*;

use pfode::diffusion::Schedule;
use pfode::experiments::{gaussian_sanity, quadratic, reference_draws, FieldError, HeatSetup, Setup};
use pfode::heat::{heat_solve, regenerate_ground_truth, sine_mixture_ic};
use pfode::io::{write_basis, write_coefficients, write_field, write_grid_values, write_results, ResultRow};
use pfode::learning::{fit, AffineScoreModel};
use pfode::metrics::{mmd2, sliced_wasserstein, test_power, SampleSet};
use pfode::oracle::MixtureDataSpec;
use pfode::rng::{derive_seed, Stream};
use pfode::sampler::{sample, CountingScore, Method, OracleScore, SamplerConfig, ScoreFn};
use pfode::spectral::SpectralBasis;

use crate::config::{ExperimentKind, MetricKind, Resolved, ScoreKind};
use crate::error::CliError;
use crate::output::{basis_hash, OutDir, ResultMeta, RowTiming, SampleMeta, BUILD};

enum Problem {
    Line(Setup),
    Heat(HeatSetup),
}

impl Problem {
    fn build(cfg: &Resolved) -> Result<Self, CliError> {
        let p = match cfg.experiment {
            ExperimentKind::Quadratic => {
                Problem::Line(quadratic(&cfg.line, cfg.noise_variance).map_err(CliError::setup)?)
            }
            ExperimentKind::GaussianSanity => {
                Problem::Line(gaussian_sanity(&cfg.line, cfg.mean_scale, cfg.variance_ratio).map_err(CliError::setup)?)
            }
            ExperimentKind::Heat => {
                let exp = cfg.heat.as_ref().expect("heat section resolved");
                Problem::Heat(exp.build().map_err(CliError::setup)?)
            }
        };
        Ok(p)
    }

    fn spec(&self) -> &MixtureDataSpec {
        match self {
            Problem::Line(s) => &s.spec,
            Problem::Heat(h) => &h.spec,
        }
    }

    fn eigenvalues(&self) -> &[f64] {
        match self {
            Problem::Line(s) => s.eigenvalues(),
            Problem::Heat(h) => &h.eigenvalues,
        }
    }

    fn basis(&self) -> &SpectralBasis {
        match self {
            Problem::Line(s) => &s.basis,
            Problem::Heat(h) => &h.basis,
        }
    }
}

enum Score<'a> {
    Oracle(OracleScore<'a>),
    Learned(AffineScoreModel),
}

impl Score<'_> {
    fn as_dyn(&self) -> &dyn ScoreFn {
        match self {
            Score::Oracle(s) => s,
            Score::Learned(m) => m,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Score::Oracle(_) => "oracle",
            Score::Learned(_) => "learned",
        }
    }
}

struct Run<'a> {
    cfg: &'a Resolved,
    problem: &'a Problem,
    score: Score<'a>,
}

impl<'a> Run<'a> {
    fn new(cfg: &'a Resolved, problem: &'a Problem) -> Result<Self, CliError> {
        let score = match &cfg.score {
            ScoreKind::Oracle => Score::Oracle(OracleScore::new(problem.spec(), problem.eigenvalues(), &cfg.schedule)),
            ScoreKind::Learned(train) => {
                Score::Learned(fit(problem.spec(), problem.eigenvalues(), &cfg.schedule, train)?)
            }
        };
        Ok(Self { cfg, problem, score })
    }

    fn sampler(&self, method: Method, nfe: usize, count: usize, seed: u64, antithetic: bool) -> SamplerConfig {
        let mut s = SamplerConfig::new(method, nfe, self.problem.eigenvalues().len(), count, seed);
        s.t_eps = self.cfg.t_eps;
        s.antithetic = antithetic;
        s
    }

    fn draw(&self, sc: &SamplerConfig, score: &dyn ScoreFn) -> Result<Vec<Vec<f64>>, CliError> {
        let schedule: &dyn Schedule = &self.cfg.schedule;
        Ok(sample(score, self.problem.eigenvalues(), schedule, sc)?
            .into_iter()
            .map(|s| s.coeffs)
            .collect())
    }

    /// Coefficient rows plus the number of score evaluations spent.
    fn counted(&self, sc: &SamplerConfig) -> Result<(Vec<Vec<f64>>, u64), CliError> {
        let counter = CountingScore::new(self.score.as_dyn());
        let rows = self.draw(sc, &counter)?;
        Ok((rows, counter.calls()))
    }

    fn reference(&self, count: usize) -> Vec<Vec<f64>> {
        reference_draws(self.problem.spec(), count, self.cfg.reference_seed, self.cfg.antithetic)
    }

    fn power(&self, method: Option<(Method, usize)>) -> Result<f64, CliError> {
        let spec = self.problem.spec();
        let reference = |n: usize, seed: u64| SampleSet::coefficients(spec.sample(n, seed));
        let p = match method {
            Some((m, nfe)) => {
                let generator = |n: usize, seed: u64| {
                    let sc = self.sampler(m, nfe, n, seed, false);
                    let rows = sample(self.score.as_dyn(), self.problem.eigenvalues(), &self.cfg.schedule, &sc)?
                        .into_iter()
                        .map(|s| s.coeffs)
                        .collect();
                    SampleSet::coefficients(rows)
                };
                test_power(&generator, &reference, self.cfg.sample_size, &self.cfg.test)?
            }
            None => test_power(&reference, &reference, self.cfg.sample_size, &self.cfg.test)?,
        };
        Ok(p)
    }
}

fn row(cfg: &Resolved, method: &str, nfe: usize, metric: &str, value: f64) -> ResultRow {
    ResultRow {
        experiment: cfg.experiment.as_str().to_string(),
        method: method.to_string(),
        nfe,
        metric: metric.to_string(),
        value,
        seed: cfg.seed,
    }
}

fn result_meta(command: &'static str, cfg: &Resolved, problem: &Problem, rows: Vec<RowTiming>) -> ResultMeta {
    ResultMeta {
        command,
        experiment: cfg.experiment.as_str(),
        seed: cfg.seed,
        reference_seed: cfg.reference_seed,
        t_eps: cfg.t_eps,
        basis_hash: basis_hash(problem.basis()),
        build: BUILD,
        rows,
    }
}

fn write_table(out: &OutDir, name: &str, rows: &[ResultRow]) -> Result<(), CliError> {
    let path = out.write(name, |w| Ok(write_results(w, rows)?))?;
    println!("{}", path.display());
    Ok(())
}

pub fn basis_dump(cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    let problem = Problem::build(cfg)?;
    let basis = problem.basis();
    let vectors: Vec<Vec<f64>> = (0..basis.truncation()).map(|n| basis.eigenvector(n).to_vec()).collect();
    println!("{}", out.write("basis.csv", |w| Ok(write_basis(w, basis)?))?.display());
    println!(
        "{}",
        out.write("basis_vectors.csv", |w| Ok(write_grid_values(w, &vectors)?))?
            .display()
    );
    let meta = serde_json::json!({
        "command": "basis-dump",
        "experiment": cfg.experiment.as_str(),
        "modes": basis.truncation(),
        "grid_points": basis.grid().len(),
        "quadrature_weight": basis.quadrature_weight(),
        "basis_hash": basis_hash(basis),
        "build": BUILD,
    });
    out.write_json("basis.json", &meta)?;
    Ok(())
}

pub fn sample_cmd(cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    let problem = Problem::build(cfg)?;
    let run = Run::new(cfg, &problem)?;
    out.write("basis.csv", |w| Ok(write_basis(w, problem.basis())?))?;
    for &method in &cfg.methods {
        for &nfe in &cfg.nfe {
            let start = Instant::now();
            let sc = run.sampler(method, nfe, cfg.count, cfg.seed, cfg.antithetic);
            let (rows, evals) = run.counted(&sc)?;
            let stem = format!("samples_{method}_nfe{nfe}");
            let path = out.write(&format!("{stem}.csv"), |w| Ok(write_coefficients(w, &rows)?))?;
            let meta = SampleMeta {
                command: "sample",
                experiment: cfg.experiment.as_str(),
                method: method.to_string(),
                nfe,
                seed: cfg.seed,
                t_eps: cfg.t_eps,
                count: cfg.count,
                antithetic: cfg.antithetic,
                score: run.score.name(),
                basis_hash: basis_hash(problem.basis()),
                score_evals: evals,
                build: BUILD,
                wall_ms: start.elapsed().as_millis(),
            };
            out.write_json(&format!("{stem}.json"), &meta)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

pub fn sweep_nfe(cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    let problem = Problem::build(cfg)?;
    let run = Run::new(cfg, &problem)?;
    // one reference set for the whole sweep
    let reference = run.reference(cfg.count);
    let ref_set = SampleSet::coefficients(reference.clone())?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for &method in &cfg.methods {
        for &nfe in &cfg.nfe {
            let needs_draws = cfg.metrics.iter().any(|m| *m != MetricKind::Power);
            let draws = if needs_draws {
                run.draw(
                    &run.sampler(method, nfe, cfg.count, cfg.seed, cfg.antithetic),
                    run.score.as_dyn(),
                )?
            } else {
                Vec::new()
            };
            for &metric in &cfg.metrics {
                let start = Instant::now();
                let value = match metric {
                    MetricKind::Sw => sliced_wasserstein(
                        &SampleSet::coefficients(draws.clone())?,
                        &ref_set,
                        cfg.projections,
                        cfg.reference_seed,
                    )?,
                    MetricKind::Mmd => mmd2(&draws, &reference, None)?,
                    MetricKind::Power => run.power(Some((method, nfe)))?,
                };
                rows.push(row(cfg, method.as_str(), nfe, metric.as_str(), value));
                timings.push(RowTiming {
                    method: method.to_string(),
                    nfe,
                    metric: metric.as_str().into(),
                    wall_ms: start.elapsed().as_millis(),
                });
            }
        }
    }
    write_table(out, "sweep.csv", &rows)?;
    out.write_json("sweep.json", &result_meta("sweep-nfe", cfg, &problem, timings))?;
    Ok(())
}

pub fn test_power_cmd(cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    let problem = Problem::build(cfg)?;
    let run = Run::new(cfg, &problem)?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    // calibration row: data against data, i.e. the rejection rate under H0
    let start = Instant::now();
    rows.push(row(cfg, "data", 0, "power", run.power(None)?));
    timings.push(RowTiming {
        method: "data".into(),
        nfe: 0,
        metric: "power".into(),
        wall_ms: start.elapsed().as_millis(),
    });
    for &method in &cfg.methods {
        for &nfe in &cfg.nfe {
            let start = Instant::now();
            rows.push(row(cfg, method.as_str(), nfe, "power", run.power(Some((method, nfe)))?));
            timings.push(RowTiming {
                method: method.to_string(),
                nfe,
                metric: "power".into(),
                wall_ms: start.elapsed().as_millis(),
            });
        }
    }
    write_table(out, "power.csv", &rows)?;
    out.write_json("power.json", &result_meta("test-power", cfg, &problem, timings))?;
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summary(cfg: &Resolved, method: &str, nfe: usize, errors: &[FieldError], rows: &mut Vec<ResultRow>) {
    let l2: Vec<f64> = errors.iter().map(|e| e.l2).collect();
    let linf: Vec<f64> = errors.iter().map(|e| e.linf).collect();
    for (name, xs) in [("l2", &l2), ("linf", &linf)] {
        let (m, s) = mean_std(xs);
        rows.push(row(cfg, method, nfe, &format!("{name}_mean"), m));
        rows.push(row(cfg, method, nfe, &format!("{name}_std"), s));
    }
}

fn write_errors(out: &OutDir, name: &str, errors: &[FieldError]) -> Result<(), CliError> {
    out.write(name, |w| {
        writeln!(w, "sample_id,l2,linf")?;
        for (i, e) in errors.iter().enumerate() {
            writeln!(w, "{i},{},{}", pfode::io::fmt_f64(e.l2), pfode::io::fmt_f64(e.linf))?;
        }
        Ok(())
    })?;
    Ok(())
}

pub fn heat_eval(cfg: &Resolved, out: &OutDir) -> Result<(), CliError> {
    if cfg.experiment != ExperimentKind::Heat {
        return Err(CliError::Config("heat-eval needs experiment = \"heat\"".into()));
    }
    let problem = Problem::build(cfg)?;
    let Problem::Heat(setup) = &problem else { unreachable!() };
    let mut rows = Vec::new();
    let mut timings = Vec::new();

    if cfg.heat_self_test {
        let start = Instant::now();
        let exp = cfg.heat.as_ref().expect("heat section resolved");
        let grid = setup.problem.grid.clone();
        let errors = (0..cfg.count)
            .into_par_iter()
            .map(|i| {
                let ic = sine_mixture_ic(
                    &grid,
                    exp.ic_terms,
                    derive_seed(cfg.seed, Stream::InitialCondition, i as u64),
                );
                let field = heat_solve(&setup.problem, &ic, &setup.save_times)?;
                setup.field_error(&field)
            })
            .collect::<pfode::Result<Vec<_>>>()?;
        write_errors(out, "heat_exact_nfe0.csv", &errors)?;
        summary(cfg, "exact", 0, &errors, &mut rows);
        timings.push(RowTiming {
            method: "exact".into(),
            nfe: 0,
            metric: "l2".into(),
            wall_ms: start.elapsed().as_millis(),
        });
    } else {
        let run = Run::new(cfg, &problem)?;
        for &method in &cfg.methods {
            for &nfe in &cfg.nfe {
                let start = Instant::now();
                let draws = run.draw(
                    &run.sampler(method, nfe, cfg.count, cfg.seed, false),
                    run.score.as_dyn(),
                )?;
                let errors = draws
                    .par_iter()
                    .map(|c| setup.evaluate(c))
                    .collect::<pfode::Result<Vec<_>>>()?;
                let stem = format!("heat_{method}_nfe{nfe}");
                write_errors(out, &format!("{stem}.csv"), &errors)?;
                if let Some(first) = draws.first() {
                    let synthetic = setup.decode(first)?;
                    let truth = regenerate_ground_truth(&synthetic, &setup.problem)?;
                    out.write(&format!("{stem}_field_synthetic.csv"), |w| {
                        Ok(write_field(w, &synthetic)?)
                    })?;
                    out.write(&format!("{stem}_field_truth.csv"), |w| Ok(write_field(w, &truth)?))?;
                }
                summary(cfg, method.as_str(), nfe, &errors, &mut rows);
                timings.push(RowTiming {
                    method: method.to_string(),
                    nfe,
                    metric: "l2".into(),
                    wall_ms: start.elapsed().as_millis(),
                });
            }
        }
    }
    write_table(out, "heat.csv", &rows)?;
    out.write_json("heat.json", &result_meta("heat-eval", cfg, &problem, timings))?;
    Ok(())
}
