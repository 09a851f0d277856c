//! Run configuration: strict TOML, one table per concern.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use pfode::diffusion::NoiseSchedule;
use pfode::experiments::{HeatExperiment, LineBasisConfig};
use pfode::heat::Boundary;
use pfode::learning::TrainingConfig;
use pfode::metrics::TestConfig;
use pfode::sampler::{Method, DEFAULT_T_EPS};
use pfode::spectral::{BesselPriorSpec, RbfKernelSpec};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Quadratic,
    GaussianSanity,
    Heat,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Quadratic => "quadratic",
            ExperimentKind::GaussianSanity => "gaussian_sanity",
            ExperimentKind::Heat => "heat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub basis: BasisSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<ScoreSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat: Option<HeatSection>,
}

/// Grid and prior. Line experiments use the RBF kernel on `[lo, hi]`; the
/// heat experiment uses the Bessel prior on `[-1, 1]^2` with `points` per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSection {
    pub points: usize,
    pub truncation: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Pointwise noise variance of the quadratic functions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logsnr_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logsnr_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub nfe: Vec<usize>,
    pub methods: Vec<String>,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antithetic: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreSection {
    /// `oracle` (exact mixture score) or `learned` (affine fit by DSM).
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_bin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projections: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fpca_components: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSection {
    pub beta: f64,
    pub t_end: f64,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ic_terms: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ic_seed: Option<u64>,
    /// Evaluate exact solver output instead of sampled fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_test: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Sw,
    Power,
    Mmd,
}

impl MetricKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MetricKind::Sw => "sw",
            MetricKind::Power => "power",
            MetricKind::Mmd => "mmd",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreKind {
    Oracle,
    Learned(TrainingConfig),
}

/// Everything a command needs, with defaults filled in and checked.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub experiment: ExperimentKind,
    pub out: PathBuf,
    pub line: LineBasisConfig,
    pub heat: Option<HeatExperiment>,
    pub heat_self_test: bool,
    pub noise_variance: f64,
    pub mean_scale: f64,
    pub variance_ratio: f64,
    pub schedule: NoiseSchedule,
    pub nfe: Vec<usize>,
    pub methods: Vec<Method>,
    pub count: usize,
    pub seed: u64,
    pub t_eps: f64,
    pub antithetic: bool,
    pub score: ScoreKind,
    pub metrics: Vec<MetricKind>,
    pub projections: usize,
    pub reference_seed: u64,
    pub sample_size: usize,
    pub test: TestConfig,
}

/// 1-based line of `key` inside `[section]` (or the header itself when
/// `key` is empty); used to anchor validation messages.
pub fn locate(source: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            if Some(name.trim()) == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current.as_deref() != section || key.is_empty() {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim() == key {
                return Some(i + 1);
            }
        }
    }
    if key.is_empty() {
        header_line
    } else {
        None
    }
}

struct Checker<'a> {
    path: &'a str,
    source: &'a str,
}

impl Checker<'_> {
    fn fail(&self, section: Option<&str>, key: &str, msg: impl std::fmt::Display) -> CliError {
        let line = locate(self.source, section, key).or_else(|| section.and_then(|s| locate(self.source, Some(s), "")));
        let name = match section {
            Some(s) if !key.is_empty() => format!("{s}.{key}"),
            Some(s) => s.to_string(),
            None => key.to_string(),
        };
        match line {
            Some(l) => CliError::Config(format!("{}:{l}: {name}: {msg}", self.path)),
            None => CliError::Config(format!("{}: {name}: {msg}", self.path)),
        }
    }
}

pub fn parse(path: &str, source: &str) -> Result<RunConfig, CliError> {
    toml::from_str(source).map_err(|e| {
        let line = e
            .span()
            .map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1);
        match line {
            Some(l) => CliError::Config(format!("{path}:{l}: {}", e.message())),
            None => CliError::Config(format!("{path}: {}", e.message())),
        }
    })
}

impl RunConfig {
    #[cfg(test)]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Fills defaults and checks every section. `seed` and `out` override
    /// the file.
    pub fn resolve(
        &self,
        path: &str,
        source: &str,
        seed: Option<u64>,
        out: Option<PathBuf>,
    ) -> Result<Resolved, CliError> {
        let ck = Checker { path, source };
        let b = &self.basis;
        let heat_kind = self.experiment == ExperimentKind::Heat;

        if b.points < 3 {
            return Err(ck.fail(Some("basis"), "points", "need at least 3 grid points"));
        }
        if b.truncation == 0 {
            return Err(ck.fail(Some("basis"), "truncation", "must be >= 1"));
        }
        let line = if heat_kind {
            for (key, given) in [
                ("lo", b.lo.is_some()),
                ("hi", b.hi.is_some()),
                ("gain", b.gain.is_some()),
                ("length_scale", b.length_scale.is_some()),
            ] {
                if given {
                    return Err(ck.fail(
                        Some("basis"),
                        key,
                        "not used by the heat experiment (Bessel prior on [-1,1]^2)",
                    ));
                }
            }
            LineBasisConfig::default()
        } else {
            for (key, given) in [("gamma", b.gamma.is_some()), ("smoothness", b.smoothness.is_some())] {
                if given {
                    return Err(ck.fail(Some("basis"), key, "only used by the heat experiment"));
                }
            }
            let d = LineBasisConfig::default();
            let (lo, hi) = (b.lo.unwrap_or(d.bounds.0), b.hi.unwrap_or(d.bounds.1));
            if !(hi > lo) {
                return Err(ck.fail(Some("basis"), "hi", "must exceed lo"));
            }
            if b.truncation > b.points {
                return Err(ck.fail(Some("basis"), "truncation", format!("exceeds {} grid points", b.points)));
            }
            let kernel = RbfKernelSpec::new(b.gain.unwrap_or(d.kernel.gain), b.length_scale.unwrap_or(d.kernel.len))
                .map_err(|e| ck.fail(Some("basis"), "length_scale", e))?;
            LineBasisConfig {
                points: b.points,
                bounds: (lo, hi),
                kernel,
                truncation: b.truncation,
            }
        };

        let data = self.data.clone().unwrap_or_default();
        let noise_variance = data.noise_variance.unwrap_or(1.0);
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(ck.fail(Some("data"), "noise_variance", "must be finite and >= 0"));
        }
        let mean_scale = data.mean_scale.unwrap_or(1.0);
        if !mean_scale.is_finite() {
            return Err(ck.fail(Some("data"), "mean_scale", "must be finite"));
        }
        let variance_ratio = data.variance_ratio.unwrap_or(if heat_kind { 1.0 } else { 0.3 });
        if !(variance_ratio >= 0.0 && variance_ratio.is_finite()) {
            return Err(ck.fail(Some("data"), "variance_ratio", "must be finite and >= 0"));
        }

        let schedule = match &self.schedule {
            None => NoiseSchedule::default(),
            Some(s) => {
                if let Some(kind) = &s.kind {
                    if kind != "cosine" {
                        return Err(ck.fail(
                            Some("schedule"),
                            "kind",
                            format!("unknown schedule `{kind}` (only `cosine`)"),
                        ));
                    }
                }
                let d = NoiseSchedule::default();
                NoiseSchedule::cosine(
                    s.logsnr_max.unwrap_or(d.logsnr_max()),
                    s.logsnr_min.unwrap_or(d.logsnr_min()),
                )
                .map_err(|e| ck.fail(Some("schedule"), "logsnr_max", e))?
            }
        };

        let sampler = self
            .sampler
            .as_ref()
            .ok_or_else(|| ck.fail(None, "sampler", "missing [sampler] section"))?;
        if sampler.nfe.is_empty() {
            return Err(ck.fail(Some("sampler"), "nfe", "list is empty"));
        }
        if sampler.nfe.contains(&0) {
            return Err(ck.fail(Some("sampler"), "nfe", "entries must be >= 1"));
        }
        if sampler.methods.is_empty() {
            return Err(ck.fail(Some("sampler"), "methods", "list is empty"));
        }
        let methods = sampler
            .methods
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ck.fail(Some("sampler"), "methods", e))?;
        let t_eps = sampler.t_eps.unwrap_or(DEFAULT_T_EPS);
        if !(t_eps > 0.0 && t_eps < 1.0) {
            return Err(ck.fail(Some("sampler"), "t_eps", "must lie in (0, 1)"));
        }
        let antithetic = sampler.antithetic.unwrap_or(false);
        let seed = seed.or(sampler.seed).unwrap_or(0);

        let score = match &self.score {
            None => ScoreKind::Oracle,
            Some(s) => match s.kind.as_str() {
                "oracle" => ScoreKind::Oracle,
                "learned" => {
                    let mut cfg = TrainingConfig::new(s.samples_per_bin.unwrap_or(10_000), s.seed.unwrap_or(seed));
                    if let Some(bins) = s.bins {
                        cfg.bins = bins;
                    }
                    if let Some(r) = s.ridge {
                        cfg.ridge = r;
                    }
                    cfg.t_eps = t_eps;
                    cfg.validate()
                        .map_err(|e| ck.fail(Some("score"), "samples_per_bin", e))?;
                    ScoreKind::Learned(cfg)
                }
                other => return Err(ck.fail(Some("score"), "kind", format!("unknown score `{other}`"))),
            },
        };

        let m = self.metrics.clone().unwrap_or_default();
        let metrics = m
            .metrics
            .unwrap_or_else(|| vec!["sw".into()])
            .iter()
            .map(|name| match name.as_str() {
                "sw" => Ok(MetricKind::Sw),
                "power" => Ok(MetricKind::Power),
                "mmd" => Ok(MetricKind::Mmd),
                other => Err(ck.fail(Some("metrics"), "metrics", format!("unknown metric `{other}`"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let d = TestConfig::default();
        let test = TestConfig {
            level: m.level.unwrap_or(d.level),
            permutations: m.permutations.unwrap_or(d.permutations),
            trials: m.trials.unwrap_or(d.trials),
            fpca_components: m.fpca_components.unwrap_or(d.fpca_components),
            rng_seed: seed,
        };
        if !(test.level > 0.0 && test.level < 1.0) {
            return Err(ck.fail(Some("metrics"), "level", "must lie in (0, 1)"));
        }
        if test.trials == 0 {
            return Err(ck.fail(Some("metrics"), "trials", "must be >= 1"));
        }
        if test.permutations == 0 {
            return Err(ck.fail(Some("metrics"), "permutations", "must be >= 1"));
        }
        let projections = m.projections.unwrap_or(128);
        if projections == 0 {
            return Err(ck.fail(Some("metrics"), "projections", "must be >= 1"));
        }
        let sample_size = m.sample_size.unwrap_or(200);
        if sample_size < 2 {
            return Err(ck.fail(Some("metrics"), "sample_size", "must be >= 2"));
        }

        let (heat, heat_self_test) = match (heat_kind, &self.heat) {
            (true, None) => return Err(ck.fail(None, "heat", "missing [heat] section")),
            (false, Some(_)) => return Err(ck.fail(Some("heat"), "", "only valid with experiment = \"heat\"")),
            (false, None) => (None, false),
            (true, Some(h)) => {
                let dflt = HeatExperiment::default();
                let boundary = match h.bc.as_deref() {
                    None | Some("dirichlet") => Boundary::Dirichlet,
                    Some("neumann") => Boundary::Neumann,
                    Some(other) => return Err(ck.fail(Some("heat"), "bc", format!("unknown boundary `{other}`"))),
                };
                if !(h.beta > 0.0) {
                    return Err(ck.fail(Some("heat"), "beta", "must be > 0"));
                }
                if !(h.dt > 0.0) {
                    return Err(ck.fail(Some("heat"), "dt", "must be > 0"));
                }
                if !(h.t_end > 0.0) {
                    return Err(ck.fail(Some("heat"), "t_end", "must be > 0"));
                }
                let frames = h.frames.unwrap_or(dflt.frames);
                if frames == 0 {
                    return Err(ck.fail(Some("heat"), "frames", "must be >= 1"));
                }
                let ic_terms = h.ic_terms.unwrap_or(dflt.ic_terms);
                if ic_terms == 0 {
                    return Err(ck.fail(Some("heat"), "ic_terms", "must be >= 1"));
                }
                if b.truncation > b.points * b.points {
                    return Err(ck.fail(Some("basis"), "truncation", "exceeds the number of grid nodes"));
                }
                let prior = BesselPriorSpec::new(
                    b.gamma.unwrap_or(dflt.prior.scale),
                    b.smoothness.unwrap_or(dflt.prior.power),
                )
                .map_err(|e| ck.fail(Some("basis"), "gamma", e))?;
                let exp = HeatExperiment {
                    points_per_axis: b.points,
                    frames,
                    t_end: h.t_end,
                    beta: h.beta,
                    dt: h.dt,
                    boundary,
                    prior,
                    truncation: b.truncation,
                    variance_ratio,
                    ic_terms,
                    ic_seed: h.ic_seed.unwrap_or(0),
                };
                (Some(exp), h.self_test.unwrap_or(false))
            }
        };

        Ok(Resolved {
            experiment: self.experiment,
            out: out.or_else(|| self.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            line,
            heat,
            heat_self_test,
            noise_variance,
            mean_scale,
            variance_ratio,
            schedule,
            nfe: sampler.nfe.clone(),
            methods,
            count: sampler.count,
            seed,
            t_eps,
            antithetic,
            score,
            metrics,
            projections,
            reference_seed: m.reference_seed.unwrap_or(seed.wrapping_add(1)),
            sample_size,
            test,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
experiment = "gaussian_sanity"

[basis]
points = 50
truncation = 8

[sampler]
nfe = [10, 20]
methods = ["ode", "sde"]
count = 16
seed = 3
"#;

    #[test]
    fn round_trip_preserves_the_document() {
        let cfg = parse("x.toml", SAMPLE).unwrap();
        let again: toml::Value = toml::from_str(&cfg.to_toml()).unwrap();
        let original: toml::Value = toml::from_str(SAMPLE).unwrap();
        assert_eq!(again, original);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let src = SAMPLE.replace("count = 16", "count = 16\ncuont = 4");
        let err = parse("x.toml", &src).unwrap_err().to_string();
        assert!(err.contains("x.toml:12"), "{err}");
    }

    #[test]
    fn validation_messages_point_at_the_key() {
        let src = SAMPLE.replace("nfe = [10, 20]", "nfe = []");
        let err = parse("x.toml", &src)
            .unwrap()
            .resolve("x.toml", &src, None, None)
            .unwrap_err();
        assert_eq!(err.to_string(), "x.toml:9: sampler.nfe: list is empty");
    }

    #[test]
    fn seed_flag_overrides_the_file() {
        let cfg = parse("x.toml", SAMPLE).unwrap();
        assert_eq!(cfg.resolve("x.toml", SAMPLE, None, None).unwrap().seed, 3);
        assert_eq!(cfg.resolve("x.toml", SAMPLE, Some(9), None).unwrap().seed, 9);
    }

    #[test]
    fn heat_needs_its_section() {
        let src = SAMPLE.replace("gaussian_sanity", "heat");
        let err = parse("x.toml", &src)
            .unwrap()
            .resolve("x.toml", &src, None, None)
            .unwrap_err();
        assert!(err.to_string().contains("missing [heat]"));
    }
}
