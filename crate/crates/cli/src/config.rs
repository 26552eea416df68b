//! Experiment configuration: strict TOML parsing, defaults and resolution
//! into library types.
//!
//! A config names one experiment and optionally overrides the model, the
//! integrator, the initial condition and the experiment's own parameters:
//!
//! ```toml
//! experiment = "sweep_h"      # compare | sweep_h | ensemble | limitcheck
//! base_seed = 7
//!
//! [model]
//! n_agents = 50
//! h = 1e-5
//! horizon = 20.0
//!
//! [sweep_h]
//! h_list = [1e-2, 1e-3, 1e-4]
//! runs_per_h = 20
//! ```
//!
//! Unknown keys are errors. Resolution fills every omitted value, so the
//! resolved config written to `manifest.json` reproduces the run exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use opinion_limits::dem::{build_limit, Dynamics};
use opinion_limits::kernel::erdos_renyi;
use opinion_limits::rng::{derive_seed, stream};
use opinion_limits::{
    ErrorNorm, IntegratorSpec, InteractionKernel, ModelSpec, Mollifier, Network, NoiseFamily,
    NoiseKind, NoiseLaw, Scheme, SelectionScheme, UpdateMode,
};
use rand::Rng;

use crate::CliError;

pub const DEFAULT_N: usize = 50;
pub const DEFAULT_H: f64 = 1e-5;
pub const DEFAULT_HORIZON: f64 = 20.0;
pub const DEFAULT_RADIUS: f64 = 0.5;
pub const DEFAULT_MOLLIFIER_STD: f64 = 0.01;
pub const DEFAULT_P_CONN: f64 = 0.1;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_VAR_PER_H: f64 = 0.05;
pub const DEFAULT_UPDATE_DISTANCE_VAR_PER_H: f64 = 5.0;
pub const DEFAULT_ENSEMBLE_RUNS: u64 = 500;
pub const FULL_ENSEMBLE_RUNS: u64 = 5000;
pub const DEFAULT_RUNS_PER_H: u64 = 20;
pub const FULL_RUNS_PER_H: u64 = 100;
pub const DEFAULT_H_LIST: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const DEFAULT_LIMITCHECK_SAMPLES: u64 = 100_000;
pub const DEFAULT_LIMITCHECK_STATES: usize = 100;

const SEED_ABM: u64 = 1;
const SEED_DEM: u64 = 2;
const SEED_X0: u64 = 3;
const SEED_NETWORK: u64 = 4;
const SEED_PROBES: u64 = 5;
const SEED_COEFFICIENTS: u64 = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub error_norm: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub dem: DemSection,
    #[serde(default)]
    pub x0: X0Section,
    #[serde(default)]
    pub sweep_h: Option<SweepSection>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub limitcheck: Option<LimitcheckSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(alias = "N")]
    pub n_agents: Option<usize>,
    pub h: Option<f64>,
    #[serde(alias = "T")]
    pub horizon: Option<f64>,
    /// `uniform`, `uniform_without_replacement`, `degree_weighted` or `probability_proportional`.
    pub selection: Option<String>,
    /// `single` or `both`.
    pub update_mode: Option<String>,
    pub double_weighting: Option<bool>,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    pub network: Option<NetworkSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    /// `mollified`, `bounded_confidence` or `constant`.
    #[serde(rename = "type")]
    pub kind: Option<String>,
    pub radius: Option<f64>,
    /// `normal` or `uniform`.
    pub mollifier: Option<String>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    /// `none`, `ambiguity`, `external`, `adaptation` or `random_update_distance`.
    pub kind: Option<String>,
    pub mean_per_h: Option<f64>,
    pub var_per_h: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// `erdos_renyi` or `file`.
    pub source: Option<String>,
    pub p_conn: Option<f64>,
    pub seed: Option<u64>,
    pub path: Option<PathBuf>,
    /// Multiply interaction probabilities by the adjacency matrix.
    pub mask: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemSection {
    pub dt: Option<f64>,
    /// `auto`, `forward_euler` or `euler_maruyama`.
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct X0Section {
    pub values: Option<Vec<f64>>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub h_list: Option<Vec<f64>>,
    pub runs_per_h: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_runs: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitcheckSection {
    pub h_list: Option<Vec<f64>>,
    pub samples: Option<u64>,
    pub n_states: Option<usize>,
    pub drift_tol: Option<f64>,
    pub diffusion_tol: Option<f64>,
    pub gamma4_tol: Option<f64>,
}

/// The emitted `manifest.json`: the resolved config plus every derived seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seeds: Seeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub base: u64,
    pub abm: u64,
    pub dem: u64,
    pub x0: Option<u64>,
    pub network: Option<u64>,
    pub probe_states: u64,
    pub coefficients: u64,
}

impl Seeds {
    fn derive(base: u64) -> Self {
        Seeds {
            base,
            abm: derive_seed(base, SEED_ABM),
            dem: derive_seed(base, SEED_DEM),
            x0: None,
            network: None,
            probe_states: derive_seed(base, SEED_PROBES),
            coefficients: derive_seed(base, SEED_COEFFICIENTS),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Compare,
    SweepH {
        h_list: Vec<f64>,
        runs_per_h: u64,
    },
    Ensemble {
        n_runs: u64,
    },
    Limitcheck {
        h_list: Vec<f64>,
        samples: u64,
        n_states: usize,
        tolerances: opinion_limits::limitcheck::Tolerances,
    },
}

/// Everything an experiment needs, validated.
#[derive(Debug, Clone)]
pub struct Plan {
    pub experiment: Experiment,
    pub spec: ModelSpec,
    pub integrator: IntegratorSpec,
    pub x0: Vec<f64>,
    pub error_norm: ErrorNorm,
    pub seeds: Seeds,
    pub manifest: Manifest,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ResolveOptions {
    pub paper_scale: bool,
}

/// Parses a TOML config, or a JSON manifest emitted by an earlier run.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    if text.trim_start().starts_with('{') {
        let manifest: Manifest =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        return Ok(manifest.config);
    }
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut config = parse_config(&text)?;
    if let Some(net) = config.model.network.as_mut() {
        if let Some(p) = net.path.as_mut() {
            if p.is_relative() {
                let joined = path.parent().unwrap_or(Path::new(".")).join(&*p);
                *p = fs::canonicalize(&joined).unwrap_or(joined);
            }
        }
    }
    Ok(config)
}

fn config_err(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("invalid {field}: {message}"))
}

fn lib_err(e: opinion_limits::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Fills defaults, builds the library types and validates them together.
pub fn resolve(config: &ExperimentConfig, opts: ResolveOptions) -> Result<Plan, CliError> {
    let mut resolved = config.clone();
    let mut seeds = Seeds::derive(config.base_seed);

    let error_norm = match resolved
        .error_norm
        .get_or_insert_with(|| "duration".into())
        .as_str()
    {
        "duration" => ErrorNorm::Duration,
        "samples" => ErrorNorm::Samples,
        other => {
            return Err(config_err(
                "error_norm",
                format!("unknown norm {other:?} (duration or samples)"),
            ))
        }
    };

    let spec = resolve_model(&mut resolved.model, &mut seeds)?;
    spec.validate().map_err(lib_err)?;
    let n = spec.n_agents;
    let integrator = resolve_dem(&mut resolved.dem, &spec)?;
    let x0 = resolve_x0(&mut resolved.x0, n, &mut seeds)?;
    let experiment = resolve_experiment(&mut resolved, opts)?;

    if !matches!(experiment, Experiment::Limitcheck { .. }) {
        check_grid(spec.horizon, integrator.dt)?;
    }
    if matches!(experiment, Experiment::SweepH { .. }) && integrator.scheme != Scheme::ForwardEuler
    {
        return Err(config_err(
            "experiment",
            "sweep_h compares against a deterministic limit; the model has a diffusion term",
        ));
    }

    Ok(Plan {
        experiment,
        spec,
        integrator,
        x0,
        error_norm,
        seeds,
        manifest: Manifest {
            config: resolved,
            seeds,
        },
    })
}

fn check_grid(horizon: f64, dt: f64) -> Result<(), CliError> {
    let k = (horizon / dt).round();
    if k < 1.0 || (k * dt - horizon).abs() > 1e-9 * horizon {
        return Err(config_err(
            "dem.dt",
            format!("horizon {horizon} is not a whole number of steps of {dt}"),
        ));
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> Result<f64, CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(field, format!("must be positive (got {v})")))
    }
}

fn resolve_model(m: &mut ModelSection, seeds: &mut Seeds) -> Result<ModelSpec, CliError> {
    let n = *m.n_agents.get_or_insert(DEFAULT_N);
    let h = *m.h.get_or_insert(DEFAULT_H);
    let horizon = *m.horizon.get_or_insert(DEFAULT_HORIZON);
    let kernel = resolve_kernel(&mut m.kernel)?;
    let mut spec = ModelSpec::new(n, h, horizon, kernel);

    let selection = m.selection.get_or_insert_with(|| "uniform".into()).clone();
    let network = match selection.as_str() {
        "degree_weighted" => Some(m.network.get_or_insert_with(NetworkSection::default)),
        _ => m.network.as_mut(),
    };
    let network = match network {
        Some(section) => Some(resolve_network(section, n, seeds)?),
        None => None,
    };

    let selection = match selection.as_str() {
        "uniform" => SelectionScheme::UniformWithReplacement,
        "uniform_without_replacement" => SelectionScheme::UniformWithoutReplacement,
        "degree_weighted" => {
            SelectionScheme::DegreeWeighted(network.clone().expect("network resolved").0)
        }
        "probability_proportional" => SelectionScheme::ProbabilityProportional,
        other => {
            return Err(config_err(
                "model.selection",
                format!("unknown scheme {other:?}"),
            ))
        }
    };
    if let Some((net, true)) = network {
        spec = spec.with_mask(net);
    }
    spec = spec.with_selection(selection);

    match m
        .update_mode
        .get_or_insert_with(|| "single".into())
        .as_str()
    {
        "single" => {}
        "both" => spec = spec.with_update_mode(UpdateMode::BothUpdate),
        other => {
            return Err(config_err(
                "model.update_mode",
                format!("unknown mode {other:?} (single or both)"),
            ))
        }
    }
    spec = spec.with_double_weighting(*m.double_weighting.get_or_insert(false));
    spec = spec.with_noise(resolve_noise(&mut m.noise, n)?);
    Ok(spec)
}

fn resolve_kernel(k: &mut KernelSection) -> Result<InteractionKernel, CliError> {
    let kind = k.kind.get_or_insert_with(|| "mollified".into()).clone();
    let kernel = match kind.as_str() {
        "bounded_confidence" => InteractionKernel::BoundedConfidence {
            radius: *k.radius.get_or_insert(DEFAULT_RADIUS),
        },
        "mollified" => {
            let radius = *k.radius.get_or_insert(DEFAULT_RADIUS);
            let mollifier = match k.mollifier.get_or_insert_with(|| "normal".into()).as_str() {
                "normal" => Mollifier::normal(
                    *k.mean.get_or_insert(0.0),
                    *k.std.get_or_insert(DEFAULT_MOLLIFIER_STD),
                ),
                "uniform" => {
                    let lo = k.lo.ok_or_else(|| {
                        config_err("model.kernel.lo", "uniform mollifier needs lo")
                    })?;
                    let hi = k.hi.ok_or_else(|| {
                        config_err("model.kernel.hi", "uniform mollifier needs hi")
                    })?;
                    Mollifier::uniform(lo, hi)
                }
                other => {
                    return Err(config_err(
                        "model.kernel.mollifier",
                        format!("unknown mollifier {other:?}"),
                    ))
                }
            }
            .map_err(lib_err)?;
            InteractionKernel::Mollified { radius, mollifier }
        }
        "constant" => InteractionKernel::Constant(
            k.value
                .ok_or_else(|| config_err("model.kernel.value", "constant kernel needs value"))?,
        ),
        other => {
            return Err(config_err(
                "model.kernel.type",
                format!("unknown kernel {other:?}"),
            ))
        }
    };
    kernel.validate().map_err(lib_err)?;
    Ok(kernel)
}

fn resolve_noise(s: &mut NoiseSection, n: usize) -> Result<NoiseFamily, CliError> {
    let kind = match s.kind.get_or_insert_with(|| "none".into()).as_str() {
        "none" => return Ok(NoiseFamily::none()),
        "ambiguity" => NoiseKind::Ambiguity,
        "external" => NoiseKind::External,
        "adaptation" => NoiseKind::Adaptation,
        "random_update_distance" => NoiseKind::RandomUpdateDistance,
        other => {
            return Err(config_err(
                "model.noise.kind",
                format!("unknown noise {other:?}"),
            ))
        }
    };
    let (mean, var) = match kind {
        NoiseKind::RandomUpdateDistance => (n as f64, DEFAULT_UPDATE_DISTANCE_VAR_PER_H),
        _ => (0.0, DEFAULT_VAR_PER_H),
    };
    let mean = *s.mean_per_h.get_or_insert(mean);
    let var = *s.var_per_h.get_or_insert(var);
    NoiseFamily::new(kind, NoiseLaw::from_mean_var(mean, var), n).map_err(lib_err)
}

/// The network and whether it also masks interaction probabilities.
fn resolve_network(
    s: &mut NetworkSection,
    n: usize,
    seeds: &mut Seeds,
) -> Result<(Network, bool), CliError> {
    let mask = *s.mask.get_or_insert(false);
    let net = match s
        .source
        .get_or_insert_with(|| "erdos_renyi".into())
        .as_str()
    {
        "erdos_renyi" => {
            let p = *s.p_conn.get_or_insert(DEFAULT_P_CONN);
            let seed = *s.seed.get_or_insert(derive_seed(seeds.base, SEED_NETWORK));
            seeds.network = Some(seed);
            erdos_renyi(n, p, seed).map_err(lib_err)?
        }
        "file" => {
            let path = s
                .path
                .as_ref()
                .ok_or_else(|| config_err("model.network.path", "file network needs path"))?;
            let file = fs::File::open(path).map_err(|e| {
                config_err(
                    "model.network.path",
                    format!("cannot open {}: {e}", path.display()),
                )
            })?;
            Network::read_csv(std::io::BufReader::new(file)).map_err(lib_err)?
        }
        other => {
            return Err(config_err(
                "model.network.source",
                format!("unknown source {other:?}"),
            ))
        }
    };
    if net.len() != n {
        return Err(config_err(
            "model.network",
            format!("network has {} nodes for {n} agents", net.len()),
        ));
    }
    Ok((net, mask))
}

fn resolve_dem(d: &mut DemSection, spec: &ModelSpec) -> Result<IntegratorSpec, CliError> {
    let dt = *d.dt.get_or_insert(DEFAULT_DT);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(config_err(
            "dem.dt",
            format!("timestep must be positive (got {dt})"),
        ));
    }
    let deterministic = build_limit(spec).map_err(lib_err)?.is_deterministic();
    let scheme = match d.scheme.get_or_insert_with(|| "auto".into()).as_str() {
        "auto" if deterministic => Scheme::ForwardEuler,
        "auto" => Scheme::EulerMaruyama,
        "forward_euler" => Scheme::ForwardEuler,
        "euler_maruyama" => Scheme::EulerMaruyama,
        other => {
            return Err(config_err(
                "dem.scheme",
                format!("unknown scheme {other:?}"),
            ))
        }
    };
    d.scheme = Some(scheme.name().into());
    if scheme == Scheme::ForwardEuler && !deterministic {
        return Err(config_err(
            "dem.scheme",
            "forward Euler cannot integrate a model with a diffusion term",
        ));
    }
    Ok(IntegratorSpec { dt, scheme })
}

fn resolve_x0(s: &mut X0Section, n: usize, seeds: &mut Seeds) -> Result<Vec<f64>, CliError> {
    if let Some(values) = &s.values {
        if s.lo.is_some() || s.hi.is_some() || s.seed.is_some() {
            return Err(config_err(
                "x0",
                "give either values or lo/hi/seed, not both",
            ));
        }
        if values.len() != n {
            return Err(config_err(
                "x0.values",
                format!("{} entries for {n} agents", values.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(config_err("x0.values", format!("non-finite opinion {v}")));
        }
        return Ok(values.clone());
    }
    let lo = *s.lo.get_or_insert(-1.0);
    let hi = *s.hi.get_or_insert(1.0);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(config_err("x0", format!("need lo < hi (got {lo}, {hi})")));
    }
    let seed = *s.seed.get_or_insert(derive_seed(seeds.base, SEED_X0));
    seeds.x0 = Some(seed);
    let mut rng = stream(seed, 0);
    Ok((0..n).map(|_| rng.random_range(lo..hi)).collect())
}

fn check_h_list(field: &str, h_list: &[f64]) -> Result<(), CliError> {
    if h_list.is_empty() {
        return Err(config_err(field, "need at least one timestep"));
    }
    for &h in h_list {
        positive(field, h)
            .map_err(|_| config_err(field, format!("timestep must be positive (got {h})")))?;
    }
    Ok(())
}

fn resolve_experiment(
    c: &mut ExperimentConfig,
    opts: ResolveOptions,
) -> Result<Experiment, CliError> {
    let unused = |present: bool, name: &str| {
        if present {
            Err(config_err(
                name,
                format!(
                    "section [{name}] does not apply to experiment {:?}",
                    c.experiment
                ),
            ))
        } else {
            Ok(())
        }
    };
    let kind = c.experiment.clone();
    if kind != "sweep_h" {
        unused(c.sweep_h.is_some(), "sweep_h")?;
    }
    if kind != "ensemble" {
        unused(c.ensemble.is_some(), "ensemble")?;
    }
    if kind != "limitcheck" {
        unused(c.limitcheck.is_some(), "limitcheck")?;
    }
    match kind.as_str() {
        "compare" => Ok(Experiment::Compare),
        "sweep_h" => {
            let s = c.sweep_h.get_or_insert_with(SweepSection::default);
            let h_list = s
                .h_list
                .get_or_insert_with(|| DEFAULT_H_LIST.to_vec())
                .clone();
            check_h_list("sweep_h.h_list", &h_list)?;
            let default_runs = if opts.paper_scale {
                FULL_RUNS_PER_H
            } else {
                DEFAULT_RUNS_PER_H
            };
            let runs_per_h = *s.runs_per_h.get_or_insert(default_runs);
            if runs_per_h == 0 {
                return Err(config_err("sweep_h.runs_per_h", "need at least one run"));
            }
            Ok(Experiment::SweepH { h_list, runs_per_h })
        }
        "ensemble" => {
            let s = c.ensemble.get_or_insert_with(EnsembleSection::default);
            let default_runs = if opts.paper_scale {
                FULL_ENSEMBLE_RUNS
            } else {
                DEFAULT_ENSEMBLE_RUNS
            };
            let n_runs = *s.n_runs.get_or_insert(default_runs);
            if n_runs < 2 {
                return Err(config_err(
                    "ensemble.n_runs",
                    format!("need at least 2 runs (got {n_runs})"),
                ));
            }
            Ok(Experiment::Ensemble { n_runs })
        }
        "limitcheck" => {
            let s = c.limitcheck.get_or_insert_with(LimitcheckSection::default);
            let h_list = s
                .h_list
                .get_or_insert_with(|| DEFAULT_H_LIST.to_vec())
                .clone();
            check_h_list("limitcheck.h_list", &h_list)?;
            if h_list.windows(2).any(|w| w[1] >= w[0]) {
                return Err(config_err(
                    "limitcheck.h_list",
                    "timesteps must be strictly decreasing",
                ));
            }
            let defaults = opinion_limits::limitcheck::Tolerances::default();
            let tolerances = opinion_limits::limitcheck::Tolerances {
                drift: positive(
                    "limitcheck.drift_tol",
                    *s.drift_tol.get_or_insert(defaults.drift),
                )?,
                diffusion: positive(
                    "limitcheck.diffusion_tol",
                    *s.diffusion_tol.get_or_insert(defaults.diffusion),
                )?,
                gamma4: positive(
                    "limitcheck.gamma4_tol",
                    *s.gamma4_tol.get_or_insert(defaults.gamma4),
                )?,
            };
            let samples = *s.samples.get_or_insert(DEFAULT_LIMITCHECK_SAMPLES);
            let n_states = *s.n_states.get_or_insert(DEFAULT_LIMITCHECK_STATES);
            Ok(Experiment::Limitcheck {
                h_list,
                samples,
                n_states,
                tolerances,
            })
        }
        other => Err(config_err(
            "experiment",
            format!("unknown experiment {other:?} (compare, sweep_h, ensemble or limitcheck)"),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(text: &str) -> Result<Plan, CliError> {
        resolve(&parse_config(text)?, ResolveOptions::default())
    }

    fn message(r: Result<Plan, CliError>) -> String {
        match r {
            Err(CliError::Config(m)) => m,
            Err(e) => panic!("expected a config error, got {e}"),
            Ok(_) => panic!("expected a config error"),
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let p = plan("experiment = \"compare\"\n[model]\nN = 50\n").unwrap();
        assert_eq!(p.spec.n_agents, 50);
        assert_eq!(p.spec.h, DEFAULT_H);
        assert_eq!(p.spec.horizon, DEFAULT_HORIZON);
        assert_eq!(p.spec.kernel(), &InteractionKernel::default());
        assert_eq!(p.integrator, IntegratorSpec::forward_euler(DEFAULT_DT));
        assert_eq!(p.error_norm, ErrorNorm::Duration);
        assert_eq!(p.x0.len(), 50);
        assert!(p.x0.iter().all(|v| (-1.0..1.0).contains(v)));
        let m = &p.manifest.config.model;
        assert_eq!(m.kernel.radius, Some(DEFAULT_RADIUS));
        assert_eq!(p.manifest.config.x0.seed, p.seeds.x0);
    }

    #[test]
    fn zero_timestep_is_rejected() {
        let m = message(plan("experiment = \"compare\"\n[model]\nh = 0.0\n"));
        assert!(m.contains("timestep must be positive"), "{m}");
        let m = message(plan("experiment = \"compare\"\n[dem]\ndt = 0.0\n"));
        assert!(m.contains("timestep must be positive"), "{m}");
    }

    #[test]
    fn bounded_confidence_has_no_limit() {
        let m = message(plan(
            "experiment = \"compare\"\n[model.kernel]\ntype = \"bounded_confidence\"\n",
        ));
        assert!(m.starts_with("no derived limit"), "{m}");
        assert!(m.contains("discontinuous"), "{m}");
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let m = message(plan("experiment = \"compare\"\n[model]\nn_agent = 50\n"));
        assert!(m.contains("n_agent"), "{m}");
        assert!(m.contains("line 3"), "{m}");
    }

    #[test]
    fn unknown_values_name_the_field() {
        let m = message(plan(
            "experiment = \"compare\"\n[model]\nselection = \"random\"\n",
        ));
        assert!(m.contains("model.selection"), "{m}");
        let m = message(plan("experiment = \"plot\"\n"));
        assert!(m.contains("experiment"), "{m}");
    }

    #[test]
    fn misplaced_section_is_rejected() {
        let m = message(plan("experiment = \"compare\"\n[ensemble]\nn_runs = 10\n"));
        assert!(m.contains("[ensemble]"), "{m}");
    }

    #[test]
    fn unsupported_combination_is_reported_verbatim() {
        let m = message(plan(
            "experiment = \"compare\"\n[model]\nupdate_mode = \"both\"\n[model.noise]\nkind = \"external\"\n",
        ));
        assert!(m.starts_with("no derived limit"), "{m}");
    }

    #[test]
    fn noisy_models_default_to_euler_maruyama() {
        let p =
            plan("experiment = \"ensemble\"\n[model.noise]\nkind = \"random_update_distance\"\n")
                .unwrap();
        assert_eq!(p.integrator.scheme, Scheme::EulerMaruyama);
        assert_eq!(p.spec.noise.law().mean_per_h(), 50.0);
        assert_eq!(
            p.spec.noise.law().var_per_h(),
            DEFAULT_UPDATE_DISTANCE_VAR_PER_H
        );
        let m = message(plan(
            "experiment = \"compare\"\n[model.noise]\nkind = \"external\"\n[dem]\nscheme = \"forward_euler\"\n",
        ));
        assert!(m.contains("dem.scheme"), "{m}");
    }

    #[test]
    fn paper_scale_raises_only_defaults() {
        let c = parse_config("experiment = \"ensemble\"\n").unwrap();
        let p = resolve(&c, ResolveOptions { paper_scale: true }).unwrap();
        assert_eq!(
            p.experiment,
            Experiment::Ensemble {
                n_runs: FULL_ENSEMBLE_RUNS
            }
        );
        let c = parse_config("experiment = \"ensemble\"\n[ensemble]\nn_runs = 40\n").unwrap();
        let p = resolve(&c, ResolveOptions { paper_scale: true }).unwrap();
        assert_eq!(p.experiment, Experiment::Ensemble { n_runs: 40 });
    }

    #[test]
    fn degree_weighted_builds_a_network() {
        let p =
            plan("experiment = \"compare\"\n[model]\nselection = \"degree_weighted\"\n").unwrap();
        assert!(matches!(
            p.spec.selection,
            SelectionScheme::DegreeWeighted(_)
        ));
        assert!(p.seeds.network.is_some());
        assert!(p.spec.interaction.mask.is_none());
    }

    #[test]
    fn explicit_x0_must_match_population() {
        let m = message(plan(
            "experiment = \"compare\"\n[model]\nN = 3\n[x0]\nvalues = [0.1, 0.2]\n",
        ));
        assert!(m.contains("x0.values"), "{m}");
        let p =
            plan("experiment = \"compare\"\n[model]\nN = 2\n[x0]\nvalues = [0.1, 0.2]\n").unwrap();
        assert_eq!(p.x0, vec![0.1, 0.2]);
        assert_eq!(p.seeds.x0, None);
    }

    #[test]
    fn manifest_resolves_to_the_same_plan() {
        let p = plan("experiment = \"sweep_h\"\nbase_seed = 9\n[model]\nN = 10\n").unwrap();
        let json = serde_json::to_string_pretty(&p.manifest).unwrap();
        let q = plan(&json).unwrap();
        assert_eq!(q.manifest, p.manifest);
        assert_eq!(q.x0, p.x0);
        assert_eq!(q.experiment, p.experiment);
    }

    #[test]
    fn horizon_must_fit_the_output_grid() {
        let m = message(plan(
            "experiment = \"compare\"\n[model]\nhorizon = 1.005\n[dem]\ndt = 0.01\n",
        ));
        assert!(m.contains("dem.dt"), "{m}");
    }
}
