//! Limiting differential equations and fixed-step integrators.
//!
//! [`build_limit`] maps an agent-based [`ModelSpec`] to the ODE or SDE it
//! converges to as `h → 0`. Diffusion is diagonal: each agent is driven by
//! its own Brownian motion.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::abm::{check_initial, ModelSpec, SelectionScheme, UpdateMode};
use crate::error::{Error, Result};
use crate::kernel::{Interaction, Network};
use crate::noise::NoiseKind;
use crate::rng;
use crate::trajectory::{check_sorted, Trajectory};

/// A system `dX = b(X) dt + σ(X) ∘ dβ` with diagonal `σ`.
pub trait Dynamics {
    fn dim(&self) -> usize;

    /// Writes `b(x)` and `σ(x)` into the given buffers (both of length `dim`).
    fn evaluate(&self, x: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<()>;

    /// True when `σ ≡ 0`.
    fn is_deterministic(&self) -> bool;
}

/// Which limiting equation a [`LimitModel`] encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitRow {
    /// `b_i = (1/N) Σ_j p_ij (x_j - x_i)`, no diffusion.
    Standard,
    /// `b_i = (1/k_i) Σ_j A_ij p_ij (x_j - x_i)`.
    DegreeWeighted,
    /// `b_i = Σ_j p_ij (x_j - x_i) / Σ_l p_il`.
    ProbabilityProportional,
    /// As above with `p_ij²` in the numerator.
    ProbabilityProportionalSquared,
    /// Standard drift, `σ_i = √(m₂/N)`.
    External,
    /// Standard drift, `σ_i = √((m₂/N²) Σ_j p_ij)`.
    Adaptation,
    /// Standard drift, `σ_i = √((m₂/N²) Σ_j p_ij (x_j - x_i)²)`.
    RandomUpdateDistance,
}

impl LimitRow {
    pub fn name(self) -> &'static str {
        match self {
            LimitRow::Standard => "standard",
            LimitRow::DegreeWeighted => "degree_weighted",
            LimitRow::ProbabilityProportional => "probability_proportional",
            LimitRow::ProbabilityProportionalSquared => "probability_proportional_squared",
            LimitRow::External => "external",
            LimitRow::Adaptation => "adaptation",
            LimitRow::RandomUpdateDistance => "random_update_distance",
        }
    }
}

/// The limit of an agent-based model, built by [`build_limit`].
#[derive(Debug, Clone, PartialEq)]
pub struct LimitModel {
    n: usize,
    row: LimitRow,
    interaction: Interaction,
    selection_network: Option<Network>,
    m2: f64,
}

/// Per-agent sums over partners used by every drift and diffusion form.
#[derive(Debug, Clone, Copy, Default)]
struct RowSums {
    p: f64,
    pd: f64,
    p2d: f64,
    pd2: f64,
}

impl RowSums {
    #[inline]
    fn add(&mut self, c: f64, p: f64, d: f64) {
        let cp = c * p;
        self.p += cp;
        self.pd += cp * d;
        self.p2d += cp * p * d;
        self.pd2 += cp * d * d;
    }
}

/// Builds the limiting equation of `spec`.
pub fn build_limit(spec: &ModelSpec) -> Result<LimitModel> {
    spec.validate()?;
    let kernel = spec.kernel();
    if kernel.is_discontinuous() {
        return Err(Error::NoDerivedLimit(
            "the bounded-confidence indicator is discontinuous; limits need a Lipschitz interaction function \
             (use a mollified kernel)"
                .into(),
        ));
    }
    let kind = spec.noise.kind();
    let noisy = !matches!(kind, NoiseKind::None | NoiseKind::Ambiguity);
    if noisy {
        let unsupported = match (&spec.selection, spec.update_mode) {
            (_, UpdateMode::BothUpdate) => Some("updating both agents"),
            (SelectionScheme::UniformWithoutReplacement, _) => {
                Some("selection without replacement")
            }
            (SelectionScheme::DegreeWeighted(_), _) => Some("degree-weighted selection"),
            (SelectionScheme::ProbabilityProportional, _) => {
                Some("probability-proportional selection")
            }
            (SelectionScheme::UniformWithReplacement, _) => None,
        };
        if let Some(what) = unsupported {
            return Err(Error::NoDerivedLimit(format!(
                "{what} combined with {} noise",
                kind.name()
            )));
        }
    }
    if kind == NoiseKind::Ambiguity
        && !matches!(spec.selection, SelectionScheme::UniformWithReplacement)
    {
        return Err(Error::NoDerivedLimit(format!(
            "ambiguity noise combined with {} selection",
            spec.selection.name()
        )));
    }
    if spec.update_mode == UpdateMode::BothUpdate
        && !matches!(spec.selection, SelectionScheme::UniformWithReplacement)
    {
        return Err(Error::NoDerivedLimit(format!(
            "updating both agents with {} selection",
            spec.selection.name()
        )));
    }

    let mut selection_network = None;
    let row = match kind {
        NoiseKind::External => LimitRow::External,
        NoiseKind::Adaptation => LimitRow::Adaptation,
        NoiseKind::RandomUpdateDistance => LimitRow::RandomUpdateDistance,
        NoiseKind::None | NoiseKind::Ambiguity => match &spec.selection {
            SelectionScheme::UniformWithReplacement
            | SelectionScheme::UniformWithoutReplacement => LimitRow::Standard,
            SelectionScheme::DegreeWeighted(net) => {
                selection_network = Some(net.clone());
                LimitRow::DegreeWeighted
            }
            SelectionScheme::ProbabilityProportional if spec.double_weighting => {
                LimitRow::ProbabilityProportionalSquared
            }
            SelectionScheme::ProbabilityProportional => LimitRow::ProbabilityProportional,
        },
    };
    let m2 = match row {
        LimitRow::External | LimitRow::Adaptation | LimitRow::RandomUpdateDistance => {
            spec.noise.analytic_mk(2).unwrap_or(0.0)
        }
        _ => 0.0,
    };
    Ok(LimitModel {
        n: spec.n_agents,
        row,
        interaction: spec.interaction.clone(),
        selection_network,
        m2,
    })
}

impl LimitModel {
    pub fn row(&self) -> LimitRow {
        self.row
    }

    /// `m₂` of the noise driving the diffusion (0 for ODE rows).
    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn drift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (mut b, mut s) = (vec![0.0; self.n], vec![0.0; self.n]);
        self.checked_evaluate(x, &mut b, &mut s)?;
        Ok(b)
    }

    pub fn diffusion(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (mut b, mut s) = (vec![0.0; self.n], vec![0.0; self.n]);
        self.checked_evaluate(x, &mut b, &mut s)?;
        Ok(s)
    }

    fn checked_evaluate(&self, x: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::invalid(
                "x",
                format!("state has {} entries for {} agents", x.len(), self.n),
            ));
        }
        self.evaluate(x, drift, diffusion)
    }

    fn row_sums(&self, x: &[f64]) -> Vec<RowSums> {
        let n = self.n;
        let mut sums = vec![RowSums::default(); n];
        let weight = |i: usize, j: usize| {
            self.selection_network
                .as_ref()
                .map_or(1.0, |net| net.weight(i, j))
        };
        if self.interaction.is_symmetric() {
            for i in 0..n {
                sums[i].add(weight(i, i), self.interaction.p(x, i, i), 0.0);
                for j in i + 1..n {
                    let p = self.interaction.p(x, i, j);
                    let d = x[j] - x[i];
                    sums[i].add(weight(i, j), p, d);
                    sums[j].add(weight(j, i), p, -d);
                }
            }
        } else {
            for (i, s) in sums.iter_mut().enumerate() {
                for j in 0..n {
                    s.add(weight(i, j), self.interaction.p(x, i, j), x[j] - x[i]);
                }
            }
        }
        sums
    }
}

impl Dynamics for LimitModel {
    fn dim(&self) -> usize {
        self.n
    }

    fn evaluate(&self, x: &[f64], drift: &mut [f64], diffusion: &mut [f64]) -> Result<()> {
        let n = self.n as f64;
        let sums = self.row_sums(x);
        for (i, s) in sums.iter().enumerate() {
            drift[i] = match self.row {
                LimitRow::DegreeWeighted => {
                    s.pd / self
                        .selection_network
                        .as_ref()
                        .map_or(1.0, |net| net.degree(i))
                }
                LimitRow::ProbabilityProportional | LimitRow::ProbabilityProportionalSquared => {
                    if !(s.p > 0.0) {
                        return Err(Error::ZeroInteractionMass { agent: i });
                    }
                    let num = if self.row == LimitRow::ProbabilityProportional {
                        s.pd
                    } else {
                        s.p2d
                    };
                    num / s.p
                }
                _ => s.pd / n,
            };
            diffusion[i] = match self.row {
                LimitRow::External => (self.m2 / n).sqrt(),
                LimitRow::Adaptation => (self.m2 / (n * n) * s.p).sqrt(),
                LimitRow::RandomUpdateDistance => (self.m2 / (n * n) * s.pd2).sqrt(),
                _ => 0.0,
            };
        }
        Ok(())
    }

    fn is_deterministic(&self) -> bool {
        self.m2 == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    ForwardEuler,
    EulerMaruyama,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ForwardEuler => "forward_euler",
            Scheme::EulerMaruyama => "euler_maruyama",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSpec {
    pub dt: f64,
    pub scheme: Scheme,
}

impl IntegratorSpec {
    pub fn forward_euler(dt: f64) -> Self {
        IntegratorSpec {
            dt,
            scheme: Scheme::ForwardEuler,
        }
    }

    pub fn euler_maruyama(dt: f64) -> Self {
        IntegratorSpec {
            dt,
            scheme: Scheme::EulerMaruyama,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(
                "dt",
                format!("timestep must be positive (got {})", self.dt),
            ));
        }
        Ok(())
    }

    /// Step index of each sample time; fails unless every time is a multiple of `dt`.
    fn step_indices(&self, sample_times: &[f64]) -> Result<Vec<u64>> {
        sample_times
            .iter()
            .map(|&t| {
                let k = (t / self.dt).round();
                if (k * self.dt - t).abs() > 1e-9 * t.abs().max(1.0) {
                    Err(Error::invalid(
                        "sample_times",
                        format!("sample time {t} is not a multiple of dt = {}", self.dt),
                    ))
                } else {
                    Ok(k as u64)
                }
            })
            .collect()
    }
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        IntegratorSpec::forward_euler(0.01)
    }
}

/// Integrates `model` from `x0`, recording the state at each sample time.
///
/// Euler–Maruyama draws one standard normal per agent per step, in agent
/// order. Forward Euler never touches `rng`.
pub fn integrate<D, R>(
    model: &D,
    x0: &[f64],
    integrator: &IntegratorSpec,
    horizon: f64,
    sample_times: &[f64],
    rng: &mut R,
) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    R: Rng + ?Sized,
{
    integrator.validate()?;
    let n = model.dim();
    if x0.len() != n {
        return Err(Error::invalid(
            "x0",
            format!("initial state has {} entries for {n} agents", x0.len()),
        ));
    }
    if let Some(agent) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { agent, t: 0.0 });
    }
    if integrator.scheme == Scheme::ForwardEuler && !model.is_deterministic() {
        return Err(Error::invalid(
            "scheme",
            "forward Euler cannot integrate a model with non-zero diffusion; use Euler-Maruyama",
        ));
    }
    check_sorted(sample_times)?;
    if let Some(&t) = sample_times
        .iter()
        .find(|&&t| t < 0.0 || t > horizon * (1.0 + 1e-12))
    {
        return Err(Error::invalid(
            "sample_times",
            format!("sample time {t} is outside [0, {horizon}]"),
        ));
    }
    let targets = integrator.step_indices(sample_times)?;
    let dt = integrator.dt;
    let sqrt_dt = dt.sqrt();
    let stochastic = integrator.scheme == Scheme::EulerMaruyama;

    let mut x = x0.to_vec();
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut traj = Trajectory::with_capacity(sample_times.len(), n);
    let mut next = 0;
    let mut step = 0u64;
    loop {
        while next < targets.len() && targets[next] == step {
            traj.push_row(sample_times[next], &x);
            next += 1;
        }
        if next == targets.len() {
            break;
        }
        model.evaluate(&x, &mut b, &mut s)?;
        step += 1;
        for i in 0..n {
            x[i] += b[i] * dt;
            if stochastic {
                let z: f64 = rng.sample(StandardNormal);
                x[i] += s[i] * sqrt_dt * z;
            }
            if !x[i].is_finite() {
                return Err(Error::NonFinite {
                    agent: i,
                    t: step as f64 * dt,
                });
            }
        }
    }
    Ok(traj)
}

/// `runs` independent integrations; run `r` uses stream `(base_seed, r)`.
pub fn integrate_ensemble<D>(
    model: &D,
    x0: &[f64],
    integrator: &IntegratorSpec,
    horizon: f64,
    sample_times: &[f64],
    base_seed: u64,
    runs: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>>
where
    D: Dynamics + Sync + ?Sized,
{
    runs.into_par_iter()
        .map(|r| {
            integrate(
                model,
                x0,
                integrator,
                horizon,
                sample_times,
                &mut rng::stream(base_seed, r),
            )
        })
        .collect()
}

/// Builds the limit of `spec` and integrates it from `x0` up to the spec's horizon.
pub fn solve_limit<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x0: &[f64],
    integrator: &IntegratorSpec,
    sample_times: &[f64],
    rng: &mut R,
) -> Result<Trajectory> {
    check_initial(spec, x0)?;
    let model = build_limit(spec)?;
    integrate(&model, x0, integrator, spec.horizon, sample_times, rng)
}
