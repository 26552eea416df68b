//! Discrete-time agent-based engine.
//!
//! Each step of length `h` selects an ordered pair `(i, j)`, decides whether
//! they interact, and moves `x_i` a fraction `μ^h` of the way towards `x_j`,
//! possibly perturbed by one of the [`NoiseKind`]s. The update distance is
//! tied to the timestep (`μ^h = N·h` in the basic model), which is what makes
//! the chain converge to a differential equation as `h → 0`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{Interaction, InteractionKernel, Network};
use crate::noise::{NoiseFamily, NoiseKind};
use crate::rng;
use crate::trajectory::{check_sorted, Trajectory};

/// Slack used when converting times to step counts.
const STEP_SLACK: f64 = 1e-6;

/// How the interacting pair is drawn.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum SelectionScheme {
    /// `i` and `j` independent and uniform; `i = j` is a legal no-op draw.
    #[default]
    UniformWithReplacement,
    /// Uniform over ordered pairs with `i != j`.
    UniformWithoutReplacement,
    /// `i` uniform, then `j` with probability `A_ij / k_i`.
    DegreeWeighted(Network),
    /// `i` uniform, then `j` with probability `p_ij / Σ_l p_il`; the
    /// interaction then always happens.
    ProbabilityProportional,
}

impl SelectionScheme {
    pub fn name(&self) -> &'static str {
        match self {
            SelectionScheme::UniformWithReplacement => "uniform",
            SelectionScheme::UniformWithoutReplacement => "uniform_without_replacement",
            SelectionScheme::DegreeWeighted(_) => "degree_weighted",
            SelectionScheme::ProbabilityProportional => "probability_proportional",
        }
    }
}

/// Who moves after an accepted interaction, and by how much.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateMode {
    /// Only `i` moves, `μ^h = N·h`.
    #[default]
    SingleUpdates,
    /// `i` and `j` move symmetrically, `μ^h = N·h/2`.
    BothUpdate,
    /// Only `i` moves, pairs drawn without replacement, `μ^h = (N-1)·h`.
    SingleWithoutReplacement,
}

/// Full configuration of one agent-based model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n_agents: usize,
    /// Timestep `h`.
    pub h: f64,
    /// Final time `T`.
    pub horizon: f64,
    pub interaction: Interaction,
    pub selection: SelectionScheme,
    pub update_mode: UpdateMode,
    pub noise: NoiseFamily,
    /// With probability-proportional selection, additionally accept the
    /// chosen pair with probability `p_ij`.
    pub double_weighting: bool,
}

impl ModelSpec {
    /// Uniform selection with replacement, single updates, no extra noise.
    pub fn new(n_agents: usize, h: f64, horizon: f64, kernel: InteractionKernel) -> Self {
        ModelSpec {
            n_agents,
            h,
            horizon,
            interaction: Interaction::new(kernel),
            selection: SelectionScheme::default(),
            update_mode: UpdateMode::default(),
            noise: NoiseFamily::none(),
            double_weighting: false,
        }
    }

    pub fn with_selection(mut self, selection: SelectionScheme) -> Self {
        if selection == SelectionScheme::UniformWithoutReplacement {
            self.update_mode = UpdateMode::SingleWithoutReplacement;
        }
        self.selection = selection;
        self
    }

    pub fn with_update_mode(mut self, mode: UpdateMode) -> Self {
        self.update_mode = mode;
        self
    }

    pub fn with_noise(mut self, noise: NoiseFamily) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_mask(mut self, mask: Network) -> Self {
        self.interaction.mask = Some(mask);
        self
    }

    pub fn with_double_weighting(mut self, on: bool) -> Self {
        self.double_weighting = on;
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn kernel(&self) -> &InteractionKernel {
        &self.interaction.kernel
    }

    /// `μ^h`, the fraction of the gap covered by an accepted update.
    pub fn update_distance(&self) -> f64 {
        let n = self.n_agents as f64;
        match self.update_mode {
            UpdateMode::SingleUpdates => n * self.h,
            UpdateMode::BothUpdate => n * self.h / 2.0,
            UpdateMode::SingleWithoutReplacement => (n - 1.0) * self.h,
        }
    }

    /// Number of steps needed to reach the horizon, `⌈T/h⌉`.
    pub fn n_steps(&self) -> u64 {
        (self.horizon / self.h - STEP_SLACK).ceil().max(0.0) as u64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_agents;
        if n == 0 {
            return Err(Error::invalid(
                "n_agents",
                "population must have at least one agent",
            ));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid(
                "h",
                format!("timestep must be positive (got {})", self.h),
            ));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::invalid(
                "horizon",
                format!("horizon must be positive (got {})", self.horizon),
            ));
        }
        self.interaction.kernel.validate()?;
        if let Some(mask) = &self.interaction.mask {
            if mask.len() != n {
                return Err(Error::invalid(
                    "network",
                    format!("interaction mask has {} nodes for {n} agents", mask.len()),
                ));
            }
        }
        self.noise.check_assumptions(n)?;
        match &self.selection {
            SelectionScheme::DegreeWeighted(net) if net.len() != n => {
                return Err(Error::invalid(
                    "network",
                    format!("selection network has {} nodes for {n} agents", net.len()),
                ));
            }
            SelectionScheme::UniformWithoutReplacement if n < 2 => {
                return Err(Error::invalid(
                    "n_agents",
                    "selection without replacement needs at least two agents",
                ));
            }
            _ => {}
        }
        let without = self.selection == SelectionScheme::UniformWithoutReplacement;
        let without_mode = self.update_mode == UpdateMode::SingleWithoutReplacement;
        if without != without_mode {
            return Err(Error::invalid(
                "update_mode",
                "uniform selection without replacement goes with the single-without-replacement update mode and vice versa",
            ));
        }
        if self.update_mode == UpdateMode::BothUpdate && !self.interaction.is_symmetric() {
            return Err(Error::invalid(
                "update_mode",
                "updating both agents requires a symmetric interaction",
            ));
        }
        if self.double_weighting && self.selection != SelectionScheme::ProbabilityProportional {
            return Err(Error::invalid(
                "double_weighting",
                "double weighting only applies to probability-proportional selection",
            ));
        }
        Ok(())
    }

    fn warn_if_coarse(&self) {
        if self.update_distance() > 1.0 {
            log::warn!(
                "update distance {} exceeds 1 (h = {} > 1/N); opinions may leave the convex hull",
                self.update_distance(),
                self.h
            );
        }
    }
}

/// Current time and opinions.
#[derive(Debug, Clone, PartialEq)]
pub struct OpinionState {
    pub t: f64,
    pub x: Vec<f64>,
}

impl OpinionState {
    pub fn new(x: Vec<f64>) -> Self {
        OpinionState { t: 0.0, x }
    }

    /// Advances one step in place.
    pub fn step<R: Rng + ?Sized>(&mut self, spec: &ModelSpec, rng: &mut R) -> Result<Transition> {
        let pair = select_pair(&spec.selection, &self.x, &spec.interaction, rng)?;
        let tr = transition_for_pair(spec, &self.x, pair, rng);
        self.apply(&tr, spec.h)?;
        Ok(tr)
    }

    pub fn apply(&mut self, tr: &Transition, h: f64) -> Result<()> {
        self.t += h;
        for &(agent, delta) in tr.moves() {
            self.x[agent] += delta;
            if !self.x[agent].is_finite() {
                return Err(Error::NonFinite { agent, t: self.t });
            }
        }
        Ok(())
    }
}

/// A selected pair and whether the interaction is certain to happen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub always_interact: bool,
}

/// Opinion changes produced by one step: at most two agents move.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Transition {
    moves: [(usize, f64); 2],
    len: usize,
}

impl Transition {
    pub fn none() -> Self {
        Transition::default()
    }

    pub fn single(agent: usize, delta: f64) -> Self {
        Transition {
            moves: [(agent, delta), (0, 0.0)],
            len: 1,
        }
    }

    /// Two moves; merged into one when both concern the same agent.
    pub fn pair(a: (usize, f64), b: (usize, f64)) -> Self {
        if a.0 == b.0 {
            Transition::single(a.0, a.1 + b.1)
        } else {
            Transition {
                moves: [a, b],
                len: 2,
            }
        }
    }

    pub fn moves(&self) -> &[(usize, f64)] {
        &self.moves[..self.len]
    }

    /// Change of agent `k`'s opinion.
    pub fn delta(&self, k: usize) -> f64 {
        self.moves().iter().filter(|m| m.0 == k).map(|m| m.1).sum()
    }
}

/// Draws `(i, j)` according to `scheme`.
pub fn select_pair<R: Rng + ?Sized>(
    scheme: &SelectionScheme,
    x: &[f64],
    interaction: &Interaction,
    rng: &mut R,
) -> Result<Pair> {
    let n = x.len();
    if n == 0 {
        return Err(Error::invalid(
            "n_agents",
            "cannot select from an empty population",
        ));
    }
    let i = rng.random_range(0..n);
    let pair = |j, always_interact| Pair {
        i,
        j,
        always_interact,
    };
    Ok(match scheme {
        SelectionScheme::UniformWithReplacement => pair(rng.random_range(0..n), false),
        SelectionScheme::UniformWithoutReplacement => {
            if n < 2 {
                return Err(Error::invalid(
                    "n_agents",
                    "selection without replacement needs at least two agents",
                ));
            }
            let j = rng.random_range(0..n - 1);
            pair(if j >= i { j + 1 } else { j }, false)
        }
        SelectionScheme::DegreeWeighted(net) => {
            let u = rng.random::<f64>() * net.degree(i);
            pair(weighted_index(net.row(i).iter().copied(), u), false)
        }
        SelectionScheme::ProbabilityProportional => {
            let total: f64 = (0..n).map(|l| interaction.p(x, i, l)).sum();
            if !(total > 0.0) {
                return Err(Error::ZeroInteractionMass { agent: i });
            }
            let u = rng.random::<f64>() * total;
            pair(
                weighted_index((0..n).map(|l| interaction.p(x, i, l)), u),
                true,
            )
        }
    })
}

/// Index of the first cumulative weight exceeding `u`; falls back to the
/// last positive weight when rounding leaves `u` past the total.
fn weighted_index(weights: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (idx, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = idx;
            if u < acc {
                return idx;
            }
        }
    }
    last_positive
}

/// The opinion change for a given pair; the remaining randomness (acceptance
/// and noise draws) comes from `rng`.
pub fn transition_for_pair<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x: &[f64],
    pair: Pair,
    rng: &mut R,
) -> Transition {
    let Pair {
        i,
        j,
        always_interact,
    } = pair;
    let certain = always_interact && !spec.double_weighting;
    let mu = spec.update_distance();
    let h = spec.h;
    let gap = x[j] - x[i];
    let noise = &spec.noise;
    let accepted = |p: f64, rng: &mut R| certain || rng.random::<f64>() < p;

    // Interaction part of i's move, plus an independent additive term for
    // each mover (external and adaptation noise).
    let (shift, extra_i, extra_j) = match noise.kind() {
        NoiseKind::None => {
            let moved = accepted(spec.interaction.p(x, i, j), rng);
            (if moved { mu * gap } else { 0.0 }, 0.0, 0.0)
        }
        NoiseKind::Ambiguity => {
            let target = x[j] + noise.draw(h, rng);
            let moved = accepted(spec.interaction.p_toward(x[i], target, i, j), rng);
            (if moved { mu * (target - x[i]) } else { 0.0 }, 0.0, 0.0)
        }
        NoiseKind::External => {
            let xi_i = noise.draw(h, rng);
            let moved = accepted(spec.interaction.p(x, i, j), rng);
            let xi_j = if spec.update_mode == UpdateMode::BothUpdate {
                noise.draw(h, rng)
            } else {
                0.0
            };
            (if moved { mu * gap } else { 0.0 }, xi_i, xi_j)
        }
        NoiseKind::Adaptation => {
            if accepted(spec.interaction.p(x, i, j), rng) {
                let xi_i = noise.draw(h, rng);
                let xi_j = if spec.update_mode == UpdateMode::BothUpdate {
                    noise.draw(h, rng)
                } else {
                    0.0
                };
                (mu * gap, xi_i, xi_j)
            } else {
                (0.0, 0.0, 0.0)
            }
        }
        NoiseKind::RandomUpdateDistance => {
            if accepted(spec.interaction.p(x, i, j), rng) {
                let nu = noise.draw(h, rng);
                // The random distance replaces μ^h; in both-update mode it is halved
                // like μ^h so the drift is unchanged.
                let scale = if spec.update_mode == UpdateMode::BothUpdate {
                    0.5
                } else {
                    1.0
                };
                (scale * nu * gap, 0.0, 0.0)
            } else {
                (0.0, 0.0, 0.0)
            }
        }
    };

    match spec.update_mode {
        UpdateMode::BothUpdate => Transition::pair((i, shift + extra_i), (j, -shift + extra_j)),
        _ => Transition::single(i, shift + extra_i),
    }
}

/// One full step from `state`, returning the new state.
pub fn abm_step<R: Rng + ?Sized>(
    state: &OpinionState,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<OpinionState> {
    let mut next = state.clone();
    next.step(spec, rng)?;
    Ok(next)
}

/// Runs the model to its horizon and records the piecewise-constant state
/// at each sample time (the state after `⌊t/h⌋` steps).
pub fn run_abm<R: Rng + ?Sized>(
    spec: &ModelSpec,
    x0: &[f64],
    sample_times: &[f64],
    rng: &mut R,
) -> Result<Trajectory> {
    spec.validate()?;
    check_initial(spec, x0)?;
    check_sorted(sample_times)?;
    if let Some(&t) = sample_times
        .iter()
        .find(|&&t| t < 0.0 || t > spec.horizon * (1.0 + 1e-12))
    {
        return Err(Error::invalid(
            "sample_times",
            format!("sample time {t} is outside [0, {}]", spec.horizon),
        ));
    }
    spec.warn_if_coarse();
    let n_steps = spec.n_steps();
    let targets: Vec<u64> = sample_times
        .iter()
        .map(|&t| ((t / spec.h + STEP_SLACK).floor() as u64).min(n_steps))
        .collect();

    let mut state = OpinionState::new(x0.to_vec());
    let mut traj = Trajectory::with_capacity(sample_times.len(), spec.n_agents);
    let mut next = 0;
    for step in 0..=n_steps {
        while next < targets.len() && targets[next] == step {
            traj.push_row(sample_times[next], &state.x);
            next += 1;
        }
        if step == n_steps || next == targets.len() {
            break;
        }
        state.step(spec, rng)?;
    }
    Ok(traj)
}

/// `n_runs` independent realisations; run `r` uses stream `(base_seed, r)`.
pub fn run_abm_ensemble(
    spec: &ModelSpec,
    x0: &[f64],
    sample_times: &[f64],
    base_seed: u64,
    runs: std::ops::Range<u64>,
) -> Result<Vec<Trajectory>> {
    runs.into_par_iter()
        .map(|r| run_abm(spec, x0, sample_times, &mut rng::stream(base_seed, r)))
        .collect()
}

pub(crate) fn check_initial(spec: &ModelSpec, x0: &[f64]) -> Result<()> {
    if x0.len() != spec.n_agents {
        return Err(Error::invalid(
            "x0",
            format!(
                "initial state has {} entries for {} agents",
                x0.len(),
                spec.n_agents
            ),
        ));
    }
    if let Some(agent) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { agent, t: 0.0 });
    }
    Ok(())
}
