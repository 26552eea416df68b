//! One-step coefficients of the agent-based Markov chain.
//!
//! For a state `x` and timestep `h` the chain's jump `Δ = X^h_{t+h} - x` gives
//!
//! ```text
//! b^h_i  = E[Δ_i] / h
//! a^h_ij = E[Δ_i Δ_j] / h
//! γ^h_4  = Σ_i E[|Δ_i|^4] / h
//! ```
//!
//! Convergence to the limiting equation needs `b^h → b`, `a^h → a` and
//! `γ^h_4 → 0`. Noise-free models have finitely many outcomes and are
//! summed exactly; noisy ones are estimated by Monte Carlo.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::abm::{
    select_pair, transition_for_pair, ModelSpec, SelectionScheme, Transition, UpdateMode,
};
use crate::dem::build_limit;
use crate::error::{Error, Result};
use crate::noise::NoiseKind;
use crate::rng;
use crate::trajectory::format_float;

/// Minimum number of Monte Carlo samples.
pub const MIN_MC_SAMPLES: u64 = 10_000;

const MC_CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    ExactEnumeration,
    MonteCarlo {
        samples: u64,
        b_std_error: Vec<f64>,
        /// Row-major `N × N`.
        a_std_error: Vec<f64>,
        gamma4_std_error: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientReport {
    pub x: Vec<f64>,
    pub h: f64,
    pub b_h: Vec<f64>,
    /// Row-major `N × N`.
    pub a_h: Vec<f64>,
    pub gamma4: f64,
    /// `b(x)` of the limiting equation, when one exists.
    pub analytic_b: Option<Vec<f64>>,
    /// `σ_i(x)²` of the limiting equation, when one exists.
    pub analytic_a_diag: Option<Vec<f64>>,
    pub method: Method,
}

impl CoefficientReport {
    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a_h[i * self.n() + j]
    }

    pub fn a_h_diag(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.a(i, i)).collect()
    }

    pub fn a_h_offdiag_max(&self) -> f64 {
        let n = self.n();
        (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| self.a(i, j).abs())
            .fold(0.0, f64::max)
    }

    /// `sup_i |b^h_i - b_i|`.
    pub fn b_deviation(&self) -> Option<f64> {
        let b = self.analytic_b.as_ref()?;
        Some(
            self.b_h
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max),
        )
    }

    /// `sup_ij |a^h_ij - a_ij|` with the limiting `a` diagonal.
    pub fn a_deviation(&self) -> Option<f64> {
        let diag = self.analytic_a_diag.as_ref()?;
        let n = self.n();
        let mut worst: f64 = 0.0;
        for (i, &d) in diag.iter().enumerate().take(n) {
            for j in 0..n {
                let target = if i == j { d } else { 0.0 };
                worst = worst.max((self.a(i, j) - target).abs());
            }
        }
        Some(worst)
    }
}

fn attach_limit(spec: &ModelSpec, x: &[f64]) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let Ok(model) = build_limit(spec) else {
        return (None, None);
    };
    match (model.drift(x), model.diffusion(x)) {
        (Ok(b), Ok(s)) => (Some(b), Some(s.iter().map(|v| v * v).collect())),
        _ => (None, None),
    }
}

fn check_state(spec: &ModelSpec, x: &[f64]) -> Result<()> {
    spec.validate()?;
    crate::abm::check_initial(spec, x)
}

/// Calls `f(probability, agent i, agent j, shift)` for every outcome of one
/// noise-free step that moves someone. Agent `i` moves by `shift`; in
/// both-update mode agent `j` moves by `-shift`.
fn for_each_outcome(
    spec: &ModelSpec,
    x: &[f64],
    mut f: impl FnMut(f64, usize, usize, f64),
) -> Result<()> {
    let n = spec.n_agents;
    let nf = n as f64;
    let mu = spec.update_distance();
    let p = |i, j| spec.interaction.p(x, i, j);
    for i in 0..n {
        let total: f64 = match spec.selection {
            SelectionScheme::ProbabilityProportional => (0..n).map(|l| p(i, l)).sum(),
            _ => 0.0,
        };
        if spec.selection == SelectionScheme::ProbabilityProportional && !(total > 0.0) {
            return Err(Error::ZeroInteractionMass { agent: i });
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let prob = match &spec.selection {
                SelectionScheme::UniformWithReplacement => p(i, j) / (nf * nf),
                SelectionScheme::UniformWithoutReplacement => p(i, j) / (nf * (nf - 1.0)),
                SelectionScheme::DegreeWeighted(net) => {
                    net.weight(i, j) / net.degree(i) * p(i, j) / nf
                }
                SelectionScheme::ProbabilityProportional => {
                    let accept = if spec.double_weighting { p(i, j) } else { 1.0 };
                    p(i, j) / total * accept / nf
                }
            };
            if prob > 0.0 {
                f(prob, i, j, mu * (x[j] - x[i]));
            }
        }
    }
    Ok(())
}

/// Exact coefficients by summing over every selectable pair.
pub fn exact_coefficients(x: &[f64], spec: &ModelSpec) -> Result<CoefficientReport> {
    check_state(spec, x)?;
    if spec.noise.kind() != NoiseKind::None {
        return Err(Error::invalid(
            "noise",
            format!(
                "exact enumeration needs a noise-free model ({} noise has a continuum of outcomes)",
                spec.noise.kind().name()
            ),
        ));
    }
    let n = spec.n_agents;
    let h = spec.h;
    let both = spec.update_mode == UpdateMode::BothUpdate;
    let mut b = vec![0.0; n];
    let mut a = vec![0.0; n * n];
    let mut gamma4 = 0.0;
    for_each_outcome(spec, x, |prob, i, j, shift| {
        let w = prob / h;
        let s2 = shift * shift;
        b[i] += w * shift;
        a[i * n + i] += w * s2;
        gamma4 += w * s2 * s2;
        if both {
            b[j] -= w * shift;
            a[j * n + j] += w * s2;
            a[i * n + j] -= w * s2;
            a[j * n + i] -= w * s2;
            gamma4 += w * s2 * s2;
        }
    })?;
    let (analytic_b, analytic_a_diag) = attach_limit(spec, x);
    Ok(CoefficientReport {
        x: x.to_vec(),
        h,
        b_h: b,
        a_h: a,
        gamma4,
        analytic_b,
        analytic_a_diag,
        method: Method::ExactEnumeration,
    })
}

/// Sums of jumps and their powers over a batch of simulated steps. Only
/// non-zero entries are touched since at most two agents move per step.
#[derive(Debug, Clone)]
struct Moments {
    n: usize,
    count: u64,
    b: Vec<f64>,
    b2: Vec<f64>,
    a: Vec<f64>,
    a2: Vec<f64>,
    g: f64,
    g2: f64,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            n,
            count: 0,
            b: vec![0.0; n],
            b2: vec![0.0; n],
            a: vec![0.0; n * n],
            a2: vec![0.0; n * n],
            g: 0.0,
            g2: 0.0,
        }
    }

    fn record(&mut self, tr: &Transition) {
        self.count += 1;
        let moves = tr.moves();
        let mut g = 0.0;
        for &(k, dk) in moves {
            self.b[k] += dk;
            self.b2[k] += dk * dk;
            g += dk.powi(4);
            for &(l, dl) in moves {
                let v = dk * dl;
                self.a[k * self.n + l] += v;
                self.a2[k * self.n + l] += v * v;
            }
        }
        self.g += g;
        self.g2 += g * g;
    }

    fn merge(mut self, other: &Moments) -> Self {
        self.count += other.count;
        let add = |x: &mut [f64], y: &[f64]| x.iter_mut().zip(y).for_each(|(a, b)| *a += b);
        add(&mut self.b, &other.b);
        add(&mut self.b2, &other.b2);
        add(&mut self.a, &other.a);
        add(&mut self.a2, &other.a2);
        self.g += other.g;
        self.g2 += other.g2;
        self
    }
}

/// Mean of `sum / m` scaled by `1/h`, and its standard error.
fn mean_and_se(sum: f64, sum_sq: f64, m: f64, h: f64) -> (f64, f64) {
    let mean = sum / m;
    let var = ((sum_sq - sum * mean) / (m - 1.0)).max(0.0);
    (mean / h, (var / m).sqrt() / h)
}

/// Monte Carlo estimate from `samples` independent single steps starting at `x`.
///
/// Samples are split into fixed-size chunks with their own streams, so the
/// result depends only on `rng` and not on the thread count.
pub fn mc_coefficients<R: Rng + ?Sized>(
    x: &[f64],
    spec: &ModelSpec,
    samples: u64,
    rng: &mut R,
) -> Result<CoefficientReport> {
    check_state(spec, x)?;
    if samples < MIN_MC_SAMPLES {
        return Err(Error::invalid(
            "samples",
            format!("Monte Carlo needs at least {MIN_MC_SAMPLES} samples (got {samples})"),
        ));
    }
    let n = spec.n_agents;
    let chunk_seed: u64 = rng.random();
    let n_chunks = samples.div_ceil(MC_CHUNK);
    let chunks: Vec<Result<Moments>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(chunk_seed, c);
            let len = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut m = Moments::new(n);
            for _ in 0..len {
                let pair = select_pair(&spec.selection, x, &spec.interaction, &mut rng)?;
                m.record(&transition_for_pair(spec, x, pair, &mut rng));
            }
            Ok(m)
        })
        .collect();
    let total = pairwise_merge(chunks.into_iter().collect::<Result<Vec<_>>>()?);

    let m = total.count as f64;
    let h = spec.h;
    let (b_h, b_se): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|i| mean_and_se(total.b[i], total.b2[i], m, h))
        .unzip();
    let (a_h, a_se): (Vec<f64>, Vec<f64>) = (0..n * n)
        .map(|k| mean_and_se(total.a[k], total.a2[k], m, h))
        .unzip();
    let (gamma4, g_se) = mean_and_se(total.g, total.g2, m, h);
    let (analytic_b, analytic_a_diag) = attach_limit(spec, x);
    Ok(CoefficientReport {
        x: x.to_vec(),
        h,
        b_h,
        a_h,
        gamma4,
        analytic_b,
        analytic_a_diag,
        method: Method::MonteCarlo {
            samples,
            b_std_error: b_se,
            a_std_error: a_se,
            gamma4_std_error: g_se,
        },
    })
}

/// Combines chunk sums as a balanced binary tree in index order.
fn pairwise_merge(mut parts: Vec<Moments>) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(&b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// One line of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub h: f64,
    /// `sup |b^h - b|`.
    pub b_deviation: f64,
    /// `sup |a^h - a|`.
    pub a_deviation: f64,
    pub gamma4: f64,
    pub exact: bool,
}

/// Coefficient deviations from the limiting equation at `x` over a decreasing
/// grid of timesteps. Noise-free models are enumerated exactly.
pub fn convergence_sweep<R: Rng + ?Sized>(
    x: &[f64],
    spec: &ModelSpec,
    h_values: &[f64],
    samples: u64,
    rng: &mut R,
) -> Result<Vec<SweepRow>> {
    if h_values.is_empty() {
        return Err(Error::invalid("h_values", "need at least one timestep"));
    }
    if h_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid(
            "h_values",
            "timesteps must be strictly decreasing",
        ));
    }
    build_limit(spec)?;
    h_values
        .iter()
        .map(|&h| {
            let spec = spec.clone().with_h(h);
            let exact = spec.noise.kind() == NoiseKind::None;
            let report = if exact {
                exact_coefficients(x, &spec)?
            } else {
                mc_coefficients(x, &spec, samples, rng)?
            };
            Ok(SweepRow {
                h,
                b_deviation: report.b_deviation().expect("limit exists"),
                a_deviation: report.a_deviation().expect("limit exists"),
                gamma4: report.gamma4,
                exact,
            })
        })
        .collect()
}

/// States at which the conditions are spot-checked: `n_random` uniform draws
/// from `[-1, 1]^N`, consensus at 0, and two tight clusters at ±0.5.
pub fn probe_states(n: usize, n_random: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
    let mut rng = rng::stream(seed, 0);
    let mut states: Vec<(String, Vec<f64>)> = (0..n_random)
        .map(|k| {
            (
                format!("uniform_{k}"),
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        })
        .collect();
    states.push(("consensus".into(), vec![0.0; n]));
    states.push(("two_cluster".into(), two_cluster_state(n, 0.05, &mut rng)));
    states
}

/// Half the agents near -0.5 and half near 0.5, each within `spread` of its centre.
pub fn two_cluster_state<R: Rng + ?Sized>(n: usize, spread: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let centre = if i < n / 2 { -0.5 } else { 0.5 };
            centre + spread * rng.random_range(-1.0..1.0)
        })
        .collect()
}

/// Tolerances for the pass/fail summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Allowed `sup |b^h - b|` at the smallest `h`.
    pub drift: f64,
    /// Allowed `sup |a^h - a|` at the smallest `h`.
    pub diffusion: f64,
    /// Allowed `γ^h_4` at the smallest `h`.
    pub gamma4: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            drift: 1e-2,
            diffusion: 1e-2,
            gamma4: 1e-2,
        }
    }
}

/// Pass/fail of each condition at the smallest `h` of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub drift: bool,
    pub diffusion: bool,
    pub gamma4: bool,
}

impl Verdict {
    pub fn all(&self) -> bool {
        self.drift && self.diffusion && self.gamma4
    }
}

pub fn judge(rows: &[SweepRow], tol: &Tolerances) -> Option<Verdict> {
    let last = rows.last()?;
    Some(Verdict {
        drift: last.b_deviation <= tol.drift,
        diffusion: last.a_deviation <= tol.diffusion,
        gamma4: last.gamma4 <= tol.gamma4,
    })
}

/// CSV with header `state,h,b_deviation,a_deviation,gamma4,method`.
pub fn write_sweep_csv<'a, W: Write>(
    mut out: W,
    sweeps: impl IntoIterator<Item = (&'a str, &'a [SweepRow])>,
) -> Result<()> {
    writeln!(out, "state,h,b_deviation,a_deviation,gamma4,method")?;
    for (name, rows) in sweeps {
        for r in rows {
            writeln!(
                out,
                "{name},{},{},{},{},{}",
                format_float(r.h),
                format_float(r.b_deviation),
                format_float(r.a_deviation),
                format_float(r.gamma4),
                if r.exact { "exact" } else { "monte_carlo" }
            )?;
        }
    }
    Ok(())
}
