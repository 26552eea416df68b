//! Timestep-indexed noise families `ζ = (ζ^h)_{h>0}`.
//!
//! A family is described by how its law scales with `h`. What survives in the
//! limit is captured by the moment scalings
//!
//! ```text
//! m_k(ζ) = lim_{h→0} E[(ζ^h)^k] / h
//! ```
//!
//! `m_1` feeds the drift and `m_2` the diffusion of the limiting equation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Where the noise enters the update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum NoiseKind {
    #[default]
    None,
    /// Perturbs the partner's communicated opinion: `ω_j = x_j + η`.
    Ambiguity,
    /// Added to the selected agent every step, interaction or not.
    External,
    /// Added to the selected agent only when the interaction happens.
    Adaptation,
    /// Replaces the fixed update distance `μ^h` by a random `ν^h`.
    RandomUpdateDistance,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Ambiguity => "ambiguity",
            NoiseKind::External => "external",
            NoiseKind::Adaptation => "adaptation",
            NoiseKind::RandomUpdateDistance => "random_update_distance",
        }
    }
}

/// Law of `ζ^h` as a function of the timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLaw {
    /// `ζ^h ~ N(mean_per_h · h, var_per_h · h)`.
    GaussianScaled { mean_per_h: f64, var_per_h: f64 },
    /// `ζ^h = value_per_h · h` almost surely.
    Degenerate { value_per_h: f64 },
}

impl NoiseLaw {
    /// Gaussian when `var_per_h > 0`, degenerate otherwise.
    pub fn from_mean_var(mean_per_h: f64, var_per_h: f64) -> Self {
        if var_per_h == 0.0 {
            NoiseLaw::Degenerate {
                value_per_h: mean_per_h,
            }
        } else {
            NoiseLaw::GaussianScaled {
                mean_per_h,
                var_per_h,
            }
        }
    }

    pub fn mean_per_h(&self) -> f64 {
        match *self {
            NoiseLaw::GaussianScaled { mean_per_h, .. } => mean_per_h,
            NoiseLaw::Degenerate { value_per_h } => value_per_h,
        }
    }

    pub fn var_per_h(&self) -> f64 {
        match *self {
            NoiseLaw::GaussianScaled { var_per_h, .. } => var_per_h,
            NoiseLaw::Degenerate { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFamily {
    kind: NoiseKind,
    law: NoiseLaw,
}

impl Default for NoiseFamily {
    fn default() -> Self {
        NoiseFamily::none()
    }
}

impl NoiseFamily {
    pub fn none() -> Self {
        NoiseFamily {
            kind: NoiseKind::None,
            law: NoiseLaw::Degenerate { value_per_h: 0.0 },
        }
    }

    /// Builds a family and checks the moment conditions its kind needs for a
    /// limit to exist with a population of `n_agents`.
    pub fn new(kind: NoiseKind, law: NoiseLaw, n_agents: usize) -> Result<Self> {
        let family = NoiseFamily { kind, law };
        family.check_assumptions(n_agents)?;
        Ok(family)
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn law(&self) -> NoiseLaw {
        self.law
    }

    pub fn check_assumptions(&self, n_agents: usize) -> Result<()> {
        let (mean, var) = (self.law.mean_per_h(), self.law.var_per_h());
        if !mean.is_finite() || !var.is_finite() || var < 0.0 {
            return Err(Error::invalid(
                "noise",
                format!("noise needs finite mean_per_h and var_per_h >= 0 (got {mean}, {var})"),
            ));
        }
        let m = |k| self.analytic_mk(k);
        match self.kind {
            NoiseKind::None => Ok(()),
            // E[η²] = O(h) gives both E|η| → 0 and a uniformly bounded second moment.
            NoiseKind::Ambiguity => match m(2) {
                Some(_) => Ok(()),
                None => Err(Error::invalid(
                    "noise",
                    "ambiguity noise needs E[η²]/h to converge",
                )),
            },
            NoiseKind::External | NoiseKind::Adaptation => {
                if m(1) != Some(0.0) {
                    return Err(Error::invalid(
                        "noise",
                        format!(
                            "{} noise must have m_1 = 0 (got mean_per_h = {mean})",
                            self.kind.name()
                        ),
                    ));
                }
                match m(2) {
                    Some(m2) if m2 > 0.0 && (m(3) != Some(0.0) || m(4) != Some(0.0)) => {
                        Err(Error::invalid(
                            "noise",
                            format!(
                                "{} noise with m_2 > 0 needs m_3 = m_4 = 0",
                                self.kind.name()
                            ),
                        ))
                    }
                    Some(_) => Ok(()),
                    None => Err(Error::invalid(
                        "noise",
                        format!("{} noise needs m_2 to exist", self.kind.name()),
                    )),
                }
            }
            NoiseKind::RandomUpdateDistance => {
                let n = n_agents as f64;
                let m1 = m(1).unwrap_or(f64::NAN);
                if (m1 - n).abs() > 1e-12 * n.max(1.0) {
                    return Err(Error::invalid(
                        "noise",
                        format!("random update distance must have m_1 = N = {n_agents} (got {m1})"),
                    ));
                }
                match m(2) {
                    Some(m2) if m2 > 0.0 && m(4) != Some(0.0) => Err(Error::invalid(
                        "noise",
                        "random update distance with m_2 > 0 needs m_4 = 0",
                    )),
                    Some(_) => Ok(()),
                    None => Err(Error::invalid(
                        "noise",
                        "random update distance needs m_2 to exist",
                    )),
                }
            }
        }
    }

    /// One draw of `ζ^h`.
    pub fn sample<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::invalid(
                "h",
                format!("timestep must be positive (got {h})"),
            ));
        }
        Ok(self.draw(h, rng))
    }

    #[inline]
    pub(crate) fn draw<R: Rng + ?Sized>(&self, h: f64, rng: &mut R) -> f64 {
        match self.law {
            NoiseLaw::GaussianScaled {
                mean_per_h,
                var_per_h,
            } => {
                let z: f64 = rng.sample(StandardNormal);
                mean_per_h * h + (var_per_h * h).sqrt() * z
            }
            NoiseLaw::Degenerate { value_per_h } => value_per_h * h,
        }
    }

    /// Exact `E[(ζ^h)^k]` at a given `h`.
    pub fn raw_moment(&self, h: f64, k: u32) -> f64 {
        let mean = self.law.mean_per_h() * h;
        let var = self.law.var_per_h() * h;
        // E[X^k] = mean·E[X^{k-1}] + (k-1)·var·E[X^{k-2}] for a Gaussian.
        let (mut prev, mut cur) = (1.0, mean);
        if k == 0 {
            return 1.0;
        }
        for j in 2..=k {
            let next = mean * cur + (j - 1) as f64 * var * prev;
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `m_k(ζ)`, or `None` when the limit diverges.
    ///
    /// With mean `μ₀h` and variance `sh`, the `h`-power of each term of the
    /// Gaussian raw moment is at least `k/2`, so only `k = 1` (giving `μ₀`)
    /// and `k = 2` (giving `s`) have non-zero limits.
    pub fn analytic_mk(&self, k: u32) -> Option<f64> {
        match k {
            0 => None,
            1 => Some(self.law.mean_per_h()),
            2 => Some(self.law.var_per_h()),
            _ => Some(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub h: f64,
    /// Sample mean of `(ζ^h)^k / h`.
    pub estimate: f64,
    pub std_error: f64,
}

pub const MIN_MOMENT_SAMPLES: usize = 1_000;

/// Monte Carlo estimate of `E[(ζ^h)^k]/h` at each `h`.
pub fn empirical_mk<R: Rng + ?Sized>(
    family: &NoiseFamily,
    k: u32,
    h_values: &[f64],
    samples_per_h: usize,
    rng: &mut R,
) -> Result<Vec<MomentEstimate>> {
    if h_values.is_empty() {
        return Err(Error::invalid("h_values", "need at least one timestep"));
    }
    if samples_per_h < MIN_MOMENT_SAMPLES {
        return Err(Error::invalid(
            "samples_per_h",
            format!("need at least {MIN_MOMENT_SAMPLES} samples (got {samples_per_h})"),
        ));
    }
    h_values
        .iter()
        .map(|&h| {
            if !(h > 0.0) {
                return Err(Error::invalid(
                    "h",
                    format!("timestep must be positive (got {h})"),
                ));
            }
            // Welford: exact zero variance for degenerate laws.
            let (mut mean, mut m2) = (0.0, 0.0);
            for count in 1..=samples_per_h {
                let y = family.draw(h, rng).powi(k as i32) / h;
                let delta = y - mean;
                mean += delta / count as f64;
                m2 += delta * (y - mean);
            }
            let m = samples_per_h as f64;
            Ok(MomentEstimate {
                h,
                estimate: mean,
                std_error: (m2 / (m - 1.0) / m).sqrt(),
            })
        })
        .collect()
}
