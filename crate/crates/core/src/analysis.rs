//! Trajectory comparison and ensemble statistics.

use std::io::Write;

use rayon::prelude::*;

use crate::abm::{run_abm, ModelSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::trajectory::{format_float, write_table, Trajectory};

/// `Error(t) = Σ_i |X_i(t) - Y_i(t)|` at each shared sample time.
pub fn error_timeseries(x: &Trajectory, y: &Trajectory) -> Result<Vec<f64>> {
    x.ensure_same_grid(y)?;
    Ok(x.rows()
        .zip(y.rows())
        .map(|((_, a), (_, b))| a.iter().zip(b).map(|(u, v)| (u - v).abs()).sum())
        .collect())
}

/// What the Frobenius norm of a trajectory difference is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorNorm {
    /// The simulated duration `T`.
    #[default]
    Duration,
    /// The number of sample times.
    Samples,
}

impl ErrorNorm {
    pub fn name(self) -> &'static str {
        match self {
            ErrorNorm::Duration => "duration",
            ErrorNorm::Samples => "samples",
        }
    }
}

/// `‖X - Y‖_F` divided by `duration` or by the number of samples.
pub fn sweep_error(
    abm: &Trajectory,
    dem: &Trajectory,
    duration: f64,
    norm: ErrorNorm,
) -> Result<f64> {
    abm.ensure_same_grid(dem)?;
    let frob = abm
        .values()
        .iter()
        .zip(dem.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let denom = match norm {
        ErrorNorm::Duration => {
            if !(duration > 0.0) {
                return Err(Error::invalid(
                    "duration",
                    format!("duration must be positive (got {duration})"),
                ));
            }
            duration
        }
        ErrorNorm::Samples => abm.n_times().max(1) as f64,
    };
    Ok(frob / denom)
}

/// Per-time, per-agent mean and unbiased variance across realisations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub mean: Trajectory,
    pub variance: Trajectory,
    pub n_realizations: usize,
}

impl EnsembleStats {
    pub fn times(&self) -> &[f64] {
        self.mean.times()
    }

    /// Variance averaged over agents at each sample time.
    pub fn agent_averaged_variance(&self) -> Vec<f64> {
        let n = self.variance.n_agents().max(1) as f64;
        self.variance
            .rows()
            .map(|(_, row)| row.iter().sum::<f64>() / n)
            .collect()
    }

    /// Standard error of each per-agent mean, `√(var / n)`.
    pub fn standard_error(&self, k: usize) -> Vec<f64> {
        let n = self.n_realizations as f64;
        self.variance
            .row(k)
            .iter()
            .map(|v| (v / n).sqrt())
            .collect()
    }

    /// CSV `t,mean_0,…`.
    pub fn write_mean_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, "mean", self.mean.n_agents(), self.mean.rows())
    }

    /// CSV `t,var_0,…`.
    pub fn write_variance_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, "var", self.variance.n_agents(), self.variance.rows())
    }
}

/// Streaming Welford accumulator for ensemble statistics. Runs are folded
/// in the order they are pushed.
#[derive(Debug, Clone)]
pub struct EnsembleAccumulator {
    times: Vec<f64>,
    n_agents: usize,
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl EnsembleAccumulator {
    pub fn new(first: &Trajectory) -> Self {
        EnsembleAccumulator {
            times: first.times().to_vec(),
            n_agents: first.n_agents(),
            count: 0,
            mean: vec![0.0; first.values().len()],
            m2: vec![0.0; first.values().len()],
        }
    }

    pub fn push(&mut self, run: &Trajectory) -> Result<()> {
        if run.n_agents() != self.n_agents || run.times().len() != self.times.len() {
            return Err(Error::GridMismatch(format!(
                "run has {} agents x {} samples, ensemble has {} x {}",
                run.n_agents(),
                run.n_times(),
                self.n_agents,
                self.times.len()
            )));
        }
        self.count += 1;
        let count = self.count as f64;
        for ((m, s), &v) in self
            .mean
            .iter_mut()
            .zip(self.m2.iter_mut())
            .zip(run.values())
        {
            let delta = v - *m;
            *m += delta / count;
            *s += delta * (v - *m);
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<EnsembleStats> {
        if self.count < 2 {
            return Err(Error::invalid(
                "runs",
                format!(
                    "ensemble statistics need at least 2 runs (got {})",
                    self.count
                ),
            ));
        }
        let denom = (self.count - 1) as f64;
        let variance = self.m2.into_iter().map(|s| (s / denom).max(0.0)).collect();
        Ok(EnsembleStats {
            mean: Trajectory::new(self.times.clone(), self.n_agents, self.mean)?,
            variance: Trajectory::new(self.times, self.n_agents, variance)?,
            n_realizations: self.count,
        })
    }
}

/// Per-time, per-agent mean and unbiased variance of `runs`, folded in order.
pub fn ensemble_stats(runs: &[Trajectory]) -> Result<EnsembleStats> {
    let Some(first) = runs.first() else {
        return Err(Error::invalid(
            "runs",
            "ensemble statistics need at least 2 runs (got 0)",
        ));
    };
    let mut acc = EnsembleAccumulator::new(first);
    for r in runs {
        first.ensure_same_grid(r)?;
        acc.push(r)?;
    }
    acc.finish()
}

/// Runs `run(0..n_runs)` in parallel batches and folds the trajectories into
/// ensemble statistics in run order, so the result does not depend on the
/// thread count and at most one batch is held in memory.
pub fn collect_ensemble<F>(n_runs: u64, run: F) -> Result<EnsembleStats>
where
    F: Fn(u64) -> Result<Trajectory> + Sync,
{
    const BATCH: u64 = 32;
    let mut acc: Option<EnsembleAccumulator> = None;
    let mut start = 0;
    while start < n_runs {
        let end = (start + BATCH).min(n_runs);
        let batch: Vec<Trajectory> = (start..end)
            .into_par_iter()
            .map(&run)
            .collect::<Result<_>>()?;
        for t in &batch {
            acc.get_or_insert_with(|| EnsembleAccumulator::new(t))
                .push(t)?;
        }
        start = end;
    }
    match acc {
        Some(acc) => acc.finish(),
        None => Err(Error::invalid(
            "runs",
            "ensemble statistics need at least 2 runs (got 0)",
        )),
    }
}

/// Sweep errors of `n_runs` ABM realisations against `dem`, sampled on the
/// same grid. Run `r` uses stream `(base_seed, r)`.
pub fn error_distribution(
    spec: &ModelSpec,
    x0: &[f64],
    dem: &Trajectory,
    n_runs: u64,
    base_seed: u64,
    norm: ErrorNorm,
) -> Result<Vec<f64>> {
    if n_runs == 0 {
        return Err(Error::invalid("runs", "need at least one run"));
    }
    (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let abm = run_abm(spec, x0, dem.times(), &mut rng::stream(base_seed, r))?;
            sweep_error(&abm, dem, spec.horizon, norm)
        })
        .collect()
}

/// Mean and quartiles of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Quantiles by linear interpolation between order statistics.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
    };
    Some(Summary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        min: v[0],
        max: v[v.len() - 1],
    })
}

/// CSV `h,run,error`.
pub fn write_errors_csv<W: Write>(mut out: W, rows: &[(f64, Vec<f64>)]) -> Result<()> {
    writeln!(out, "h,run,error")?;
    for (h, errors) in rows {
        for (run, e) in errors.iter().enumerate() {
            writeln!(out, "{},{run},{}", format_float(*h), format_float(*e))?;
        }
    }
    Ok(())
}

/// CSV `t,error`.
pub fn write_series_csv<W: Write>(mut out: W, times: &[f64], values: &[f64]) -> Result<()> {
    writeln!(out, "t,error")?;
    for (t, v) in times.iter().zip(values) {
        writeln!(out, "{},{}", format_float(*t), format_float(*v))?;
    }
    Ok(())
}
