use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Opinions of `N` agents recorded at a sorted list of sample times.
///
/// Values are stored row-major: row `k` holds all agents at `times[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    n_agents: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, n_agents: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != times.len() * n_agents {
            return Err(Error::invalid(
                "trajectory",
                format!(
                    "{} values do not fill {} times x {} agents",
                    values.len(),
                    times.len(),
                    n_agents
                ),
            ));
        }
        check_sorted(&times)?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                agent: pos % n_agents.max(1),
                t: times[pos / n_agents.max(1)],
            });
        }
        Ok(Trajectory {
            times,
            n_agents,
            values,
        })
    }

    pub(crate) fn with_capacity(n_times: usize, n_agents: usize) -> Self {
        Trajectory {
            times: Vec::with_capacity(n_times),
            n_agents,
            values: Vec::with_capacity(n_times * n_agents),
        }
    }

    pub(crate) fn push_row(&mut self, t: f64, x: &[f64]) {
        debug_assert_eq!(x.len(), self.n_agents);
        self.times.push(t);
        self.values.extend_from_slice(x);
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_agents..(k + 1) * self.n_agents]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.times
            .iter()
            .copied()
            .zip(self.values.chunks_exact(self.n_agents.max(1)))
    }

    pub fn last_row(&self) -> Option<&[f64]> {
        self.n_times().checked_sub(1).map(|k| self.row(k))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Checks that `other` is sampled on the same grid with the same population.
    pub fn ensure_same_grid(&self, other: &Trajectory) -> Result<()> {
        if self.n_agents != other.n_agents {
            return Err(Error::GridMismatch(format!(
                "{} agents vs {} agents",
                self.n_agents, other.n_agents
            )));
        }
        if self.times.len() != other.times.len() {
            return Err(Error::GridMismatch(format!(
                "{} sample times vs {}",
                self.times.len(),
                other.times.len()
            )));
        }
        for (k, (a, b)) in self.times.iter().zip(&other.times).enumerate() {
            if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::GridMismatch(format!(
                    "sample {k}: t = {a} vs t = {b}"
                )));
            }
        }
        Ok(())
    }

    /// CSV with header `t,x_0,…,x_{N-1}` and one row per sample time.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_table(out, "x", self.n_agents, self.rows())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
        let n_agents = header.split(',').count().saturating_sub(1);
        if !header.starts_with("t,") && n_agents > 0 {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {row}: `{f}` is not a number")))
            });
            times.push(fields.next().transpose()?.unwrap_or_default());
            let before = values.len();
            for v in fields {
                values.push(v?);
            }
            if values.len() - before != n_agents {
                return Err(Error::Parse(format!(
                    "row {row} has the wrong number of columns"
                )));
            }
        }
        Trajectory::new(times, n_agents, values)
    }
}

/// Formats a number with 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `t,<prefix>_0,…` followed by one line per row.
pub fn write_table<'a, W: Write>(
    mut out: W,
    prefix: &str,
    n_columns: usize,
    rows: impl Iterator<Item = (f64, &'a [f64])>,
) -> Result<()> {
    let mut line = String::from("t");
    for i in 0..n_columns {
        line.push_str(&format!(",{prefix}_{i}"));
    }
    writeln!(out, "{line}")?;
    for (t, row) in rows {
        line.clear();
        line.push_str(&format_float(t));
        for v in row {
            line.push(',');
            line.push_str(&format_float(*v));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub(crate) fn check_sorted(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::invalid(
            "sample_times",
            format!("non-finite sample time {t}"),
        ));
    }
    if let Some(w) = times.windows(2).find(|w| w[1] < w[0]) {
        return Err(Error::invalid(
            "sample_times",
            format!(
                "sample times must be sorted ({} comes after {})",
                w[1], w[0]
            ),
        ));
    }
    Ok(())
}

/// `0, dt, 2dt, …, T` with `T/dt` rounded to the nearest whole step.
pub fn time_grid(horizon: f64, dt: f64) -> Vec<f64> {
    let steps = (horizon / dt).round() as usize;
    (0..=steps).map(|k| k as f64 * dt).collect()
}
