//! Experiment orchestration and file emission.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use opinion_limits::abm::run_abm;
use opinion_limits::analysis::{
    collect_ensemble, error_distribution, error_timeseries, summarize, write_errors_csv,
    write_series_csv,
};
use opinion_limits::dem::{build_limit, integrate, LimitModel};
use opinion_limits::limitcheck::{
    convergence_sweep, judge, probe_states, write_sweep_csv, SweepRow, Tolerances,
};
use opinion_limits::rng::{derive_seed, stream};
use opinion_limits::{time_grid, EnsembleStats, Trajectory};

use crate::config::{Experiment, Plan};
use crate::CliError;

/// Files written by a run and the text printed to the terminal.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Emitter {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Emitter {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| {
            CliError::Runtime(format!(
                "cannot create output directory {}: {e}",
                dir.display()
            ))
        })?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> opinion_limits::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", path.display())))?;
        let mut out = BufWriter::new(file);
        body(&mut out)?;
        out.flush().map_err(opinion_limits::Error::from)?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs the planned experiment, writing its CSVs and `manifest.json` into `out_dir`.
pub fn run_experiment(plan: &Plan, out_dir: &Path) -> Result<Outcome, CliError> {
    let mut emit = Emitter::new(out_dir)?;
    let summary = match &plan.experiment {
        Experiment::Compare => compare(plan, &mut emit)?,
        Experiment::SweepH { h_list, runs_per_h } => sweep_h(plan, h_list, *runs_per_h, &mut emit)?,
        Experiment::Ensemble { n_runs } => ensemble(plan, *n_runs, &mut emit)?,
        Experiment::Limitcheck {
            h_list,
            samples,
            n_states,
            tolerances,
        } => limitcheck(plan, h_list, *samples, *n_states, tolerances, &mut emit)?,
    };
    let manifest = serde_json::to_string_pretty(&plan.manifest)
        .map_err(|e| CliError::Runtime(format!("cannot serialise manifest: {e}")))?;
    emit.write("manifest.json", |out| Ok(writeln!(out, "{manifest}")?))?;
    Ok(Outcome {
        files: emit.files,
        summary,
    })
}

fn limit(plan: &Plan) -> Result<LimitModel, CliError> {
    build_limit(&plan.spec).map_err(|e| CliError::Config(e.to_string()))
}

fn grid(plan: &Plan) -> Vec<f64> {
    time_grid(plan.spec.horizon, plan.integrator.dt)
}

fn solve(
    plan: &Plan,
    model: &LimitModel,
    times: &[f64],
    run: u64,
) -> opinion_limits::Result<Trajectory> {
    integrate(
        model,
        &plan.x0,
        &plan.integrator,
        plan.spec.horizon,
        times,
        &mut stream(plan.seeds.dem, run),
    )
}

fn compare(plan: &Plan, emit: &mut Emitter) -> Result<String, CliError> {
    let model = limit(plan)?;
    let times = grid(plan);
    let abm = run_abm(&plan.spec, &plan.x0, &times, &mut stream(plan.seeds.abm, 0))?;
    let dem = solve(plan, &model, &times, 0)?;
    let error = error_timeseries(&abm, &dem)?;
    emit.write("abm.csv", |out| abm.write_csv(out))?;
    emit.write("dem.csv", |out| dem.write_csv(out))?;
    emit.write("error.csv", |out| write_series_csv(out, &times, &error))?;
    let (k, max) = argmax(&error);
    Ok(format!("max Error(t) = {max:.6e} at t = {}", times[k]))
}

fn sweep_h(
    plan: &Plan,
    h_list: &[f64],
    runs_per_h: u64,
    emit: &mut Emitter,
) -> Result<String, CliError> {
    let model = limit(plan)?;
    let times = grid(plan);
    let dem = solve(plan, &model, &times, 0)?;
    let mut rows = Vec::with_capacity(h_list.len());
    let mut summary = format!(
        "sweep error ({} runs per h, {} norm)\n",
        runs_per_h,
        plan.error_norm.name()
    );
    summary.push_str("h            median       q1           q3           mean");
    for (k, &h) in h_list.iter().enumerate() {
        let spec = plan.spec.clone().with_h(h);
        let seed = derive_seed(plan.seeds.abm, k as u64);
        let errors = error_distribution(&spec, &plan.x0, &dem, runs_per_h, seed, plan.error_norm)?;
        let s = summarize(&errors)
            .ok_or_else(|| CliError::Runtime(format!("sweep errors at h = {h} are NaN")))?;
        let _ = write!(
            summary,
            "\n{h:<12.3e} {:<12.5e} {:<12.5e} {:<12.5e} {:.5e}",
            s.median, s.q1, s.q3, s.mean
        );
        rows.push((h, errors));
    }
    emit.write("errors.csv", |out| write_errors_csv(out, &rows))?;
    Ok(summary)
}

fn ensemble(plan: &Plan, n_runs: u64, emit: &mut Emitter) -> Result<String, CliError> {
    let model = limit(plan)?;
    let times = grid(plan);
    let abm = collect_ensemble(n_runs, |r| {
        run_abm(&plan.spec, &plan.x0, &times, &mut stream(plan.seeds.abm, r))
    })?;
    let dem = if opinion_limits::Dynamics::is_deterministic(&model) {
        let mean = solve(plan, &model, &times, 0)?;
        let zeros = vec![0.0; mean.values().len()];
        let variance = Trajectory::new(times.clone(), mean.n_agents(), zeros)?;
        EnsembleStats {
            mean,
            variance,
            n_realizations: 1,
        }
    } else {
        collect_ensemble(n_runs, |r| solve(plan, &model, &times, r))?
    };
    let mean_error = error_timeseries(&abm.mean, &dem.mean)?;
    let var_error = error_timeseries(&abm.variance, &dem.variance)?;
    emit.write("abm_mean.csv", |out| abm.write_mean_csv(out))?;
    emit.write("abm_var.csv", |out| abm.write_variance_csv(out))?;
    emit.write("dem_mean.csv", |out| dem.write_mean_csv(out))?;
    emit.write("dem_var.csv", |out| dem.write_variance_csv(out))?;
    emit.write("mean_error.csv", |out| {
        write_series_csv(out, &times, &mean_error)
    })?;
    emit.write("var_error.csv", |out| {
        write_series_csv(out, &times, &var_error)
    })?;
    let (km, max_mean) = argmax(&mean_error);
    let (kv, max_var) = argmax(&var_error);
    Ok(format!(
        "{n_runs} realisations\nmax mean error = {max_mean:.6e} at t = {}\nmax variance error = {max_var:.6e} at t = {}",
        times[km], times[kv]
    ))
}

fn limitcheck(
    plan: &Plan,
    h_list: &[f64],
    samples: u64,
    n_states: usize,
    tol: &Tolerances,
    emit: &mut Emitter,
) -> Result<String, CliError> {
    let states = probe_states(plan.spec.n_agents, n_states, plan.seeds.probe_states);
    let sweeps: Vec<Vec<SweepRow>> = states
        .par_iter()
        .enumerate()
        .map(|(k, (_, x))| {
            convergence_sweep(
                x,
                &plan.spec,
                h_list,
                samples,
                &mut stream(plan.seeds.coefficients, k as u64),
            )
        })
        .collect::<opinion_limits::Result<_>>()?;

    let verdicts: Vec<_> = sweeps
        .iter()
        .map(|rows| judge(rows, tol).expect("sweep has rows"))
        .collect();
    let mut report = format!(
        "coefficient check at the smallest h = {:e}\ntolerances: drift {:e}, diffusion {:e}, gamma4 {:e}\n\n",
        h_list[h_list.len() - 1],
        tol.drift,
        tol.diffusion,
        tol.gamma4
    );
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(
        report,
        "{:<14} {:<24} {:<24} {:<24}",
        "state", "drift", "diffusion", "gamma4"
    );
    for ((name, _), (rows, v)) in states.iter().zip(sweeps.iter().zip(&verdicts)) {
        let last = rows[rows.len() - 1];
        let _ = writeln!(
            report,
            "{name:<14} {:<4} {:<19.6e} {:<4} {:<19.6e} {:<4} {:.6e}",
            mark(v.drift),
            last.b_deviation,
            mark(v.diffusion),
            last.a_deviation,
            mark(v.gamma4),
            last.gamma4
        );
    }
    let count = |f: fn(&opinion_limits::limitcheck::Verdict) -> bool| {
        verdicts.iter().filter(|v| f(v)).count()
    };
    let total = verdicts.len();
    let totals = format!(
        "drift {}/{total}, diffusion {}/{total}, gamma4 {}/{total} states pass",
        count(|v| v.drift),
        count(|v| v.diffusion),
        count(|v| v.gamma4)
    );
    let _ = writeln!(report, "\n{totals}");

    emit.write("coefficients.csv", |out| {
        write_sweep_csv(
            out,
            states
                .iter()
                .zip(&sweeps)
                .map(|((n, _), r)| (n.as_str(), r.as_slice())),
        )
    })?;
    emit.write("summary.txt", |out| Ok(out.write_all(report.as_bytes())?))?;
    Ok(totals)
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, v)| {
            if v > best.1 {
                (k, v)
            } else {
                best
            }
        })
}
