//! Acceptance suite. Prints one PASS/FAIL line per check and exits non-zero
//! if any check fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;

use opinion_limits::abm::{run_abm, OpinionState};
use opinion_limits::analysis::{collect_ensemble, error_distribution, summarize};
use opinion_limits::dem::{build_limit, integrate, solve_limit};
use opinion_limits::kernel::{erdos_renyi, pairwise_probability};
use opinion_limits::limitcheck::{
    exact_coefficients, mc_coefficients, two_cluster_state, CoefficientReport,
};
use opinion_limits::noise::empirical_mk;
use opinion_limits::rng::{derive_seed, stream};
use opinion_limits::{
    time_grid, EnsembleStats, ErrorNorm, IntegratorSpec, InteractionKernel, Method, ModelSpec,
    NoiseFamily, NoiseKind, NoiseLaw, SelectionScheme, UpdateMode,
};

const SEED: u64 = 20_240_601;

type Target<'a> = Box<dyn Fn(usize) -> f64 + 'a>;
type Check = (&'static str, fn() -> Outcome);

type Outcome = Result<String, String>;

fn kernel() -> InteractionKernel {
    InteractionKernel::default()
}

fn uniform_state(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn gaussian(kind: NoiseKind, mean: f64, var: f64, n: usize) -> NoiseFamily {
    NoiseFamily::new(
        kind,
        NoiseLaw::GaussianScaled {
            mean_per_h: mean,
            var_per_h: var,
        },
        n,
    )
    .unwrap()
}

fn external(n: usize) -> NoiseFamily {
    gaussian(NoiseKind::External, 0.0, 0.05, n)
}

fn update_distance(n: usize) -> NoiseFamily {
    gaussian(NoiseKind::RandomUpdateDistance, n as f64, 5.0, n)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn sup(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, f64::max)
}

fn drift_identity() -> Outcome {
    let start = Instant::now();
    let n = 50;
    let spec = ModelSpec::new(n, 1e-5, 20.0, kernel());
    let model = build_limit(&spec).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for s in 0..100 {
        let x = uniform_state(n, derive_seed(SEED, 1) + s);
        let exact = exact_coefficients(&x, &spec).map_err(|e| e.to_string())?;
        let b = model.drift(&x).map_err(|e| e.to_string())?;
        let scale = sup(b.iter().map(|v| v.abs())).max(f64::MIN_POSITIVE);
        let dev = sup(exact.b_h.iter().zip(&b).map(|(u, v)| (u - v).abs()));
        worst = worst.max(dev / scale);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-12, || {
        format!("relative deviation {worst:e} > 1e-12")
    })?;
    ensure(secs < 1.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "max relative |b^h - b| = {worst:.2e} over 100 states in {secs:.2} s"
    ))
}

fn diffusion_vanishing() -> Outcome {
    let start = Instant::now();
    let n = 50;
    let hs = [1e-2, 1e-3, 1e-4];
    let mut worst: f64 = 0.0;
    let mut sup_a = [0.0; 3];
    for s in 0..10 {
        let x = uniform_state(n, derive_seed(SEED, 2) + s);
        let reports: Vec<CoefficientReport> = hs
            .iter()
            .map(|&h| exact_coefficients(&x, &ModelSpec::new(n, h, 1.0, kernel())))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for i in 0..n {
            let base = reports[0].a(i, i) / hs[0];
            for (r, &h) in reports.iter().zip(&hs).skip(1) {
                let v = r.a(i, i) / h;
                worst = worst.max((v - base).abs() / base.abs().max(f64::MIN_POSITIVE));
            }
        }
        for (k, r) in reports.iter().enumerate() {
            sup_a[k] = f64::max(sup_a[k], sup(r.a_h.iter().map(|v| v.abs())));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-12, || {
        format!("a^h_ii/h varies by {worst:e} (relative)")
    })?;
    ensure(sup_a[0] > sup_a[1] && sup_a[1] > sup_a[2], || {
        format!("sup|a^h| not decreasing: {sup_a:?}")
    })?;
    ensure(secs < 1.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "a^h_ii/h spread {worst:.2e}; sup|a^h| = {:.3e}, {:.3e}, {:.3e} in {secs:.2} s",
        sup_a[0], sup_a[1], sup_a[2]
    ))
}

fn monte_carlo_vs_enumeration() -> Outcome {
    let start = Instant::now();
    let n = 5;
    // Distances 0.5, 0.505 and 0.5 sit on the kernel's transition.
    let x = [-0.7, -0.2, 0.005, 0.3, 0.51];
    let base = ModelSpec::new(n, 1e-3, 1.0, kernel());
    let net = erdos_renyi(n, 0.6, 3).map_err(|e| e.to_string())?;
    let variants = [
        ("uniform", base.clone()),
        (
            "without_replacement",
            base.clone()
                .with_selection(SelectionScheme::UniformWithoutReplacement),
        ),
        (
            "both_update",
            base.clone().with_update_mode(UpdateMode::BothUpdate),
        ),
        (
            "degree_weighted",
            base.clone()
                .with_selection(SelectionScheme::DegreeWeighted(net)),
        ),
        (
            "probability_proportional",
            base.clone()
                .with_selection(SelectionScheme::ProbabilityProportional),
        ),
        (
            "probability_proportional_squared",
            base.clone()
                .with_selection(SelectionScheme::ProbabilityProportional)
                .with_double_weighting(true),
        ),
    ];
    let mut worst_z: f64 = 0.0;
    let mut compared = 0;
    for (k, (name, spec)) in variants.iter().enumerate() {
        let exact = exact_coefficients(&x, spec).map_err(|e| e.to_string())?;
        let mc = mc_coefficients(
            &x,
            spec,
            1_000_000,
            &mut stream(derive_seed(SEED, 3), k as u64),
        )
        .map_err(|e| e.to_string())?;
        let Method::MonteCarlo {
            b_std_error,
            a_std_error,
            gamma4_std_error,
            ..
        } = &mc.method
        else {
            return Err("expected a Monte Carlo report".into());
        };
        let triples = mc
            .b_h
            .iter()
            .zip(&exact.b_h)
            .zip(b_std_error)
            .chain(mc.a_h.iter().zip(&exact.a_h).zip(a_std_error))
            .map(|((m, e), se)| (*m, *e, *se))
            .chain(std::iter::once((
                mc.gamma4,
                exact.gamma4,
                *gamma4_std_error,
            )));
        for (m, e, se) in triples {
            compared += 1;
            let diff = (m - e).abs();
            if se == 0.0 {
                ensure(diff <= 1e-15 * e.abs().max(1e-300), || {
                    format!("{name}: zero-variance estimate {m:e} differs from exact {e:e}")
                })?;
            } else {
                let z = diff / se;
                worst_z = worst_z.max(z);
                ensure(z <= 4.0, || {
                    format!("{name}: estimate {m:e} vs exact {e:e} is {z:.2} standard errors")
                })?;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{compared} components over {} variants, worst {worst_z:.2} standard errors, {secs:.1} s",
        variants.len()
    ))
}

fn sde_coefficient_recovery() -> Outcome {
    let start = Instant::now();
    let n = 50;
    let h = 1e-4;
    let samples = 16_000_000;
    let x = two_cluster_state(n, 0.05, &mut stream(derive_seed(SEED, 4), 0));
    let p = |i: usize, j: usize| pairwise_probability(&kernel(), &x, i, j, None).unwrap();
    let nf = n as f64;
    let cases: [(&str, NoiseFamily, Target<'_>); 3] = [
        ("external", external(n), Box::new(|_| 0.05 / nf)),
        (
            "adaptation",
            gaussian(NoiseKind::Adaptation, 0.0, 0.05, n),
            Box::new(|i| 0.05 / (nf * nf) * (0..n).map(|j| p(i, j)).sum::<f64>()),
        ),
        (
            "random_update_distance",
            update_distance(n),
            Box::new(|i| {
                5.0 / (nf * nf) * (0..n).map(|j| p(i, j) * (x[j] - x[i]).powi(2)).sum::<f64>()
            }),
        ),
    ];
    let mut notes = Vec::new();
    for (k, (name, noise, target)) in cases.iter().enumerate() {
        let spec = ModelSpec::new(n, h, 1.0, kernel()).with_noise(*noise);
        let r = mc_coefficients(
            &x,
            &spec,
            samples,
            &mut stream(derive_seed(SEED, 5), k as u64),
        )
        .map_err(|e| e.to_string())?;
        let Method::MonteCarlo { a_std_error, .. } = &r.method else {
            return Err("expected a Monte Carlo report".into());
        };
        let mut worst_rel: f64 = 0.0;
        for i in 0..n {
            let want = target(i);
            let got = r.a(i, i);
            let se = a_std_error[i * n + i];
            ensure((got - want).abs() <= 3.0 * se + 0.1 * want, || {
                format!("{name}: a^h_{i}{i} = {got:e}, expected {want:e} (se {se:e})")
            })?;
            worst_rel = worst_rel.max((got - want).abs() / want);
        }
        notes.push(format!("{name} worst rel dev {worst_rel:.3}"));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{} at a two-cluster state, {secs:.1} s",
        notes.join(", ")
    ))
}

fn sweep_error_trend() -> Outcome {
    let n = 50;
    let horizon = 5.0;
    let x0 = uniform_state(n, derive_seed(SEED, 6));
    let grid = time_grid(horizon, 0.01);
    let base = ModelSpec::new(n, 1e-2, horizon, kernel());
    let dem = solve_limit(
        &base,
        &x0,
        &IntegratorSpec::forward_euler(0.01),
        &grid,
        &mut stream(0, 0),
    )
    .map_err(|e| e.to_string())?;
    let mut summaries = Vec::new();
    for (k, h) in [1e-2, 1e-3, 1e-4].into_iter().enumerate() {
        let spec = base.clone().with_h(h);
        let errors = error_distribution(
            &spec,
            &x0,
            &dem,
            20,
            derive_seed(SEED, 7) + k as u64,
            ErrorNorm::Duration,
        )
        .map_err(|e| e.to_string())?;
        summaries.push(summarize(&errors).unwrap());
    }
    let medians: Vec<f64> = summaries.iter().map(|s| s.median).collect();
    let iqrs: Vec<f64> = summaries.iter().map(|s| s.iqr()).collect();
    let fmt = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.3e}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let detail = format!("medians [{}], IQRs [{}]", fmt(&medians), fmt(&iqrs));
    ensure(medians[0] > medians[1] && medians[1] > medians[2], || {
        format!("medians not decreasing: {detail}")
    })?;
    ensure(iqrs[2] < iqrs[0], || {
        format!("IQR did not shrink: {detail}")
    })?;
    Ok(detail)
}

/// Ensembles shared by the mean-agreement and variance checks.
struct NoisyEnsembles {
    times: Vec<f64>,
    abm_external: EnsembleStats,
    em_external: EnsembleStats,
    abm_update_distance: EnsembleStats,
    secs: f64,
}

fn noisy_ensembles() -> Result<NoisyEnsembles, String> {
    let start = Instant::now();
    let n = 50;
    let horizon = 10.0;
    let runs = 500;
    let x0 = uniform_state(n, derive_seed(SEED, 8));
    let times = time_grid(horizon, 0.01);
    let ext = ModelSpec::new(n, 1e-4, horizon, kernel()).with_noise(external(n));
    let rud = ModelSpec::new(n, 1e-4, horizon, kernel()).with_noise(update_distance(n));
    let model = build_limit(&ext).map_err(|e| e.to_string())?;
    let em = IntegratorSpec::euler_maruyama(0.01);
    let e = |e: opinion_limits::Error| e.to_string();
    let abm_seed = derive_seed(SEED, 9);
    let abm_external = collect_ensemble(runs, |r| {
        run_abm(&ext, &x0, &times, &mut stream(abm_seed, r))
    })
    .map_err(e)?;
    let em_seed = derive_seed(SEED, 10);
    let em_external = collect_ensemble(runs, |r| {
        integrate(&model, &x0, &em, horizon, &times, &mut stream(em_seed, r))
    })
    .map_err(e)?;
    let rud_seed = derive_seed(SEED, 11);
    let abm_update_distance = collect_ensemble(runs, |r| {
        run_abm(&rud, &x0, &times, &mut stream(rud_seed, r))
    })
    .map_err(e)?;
    Ok(NoisyEnsembles {
        times,
        abm_external,
        em_external,
        abm_update_distance,
        secs: start.elapsed().as_secs_f64(),
    })
}

fn ensemble_agreement(ens: &NoisyEnsembles) -> Outcome {
    let (a, b) = (&ens.abm_external, &ens.em_external);
    let (na, nb) = (a.n_realizations as f64, b.n_realizations as f64);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_diff: f64 = 0.0;
    for k in 0..ens.times.len() {
        let (ma, mb) = (a.mean.row(k), b.mean.row(k));
        let (va, vb) = (a.variance.row(k), b.variance.row(k));
        for i in 0..ma.len() {
            let diff = (ma[i] - mb[i]).abs();
            let se = (va[i] / na + vb[i] / nb).sqrt();
            worst_diff = worst_diff.max(diff);
            ensure(diff <= 5.0 * se, || {
                format!(
                    "t = {}, agent {i}: |mean difference| {diff:e} > 5 x {se:e}",
                    ens.times[k]
                )
            })?;
            if se > 0.0 {
                worst_ratio = worst_ratio.max(diff / se);
            }
        }
    }
    Ok(format!(
        "max |mean_ABM - mean_EM| = {worst_diff:.3e}, at most {worst_ratio:.2} pooled standard errors (ensembles built in {:.0} s)",
        ens.secs
    ))
}

/// Least-squares slope of `y` against `t`.
fn slope(t: &[f64], y: &[f64]) -> f64 {
    let m = t.len() as f64;
    let (tm, ym) = (t.iter().sum::<f64>() / m, y.iter().sum::<f64>() / m);
    let num: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let den: f64 = t.iter().map(|a| (a - tm).powi(2)).sum();
    num / den
}

fn variance_phenomenology(ens: &NoisyEnsembles) -> Outcome {
    let horizon = *ens.times.last().unwrap();
    let from = ens
        .times
        .iter()
        .position(|&t| t >= 0.75 * horizon - 1e-9)
        .unwrap();
    let window = &ens.times[from..];
    let ext = ens.abm_external.agent_averaged_variance();
    let rud = ens.abm_update_distance.agent_averaged_variance();
    let (ext_w, rud_w) = (&ext[from..], &rud[from..]);
    let ext_growth = ext_w[ext_w.len() - 1] - ext_w[0];
    let rud_growth = rud_w[rud_w.len() - 1] - rud_w[0];
    let ext_slope = slope(window, ext_w);
    let rud_slope = slope(window, rud_w);
    let detail = format!(
        "external variance {:.4e} -> {:.4e} (slope {ext_slope:.3e}), update-distance {:.4e} -> {:.4e} (slope {rud_slope:.3e})",
        ext_w[0],
        ext_w[ext_w.len() - 1],
        rud_w[0],
        rud_w[rud_w.len() - 1]
    );
    ensure(ext_growth > 0.0 && ext_slope > 0.0, || {
        format!("external variance not increasing: {detail}")
    })?;
    ensure(
        rud_growth <= ext_growth / 3.0 && rud_slope <= ext_slope / 3.0,
        || format!("update-distance variance grows too fast: {detail}"),
    )?;
    Ok(detail)
}

fn fixed_points_and_hull() -> Outcome {
    let n = 50;
    let spec = ModelSpec::new(n, 1e-5, 20.0, kernel());
    let x0 = uniform_state(n, derive_seed(SEED, 12));
    let (lo, hi) = x0
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let mut state = OpinionState::new(x0);
    let mut rng = stream(derive_seed(SEED, 12), 1);
    for step in 0..1_000_000u64 {
        let tr = state.step(&spec, &mut rng).map_err(|e| e.to_string())?;
        for &(i, _) in tr.moves() {
            let v = state.x[i];
            ensure(v >= lo && v <= hi, || {
                format!("agent {i} left [{lo}, {hi}] at step {step}: {v}")
            })?;
        }
    }
    for (name, noise) in [
        ("none", NoiseFamily::none()),
        ("random_update_distance", update_distance(n)),
    ] {
        let spec = ModelSpec::new(n, 1e-5, 20.0, kernel()).with_noise(noise);
        let mut state = OpinionState::new(vec![0.3; n]);
        let mut rng = stream(derive_seed(SEED, 13), 0);
        for _ in 0..100_000 {
            state.step(&spec, &mut rng).map_err(|e| e.to_string())?;
        }
        ensure(state.x.iter().all(|&v| v == 0.3), || {
            format!("consensus moved under {name} noise")
        })?;
    }
    Ok("10^6 steps inside the hull; consensus exact for 10^5 steps with and without update-distance noise".into())
}

fn normalisation_speed_up() -> Outcome {
    let n = 50;
    let grid = [0.0, 1.0];
    let standard = ModelSpec::new(n, 1e-5, 1.0, kernel());
    let proportional = standard
        .clone()
        .with_selection(SelectionScheme::ProbabilityProportional);
    let fe = IntegratorSpec::forward_euler(0.01);
    let mut ratios = Vec::new();
    for s in 0..20 {
        let x0 = uniform_state(n, derive_seed(SEED, 14) + s);
        let moved = |spec: &ModelSpec| -> Result<f64, String> {
            let t =
                solve_limit(spec, &x0, &fe, &grid, &mut stream(0, 0)).map_err(|e| e.to_string())?;
            Ok(t.row(1)
                .iter()
                .zip(t.row(0))
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / n as f64)
        };
        let (a, b) = (moved(&standard)?, moved(&proportional)?);
        ensure(b > a, || {
            format!("initial state {s}: normalised movement {b:e} <= standard {a:e}")
        })?;
        ratios.push(b / a);
    }
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "normalised dynamics move at least {min:.2}x further by t = 1 over 20 initial states"
    ))
}

fn moment_oracles() -> Outcome {
    let n = 50;
    let h = 1e-5;
    let families = [
        ("external", external(n)),
        ("adaptation", gaussian(NoiseKind::Adaptation, 0.0, 0.05, n)),
        ("ambiguity", gaussian(NoiseKind::Ambiguity, 0.0, 0.05, n)),
        ("random_update_distance", update_distance(n)),
        (
            "degenerate_update_distance",
            NoiseFamily::new(
                NoiseKind::RandomUpdateDistance,
                NoiseLaw::Degenerate { value_per_h: 50.0 },
                n,
            )
            .unwrap(),
        ),
    ];
    let mut worst_m2: f64 = 0.0;
    for (f, (name, family)) in families.iter().enumerate() {
        for k in 1..=4u32 {
            let mut rng = stream(derive_seed(SEED, 15), (f * 4) as u64 + k as u64);
            let est =
                empirical_mk(family, k, &[h], 1_000_000, &mut rng).map_err(|e| e.to_string())?[0];
            let analytic = family.analytic_mk(k).unwrap();
            let bias = (family.raw_moment(h, k) / h - analytic).abs();
            let diff = (est.estimate - analytic).abs();
            ensure(
                diff <= 4.0 * est.std_error + bias * (1.0 + 1e-9) + 1e-12 * analytic.abs(),
                || {
                    format!(
                        "{name} m_{k}: estimate {:e} (se {:e}) vs analytic {analytic:e}",
                        est.estimate, est.std_error
                    )
                },
            )?;
            if k == 2 && analytic > 0.0 {
                let rel = diff / analytic;
                worst_m2 = worst_m2.max(rel);
                ensure(rel <= 0.01, || {
                    format!("{name} m_2 off by {:.2}%", 100.0 * rel)
                })?;
            }
        }
    }
    Ok(format!(
        "m_1..m_4 consistent for {} families; worst m_2 deviation {:.3}%",
        families.len(),
        100.0 * worst_m2
    ))
}

fn run(name: &str, check: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS  {name}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  {name}: {detail}");
            false
        }
    }
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let selected = |name: &str| filter.as_deref().is_none_or(|f| name.contains(f));
    let mut ok = true;
    let checks: [Check; 8] = [
        ("exact drift identity", drift_identity),
        ("diffusion vanishes linearly in h", diffusion_vanishing),
        (
            "monte carlo matches enumeration",
            monte_carlo_vs_enumeration,
        ),
        ("sde coefficient recovery", sde_coefficient_recovery),
        ("sweep error shrinks with h", sweep_error_trend),
        ("fixed points and convex hull", fixed_points_and_hull),
        ("normalised selection is faster", normalisation_speed_up),
        ("noise moment oracles", moment_oracles),
    ];
    for (name, check) in checks {
        if selected(name) {
            ok &= run(name, check);
        }
    }
    let ensemble_checks = [
        "abm and euler-maruyama ensemble means agree",
        "variance grows under external noise only",
    ];
    if ensemble_checks.iter().any(|n| selected(n)) {
        match catch_unwind(noisy_ensembles) {
            Ok(Ok(ens)) => {
                if selected(ensemble_checks[0]) {
                    ok &= run(ensemble_checks[0], || ensemble_agreement(&ens));
                }
                if selected(ensemble_checks[1]) {
                    ok &= run(ensemble_checks[1], || variance_phenomenology(&ens));
                }
            }
            failed => {
                let msg = match failed {
                    Ok(Err(e)) => e,
                    _ => "ensemble generation panicked".into(),
                };
                for name in ensemble_checks.iter().filter(|n| selected(n)) {
                    println!("FAIL  {name}: {msg}");
                }
                ok = false;
            }
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
