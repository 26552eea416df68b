use opinion_limits::abm::run_abm;
use opinion_limits::dem::solve_limit;
use opinion_limits::limitcheck::probe_states;
use opinion_limits::rng::stream;
use opinion_limits::{IntegratorSpec, InteractionKernel, ModelSpec};

/// Sorted opinions split wherever neighbours are more than `gap` apart.
fn clusters(x: &[f64], gap: f64) -> Vec<Vec<f64>> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let mut out: Vec<Vec<f64>> = vec![vec![v[0]]];
    for w in v.windows(2) {
        if w[1] - w[0] > gap {
            out.push(Vec::new());
        }
        out.last_mut().unwrap().push(w[1]);
    }
    out
}

fn check(label: &str, x: &[f64]) {
    let c = clusters(x, 0.1);
    assert!((1..=3).contains(&c.len()), "{label}: {} clusters", c.len());
    for members in &c {
        let width = members[members.len() - 1] - members[0];
        assert!(width < 0.05, "{label}: cluster width {width}");
    }
}

#[test]
fn default_model_settles_into_few_tight_clusters() {
    let spec = ModelSpec::new(50, 1e-5, 20.0, InteractionKernel::default());
    let times = [0.0, 20.0];
    for (k, (_, x0)) in probe_states(50, 3, 42).into_iter().take(3).enumerate() {
        let abm = run_abm(&spec, &x0, &times, &mut stream(42, k as u64)).unwrap();
        let ode = solve_limit(
            &spec,
            &x0,
            &IntegratorSpec::forward_euler(0.01),
            &times,
            &mut stream(0, 0),
        )
        .unwrap();
        check(&format!("abm {k}"), abm.last_row().unwrap());
        check(&format!("ode {k}"), ode.last_row().unwrap());
    }
}
