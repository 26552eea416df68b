//! Interaction probabilities `p_ij(x)` and the networks that modulate them.
//!
//! All kernels here depend on the opinion distance `d = |x_i - x_j|` only, so
//! they are symmetric in `(i, j)`. A [`Network`] can either steer partner
//! selection (see [`crate::abm::SelectionScheme::DegreeWeighted`]) or multiply
//! the kernel as an interaction mask via [`Interaction`].

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Default confidence radius used by the experiment configuration.
pub const DEFAULT_RADIUS: f64 = 0.5;

/// Default standard deviation of the Gaussian selection noise.
pub const DEFAULT_MOLLIFIER_STD: f64 = 0.01;

/// Standard normal CDF, `Φ(z) = erfc(-z/√2) / 2`.
///
/// `erfc` keeps full relative precision in the lower tail, so this is accurate
/// to well below 1e-12 absolute on the whole real line.
pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Distribution of the random radius perturbation drawn at each encounter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mollifier {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Mollifier {
    pub fn normal(mean: f64, std: f64) -> Result<Self> {
        let m = Mollifier::Normal { mean, std };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let m = Mollifier::Uniform { lo, hi };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Mollifier::Normal { mean, std } => {
                if !mean.is_finite() || !(std.is_finite() && std > 0.0) {
                    return Err(Error::invalid(
                        "mollifier",
                        format!("normal mollifier needs finite mean and std > 0 (got mean={mean}, std={std})"),
                    ));
                }
            }
            Mollifier::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::invalid(
                        "mollifier",
                        format!("uniform mollifier needs finite lo < hi (got lo={lo}, hi={hi})"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn cdf(&self, z: f64) -> f64 {
        match *self {
            Mollifier::Normal { mean, std } => standard_normal_cdf((z - mean) / std),
            Mollifier::Uniform { lo, hi } => {
                if z <= lo {
                    0.0
                } else if z >= hi {
                    1.0
                } else {
                    (z - lo) / (hi - lo)
                }
            }
        }
    }

    /// Supremum of the density, i.e. the Lipschitz constant of the CDF.
    pub fn max_density(&self) -> f64 {
        match *self {
            Mollifier::Normal { std, .. } => 1.0 / (std * (2.0 * std::f64::consts::PI).sqrt()),
            Mollifier::Uniform { lo, hi } => 1.0 / (hi - lo),
        }
    }
}

/// The interaction function `φ(d)` applied to opinion distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionKernel {
    /// Indicator of `d <= radius`. Discontinuous.
    BoundedConfidence {
        radius: f64,
    },
    /// Bounded confidence with a randomly perturbed radius: `1 - F(d - radius)`.
    Mollified {
        radius: f64,
        mollifier: Mollifier,
    },
    Constant(f64),
}

impl Default for InteractionKernel {
    fn default() -> Self {
        InteractionKernel::Mollified {
            radius: DEFAULT_RADIUS,
            mollifier: Mollifier::Normal {
                mean: 0.0,
                std: DEFAULT_MOLLIFIER_STD,
            },
        }
    }
}

impl InteractionKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InteractionKernel::BoundedConfidence { radius } => check_radius(radius),
            InteractionKernel::Mollified { radius, mollifier } => {
                check_radius(radius)?;
                mollifier.validate()
            }
            InteractionKernel::Constant(v) => {
                if (0.0..=1.0).contains(&v) {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "kernel",
                        format!("constant kernel value {v} is outside [0, 1]"),
                    ))
                }
            }
        }
    }

    /// `φ(d)`; `d` must be non-negative.
    pub fn eval(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(Error::invalid(
                "distance",
                format!("opinion distance must be >= 0 (got {d})"),
            ));
        }
        Ok(self.value(d))
    }

    #[inline]
    pub(crate) fn value(&self, d: f64) -> f64 {
        match *self {
            InteractionKernel::BoundedConfidence { radius } => {
                if d <= radius {
                    1.0
                } else {
                    0.0
                }
            }
            InteractionKernel::Mollified { radius, mollifier } => 1.0 - mollifier.cdf(d - radius),
            InteractionKernel::Constant(v) => v,
        }
    }

    pub fn is_discontinuous(&self) -> bool {
        matches!(self, InteractionKernel::BoundedConfidence { .. })
    }

    /// Global Lipschitz constant in `d`, `None` for the discontinuous kernel.
    pub fn lipschitz_constant(&self) -> Option<f64> {
        match self {
            InteractionKernel::BoundedConfidence { .. } => None,
            InteractionKernel::Mollified { mollifier, .. } => Some(mollifier.max_density()),
            InteractionKernel::Constant(_) => Some(0.0),
        }
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            "radius",
            format!("confidence radius must be finite and >= 0 (got {radius})"),
        ))
    }
}

/// Weighted undirected network with self-loops.
///
/// `A_ii = 1` for every node, so every degree `k_i = Σ_l A_il` is at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    adjacency: Vec<f64>,
    degrees: Vec<f64>,
}

impl Network {
    /// Builds a network from a row-major `n × n` adjacency matrix.
    pub fn from_adjacency(n: usize, adjacency: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("network", "network needs at least one node"));
        }
        if adjacency.len() != n * n {
            return Err(Error::invalid(
                "network",
                format!(
                    "adjacency has {} entries, expected {}",
                    adjacency.len(),
                    n * n
                ),
            ));
        }
        for (idx, &a) in adjacency.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::invalid(
                    "network",
                    format!("entry ({}, {}) = {a} is outside [0, 1]", idx / n, idx % n),
                ));
            }
        }
        for i in 0..n {
            if adjacency[i * n + i] != 1.0 {
                return Err(Error::invalid(
                    "network",
                    format!("self-loop A[{i}][{i}] must equal 1"),
                ));
            }
        }
        let degrees = adjacency
            .chunks_exact(n)
            .map(|row| row.iter().sum())
            .collect();
        Ok(Network {
            n,
            adjacency,
            degrees,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        Network::from_adjacency(n, a).expect("identity is a valid network")
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.adjacency[i * self.n..(i + 1) * self.n]
    }

    pub fn degree(&self, i: usize) -> f64 {
        self.degrees[i]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.weight(i, j) == self.weight(j, i)))
    }

    /// Fraction of off-diagonal entries that are non-zero.
    pub fn off_diagonal_density(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let edges = (0..self.n)
            .flat_map(|i| (0..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| i != j && self.weight(i, j) != 0.0)
            .count();
        edges as f64 / (self.n * (self.n - 1)) as f64
    }

    /// Writes the full matrix as CSV, preceded by a `# n=<N>` header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# n={}", self.n)?;
        let mut line = String::new();
        for i in 0..self.n {
            line.clear();
            for (j, a) in self.row(i).iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                write!(line, "{a}").expect("writing to a String cannot fail");
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty network file".into()))??;
        let n: usize = header
            .trim()
            .strip_prefix("# n=")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected header `# n=<N>`, found `{header}`")))?;
        let mut adjacency = Vec::with_capacity(n * n);
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = adjacency.len();
            for field in line.split(',') {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("row {row}: `{}` is not a number", field.trim()))
                })?;
                adjacency.push(v);
            }
            if adjacency.len() - before != n {
                return Err(Error::Parse(format!(
                    "row {row} has {} columns, expected {n}",
                    adjacency.len() - before
                )));
            }
        }
        Network::from_adjacency(n, adjacency)
    }
}

/// Erdős–Rényi `G(n, p)` with self-loops forced to 1.
///
/// Unordered pairs are visited in row-major order `(0,1), (0,2), …` and each
/// gets one Bernoulli draw, so the result is a pure function of the seed.
pub fn erdos_renyi(n: usize, p_conn: f64, seed: u64) -> Result<Network> {
    if n == 0 {
        return Err(Error::invalid("n", "network needs at least one node"));
    }
    if !(0.0..=1.0).contains(&p_conn) {
        return Err(Error::invalid(
            "p_conn",
            format!("connection probability {p_conn} is outside [0, 1]"),
        ));
    }
    let mut rng = rng::stream(seed, 0);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
        for j in i + 1..n {
            if rng.random_bool(p_conn) {
                a[i * n + j] = 1.0;
                a[j * n + i] = 1.0;
            }
        }
    }
    Network::from_adjacency(n, a)
}

/// A kernel, optionally multiplied entry-wise by a network adjacency matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Interaction {
    pub kernel: InteractionKernel,
    pub mask: Option<Network>,
}

impl Interaction {
    pub fn new(kernel: InteractionKernel) -> Self {
        Interaction { kernel, mask: None }
    }

    pub fn with_mask(kernel: InteractionKernel, mask: Network) -> Self {
        Interaction {
            kernel,
            mask: Some(mask),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.mask.as_ref().is_none_or(Network::is_symmetric)
    }

    /// `p_ij(x)` without bounds checks on `i`, `j`.
    #[inline]
    pub(crate) fn p(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let base = self.kernel.value((x[i] - x[j]).abs());
        match &self.mask {
            Some(net) => base * net.weight(i, j),
            None => base,
        }
    }

    /// Acceptance probability against an arbitrary target opinion `target`
    /// (used when the partner's opinion is perceived with noise).
    #[inline]
    pub(crate) fn p_toward(&self, xi: f64, target: f64, i: usize, j: usize) -> f64 {
        let base = self.kernel.value((target - xi).abs());
        match &self.mask {
            Some(net) => base * net.weight(i, j),
            None => base,
        }
    }
}

/// `p_ij(x) = φ(|x_i - x_j|)`, times `A_ij` when a mask is supplied.
pub fn pairwise_probability(
    kernel: &InteractionKernel,
    x: &[f64],
    i: usize,
    j: usize,
    mask: Option<&Network>,
) -> Result<f64> {
    let n = x.len();
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    let mut p = kernel.eval((x[i] - x[j]).abs())?;
    if let Some(net) = mask {
        if net.len() != n {
            return Err(Error::invalid(
                "network",
                format!("mask has {} nodes but the state has {n} agents", net.len()),
            ));
        }
        p *= net.weight(i, j);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn smooth_kernel() -> InteractionKernel {
        InteractionKernel::Mollified {
            radius: 0.5,
            mollifier: Mollifier::Normal {
                mean: 0.0,
                std: 0.01,
            },
        }
    }

    /// Composite Simpson integration of the standard normal density, used as
    /// an independent route to Φ.
    fn normal_cdf_by_quadrature(z: f64) -> f64 {
        let lo = -12.0;
        let steps = 200_000;
        let width = (z - lo) / steps as f64;
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut sum = pdf(lo) + pdf(z);
        for k in 1..steps {
            let t = lo + k as f64 * width;
            sum += if k % 2 == 1 { 4.0 } else { 2.0 } * pdf(t);
        }
        sum * width / 3.0
    }

    #[test]
    fn bounded_confidence_is_an_indicator() {
        let k = InteractionKernel::BoundedConfidence { radius: 0.5 };
        assert_eq!(k.eval(0.3).unwrap(), 1.0);
        assert_eq!(k.eval(0.5).unwrap(), 1.0);
        assert_eq!(k.eval(0.5000001).unwrap(), 0.0);
        assert!(k.is_discontinuous());
        assert!(k.lipschitz_constant().is_none());
    }

    #[test]
    fn mollified_kernel_at_and_above_radius() {
        let k = smooth_kernel();
        assert_eq!(k.eval(0.5).unwrap(), 0.5);
        // 1 - Φ(1), frozen from quadrature of the normal density.
        let oracle = 1.0 - normal_cdf_by_quadrature(1.0);
        assert!((oracle - 0.158_655_253_931_457).abs() < 1e-12);
        assert!((k.eval(0.51).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn normal_cdf_matches_quadrature() {
        for z in [-6.0, -2.5, -1.0, -0.1, 0.0, 0.7, 2.0, 5.0] {
            let diff = (standard_normal_cdf(z) - normal_cdf_by_quadrature(z)).abs();
            assert!(diff < 1e-12, "z={z}: diff {diff}");
        }
    }

    #[test]
    fn negative_distance_is_rejected() {
        assert!(smooth_kernel().eval(-0.1).is_err());
        assert!(smooth_kernel().eval(f64::NAN).is_err());
    }

    #[test]
    fn constant_kernel_with_mask() {
        let mut a = vec![1.0, 0.5, 0.5, 1.0];
        let net = Network::from_adjacency(2, a.clone()).unwrap();
        let p = pairwise_probability(
            &InteractionKernel::Constant(0.7),
            &[0.0, 3.0],
            0,
            1,
            Some(&net),
        )
        .unwrap();
        assert!((p - 0.35).abs() < 1e-15);
        a[0] = 0.9;
        assert!(Network::from_adjacency(2, a).is_err());
    }

    #[test]
    fn pairwise_probability_cases() {
        let k = smooth_kernel();
        let x = [0.1, 0.6];
        assert_eq!(pairwise_probability(&k, &x, 0, 1, None).unwrap(), 0.5);
        assert_eq!(
            pairwise_probability(&k, &x, 1, 1, None).unwrap(),
            k.eval(0.0).unwrap()
        );
        assert!(matches!(
            pairwise_probability(&k, &x, 0, 2, None),
            Err(Error::IndexOutOfRange { index: 2, n: 2 })
        ));
    }

    #[test]
    fn erdos_renyi_extremes() {
        let full = erdos_renyi(4, 1.0, 3).unwrap();
        assert!(full.degrees().iter().all(|&k| k == 4.0));
        let empty = erdos_renyi(4, 0.0, 3).unwrap();
        assert_eq!(empty, Network::identity(4));
        assert!(empty.degrees().iter().all(|&k| k == 1.0));
        assert!(erdos_renyi(4, 1.5, 3).is_err());
        assert!(erdos_renyi(4, -0.1, 3).is_err());
    }

    #[test]
    fn erdos_renyi_density_concentrates() {
        let net = erdos_renyi(50, 0.1, 7).unwrap();
        let pairs = (50 * 49 / 2) as f64;
        let se = (0.1 * 0.9 / pairs).sqrt();
        assert!((net.off_diagonal_density() - 0.1).abs() <= 3.0 * se);
        assert!(net.is_symmetric());
        assert_eq!(net, erdos_renyi(50, 0.1, 7).unwrap());
        assert_ne!(net, erdos_renyi(50, 0.1, 8).unwrap());
    }

    #[test]
    fn network_csv_round_trip() {
        let net = erdos_renyi(6, 0.4, 11).unwrap();
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# n=6\n"));
        assert_eq!(Network::read_csv(buf.as_slice()).unwrap(), net);
        assert!(Network::read_csv("# n=2\n1,0\n0\n".as_bytes()).is_err());
        assert!(Network::read_csv("n=2\n1,0\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn uniform_mollifier_has_compact_transition() {
        let k = InteractionKernel::Mollified {
            radius: 0.5,
            mollifier: Mollifier::uniform(-0.1, 0.1).unwrap(),
        };
        assert_eq!(k.eval(0.35).unwrap(), 1.0);
        assert_eq!(k.eval(0.3).unwrap(), 1.0);
        assert_eq!(k.eval(0.65).unwrap(), 0.0);
        assert_eq!(k.eval(0.9).unwrap(), 0.0);
        assert!((k.eval(0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn kernels_are_probabilities(d in 0.0f64..10.0, r in 0.0f64..2.0, s in 1e-3f64..1.0, c in 0.0f64..=1.0) {
            for k in [
                InteractionKernel::BoundedConfidence { radius: r },
                InteractionKernel::Mollified { radius: r, mollifier: Mollifier::Normal { mean: 0.0, std: s } },
                InteractionKernel::Mollified { radius: r, mollifier: Mollifier::Uniform { lo: -s, hi: s } },
                InteractionKernel::Constant(c),
            ] {
                let v = k.eval(d).unwrap();
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn mollified_is_non_increasing(d1 in 0.0f64..3.0, d2 in 0.0f64..3.0, s in 1e-3f64..0.5) {
            let k = InteractionKernel::Mollified { radius: 0.5, mollifier: Mollifier::Normal { mean: 0.0, std: s } };
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(k.eval(lo).unwrap() >= k.eval(hi).unwrap());
        }

        #[test]
        fn uniform_mollifier_is_exact_outside_window(w in 1e-3f64..0.4, d in 0.0f64..3.0) {
            let k = InteractionKernel::Mollified { radius: 0.5, mollifier: Mollifier::Uniform { lo: -w, hi: w } };
            let v = k.eval(d).unwrap();
            if d <= 0.5 - w { prop_assert_eq!(v, 1.0); }
            if d >= 0.5 + w { prop_assert_eq!(v, 0.0); }
        }

        #[test]
        fn pairwise_probability_is_symmetric(xs in proptest::collection::vec(-2.0f64..2.0, 2..8), seed in 0u64..1000) {
            let n = xs.len();
            let net = erdos_renyi(n, 0.5, seed).unwrap();
            let k = smooth_kernel();
            for i in 0..n {
                for j in 0..n {
                    let pij = pairwise_probability(&k, &xs, i, j, Some(&net)).unwrap();
                    let pji = pairwise_probability(&k, &xs, j, i, Some(&net)).unwrap();
                    prop_assert_eq!(pij, pji);
                }
            }
        }
    }

    #[test]
    fn normal_mollifier_lipschitz_bound_by_dense_sampling() {
        let s = 0.01;
        let k = InteractionKernel::Mollified {
            radius: 0.5,
            mollifier: Mollifier::Normal { mean: 0.0, std: s },
        };
        let bound = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
        assert!((k.lipschitz_constant().unwrap() - bound).abs() < 1e-9);
        let step = 1e-5;
        let mut prev = k.eval(0.4).unwrap();
        let mut worst: f64 = 0.0;
        for m in 1..=20_000 {
            let cur = k.eval(0.4 + m as f64 * step).unwrap();
            worst = worst.max((cur - prev).abs() / step);
            prev = cur;
        }
        assert!(
            worst <= bound * (1.0 + 1e-6),
            "slope {worst} exceeds {bound}"
        );
        assert!(worst > 0.99 * bound);
    }
}
