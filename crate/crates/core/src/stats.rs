//! Estimates, check reports and the goodness-of-fit statistics used by the
//! diagnostics.

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{path_rng, Stream};

/// Two-sided 0.1% normal quantile.
pub const Z_DEFAULT: f64 = 3.29;

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Pairwise summation; the split points depend only on the length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut s = 0.0;
        for x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo scalar result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    /// Paths that hit a cap and contributed a default value.
    pub truncated: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn from_samples(xs: &[f64], truncated: usize, seed: u64) -> Result<Estimate> {
        if xs.len() < 2 {
            return Err(Error::InvalidParameter(format!("an estimate needs at least 2 samples, got {}", xs.len())));
        }
        let (value, stderr) = mean_and_stderr(xs);
        Ok(Estimate { value, stderr, n: xs.len(), truncated, seed })
    }

    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.value - z * self.stderr, self.value + z * self.stderr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    /// Pass when the estimate is within `z` standard errors of the target.
    TwoSided,
    /// Pass when the estimate exceeds the target by more than `z` standard errors.
    Greater,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub t: Option<f64>,
    pub target: f64,
    pub estimate: Estimate,
    pub z: f64,
    pub z_threshold: f64,
    pub alternative: Alternative,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, t: Option<f64>, target: f64, estimate: Estimate, z_threshold: f64) -> Self {
        Self::build(name.into(), t, target, estimate, z_threshold, Alternative::TwoSided)
    }

    pub fn greater(name: impl Into<String>, t: Option<f64>, target: f64, estimate: Estimate, z_threshold: f64) -> Self {
        Self::build(name.into(), t, target, estimate, z_threshold, Alternative::Greater)
    }

    fn build(name: String, t: Option<f64>, target: f64, estimate: Estimate, z_threshold: f64, alternative: Alternative) -> Self {
        let diff = estimate.value - target;
        let z = if estimate.stderr > 0.0 {
            diff / estimate.stderr
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        let pass = match alternative {
            Alternative::TwoSided => diff.abs() <= z_threshold * estimate.stderr,
            Alternative::Greater => diff > z_threshold * estimate.stderr,
        };
        CheckReport { name, t, target, estimate, z, z_threshold, alternative, pass }
    }
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Stephens' finite-sample approximation to the 1% critical value.
pub fn ks_critical_1pct(n: usize) -> f64 {
    let s = (n as f64).sqrt();
    1.628 / (s + 0.12 + 0.11 / s)
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s = pairwise_sum(weights);
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    s * s / pairwise_sum(&sq)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsReport {
    pub name: String,
    pub t: f64,
    pub statistic: f64,
    /// `(1 + #{D_b >= D}) / (1 + B)`.
    pub p_value: f64,
    pub permutations: usize,
    pub ess: f64,
    pub pass: bool,
}

/// Largest gap between two sub-distribution functions over a sorted pool.
///
/// `pool` is sorted by value; group 0 contributes `weight / n0`, group 1
/// contributes `weight / n1`. The gap at `+∞` counts, so unequal total masses
/// are detected.
fn weighted_gap(pool: &[(f64, f64)], labels: &[bool], n0: f64, n1: f64) -> f64 {
    let mut f0 = 0.0;
    let mut f1 = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < pool.len() {
        let v = pool[i].0;
        while i < pool.len() && pool[i].0 == v {
            if labels[i] {
                f1 += pool[i].1 / n1;
            } else {
                f0 += pool[i].1 / n0;
            }
            i += 1;
        }
        d = d.max((f0 - f1).abs());
    }
    d
}

/// Two-sample KS comparing a weighted sample with an unweighted one, with a
/// label-permutation reference distribution.
///
/// The weighted empirical distribution is `(1/n) Σ wᵢ 1{xᵢ ≤ x}`, not
/// self-normalized: a weight vector with the wrong total mass is a failure.
pub fn weighted_ks_permutation(
    name: &str,
    t: f64,
    weighted: &[f64],
    weights: &[f64],
    plain: &[f64],
    permutations: usize,
    seed: u64,
    alpha: f64,
) -> Result<KsReport> {
    if weighted.len() != weights.len() {
        return Err(Error::InvalidParameter("values and weights differ in length".into()));
    }
    if weighted.is_empty() || plain.is_empty() {
        return Err(Error::InvalidParameter("empty sample".into()));
    }
    let ess = effective_sample_size(weights);
    if !(ess >= 100.0) {
        return Err(Error::Inconclusive(format!("{name}: effective sample size {ess:.1} below 100 (weight degeneracy)")));
    }
    let mut pool: Vec<(f64, f64)> = weighted
        .iter()
        .zip(weights)
        .map(|(x, w)| (*x, *w))
        .chain(plain.iter().map(|x| (*x, 1.0)))
        .collect();
    let mut labels: Vec<bool> = (0..pool.len()).map(|i| i >= weighted.len()).collect();
    // sort pool and labels together
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|a, b| pool[*a].0.total_cmp(&pool[*b].0).then(a.cmp(b)));
    pool = order.iter().map(|i| pool[*i]).collect();
    labels = order.iter().map(|i| labels[*i]).collect();

    let n0 = weighted.len() as f64;
    let n1 = plain.len() as f64;
    let observed = weighted_gap(&pool, &labels, n0, n1);
    let mut rng = path_rng(seed, Stream::Permutation, 0);
    let mut exceed = 0usize;
    let mut perm = labels.clone();
    for _ in 0..permutations {
        perm.shuffle(&mut rng);
        if weighted_gap(&pool, &perm, n0, n1) >= observed {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (1 + permutations) as f64;
    Ok(KsReport {
        name: name.to_string(),
        t,
        statistic: observed,
        p_value,
        permutations,
        ess,
        pass: p_value > alpha,
    })
}
