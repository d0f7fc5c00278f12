//! Parametric laws used for claim sizes, interarrival kernels and mixing.
//!
//! Rates are rates: `Exponential { rate: b }` has mean `1/b` and
//! `Gamma { rate: b, shape: a }` has mean `a/b`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad::{integrate_range, Quad, QuadOptions};

const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    Exponential { rate: f64 },
    Gamma { rate: f64, shape: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<f64> },
    Uniform { lo: f64, hi: f64 },
    Beta { p: f64, q: f64 },
    Degenerate { point: f64 },
    FiniteDiscrete { atoms: Vec<f64>, weights: Vec<f64> },
    /// `base + offset`.
    Shifted { base: Box<Law>, offset: f64 },
    /// The law whose survival function is `base.survival(x)^exponent`
    /// (proportional-hazards distortion).
    PowerSurvival { base: Box<Law>, exponent: f64 },
    /// Density `exp(log_weight(x))` with respect to `base`; sampled by
    /// rejection with `exp(log_weight) <= envelope`.
    Reweighted { base: Box<Law>, log_weight: Expr, envelope: f64 },
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("weights must be non-empty".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::InvalidParameter(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

impl Law {
    pub fn exponential(rate: f64) -> Result<Law> {
        let l = Law::Exponential { rate };
        l.validate()?;
        Ok(l)
    }

    pub fn gamma(rate: f64, shape: f64) -> Result<Law> {
        let l = Law::Gamma { rate, shape };
        l.validate()?;
        Ok(l)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Law> {
        let l = Law::Uniform { lo, hi };
        l.validate()?;
        Ok(l)
    }

    pub fn degenerate(point: f64) -> Law {
        Law::Degenerate { point }
    }

    pub fn shifted(base: Law, offset: f64) -> Law {
        Law::Shifted { base: Box::new(base), offset }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Law::Exponential { rate } => positive("rate", *rate),
            Law::Gamma { rate, shape } => {
                positive("rate", *rate)?;
                positive("shape", *shape)
            }
            Law::HyperExponential { weights, rates } => {
                if weights.len() != rates.len() {
                    return Err(Error::InvalidParameter("weights and rates differ in length".into()));
                }
                check_weights(weights)?;
                rates.iter().try_for_each(|r| positive("rate", *r))
            }
            Law::Uniform { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && lo < hi {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter(format!("uniform needs lo < hi, got [{lo}, {hi}]")))
                }
            }
            Law::Beta { p, q } => {
                positive("p", *p)?;
                positive("q", *q)
            }
            Law::Degenerate { point } => {
                if point.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidParameter("degenerate point must be finite".into()))
                }
            }
            Law::FiniteDiscrete { atoms, weights } => {
                if atoms.len() != weights.len() {
                    return Err(Error::InvalidParameter("atoms and weights differ in length".into()));
                }
                if atoms.iter().any(|a| !a.is_finite()) {
                    return Err(Error::InvalidParameter("atoms must be finite".into()));
                }
                check_weights(weights)
            }
            Law::Shifted { base, offset } => {
                if !offset.is_finite() {
                    return Err(Error::InvalidParameter("offset must be finite".into()));
                }
                base.validate()
            }
            Law::PowerSurvival { base, exponent } => {
                positive("exponent", *exponent)?;
                if !base.is_continuous() {
                    return Err(Error::InvalidParameter("power-survival base must be continuous".into()));
                }
                base.validate()
            }
            Law::Reweighted { base, envelope, .. } => {
                positive("envelope", *envelope)?;
                if !base.is_continuous() {
                    return Err(Error::InvalidParameter("reweighted base must be continuous".into()));
                }
                base.validate()
            }
        }
    }

    pub fn is_continuous(&self) -> bool {
        match self {
            Law::Degenerate { .. } | Law::FiniteDiscrete { .. } => false,
            Law::Shifted { base, .. } => base.is_continuous(),
            _ => true,
        }
    }

    /// Closed hull of the support.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Law::Exponential { .. } | Law::Gamma { .. } | Law::HyperExponential { .. } => (0.0, f64::INFINITY),
            Law::Uniform { lo, hi } => (*lo, *hi),
            Law::Beta { .. } => (0.0, 1.0),
            Law::Degenerate { point } => (*point, *point),
            Law::FiniteDiscrete { atoms, .. } => {
                let lo = atoms.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            Law::Shifted { base, offset } => {
                let (lo, hi) = base.support();
                (lo + offset, hi + offset)
            }
            Law::PowerSurvival { base, .. } | Law::Reweighted { base, .. } => base.support(),
        }
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        match self {
            Law::Degenerate { .. } | Law::FiniteDiscrete { .. } => Err(Error::Unsupported(
                "density query on a law without a Lebesgue density".into(),
            )),
            Law::Exponential { rate } => Ok(if x < 0.0 { 0.0 } else { rate * (-rate * x).exp() }),
            Law::HyperExponential { weights, rates } => Ok(if x < 0.0 {
                0.0
            } else {
                weights.iter().zip(rates).map(|(w, r)| w * r * (-r * x).exp()).sum()
            }),
            Law::Uniform { lo, hi } => Ok(if x < *lo || x > *hi { 0.0 } else { 1.0 / (hi - lo) }),
            Law::Shifted { base, offset } => base.pdf(x - offset),
            Law::PowerSurvival { base, exponent } => {
                let f = base.pdf(x)?;
                if f == 0.0 {
                    return Ok(0.0);
                }
                Ok(exponent * base.survival(x).powf(exponent - 1.0) * f)
            }
            Law::Reweighted { base, log_weight, .. } => {
                let f = base.pdf(x)?;
                if f == 0.0 {
                    return Ok(0.0);
                }
                Ok(f * log_weight.eval_x(x).exp())
            }
            _ => Ok(self.ln_pdf(x)?.exp()),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        match self {
            Law::Exponential { rate } => Ok(if x < 0.0 { f64::NEG_INFINITY } else { rate.ln() - rate * x }),
            Law::Gamma { rate, shape } => Ok(if x < 0.0 || (x == 0.0 && *shape > 1.0) {
                f64::NEG_INFINITY
            } else if x == 0.0 && *shape < 1.0 {
                f64::INFINITY
            } else {
                shape * rate.ln() + (shape - 1.0) * x.ln() - rate * x - ln_gamma(*shape)
            }),
            Law::Beta { p, q } => Ok(if !(0.0..=1.0).contains(&x) {
                f64::NEG_INFINITY
            } else {
                (p - 1.0) * x.ln() + (q - 1.0) * (1.0 - x).ln() - ln_beta(*p, *q)
            }),
            Law::Shifted { base, offset } => base.ln_pdf(x - offset),
            Law::Reweighted { base, log_weight, .. } => Ok(base.ln_pdf(x)? + log_weight.eval_x(x)),
            _ => Ok(self.pdf(x)?.ln()),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Law::Gamma { rate, shape } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_lr(*shape, rate * x)
                }
            }
            Law::Beta { p, q } => {
                if x <= 0.0 {
                    0.0
                } else if x >= 1.0 {
                    1.0
                } else {
                    beta_reg(*p, *q, x)
                }
            }
            Law::Degenerate { point } => {
                if x >= *point {
                    1.0
                } else {
                    0.0
                }
            }
            Law::FiniteDiscrete { atoms, weights } => {
                let s: f64 = atoms.iter().zip(weights).filter(|(a, _)| **a <= x).map(|(_, w)| w).sum();
                s.min(1.0)
            }
            Law::Shifted { base, offset } => base.cdf(x - offset),
            Law::Reweighted { .. } => self.reweighted_cdf(x),
            _ => 1.0 - self.survival(x),
        }
    }

    /// `P(X > x)`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    1.0
                } else {
                    (-rate * x).exp()
                }
            }
            Law::Gamma { rate, shape } => {
                if x <= 0.0 {
                    1.0
                } else {
                    gamma_ur(*shape, rate * x)
                }
            }
            Law::HyperExponential { weights, rates } => {
                if x <= 0.0 {
                    1.0
                } else {
                    weights.iter().zip(rates).map(|(w, r)| w * (-r * x).exp()).sum()
                }
            }
            Law::Uniform { lo, hi } => {
                if x <= *lo {
                    1.0
                } else if x >= *hi {
                    0.0
                } else {
                    (hi - x) / (hi - lo)
                }
            }
            Law::Shifted { base, offset } => base.survival(x - offset),
            Law::PowerSurvival { base, exponent } => base.survival(x).powf(*exponent),
            _ => 1.0 - self.cdf(x),
        }
    }

    pub fn ln_survival(&self, x: f64) -> f64 {
        match self {
            Law::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -rate * x
                }
            }
            Law::Shifted { base, offset } => base.ln_survival(x - offset),
            Law::PowerSurvival { base, exponent } => exponent * base.ln_survival(x),
            _ => self.survival(x).ln(),
        }
    }

    fn reweighted_cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let q = integrate_range(|y| self.pdf(y).unwrap_or(0.0), lo, x, 1.0, QuadOptions::default());
        q.map(|q| q.value.clamp(0.0, 1.0)).unwrap_or(f64::NAN)
    }

    pub fn mean(&self) -> Result<f64> {
        match self {
            Law::Exponential { rate } => Ok(1.0 / rate),
            Law::Gamma { rate, shape } => Ok(shape / rate),
            Law::HyperExponential { weights, rates } => Ok(weights.iter().zip(rates).map(|(w, r)| w / r).sum()),
            Law::Uniform { lo, hi } => Ok(0.5 * (lo + hi)),
            Law::Beta { p, q } => Ok(p / (p + q)),
            Law::Degenerate { point } => Ok(*point),
            Law::FiniteDiscrete { atoms, weights } => Ok(atoms.iter().zip(weights).map(|(a, w)| a * w).sum()),
            Law::Shifted { base, offset } => Ok(base.mean()? + offset),
            Law::PowerSurvival { base, exponent } => {
                let (lo, hi) = base.support();
                if lo < 0.0 {
                    return Err(Error::Unsupported("power-survival mean needs a nonnegative base".into()));
                }
                let scale = base.mean()?.max(1e-300);
                let q = integrate_range(|x| base.survival(x).powf(*exponent), lo, hi, scale, QuadOptions::default())?;
                Ok(lo + q.value)
            }
            Law::Reweighted { .. } => Ok(self.expect(|x| x)?.value),
        }
    }

    pub fn variance(&self) -> Result<f64> {
        match self {
            Law::Exponential { rate } => Ok(1.0 / (rate * rate)),
            Law::Gamma { rate, shape } => Ok(shape / (rate * rate)),
            Law::Uniform { lo, hi } => Ok((hi - lo).powi(2) / 12.0),
            Law::Beta { p, q } => Ok(p * q / ((p + q).powi(2) * (p + q + 1.0))),
            Law::Degenerate { .. } => Ok(0.0),
            Law::Shifted { base, .. } => base.variance(),
            _ => {
                let m = self.mean()?;
                Ok(self.expect(|x| (x - m) * (x - m))?.value)
            }
        }
    }

    /// `E[exp(r X)]`; errors when the transform diverges.
    pub fn mgf(&self, r: f64) -> Result<f64> {
        let diverges = || Error::Divergent(format!("moment generating function diverges at r = {r}"));
        match self {
            Law::Exponential { rate } => {
                if r < *rate {
                    Ok(rate / (rate - r))
                } else {
                    Err(diverges())
                }
            }
            Law::Gamma { rate, shape } => {
                if r < *rate {
                    Ok((rate / (rate - r)).powf(*shape))
                } else {
                    Err(diverges())
                }
            }
            Law::HyperExponential { weights, rates } => {
                if rates.iter().all(|b| r < *b) {
                    Ok(weights.iter().zip(rates).map(|(w, b)| w * b / (b - r)).sum())
                } else {
                    Err(diverges())
                }
            }
            Law::Uniform { lo, hi } => {
                if r == 0.0 {
                    Ok(1.0)
                } else {
                    Ok(((r * hi).exp() - (r * lo).exp()) / (r * (hi - lo)))
                }
            }
            Law::Degenerate { point } => Ok((r * point).exp()),
            Law::FiniteDiscrete { atoms, weights } => Ok(atoms.iter().zip(weights).map(|(a, w)| w * (r * a).exp()).sum()),
            Law::Shifted { base, offset } => Ok((r * offset).exp() * base.mgf(r)?),
            _ => {
                let q = self.expect(|x| (r * x).exp())?;
                if q.value.is_finite() {
                    Ok(q.value)
                } else {
                    Err(diverges())
                }
            }
        }
    }

    /// `∫ f dLaw`, exact for atomic laws and by quadrature otherwise.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<Quad> {
        self.expect_with(&mut f, QuadOptions::default())
    }

    pub fn expect_with(&self, f: &mut dyn FnMut(f64) -> f64, opts: QuadOptions) -> Result<Quad> {
        match self {
            Law::Degenerate { point } => Ok(Quad::exact(f(*point))),
            Law::FiniteDiscrete { atoms, weights } => {
                Ok(Quad::exact(atoms.iter().zip(weights).map(|(a, w)| w * f(*a)).sum()))
            }
            Law::Shifted { base, offset } => base.expect_with(&mut |y| f(y + offset), opts),
            _ => {
                let (lo, hi) = self.support();
                let scale = match self {
                    Law::Exponential { rate } => 1.0 / rate,
                    Law::Gamma { rate, shape } => shape.max(1.0) / rate,
                    Law::HyperExponential { weights, rates } => weights.iter().zip(rates).map(|(w, r)| w / r).sum(),
                    _ => 1.0,
                };
                // split at the scale point so the peak is resolved on both sides
                if hi.is_infinite() && lo.is_finite() {
                    let mid = lo + scale;
                    let mut g = |x: f64| {
                        let d = self.pdf(x).unwrap_or(0.0);
                        // an infinite density can only be hit at an endpoint
                        if d == 0.0 || d.is_infinite() {
                            0.0
                        } else {
                            f(x) * d
                        }
                    };
                    let a = integrate_range(&mut g, lo, mid, scale, opts)?;
                    let b = integrate_range(&mut g, mid, hi, scale, opts)?;
                    return Ok(Quad {
                        value: a.value + b.value,
                        abs_err: a.abs_err + b.abs_err,
                        evaluations: a.evaluations + b.evaluations,
                    });
                }
                integrate_range(
                    |x| {
                        let d = self.pdf(x).unwrap_or(0.0);
                        // an infinite density can only be hit at an endpoint
                        if d == 0.0 || d.is_infinite() {
                            0.0
                        } else {
                            f(x) * d
                        }
                    },
                    lo,
                    hi,
                    scale,
                    opts,
                )
            }
        }
    }

    /// Smallest `x` with `cdf(x) >= p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        match self {
            Law::Exponential { rate } => Ok(-(-p).ln_1p() / rate),
            Law::Uniform { lo, hi } => Ok(lo + p * (hi - lo)),
            Law::Degenerate { point } => Ok(*point),
            Law::FiniteDiscrete { atoms, weights } => {
                let mut idx: Vec<usize> = (0..atoms.len()).collect();
                idx.sort_by(|a, b| atoms[*a].total_cmp(&atoms[*b]));
                let mut acc = 0.0;
                for i in &idx {
                    acc += weights[*i];
                    if acc >= p - WEIGHT_TOL {
                        return Ok(atoms[*i]);
                    }
                }
                Ok(atoms[*idx.last().expect("validated non-empty")])
            }
            Law::Shifted { base, offset } => Ok(base.quantile(p)? + offset),
            Law::PowerSurvival { .. } => self.inverse_survival(1.0 - p),
            _ => self.bisect(|x| self.cdf(x) - p),
        }
    }

    /// `x` with `survival(x) = s`, accurate for small `s`.
    pub fn inverse_survival(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Domain(format!("probability {s} outside [0, 1]")));
        }
        match self {
            Law::Exponential { rate } => Ok(-s.ln() / rate),
            Law::Uniform { lo, hi } => Ok(hi - s * (hi - lo)),
            Law::Shifted { base, offset } => Ok(base.inverse_survival(s)? + offset),
            Law::PowerSurvival { base, exponent } => base.inverse_survival(s.powf(1.0 / exponent)),
            Law::Gamma { .. } | Law::HyperExponential { .. } => self.bisect(|x| s - self.survival(x)),
            _ => self.quantile(1.0 - s),
        }
    }

    fn bisect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        // g is nondecreasing in x; find its root on the support
        let (mut lo, hi) = self.support();
        let mut hi = if hi.is_finite() {
            hi
        } else {
            let mut h = lo.max(0.0) + self.mean().unwrap_or(1.0).abs().max(1e-12);
            let mut guard = 0;
            while g(h) < 0.0 {
                lo = h;
                h *= 2.0;
                guard += 1;
                if guard > 2000 {
                    return Err(Error::Domain("quantile bracket search failed".into()));
                }
            }
            h
        };
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Exponential { rate } => sample_exp(rng) / rate,
            Law::Gamma { rate, shape } => sample_standard_gamma(*shape, rng) / rate,
            Law::HyperExponential { weights, rates } => {
                let i = pick(weights, rng);
                sample_exp(rng) / rates[i]
            }
            Law::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Law::Beta { p, q } => {
                let x = sample_standard_gamma(*p, rng);
                let y = sample_standard_gamma(*q, rng);
                x / (x + y)
            }
            Law::Degenerate { point } => *point,
            Law::FiniteDiscrete { atoms, weights } => atoms[pick(weights, rng)],
            Law::Shifted { base, offset } => base.sample(rng) + offset,
            Law::PowerSurvival { .. } => {
                let u = open_unit(rng);
                self.inverse_survival(u).unwrap_or(f64::NAN)
            }
            Law::Reweighted { base, log_weight, envelope } => loop {
                let x = base.sample(rng);
                let accept = log_weight.eval_x(x).exp() / envelope;
                if rng.random::<f64>() < accept {
                    return x;
                }
            },
        }
    }
}

/// Uniform on `(0, 1]`.
pub(crate) fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Standard exponential by inversion.
pub(crate) fn sample_exp<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -open_unit(rng).ln()
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Marsaglia–Tsang, with the `U^(1/a)` boost for shape below one.
fn sample_standard_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape < 1.0 {
        let g = sample_standard_gamma(shape + 1.0, rng);
        return g * open_unit(rng).powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open_unit(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `dExp(rate)/dK (w)`, the likelihood ratio of an exponential law against an
/// interarrival kernel.
pub fn rn_exp_over_kernel(kernel: &Law, rate: f64, w: f64) -> Result<f64> {
    Ok(ln_rn_exp_over_kernel(kernel, rate, w)?.exp())
}

pub fn ln_rn_exp_over_kernel(kernel: &Law, rate: f64, w: f64) -> Result<f64> {
    let ln_k = kernel.ln_pdf(w)?;
    if ln_k == f64::NEG_INFINITY || ln_k.is_nan() {
        return Err(Error::SingularDensity { w });
    }
    Ok((rate.ln() - rate * w) - ln_k)
}
