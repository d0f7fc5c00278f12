//! Risk models and path simulation.
//!
//! A model draws `Θ` from the mixing law, then i.i.d. interarrivals from
//! `K(Θ)` and i.i.d. claims independent of both.

use rand::Rng;

use crate::dist::Law;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad::{Quad, QuadOptions};

/// Parameter point; unused coordinates are zero.
pub type Theta = [f64; 2];

/// Hard cap on claims per path.
pub const RUNAWAY_CAP: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Mixing {
    /// Independent one-dimensional laws, one per coordinate (`d` = 1 or 2).
    Product(Vec<Law>),
    /// Density `exp(log_weight(θ))` relative to `base`, sampled by rejection
    /// with `exp(log_weight) <= envelope`.
    Reweighted { base: Box<Mixing>, log_weight: Expr, envelope: f64 },
}

impl Mixing {
    pub fn single(law: Law) -> Mixing {
        Mixing::Product(vec![law])
    }

    pub fn fixed(theta: f64) -> Mixing {
        Mixing::Product(vec![Law::degenerate(theta)])
    }

    pub fn dim(&self) -> usize {
        match self {
            Mixing::Product(laws) => laws.len(),
            Mixing::Reweighted { base, .. } => base.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Mixing::Product(laws) => {
                if laws.is_empty() || laws.len() > 2 {
                    return Err(Error::ModelValidation(format!(
                        "mixing dimension must be 1 or 2, got {}",
                        laws.len()
                    )));
                }
                laws.iter().try_for_each(Law::validate)
            }
            Mixing::Reweighted { base, envelope, .. } => {
                if !(*envelope > 0.0 && envelope.is_finite()) {
                    return Err(Error::InvalidParameter("mixing envelope must be positive".into()));
                }
                base.validate()
            }
        }
    }

    pub fn is_degenerate(&self) -> bool {
        match self {
            Mixing::Product(laws) => laws.iter().all(|l| matches!(l, Law::Degenerate { .. })),
            Mixing::Reweighted { base, .. } => base.is_degenerate(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Theta {
        match self {
            Mixing::Product(laws) => {
                let mut th = [0.0; 2];
                for (slot, law) in th.iter_mut().zip(laws) {
                    *slot = law.sample(rng);
                }
                th
            }
            Mixing::Reweighted { base, log_weight, envelope } => loop {
                let th = base.sample(rng);
                if rng.random::<f64>() < log_weight.eval_theta(th).exp() / envelope {
                    return th;
                }
            },
        }
    }

    /// `E[f(Θ)]` by (nested) quadrature.
    pub fn expect<F: Fn(Theta) -> f64>(&self, f: F) -> Result<Quad> {
        self.expect_with(&f, QuadOptions::default())
    }

    pub fn expect_with(&self, f: &dyn Fn(Theta) -> f64, opts: QuadOptions) -> Result<Quad> {
        match self {
            Mixing::Product(laws) => match laws.as_slice() {
                [a] => a.expect_with(&mut |x| f([x, 0.0]), opts),
                [a, b] => {
                    let mut inner_err = 0.0f64;
                    let mut failure = None;
                    let outer = a.expect_with(
                        &mut |x| match b.expect_with(&mut |y| f([x, y]), opts) {
                            Ok(q) => {
                                inner_err = inner_err.max(q.abs_err);
                                q.value
                            }
                            Err(e) => {
                                failure.get_or_insert(e);
                                f64::NAN
                            }
                        },
                        opts,
                    );
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    let outer = outer?;
                    Ok(Quad { abs_err: outer.abs_err + inner_err, ..outer })
                }
                _ => Err(Error::ModelValidation("mixing dimension must be 1 or 2".into())),
            },
            Mixing::Reweighted { base, log_weight, .. } => {
                base.expect_with(&|th| f(th) * log_weight.eval_theta(th).exp(), opts)
            }
        }
    }

    /// `m` quantile-spaced points per coordinate between the 0.001 and 0.999
    /// quantiles (cartesian product for `d` = 2). Atomic coordinates collapse
    /// to their distinct atoms.
    pub fn quantile_grid(&self, m: usize) -> Result<Vec<Theta>> {
        match self {
            Mixing::Product(laws) => {
                let mut axes = Vec::with_capacity(laws.len());
                for law in laws {
                    let mut axis = Vec::with_capacity(m);
                    for i in 0..m {
                        let p = if m == 1 { 0.5 } else { 0.001 + 0.998 * i as f64 / (m - 1) as f64 };
                        axis.push(law.quantile(p)?);
                    }
                    axis.dedup();
                    axes.push(axis);
                }
                Ok(match axes.as_slice() {
                    [a] => a.iter().map(|x| [*x, 0.0]).collect(),
                    [a, b] => a.iter().flat_map(|x| b.iter().map(move |y| [*x, *y])).collect(),
                    _ => return Err(Error::ModelValidation("mixing dimension must be 1 or 2".into())),
                })
            }
            Mixing::Reweighted { base, .. } => base.quantile_grid(m),
        }
    }
}

/// The interarrival kernel `θ ↦ K(θ)`, with parameters given as expressions
/// in `θ`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    Exponential { rate: Expr },
    Gamma { rate: Expr, shape: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<Expr> },
}

impl Kernel {
    pub fn exponential_theta() -> Kernel {
        Kernel::Exponential { rate: Expr::parse("theta").expect("valid expression") }
    }

    pub fn at(&self, theta: Theta) -> Result<Law> {
        let law = match self {
            Kernel::Exponential { rate } => Law::Exponential { rate: rate.eval_theta(theta) },
            Kernel::Gamma { rate, shape } => Law::Gamma { rate: rate.eval_theta(theta), shape: *shape },
            Kernel::HyperExponential { weights, rates } => Law::HyperExponential {
                weights: weights.clone(),
                rates: rates.iter().map(|r| r.eval_theta(theta)).collect(),
            },
        };
        law.validate()
            .map_err(|e| Error::ModelValidation(format!("kernel at θ = {theta:?}: {e}")))?;
        Ok(law)
    }

    /// `E[W₁ | Θ = θ]` as an expression in `θ`.
    pub fn mean_expr(&self) -> Expr {
        match self {
            Kernel::Exponential { rate } => rate.recip(),
            Kernel::Gamma { rate, shape } => Expr::constant(*shape).div(rate),
            Kernel::HyperExponential { weights, rates } => {
                let mut terms = weights.iter().zip(rates).map(|(w, r)| Expr::constant(*w).div(r));
                let first = terms.next().expect("validated non-empty");
                terms.fold(first, |acc, t| acc.add(&t))
            }
        }
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Kernel::Exponential { .. })
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            Kernel::Exponential { rate } | Kernel::Gamma { rate, .. } => rate.theta_dim(),
            Kernel::HyperExponential { rates, .. } => rates.iter().map(Expr::theta_dim).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskModel {
    pub mixing: Mixing,
    pub kernel: Kernel,
    pub claims: Law,
}

impl RiskModel {
    pub fn new(mixing: Mixing, kernel: Kernel, claims: Law) -> Result<RiskModel> {
        let m = RiskModel { mixing, kernel, claims };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.mixing.validate()?;
        self.claims.validate()?;
        if self.kernel.theta_dim() > self.mixing.dim() {
            return Err(Error::ModelValidation(format!(
                "kernel uses θ of dimension {} but the mixing law has dimension {}",
                self.kernel.theta_dim(),
                self.mixing.dim()
            )));
        }
        let (lo, _) = self.claims.support();
        if lo < 0.0 {
            return Err(Error::ModelValidation("claims must be nonnegative".into()));
        }
        let atom_at_zero = match &self.claims {
            Law::Degenerate { point } => *point <= 0.0,
            Law::FiniteDiscrete { atoms, weights } => atoms.iter().zip(weights).any(|(a, w)| *a <= 0.0 && *w > 0.0),
            _ => false,
        };
        if atom_at_zero {
            return Err(Error::ModelValidation("claims may not have mass at 0".into()));
        }
        for theta in self.mixing.quantile_grid(16)? {
            let law = self.kernel.at(theta)?;
            if law.support().0 < 0.0 {
                return Err(Error::ModelValidation("interarrival kernel must live on (0, ∞)".into()));
            }
            self.conditional_mean_interarrival(theta)?;
        }
        Ok(())
    }

    /// `E[W₁ | Θ = θ]`.
    pub fn conditional_mean_interarrival(&self, theta: Theta) -> Result<f64> {
        let m = self.kernel.at(theta)?.mean()?;
        if m > 0.0 && m.is_finite() {
            Ok(m)
        } else {
            Err(Error::ModelValidation(format!("conditional mean interarrival {m} at θ = {theta:?}")))
        }
    }

    pub fn simulate_path<R: Rng + ?Sized>(&self, stop: StopRule, rng: &mut R) -> Result<Path> {
        let theta = self.mixing.sample(rng);
        self.simulate_given(theta, stop, rng)
    }

    /// Simulate with `Θ` fixed (the conditional model).
    pub fn simulate_given<R: Rng + ?Sized>(&self, theta: Theta, stop: StopRule, rng: &mut R) -> Result<Path> {
        match stop {
            StopRule::Horizon(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(Error::InvalidParameter(format!("horizon must be positive, got {t}")))
            }
            StopRule::Claims(0) => return Err(Error::InvalidParameter("claim count must be positive".into())),
            _ => {}
        }
        let kernel = self.kernel.at(theta)?;
        let mut path = Path {
            theta,
            arrivals: Vec::new(),
            interarrivals: Vec::new(),
            claims: Vec::new(),
            cum_claims: Vec::new(),
            stop,
            next_arrival: None,
        };
        let mut now = 0.0;
        let mut total = 0.0;
        loop {
            if let StopRule::Claims(n) = stop {
                if path.arrivals.len() >= n {
                    break;
                }
            }
            if path.arrivals.len() >= RUNAWAY_CAP {
                return Err(Error::Runaway { cap: RUNAWAY_CAP });
            }
            let w = kernel.sample(rng);
            now += w;
            if let StopRule::Horizon(t) = stop {
                if now > t {
                    path.next_arrival = Some(now);
                    break;
                }
            }
            let x = self.claims.sample(rng);
            total += x;
            path.interarrivals.push(w);
            path.arrivals.push(now);
            path.claims.push(x);
            path.cum_claims.push(total);
        }
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Simulate until the first arrival after `t`.
    Horizon(f64),
    /// Simulate exactly this many claims.
    Claims(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub theta: Theta,
    /// Claim epochs `T₁ < T₂ < …`.
    pub arrivals: Vec<f64>,
    /// Interarrivals as drawn; `arrivals` are their running sums.
    pub interarrivals: Vec<f64>,
    pub claims: Vec<f64>,
    cum_claims: Vec<f64>,
    pub stop: StopRule,
    /// For horizon-stopped paths, the first arrival after the horizon.
    pub next_arrival: Option<f64>,
}

impl Path {
    /// Build a path from raw arrays (interarrivals are recomputed from the
    /// arrival epochs).
    pub fn from_parts(theta: Theta, arrivals: Vec<f64>, claims: Vec<f64>, stop: StopRule) -> Result<Path> {
        if arrivals.len() != claims.len() {
            return Err(Error::InvalidParameter("arrivals and claims differ in length".into()));
        }
        let mut prev = 0.0;
        let mut interarrivals = Vec::with_capacity(arrivals.len());
        for a in &arrivals {
            if !(*a > prev) {
                return Err(Error::InvalidParameter("arrivals must be strictly increasing and positive".into()));
            }
            interarrivals.push(a - prev);
            prev = *a;
        }
        let mut total = 0.0;
        let cum_claims = claims
            .iter()
            .map(|x| {
                total += x;
                total
            })
            .collect();
        Ok(Path { theta, arrivals, interarrivals, claims, cum_claims, stop, next_arrival: None })
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    /// Largest time at which the path is complete.
    pub fn horizon(&self) -> f64 {
        match self.stop {
            StopRule::Horizon(t) => t,
            StopRule::Claims(_) => self.arrivals.last().copied().unwrap_or(0.0),
        }
    }

    fn check_window(&self, t: f64) -> Result<()> {
        let covered = self.horizon();
        if t < 0.0 || t > covered || t.is_nan() {
            Err(Error::OutOfWindow { t, covered })
        } else {
            Ok(())
        }
    }

    /// `N_t = #{j : T_j ≤ t}`.
    pub fn count_at(&self, t: f64) -> Result<usize> {
        self.check_window(t)?;
        Ok(self.arrivals.partition_point(|a| *a <= t))
    }

    /// `S_t = Σ_{j ≤ N_t} X_j`.
    pub fn aggregate_at(&self, t: f64) -> Result<f64> {
        let n = self.count_at(t)?;
        Ok(if n == 0 { 0.0 } else { self.cum_claims[n - 1] })
    }

    /// `S` after the first `n` claims.
    pub fn aggregate_after(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.cum_claims[n - 1]
        }
    }

    /// `t − T_{N_t}`.
    pub fn residual_at(&self, t: f64) -> Result<f64> {
        let n = self.count_at(t)?;
        Ok(if n == 0 { t } else { t - self.arrivals[n - 1] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{path_rng, Stream};

    fn poisson_model() -> RiskModel {
        RiskModel::new(
            Mixing::single(Law::Gamma { rate: 2.0, shape: 3.0 }),
            Kernel::exponential_theta(),
            Law::Exponential { rate: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn degenerate_mixing_fixes_theta() {
        let m = RiskModel::new(Mixing::fixed(1.7), Kernel::exponential_theta(), Law::Exponential { rate: 1.0 }).unwrap();
        let mut rng = path_rng(1, Stream::P, 0);
        for _ in 0..20 {
            assert_eq!(m.simulate_path(StopRule::Horizon(3.0), &mut rng).unwrap().theta[0], 1.7);
        }
    }

    #[test]
    fn claim_count_stop() {
        let mut rng = path_rng(2, Stream::P, 0);
        let p = poisson_model().simulate_path(StopRule::Claims(5), &mut rng).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.claims.len(), 5);
        assert!(p.next_arrival.is_none());
        assert_eq!(p.horizon(), p.arrivals[4]);
    }

    #[test]
    fn horizon_stop_keeps_overshoot() {
        let mut rng = path_rng(3, Stream::P, 0);
        let p = poisson_model().simulate_path(StopRule::Horizon(4.0), &mut rng).unwrap();
        assert!(p.arrivals.iter().all(|a| *a <= 4.0));
        assert!(p.next_arrival.unwrap() > 4.0);
        assert!(matches!(p.count_at(4.5), Err(Error::OutOfWindow { .. })));
    }

    #[test]
    fn counting_and_aggregation() {
        let p = Path::from_parts([1.0, 0.0], vec![0.5, 1.0, 2.5], vec![1.0, 2.0, 4.0], StopRule::Claims(3)).unwrap();
        assert_eq!(p.count_at(0.0).unwrap(), 0);
        assert_eq!(p.count_at(1.0).unwrap(), 2);
        assert_eq!(p.count_at(0.99).unwrap(), 1);
        assert_eq!(p.aggregate_at(0.0).unwrap(), 0.0);
        assert_eq!(p.aggregate_at(2.5).unwrap(), 7.0);
        assert_eq!(p.residual_at(2.0).unwrap(), 1.0);
        assert!(Path::from_parts([0.0; 2], vec![1.0, 1.0], vec![1.0, 1.0], StopRule::Claims(2)).is_err());
    }

    #[test]
    fn conditional_means() {
        let m = poisson_model();
        assert!((m.conditional_mean_interarrival([2.0, 0.0]).unwrap() - 0.5).abs() < 1e-15);
        let g = RiskModel::new(
            Mixing::single(Law::Gamma { rate: 3.0, shape: 3.0 }),
            Kernel::Gamma { rate: Expr::parse("theta").unwrap(), shape: 1.2 },
            Law::Exponential { rate: 1.0 },
        )
        .unwrap();
        assert!((g.conditional_mean_interarrival([2.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn rejects_claim_atom_at_zero() {
        let r = RiskModel::new(Mixing::fixed(1.0), Kernel::exponential_theta(), Law::Degenerate { point: 0.0 });
        assert!(matches!(r, Err(Error::ModelValidation(_))));
    }

    #[test]
    fn product_mixing_expectation() {
        let mix = Mixing::Product(vec![
            Law::shifted(Law::Gamma { rate: 1.0, shape: 2.0 }, 1.0),
            Law::shifted(Law::Gamma { rate: 1.0, shape: 2.0 }, 1.0),
        ]);
        let q = mix.expect(|th| th[0] * th[1]).unwrap();
        assert!((q.value - 9.0).abs() < 1e-8, "{q:?}");
        assert_eq!(mix.quantile_grid(8).unwrap().len(), 64);
    }
}
