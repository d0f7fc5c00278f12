//! Reserve processes and ruin probabilities.
//!
//! Ruin means the reserve `u + c(θ)t − S_t` drops strictly below zero. The
//! premium rate is positive, so the reserve only falls at claim instants and
//! checking those suffices.

use serde::Serialize;

use crate::dist::{sample_exp, Law};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::model::{Mixing, Path, RiskModel, StopRule, Theta};
use crate::premium::tilted_claim_mean;
use crate::quad::Quad;
use crate::rng::{path_rng, Stream};
use crate::stats::{CompensatedSum, Estimate};
use crate::diagnostics::McConfig;
use crate::tilt::{q_model, PathDensity, Tilt};

pub const DEFAULT_MAX_CLAIMS: usize = 100_000;

/// Relative tolerance between the two algebraic forms of the IS weight.
pub const FORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RuinSpec {
    pub u: f64,
    /// Premium rate `θ ↦ c(θ)`.
    pub premium: Expr,
    pub max_claims: usize,
    /// Time horizon for the crude estimator.
    pub horizon: Option<f64>,
}

impl RuinSpec {
    pub fn new(u: f64, premium: Expr) -> RuinSpec {
        RuinSpec { u, premium, max_claims: DEFAULT_MAX_CLAIMS, horizon: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(Error::InvalidParameter(format!("initial reserve must be positive, got {}", self.u)));
        }
        if self.max_claims == 0 {
            return Err(Error::InvalidParameter("max_claims must be at least 1".into()));
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidParameter(format!("horizon must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// `u + c(θ)t − S_t`.
pub fn reserve_at(path: &Path, spec: &RuinSpec, t: f64) -> Result<f64> {
    let c = spec.premium.eval_theta(path.theta);
    Ok(spec.u + c * t - path.aggregate_at(t)?)
}

/// The first claim epoch at which the reserve is negative, with its index.
pub fn ruin_time(path: &Path, u: f64, c: f64) -> Option<(usize, f64)> {
    (0..path.len()).find_map(|j| {
        let reserve = u + c * path.arrivals[j] - path.aggregate_after(j + 1);
        (reserve < 0.0).then_some((j, path.arrivals[j]))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProfitClass {
    /// `c(θ) ≤ p(P,θ)` everywhere: ruin is certain.
    ViolatedAs,
    SatisfiedAs,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetProfitReport {
    pub margins: Vec<(Theta, f64)>,
    pub min_margin: f64,
    pub max_margin: f64,
    pub class: ProfitClass,
}

/// Margins `c(θ) − p(P,θ)` over a grid.
pub fn net_profit_report<C: Fn(Theta) -> f64>(model: &RiskModel, premium: C, grid: &[Theta]) -> Result<NetProfitReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty θ grid".into()));
    }
    let mean_x = model.claims.mean()?;
    let mut margins = Vec::with_capacity(grid.len());
    // margins within rounding of zero count as the boundary c = p, which is a violation
    let mut all_violated = true;
    let mut all_satisfied = true;
    for th in grid {
        let p = mean_x / model.conditional_mean_interarrival(*th)?;
        let margin = premium(*th) - p;
        let slack = 1e-12 * p.abs();
        all_violated &= margin <= slack;
        all_satisfied &= margin > slack;
        margins.push((*th, margin));
    }
    let min_margin = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    let max_margin = margins.iter().map(|m| m.1).fold(f64::NEG_INFINITY, f64::max);
    let class = if all_violated {
        ProfitClass::ViolatedAs
    } else if all_satisfied {
        ProfitClass::SatisfiedAs
    } else {
        ProfitClass::Mixed
    };
    Ok(NetProfitReport { margins, min_margin, max_margin, class })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RuinResult {
    pub u: f64,
    pub estimate: Estimate,
    pub ruined: usize,
    pub truncated: usize,
    /// Largest relative gap between the two forms of the IS weight.
    pub max_form_gap: f64,
    /// Truncated or finite-horizon estimates only bound `ψ(u)` from below.
    pub lower_bound: bool,
}

/// Fraction of `P`-paths ruined before the horizon.
pub fn ruin_prob_crude(model: &RiskModel, spec: &RuinSpec, cfg: McConfig) -> Result<RuinResult> {
    spec.validate()?;
    if cfg.n == 0 {
        return Err(Error::InvalidParameter("n_paths must be positive".into()));
    }
    let horizon = spec
        .horizon
        .ok_or_else(|| Error::InvalidParameter("the crude estimator needs a horizon".into()))?;
    let hits = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        let path = model.simulate_path(StopRule::Horizon(horizon), &mut rng)?;
        let c = spec.premium.eval_theta(path.theta);
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("premium rate {c} is not positive")));
        }
        Ok(if ruin_time(&path, spec.u, c).is_some() { 1.0 } else { 0.0 })
    })?;
    let ruined = hits.iter().filter(|h| **h > 0.0).count();
    let estimate = if hits.len() >= 2 {
        Estimate::from_samples(&hits, 0, cfg.seed)?
    } else {
        Estimate { value: hits[0], stderr: f64::NAN, n: 1, truncated: 0, seed: cfg.seed }
    };
    Ok(RuinResult { u: spec.u, estimate, ruined, truncated: 0, max_form_gap: 0.0, lower_bound: true })
}

/// The premium rate the importance-sampling identity requires:
/// `c(θ) = E_P[X₁e^{γ(X₁)}]·ρ(θ)`.
pub fn is_premium<'a>(model: &RiskModel, tilt: &'a Tilt) -> Result<impl Fn(Theta) -> f64 + Sync + 'a> {
    let m = tilted_claim_mean(model, tilt)?.value;
    Ok(move |th: Theta| m * tilt.rho_at(th))
}

struct IsPath {
    weight: f64,
    ruined: bool,
    gap: f64,
}

/// Infinite-horizon ruin probability by simulating under the tilted measure,
/// where ruin is certain, and averaging `1/M_τ` over ruined paths. Paths that
/// reach `max_claims` without ruin contribute zero.
pub fn ruin_prob_is(model: &RiskModel, tilt: &Tilt, u: f64, max_claims: usize, cfg: McConfig) -> Result<RuinResult> {
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidParameter(format!("initial reserve must be positive, got {u}")));
    }
    if max_claims == 0 {
        return Err(Error::InvalidParameter("max_claims must be at least 1".into()));
    }
    if cfg.n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 paths, got {}", cfg.n)));
    }
    let q = q_model(model, tilt)?;
    let premium = is_premium(model, tilt)?;
    let rows = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::Q, i as u64);
        let theta = q.mixing.sample(&mut rng);
        is_path(model, tilt, &q.claims, &premium, theta, u, max_claims, &mut rng)
    })?;
    let weights: Vec<f64> = rows.iter().map(|r| r.weight).collect();
    let ruined = rows.iter().filter(|r| r.ruined).count();
    let truncated = rows.len() - ruined;
    let max_form_gap = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    if max_form_gap > FORM_TOL {
        return Err(Error::Domain(format!(
            "the two forms of the importance weight differ by {max_form_gap:.3e} (relative)"
        )));
    }
    if 2 * truncated > rows.len() {
        return Err(Error::Unreliable(format!(
            "{truncated} of {} paths reached {max_claims} claims without ruin; the premium is too close to critical",
            rows.len()
        )));
    }
    let estimate = Estimate::from_samples(&weights, truncated, cfg.seed)?;
    Ok(RuinResult { u, estimate, ruined, truncated, max_form_gap, lower_bound: truncated > 0 })
}

#[allow(clippy::too_many_arguments)]
fn is_path<R: rand::Rng + ?Sized>(
    model: &RiskModel,
    tilt: &Tilt,
    q_claims: &Law,
    premium: &(dyn Fn(Theta) -> f64 + Sync),
    theta: Theta,
    u: f64,
    max_claims: usize,
    rng: &mut R,
) -> Result<IsPath> {
    let pd = PathDensity::new(model, tilt, theta)?;
    let c = premium(theta);
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("premium rate {c} at θ = {theta:?} is not positive")));
    }
    let rate = pd.rho;
    let mut gammas = CompensatedSum::new();
    let mut ratios = CompensatedSum::new();
    let mut now = 0.0;
    let mut total = 0.0;
    for n in 1..=max_claims {
        let w = sample_exp(rng) / rate;
        let x = q_claims.sample(rng);
        now += w;
        total += x;
        gammas.add(pd.gamma(x));
        ratios.add(pd.ln_ratio(w)?);
        if u + c * now - total < 0.0 {
            // 1/M_τ: the residual is zero at a claim epoch
            let (with_alpha, without) = pd.count_terms(n);
            let mut ln_m = CompensatedSum::new();
            ln_m.add(pd.ln_xi);
            ln_m.add(gammas.value());
            ln_m.add(with_alpha);
            ln_m.add(without);
            ln_m.add(pd.residual_term(0.0)?);
            ln_m.add(ratios.value());
            let reciprocal = (-ln_m.value()).exp();
            // (1/ξ)·exp(−Σ(γ + α) + Nα)·Π dK/dExp(W_j)
            let alpha_sum = n as f64 * pd.alpha();
            let mut lit = CompensatedSum::new();
            lit.add(-pd.ln_xi);
            lit.add(-(gammas.value() + alpha_sum));
            lit.add(alpha_sum);
            lit.add(-ratios.value());
            let literal = lit.value().exp();
            let scale = reciprocal.abs().max(literal.abs());
            let gap = if scale > 0.0 { (reciprocal - literal).abs() / scale } else { 0.0 };
            return Ok(IsPath { weight: reciprocal, ruined: true, gap });
        }
    }
    Ok(IsPath { weight: 0.0, ruined: false, gap: 0.0 })
}

/// Classical compound Poisson ruin probability with exponential claims:
/// `ψ(u) = λ/(cη)·exp(−(η − λ/c)u)`, and 1 when `c ≤ λ/η`.
pub fn cramer_lundberg(lambda: f64, eta: f64, c: f64, u: f64) -> f64 {
    if c <= lambda / eta {
        return 1.0;
    }
    lambda / (c * eta) * (-(eta - lambda / c) * u).exp()
}

/// `∫ ψ_θ(u) P_Θ(dθ)` for an exponential kernel with rate `λ(θ)`, `Exp(η)`
/// claims and premium `c(θ)`.
pub fn mixed_cramer_lundberg<L, C>(mixing: &Mixing, lambda: L, eta: f64, premium: C, u: f64) -> Result<Quad>
where
    L: Fn(Theta) -> f64,
    C: Fn(Theta) -> f64,
{
    mixing.expect(|th| cramer_lundberg(lambda(th), eta, premium(th), u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(arrivals: Vec<f64>, claims: Vec<f64>) -> Path {
        let n = arrivals.len();
        Path::from_parts([1.0, 0.0], arrivals, claims, StopRule::Claims(n)).unwrap()
    }

    #[test]
    fn reserve_basics() {
        let spec = RuinSpec::new(2.0, Expr::constant(1.5));
        let p = path(vec![1.0, 2.0], vec![0.5, 4.0]);
        assert_eq!(reserve_at(&p, &spec, 0.0).unwrap(), 2.0);
        assert_eq!(reserve_at(&p, &spec, 0.5).unwrap(), 2.75);
        assert_eq!(reserve_at(&p, &spec, 2.0).unwrap(), 2.0 + 3.0 - 4.5);
    }

    #[test]
    fn ruin_is_strict_and_at_claims() {
        let p = path(vec![1.0], vec![3.0]);
        assert_eq!(ruin_time(&p, 2.0, 1.0), None); // reserve exactly 0
        let p = path(vec![1.0, 2.0], vec![3.5, 0.1]);
        assert_eq!(ruin_time(&p, 2.0, 1.0), Some((0, 1.0)));
        assert_eq!(ruin_time(&path(vec![1.0], vec![1.0]), 1e9, 1.0), None);
    }

    #[test]
    fn cramer_lundberg_values() {
        assert!((cramer_lundberg(1.0, 1.0, 2.0, 1.0) - 0.5 * (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(cramer_lundberg(1.0, 1.0, 2.0, 0.0), 0.5);
        assert_eq!(cramer_lundberg(1.0, 1.0, 0.9, 3.0), 1.0);
        assert!(cramer_lundberg(1.0, 1.0, 1e12, 1.0) < 1e-11);
    }

    #[test]
    fn profit_classes() {
        let model = RiskModel::new(
            Mixing::single(Law::Gamma { rate: 2.0, shape: 2.0 }),
            crate::model::Kernel::exponential_theta(),
            Law::Exponential { rate: 1.0 },
        )
        .unwrap();
        let grid = model.mixing.quantile_grid(64).unwrap();
        assert_eq!(net_profit_report(&model, |th| th[0], &grid).unwrap().class, ProfitClass::ViolatedAs);
        assert_eq!(net_profit_report(&model, |_| 0.0, &grid).unwrap().class, ProfitClass::ViolatedAs);
        assert_eq!(net_profit_report(&model, |th| 1.2 * th[0], &grid).unwrap().class, ProfitClass::SatisfiedAs);
        assert_eq!(net_profit_report(&model, |_| 1.0, &grid).unwrap().class, ProfitClass::Mixed);
    }
}
