//! Premium calculation principles.
//!
//! `p(P,θ) = E[X₁]/E[W₁|θ]` is the long-run payout rate given `θ`; its
//! mixture over `Θ` is `p(P)`. Under a tilt the same quantities computed with
//! the tilted laws give `p(Q,θ)` and `p(Q)`.

use serde::Serialize;

use crate::dist::Law;
use crate::error::{Error, Result};
use crate::model::{RiskModel, Theta};
use crate::quad::{integrate_range, Quad, QuadOptions};
use crate::tilt::{q_model, Direction, Tilt};

/// Relative agreement required between the two routes to `p(Q,θ)`.
pub const ROUTE_TOL: f64 = 1e-8;

/// Points per mixing coordinate in premium grids.
pub const GRID_POINTS: usize = 64;

pub fn conditional_premium_density(model: &RiskModel, theta: Theta) -> Result<f64> {
    let p = model.claims.mean()? / model.conditional_mean_interarrival(theta)?;
    if p.is_finite() && p > 0.0 {
        Ok(p)
    } else {
        Err(Error::Domain(format!("p(P, θ) = {p} at θ = {theta:?}")))
    }
}

pub fn mixed_premium_density(model: &RiskModel) -> Result<Quad> {
    let mean_x = model.claims.mean()?;
    let q = model
        .mixing
        .expect(|th| mean_x / model.conditional_mean_interarrival(th).unwrap_or(f64::NAN))
        .map_err(|e| Error::Divergent(format!("mixed premium density: {e}")))?;
    Ok(q)
}

/// `E_P[X₁ e^{γ(X₁)}]`, the tilted claim mean computed on the original law.
pub fn tilted_claim_mean(model: &RiskModel, tilt: &Tilt) -> Result<Quad> {
    let claims = &model.claims;
    claims
        .expect(|x| x * tilt.gamma.eval(claims, x).exp())
        .map_err(|e| Error::Divergent(format!("E[X e^γ] does not converge: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QPremium {
    /// `E_P[X₁e^{γ}]·e^{α(θ)}/E_P[W₁|θ]`.
    pub p_side: f64,
    /// `ρ(θ)·E_Q[X₁]`.
    pub q_side: f64,
}

impl QPremium {
    pub fn relative_gap(&self) -> f64 {
        (self.p_side - self.q_side).abs() / self.p_side.abs().max(self.q_side.abs())
    }
}

pub fn q_premium_routes(model: &RiskModel, tilt: &Tilt, theta: Theta) -> Result<QPremium> {
    let tilted_mean = tilted_claim_mean(model, tilt)?.value;
    let mean_w = model.conditional_mean_interarrival(theta)?;
    let rho = tilt.rho_at(theta);
    let alpha = rho.ln() + mean_w.ln();
    let p_side = tilted_mean * alpha.exp() / mean_w;
    let q_claims = q_model(model, tilt)?.claims;
    let q_side = rho * q_claims.mean()?;
    Ok(QPremium { p_side, q_side })
}

/// `p(Q,θ)`, after checking that both routes agree.
pub fn q_premium(model: &RiskModel, tilt: &Tilt, theta: Theta) -> Result<f64> {
    let r = q_premium_routes(model, tilt, theta)?;
    if r.relative_gap() > ROUTE_TOL {
        return Err(Error::Domain(format!(
            "p(Q, θ) routes disagree: {} (tilted integral) vs {} (tilted mean)",
            r.p_side, r.q_side
        )));
    }
    Ok(r.p_side)
}

/// `p(Q) = E_Q[p(Q,Θ)] = E_P[ξ(Θ)·p(Q,Θ)]`.
pub fn mixed_q_premium(model: &RiskModel, tilt: &Tilt) -> Result<Quad> {
    let m = tilted_claim_mean(model, tilt)?;
    let q = model
        .mixing
        .expect(|th| tilt.xi.eval_theta(th) * tilt.rho_at(th))
        .map_err(|e| Error::Divergent(format!("mixed Q-premium: {e}")))?;
    Ok(Quad { value: m.value * q.value, abs_err: m.value * q.abs_err + q.value * m.abs_err, evaluations: q.evaluations })
}

/// Wang's risk-adjusted premium `π_c = ∫₀^∞ F̄(x)^{1/c} dx`.
pub fn wang_premium(claims: &Law, c: f64) -> Result<Quad> {
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("the risk-adjusted premium needs c ≥ 1, got {c}")));
    }
    let (lo, hi) = claims.support();
    if lo < 0.0 {
        return Err(Error::Unsupported("the risk-adjusted premium needs nonnegative claims".into()));
    }
    let e = 1.0 / c;
    match claims {
        Law::Degenerate { point } => return Ok(Quad::exact(*point)),
        Law::FiniteDiscrete { atoms, .. } => {
            let mut xs = atoms.clone();
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            let mut v = xs[0];
            for w in xs.windows(2) {
                v += (w[1] - w[0]) * claims.survival(w[0]).powf(e);
            }
            return Ok(Quad::exact(v));
        }
        _ => {}
    }
    let scale = claims.mean()?.max(f64::MIN_POSITIVE);
    let opts = QuadOptions::default();
    let q = integrate_range(|x| claims.survival(x).powf(e), lo, hi, scale * c, opts)
        .map_err(|err| Error::Divergent(format!("∫ F̄^(1/c) does not converge for c = {c}: {err}")))?;
    Ok(Quad { value: lo + q.value, ..q })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `p(P) < p(Q)` (strictly, beyond numerical error).
    Less,
    Equal,
    Greater,
    /// Pointwise comparisons go both ways.
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub theta: Theta,
    pub p_p: f64,
    pub p_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PremiumReport {
    pub label: String,
    pub grid: Vec<GridRow>,
    pub mixed_p: f64,
    pub mixed_p_err: f64,
    pub mixed_q: f64,
    pub mixed_q_err: f64,
    pub pointwise: Verdict,
    pub mixed: Verdict,
    /// The mixed ordering the theory predicts, when it predicts one.
    pub expected_mixed: Option<Verdict>,
    /// Declared monotonicity matched finite differences on the grid.
    pub monotone_consistent: Option<bool>,
    pub counterexample: bool,
    pub pass: bool,
}

fn pointwise_verdict(rows: &[GridRow]) -> Verdict {
    let tol = |r: &GridRow| 1e-12 * r.p_p.abs().max(r.p_q.abs());
    let less = rows.iter().all(|r| r.p_q - r.p_p > tol(r));
    let greater = rows.iter().all(|r| r.p_p - r.p_q > tol(r));
    let equal = rows.iter().all(|r| (r.p_p - r.p_q).abs() <= tol(r));
    if less {
        Verdict::Less
    } else if greater {
        Verdict::Greater
    } else if equal {
        Verdict::Equal
    } else {
        Verdict::Mixed
    }
}

fn is_monotone(values: &[f64], dir: Direction) -> bool {
    values.windows(2).all(|w| match dir {
        Direction::Increasing => w[1] >= w[0],
        Direction::Decreasing => w[1] <= w[0],
    })
}

/// Pointwise and mixed comparison of `p(P,·)` with `p(Q,·)`.
///
/// With one-dimensional mixing and `p(Q,·)`, `ξ` declared monotone in the
/// same direction, the mixed ordering `p(P) ≤ p(Q)` is expected. A tilt
/// flagged as a counterexample is expected to reverse it.
pub fn ordering_report(model: &RiskModel, tilt: &Tilt, grid: &[Theta]) -> Result<PremiumReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty θ grid".into()));
    }
    let tilted_mean = tilted_claim_mean(model, tilt)?.value;
    let q_claims_mean = q_model(model, tilt)?.claims.mean()?;
    let mean_x = model.claims.mean()?;
    let mut rows = Vec::with_capacity(grid.len());
    for th in grid {
        let mean_w = model.conditional_mean_interarrival(*th)?;
        let rho = tilt.rho_at(*th);
        let p_q = tilted_mean * (rho.ln() + mean_w.ln()).exp() / mean_w;
        let gap = (p_q - rho * q_claims_mean).abs() / p_q.abs();
        if gap > ROUTE_TOL {
            return Err(Error::Domain(format!("p(Q, θ) routes disagree by {gap:.3e} at θ = {th:?}")));
        }
        rows.push(GridRow { theta: *th, p_p: mean_x / mean_w, p_q });
    }
    let pointwise = pointwise_verdict(&rows);
    let mp = mixed_premium_density(model)?;
    let mq = mixed_q_premium(model, tilt)?;
    let err = 10.0 * (mp.abs_err + mq.abs_err);
    let mixed = if mq.value - mp.value > err {
        Verdict::Less
    } else if mp.value - mq.value > err {
        Verdict::Greater
    } else {
        Verdict::Equal
    };

    let one_dim = model.mixing.dim() == 1;
    let monotone_consistent = tilt.monotone.filter(|_| one_dim).map(|mono| {
        let mut sorted = rows.clone();
        sorted.sort_by(|a, b| a.theta[0].total_cmp(&b.theta[0]));
        let pq: Vec<f64> = sorted.iter().map(|r| r.p_q).collect();
        let xi: Vec<f64> = sorted.iter().map(|r| tilt.xi.eval_theta(r.theta)).collect();
        is_monotone(&pq, mono.q_premium) && is_monotone(&xi, mono.xi)
    });
    let expected_mixed = if tilt.counterexample {
        Some(Verdict::Greater)
    } else {
        match tilt.monotone {
            Some(m) if one_dim && m.q_premium == m.xi && pointwise == Verdict::Less => Some(Verdict::Less),
            _ if pointwise == Verdict::Equal => Some(Verdict::Equal),
            _ => None,
        }
    };
    let pass = match expected_mixed {
        // the association argument gives p(P) ≤ p(Q); a strict gap is the usual case
        Some(Verdict::Less) => mixed != Verdict::Greater,
        Some(v) => mixed == v,
        None => true,
    } && monotone_consistent.unwrap_or(true);
    Ok(PremiumReport {
        label: tilt.label.clone(),
        grid: rows,
        mixed_p: mp.value,
        mixed_p_err: mp.abs_err,
        mixed_q: mq.value,
        mixed_q_err: mq.abs_err,
        pointwise,
        mixed,
        expected_mixed,
        monotone_consistent,
        counterexample: tilt.counterexample,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Kernel, Mixing};

    #[test]
    fn wang_uniform_closed_form() {
        let q = wang_premium(&Law::Uniform { lo: 0.0, hi: 1.0 }, 2.0).unwrap();
        assert!((q.value - 2.0 / 3.0).abs() < 1e-10, "{q:?}");
    }

    #[test]
    fn wang_at_one_is_the_mean() {
        for law in [Law::Exponential { rate: 2.0 }, Law::Gamma { rate: 1.0, shape: 2.0 }, Law::Beta { p: 2.0, q: 3.0 }] {
            let q = wang_premium(&law, 1.0).unwrap();
            assert!((q.value - law.mean().unwrap()).abs() < 1e-10, "{law:?}");
        }
        let d = Law::FiniteDiscrete { atoms: vec![1.0, 3.0], weights: vec![0.5, 0.5] };
        assert_eq!(wang_premium(&d, 1.0).unwrap().value, 2.0);
        assert!(wang_premium(&Law::Exponential { rate: 1.0 }, 0.5).is_err());
    }

    #[test]
    fn degenerate_claims_unit_kernel() {
        let model = RiskModel::new(Mixing::fixed(1.0), Kernel::exponential_theta(), Law::Degenerate { point: 1.0 }).unwrap();
        assert_eq!(conditional_premium_density(&model, [1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mixed_premium_density(&model).unwrap().value, 1.0);
    }

    #[test]
    fn identity_tilt_gives_equality() {
        let model = RiskModel::new(
            Mixing::single(Law::Gamma { rate: 2.0, shape: 3.0 }),
            Kernel::exponential_theta(),
            Law::Exponential { rate: 1.0 },
        )
        .unwrap();
        let tilt = Tilt::identity(&model);
        let grid = model.mixing.quantile_grid(GRID_POINTS).unwrap();
        let rep = ordering_report(&model, &tilt, &grid).unwrap();
        assert_eq!(rep.pointwise, Verdict::Equal);
        assert_eq!(rep.mixed, Verdict::Equal);
        assert!(rep.pass);
    }
}
