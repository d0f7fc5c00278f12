//! Progressively equivalent changes of measure.
//!
//! A tilt is a triple `(γ, ρ, ξ)`: the log density of the new claim law, the
//! new exponential interarrival rate as a function of `θ`, and the density of
//! the new mixing law. Under the new measure the aggregate claims process is a
//! compound mixed Poisson process.

use crate::dist::Law;
use crate::error::{Error, Result};
use crate::expr::{fmt_num, Expr};
use crate::model::{Kernel, Mixing, RiskModel, Theta};
use crate::model::Path;
use crate::quad::Quad;
use crate::rng::{path_rng, Stream};
use crate::stats::{mean_and_stderr, CompensatedSum};
use statrs::function::gamma::ln_gamma;

/// Log density `γ` of the tilted claim law with respect to the original one.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimTilt {
    Identity,
    /// `γ(x) = constant + log_coef·ln x + linear_coef·x`.
    LogAffine { constant: f64, log_coef: f64, linear_coef: f64 },
    /// `γ(x) = −ln c + (1/c − 1)·ln F̄(x)` with `F̄` the claim survival function.
    Wang { c: f64 },
    Expr(Expr),
}

impl ClaimTilt {
    pub fn eval(&self, claims: &Law, x: f64) -> f64 {
        match self {
            ClaimTilt::Identity => 0.0,
            ClaimTilt::LogAffine { constant, log_coef, linear_coef } => {
                let mut g = constant + linear_coef * x;
                if *log_coef != 0.0 {
                    g += log_coef * x.ln();
                }
                g
            }
            ClaimTilt::Wang { c } => -c.ln() + (1.0 / c - 1.0) * claims.ln_survival(x),
            ClaimTilt::Expr(e) => e.eval_x(x),
        }
    }

    fn as_expr(&self) -> Option<Expr> {
        match self {
            ClaimTilt::Identity => Some(Expr::constant(0.0)),
            ClaimTilt::LogAffine { constant, log_coef, linear_coef } => Expr::parse(&format!(
                "{} + {} * ln(x) + {} * x",
                fmt_num(*constant),
                fmt_num(*log_coef),
                fmt_num(*linear_coef)
            ))
            .ok(),
            ClaimTilt::Wang { .. } => None,
            ClaimTilt::Expr(e) => Some(e.clone()),
        }
    }

    /// The tilted claim law when it has a closed form.
    pub fn closed_form(&self, claims: &Law) -> Option<Law> {
        match (self, claims) {
            (ClaimTilt::Identity, _) => Some(claims.clone()),
            (ClaimTilt::LogAffine { log_coef, linear_coef, .. }, Law::Exponential { rate }) => {
                gamma_or_exp(rate - linear_coef, 1.0 + log_coef)
            }
            (ClaimTilt::LogAffine { log_coef, linear_coef, .. }, Law::Gamma { rate, shape }) => {
                gamma_or_exp(rate - linear_coef, shape + log_coef)
            }
            (ClaimTilt::Wang { c }, _) if claims.is_continuous() => {
                Some(Law::PowerSurvival { base: Box::new(claims.clone()), exponent: 1.0 / c })
            }
            _ => None,
        }
    }
}

fn gamma_or_exp(rate: f64, shape: f64) -> Option<Law> {
    if !(rate > 0.0 && shape > 0.0) {
        return None;
    }
    Some(if shape == 1.0 { Law::Exponential { rate } } else { Law::Gamma { rate, shape } })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Monotonicity of `θ ↦ p(Q,θ)` and of `ξ`, declared by the builder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Monotonicity {
    pub q_premium: Direction,
    pub xi: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tilt {
    pub label: String,
    pub gamma: ClaimTilt,
    /// `θ ↦ ρ(θ)`, the interarrival rate under the new measure.
    pub rho: Expr,
    /// `θ ↦ ξ(θ)`, the mixing density ratio.
    pub xi: Expr,
    pub q_claims: Option<Law>,
    pub q_mixing: Option<Mixing>,
    /// Upper bound on `e^γ`, for rejection sampling of the tilted claims.
    pub claims_envelope: Option<f64>,
    /// Upper bound on `ξ`, for rejection sampling of the tilted mixing law.
    pub mixing_envelope: Option<f64>,
    pub monotone: Option<Monotonicity>,
    /// Set for parameterizations where the mixed ordering is expected to reverse.
    pub counterexample: bool,
    /// Added to `α` in the density only. Zero except in mutation tests.
    pub alpha_shift: f64,
    /// Multiplies `ξ` in the density only. One except in mutation tests.
    pub xi_scale: f64,
}

/// The rate whose reciprocal is the kernel mean, written so that an
/// exponential kernel maps to its own rate expression.
pub fn mean_matching_rate(kernel: &Kernel) -> Expr {
    match kernel {
        Kernel::Exponential { rate } => rate.clone(),
        Kernel::Gamma { rate, shape } => rate.div(&Expr::constant(*shape)),
        Kernel::HyperExponential { .. } => kernel.mean_expr().recip(),
    }
}

fn constraint(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.to_string()))
    }
}

impl Tilt {
    /// `γ ≡ 0`, `ξ ≡ 1`, `ρ = 1/E[W₁|θ]`: only the interarrival law changes.
    pub fn identity(model: &RiskModel) -> Tilt {
        Tilt {
            label: "identity".into(),
            gamma: ClaimTilt::Identity,
            rho: mean_matching_rate(&model.kernel),
            xi: Expr::constant(1.0),
            q_claims: Some(model.claims.clone()),
            q_mixing: Some(model.mixing.clone()),
            claims_envelope: None,
            mixing_envelope: None,
            monotone: None,
            counterexample: false,
            alpha_shift: 0.0,
            xi_scale: 1.0,
        }
    }

    pub fn with_alpha_shift(mut self, shift: f64) -> Tilt {
        self.alpha_shift = shift;
        self
    }

    pub fn with_xi_scale(mut self, scale: f64) -> Tilt {
        self.xi_scale = scale;
        self
    }

    pub fn is_mutated(&self) -> bool {
        self.alpha_shift != 0.0 || self.xi_scale != 1.0
    }

    /// Esscher tilt of the claims: `γ(x) = c·x − ln E[e^{cX₁}]`.
    pub fn esscher(model: &RiskModel, c: f64) -> Result<Tilt> {
        let mgf = model.claims.mgf(c)?;
        let gamma = if c == 0.0 {
            ClaimTilt::Identity
        } else {
            ClaimTilt::LogAffine { constant: -mgf.ln(), log_coef: 0.0, linear_coef: c }
        };
        let mut t = Tilt::identity(model);
        t.label = format!("esscher(c={c})");
        t.q_claims = gamma.closed_form(&model.claims);
        t.gamma = gamma;
        Ok(t)
    }

    /// The two-dimensional example with hyperexponential interarrivals and
    /// `Ga(ζ, 2)` claims: claims become `Exp(ζ/c)` and the process becomes
    /// Poisson with rate `2/(θ₁+θ₂)`.
    pub fn example1(zeta: f64, c: f64) -> Result<Tilt> {
        constraint(zeta > 0.0 && zeta.is_finite(), "ζ must be positive")?;
        constraint(c > 2.0 && c.is_finite(), "c > 2 is required (c > 2 a real constant)")?;
        let mean = 2.0 / zeta;
        let gamma = ClaimTilt::LogAffine {
            constant: (mean / (2.0 * c)).ln(),
            log_coef: -1.0,
            linear_coef: 2.0 * (c - 1.0) / (c * mean),
        };
        Ok(Tilt {
            label: format!("example1(zeta={zeta}, c={c})"),
            gamma,
            rho: Expr::parse("2 / (theta1 + theta2)")?,
            xi: Expr::constant(1.0),
            q_claims: Some(Law::Exponential { rate: zeta / c }),
            q_mixing: None,
            claims_envelope: None,
            mixing_envelope: None,
            monotone: None,
            counterexample: false,
            alpha_shift: 0.0,
            xi_scale: 1.0,
        })
    }

    /// Gamma interarrivals `Ga(θ, k)`, `Exp(η)` claims and `Ga(b₁, a)` mixing:
    /// claims become `Exp(η − c)`, the rate becomes `θ/d` and the mixing law
    /// becomes `Ga(b₂, a)`.
    pub fn example2(k: f64, eta: f64, c: f64, d: f64, b1: f64, b2: f64, a: f64) -> Result<Tilt> {
        constraint(k > 0.0 && eta > 0.0 && a > 0.0 && b1 > 0.0, "k, η, a and b₁ must be positive")?;
        constraint((0.0..eta).contains(&c), "0 ≤ c < η is required")?;
        constraint(d > 0.0 && d < k, "0 < d < k is required")?;
        constraint(b2 > 0.0 && b2 < b1, "b₂ < b₁ is required (b₂ a positive constant with b₂ < b₁)")?;
        Self::example2_unchecked(k, eta, c, d, b1, b2, a, false)
    }

    /// The parameterization with `c = 0` and `b₂ > b₁k/d`, for which every
    /// conditional premium increases but the mixed premium decreases.
    pub fn example2_reversal(k: f64, eta: f64, d: f64, b1: f64, b2: f64, a: f64) -> Result<Tilt> {
        constraint(k > 0.0 && eta > 0.0 && a > 0.0 && b1 > 0.0, "k, η, a and b₁ must be positive")?;
        constraint(d > 0.0 && d < k, "0 < d < k is required")?;
        constraint(b2 > b1 * k / d, "b₂ > b₁k/d is required for the reversal")?;
        Self::example2_unchecked(k, eta, 0.0, d, b1, b2, a, true)
    }

    #[allow(clippy::too_many_arguments)]
    fn example2_unchecked(k: f64, eta: f64, c: f64, d: f64, b1: f64, b2: f64, a: f64, counterexample: bool) -> Result<Tilt> {
        let gamma = if c == 0.0 {
            ClaimTilt::Identity
        } else {
            ClaimTilt::LogAffine { constant: (1.0 - c / eta).ln(), log_coef: 0.0, linear_coef: c }
        };
        let xi = Expr::parse(&format!(
            "({} / {}) ^ {} * exp(-({} - {}) * theta)",
            fmt_num(b2),
            fmt_num(b1),
            fmt_num(a),
            fmt_num(b2),
            fmt_num(b1)
        ))?;
        let xi_dir = if b2 < b1 { Direction::Increasing } else { Direction::Decreasing };
        let label = if counterexample {
            format!("example2-reversal(k={k}, eta={eta}, d={d}, b1={b1}, b2={b2}, a={a})")
        } else {
            format!("example2(k={k}, eta={eta}, c={c}, d={d}, b1={b1}, b2={b2}, a={a})")
        };
        Ok(Tilt {
            label,
            gamma,
            rho: Expr::parse(&format!("theta / {}", fmt_num(d)))?,
            xi,
            q_claims: Some(Law::Exponential { rate: eta - c }),
            q_mixing: Some(Mixing::single(Law::Gamma { rate: b2, shape: a })),
            claims_envelope: None,
            mixing_envelope: None,
            monotone: Some(Monotonicity { q_premium: Direction::Increasing, xi: xi_dir }),
            counterexample,
            alpha_shift: 0.0,
            xi_scale: 1.0,
        })
    }

    /// Proportional-hazards claim tilt reproducing Wang's premium
    /// `π_c = ∫ F̄^{1/c}`; the rate keeps the original mean.
    pub fn wang(model: &RiskModel, c: f64) -> Result<Tilt> {
        constraint(c > 1.0 && c.is_finite(), "c > 1 is required for the risk-adjusted premium")?;
        constraint(model.claims.is_continuous(), "the Wang tilt needs continuous claims")?;
        let gamma = ClaimTilt::Wang { c };
        let mut t = Tilt::identity(model);
        t.label = format!("wang(c={c})");
        t.q_claims = gamma.closed_form(&model.claims);
        t.gamma = gamma;
        if model.kernel.is_exponential() {
            t.monotone = Some(Monotonicity { q_premium: Direction::Increasing, xi: Direction::Increasing });
        }
        Ok(t)
    }

    /// Replace `ξ` by `e^{rθ}/E[e^{rΘ}]` (one-dimensional mixing only).
    pub fn with_exp_mixing(mut self, model: &RiskModel, r: f64) -> Result<Tilt> {
        let law = match &model.mixing {
            Mixing::Product(laws) if laws.len() == 1 => &laws[0],
            _ => return Err(Error::InvalidParameter("exponential ξ needs one-dimensional product mixing".into())),
        };
        let m = law.mgf(r)?;
        self.xi = Expr::parse(&format!("exp({} * theta) / {}", fmt_num(r), fmt_num(m)))?;
        self.q_mixing = match law {
            Law::Gamma { rate, shape } => Some(Mixing::single(Law::Gamma { rate: rate - r, shape: *shape })),
            Law::Exponential { rate } => Some(Mixing::single(Law::Exponential { rate: rate - r })),
            Law::Degenerate { .. } => Some(model.mixing.clone()),
            _ => None,
        };
        if self.q_mixing.is_none() {
            let (_, hi) = law.support();
            if hi.is_finite() {
                self.mixing_envelope = Some((r * hi).exp().max((r * law.support().0).exp()) / m);
            }
        }
        let dir = if r >= 0.0 { Direction::Increasing } else { Direction::Decreasing };
        if let Some(mono) = self.monotone.as_mut() {
            mono.xi = dir;
        }
        self.label = format!("{} + exp-mixing(r={r})", self.label);
        Ok(self)
    }

    pub fn exp_mixing(model: &RiskModel, r: f64) -> Result<Tilt> {
        Tilt::identity(model).with_exp_mixing(model, r)
    }

    pub fn ln_xi(&self, theta: Theta) -> f64 {
        let v = self.xi.eval_theta(theta).ln();
        if self.xi_scale == 1.0 {
            v
        } else {
            v + self.xi_scale.ln()
        }
    }

    pub fn rho_at(&self, theta: Theta) -> f64 {
        self.rho.eval_theta(theta)
    }
}

/// `α(θ) = ln ρ(θ) + ln E[W₁|θ]`.
pub fn alpha_from_rho(model: &RiskModel, rho: f64, theta: Theta) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("ρ must be positive, got {rho}")));
    }
    Ok(rho.ln() + model.conditional_mean_interarrival(theta)?.ln())
}

/// `ρ(θ) = e^{α(θ)} / E[W₁|θ]`.
pub fn rho_from_alpha(model: &RiskModel, alpha: f64, theta: Theta) -> Result<f64> {
    Ok(alpha.exp() / model.conditional_mean_interarrival(theta)?)
}

/// The model under the tilted measure.
pub fn q_model(model: &RiskModel, tilt: &Tilt) -> Result<RiskModel> {
    let claims = match &tilt.q_claims {
        Some(law) => law.clone(),
        None => match tilt.gamma.closed_form(&model.claims) {
            Some(law) => law,
            None => match (tilt.claims_envelope, tilt.gamma.as_expr()) {
                (Some(envelope), Some(log_weight)) => {
                    Law::Reweighted { base: Box::new(model.claims.clone()), log_weight, envelope }
                }
                _ => {
                    return Err(Error::Configuration(
                        "the tilted claim law has no closed form; supply a claims envelope".into(),
                    ))
                }
            },
        },
    };
    let mixing = match &tilt.q_mixing {
        Some(m) => m.clone(),
        None if tilt.xi.as_constant() == Some(1.0) => model.mixing.clone(),
        None => match tilt.mixing_envelope {
            Some(envelope) => Mixing::Reweighted {
                base: Box::new(model.mixing.clone()),
                log_weight: Expr::parse(&format!("ln({})", tilt.xi.source()))?,
                envelope,
            },
            None => {
                return Err(Error::Configuration(
                    "the tilted mixing law has no closed form; supply a mixing envelope".into(),
                ))
            }
        },
    };
    RiskModel::new(mixing, Kernel::Exponential { rate: tilt.rho.clone() }, claims)
}

enum KernelLn {
    Exp { ln_rate: f64, rate: f64 },
    Gamma { norm: f64, shape_m1: f64, rate: f64 },
    Other(Law),
}

impl KernelLn {
    fn new(law: Law) -> KernelLn {
        match law {
            Law::Exponential { rate } => KernelLn::Exp { ln_rate: rate.ln(), rate },
            Law::Gamma { rate, shape } => KernelLn::Gamma {
                norm: shape * rate.ln() - ln_gamma(shape),
                shape_m1: shape - 1.0,
                rate,
            },
            other => KernelLn::Other(other),
        }
    }

    fn ln_pdf(&self, w: f64) -> Result<f64> {
        match self {
            KernelLn::Exp { ln_rate, rate } => Ok(ln_rate - rate * w),
            KernelLn::Gamma { norm, shape_m1, rate } => {
                let mut v = norm - rate * w;
                if *shape_m1 != 0.0 {
                    v += shape_m1 * w.ln();
                }
                Ok(v)
            }
            KernelLn::Other(law) => law.ln_pdf(w),
        }
    }

    fn ln_survival(&self, r: f64) -> f64 {
        match self {
            KernelLn::Exp { rate, .. } => {
                if r <= 0.0 {
                    0.0
                } else {
                    -rate * r
                }
            }
            KernelLn::Gamma { shape_m1, rate, .. } => Law::Gamma { rate: *rate, shape: shape_m1 + 1.0 }.ln_survival(r),
            KernelLn::Other(law) => law.ln_survival(r),
        }
    }
}

/// The `θ`-dependent pieces of the density, computed once per path.
pub struct PathDensity<'a> {
    claims: &'a Law,
    gamma: &'a ClaimTilt,
    kernel: KernelLn,
    pub theta: Theta,
    pub ln_xi: f64,
    pub rho: f64,
    ln_rho: f64,
    /// `ln ρ + ln E[W₁|θ]` without any shift.
    log_scale: f64,
    alpha_shift: f64,
}

impl<'a> PathDensity<'a> {
    pub fn new(model: &'a RiskModel, tilt: &'a Tilt, theta: Theta) -> Result<Self> {
        let rho = tilt.rho_at(theta);
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("ρ({theta:?}) = {rho} is not positive")));
        }
        let law = model.kernel.at(theta)?;
        let mean = law.mean()?;
        let ln_xi = tilt.ln_xi(theta);
        if !ln_xi.is_finite() {
            return Err(Error::Domain(format!("ξ({theta:?}) is not positive")));
        }
        let ln_rho = rho.ln();
        Ok(PathDensity {
            claims: &model.claims,
            gamma: &tilt.gamma,
            kernel: KernelLn::new(law),
            theta,
            ln_xi,
            rho,
            ln_rho,
            log_scale: ln_rho + mean.ln(),
            alpha_shift: tilt.alpha_shift,
        })
    }

    /// `α(θ)` as used by the density (including any shift).
    pub fn alpha(&self) -> f64 {
        self.log_scale + self.alpha_shift
    }

    pub fn gamma(&self, x: f64) -> f64 {
        self.gamma.eval(self.claims, x)
    }

    /// `ln[ρ e^{−ρw} / k_θ(w)]`.
    pub fn ln_ratio(&self, w: f64) -> Result<f64> {
        let ln_k = self.kernel.ln_pdf(w)?;
        if !ln_k.is_finite() {
            return Err(Error::SingularDensity { w });
        }
        Ok((self.ln_rho - self.rho * w) - ln_k)
    }

    /// `−ρ r − ln(1 − K_θ(r))` for the residual `r = t − T_{N_t}`.
    pub fn residual_term(&self, r: f64) -> Result<f64> {
        let ln_sf = self.kernel.ln_survival(r);
        if !ln_sf.is_finite() {
            return Err(Error::SingularResidual { residual: r });
        }
        Ok(-self.rho * r - ln_sf)
    }

    /// `N·α − N·ln(ρ E[W₁|θ])`; zero unless `α` is shifted.
    pub fn count_terms(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        (n * self.alpha(), -(n * self.log_scale))
    }
}

/// `ln M_t` at each of the (ascending) `times`, written term by term as the
/// product form of the density.
pub fn log_density_at(model: &RiskModel, tilt: &Tilt, path: &Path, times: &[f64]) -> Result<Vec<f64>> {
    let pd = PathDensity::new(model, tilt, path.theta)?;
    let mut out = Vec::with_capacity(times.len());
    let mut gammas = CompensatedSum::new();
    let mut ratios = CompensatedSum::new();
    let mut j = 0;
    let mut prev = f64::NEG_INFINITY;
    for &t in times {
        if t < prev {
            return Err(Error::InvalidParameter("times must be ascending".into()));
        }
        prev = t;
        let n = path.count_at(t)?;
        while j < n {
            gammas.add(pd.gamma(path.claims[j]));
            ratios.add(pd.ln_ratio(path.interarrivals[j])?);
            j += 1;
        }
        let residual = if n == 0 { t } else { t - path.arrivals[n - 1] };
        let (with_alpha, without) = pd.count_terms(n);
        let mut s = CompensatedSum::new();
        s.add(pd.ln_xi);
        s.add(gammas.value());
        s.add(with_alpha);
        s.add(-pd.rho * residual);
        s.add(without);
        s.add(-pd.kernel.ln_survival(residual));
        s.add(ratios.value());
        let v = s.value();
        if !v.is_finite() {
            // report which factor failed
            pd.residual_term(residual)?;
            return Err(Error::Domain(format!("non-finite log density at t = {t}")));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn log_density(model: &RiskModel, tilt: &Tilt, path: &Path, t: f64) -> Result<f64> {
    Ok(log_density_at(model, tilt, path, &[t])?[0])
}

/// The same density with the `α` terms cancelled by hand:
/// `ln ξ + Σγ(X_j) + Σ ln[ρe^{−ρW_j}/k(W_j)] − ρ r − ln(1 − K(r))`.
pub fn log_density_reduced(model: &RiskModel, tilt: &Tilt, path: &Path, t: f64) -> Result<f64> {
    let pd = PathDensity::new(model, tilt, path.theta)?;
    let n = path.count_at(t)?;
    let mut s = CompensatedSum::new();
    s.add(pd.ln_xi);
    for j in 0..n {
        s.add(pd.gamma(path.claims[j]));
        s.add(pd.ln_ratio(path.interarrivals[j])?);
    }
    let residual = if n == 0 { t } else { t - path.arrivals[n - 1] };
    s.add(pd.residual_term(residual)?);
    Ok(s.value())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMethod {
    Quadrature,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub ell: u32,
    pub method: ValidationMethod,
    /// `E[e^{γ(X₁)}]`.
    pub mean_exp_gamma: Quad,
    /// `E[X₁^ℓ e^{γ(X₁)}]`.
    pub moment_exp_gamma: Quad,
    /// `E[ξ(Θ)]`.
    pub mean_xi: Quad,
    /// `E[ξ(Θ) ρ(Θ)^ℓ]`.
    pub moment_xi_rho: Quad,
    pub tol: f64,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty()
    }
}

pub const QUAD_TOL: f64 = 1e-6;
pub const MC_TOL: f64 = 1e-3;
const MC_DRAWS: usize = 1_000_000;

/// Check the integrability conditions of a tilt. `ell = None` picks 2 when
/// the second moments are finite and 1 otherwise.
pub fn validate_tilt(model: &RiskModel, tilt: &Tilt, ell: Option<u32>, tol: Option<f64>) -> Result<ValidationReport> {
    if let Some(l) = ell {
        constraint(l == 1 || l == 2, "ℓ must be 1 or 2")?;
    }
    let claims = &model.claims;
    let rho_ok = model
        .mixing
        .quantile_grid(16)?
        .iter()
        .all(|th| tilt.rho_at(*th) > 0.0 && tilt.xi.eval_theta(*th) > 0.0);
    let g = |x: f64| tilt.gamma.eval(claims, x).exp();
    let quad_first = (|| -> Result<(Quad, Quad, Quad)> {
        let a = claims.expect(g)?;
        let b = model.mixing.expect(|th| tilt.xi.eval_theta(th) * tilt.xi_scale)?;
        let c = claims.expect(|x| x * g(x))?;
        Ok((a, b, c))
    })();
    let (method, mean_exp_gamma, mean_xi, first_claims) = match quad_first {
        Ok((a, b, c)) => (ValidationMethod::Quadrature, a, b, c),
        Err(Error::Quadrature(_)) | Err(Error::Divergent(_)) => {
            let (a, b, c) = monte_carlo_moments(model, tilt)?;
            (ValidationMethod::MonteCarlo, a, b, c)
        }
        Err(e) => return Err(e),
    };
    let first_mixing = model.mixing.expect(|th| tilt.xi.eval_theta(th) * tilt.rho_at(th));
    let second = (
        claims.expect(|x| x * x * g(x)),
        model.mixing.expect(|th| tilt.xi.eval_theta(th) * tilt.rho_at(th).powi(2)),
    );
    let finite = |q: &Result<Quad>| matches!(q, Ok(v) if v.value.is_finite());
    let ell = match ell {
        Some(l) => l,
        None if finite(&second.0) && finite(&second.1) => 2,
        None => 1,
    };
    let (moment_exp_gamma, moment_xi_rho) = if ell == 2 { second } else { (Ok(first_claims), first_mixing) };
    let inconclusive = |what: &str, e: Error| Error::ValidationInconclusive(format!("{what}: {e}"));
    let moment_exp_gamma = moment_exp_gamma.map_err(|e| inconclusive("E[X^ℓ e^γ]", e))?;
    let moment_xi_rho = moment_xi_rho.map_err(|e| inconclusive("E[ξ ρ^ℓ]", e))?;
    let tol = tol.unwrap_or(match method {
        ValidationMethod::Quadrature => QUAD_TOL,
        ValidationMethod::MonteCarlo => MC_TOL,
    });
    let mut failures = Vec::new();
    if (mean_exp_gamma.value - 1.0).abs() > tol {
        failures.push(format!("E[e^γ] = {} differs from 1", mean_exp_gamma.value));
    }
    if (mean_xi.value - 1.0).abs() > tol {
        failures.push(format!("E[ξ] = {} differs from 1", mean_xi.value));
    }
    if !moment_exp_gamma.value.is_finite() {
        failures.push("E[X^ℓ e^γ] is not finite".into());
    }
    if !moment_xi_rho.value.is_finite() {
        failures.push("E[ξ ρ^ℓ] is not finite".into());
    }
    if !rho_ok {
        failures.push("ρ or ξ is not positive on the mixing support".into());
    }
    Ok(ValidationReport { ell, method, mean_exp_gamma, moment_exp_gamma, mean_xi, moment_xi_rho, tol, failures })
}

fn monte_carlo_moments(model: &RiskModel, tilt: &Tilt) -> Result<(Quad, Quad, Quad)> {
    let mut rng = path_rng(0, Stream::Auxiliary, 0);
    let mut eg = Vec::with_capacity(MC_DRAWS);
    let mut xeg = Vec::with_capacity(MC_DRAWS);
    let mut xi = Vec::with_capacity(MC_DRAWS);
    for _ in 0..MC_DRAWS {
        let x = model.claims.sample(&mut rng);
        let w = tilt.gamma.eval(&model.claims, x).exp();
        eg.push(w);
        xeg.push(x * w);
        xi.push(tilt.xi.eval_theta(model.mixing.sample(&mut rng)) * tilt.xi_scale);
    }
    let q = |v: &[f64]| {
        let (m, se) = mean_and_stderr(v);
        Quad { value: m, abs_err: se, evaluations: v.len() }
    };
    Ok((q(&eg), q(&xi), q(&xeg)))
}
