//! Ready-made scenarios: the three worked examples, the reversal
//! parameterization and an exponential/exponential ruin model with a known
//! ruin probability.

use std::collections::BTreeMap;

use crate::dist::Law;
use crate::error::{Error, Result};
use crate::expr::{fmt_num, Expr};
use crate::model::{Kernel, Mixing, RiskModel};
use crate::tilt::Tilt;

pub const NAMES: [&str; 5] = ["example1", "example2", "example2-cou", "example3", "exp-exp-ruin"];

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub model: RiskModel,
    pub tilt: Tilt,
    /// Parameters after overrides, for reports.
    pub params: BTreeMap<String, f64>,
    /// Closed-form ruin data for the exponential/exponential model.
    pub ruin_oracle: Option<RuinOracle>,
}

/// `K(θ) = Exp(θ)`, `X ~ Exp(η)` and premium `c(θ) = premium_per_theta · θ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuinOracle {
    pub eta: f64,
    pub premium_per_theta: f64,
}

fn take(params: &mut BTreeMap<String, f64>, used: &mut BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    let v = params.remove(key).unwrap_or(default);
    used.insert(key.to_string(), v);
    v
}

fn expr(s: &str) -> Expr {
    Expr::parse(s).expect("preset expressions are valid")
}

/// Build a preset, overriding any of its named parameters.
pub fn preset(name: &str, overrides: &BTreeMap<String, f64>) -> Result<Preset> {
    let mut params = overrides.clone();
    let mut used = BTreeMap::new();
    let p = &mut params;
    let u = &mut used;
    let (model, tilt, ruin_oracle) = match name {
        "example1" => {
            let zeta = take(p, u, "zeta", 1.0);
            let c = take(p, u, "c", 2.5);
            let shift = take(p, u, "mixing_shift", 1.0);
            let rate = take(p, u, "mixing_rate", 1.0);
            let shape = take(p, u, "mixing_shape", 2.0);
            if shift < 1.0 {
                return Err(Error::InvalidParameter("mixing_shift must be at least 1 so that θ lies in (1, ∞)²".into()));
            }
            let coord = Law::shifted(Law::Gamma { rate, shape }, shift);
            let model = RiskModel::new(
                Mixing::Product(vec![coord.clone(), coord]),
                Kernel::HyperExponential { weights: vec![0.5, 0.5], rates: vec![expr("1 / theta1"), expr("1 / theta2")] },
                Law::Gamma { rate: zeta, shape: 2.0 },
            )?;
            (model, Tilt::example1(zeta, c)?, None)
        }
        "example2" | "example2-cou" => {
            let reversal = name == "example2-cou";
            let k = take(p, u, "k", 1.2);
            let eta = take(p, u, "eta", 1.0);
            let d = take(p, u, "d", 1.0);
            let b1 = take(p, u, "b1", 3.0);
            let a = take(p, u, "a", 3.0);
            let tilt = if reversal {
                let b2 = take(p, u, "b2", 4.5);
                Tilt::example2_reversal(k, eta, d, b1, b2, a)?
            } else {
                let c = take(p, u, "c", 0.2);
                let b2 = take(p, u, "b2", 2.5);
                Tilt::example2(k, eta, c, d, b1, b2, a)?
            };
            let model = RiskModel::new(
                Mixing::single(Law::Gamma { rate: b1, shape: a }),
                Kernel::Gamma { rate: expr("theta"), shape: k },
                Law::Exponential { rate: eta },
            )?;
            (model, tilt, None)
        }
        "example3" => {
            let c = take(p, u, "c", 1.5);
            let r = take(p, u, "r", 0.5);
            let rate = take(p, u, "mixing_rate", 4.0);
            let shape = take(p, u, "mixing_shape", 2.0);
            let model = RiskModel::new(
                Mixing::single(Law::Gamma { rate, shape }),
                Kernel::exponential_theta(),
                Law::Uniform { lo: 0.0, hi: 1.0 },
            )?;
            let tilt = Tilt::wang(&model, c)?.with_exp_mixing(&model, r)?;
            (model, tilt, None)
        }
        "exp-exp-ruin" => {
            let eta = take(p, u, "eta", 0.5);
            let c = take(p, u, "c", 0.125);
            let b1 = take(p, u, "b1", 3.0);
            let b2 = take(p, u, "b2", 2.5);
            let a = take(p, u, "a", 3.0);
            if !(c > 0.0 && 2.0 * c < eta) {
                return Err(Error::InvalidParameter("0 < 2c < η is required".into()));
            }
            // d = (η − 2c)/(η − c) bounds the importance weights by a constant times e^{−cu}
            let d = (eta - 2.0 * c) / (eta - c);
            u.insert("d".into(), d);
            let model = RiskModel::new(
                Mixing::single(Law::Gamma { rate: b1, shape: a }),
                Kernel::Exponential { rate: expr("theta") },
                Law::Exponential { rate: eta },
            )?;
            let tilt = Tilt::example2(1.0, eta, c, d, b1, b2, a)?;
            let oracle = RuinOracle { eta, premium_per_theta: 1.0 / (d * (eta - c)) };
            (model, tilt, Some(oracle))
        }
        other => {
            return Err(Error::Configuration(format!(
                "unknown preset '{other}' (expected one of {})",
                NAMES.join(", ")
            )))
        }
    };
    if let Some(extra) = params.keys().next() {
        return Err(Error::Configuration(format!("unknown parameter '{extra}' for preset '{name}'")));
    }
    Ok(Preset { name: name.to_string(), model, tilt, params: used, ruin_oracle })
}

pub fn default_preset(name: &str) -> Result<Preset> {
    preset(name, &BTreeMap::new())
}

impl Preset {
    /// Closed-form `p(P,θ)` and `p(Q,θ)` as expressions, where the example
    /// states them.
    pub fn closed_form_premiums(&self) -> Option<(Expr, Expr)> {
        let g = |k: &str| self.params.get(k).copied();
        match self.name.as_str() {
            "example1" => {
                let (zeta, c) = (g("zeta")?, g("c")?);
                Some((
                    expr(&format!("4 / ({} * (theta1 + theta2))", fmt_num(zeta))),
                    expr(&format!("2 * {} / ({} * (theta1 + theta2))", fmt_num(c), fmt_num(zeta))),
                ))
            }
            "example2" | "example2-cou" => {
                let (k, eta, d) = (g("k")?, g("eta")?, g("d")?);
                let c = g("c").unwrap_or(0.0);
                Some((
                    expr(&format!("theta / ({} * {})", fmt_num(k), fmt_num(eta))),
                    expr(&format!("theta / ({} * ({} - {}))", fmt_num(d), fmt_num(eta), fmt_num(c))),
                ))
            }
            _ => None,
        }
    }

    /// Closed-form `p(P)` and `p(Q)` where available.
    pub fn closed_form_mixed(&self) -> Option<(f64, f64)> {
        let g = |k: &str| self.params.get(k).copied();
        match self.name.as_str() {
            "example2" | "example2-cou" => {
                let (k, eta, d, b1, b2, a) = (g("k")?, g("eta")?, g("d")?, g("b1")?, g("b2")?, g("a")?);
                let c = g("c").unwrap_or(0.0);
                Some((a / (b1 * k * eta), a / (b2 * d * (eta - c))))
            }
            _ => None,
        }
    }
}
