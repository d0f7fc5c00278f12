//! Scenario files.
//!
//! A scenario is a TOML document with flat sections and dotted keys. Every key
//! is checked against the documented set, and all problems are collected
//! before anything runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use cmrp::presets::{self, Preset};
use cmrp::{Expr, Kernel, Law, Mixing, RiskModel, Tilt};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

/// Every problem found in a scenario document.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}", .0.join("\n"))]
pub struct ScenarioErrors(pub Vec<String>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Format, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

/// Monte Carlo budgets and check thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Budget {
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub ks_time: f64,
    pub permutations: usize,
    pub ks_alpha: f64,
    pub z: f64,
    pub drift_z: f64,
    pub u: Vec<f64>,
    pub max_claims: usize,
    pub grid_points: usize,
    pub horizon: f64,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget {
            n_paths: 100_000,
            times: vec![1.0, 5.0, 10.0],
            ks_time: 5.0,
            permutations: 199,
            ks_alpha: 0.01,
            z: cmrp::stats::Z_DEFAULT,
            drift_z: 3.0,
            u: vec![0.5, 1.0, 2.0, 5.0],
            max_claims: cmrp::ruin::DEFAULT_MAX_CLAIMS,
            grid_points: cmrp::premium::GRID_POINTS,
            horizon: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    /// Set when the model and tilt come from a preset.
    pub preset: Option<Preset>,
    pub model: RiskModel,
    pub tilt: Tilt,
    pub budget: Budget,
    pub out_dir: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum KernelSpec {
    Exponential { rate: Expr },
    Gamma { rate: Expr, shape: f64 },
    HyperExponential { weights: Vec<f64>, rates: Vec<Expr> },
}

impl From<KernelSpec> for Kernel {
    fn from(k: KernelSpec) -> Kernel {
        match k {
            KernelSpec::Exponential { rate } => Kernel::Exponential { rate },
            KernelSpec::Gamma { rate, shape } => Kernel::Gamma { rate, shape },
            KernelSpec::HyperExponential { weights, rates } => Kernel::HyperExponential { weights, rates },
        }
    }
}

impl From<&Kernel> for KernelSpec {
    fn from(k: &Kernel) -> KernelSpec {
        match k.clone() {
            Kernel::Exponential { rate } => KernelSpec::Exponential { rate },
            Kernel::Gamma { rate, shape } => KernelSpec::Gamma { rate, shape },
            Kernel::HyperExponential { weights, rates } => KernelSpec::HyperExponential { weights, rates },
        }
    }
}

const TOP_KEYS: &[&str] = &["seed", "preset", "model", "tilt", "run", "output"];
const PRESET_KEYS: &[&str] = &["name", "params"];
const MODEL_KEYS: &[&str] = &["mixing", "kernel", "claims"];
const TILT_KEYS: &[&str] = &[
    "kind",
    "c",
    "exp_mixing_r",
    "gamma",
    "rho",
    "xi",
    "q_claims",
    "claims_envelope",
    "mixing_envelope",
    "alpha_shift",
    "xi_scale",
];
const PRESET_TILT_KEYS: &[&str] = &["alpha_shift", "xi_scale"];
const RUN_KEYS: &[&str] = &[
    "n_paths",
    "times",
    "ks_time",
    "permutations",
    "ks_alpha",
    "z",
    "drift_z",
    "u",
    "max_claims",
    "grid_points",
    "horizon",
];
const OUTPUT_KEYS: &[&str] = &["dir", "format"];

struct Collector(Vec<String>);

impl Collector {
    fn push(&mut self, msg: impl fmt::Display) {
        self.0.push(msg.to_string());
    }

    fn keys(&mut self, table: &Table, allowed: &[&str], section: &str) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                let place = if section.is_empty() { String::new() } else { format!(" in [{section}]") };
                self.push(format!("unknown key '{key}'{place} (allowed: {})", allowed.join(", ")));
            }
        }
    }

    fn section<'a>(&mut self, doc: &'a Table, name: &str) -> Option<&'a Table> {
        match doc.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.push(format!("'{name}' must be a section"));
                None
            }
        }
    }

    fn typed<T: for<'de> Deserialize<'de>>(&mut self, table: &Table, key: &str, section: &str) -> Option<T> {
        let v = table.get(key)?;
        match v.clone().try_into::<T>() {
            Ok(x) => Some(x),
            Err(e) => {
                self.push(format!("[{section}] {key}: {}", e.message().trim()));
                None
            }
        }
    }
}

fn seed_value(v: &Value) -> Result<u64, String> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::String(s) => {
            let parsed = match s.strip_prefix("0x") {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => s.parse(),
            };
            parsed.map_err(|_| format!("seed '{s}' is not a 64-bit unsigned integer"))
        }
        _ => Err("seed must be a nonnegative integer (or a decimal/0x-hex string for values above 2^63)".into()),
    }
}

fn parse_mixing(v: &Value) -> Result<Mixing, String> {
    let law = |v: &Value| v.clone().try_into::<Law>().map_err(|e| e.message().trim().to_string());
    match v {
        Value::Table(_) => Ok(Mixing::single(law(v)?)),
        Value::Array(items) if (1..=2).contains(&items.len()) => {
            Ok(Mixing::Product(items.iter().map(law).collect::<Result<_, _>>()?))
        }
        _ => Err("mixing must be one law or an array of one or two laws".into()),
    }
}

fn parse_budget(c: &mut Collector, run: Option<&Table>) -> Budget {
    let mut b = Budget::default();
    let Some(t) = run else { return b };
    c.keys(t, RUN_KEYS, "run");
    if let Some(v) = c.typed::<i64>(t, "n_paths", "run") {
        if v < 2 {
            c.push(format!("[run] n_paths must be at least 2, got {v}"));
        } else {
            b.n_paths = v as usize;
        }
    }
    if let Some(v) = c.typed::<Vec<f64>>(t, "times", "run") {
        if v.is_empty() || v.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            c.push("[run] times must be a non-empty list of positive times");
        } else {
            b.times = v;
        }
    }
    if let Some(v) = c.typed::<Vec<f64>>(t, "u", "run") {
        if v.is_empty() || v.iter().any(|u| !(*u > 0.0 && u.is_finite())) {
            c.push("[run] u must be a non-empty list of positive reserves");
        } else {
            b.u = v;
        }
    }
    let positive = |c: &mut Collector, key: &str, slot: &mut f64| {
        if let Some(v) = c.typed::<f64>(t, key, "run") {
            if v > 0.0 && v.is_finite() {
                *slot = v;
            } else {
                c.push(format!("[run] {key} must be positive, got {v}"));
            }
        }
    };
    positive(c, "ks_time", &mut b.ks_time);
    positive(c, "z", &mut b.z);
    positive(c, "drift_z", &mut b.drift_z);
    positive(c, "horizon", &mut b.horizon);
    if let Some(v) = c.typed::<f64>(t, "ks_alpha", "run") {
        if v > 0.0 && v < 1.0 {
            b.ks_alpha = v;
        } else {
            c.push(format!("[run] ks_alpha must lie in (0, 1), got {v}"));
        }
    }
    let count = |c: &mut Collector, key: &str, min: i64, slot: &mut usize| {
        if let Some(v) = c.typed::<i64>(t, key, "run") {
            if v >= min {
                *slot = v as usize;
            } else {
                c.push(format!("[run] {key} must be at least {min}, got {v}"));
            }
        }
    };
    count(c, "permutations", 19, &mut b.permutations);
    count(c, "max_claims", 1, &mut b.max_claims);
    count(c, "grid_points", 2, &mut b.grid_points);
    b
}

fn custom_tilt(c: &mut Collector, model: &RiskModel, t: &Table) -> Option<Tilt> {
    let kind = c.typed::<String>(t, "kind", "tilt").unwrap_or_else(|| "identity".into());
    let coef = c.typed::<f64>(t, "c", "tilt");
    let need_c = |c: &mut Collector| {
        if coef.is_none() {
            c.push(format!("[tilt] kind = \"{kind}\" needs c"));
        }
        coef
    };
    let for_expr_only = ["gamma", "rho", "xi", "q_claims", "claims_envelope", "mixing_envelope"];
    if kind != "expr" {
        for key in for_expr_only.iter().filter(|k| t.contains_key(**k)) {
            c.push(format!("[tilt] {key} is only used with kind = \"expr\""));
        }
    }
    if !matches!(kind.as_str(), "esscher" | "wang") && coef.is_some() {
        c.push("[tilt] c is only used with kind = \"esscher\" or \"wang\"");
    }
    let built = match kind.as_str() {
        "identity" => Ok(Tilt::identity(model)),
        "esscher" => Tilt::esscher(model, need_c(c)?),
        "wang" => Tilt::wang(model, need_c(c)?),
        "expr" => {
            let mut tilt = Tilt::identity(model);
            tilt.label = "expr".into();
            if let Some(g) = c.typed::<Expr>(t, "gamma", "tilt") {
                tilt.gamma = cmrp::tilt::ClaimTilt::Expr(g);
                tilt.q_claims = c.typed::<Law>(t, "q_claims", "tilt");
            }
            if let Some(r) = c.typed::<Expr>(t, "rho", "tilt") {
                tilt.rho = r;
            }
            if let Some(x) = c.typed::<Expr>(t, "xi", "tilt") {
                tilt.q_mixing = None;
                tilt.xi = x;
            }
            tilt.claims_envelope = c.typed::<f64>(t, "claims_envelope", "tilt");
            tilt.mixing_envelope = c.typed::<f64>(t, "mixing_envelope", "tilt");
            Ok(tilt)
        }
        other => {
            c.push(format!("[tilt] unknown kind '{other}' (expected identity, esscher, wang or expr)"));
            return None;
        }
    };
    let mut tilt = match built {
        Ok(t) => t,
        Err(e) => {
            c.push(format!("[tilt] {e}"));
            return None;
        }
    };
    if let Some(r) = c.typed::<f64>(t, "exp_mixing_r", "tilt") {
        match tilt.with_exp_mixing(model, r) {
            Ok(t) => tilt = t,
            Err(e) => {
                c.push(format!("[tilt] exp_mixing_r: {e}"));
                return None;
            }
        }
    }
    Some(tilt)
}

fn mutations(c: &mut Collector, t: Option<&Table>, tilt: Tilt) -> Tilt {
    let Some(t) = t else { return tilt };
    let mut tilt = tilt;
    if let Some(s) = c.typed::<f64>(t, "alpha_shift", "tilt") {
        tilt = tilt.with_alpha_shift(s);
    }
    if let Some(s) = c.typed::<f64>(t, "xi_scale", "tilt") {
        if s > 0.0 {
            tilt = tilt.with_xi_scale(s);
        } else {
            c.push(format!("[tilt] xi_scale must be positive, got {s}"));
        }
    }
    tilt
}

/// Parse and validate a scenario document, reporting every problem found.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioErrors> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| ScenarioErrors(vec![e.to_string()]))?;
    let mut c = Collector(Vec::new());
    c.keys(&doc, TOP_KEYS, "");

    let seed = match doc.get("seed") {
        None => {
            c.push("seed is required");
            None
        }
        Some(v) => seed_value(v).map_err(|e| c.push(e)).ok(),
    };

    let preset_sec = c.section(&doc, "preset");
    let model_sec = c.section(&doc, "model");
    let tilt_sec = c.section(&doc, "tilt");
    let run_sec = c.section(&doc, "run");
    let budget = parse_budget(&mut c, run_sec);
    let mut out_dir = None;
    let mut format = None;
    if let Some(o) = c.section(&doc, "output") {
        c.keys(o, OUTPUT_KEYS, "output");
        out_dir = c.typed::<String>(o, "dir", "output").map(PathBuf::from);
        if let Some(f) = c.typed::<String>(o, "format", "output") {
            match f.parse() {
                Ok(f) => format = Some(f),
                Err(e) => c.push(format!("[output] {e}")),
            }
        }
    }

    let mut resolved: Option<(Option<Preset>, RiskModel, Tilt)> = None;
    match (preset_sec, model_sec) {
        (Some(_), Some(_)) => c.push("give either [preset] or [model], not both"),
        (None, None) => c.push("a [preset] or [model] section is required"),
        (Some(p), None) => {
            c.keys(p, PRESET_KEYS, "preset");
            let name = c.typed::<String>(p, "name", "preset");
            if name.is_none() && !p.contains_key("name") {
                c.push(format!("[preset] name is required (one of {})", presets::NAMES.join(", ")));
            }
            let params = c.typed::<BTreeMap<String, f64>>(p, "params", "preset").unwrap_or_default();
            if let Some(t) = tilt_sec {
                c.keys(t, PRESET_TILT_KEYS, "tilt");
            }
            if let Some(name) = name {
                match presets::preset(&name, &params) {
                    Ok(pr) => {
                        let tilt = mutations(&mut c, tilt_sec, pr.tilt.clone());
                        resolved = Some((Some(pr.clone()), pr.model, tilt));
                    }
                    Err(e) => c.push(format!("[preset] {e}")),
                }
            }
        }
        (None, Some(m)) => {
            c.keys(m, MODEL_KEYS, "model");
            for key in MODEL_KEYS {
                if !m.contains_key(*key) {
                    c.push(format!("[model] {key} is required"));
                }
            }
            let mixing = m.get("mixing").and_then(|v| parse_mixing(v).map_err(|e| c.push(format!("[model] mixing: {e}"))).ok());
            let kernel = c.typed::<KernelSpec>(m, "kernel", "model").map(Kernel::from);
            let claims = c.typed::<Law>(m, "claims", "model");
            if let (Some(mixing), Some(kernel), Some(claims)) = (mixing, kernel, claims) {
                match RiskModel::new(mixing, kernel, claims) {
                    Ok(model) => {
                        if let Some(t) = tilt_sec {
                            c.keys(t, TILT_KEYS, "tilt");
                        }
                        let empty = Table::new();
                        let tilt = custom_tilt(&mut c, &model, tilt_sec.unwrap_or(&empty));
                        if let Some(tilt) = tilt {
                            let tilt = mutations(&mut c, tilt_sec, tilt);
                            resolved = Some((None, model, tilt));
                        }
                    }
                    Err(e) => c.push(format!("[model] {e}")),
                }
            }
        }
    }

    if let Some((_, model, tilt)) = &resolved {
        if let Err(e) = cmrp::tilt::q_model(model, tilt) {
            c.push(format!("[tilt] {e}"));
        }
    }

    if !c.0.is_empty() {
        return Err(ScenarioErrors(c.0));
    }
    let (preset, model, tilt) = resolved.expect("no errors means a resolved model");
    Ok(Scenario { seed: seed.expect("no errors means a seed"), preset, model, tilt, budget, out_dir, format })
}

/// The `[model]` section for a model, in the form [`parse_scenario`] reads.
pub fn model_table(model: &RiskModel) -> Result<Table, String> {
    let mixing = match &model.mixing {
        Mixing::Product(laws) if laws.len() == 1 => Value::try_from(&laws[0]).map_err(|e| e.to_string())?,
        Mixing::Product(laws) => Value::try_from(laws).map_err(|e| e.to_string())?,
        Mixing::Reweighted { .. } => return Err("reweighted mixing laws have no scenario form".into()),
    };
    let mut t = Table::new();
    t.insert("mixing".into(), mixing);
    t.insert("kernel".into(), Value::try_from(KernelSpec::from(&model.kernel)).map_err(|e| e.to_string())?);
    t.insert("claims".into(), Value::try_from(&model.claims).map_err(|e| e.to_string())?);
    Ok(t)
}
