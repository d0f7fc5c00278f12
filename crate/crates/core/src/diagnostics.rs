//! Monte Carlo checks of the martingale, compensator, Wald and strong-law
//! properties, and the exact association inequality.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Zero};
use serde::Serialize;

use crate::dist::Law;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{Mixing, RiskModel, StopRule, Theta};
use crate::rng::{path_rng, Stream};
use crate::stats::{mean_and_stderr, pairwise_sum, weighted_ks_permutation, CheckReport, Estimate, KsReport};
use crate::tilt::{log_density_at, q_model, Tilt};

/// Simulation settings shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n: usize,
    pub seed: u64,
    pub exec: Exec,
    pub z: f64,
}

impl McConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        McConfig { n, seed, exec: Exec::default(), z: crate::stats::Z_DEFAULT }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_z(mut self, z: f64) -> Self {
        self.z = z;
        self
    }

    fn check(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 paths, got {}", self.n)));
        }
        Ok(())
    }
}

fn sorted_times(times: &[f64]) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter("times must be finite and nonnegative".into()));
    }
    let mut ts = times.to_vec();
    ts.sort_by(f64::total_cmp);
    Ok(ts)
}

fn horizon_for(ts: &[f64]) -> f64 {
    ts.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE)
}

/// Sample means of `M_t` under `P` at each time; the target is 1.
pub fn martingale_unit_mean(model: &RiskModel, tilt: &Tilt, times: &[f64], cfg: McConfig) -> Result<Vec<CheckReport>> {
    cfg.check()?;
    let ts = sorted_times(times)?;
    let horizon = horizon_for(&ts);
    let rows = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        let path = model.simulate_path(StopRule::Horizon(horizon), &mut rng)?;
        let ln = log_density_at(model, tilt, &path, &ts)?;
        Ok::<_, Error>(ln.into_iter().map(f64::exp).collect::<Vec<f64>>())
    })?;
    ts.iter()
        .enumerate()
        .map(|(k, t)| {
            let xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let est = Estimate::from_samples(&xs, 0, cfg.seed)?;
            Ok(CheckReport::new("martingale_unit_mean", Some(*t), 1.0, est, cfg.z))
        })
        .collect()
}

/// Mean of `S_t − t·c(Θ)` under `model`; the target is 0.
pub fn compensated_drift<C>(model: &RiskModel, premium: C, times: &[f64], cfg: McConfig) -> Result<Vec<CheckReport>>
where
    C: Fn(Theta) -> f64 + Sync,
{
    drift_rows(model, &premium, times, cfg, "compensated_drift", false)
}

/// Drift with the unconditional rate `c = E[X₁]/E[W₁]`. Under non-degenerate
/// mixing the drift is strictly positive (`E[1/E[W₁|Θ]] > 1/E[W₁]`); the
/// reports pass when that positivity is detected.
pub fn jensen_gap(model: &RiskModel, times: &[f64], cfg: McConfig) -> Result<Vec<CheckReport>> {
    let mean_w = model
        .mixing
        .expect(|th| model.conditional_mean_interarrival(th).unwrap_or(f64::NAN))?
        .value;
    let c = model.claims.mean()? / mean_w;
    drift_rows(model, &|_| c, times, cfg, "jensen_gap", true)
}

fn drift_rows(
    model: &RiskModel,
    premium: &(dyn Fn(Theta) -> f64 + Sync),
    times: &[f64],
    cfg: McConfig,
    name: &str,
    one_sided: bool,
) -> Result<Vec<CheckReport>> {
    cfg.check()?;
    let ts = sorted_times(times)?;
    let horizon = horizon_for(&ts);
    let rows = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        let path = model.simulate_path(StopRule::Horizon(horizon), &mut rng)?;
        let c = premium(path.theta);
        ts.iter()
            .map(|t| Ok(path.aggregate_at(*t)? - t * c))
            .collect::<Result<Vec<f64>>>()
    })?;
    ts.iter()
        .enumerate()
        .map(|(k, t)| {
            let xs: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            let est = Estimate::from_samples(&xs, 0, cfg.seed)?;
            Ok(if one_sided {
                CheckReport::greater(name, Some(*t), 0.0, est, cfg.z)
            } else {
                CheckReport::new(name, Some(*t), 0.0, est, cfg.z)
            })
        })
        .collect()
}

/// The model with `Θ` pinned at `theta`.
pub fn conditional_model(model: &RiskModel, theta: Theta) -> RiskModel {
    let laws = (0..model.mixing.dim()).map(|k| Law::degenerate(theta[k])).collect();
    RiskModel { mixing: Mixing::Product(laws), kernel: model.kernel.clone(), claims: model.claims.clone() }
}

/// Compensated drift at fixed `θ` for each grid point, one report per point.
pub fn conditional_drift<C>(model: &RiskModel, premium: C, grid: &[Theta], t: f64, cfg: McConfig) -> Result<Vec<CheckReport>>
where
    C: Fn(Theta) -> f64 + Sync,
{
    let mut out = Vec::with_capacity(grid.len());
    for (k, th) in grid.iter().enumerate() {
        let m = conditional_model(model, *th);
        let sub = McConfig { seed: crate::rng::substream_seed(cfg.seed, k as u64), ..cfg };
        let mut r = drift_rows(&m, &premium, &[t], sub, "conditional_drift", false)?;
        out.append(&mut r);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SllnReport {
    pub t: f64,
    pub n: usize,
    /// Mean claim count at `t` across the paths.
    pub mean_count: f64,
    /// 95th percentile of `|S_t/t − p(P,θ)|` with each path's own `θ`.
    pub p95_error: f64,
}

pub fn slln_ratio(model: &RiskModel, t: f64, cfg: McConfig) -> Result<SllnReport> {
    cfg.check()?;
    let mean_x = model.claims.mean()?;
    let rows = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        let path = model.simulate_path(StopRule::Horizon(t), &mut rng)?;
        let target = mean_x / model.conditional_mean_interarrival(path.theta)?;
        let s = path.aggregate_at(t)?;
        Ok::<_, Error>(((s / t - target).abs(), path.count_at(t)? as f64))
    })?;
    let mut errs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let counts: Vec<f64> = rows.iter().map(|r| r.1).collect();
    errs.sort_by(f64::total_cmp);
    let idx = ((0.95 * errs.len() as f64).ceil() as usize).clamp(1, errs.len()) - 1;
    Ok(SllnReport { t, n: cfg.n, mean_count: pairwise_sum(&counts) / counts.len() as f64, p95_error: errs[idx] })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SllnDoubling {
    pub t: f64,
    pub replicates: usize,
    pub improved: usize,
    pub reports: Vec<(SllnReport, SllnReport)>,
}

impl SllnDoubling {
    pub fn fraction_improved(&self) -> f64 {
        self.improved as f64 / self.replicates as f64
    }
}

/// Run [`slln_ratio`] at `t` and `2t` for `replicates` derived seeds and count
/// how often the 95th-percentile error shrank.
pub fn slln_doubling(model: &RiskModel, t: f64, replicates: usize, cfg: McConfig) -> Result<SllnDoubling> {
    let mut reports = Vec::with_capacity(replicates);
    let mut improved = 0;
    for r in 0..replicates {
        let sub = McConfig { seed: crate::rng::substream_seed(cfg.seed, r as u64), ..cfg };
        let a = slln_ratio(model, t, sub)?;
        let b = slln_ratio(model, 2.0 * t, sub)?;
        if b.p95_error < a.p95_error {
            improved += 1;
        }
        reports.push((a, b));
    }
    Ok(SllnDoubling { t, replicates, improved, reports })
}

/// Closed-form `E[S_t]` and `Var[S_t]` for an exponential kernel.
pub fn wald_targets(model: &RiskModel, t: f64) -> Result<(f64, f64)> {
    let rate = match &model.kernel {
        crate::model::Kernel::Exponential { rate } => rate,
        _ => return Err(Error::Unsupported("Wald targets need an exponential kernel".into())),
    };
    let m1 = model.mixing.expect(|th| rate.eval_theta(th))?.value;
    let m2 = model.mixing.expect(|th| rate.eval_theta(th).powi(2))?.value;
    let mean_x = model.claims.mean()?;
    let var_x = model.claims.variance()?;
    let mean_n = t * m1;
    let var_n = t * m1 + t * t * (m2 - m1 * m1);
    Ok((mean_n * mean_x, mean_n * var_x + var_n * mean_x * mean_x))
}

/// Monte Carlo `E[S_t]` and `Var[S_t]` against [`wald_targets`].
pub fn wald_identities(model: &RiskModel, t: f64, cfg: McConfig) -> Result<[CheckReport; 2]> {
    cfg.check()?;
    let (mean_target, var_target) = wald_targets(model, t)?;
    let xs = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        model.simulate_path(StopRule::Horizon(t), &mut rng)?.aggregate_at(t)
    })?;
    let mean = Estimate::from_samples(&xs, 0, cfg.seed)?;
    let n = xs.len() as f64;
    let dev2: Vec<f64> = xs.iter().map(|x| (x - mean.value).powi(2)).collect();
    let (var_mean, var_se) = mean_and_stderr(&dev2);
    let var = Estimate { value: var_mean * n / (n - 1.0), stderr: var_se, n: xs.len(), truncated: 0, seed: cfg.seed };
    Ok([
        CheckReport::new("wald_mean", Some(t), mean_target, mean, cfg.z),
        CheckReport::new("wald_variance", Some(t), var_target, var, cfg.z),
    ])
}

/// Two-sample permutation KS of `N_t` and of `S_t`: `P`-paths weighted by
/// `M_t` against unweighted paths of the tilted model.
pub fn pathlaw_equivalence(
    model: &RiskModel,
    tilt: &Tilt,
    t: f64,
    permutations: usize,
    alpha: f64,
    cfg: McConfig,
) -> Result<[KsReport; 2]> {
    cfg.check()?;
    let q = q_model(model, tilt)?;
    let weighted = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        let path = model.simulate_path(StopRule::Horizon(t), &mut rng)?;
        let w = log_density_at(model, tilt, &path, &[t])?[0].exp();
        Ok::<_, Error>((path.count_at(t)? as f64, path.aggregate_at(t)?, w))
    })?;
    let direct = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::Q, i as u64);
        let path = q.simulate_path(StopRule::Horizon(t), &mut rng)?;
        Ok::<_, Error>((path.count_at(t)? as f64, path.aggregate_at(t)?))
    })?;
    let w: Vec<f64> = weighted.iter().map(|r| r.2).collect();
    let pn: Vec<f64> = weighted.iter().map(|r| r.0).collect();
    let ps: Vec<f64> = weighted.iter().map(|r| r.1).collect();
    let qn: Vec<f64> = direct.iter().map(|r| r.0).collect();
    let qs: Vec<f64> = direct.iter().map(|r| r.1).collect();
    let seed_n = crate::rng::substream_seed(cfg.seed, 1);
    let seed_s = crate::rng::substream_seed(cfg.seed, 2);
    Ok([
        weighted_ks_permutation("pathlaw_count", t, &pn, &w, &qn, permutations, seed_n, alpha)?,
        weighted_ks_permutation("pathlaw_aggregate", t, &ps, &w, &qs, permutations, seed_s, alpha)?,
    ])
}

/// `E_P[h·M_t]` against `E_Q[h]` for a bounded statistic `h(N_t, S_t)`; the
/// report's estimate is the difference with the joint standard error.
pub fn reweighting_consistency<H>(model: &RiskModel, tilt: &Tilt, t: f64, h: H, cfg: McConfig) -> Result<CheckReport>
where
    H: Fn(usize, f64) -> f64 + Sync,
{
    cfg.check()?;
    let q = q_model(model, tilt)?;
    let p_vals = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::P, i as u64);
        let path = model.simulate_path(StopRule::Horizon(t), &mut rng)?;
        let w = log_density_at(model, tilt, &path, &[t])?[0].exp();
        Ok::<_, Error>(h(path.count_at(t)?, path.aggregate_at(t)?) * w)
    })?;
    let q_vals = cfg.exec.try_map(cfg.n, |i| {
        let mut rng = path_rng(cfg.seed, Stream::Q, i as u64);
        let path = q.simulate_path(StopRule::Horizon(t), &mut rng)?;
        Ok::<_, Error>(h(path.count_at(t)?, path.aggregate_at(t)?))
    })?;
    let a = Estimate::from_samples(&p_vals, 0, cfg.seed)?;
    let b = Estimate::from_samples(&q_vals, 0, cfg.seed)?;
    let diff = Estimate {
        value: a.value - b.value,
        stderr: (a.stderr.powi(2) + b.stderr.powi(2)).sqrt(),
        n: a.n,
        truncated: 0,
        seed: cfg.seed,
    };
    Ok(CheckReport::new("reweighting_consistency", Some(t), 0.0, diff, cfg.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationReport {
    /// `P(A)·E[χ_A f g]`.
    pub lhs: BigRational,
    /// `E[χ_A f]·E[χ_A g]`.
    pub rhs: BigRational,
    /// True when `f` and `g` share a direction, so `lhs ≥ rhs` is expected.
    pub same_direction: bool,
    pub holds: bool,
}

fn exact(x: f64) -> Result<BigRational> {
    BigRational::from_f64(x).ok_or_else(|| Error::Domain(format!("{x} has no exact rational value")))
}

fn check_monotone(atoms: &[f64], values: &[f64], dir: Monotone, name: &str) -> Result<()> {
    let mut idx: Vec<usize> = (0..atoms.len()).collect();
    idx.sort_by(|a, b| atoms[*a].total_cmp(&atoms[*b]));
    for pair in idx.windows(2) {
        let (a, b) = (values[pair[0]], values[pair[1]]);
        let ok = match dir {
            Monotone::Increasing => a <= b,
            Monotone::Decreasing => a >= b,
        };
        if !ok {
            return Err(Error::Precondition(format!("{name} is not {dir:?} on the support")));
        }
    }
    Ok(())
}

/// Exact check of `P(A)·E[χ_A f(Z) g(Z)] ≥ E[χ_A f(Z)]·E[χ_A g(Z)]` for
/// monotone `f`, `g` of the same direction (and `≤` for opposite directions).
/// All arithmetic is over the rationals, seeded with the exact values of the
/// binary floating-point inputs.
pub fn association_inequality<F, G, A>(
    z: &Law,
    f: F,
    f_dir: Monotone,
    g: G,
    g_dir: Monotone,
    event: A,
) -> Result<AssociationReport>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
    A: Fn(f64) -> bool,
{
    let (atoms, weights) = match z {
        Law::FiniteDiscrete { atoms, weights } => (atoms, weights),
        _ => return Err(Error::Unsupported("the association check needs a finite-support law".into())),
    };
    z.validate()?;
    let fv: Vec<f64> = atoms.iter().map(|a| f(*a)).collect();
    let gv: Vec<f64> = atoms.iter().map(|a| g(*a)).collect();
    check_monotone(atoms, &fv, f_dir, "f")?;
    check_monotone(atoms, &gv, g_dir, "g")?;
    let mut p_a = BigRational::zero();
    let mut e_fg = BigRational::zero();
    let mut e_f = BigRational::zero();
    let mut e_g = BigRational::zero();
    for i in 0..atoms.len() {
        if !event(atoms[i]) {
            continue;
        }
        let w = exact(weights[i])?;
        let fi = exact(fv[i])?;
        let gi = exact(gv[i])?;
        e_fg += &w * &fi * &gi;
        e_f += &w * &fi;
        e_g += &w * gi;
        p_a += w;
    }
    if p_a <= BigRational::from_integer(BigInt::zero()) {
        return Err(Error::Precondition("the event has probability zero".into()));
    }
    let lhs = &p_a * e_fg;
    let rhs = e_f * e_g;
    let same_direction = f_dir == g_dir;
    let holds = if same_direction { lhs >= rhs } else { lhs <= rhs };
    Ok(AssociationReport { lhs, rhs, same_direction, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::model::Kernel;

    #[test]
    fn association_small_cases() {
        let z = Law::FiniteDiscrete { atoms: vec![1.0, 2.0, 3.0], weights: vec![0.25, 0.5, 0.25] };
        let r = association_inequality(&z, |x| x, Monotone::Increasing, |x| x, Monotone::Increasing, |_| true).unwrap();
        assert!(r.holds && r.same_direction && r.lhs > r.rhs);
        let r = association_inequality(&z, |x| x, Monotone::Increasing, |x| -x, Monotone::Decreasing, |_| true).unwrap();
        assert!(r.holds && !r.same_direction && r.lhs < r.rhs);
        let bad = association_inequality(&z, |x| (x - 2.0).abs(), Monotone::Increasing, |x| x, Monotone::Increasing, |_| true);
        assert!(matches!(bad, Err(Error::Precondition(_))));
    }

    #[test]
    fn association_uniform_three_points() {
        // weights of 1/3 are not exact in binary; compare against the exact
        // rationals of the rounded inputs
        let w = 1.0 / 3.0;
        let z = Law::FiniteDiscrete { atoms: vec![1.0, 2.0, 3.0], weights: vec![w, w, 1.0 - 2.0 * w] };
        let r = association_inequality(&z, |x| x, Monotone::Increasing, |x| x, Monotone::Increasing, |_| true).unwrap();
        let third = BigRational::from_f64(w).unwrap();
        let last = BigRational::from_f64(1.0 - 2.0 * w).unwrap();
        let one = BigRational::from_integer(1.into());
        let two = BigRational::from_integer(2.into());
        let three = BigRational::from_integer(3.into());
        let p = &third + &third + &last;
        let e2 = &third * &one + &third * (&two * &two) + &last * (&three * &three);
        let e1 = &third * &one + &third * &two + &last * &three;
        assert_eq!(r.lhs, &p * e2);
        assert_eq!(r.rhs, &e1 * &e1);
    }

    #[test]
    fn identity_tilt_unit_mean_is_exact() {
        let model = RiskModel::new(
            Mixing::single(Law::Gamma { rate: 2.0, shape: 3.0 }),
            Kernel::Exponential { rate: Expr::parse("theta").unwrap() },
            Law::Exponential { rate: 1.0 },
        )
        .unwrap();
        let tilt = Tilt::identity(&model);
        let reps = martingale_unit_mean(&model, &tilt, &[1.0, 5.0], McConfig::new(500, 3)).unwrap();
        for r in reps {
            assert_eq!(r.estimate.value, 1.0);
            assert_eq!(r.estimate.stderr, 0.0);
            assert!(r.pass);
        }
    }

    #[test]
    fn wald_targets_closed_form() {
        let model = RiskModel::new(
            Mixing::single(Law::Gamma { rate: 3.0, shape: 2.0 }),
            Kernel::Exponential { rate: Expr::parse("theta").unwrap() },
            Law::Exponential { rate: 1.0 },
        )
        .unwrap();
        let (m, v) = wald_targets(&model, 4.0).unwrap();
        assert!((m - 4.0 * 2.0 / 3.0).abs() < 1e-9);
        // E[N] Var X + (t E[Θ] + t² Var Θ) E[X]²
        let en = 4.0 * 2.0 / 3.0;
        let vn = en + 16.0 * 2.0 / 9.0;
        assert!((v - (en + vn)).abs() < 1e-9);
    }
}
