//! Task execution: each task turns a scenario into tables and a JSON summary.

use cmrp::diagnostics::{compensated_drift, jensen_gap, martingale_unit_mean, pathlaw_equivalence, McConfig};
use cmrp::premium::{ordering_report, wang_premium};
use cmrp::rng::{path_rng, Stream};
use cmrp::ruin::{is_premium, mixed_cramer_lundberg, net_profit_report, ruin_prob_is};
use cmrp::stats::{Alternative, CheckReport, KsReport};
use cmrp::tilt::{q_model, validate_tilt, ClaimTilt};
use cmrp::{Error, Exec, Kernel, Law, StopRule};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::report::{
    num, opt, Table, CHECKS_HEADER, PATHS_HEADER, PREMIUM_HEADER, RUIN_HEADER, VALIDATE_HEADER,
};
use crate::scenario::Scenario;

/// Relative tolerance for closed-form premium comparisons.
pub const CLOSED_FORM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Validate,
    Simulate,
    Martingale,
    Ruin,
    Premium,
    /// Validation, martingale checks and premiums (plus ruin when the preset
    /// has a closed-form ruin probability).
    Example,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Validate => "validate",
            Task::Simulate => "simulate",
            Task::Martingale => "martingale",
            Task::Ruin => "ruin",
            Task::Premium => "premium",
            Task::Example => "example",
        }
    }
}

/// Ordered by severity; the worst status decides the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Inconclusive,
    Fail,
    ConfigError,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail => 1,
            Status::ConfigError => 2,
            Status::Inconclusive => 3,
        }
    }

    fn of_error(e: &Error) -> Status {
        match e {
            Error::InvalidParameter(_)
            | Error::Configuration(_)
            | Error::Expression(_)
            | Error::ModelValidation(_)
            | Error::Precondition(_)
            | Error::Unsupported(_) => Status::ConfigError,
            e if e.is_inconclusive() => Status::Inconclusive,
            _ => Status::Fail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
}

struct Section {
    status: Status,
    tables: Vec<Table>,
    summary: Value,
}

impl Section {
    fn error(e: Error) -> Section {
        Section { status: Status::of_error(&e), tables: Vec::new(), summary: json!({ "error": e.to_string() }) }
    }
}

fn mc(s: &Scenario, exec: Exec) -> McConfig {
    McConfig::new(s.budget.n_paths, s.seed).with_exec(exec)
}

fn check_row(t: &mut Table, r: &CheckReport) {
    t.push(vec![
        r.name.clone(),
        opt(r.t),
        num(r.estimate.value),
        num(r.target),
        num(r.estimate.stderr),
        num(r.z),
        r.pass.to_string(),
    ]);
}

/// KS rows carry the permutation p-value as the value and the level as the
/// target; they pass when the p-value exceeds the level.
fn ks_row(t: &mut Table, r: &KsReport, alpha: f64) {
    t.push(vec![r.name.clone(), num(r.t), num(r.p_value), num(alpha), String::new(), String::new(), r.pass.to_string()]);
}

pub fn run(s: &Scenario, task: Task, exec: Exec) -> Outcome {
    let sections: Vec<(&str, Section)> = match task {
        Task::Validate => vec![("validate", validate(s))],
        Task::Simulate => vec![("simulate", simulate(s, exec))],
        Task::Martingale => vec![("martingale", martingale(s, exec))],
        Task::Ruin => vec![("ruin", ruin(s, exec))],
        Task::Premium => vec![("premium", premium(s))],
        Task::Example => {
            let mut v = vec![("validate", validate(s)), ("martingale", martingale(s, exec)), ("premium", premium(s))];
            if s.preset.as_ref().is_some_and(|p| p.ruin_oracle.is_some()) {
                v.push(("ruin", ruin(s, exec)));
            }
            v
        }
    };
    let mut status = Status::Pass;
    let mut tables = Vec::new();
    let mut summary = Map::new();
    for (name, sec) in sections {
        status = status.max(sec.status);
        tables.extend(sec.tables);
        summary.insert(name.to_string(), json!({ "status": sec.status, "result": sec.summary }));
    }
    Outcome { status, tables, summary }
}

fn validate(s: &Scenario) -> Section {
    let rep = match validate_tilt(&s.model, &s.tilt, None, None) {
        Ok(r) => r,
        Err(e) => return Section::error(e),
    };
    let mut t = Table::new("validate", &VALIDATE_HEADER);
    let near_one = |v: f64| (v - 1.0).abs() <= rep.tol;
    let ell = rep.ell;
    let rows = [
        ("mean_exp_gamma".to_string(), rep.mean_exp_gamma.value, 1.0, near_one(rep.mean_exp_gamma.value)),
        ("mean_xi".to_string(), rep.mean_xi.value, 1.0, near_one(rep.mean_xi.value)),
        (format!("moment{ell}_exp_gamma"), rep.moment_exp_gamma.value, f64::NAN, rep.moment_exp_gamma.value.is_finite()),
        (format!("moment{ell}_xi_rho"), rep.moment_xi_rho.value, f64::NAN, rep.moment_xi_rho.value.is_finite()),
    ];
    for (name, value, target, pass) in rows {
        t.push(vec![name, num(value), num(target), num(rep.tol), pass.to_string()]);
    }
    let profit = is_premium(&s.model, &s.tilt).and_then(|c| {
        let grid = s.model.mixing.quantile_grid(s.budget.grid_points)?;
        net_profit_report(&s.model, c, &grid)
    });
    let summary = json!({
        "tilt": s.tilt.label,
        "method": format!("{:?}", rep.method),
        "ell": rep.ell,
        "failures": rep.failures,
        "tilted_premium_profit_class": profit.as_ref().ok().map(|p| p.class),
        "tilted_premium_min_margin": profit.as_ref().ok().map(|p| p.min_margin),
    });
    let status = if rep.pass() { Status::Pass } else { Status::Fail };
    Section { status, tables: vec![t], summary }
}

fn simulate(s: &Scenario, exec: Exec) -> Section {
    let h = s.budget.horizon;
    let paths = exec.try_map(s.budget.n_paths, |i| {
        let mut rng = path_rng(s.seed, Stream::P, i as u64);
        s.model.simulate_path(StopRule::Horizon(h), &mut rng)
    });
    let paths = match paths {
        Ok(p) => p,
        Err(e) => return Section::error(e),
    };
    let mut t = Table::new("paths", &PATHS_HEADER);
    let mut counts = 0usize;
    let mut totals = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let mut agg = 0.0;
        for j in 0..p.len() {
            agg += p.claims[j];
            t.push(vec![
                i.to_string(),
                num(p.theta[0]),
                num(p.theta[1]),
                (j + 1).to_string(),
                num(p.arrivals[j]),
                num(p.claims[j]),
                num(agg),
            ]);
        }
        counts += p.len();
        totals.push(agg);
    }
    let n = paths.len() as f64;
    let summary = json!({
        "horizon": h,
        "paths": paths.len(),
        "mean_count": counts as f64 / n,
        "mean_aggregate": cmrp::stats::pairwise_sum(&totals) / n,
    });
    Section { status: Status::Pass, tables: vec![t], summary }
}

fn martingale(s: &Scenario, exec: Exec) -> Section {
    let b = &s.budget;
    let cfg = mc(s, exec);
    let mut t = Table::new("checks", &CHECKS_HEADER);
    let mut status = Status::Pass;
    let mut notes = Vec::new();
    let mut ks_json = Vec::new();
    let mut settle = |res: Result<(), Error>, status: &mut Status| {
        if let Err(e) = res {
            *status = (*status).max(Status::of_error(&e));
            notes.push(e.to_string());
        }
    };

    let res = martingale_unit_mean(&s.model, &s.tilt, &b.times, cfg.with_z(b.z)).map(|reps| {
        for r in &reps {
            check_row(&mut t, r);
        }
        reps.iter().all(|r| r.pass)
    });
    let res = res.map(|ok| if !ok { status = status.max(Status::Fail) });
    settle(res, &mut status);

    let res = pathlaw_equivalence(&s.model, &s.tilt, b.ks_time, b.permutations, b.ks_alpha, cfg).map(|reps| {
        for r in &reps {
            ks_row(&mut t, r, b.ks_alpha);
            ks_json.push(json!({ "name": r.name, "statistic": r.statistic, "p_value": r.p_value, "ess": r.ess }));
        }
        reps.iter().all(|r| r.pass)
    });
    let res = res.map(|ok| if !ok { status = status.max(Status::Fail) });
    settle(res, &mut status);

    let drift = (|| {
        let q = q_model(&s.model, &s.tilt)?;
        let c = is_premium(&s.model, &s.tilt)?;
        compensated_drift(&q, c, &b.times, cfg.with_z(b.drift_z))
    })()
    .map(|reps| {
        for r in &reps {
            let mut r = r.clone();
            r.name = "compensated_drift_q".into();
            check_row(&mut t, &r);
        }
        reps.iter().all(|r| r.pass)
    });
    let res = drift.map(|ok| if !ok { status = status.max(Status::Fail) });
    settle(res, &mut status);

    if !s.model.mixing.is_degenerate() {
        let res = jensen_gap(&s.model, &b.times, cfg.with_z(b.drift_z)).map(|reps| {
            for r in &reps {
                debug_assert_eq!(r.alternative, Alternative::Greater);
                check_row(&mut t, r);
            }
            reps.iter().all(|r| r.pass)
        });
        let res = res.map(|ok| if !ok { status = status.max(Status::Fail) });
        settle(res, &mut status);
    }

    let summary = json!({
        "tilt": s.tilt.label,
        "mutated": s.tilt.is_mutated(),
        "n_paths": b.n_paths,
        "ks": ks_json,
        "errors": notes,
    });
    Section { status, tables: vec![t], summary }
}

/// Closed-form ruin probability when the kernel is exponential and the claims
/// are exponential.
fn ruin_oracle(s: &Scenario, u: f64) -> Option<f64> {
    let (Kernel::Exponential { rate }, Law::Exponential { rate: eta }) = (&s.model.kernel, &s.model.claims) else {
        return None;
    };
    let c = is_premium(&s.model, &s.tilt).ok()?;
    mixed_cramer_lundberg(&s.model.mixing, |th| rate.eval_theta(th), *eta, c, u).ok().map(|q| q.value)
}

fn ruin(s: &Scenario, exec: Exec) -> Section {
    let b = &s.budget;
    let mut t = Table::new("ruin", &RUIN_HEADER);
    let mut status = Status::Pass;
    let mut rows = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut monotone = true;
    for &u in &b.u {
        let r = match ruin_prob_is(&s.model, &s.tilt, u, b.max_claims, mc(s, exec)) {
            Ok(r) => r,
            Err(e) => {
                status = status.max(Status::of_error(&e));
                rows.push(json!({ "u": u, "error": e.to_string() }));
                continue;
            }
        };
        let est = r.estimate;
        let oracle = ruin_oracle(s, u);
        let z = oracle.map(|o| (est.value - o) / est.stderr);
        let agrees = z.map(|z| z.abs() <= b.drift_z);
        if agrees == Some(false) {
            status = status.max(Status::Fail);
        }
        if let Some((v, se)) = prev {
            if est.value > v + b.drift_z * (se * se + est.stderr * est.stderr).sqrt() {
                monotone = false;
            }
        }
        prev = Some((est.value, est.stderr));
        t.push(vec![
            num(u),
            num(est.value),
            num(est.stderr),
            est.n.to_string(),
            r.ruined.to_string(),
            r.truncated.to_string(),
            opt(oracle),
        ]);
        rows.push(json!({
            "u": u,
            "psi_hat": est.value,
            "stderr": est.stderr,
            "oracle": oracle,
            "z": z,
            "agrees": agrees,
            "ruined_fraction": r.ruined as f64 / est.n as f64,
            "max_form_gap": r.max_form_gap,
            "lower_bound": r.lower_bound,
        }));
    }
    if !monotone {
        status = status.max(Status::Fail);
    }
    let summary = json!({
        "tilt": s.tilt.label,
        "max_claims": b.max_claims,
        "monotone_in_u": monotone,
        "rows": rows,
    });
    Section { status, tables: vec![t], summary }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn premium(s: &Scenario) -> Section {
    let report = s
        .model
        .mixing
        .quantile_grid(s.budget.grid_points)
        .and_then(|grid| ordering_report(&s.model, &s.tilt, &grid));
    let report = match report {
        Ok(r) => r,
        Err(e) => return Section::error(e),
    };
    let two_dim = s.model.mixing.dim() == 2;
    let mut t = Table::new("premium", &PREMIUM_HEADER);
    for g in &report.grid {
        let th2 = if two_dim { num(g.theta[1]) } else { String::new() };
        t.push(vec!["grid".into(), num(g.theta[0]), th2, num(g.p_p), num(g.p_q), String::new(), String::new()]);
    }
    t.push(vec![
        "mixed".into(),
        String::new(),
        String::new(),
        num(report.mixed_p),
        num(report.mixed_q),
        num(report.mixed_p_err),
        num(report.mixed_q_err),
    ]);

    let mut pass = report.pass;
    let mut closed = Map::new();
    if let Some(p) = s.preset.as_ref().filter(|_| !s.tilt.is_mutated()) {
        if let Some((pp, pq)) = p.closed_form_premiums() {
            let worst = report
                .grid
                .iter()
                .map(|g| rel_gap(g.p_p, pp.eval_theta(g.theta)).max(rel_gap(g.p_q, pq.eval_theta(g.theta))))
                .fold(0.0, f64::max);
            pass &= worst <= CLOSED_FORM_TOL;
            closed.insert("grid_max_relative_error".into(), json!(worst));
        }
        if let Some((mp, mq)) = p.closed_form_mixed() {
            let worst = rel_gap(report.mixed_p, mp).max(rel_gap(report.mixed_q, mq));
            pass &= worst <= CLOSED_FORM_TOL;
            closed.insert("mixed_p".into(), json!(mp));
            closed.insert("mixed_q".into(), json!(mq));
            closed.insert("mixed_max_relative_error".into(), json!(worst));
        }
    }
    let wang = match s.tilt.gamma {
        ClaimTilt::Wang { c } => wang_premium(&s.model.claims, c).ok().map(|q| json!({ "c": c, "pi_c": q.value, "abs_err": q.abs_err })),
        _ => None,
    };
    let summary = json!({
        "tilt": report.label,
        "grid_points": report.grid.len(),
        "mixed_p": report.mixed_p,
        "mixed_p_err": report.mixed_p_err,
        "mixed_q": report.mixed_q,
        "mixed_q_err": report.mixed_q_err,
        "pointwise": report.pointwise,
        "mixed": report.mixed,
        "expected_mixed": report.expected_mixed,
        "monotone_consistent": report.monotone_consistent,
        "counterexample": report.counterexample,
        "closed_form": closed,
        "wang": wang,
    });
    let status = if pass { Status::Pass } else { Status::Fail };
    Section { status, tables: vec![t], summary }
}
