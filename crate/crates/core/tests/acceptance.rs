//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with a
//! nonzero status if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use cmrp::diagnostics::{
    association_inequality, compensated_drift, jensen_gap, martingale_unit_mean, pathlaw_equivalence, slln_doubling,
    McConfig, Monotone,
};
use cmrp::premium::{
    conditional_premium_density, mixed_premium_density, mixed_q_premium, ordering_report, q_premium, wang_premium,
    Verdict, GRID_POINTS,
};
use cmrp::presets::{default_preset, Preset, NAMES};
use cmrp::ruin::{is_premium, mixed_cramer_lundberg, ruin_prob_is, DEFAULT_MAX_CLAIMS};
use cmrp::tilt::q_model;
use cmrp::{Exec, Law, Tilt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 100_000;
const Z: f64 = 3.29;
const Z_DRIFT: f64 = 3.0;
const KS_ALPHA: f64 = 0.01;
const PERMUTATIONS: usize = 199;
const MIN_ESS: f64 = 1e3;
const SEED: u64 = 42;
const TILTED: [&str; 3] = ["example1", "example2", "example3"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn preset(name: &str) -> Preset {
    default_preset(name).expect("presets build")
}

fn unit_mean_passes(p: &Preset, tilt: &Tilt) -> (bool, Vec<f64>) {
    let cfg = McConfig::new(N, SEED).with_z(Z);
    let reps = martingale_unit_mean(&p.model, tilt, &[1.0, 5.0, 10.0], cfg).expect("martingale check runs");
    (reps.iter().all(|r| r.pass), reps.iter().map(|r| r.z).collect())
}

fn pathlaw_passes(p: &Preset, tilt: &Tilt) -> (bool, f64, f64) {
    let cfg = McConfig::new(N, SEED);
    let reps = pathlaw_equivalence(&p.model, tilt, 5.0, PERMUTATIONS, KS_ALPHA, cfg).expect("KS check runs");
    let min_p = reps.iter().map(|r| r.p_value).fold(1.0, f64::min);
    let ess = reps[0].ess;
    (reps.iter().all(|r| r.pass) && ess >= MIN_ESS, min_p, ess)
}

fn martingale_normalization() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in TILTED {
        let p = preset(name);
        let start = Instant::now();
        let (ok, zs) = unit_mean_passes(&p, &p.tilt);
        let secs = start.elapsed().as_secs_f64();
        let ok = ok && secs < 30.0;
        pass &= ok;
        parts.push(format!("{name} z=[{:.2}, {:.2}, {:.2}] {secs:.1}s", zs[0], zs[1], zs[2]));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn law_equivalence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in NAMES {
        let p = preset(name);
        let (ok, min_p, ess) = pathlaw_passes(&p, &p.tilt);
        pass &= ok;
        parts.push(format!("{name} p={min_p:.3} ess={ess:.0}"));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn compensator() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in NAMES {
        let p = preset(name);
        let q = q_model(&p.model, &p.tilt).expect("tilted model");
        let c = is_premium(&p.model, &p.tilt).expect("tilted premium");
        let cfg = McConfig::new(N, SEED).with_z(Z_DRIFT);
        let reps = compensated_drift(&q, c, &[5.0, 10.0], cfg).expect("drift runs");
        pass &= reps.iter().all(|r| r.pass);
        parts.push(format!("{name} z=[{:.2}, {:.2}]", reps[0].z, reps[1].z));
    }
    let p = preset("example2");
    let reps = jensen_gap(&p.model, &[10.0, 20.0], McConfig::new(N, SEED).with_z(Z_DRIFT)).expect("jensen runs");
    pass &= reps.iter().all(|r| r.pass);
    parts.push(format!("jensen gap z=[{:.1}, {:.1}]", reps[0].z, reps[1].z));
    Outcome { pass, detail: parts.join("; ") }
}

fn ruin_oracle() -> Outcome {
    let p = preset("exp-exp-ruin");
    let oracle = p.ruin_oracle.expect("oracle data");
    let mut pass = true;
    let mut parts = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let start = Instant::now();
    for u in [0.5, 1.0, 2.0, 5.0] {
        let cfg = McConfig::new(N, 7);
        let r = ruin_prob_is(&p.model, &p.tilt, u, DEFAULT_MAX_CLAIMS, cfg).expect("ruin estimate");
        let exact = mixed_cramer_lundberg(&p.model.mixing, |th| th[0], oracle.eta, |th| oracle.premium_per_theta * th[0], u)
            .expect("oracle quadrature")
            .value;
        let z = (r.estimate.value - exact) / r.estimate.stderr;
        let ruined = r.ruined as f64 / cfg.n as f64;
        pass &= z.abs() <= Z_DRIFT && ruined > 0.99;
        if let Some((v, se)) = prev {
            pass &= r.estimate.value <= v + Z_DRIFT * (se * se + r.estimate.stderr.powi(2)).sqrt();
        }
        prev = Some((r.estimate.value, r.estimate.stderr));
        parts.push(format!("u={u} est={:.5} exact={exact:.5} z={z:.2} ruined={:.4}", r.estimate.value, ruined));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    parts.push(format!("{secs:.1}s"));
    Outcome { pass, detail: parts.join("; ") }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn premium_closed_forms() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in ["example1", "example2"] {
        let p = preset(name);
        let (pp, pq) = p.closed_form_premiums().expect("closed forms");
        for th in p.model.mixing.quantile_grid(8).expect("grid") {
            worst = worst.max(rel(conditional_premium_density(&p.model, th).unwrap(), pp.eval_theta(th)));
            worst = worst.max(rel(q_premium(&p.model, &p.tilt, th).unwrap(), pq.eval_theta(th)));
        }
        if let Some((mp, mq)) = p.closed_form_mixed() {
            worst = worst.max(rel(mixed_premium_density(&p.model).unwrap().value, mp));
            worst = worst.max(rel(mixed_q_premium(&p.model, &p.tilt).unwrap().value, mq));
        }
    }
    let wang = wang_premium(&Law::Uniform { lo: 0.0, hi: 1.0 }, 2.0).unwrap().value;
    let wang_err = (wang - 2.0 / 3.0).abs();
    Outcome {
        pass: worst <= 1e-8 && wang_err <= 1e-10,
        detail: format!("max relative error {worst:.2e}; Wang c=2 error {wang_err:.2e}"),
    }
}

fn ordering() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, expected) in [("example2", Verdict::Less), ("example2-cou", Verdict::Greater)] {
        let p = preset(name);
        let grid = p.model.mixing.quantile_grid(GRID_POINTS).expect("grid");
        let r = ordering_report(&p.model, &p.tilt, &grid).expect("ordering report");
        let (cp, cq) = p.closed_form_mixed().expect("closed forms");
        let closed = if cp < cq { Verdict::Less } else { Verdict::Greater };
        let ok = r.pointwise == Verdict::Less && r.mixed == expected && closed == expected && r.pass;
        pass &= ok;
        parts.push(format!(
            "{name} pointwise={:?} mixed={:?} closed={:?} p(P)={:.6} p(Q)={:.6}",
            r.pointwise, r.mixed, closed, r.mixed_p, r.mixed_q
        ));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn slln() -> Outcome {
    let p = preset("example2");
    let r = slln_doubling(&p.model, 200.0, 20, McConfig::new(1_000, SEED)).expect("slln runs");
    Outcome {
        pass: r.improved * 10 >= r.replicates * 9,
        detail: format!("{}/{} replicates improved", r.improved, r.replicates),
    }
}

fn association() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let cases = 200;
    let (mut held, mut opposite, mut f64_agree) = (0, 0, 0);
    for _ in 0..cases {
        let size = rng.random_range(1..=8usize);
        let mut atoms: Vec<f64> = Vec::with_capacity(size);
        while atoms.len() < size {
            let a = f64::from(rng.random_range(-20..=20i32)) / 4.0;
            if !atoms.contains(&a) {
                atoms.push(a);
            }
        }
        let raw: Vec<f64> = (0..size).map(|_| f64::from(rng.random_range(1..=16u32))).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|a, b| atoms[*a].total_cmp(&atoms[*b]));
        let f_dir = if rng.random_bool(0.5) { Monotone::Increasing } else { Monotone::Decreasing };
        let g_dir = if rng.random_bool(0.5) { Monotone::Increasing } else { Monotone::Decreasing };
        let mut table = |dir: Monotone| {
            let mut vals = vec![0.0; size];
            let mut acc = f64::from(rng.random_range(-8..=8i32));
            for &i in &order {
                acc += f64::from(rng.random_range(0..=4u32)) / 2.0;
                vals[i] = if dir == Monotone::Increasing { acc } else { -acc };
            }
            vals
        };
        let fv = table(f_dir);
        let gv = table(g_dir);
        let mut in_a: Vec<bool> = (0..size).map(|_| rng.random_bool(0.7)).collect();
        in_a[rng.random_range(0..size)] = true;
        let idx = |x: f64| atoms.iter().position(|a| *a == x).expect("atom");
        let law = Law::FiniteDiscrete { atoms: atoms.clone(), weights: weights.clone() };
        let r = association_inequality(&law, |x| fv[idx(x)], f_dir, |x| gv[idx(x)], g_dir, |x| in_a[idx(x)])
            .expect("association check");
        if r.holds {
            held += 1;
        }
        if f_dir != g_dir {
            opposite += 1;
        }
        // floating-point recomputation of the same sums; only the sign of a clear gap is compared
        let (mut pa, mut efg, mut ef, mut eg) = (0.0, 0.0, 0.0, 0.0);
        for i in (0..size).filter(|i| in_a[*i]) {
            pa += weights[i];
            efg += weights[i] * fv[i] * gv[i];
            ef += weights[i] * fv[i];
            eg += weights[i] * gv[i];
        }
        let gap = pa * efg - ef * eg;
        let scale = 1e-9 * (pa * efg).abs().max((ef * eg).abs()).max(1.0);
        let sign_ok = if f_dir == g_dir { gap >= -scale } else { gap <= scale };
        if sign_ok {
            f64_agree += 1;
        }
    }
    Outcome {
        pass: held == cases && f64_agree == cases && opposite > 0 && cases - opposite > 0,
        detail: format!("{held}/{cases} hold exactly ({opposite} opposite-direction cases); {f64_agree}/{cases} agree in floating point"),
    }
}

fn mutation_sensitivity() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in TILTED {
        let p = preset(name);
        for (label, tilt) in
            [("alpha+0.1", p.tilt.clone().with_alpha_shift(0.1)), ("xi*1.1", p.tilt.clone().with_xi_scale(1.1))]
        {
            let (c1, _) = unit_mean_passes(&p, &tilt);
            let (c2, min_p, _) = pathlaw_passes(&p, &tilt);
            pass &= !c1 && !c2;
            parts.push(format!(
                "{name} {label}: unit mean {}, KS {} (p={min_p:.3})",
                if c1 { "passed" } else { "failed" },
                if c2 { "passed" } else { "failed" }
            ));
        }
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn reproducibility() -> Outcome {
    let mut pass = true;
    let mut checked = 0;
    for name in NAMES {
        let p = preset(name);
        let run = |exec: Exec| {
            let cfg = McConfig::new(20_000, SEED).with_exec(exec);
            let m: Vec<f64> = martingale_unit_mean(&p.model, &p.tilt, &[1.0, 5.0], cfg)
                .unwrap()
                .iter()
                .flat_map(|r| [r.estimate.value, r.estimate.stderr])
                .collect();
            let r = ruin_prob_is(&p.model, &p.tilt, 1.0, DEFAULT_MAX_CLAIMS, McConfig { n: 2_000, ..cfg }).unwrap();
            (m, r.estimate.value.to_bits(), r.estimate.stderr.to_bits())
        };
        let (m1, v1, s1) = run(Exec::with_threads(1));
        let (m8, v8, s8) = run(Exec::with_threads(8));
        let same = m1.iter().zip(&m8).all(|(a, b)| a.to_bits() == b.to_bits()) && v1 == v8 && s1 == s8;
        pass &= same;
        checked += 1;
    }
    Outcome { pass, detail: format!("{checked} presets bitwise identical with 1 and 8 threads: {pass}") }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("martingale normalization", martingale_normalization),
        ("measure-change law equivalence", law_equivalence),
        ("compensator drift and Jensen gap", compensator),
        ("ruin IS vs Cramer-Lundberg", ruin_oracle),
        ("premium closed forms", premium_closed_forms),
        ("ordering and counterexample", ordering),
        ("SLLN doubling", slln),
        ("exact association inequality", association),
        ("mutation sensitivity", mutation_sensitivity),
        ("reproducibility across thread counts", reproducibility),
    ];
    let mut failed = 0;
    let total = Instant::now();
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let secs = Duration::as_secs_f64(&start.elapsed());
        println!("criterion {:>2} {}: {name} [{secs:.1}s] {}", k + 1, if out.pass { "PASS" } else { "FAIL" }, out.detail);
        if !out.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), total.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
