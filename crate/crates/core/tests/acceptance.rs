//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails or overruns its time budget.

use std::time::{Duration, Instant};

use pfest_core::coverage::CoverageProfile;
use pfest_core::distributions::{make_bernoulli_pair, make_random_pair, make_twopoint_mu_pair, SampleBatch};
use pfest_core::divergences::{f_divergence, gamma_f, FGenerator};
use pfest_core::estimators::{
    median_of_means_k, mom_groups, plan_n_coverage, plan_n_quantile, plan_n_snis, quantile_index, snis,
    within_relative, QuantileLevel,
};
use pfest_core::harness::{run_experiment, ExperimentConfig, ExperimentKind, Family, Method, Table};
use pfest_core::harness::experiments::run_trials;
use pfest_core::rng::derive_seed;
use pfest_core::sampler::{empirical_tv, plan_n_sampling, race_counts, sampling_level};
use pfest_core::{coverage_bound_fdiv, icov_bound_fdiv};

const SLACK: f64 = 1e-10;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let step = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| lo * (step * i as f64).exp()).collect()
}

fn random_pair(seed: u64) -> pfest_core::DistributionPair {
    make_random_pair(2 + (seed % 63) as usize, seed, 1.0 + (seed % 7) as f64).unwrap()
}

fn exact_inequalities() -> Outcome {
    let gens = [
        FGenerator::chi_squared(),
        FGenerator::kl(),
        FGenerator::renyi(1.5).unwrap(),
        FGenerator::renyi(3.0).unwrap(),
    ];
    let (mut checks, mut violations) = (0u64, Vec::new());
    for seed in 0..1000 {
        let pair = random_pair(seed);
        let prof = CoverageProfile::new(&pair);
        let grid = log_grid(1e-2, 10.0 * pair.max_finite_ratio().max(2.0), 50);
        let divs: Vec<f64> = gens.iter().map(|f| f_divergence(&pair, f)).collect();
        for &m in &grid {
            checks += 1;
            let (t2, ic) = (prof.truncated_second_moment(m), prof.integrated_coverage(m));
            if t2 > ic + SLACK {
                violations.push(format!("(a) seed {seed} M {m}: {t2} > {ic}"));
            }
            for (f, &d) in gens.iter().zip(&divs) {
                if !d.is_finite() || m <= 1.0 {
                    continue;
                }
                checks += 1;
                let cov = prof.coverage(m);
                let bound = coverage_bound_fdiv(f, d, m).unwrap();
                if cov > bound + SLACK {
                    violations.push(format!("(b) {f} seed {seed} M {m}: {cov} > {bound}"));
                }
                let c = f.c_threshold();
                if m >= c {
                    checks += 1;
                    let b = icov_bound_fdiv(f, d, m, c).unwrap();
                    if prof.icov_over_m(m) > b + SLACK {
                        violations.push(format!("(c) {f} seed {seed} M {m}: {} > {b}", prof.icov_over_m(m)));
                    }
                }
            }
        }
        for eps in [0.1, 0.25, 0.5] {
            for u in [0.25, 0.5, 0.75] {
                checks += 1;
                let pz = prof.paley_zygmund_lower_bound(eps, u).unwrap();
                if pz.bound > pz.exact + SLACK {
                    violations.push(format!("(d) seed {seed} eps {eps} u {u}: {} > {}", pz.bound, pz.exact));
                }
            }
        }
    }
    check(
        violations.is_empty(),
        format!("0 violations in {checks} checks over 1000 pairs"),
        format!("{} violations, first: {}", violations.len(), violations.first().cloned().unwrap_or_default()),
    )
}

/// Composite trapezoid of `Cov_t` over `[0, M]`.
fn quadrature(prof: &CoverageProfile, m: f64, points: usize) -> f64 {
    let h = m / points as f64;
    let inner: f64 = (1..points).map(|i| prof.coverage(i as f64 * h)).sum();
    h * (0.5 * (prof.coverage(0.0) + prof.coverage(m)) + inner)
}

fn profile_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for seed in 0..100 {
        let prof = CoverageProfile::new(&random_pair(seed));
        // trapezoid error on a step function is at most M / (2 * points)
        for i in 1..=20 {
            let m = 0.1 * i as f64;
            let (ic, q) = (prof.integrated_coverage(m), quadrature(&prof, m, 10_000));
            let rel = (ic - q).abs() / ic.max(1.0);
            worst = worst.max(rel);
            if rel > 1e-4 {
                failures.push(format!("seed {seed} M {m}: {ic} vs {q}"));
            }
        }
        if seed < 10 {
            for m in [5.0, 20.0, 50.0] {
                let (ic, q) = (prof.integrated_coverage(m), quadrature(&prof, m, 1_000_000));
                let rel = (ic - q).abs() / ic.max(1.0);
                worst = worst.max(rel);
                if rel > 1e-4 {
                    failures.push(format!("seed {seed} M {m} (fine grid): {ic} vs {q}"));
                }
            }
        }
    }
    let mut monotone_breaks = 0;
    for seed in 0..1000 {
        let pair = random_pair(seed);
        let prof = CoverageProfile::new(&pair);
        let grid = log_grid(1e-2, 10.0 * pair.max_finite_ratio().max(2.0), 50);
        for w in grid.windows(2) {
            if prof.coverage(w[1]) > prof.coverage(w[0]) || prof.icov_over_m(w[1]) > prof.icov_over_m(w[0]) + 1e-15 {
                monotone_breaks += 1;
            }
        }
    }
    check(
        failures.is_empty() && monotone_breaks == 0,
        format!("worst relative quadrature gap {worst:.2e}; Cov and IC/M monotone on 1000 grids"),
        format!("{} quadrature failures ({:?}), {monotone_breaks} monotonicity breaks", failures.len(), failures.first()),
    )
}

fn mom_guarantee() -> Outcome {
    let pair = make_bernoulli_pair(0.5, 0.25, 1.0).unwrap();
    let plan = plan_n_coverage(&CoverageProfile::new(&pair), 0.25, 0.1).unwrap();
    let n = plan.samples().unwrap();
    let s = run_trials(&pair, Method::Mom, n, 0.25, 0.1, 1.0, 500, 0x3101).unwrap();
    check(
        s.success_freq >= 0.87,
        format!("M = {}, n = {n}, success {:.3} >= 0.87", plan.m, s.success_freq),
        format!("M = {}, n = {n}, success {:.3} < 0.87", plan.m, s.success_freq),
    )
}

fn quantile_guarantee() -> Outcome {
    let pair = make_twopoint_mu_pair(0.25, 1.0).unwrap();
    let plan = plan_n_quantile(QuantileLevel::Fixed(4.0), 0.5, 0.1).unwrap();
    let n = plan.samples().unwrap();
    if n != 432 {
        return Err(format!("planned n = {n}, expected 432"));
    }
    let s = run_trials(&pair, Method::Quantile, n, 0.5, 0.1, 4.0, 500, 0xE2).unwrap();
    check(
        s.success_freq >= 0.87,
        format!("n = 432, rank {}, window success {:.3} >= 0.87", quantile_index(432, 0.5 / 16.0), s.success_freq),
        format!("window success {:.3} < 0.87", s.success_freq),
    )
}

fn sampler_guarantee() -> Outcome {
    let pair = make_bernoulli_pair(0.5, 0.25, 1.0).unwrap();
    let prof = CoverageProfile::new(&pair);
    let trials = 1_000_000;
    let slack = 3.0 * (2.0f64 / trials as f64).sqrt();
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, eps) in [0.3, 0.1, 0.03].into_iter().enumerate() {
        let m = sampling_level(&prof, eps).unwrap();
        let n = plan_n_sampling(m, eps).unwrap();
        let tv = empirical_tv(&pair, &race_counts(&pair, n, trials, 0xF1 + i as u64).unwrap());
        ok &= tv <= eps + slack;
        parts.push(format!("eps {eps}: M {m} n {n} TV {tv:.4}"));
    }
    check(ok, parts.join("; "), format!("TV above eps + {slack:.4}: {}", parts.join("; ")))
}

fn lower_bound_demo() -> Outcome {
    let eps: f64 = 0.1;
    let budget = 3.0;
    let chi = FGenerator::chi_squared();
    let gamma = gamma_f(&chi, budget / (2.0 * eps));
    let p = 2.0 * eps / gamma;
    let n = ((1.5f64).ln() / (2.0 * p)).floor() as usize;
    let pair = make_bernoulli_pair(p, eps, 1.0).unwrap();
    let high = 1;
    let trials = 500u64;
    let delta = 1.0 / 3.0;
    let k = mom_groups(delta).unwrap();
    let mut zero_high = 0;
    let mut success = 0;
    for t in 0..trials {
        let batch = pair.sample(n, derive_seed(0xD1, t)).unwrap();
        if !batch.atoms.contains(&high) {
            zero_high += 1;
        }
        let est = median_of_means_k(&batch.lambdas, k).unwrap();
        if within_relative(est, pair.z(), eps / 2.0) {
            success += 1;
        }
    }
    let freq = zero_high as f64 / trials as f64;
    let exact = (1.0 - p).powi(n as i32);
    let floor = (-2.0 * n as f64 * p).exp();
    let succ = success as f64 / trials as f64;
    let ok = (freq - exact).abs() <= 0.05 && freq >= floor - 0.05 && succ < 2.0 / 3.0;
    check(
        ok,
        format!(
            "p {p:.5}, n {n}: zero-high {freq:.3} (exact {exact:.3}, e^-2np {floor:.3}); MoM success {succ:.3} < 2/3"
        ),
        format!("p {p:.5}, n {n}: zero-high {freq:.3} vs exact {exact:.3} / floor {floor:.3}; success {succ:.3}"),
    )
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn phase_config() -> ExperimentConfig {
    ExperimentConfig {
        name: "phase".into(),
        kind: ExperimentKind::PhaseTransition,
        master_seed: 1,
        trials: 1,
        delta: 0.1,
        eps_grid: vec![0.5, 0.25, 0.1, 0.05, 0.02],
        output: None,
        method: Method::Mom,
        plan: None,
        n_override: None,
        f_list: vec!["tv".into(), "kl".into(), "renyi:alpha=3".into()],
        divergence: Some(0.5),
        family: Family::Bernoulli { p: 0.5, eps: 0.25, z: 1.0 },
    }
}

fn rows_for<'a>(t: &'a Table, f: &str) -> Vec<&'a Vec<String>> {
    let col = t.column("f").unwrap();
    t.rows.iter().filter(|r| r[col].starts_with(f)).collect()
}

fn phase_transition() -> Outcome {
    let cfg = phase_config();
    let d = cfg.divergence.unwrap();
    let t = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let (eps_c, feas_c, logn_c) = (t.column("eps").unwrap(), t.column("feasible").unwrap(), t.column("log_n").unwrap());
    let num = |r: &Vec<String>, c: usize| r[c].parse::<f64>().unwrap();

    // TV: f(t)/t -> 1/2, so the plan needs 6D/eps < 1/2
    let tv_threshold = 12.0 * d;
    let tv_ok = rows_for(&t, "tv").iter().all(|r| num(r, eps_c) >= tv_threshold || r[feas_c] == "false");

    let kl = rows_for(&t, "kl");
    let inv_eps: Vec<f64> = kl.iter().map(|r| 1.0 / num(r, eps_c)).collect();
    let kl_logn: Vec<f64> = kl.iter().map(|r| num(r, logn_c)).collect();
    let kl_slope = slope(&inv_eps, &kl_logn);
    let kl_ok = kl.iter().all(|r| r[feas_c] == "true") && (kl_slope / (6.0 * d) - 1.0).abs() <= 0.2;

    let r3 = rows_for(&t, "renyi");
    let tail = &r3[r3.len() - 2..];
    let log_inv: Vec<f64> = tail.iter().map(|r| (1.0 / num(r, eps_c)).ln()).collect();
    let r3_logn: Vec<f64> = tail.iter().map(|r| num(r, logn_c)).collect();
    let r3_slope = slope(&log_inv, &r3_logn);
    let r3_ok = (1.8..=2.2).contains(&r3_slope);

    let msg = format!(
        "TV infeasible below eps = {tv_threshold}: {tv_ok}; KL slope {kl_slope:.3} vs 6D = {}; Renyi-3 slope {r3_slope:.3}",
        6.0 * d
    );
    check(tv_ok && kl_ok && r3_ok, msg.clone(), msg)
}

fn svc_config(family: Family, eps_grid: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig {
        name: "svc".into(),
        kind: ExperimentKind::SamplingVsCounting,
        master_seed: 0x33,
        trials: 200,
        delta: 0.1,
        eps_grid,
        output: None,
        method: Method::Mom,
        plan: None,
        n_override: None,
        f_list: vec![],
        divergence: None,
        family,
    }
}

fn sampling_vs_counting() -> Outcome {
    let cfg = svc_config(Family::TwoPoint { p: 0.25, z: 1.0 }, vec![0.2, 0.1, 0.05]);
    let t = run_experiment(&cfg).map_err(|e| e.to_string())?;
    let ratios = t.floats("empirical_ratio");
    let (s, e) = (t.floats("sampler_n_empirical"), t.floats("estimator_n_empirical"));
    let monotone = ratios.windows(2).all(|w| w[1] > w[0]);
    let last = *ratios.last().unwrap();
    let msg = format!("sampler n {s:?}, estimator n {e:?}, ratios {ratios:.1?}");
    check(monotone && last >= 5.0, msg.clone(), msg)
}

fn snis_guarantee() -> Outcome {
    let pair = make_bernoulli_pair(0.5, 0.25, 3.0).unwrap();
    let g = [0.0, 1.0];
    let nu_g = pair.target_mean(&g).unwrap();
    let weighted = pair.weighted(&g).unwrap();
    let plan = plan_n_snis(&CoverageProfile::new(&pair), &CoverageProfile::new(&weighted), 0.25, 0.1).unwrap();
    let n = plan.samples().unwrap();
    let trials = 500u64;
    let hits = (0..trials)
        .filter(|&t| {
            let batch = pair.sample(n, derive_seed(0x42, t)).unwrap();
            within_relative(snis(&batch, &g).unwrap().estimate, nu_g, 0.25)
        })
        .count();
    let freq = hits as f64 / trials as f64;

    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let p = random_pair(seed);
        let batch = p.sample(200, seed).unwrap();
        let gv: Vec<f64> = (0..p.support_size()).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let c = 10f64.powf((seed % 13) as f64 - 6.0) * 1.234;
        let a = snis(&batch, &gv).unwrap().estimate;
        let b = snis(&SampleBatch { lambdas: batch.lambdas.iter().map(|l| l * c).collect(), ..batch.clone() }, &gv)
            .unwrap()
            .estimate;
        worst = worst.max((a - b).abs() / a.abs());
    }
    let msg = format!("nu_g {nu_g}, M {}, n {n}, success {freq:.3}; worst scale gap {worst:.1e}", plan.m);
    check(freq >= 0.87 && worst <= 1e-12, msg.clone(), msg)
}

fn determinism() -> Outcome {
    let mut curve = svc_config(Family::Bernoulli { p: 0.5, eps: 0.25, z: 2.0 }, vec![0.5, 0.25]);
    curve.kind = ExperimentKind::SuccessCurve;
    curve.trials = 300;
    let mut quantile = curve.clone();
    quantile.method = Method::Quantile;
    quantile.family = Family::TwoPoint { p: 0.25, z: 1.0 };
    let svc = svc_config(Family::TwoPoint { p: 0.25, z: 1.0 }, vec![0.2]);
    let configs = [curve, quantile, phase_config(), svc];
    for cfg in &configs {
        let a = run_experiment(cfg).and_then(|t| t.deterministic_body()).map_err(|e| e.to_string())?;
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = single.install(|| run_experiment(cfg)).and_then(|t| t.deterministic_body()).map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("config {} differs between runs", cfg.name));
        }
    }
    Ok(format!("{} configs byte-identical across runs and thread counts", configs.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("exact-inequality suite", 10, exact_inequalities),
        ("profile identities", 5, profile_identities),
        ("median-of-means guarantee", 60, mom_guarantee),
        ("quantile estimator guarantee", 60, quantile_guarantee),
        ("sampler guarantee", 120, sampler_guarantee),
        ("lower-bound demonstration", 60, lower_bound_demo),
        ("phase transition", 5, phase_transition),
        ("sampling vs counting separation", 120, sampling_vs_counting),
        ("SNIS guarantee", 60, snis_guarantee),
        ("determinism", 120, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(*budget);
        let (tag, detail) = match (&outcome, over) {
            (Ok(msg), false) => ("PASS", msg.clone()),
            (Ok(msg), true) => ("FAIL", format!("over time budget: {msg}")),
            (Err(msg), _) => ("FAIL", msg.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} [{:>2}] {name} ({:.2} s / {budget} s): {detail}", i + 1, elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
