use std::time::Instant;

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind, Method, PlanChoice};
use super::table::{fmt_f64, Table};
use crate::coverage::CoverageProfile;
use crate::distributions::DistributionPair;
use crate::divergences::{classify_regime, f_divergence, FGenerator};
use crate::error::{Error, Result};
use crate::estimators::{
    self, median_of_means_k, mom_groups, plan_n_coverage, plan_n_fdiv, plan_n_quantile, quantile_estimator,
    within_quantile_window, within_relative, PlanResult, QuantileLevel,
};
use crate::rng::derive_seed;
use crate::sampler::{self, empirical_tv, plan_n_sampling, race_counts, sampling_level};

/// Minimal-n search accepts an estimator size once its success frequency reaches
/// `1 - delta - SEARCH_SUCCESS_SLACK`.
pub const SEARCH_SUCCESS_SLACK: f64 = 0.05;
/// Largest sample size the minimal-n search will probe.
pub const SEARCH_MAX_N: usize = 1 << 24;

pub const SUCCESS_CURVE_COLUMNS: [&str; 14] = [
    "family",
    "params",
    "method",
    "plan",
    "eps",
    "delta",
    "m",
    "n_planned",
    "n_used",
    "trials",
    "success_freq",
    "mean_rel_error",
    "reason",
    "wallclock_ms",
];

pub const PHASE_TRANSITION_COLUMNS: [&str; 13] = [
    "family",
    "f",
    "regime",
    "c",
    "divergence",
    "eps",
    "delta",
    "gamma",
    "n_planned",
    "log_n",
    "feasible",
    "reason",
    "wallclock_ms",
];

pub const SAMPLING_VS_COUNTING_COLUMNS: [&str; 15] = [
    "family",
    "params",
    "eps",
    "delta",
    "probe_trials",
    "sampler_m",
    "sampler_n_planned",
    "sampler_n_empirical",
    "estimator_m",
    "estimator_n_planned",
    "estimator_n_empirical",
    "planned_ratio",
    "empirical_ratio",
    "reason",
    "wallclock_ms",
];

fn header(cfg: &ExperimentConfig, columns: &[&str]) -> Table {
    let mut t = Table::new(columns);
    t.meta("name", &cfg.name);
    t.meta("kind", cfg.kind.label());
    t.meta("master_seed", cfg.master_seed);
    t.meta("trials", cfg.trials);
    t.meta("delta", cfg.delta);
    t.meta("family", cfg.family.label());
    t.meta("params", cfg.family.params());
    t.meta("C1", estimators::C1_COVERAGE);
    t.meta("C2", estimators::C2_FDIV);
    t.meta("C3", estimators::C3_IS);
    t.meta("quantile_constant", estimators::QUANTILE_CONSTANT);
    t.meta("quantile_gamma_multiplier", estimators::QUANTILE_GAMMA_MULTIPLIER);
    t.meta("fdiv_gamma_multiplier", estimators::FDIV_GAMMA_MULTIPLIER);
    t.meta("mom_group_factor", estimators::MOM_GROUP_FACTOR);
    t.meta("sampler_constant", sampler::SAMPLER_CONSTANT);
    t.meta("sampler_coverage_divisor", sampler::SAMPLER_COVERAGE_DIVISOR);
    t.meta("search_success_slack", SEARCH_SUCCESS_SLACK);
    t
}

fn elapsed_ms(start: Instant) -> String {
    format!("{:.3}", start.elapsed().as_secs_f64() * 1e3)
}

/// Runs the experiment named by `cfg.kind`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    match cfg.kind {
        ExperimentKind::SuccessCurve => run_success_curve(cfg),
        ExperimentKind::PhaseTransition => run_phase_transition(cfg),
        ExperimentKind::SamplingVsCounting => run_sampling_vs_counting(cfg),
    }
}

fn plan_for(cfg: &ExperimentConfig, pair: &DistributionPair, profile: &CoverageProfile, eps: f64) -> Result<PlanResult> {
    let choice = cfg.plan_choice()?;
    match (cfg.method, choice) {
        (Method::Mom, PlanChoice::Coverage) => plan_n_coverage(profile, eps, cfg.delta),
        (Method::Mom, PlanChoice::FDiv(spec)) => {
            let f: FGenerator = spec.parse()?;
            let d = f_divergence(pair, &f);
            plan_n_fdiv(&f, d, eps, cfg.delta, f.planning_c())
        }
        (Method::Quantile, PlanChoice::Coverage) => plan_n_quantile(QuantileLevel::Profile(profile), eps, cfg.delta),
        (Method::Quantile, PlanChoice::FDiv(spec)) => {
            let f: FGenerator = spec.parse()?;
            let d = f_divergence(pair, &f);
            plan_n_quantile(QuantileLevel::FDiv(&f, d), eps, cfg.delta)
        }
    }
}

/// Outcome of `trials` seeded estimations at a fixed size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSummary {
    pub success_freq: f64,
    pub mean_rel_error: f64,
}

/// Runs `trials` estimations of size `n`; trial `t` samples with `derive_seed(seed, t)`.
/// `m` is the quantile level and is ignored for median of means.
#[allow(clippy::too_many_arguments)]
pub fn run_trials(
    pair: &DistributionPair,
    method: Method,
    n: usize,
    eps: f64,
    delta: f64,
    m: f64,
    trials: usize,
    seed: u64,
) -> Result<TrialSummary> {
    let z = pair.z();
    let k = mom_groups(delta)?;
    let outcomes: Vec<(bool, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let batch = pair.sample(n, derive_seed(seed, t))?;
            let (estimate, ok) = match method {
                Method::Mom => {
                    let e = median_of_means_k(&batch.lambdas, k)?;
                    (e, within_relative(e, z, eps))
                }
                Method::Quantile => {
                    let e = quantile_estimator(&batch, eps, m)?.estimate;
                    (e, within_quantile_window(e, z, eps, m))
                }
            };
            Ok((ok, (estimate - z).abs() / z))
        })
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|o| o.0).count();
    Ok(TrialSummary {
        success_freq: hits as f64 / trials as f64,
        mean_rel_error: outcomes.iter().map(|o| o.1).sum::<f64>() / trials as f64,
    })
}

/// Per eps: plan a size, run `trials` estimations, record the success frequency.
pub fn run_success_curve(cfg: &ExperimentConfig) -> Result<Table> {
    let pair = cfg.family.build()?;
    let profile = CoverageProfile::new(&pair);
    let mut table = header(cfg, &SUCCESS_CURVE_COLUMNS);
    let method = match cfg.method {
        Method::Mom => "mom",
        Method::Quantile => "quantile",
    };
    for (i, &eps) in cfg.eps_grid.iter().enumerate() {
        let start = Instant::now();
        let plan = plan_for(cfg, &pair, &profile, eps);
        let (m, n_planned) = match &plan {
            Ok(p) => (p.m, p.n),
            Err(_) => (f64::NAN, f64::NAN),
        };
        let n_used = match (cfg.n_override, &plan) {
            (Some(n), _) => Ok(n),
            (None, Ok(p)) => p.samples(),
            (None, Err(e)) => Err(e.clone()),
        };
        let run = n_used.clone().and_then(|n| {
            if cfg.method == Method::Quantile && !m.is_finite() {
                return Err(Error::Infeasible("quantile runs need a planned level".into()));
            }
            run_trials(&pair, cfg.method, n, eps, cfg.delta, m.max(1.0), cfg.trials, derive_seed(cfg.master_seed, i as u64))
        });
        let reason = match (&plan, &run) {
            (_, Err(e)) => e.to_string(),
            (Err(e), Ok(_)) => format!("plan failed, ran override: {e}"),
            _ => String::new(),
        };
        let (freq, err) = run.map(|s| (s.success_freq, s.mean_rel_error)).unwrap_or((f64::NAN, f64::NAN));
        table.push(vec![
            cfg.family.label().into(),
            cfg.family.params(),
            method.into(),
            cfg.plan.clone().unwrap_or_else(|| "coverage".into()),
            fmt_f64(eps),
            fmt_f64(cfg.delta),
            fmt_f64(m),
            fmt_f64(n_planned),
            n_used.map(|n| n.to_string()).unwrap_or_else(|_| "NaN".into()),
            cfg.trials.to_string(),
            fmt_f64(freq),
            fmt_f64(err),
            reason,
            elapsed_ms(start),
        ]);
    }
    Ok(table)
}

/// Planned sizes per divergence over the eps grid at a fixed budget `D`.
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<Table> {
    let pair = cfg.family.build()?;
    let mut table = header(cfg, &PHASE_TRANSITION_COLUMNS);
    for spec in &cfg.f_list {
        let f: FGenerator = spec.parse()?;
        let regime = classify_regime(&f)?;
        let c = f.planning_c();
        let d = cfg.divergence.unwrap_or_else(|| f_divergence(&pair, &f));
        for &eps in &cfg.eps_grid {
            let start = Instant::now();
            let plan = if d.is_finite() {
                plan_n_fdiv(&f, d, eps, cfg.delta, c)
            } else {
                Err(Error::Infeasible(format!("D_{f} is infinite")))
            };
            let (gamma, n, feasible, reason) = match plan {
                Ok(p) => (p.m, p.n, true, String::new()),
                Err(e) => (f64::NAN, f64::NAN, false, e.to_string()),
            };
            table.push(vec![
                cfg.family.label().into(),
                f.name().into(),
                regime.to_string(),
                fmt_f64(c),
                fmt_f64(d),
                fmt_f64(eps),
                fmt_f64(cfg.delta),
                fmt_f64(gamma),
                fmt_f64(n),
                fmt_f64(n.ln()),
                feasible.to_string(),
                reason,
                elapsed_ms(start),
            ]);
        }
    }
    Ok(table)
}

/// Smallest `n >= start` accepted by `pred`, by doubling then integer bisection.
/// Assumes `pred` is monotone; the result is empirical when it is estimated.
pub fn minimal_n(start: usize, max_n: usize, mut pred: impl FnMut(usize) -> Result<bool>) -> Result<Option<usize>> {
    let start = start.max(1);
    if pred(start)? {
        return Ok(Some(start));
    }
    let (mut lo, mut hi) = (start, start * 2);
    loop {
        if hi > max_n {
            return Ok(None);
        }
        if pred(hi)? {
            break;
        }
        lo = hi;
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(hi))
}

/// Per eps: planned and empirically minimal sizes for sampling (TV <= eps) and
/// for median-of-means estimation ((1 +- eps) with frequency `1 - delta - 0.05`),
/// each probe using `trials` runs. Trial seeds do not depend on `n`, and the
/// estimator size is always a multiple of the group count.
pub fn run_sampling_vs_counting(cfg: &ExperimentConfig) -> Result<Table> {
    let pair = cfg.family.build()?;
    let profile = CoverageProfile::new(&pair);
    let mut table = header(cfg, &SAMPLING_VS_COUNTING_COLUMNS);
    let k = mom_groups(cfg.delta)?;
    for (i, &eps) in cfg.eps_grid.iter().enumerate() {
        let start = Instant::now();
        let row_seed = derive_seed(cfg.master_seed, i as u64);
        let mut reasons = Vec::new();

        let sampler_m = sampling_level(&profile, eps)?;
        let sampler_planned = plan_n_sampling(sampler_m, eps)?;
        let race_seed = derive_seed(row_seed, 1);
        let sampler_emp = minimal_n(1, SEARCH_MAX_N, |n| {
            Ok(empirical_tv(&pair, &race_counts(&pair, n, cfg.trials, race_seed)?) <= eps)
        })?;

        let est_plan = plan_n_coverage(&profile, eps, cfg.delta)?;
        let est_seed = derive_seed(row_seed, 2);
        let threshold = 1.0 - cfg.delta - SEARCH_SUCCESS_SLACK;
        // Searched over the group size m with n = k m. A single group size can be
        // spuriously exact when m times an atom's base mass is an integer, so a
        // size counts only if the next group size succeeds too.
        let passes = |m: usize| -> Result<bool> {
            let s = run_trials(&pair, Method::Mom, k * m, eps, cfg.delta, 1.0, cfg.trials, est_seed)?;
            Ok(s.success_freq >= threshold)
        };
        let est_emp = minimal_n(1, SEARCH_MAX_N / k, |m| Ok(passes(m)? && passes(m + 1)?))?.map(|m| k * m);

        if sampler_emp.is_none() {
            reasons.push(format!("sampler search exceeded n = {SEARCH_MAX_N}"));
        }
        if est_emp.is_none() {
            reasons.push(format!("estimator search exceeded n = {SEARCH_MAX_N}"));
        }
        let as_f = |x: Option<usize>| x.map_or(f64::NAN, |v| v as f64);
        table.push(vec![
            cfg.family.label().into(),
            cfg.family.params(),
            fmt_f64(eps),
            fmt_f64(cfg.delta),
            cfg.trials.to_string(),
            fmt_f64(sampler_m),
            sampler_planned.to_string(),
            fmt_f64(as_f(sampler_emp)),
            fmt_f64(est_plan.m),
            fmt_f64(est_plan.n),
            fmt_f64(as_f(est_emp)),
            fmt_f64(est_plan.n / sampler_planned as f64),
            fmt_f64(as_f(est_emp) / as_f(sampler_emp)),
            reasons.join("; "),
            elapsed_ms(start),
        ]);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Family;

    fn cfg(kind: ExperimentKind, family: Family) -> ExperimentConfig {
        ExperimentConfig {
            name: "t".into(),
            kind,
            master_seed: 11,
            trials: 50,
            delta: 0.1,
            eps_grid: vec![0.5, 0.2],
            output: None,
            method: Method::Mom,
            plan: None,
            n_override: None,
            f_list: vec![],
            divergence: None,
            family,
        }
    }

    #[test]
    fn identity_success_is_certain() {
        let c = cfg(ExperimentKind::SuccessCurve, Family::Identity { support: 4, z: 2.0 });
        let t = run_success_curve(&c).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.floats("success_freq").iter().all(|&f| f == 1.0));
        assert!(t.floats("mean_rel_error").iter().all(|&e| e < 1e-15));
    }

    #[test]
    fn infeasible_rows_carry_reasons() {
        let mut c = cfg(ExperimentKind::SuccessCurve, Family::PointMass { q: 0.3, z: 1.0 });
        c.eps_grid = vec![0.5];
        let t = run_success_curve(&c).unwrap();
        assert!(t.floats("success_freq")[0].is_nan());
        assert!(!t.rows[0][t.column("reason").unwrap()].is_empty());
    }

    #[test]
    fn metadata_logs_constants() {
        let c = cfg(ExperimentKind::SuccessCurve, Family::Identity { support: 2, z: 1.0 });
        let t = run_success_curve(&c).unwrap();
        for key in ["C1", "C2", "C3", "quantile_constant", "quantile_gamma_multiplier"] {
            assert!(t.metadata.iter().any(|(k, _)| k == key), "{key}");
        }
    }

    #[test]
    fn phase_transition_marks_linear_rows() {
        let mut c = cfg(ExperimentKind::PhaseTransition, Family::Identity { support: 2, z: 1.0 });
        c.f_list = vec!["tv".into(), "kl".into()];
        c.divergence = Some(0.5);
        let t = run_phase_transition(&c).unwrap();
        assert_eq!(t.rows.len(), 4);
        let feasible = t.column("feasible").unwrap();
        assert_eq!(t.rows[0][feasible], "false");
        assert_eq!(t.rows[2][feasible], "true");
    }

    #[test]
    fn minimal_n_search() {
        assert_eq!(minimal_n(1, 1 << 20, |n| Ok(n >= 37)).unwrap(), Some(37));
        assert_eq!(minimal_n(19, 1 << 20, |n| Ok(n >= 5)).unwrap(), Some(19));
        assert_eq!(minimal_n(1, 100, |_| Ok(false)).unwrap(), None);
    }

    #[test]
    fn sampling_vs_counting_identity_control() {
        let mut c = cfg(ExperimentKind::SamplingVsCounting, Family::Identity { support: 1, z: 1.0 });
        c.eps_grid = vec![0.2];
        let t = run_sampling_vs_counting(&c).unwrap();
        assert_eq!(t.floats("sampler_n_empirical"), vec![1.0]);
        assert_eq!(t.floats("estimator_n_empirical"), vec![mom_groups(0.1).unwrap() as f64]);
    }
}
