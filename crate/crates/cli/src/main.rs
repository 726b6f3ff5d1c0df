use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use pfest_core::coverage::CoverageProfile;
use pfest_core::distributions::DistributionPair;
use pfest_core::divergences::{f_divergence, FGenerator};
use pfest_core::estimators::{
    median_of_means, plan_n_coverage, plan_n_fdiv, plan_n_is, plan_n_quantile, plan_n_snis, quantile_estimator, snis,
    within_quantile_window, within_relative, EstimateReport, PlanResult, QuantileLevel,
};
use pfest_core::harness::{run_and_emit, ExperimentConfig, Family, PlanChoice};
use pfest_core::rng::derive_seed;
use pfest_core::sampler::{astar_sample, empirical_tv, plan_n_sampling, race_counts, sampling_level, tv_mc_slack};

#[derive(Parser)]
#[command(name = "pfest", version, about = "Partition-function estimation and exponential-race sampling on finite pairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a pair file for one of the built-in families.
    Pair(PairArgs),
    /// Tabulate Cov_M, IC_M, IC_M/M and the truncated second moment over a grid.
    Coverage(CoverageArgs),
    /// Print a sample-size plan.
    Plan(PlanArgs),
    /// Run an estimator at its planned (or a given) sample size.
    Estimate(EstimateArgs),
    /// Draw approximate target samples by exponential race.
    Sample(SampleArgs),
    /// Run an experiment config and write its CSV.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyName {
    Bernoulli,
    TwoPoint,
    PointMass,
    Identity,
    Random,
}

#[derive(clap::Args)]
struct PairArgs {
    #[arg(long, value_enum)]
    family: FamilyName,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0.5)]
    q: f64,
    #[arg(long, default_value_t = 8)]
    support: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    z: f64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct CoverageArgs {
    #[arg(long)]
    pair: PathBuf,
    /// `M0:M1:STEPS`, evenly spaced and inclusive.
    #[arg(long, default_value = "0:4:40")]
    grid: String,
    /// Space the grid geometrically (needs M0 > 0).
    #[arg(long)]
    log: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PlanKind {
    Coverage,
    Fdiv,
    Quantile,
    Sampling,
    Is,
    Snis,
}

#[derive(clap::Args)]
struct PlanArgs {
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, value_enum, default_value = "coverage")]
    kind: PlanKind,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Divergence for `fdiv` plans (and `quantile` when given), e.g. `kl`, `renyi:alpha=1.5`.
    #[arg(long)]
    f: Option<String>,
    /// Divergence budget; defaults to the pair's exact divergence.
    #[arg(long)]
    divergence: Option<f64>,
    /// Per-atom test function for `is` and `snis` plans, comma separated.
    #[arg(long, value_delimiter = ',')]
    g: Option<Vec<f64>>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum EstimateMethod {
    Mom,
    Quantile,
    Snis,
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long)]
    pair: PathBuf,
    #[arg(long, value_enum)]
    method: EstimateMethod,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// `coverage` or `fdiv:<divergence>`.
    #[arg(long, default_value = "coverage")]
    plan: String,
    /// Use this many samples instead of the planned size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Per-trial results: trial, n, estimate, rel_error, success.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-atom test function for SNIS, comma separated.
    #[arg(long, value_delimiter = ',')]
    g: Option<Vec<f64>>,
}

#[derive(clap::Args)]
struct SampleArgs {
    #[arg(long)]
    pair: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// Race length; planned from the pair's coverage profile when omitted.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(clap::Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PFEST_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            _ => {
                eprintln!("error: PFEST_THREADS must be a positive integer, got {threads:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e.chain().any(|c| c.downcast_ref::<pfest_core::Error>().is_some_and(|e| e.is_infeasible()));
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Pair(a) => pair_cmd(a),
        Command::Coverage(a) => coverage_cmd(a),
        Command::Plan(a) => plan_cmd(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    }
}

fn load_pair(path: &Path) -> Result<DistributionPair> {
    DistributionPair::load(path).with_context(|| format!("loading pair {}", path.display()))
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pair_cmd(a: PairArgs) -> Result<()> {
    let family = match a.family {
        FamilyName::Bernoulli => Family::Bernoulli { p: a.p, eps: a.eps, z: a.z },
        FamilyName::TwoPoint => Family::TwoPoint { p: a.p, z: a.z },
        FamilyName::PointMass => Family::PointMass { q: a.q, z: a.z },
        FamilyName::Identity => Family::Identity { support: a.support, z: a.z },
        FamilyName::Random => Family::Random { support: a.support, seed: a.seed, z: a.z },
    };
    write_out(a.out.as_deref(), &family.build()?.to_toml()?)
}

fn parse_grid(spec: &str, log: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [m0, m1, steps] = parts.as_slice() else { bail!("grid must be M0:M1:STEPS, got {spec:?}") };
    let (m0, m1): (f64, f64) = (m0.parse()?, m1.parse()?);
    let steps: usize = steps.parse()?;
    if steps == 0 || m1.partial_cmp(&m0) != Some(std::cmp::Ordering::Greater) || m0 < 0.0 {
        bail!("grid needs 0 <= M0 < M1 and STEPS >= 1, got {spec:?}");
    }
    if log && m0 <= 0.0 {
        bail!("a log grid needs M0 > 0");
    }
    Ok((0..=steps)
        .map(|i| {
            let t = i as f64 / steps as f64;
            if log {
                m0 * (m1 / m0).powf(t)
            } else {
                m0 + (m1 - m0) * t
            }
        })
        .collect())
}

fn coverage_cmd(a: CoverageArgs) -> Result<()> {
    let pair = load_pair(&a.pair)?;
    let prof = CoverageProfile::new(&pair);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["M", "cov", "icov", "icov_over_M", "trunc_second_moment"])?;
    for m in parse_grid(&a.grid, a.log)? {
        let row = [m, prof.coverage(m), prof.integrated_coverage(m), prof.icov_over_m(m), prof.truncated_second_moment(m)];
        w.write_record(row.iter().map(|x| x.to_string()))?;
    }
    write_out(a.out.as_deref(), std::str::from_utf8(&w.into_inner()?)?)
}

fn divergence_for(pair: &DistributionPair, f: &FGenerator, given: Option<f64>) -> f64 {
    given.unwrap_or_else(|| f_divergence(pair, f))
}

fn print_plan(kind: &str, plan: &PlanResult) {
    let consts: Vec<String> = plan.constants.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("plan={kind} n={} M={} {}", plan.n, plan.m, consts.join(" "));
}

fn plan_cmd(a: PlanArgs) -> Result<()> {
    let pair = load_pair(&a.pair)?;
    let prof = CoverageProfile::new(&pair);
    let generator = a.f.as_deref().map(str::parse::<FGenerator>).transpose()?;
    let weighted = || -> Result<CoverageProfile> {
        let g = a.g.as_deref().context("--g is required for is and snis plans")?;
        Ok(CoverageProfile::new(&pair.weighted(g)?))
    };
    let plan = match a.kind {
        PlanKind::Coverage => plan_n_coverage(&prof, a.eps, a.delta)?,
        PlanKind::Fdiv => {
            let f = generator.context("--f is required for fdiv plans")?;
            let d = divergence_for(&pair, &f, a.divergence);
            plan_n_fdiv(&f, d, a.eps, a.delta, f.planning_c())?
        }
        PlanKind::Quantile => match &generator {
            Some(f) => plan_n_quantile(QuantileLevel::FDiv(f, divergence_for(&pair, f, a.divergence)), a.eps, a.delta)?,
            None => plan_n_quantile(QuantileLevel::Profile(&prof), a.eps, a.delta)?,
        },
        PlanKind::Sampling => {
            let m = sampling_level(&prof, a.eps)?;
            println!("plan=sampling n={} M={m}", plan_n_sampling(m, a.eps)?);
            return Ok(());
        }
        PlanKind::Is => plan_n_is(&weighted()?, a.eps, a.delta)?,
        PlanKind::Snis => plan_n_snis(&prof, &weighted()?, a.eps, a.delta)?,
    };
    print_plan(&plan.source.to_string(), &plan);
    Ok(())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    if a.trials == 0 {
        bail!("--trials must be >= 1");
    }
    let pair = load_pair(&a.pair)?;
    let prof = CoverageProfile::new(&pair);
    let choice: PlanChoice = a.plan.parse()?;
    let g = match a.method {
        EstimateMethod::Snis => Some(a.g.clone().context("--g is required for snis")?),
        _ => None,
    };
    let plan = match (a.method, &choice) {
        (EstimateMethod::Mom, PlanChoice::Coverage) => plan_n_coverage(&prof, a.eps, a.delta),
        (EstimateMethod::Mom, PlanChoice::FDiv(spec)) => {
            let f: FGenerator = spec.parse()?;
            plan_n_fdiv(&f, f_divergence(&pair, &f), a.eps, a.delta, f.planning_c())
        }
        (EstimateMethod::Quantile, PlanChoice::Coverage) => plan_n_quantile(QuantileLevel::Profile(&prof), a.eps, a.delta),
        (EstimateMethod::Quantile, PlanChoice::FDiv(spec)) => {
            let f: FGenerator = spec.parse()?;
            plan_n_quantile(QuantileLevel::FDiv(&f, f_divergence(&pair, &f)), a.eps, a.delta)
        }
        (EstimateMethod::Snis, _) => {
            let w = CoverageProfile::new(&pair.weighted(g.as_deref().unwrap())?);
            plan_n_snis(&prof, &w, a.eps, a.delta)
        }
    };
    let (plan, n) = match (a.n, plan) {
        (Some(n), plan) => (plan.ok(), n),
        (None, plan) => {
            let plan = plan?;
            let n = plan.samples()?;
            (Some(plan), n)
        }
    };
    let m = plan.as_ref().map_or(1.0, |p| p.m.max(1.0));
    let truth = match &g {
        Some(g) => pair.target_mean(g)?,
        None => pair.z(),
    };

    let one = |trial: u64| -> pfest_core::Result<(EstimateReport, bool)> {
        let batch = pair.sample(n, derive_seed(a.seed, trial))?;
        let report = match a.method {
            EstimateMethod::Mom => median_of_means(&batch, a.delta)?,
            EstimateMethod::Quantile => quantile_estimator(&batch, a.eps, m)?,
            EstimateMethod::Snis => snis(&batch, g.as_deref().unwrap())?,
        };
        let report = report.with_targets(Some(a.eps), Some(a.delta)).with_truth(truth);
        let report = match &plan {
            Some(p) => report.with_source(p.source),
            None => report.with_source(pfest_core::PlanSource::Manual),
        };
        let ok = match a.method {
            EstimateMethod::Quantile => within_quantile_window(report.estimate, truth, a.eps, m),
            _ => within_relative(report.estimate, truth, a.eps),
        };
        Ok((report, ok))
    };
    let results: Vec<(EstimateReport, bool)> =
        (0..a.trials as u64).into_par_iter().map(one).collect::<pfest_core::Result<_>>()?;

    if a.trials == 1 {
        println!("{} success={}", results[0].0, results[0].1);
    } else {
        let freq = results.iter().filter(|r| r.1).count() as f64 / a.trials as f64;
        let mean_err = results.iter().map(|r| r.0.rel_error.unwrap_or(f64::NAN)).sum::<f64>() / a.trials as f64;
        println!("trials={} n={n} success_freq={freq} mean_rel_error={mean_err}", a.trials);
    }
    if let Some(path) = &a.csv {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["trial", "n", "estimate", "rel_error", "success"])?;
        for (t, (r, ok)) in results.iter().enumerate() {
            w.write_record([
                t.to_string(),
                n.to_string(),
                r.estimate.to_string(),
                r.rel_error.unwrap_or(f64::NAN).to_string(),
                ok.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn sample_cmd(a: SampleArgs) -> Result<()> {
    let pair = load_pair(&a.pair)?;
    let n = match a.n {
        Some(n) => n,
        None => plan_n_sampling(sampling_level(&CoverageProfile::new(&pair), a.eps)?, a.eps)?,
    };
    match a.trials {
        None => {
            let (atom, state) = astar_sample(&pair, n, a.seed)?;
            println!("atom={atom} n={n} score={} position={}", state.best_score, state.best_index);
        }
        Some(trials) => {
            if trials == 0 {
                bail!("--trials must be >= 1");
            }
            let tally = race_counts(&pair, n, trials, a.seed)?;
            let tv = empirical_tv(&pair, &tally);
            let counts: Vec<String> = tally.counts.iter().map(u64::to_string).collect();
            println!("counts={} null_races={}", counts.join(","), tally.null_races);
            println!(
                "trials={trials} n={n} empirical_tv={tv} eps={} mc_slack={} within={}",
                a.eps,
                tv_mc_slack(pair.support_size(), trials),
                tv <= a.eps + tv_mc_slack(pair.support_size(), trials)
            );
        }
    }
    Ok(())
}

fn experiment_cmd(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    if a.out.is_some() {
        cfg.output = a.out;
    }
    let table = run_and_emit(&cfg)?;
    match &cfg.output {
        Some(p) => println!("wrote {} rows to {}", table.rows.len(), p.display()),
        None => print!("{}", table.to_csv_string()?),
    }
    Ok(())
}
