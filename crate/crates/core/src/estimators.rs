//! Partition-function and importance-sampling estimators with their planners.
//!
//! Planner constants are named defaults. The guarantees they come from are
//! stated up to absolute constants, so each plan records the values it used in
//! [`PlanResult::constants`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageProfile;
use crate::distributions::SampleBatch;
use crate::divergences::{gamma_f, FGenerator};
use crate::error::{Error, Result};

/// Multiplier in the median-of-means group count `k = ceil(8 ln(1/delta))`.
pub const MOM_GROUP_FACTOR: f64 = 8.0;
/// Coverage-plan constant: `n = ceil(C1 M ln(1/delta) / eps)`.
pub const C1_COVERAGE: f64 = 8.0;
/// Divergence-plan constant: `n = ceil(C2 max(gamma ln(1/delta)/eps, c^2 ln(1/delta)/eps^2))`.
pub const C2_FDIV: f64 = 8.0;
/// Importance-sampling plan constant: `n = ceil(C3 M / eps)`.
pub const C3_IS: f64 = 6.0;
/// Quantile-plan constant: `n = ceil(18 M ln(2/delta) / eps)`.
pub const QUANTILE_CONSTANT: f64 = 18.0;
/// Divergence multiplier for the quantile plan: `M = gamma_f(4 D / eps)`.
pub const QUANTILE_GAMMA_MULTIPLIER: f64 = 4.0;
/// Divergence multiplier for the median-of-means plan: `gamma_f(6 D / eps)`.
pub const FDIV_GAMMA_MULTIPLIER: f64 = 6.0;
/// Coverage plan targets `IC_M / M <= eps / 4`.
pub const COVERAGE_EPS_DIVISOR: f64 = 4.0;
/// Quantile plan targets `Cov_M <= eps / 4`; its order statistic uses `alpha = eps / (4M)`.
pub const QUANTILE_EPS_DIVISOR: f64 = 4.0;
/// Importance-sampling plans target `IC_M / M <= eps delta / 6`.
pub const IS_TARGET_DIVISOR: f64 = 6.0;

/// Relative slack under which a computed sample size snaps to the nearest integer
/// instead of rounding up, so `288.00000000000006` plans 288 samples.
const CEIL_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlanSource {
    CoveragePlan,
    FDivPlan,
    QuantilePlan,
    IsPlan,
    SnisPlan,
    Manual,
}

impl fmt::Display for PlanSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PlanSource::CoveragePlan => "coverage",
            PlanSource::FDivPlan => "fdiv",
            PlanSource::QuantilePlan => "quantile",
            PlanSource::IsPlan => "is",
            PlanSource::SnisPlan => "snis",
            PlanSource::Manual => "manual",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: f64,
    pub n_used: usize,
    /// Median-of-means group count; 0 for other estimators.
    pub k_groups: usize,
    pub eps_target: Option<f64>,
    pub delta_target: Option<f64>,
    pub plan_source: PlanSource,
    pub true_z: Option<f64>,
    pub rel_error: Option<f64>,
}

impl EstimateReport {
    fn new(estimate: f64, n_used: usize) -> Self {
        EstimateReport {
            estimate,
            n_used,
            k_groups: 0,
            eps_target: None,
            delta_target: None,
            plan_source: PlanSource::Manual,
            true_z: None,
            rel_error: None,
        }
    }

    /// Attaches the true value and the relative error against it.
    pub fn with_truth(mut self, truth: f64) -> Self {
        self.true_z = Some(truth);
        self.rel_error = Some((self.estimate - truth).abs() / truth);
        self
    }

    pub fn with_targets(mut self, eps: Option<f64>, delta: Option<f64>) -> Self {
        self.eps_target = eps;
        self.delta_target = delta;
        self
    }

    pub fn with_source(mut self, source: PlanSource) -> Self {
        self.plan_source = source;
        self
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "estimate={} n={} k={} plan={}", self.estimate, self.n_used, self.k_groups, self.plan_source)?;
        if let Some(e) = self.eps_target {
            write!(f, " eps={e}")?;
        }
        if let Some(d) = self.delta_target {
            write!(f, " delta={d}")?;
        }
        if let (Some(z), Some(r)) = (self.true_z, self.rel_error) {
            write!(f, " true={z} rel_error={r}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// Planned sample size. Integer valued; kept as `f64` because divergence
    /// plans can exceed any machine integer.
    pub n: f64,
    /// Truncation level the plan was built on.
    pub m: f64,
    pub constants: BTreeMap<String, f64>,
    pub source: PlanSource,
}

impl PlanResult {
    fn new(n: f64, m: f64, source: PlanSource, constants: &[(&str, f64)]) -> Self {
        PlanResult {
            n: n.max(1.0),
            m,
            constants: constants.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            source,
        }
    }

    /// The planned size as a count, or an infeasibility error if it is too large to run.
    pub fn samples(&self) -> Result<usize> {
        if self.n.is_finite() && self.n <= (1u64 << 52) as f64 {
            Ok(self.n as usize)
        } else {
            Err(Error::Infeasible(format!("planned sample size {:e} is not representable", self.n)))
        }
    }
}

/// `ceil(x)`, except values within relative `1e-9` of an integer snap to it.
pub fn ceil_count(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= CEIL_SNAP * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

fn check_open_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("{name} must lie in (0, 1), got {x}")));
    }
    Ok(())
}

/// `k = ceil(8 ln(1/delta))`, at least 1.
pub fn mom_groups(delta: f64) -> Result<usize> {
    check_open_unit("delta", delta)?;
    Ok((ceil_count(MOM_GROUP_FACTOR * (1.0 / delta).ln()) as usize).max(1))
}

/// Median of means over `k` contiguous groups of size `floor(n/k)`; the remainder
/// is discarded and an even `k` takes the lower median.
pub fn median_of_means_k(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("median of means needs at least one group".into()));
    }
    if values.len() < k {
        return Err(Error::TooFewSamples { needed: k, got: values.len(), groups: k });
    }
    let m = values.len() / k;
    let mut means: Vec<f64> =
        values.chunks_exact(m).take(k).map(|g| g.iter().sum::<f64>() / m as f64).collect();
    let mid = (k - 1) / 2;
    let (_, median, _) = means.select_nth_unstable_by(mid, f64::total_cmp);
    Ok(*median)
}

pub fn median_of_means(batch: &SampleBatch, delta: f64) -> Result<EstimateReport> {
    let k = mom_groups(delta)?;
    let estimate = median_of_means_k(&batch.lambdas, k)?;
    let mut report = EstimateReport::new(estimate, batch.len()).with_targets(None, Some(delta));
    report.k_groups = k;
    Ok(report)
}

/// Plan for median of means: `M` with `IC_M / M <= eps/4`, `n = ceil(C1 M ln(1/delta)/eps)`.
pub fn plan_n_coverage(profile: &CoverageProfile, eps: f64, delta: f64) -> Result<PlanResult> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta)?;
    let m = profile.solve_m_eps(eps / COVERAGE_EPS_DIVISOR)?;
    let n = ceil_count(C1_COVERAGE * m * (1.0 / delta).ln() / eps).max(mom_groups(delta)? as f64);
    Ok(PlanResult::new(
        n,
        m,
        PlanSource::CoveragePlan,
        &[("C1", C1_COVERAGE), ("eps_divisor", COVERAGE_EPS_DIVISOR), ("mom_group_factor", MOM_GROUP_FACTOR)],
    ))
}

/// Plan for median of means from a divergence bound `D >= D_f(nu||mu)`.
///
/// `c >= 1` is a level past which `f(t)/t^2` is non-increasing; see
/// [`FGenerator::planning_c`].
pub fn plan_n_fdiv(f: &FGenerator, divergence: f64, eps: f64, delta: f64, c: f64) -> Result<PlanResult> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta)?;
    if !(divergence.is_finite() && divergence >= 0.0) {
        return Err(Error::Domain(format!("divergence must be finite and nonnegative, got {divergence}")));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::Domain(format!("c must be finite and >= 1, got {c}")));
    }
    let arg = FDIV_GAMMA_MULTIPLIER * divergence / eps;
    let gamma = gamma_f(f, arg);
    if !gamma.is_finite() {
        return Err(Error::Infeasible(format!(
            "gamma_{f}({arg}) is infinite: f(t)/t never reaches the required level"
        )));
    }
    let log = (1.0 / delta).ln();
    let n = ceil_count(C2_FDIV * (gamma * log / eps).max(c * c * log / (eps * eps)));
    if !n.is_finite() {
        return Err(Error::Infeasible(format!("planned sample size overflows at gamma = {gamma}")));
    }
    Ok(PlanResult::new(
        n.max(mom_groups(delta)? as f64),
        gamma,
        PlanSource::FDivPlan,
        &[("C2", C2_FDIV), ("gamma_multiplier", FDIV_GAMMA_MULTIPLIER), ("c", c), ("mom_group_factor", MOM_GROUP_FACTOR)],
    ))
}

/// The `ceil((1 - alpha) n)`-th smallest lambda with `alpha = eps / (4M)`.
pub fn quantile_estimator(batch: &SampleBatch, eps: f64, m: f64) -> Result<EstimateReport> {
    check_open_unit("eps", eps)?;
    if !(m >= 1.0) {
        return Err(Error::Domain(format!("M must be >= 1, got {m}")));
    }
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let index = quantile_index(n, eps / (QUANTILE_EPS_DIVISOR * m));
    let mut values = batch.lambdas.clone();
    let (_, v, _) = values.select_nth_unstable_by(index - 1, f64::total_cmp);
    Ok(EstimateReport::new(*v, n).with_targets(Some(eps), None).with_source(PlanSource::QuantilePlan))
}

/// 1-based rank `ceil((1 - alpha) n)`, clamped to `[1, n]`.
pub fn quantile_index(n: usize, alpha: f64) -> usize {
    (ceil_count((1.0 - alpha) * n as f64) as usize).clamp(1, n)
}

/// Where the quantile planner gets its truncation level from.
#[derive(Clone, Copy)]
pub enum QuantileLevel<'a> {
    /// Smallest `M >= 1` with `Cov_M <= eps/4` on an exact profile.
    Profile(&'a CoverageProfile),
    /// `M = gamma_f(4 D / eps)`.
    FDiv(&'a FGenerator, f64),
    /// A caller-supplied level.
    Fixed(f64),
}

pub fn plan_n_quantile(level: QuantileLevel<'_>, eps: f64, delta: f64) -> Result<PlanResult> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta)?;
    let m = match level {
        QuantileLevel::Profile(p) => p.min_level_with_coverage(eps / QUANTILE_EPS_DIVISOR)?.max(1.0),
        QuantileLevel::FDiv(f, d) => {
            let g = gamma_f(f, QUANTILE_GAMMA_MULTIPLIER * d / eps);
            if !g.is_finite() {
                return Err(Error::Infeasible(format!("gamma_{f} is infinite at {}", QUANTILE_GAMMA_MULTIPLIER * d / eps)));
            }
            g
        }
        QuantileLevel::Fixed(m) => {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(Error::Domain(format!("M must be finite and >= 1, got {m}")));
            }
            m
        }
    };
    let n = ceil_count(QUANTILE_CONSTANT * m * (2.0 / delta).ln() / eps);
    Ok(PlanResult::new(
        n,
        m,
        PlanSource::QuantilePlan,
        &[
            ("quantile_constant", QUANTILE_CONSTANT),
            ("quantile_gamma_multiplier", QUANTILE_GAMMA_MULTIPLIER),
            ("eps_divisor", QUANTILE_EPS_DIVISOR),
        ],
    ))
}

fn check_atom_table(batch: &SampleBatch, table: &[f64]) -> Result<()> {
    match batch.atoms.iter().find(|&&a| a >= table.len()) {
        Some(&a) => Err(Error::LengthMismatch(table.len(), a + 1)),
        None => Ok(()),
    }
}

/// Plain importance sampling `(1/n) sum ratio(X_i) g(X_i)` with normalized ratios
/// and `g` given per atom.
pub fn importance_sampling(batch: &SampleBatch, g_values: &[f64], pair_ratios: &[f64]) -> Result<EstimateReport> {
    if g_values.len() != pair_ratios.len() {
        return Err(Error::LengthMismatch(g_values.len(), pair_ratios.len()));
    }
    if batch.is_empty() {
        return Err(Error::EmptySample);
    }
    check_atom_table(batch, g_values)?;
    let sum: f64 = batch.atoms.iter().map(|&a| pair_ratios[a] * g_values[a]).sum();
    Ok(EstimateReport::new(sum / batch.len() as f64, batch.len()).with_source(PlanSource::IsPlan))
}

/// Importance sampling wrapped in median of means; trades the `1/delta` plan
/// dependence for `ln(1/delta)`.
pub fn importance_sampling_mom(
    batch: &SampleBatch,
    g_values: &[f64],
    pair_ratios: &[f64],
    delta: f64,
) -> Result<EstimateReport> {
    if g_values.len() != pair_ratios.len() {
        return Err(Error::LengthMismatch(g_values.len(), pair_ratios.len()));
    }
    check_atom_table(batch, g_values)?;
    let k = mom_groups(delta)?;
    let terms: Vec<f64> = batch.atoms.iter().map(|&a| pair_ratios[a] * g_values[a]).collect();
    let mut report = EstimateReport::new(median_of_means_k(&terms, k)?, batch.len())
        .with_targets(None, Some(delta))
        .with_source(PlanSource::IsPlan);
    report.k_groups = k;
    Ok(report)
}

/// Self-normalized importance sampling `sum lambda g / sum lambda`.
pub fn snis(batch: &SampleBatch, g_values: &[f64]) -> Result<EstimateReport> {
    if batch.is_empty() {
        return Err(Error::EmptySample);
    }
    check_atom_table(batch, g_values)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &l) in batch.atoms.iter().zip(&batch.lambdas) {
        num += l * g_values[a];
        den += l;
    }
    if !(den > 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(EstimateReport::new(num / den, batch.len()).with_source(PlanSource::SnisPlan))
}

fn is_target(eps: f64, delta: f64) -> Result<f64> {
    check_open_unit("eps", eps)?;
    check_open_unit("delta", delta)?;
    Ok(eps * delta / IS_TARGET_DIVISOR)
}

/// IS plan on the weighted profile of `(g nu / nu_g, mu)`: `IC_M/M <= eps delta / 6`, `n = ceil(C3 M / eps)`.
pub fn plan_n_is(weighted: &CoverageProfile, eps: f64, delta: f64) -> Result<PlanResult> {
    let m = weighted.solve_m_eps(is_target(eps, delta)?)?;
    Ok(PlanResult::new(
        ceil_count(C3_IS * m / eps),
        m,
        PlanSource::IsPlan,
        &[("C3", C3_IS), ("target_divisor", IS_TARGET_DIVISOR)],
    ))
}

/// SNIS plan: the larger of the thresholds solved on both profiles.
pub fn plan_n_snis(profile: &CoverageProfile, weighted: &CoverageProfile, eps: f64, delta: f64) -> Result<PlanResult> {
    let target = is_target(eps, delta)?;
    let m = profile.solve_m_eps(target)?.max(weighted.solve_m_eps(target)?);
    Ok(PlanResult::new(
        ceil_count(C3_IS * m / eps),
        m,
        PlanSource::SnisPlan,
        &[("C3", C3_IS), ("target_divisor", IS_TARGET_DIVISOR)],
    ))
}

/// Plan for [`importance_sampling_mom`]: the coverage plan on the weighted profile.
pub fn plan_n_is_mom(weighted: &CoverageProfile, eps: f64, delta: f64) -> Result<PlanResult> {
    let mut plan = plan_n_coverage(weighted, eps, delta)?;
    plan.source = PlanSource::IsPlan;
    Ok(plan)
}

/// `(1 - eps) truth <= estimate <= (1 + eps) truth`.
pub fn within_relative(estimate: f64, truth: f64, eps: f64) -> bool {
    estimate >= (1.0 - eps) * truth && estimate <= (1.0 + eps) * truth
}

/// `(1 - eps) z <= estimate <= M z`.
pub fn within_quantile_window(estimate: f64, z: f64, eps: f64, m: f64) -> bool {
    estimate >= (1.0 - eps) * z && estimate <= m * z
}
