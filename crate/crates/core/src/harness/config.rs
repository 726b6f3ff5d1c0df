use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::{
    make_bernoulli_pair, make_finite_pair, make_pointmass_pair, make_random_pair, make_twopoint_mu_pair,
    DistributionPair,
};
use crate::divergences::FGenerator;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SuccessCurve,
    PhaseTransition,
    SamplingVsCounting,
}

impl ExperimentKind {
    pub fn label(&self) -> &'static str {
        match self {
            ExperimentKind::SuccessCurve => "success-curve",
            ExperimentKind::PhaseTransition => "phase-transition",
            ExperimentKind::SamplingVsCounting => "sampling-vs-counting",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Mom,
    Quantile,
}

/// Pair family with its parameters, written as a `[family]` table with a `type` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Family {
    Bernoulli { p: f64, eps: f64, z: f64 },
    TwoPoint { p: f64, z: f64 },
    PointMass { q: f64, z: f64 },
    Identity { support: usize, z: f64 },
    Random { support: usize, seed: u64, z: f64 },
}

impl Family {
    pub fn build(&self) -> Result<DistributionPair> {
        Ok(match *self {
            Family::Bernoulli { p, eps, z } => make_bernoulli_pair(p, eps, z)?,
            Family::TwoPoint { p, z } => make_twopoint_mu_pair(p, z)?,
            Family::PointMass { q, z } => make_pointmass_pair(q, z)?,
            Family::Identity { support, z } => {
                if support == 0 {
                    return Err(Error::Domain("identity family needs support >= 1".into()));
                }
                let w = vec![1.0 / support as f64; support];
                make_finite_pair(&w, &w, z)?.with_name("identity")
            }
            Family::Random { support, seed, z } => make_random_pair(support, seed, z)?,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Family::Bernoulli { .. } => "bernoulli",
            Family::TwoPoint { .. } => "twopoint",
            Family::PointMass { .. } => "pointmass",
            Family::Identity { .. } => "identity",
            Family::Random { .. } => "random",
        }
    }

    /// `key=value` pairs joined with `;`.
    pub fn params(&self) -> String {
        match self {
            Family::Bernoulli { p, eps, z } => format!("p={p};eps={eps};z={z}"),
            Family::TwoPoint { p, z } => format!("p={p};z={z}"),
            Family::PointMass { q, z } => format!("q={q};z={z}"),
            Family::Identity { support, z } => format!("support={support};z={z}"),
            Family::Random { support, seed, z } => format!("support={support};seed={seed};z={z}"),
        }
    }
}

/// Which planner sizes the success-curve runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanChoice {
    Coverage,
    FDiv(String),
}

impl std::str::FromStr for PlanChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "coverage" => Ok(PlanChoice::Coverage),
            other => match other.strip_prefix("fdiv:") {
                Some(spec) => {
                    spec.parse::<FGenerator>()?;
                    Ok(PlanChoice::FDiv(spec.to_string()))
                }
                None => Err(Error::Parse(format!("plan must be `coverage` or `fdiv:<divergence>`, got `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    pub master_seed: u64,
    pub trials: usize,
    pub delta: f64,
    pub eps_grid: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Success curves: estimator to run.
    #[serde(default)]
    pub method: Method,
    /// Success curves: `coverage` (default) or `fdiv:<divergence>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
    /// Success curves: run this many samples instead of the planned size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_override: Option<usize>,
    /// Phase transitions: divergences to sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub f_list: Vec<String>,
    /// Phase transitions: fixed divergence budget `D`; defaults to the family's
    /// exact divergence under each generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divergence: Option<f64>,
    pub family: Family,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Domain("trials must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Domain(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.eps_grid.is_empty() {
            return Err(Error::Domain("eps_grid must not be empty".into()));
        }
        if let Some(e) = self.eps_grid.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Domain(format!("eps_grid values must lie in (0, 1), got {e}")));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::Domain("master_seed must fit in a signed 64-bit integer".into()));
        }
        self.family.build()?;
        self.plan_choice()?;
        for f in &self.f_list {
            f.parse::<FGenerator>()?;
        }
        if let Some(d) = self.divergence.filter(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Domain(format!("divergence must be finite and >= 0, got {d}")));
        }
        if self.kind == ExperimentKind::PhaseTransition && self.f_list.is_empty() {
            return Err(Error::Domain("phase-transition needs a non-empty f_list".into()));
        }
        Ok(())
    }

    pub fn plan_choice(&self) -> Result<PlanChoice> {
        self.plan.as_deref().map_or(Ok(PlanChoice::Coverage), str::parse)
    }
}
