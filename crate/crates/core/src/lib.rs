//! Partition-function estimation and approximate sampling on finite supports,
//! planned from coverage profiles and f-divergences.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod distributions;
pub mod divergences;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod rng;
pub mod sampler;

pub use coverage::{coverage_bound_fdiv, icov_bound_fdiv, paley_zygmund_fdiv, CoverageProfile, PzBound, TailBound};
pub use distributions::{
    make_bernoulli_pair, make_finite_pair, make_pointmass_pair, make_random_pair, make_twopoint_mu_pair,
    make_weighted_pair, DistributionPair, SampleBatch,
};
pub use divergences::{classify_regime, f_divergence, gamma_f, FGenerator, Regime};
pub use error::{Error, Result};
pub use estimators::{
    importance_sampling, median_of_means, plan_n_coverage, plan_n_fdiv, plan_n_is, plan_n_quantile, plan_n_snis,
    quantile_estimator, snis, EstimateReport, PlanResult, PlanSource, QuantileLevel,
};
pub use harness::{ExperimentConfig, ExperimentKind, Family, Table};
pub use sampler::{astar_sample, plan_n_sampling, RaceState};
