//! Exponential-race sampling: approximate draws from the target using base draws
//! and unnormalized ratios only.
//!
//! Draw `X_1..X_n` from the base measure with Poisson arrival times
//! `N_i = E_1 + ... + E_i`, score each by `N_i / lambda(X_i)` and return the
//! argmin. Scaling every lambda by the same constant leaves the argmin unchanged,
//! so the unknown normalizer never enters.

use rand::Rng;
use rayon::prelude::*;

use crate::coverage::CoverageProfile;
use crate::distributions::DistributionPair;
use crate::divergences::{gamma_f, FGenerator};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, open_unit, stream};

/// Sampling plan targets `Cov_M <= eps / 3`.
pub const SAMPLER_COVERAGE_DIVISOR: f64 = 3.0;
/// Multiplier in `n = ceil(2 M ln(3/eps))`.
pub const SAMPLER_CONSTANT: f64 = 2.0;
/// Monte Carlo slack multiplier in `3 sqrt(k / trials)` for empirical TV.
pub const TV_SLACK_SIGMAS: f64 = 3.0;

/// Full record of one race.
#[derive(Debug, Clone, PartialEq)]
pub struct RaceState {
    pub atoms: Vec<usize>,
    /// Running sums of unit exponential increments.
    pub arrivals: Vec<f64>,
    /// `arrival / lambda`, `+inf` where lambda is zero.
    pub scores: Vec<f64>,
    /// Position in the draw sequence of the winner.
    pub best_index: usize,
    pub best_score: f64,
}

#[inline]
fn score(arrival: f64, lambda: f64) -> f64 {
    if lambda > 0.0 {
        arrival / lambda
    } else {
        f64::INFINITY
    }
}

/// One race of length `n` driven by `rng`; returns the winning atom.
pub fn race<R: Rng + ?Sized>(pair: &DistributionPair, n: usize, rng: &mut R) -> Result<usize> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut arrival = 0.0;
    let mut best = (f64::INFINITY, None);
    for _ in 0..n {
        let atom = pair.draw_atom(rng);
        arrival += -open_unit(rng).ln();
        let s = score(arrival, pair.lambda(atom));
        if s < best.0 {
            best = (s, Some(atom));
        }
    }
    best.1.ok_or(Error::AllNullDraws)
}

/// One seeded race with its full trace. Ties go to the earliest draw.
pub fn astar_sample(pair: &DistributionPair, n: usize, seed: u64) -> Result<(usize, RaceState)> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let mut rng = stream(seed);
    let mut state = RaceState {
        atoms: Vec::with_capacity(n),
        arrivals: Vec::with_capacity(n),
        scores: Vec::with_capacity(n),
        best_index: 0,
        best_score: f64::INFINITY,
    };
    let mut arrival = 0.0;
    for i in 0..n {
        let atom = pair.draw_atom(&mut rng);
        arrival += -open_unit(&mut rng).ln();
        let s = score(arrival, pair.lambda(atom));
        state.atoms.push(atom);
        state.arrivals.push(arrival);
        state.scores.push(s);
        if s < state.best_score {
            state.best_score = s;
            state.best_index = i;
        }
    }
    if state.best_score.is_infinite() {
        return Err(Error::AllNullDraws);
    }
    Ok((state.atoms[state.best_index], state))
}

/// `n = max(1, ceil(2 M ln(3/eps)))` for a level `M >= 1` with `Cov_M <= eps/3`.
pub fn plan_n_sampling(m: f64, eps: f64) -> Result<usize> {
    if !(eps > 0.0 && eps < 3.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 3), got {eps}")));
    }
    if !(m >= 1.0 && m.is_finite()) {
        return Err(Error::Domain(format!("M must be finite and >= 1, got {m}")));
    }
    Ok((crate::estimators::ceil_count(SAMPLER_CONSTANT * m * (3.0 / eps).ln()) as usize).max(1))
}

/// Smallest `M >= 1` with `Cov_M <= eps/3` on an exact profile.
pub fn sampling_level(profile: &CoverageProfile, eps: f64) -> Result<f64> {
    Ok(profile.min_level_with_coverage(eps / SAMPLER_COVERAGE_DIVISOR)?.max(1.0))
}

/// Level from a divergence bound: `Cov_M <= M D / f(M) <= eps/3` at `M = gamma_f(3D/eps)`.
pub fn sampling_level_fdiv(f: &FGenerator, divergence: f64, eps: f64) -> Result<f64> {
    let arg = SAMPLER_COVERAGE_DIVISOR * divergence / eps;
    let m = gamma_f(f, arg);
    if !m.is_finite() {
        return Err(Error::Infeasible(format!("gamma_{f}({arg}) is infinite")));
    }
    Ok(m.max(1.0))
}

/// Outcome tallies of repeated races.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaceCounts {
    pub counts: Vec<u64>,
    /// Races in which every draw had zero ratio and nothing was returned.
    pub null_races: u64,
}

impl RaceCounts {
    pub fn trials(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.null_races
    }
}

/// Tallies over `trials` independent races, trial `t` seeded with
/// `derive_seed(master_seed, t)`.
pub fn race_counts(pair: &DistributionPair, n: usize, trials: usize, master_seed: u64) -> Result<RaceCounts> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let k = pair.support_size();
    let fresh = || RaceCounts { counts: vec![0u64; k], null_races: 0 };
    Ok((0..trials as u64)
        .into_par_iter()
        .fold(fresh, |mut acc, t| {
            let mut rng = stream(derive_seed(master_seed, t));
            match race(pair, n, &mut rng) {
                Ok(atom) => acc.counts[atom] += 1,
                Err(_) => acc.null_races += 1,
            }
            acc
        })
        .reduce(fresh, |mut a, b| {
            a.counts.iter_mut().zip(b.counts).for_each(|(x, y)| *x += y);
            a.null_races += b.null_races;
            a
        }))
}

/// TV between the empirical output law and the target. Races that returned
/// nothing count as mass on an extra outcome the target never produces.
pub fn empirical_tv(pair: &DistributionPair, tally: &RaceCounts) -> f64 {
    let total = tally.trials() as f64;
    let freqs: Vec<f64> = tally.counts.iter().map(|&c| c as f64 / total).collect();
    pair.tv_to_target(&freqs) + 0.5 * tally.null_races as f64 / total
}

/// `3 sqrt(k / trials)` for a support of size `k`.
pub fn tv_mc_slack(k: usize, trials: usize) -> f64 {
    TV_SLACK_SIGMAS * (k as f64 / trials as f64).sqrt()
}
