//! Exact coverage profiles of finite pairs and the coverage/divergence bounds.
//!
//! `Cov_M = nu(ratio >= M)` (inclusive at atoms equal to `M`), and
//! `IC_M = int_0^M Cov_t dt`, evaluated through `IC_M = E_nu[min(ratio, M)]`.
//! Target mass on base-null atoms counts as ratio `+inf`.
//!
//! Inverse queries return infima: for a threshold `target`,
//! [`CoverageProfile::min_level_with_coverage`] returns `inf { M : Cov_M <= target }`.
//! Because `Cov` is left-continuous and steps down just past each atom, the
//! infimum sits on an atom value `r_j` and satisfies `nu(ratio > r_j) <= target`,
//! which is the form every downstream bound uses.

use crate::distributions::DistributionPair;
use crate::divergences::{gamma_f, FGenerator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageProfile {
    source: String,
    thresholds: Vec<f64>,
    nu_mass: Vec<f64>,
    nu_tail: Vec<f64>,
    mu_tail: Vec<f64>,
    /// `sum_{i < j} nu_mass[i] * thresholds[i]`, one longer than `thresholds`.
    nu_ratio_prefix: Vec<f64>,
    singular_mass: f64,
}

/// Markov-type tail bound with the exact base-measure tail for comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub bound: f64,
    pub exact: f64,
}

/// Paley-Zygmund lower bound on `P_mu(ratio >= 1 - eps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PzBound {
    pub bound: f64,
    pub m_used: f64,
    pub exact: f64,
}

impl CoverageProfile {
    pub fn new(pair: &DistributionPair) -> Self {
        let mut atoms: Vec<(f64, f64, f64)> = pair
            .ratios()
            .iter()
            .zip(pair.mu().iter().zip(pair.nu()))
            .filter(|(_, (m, _))| **m > 0.0)
            .map(|(r, (m, v))| (*r, *m, *v))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut thresholds: Vec<f64> = Vec::new();
        let mut nu_mass: Vec<f64> = Vec::new();
        let mut mu_mass: Vec<f64> = Vec::new();
        for (r, m, v) in atoms {
            if thresholds.last() == Some(&r) {
                *nu_mass.last_mut().unwrap() += v;
                *mu_mass.last_mut().unwrap() += m;
            } else {
                thresholds.push(r);
                nu_mass.push(v);
                mu_mass.push(m);
            }
        }

        let k = thresholds.len();
        let mut nu_tail = vec![0.0; k + 1];
        let mut mu_tail = vec![0.0; k + 1];
        for j in (0..k).rev() {
            nu_tail[j] = nu_tail[j + 1] + nu_mass[j];
            mu_tail[j] = mu_tail[j + 1] + mu_mass[j];
        }
        let mut nu_ratio_prefix = vec![0.0; k + 1];
        for j in 0..k {
            nu_ratio_prefix[j + 1] = nu_ratio_prefix[j] + nu_mass[j] * thresholds[j];
        }

        CoverageProfile {
            source: pair.name().to_string(),
            thresholds,
            nu_mass,
            nu_tail,
            mu_tail,
            nu_ratio_prefix,
            singular_mass: pair.singular_mass(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Sorted distinct finite ratio values of atoms with positive base mass.
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// `nu(ratio >= thresholds[j])` excluding singular mass.
    pub fn nu_tail_masses(&self) -> &[f64] {
        &self.nu_tail[..self.thresholds.len()]
    }

    pub fn singular_mass(&self) -> f64 {
        self.singular_mass
    }

    pub fn is_singular(&self) -> bool {
        self.singular_mass > 0.0
    }

    fn first_at_least(&self, m: f64) -> usize {
        self.thresholds.partition_point(|&r| r < m)
    }

    /// `Cov_M`, with `Cov_0 = 1`.
    pub fn coverage(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 1.0;
        }
        (self.nu_tail[self.first_at_least(m)] + self.singular_mass).clamp(0.0, 1.0)
    }

    /// `IC_M = E_nu[min(ratio, M)]`; singular mass contributes `M` per unit.
    pub fn integrated_coverage(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 0.0;
        }
        let j = self.first_at_least(m);
        self.nu_ratio_prefix[j] + m * (self.nu_tail[j] + self.singular_mass)
    }

    pub fn icov_over_m(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return 1.0;
        }
        self.integrated_coverage(m) / m
    }

    /// `E_mu[ratio^2 1{ratio <= M}] = E_nu[ratio 1{ratio <= M}]`.
    pub fn truncated_second_moment(&self, m: f64) -> f64 {
        if m < 0.0 {
            return 0.0;
        }
        self.nu_ratio_prefix[self.thresholds.partition_point(|&r| r <= m)]
    }

    /// Exact `P_mu(ratio >= M)`.
    pub fn mu_tail(&self, m: f64) -> f64 {
        if m <= 0.0 {
            return self.mu_tail[0];
        }
        self.mu_tail[self.first_at_least(m)]
    }

    /// `P_mu(ratio >= M) <= Cov_M / M` for `M >= 1`.
    pub fn mu_tail_bound(&self, m: f64) -> Result<TailBound> {
        if !(m >= 1.0) {
            return Err(Error::Domain(format!("mu_tail_bound needs M >= 1, got {m}")));
        }
        Ok(TailBound { bound: (self.coverage(m) / m).clamp(0.0, 1.0), exact: self.mu_tail(m) })
    }

    /// `inf { M >= 0 : Cov_M <= target }`.
    pub fn min_level_with_coverage(&self, target: f64) -> Result<f64> {
        if self.singular_mass > target {
            return Err(Error::SingularTarget(self.singular_mass));
        }
        if self.nu_tail[0] + self.singular_mass <= target {
            return Ok(0.0);
        }
        // Cov on (r_j, r_{j+1}] is nu_tail[j + 1].
        let j = (0..self.thresholds.len())
            .find(|&j| self.nu_tail[j + 1] + self.singular_mass <= target)
            .expect("the tail past the largest atom is empty");
        Ok(self.thresholds[j])
    }

    /// Smallest `M` with `IC_M / M <= eps`.
    ///
    /// `IC_M / M` is continuous and non-increasing; on each piece `(r_j, r_{j+1}]`
    /// it equals `A_j / M + T_j` with `A_j = sum_{i <= j} nu_i r_i` and
    /// `T_j = nu(ratio > r_j)`, so the crossing is solved in closed form.
    pub fn solve_m_eps(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
        }
        if self.is_singular() {
            return Err(Error::SingularTarget(self.singular_mass));
        }
        let k = self.thresholds.len();
        for j in 0..k {
            let tail = self.nu_tail[j + 1];
            if tail >= eps {
                continue;
            }
            let a = self.nu_ratio_prefix[j + 1];
            let m = (a / (eps - tail)).max(self.thresholds[j]);
            if j + 1 == k || m <= self.thresholds[j + 1] {
                return Ok(m);
            }
        }
        unreachable!("IC_M/M tends to zero past the largest atom")
    }

    /// `(1 - u) eps / M` with `M = inf { M : Cov_M <= u eps }`, plus the exact
    /// `P_mu(ratio >= 1 - eps)` it lower-bounds.
    pub fn paley_zygmund_lower_bound(&self, eps: f64, u: f64) -> Result<PzBound> {
        check_open_unit("eps", eps)?;
        check_open_unit("u", u)?;
        if self.is_singular() {
            return Err(Error::SingularTarget(self.singular_mass));
        }
        let m = self.min_level_with_coverage(u * eps)?;
        Ok(PzBound {
            bound: ((1.0 - u) * eps / m).clamp(0.0, 1.0),
            m_used: m,
            exact: self.mu_tail(1.0 - eps),
        })
    }
}

fn check_open_unit(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("{name} must lie in (0, 1), got {x}")));
    }
    Ok(())
}

pub fn coverage_profile(pair: &DistributionPair) -> CoverageProfile {
    CoverageProfile::new(pair)
}

pub fn truncated_second_moment(pair: &DistributionPair, m: f64) -> f64 {
    pair.mu()
        .iter()
        .zip(pair.ratios())
        .filter(|(mu, r)| **mu > 0.0 && **r <= m)
        .map(|(mu, r)| mu * r * r)
        .sum()
}

/// Upper bound `min(1, M D / f(M))` on `Cov_M`, for `M > 1`.
pub fn coverage_bound_fdiv(f: &FGenerator, divergence: f64, m: f64) -> Result<f64> {
    if !(m > 1.0) {
        return Err(Error::Domain(format!("coverage bound needs M > 1, got {m}")));
    }
    let fm = f.eval(m);
    if !(fm > 0.0) {
        return Err(Error::Domain(format!("f({m}) = {fm}; bound undefined")));
    }
    if divergence == 0.0 {
        return Ok(0.0);
    }
    Ok((m * divergence / fm).clamp(0.0, 1.0))
}

/// Upper bound `c^2/M + M D / f(M)` on `IC_M / M`, for `M >= c >= 1`.
pub fn icov_bound_fdiv(f: &FGenerator, divergence: f64, m: f64, c: f64) -> Result<f64> {
    if !(c >= 1.0) {
        return Err(Error::Domain(format!("c must be >= 1, got {c}")));
    }
    if !(m >= c) {
        return Err(Error::Domain(format!("integrated coverage bound needs M >= c = {c}, got {m}")));
    }
    let fm = f.eval(m);
    if !(fm > 0.0) {
        return Err(Error::Domain(format!("f({m}) = {fm}; bound undefined")));
    }
    let tail = if divergence == 0.0 { 0.0 } else { m * divergence / fm };
    Ok((c * c / m + tail).clamp(0.0, 1.0))
}

/// Divergence form of the Paley-Zygmund bound: `M = gamma_f(D / (u eps))`.
pub fn paley_zygmund_fdiv(f: &FGenerator, divergence: f64, eps: f64, u: f64) -> Result<(f64, f64)> {
    check_open_unit("eps", eps)?;
    check_open_unit("u", u)?;
    let m = gamma_f(f, divergence / (u * eps));
    if !m.is_finite() {
        return Err(Error::Infeasible(format!("gamma_{f} is infinite at {}", divergence / (u * eps))));
    }
    Ok(((1.0 - u) * eps / m, m))
}
