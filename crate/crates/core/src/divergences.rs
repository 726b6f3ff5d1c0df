//! Convex generators, exact f-divergences, and the inverse `gamma_f` of `t -> f(t)/t`.
//!
//! Built-in generators are shifted so that `f(1) = f'(1) = 0` holds exactly; the
//! shift integrates to zero against probability measures, so divergence values match
//! the textbook ones (KL uses `t ln t - t + 1`).
//!
//! | spelling              | generator                       | regime                  |
//! |-----------------------|---------------------------------|-------------------------|
//! | `tv`                  | `|t - 1| / 2`                   | linear                  |
//! | `hellinger`           | `(sqrt t - 1)^2`                | linear                  |
//! | `kl`                  | `t ln t - t + 1`                | superlinear/subquadratic |
//! | `chi2`                | `(t - 1)^2`                     | superlinear/subquadratic |
//! | `renyi:alpha=A` (A>1) | `t^A - A(t - 1) - 1`            | superquadratic iff A > 2 |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::distributions::DistributionPair;
use crate::error::{Error, Result};

/// Initial bracket upper end for `gamma_f`.
pub const GAMMA_BRACKET_START: f64 = 2.0;
/// `gamma_f` gives up and reports infinity past this point.
pub const GAMMA_BRACKET_LIMIT: f64 = 1e300;
/// Relative bisection tolerance for `gamma_f`.
pub const GAMMA_REL_TOL: f64 = 1e-10;
/// Probe points for classifying user generators.
pub const REGIME_PROBES: [f64; 3] = [1e3, 1e6, 1e9];
/// Growth factor across the probes that separates the regimes.
pub const REGIME_GROWTH: f64 = 1.01;
/// A ratio counts as converging when its second increment is below this
/// fraction of the first.
pub const REGIME_SETTLE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `f(t)/t` bounded: no finite sample size estimates Z.
    Linear,
    /// `f(t)/t` unbounded but `f(t)/t^2` bounded.
    SubquadraticSuperlinear,
    /// `f(t)/t^2` unbounded.
    Superquadratic,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Linear => "linear",
            Regime::SubquadraticSuperlinear => "subquadratic",
            Regime::Superquadratic => "superquadratic",
        })
    }
}

type GeneratorFn = dyn Fn(f64) -> f64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    TotalVariation,
    Hellinger,
    Kl,
    ChiSquared,
    Renyi(f64),
    Custom {
        f: Arc<GeneratorFn>,
        f_prime_at_inf: f64,
        declared: Option<Regime>,
    },
}

/// A convex generator `f` with `f(1) = f'(1) = 0`.
#[derive(Clone)]
pub struct FGenerator {
    kind: Kind,
    name: String,
}

impl fmt::Debug for FGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FGenerator").field("name", &self.name).finish()
    }
}

impl fmt::Display for FGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FGenerator {
    pub fn total_variation() -> Self {
        FGenerator { kind: Kind::TotalVariation, name: "tv".into() }
    }

    pub fn hellinger() -> Self {
        FGenerator { kind: Kind::Hellinger, name: "hellinger".into() }
    }

    pub fn kl() -> Self {
        FGenerator { kind: Kind::Kl, name: "kl".into() }
    }

    pub fn chi_squared() -> Self {
        FGenerator { kind: Kind::ChiSquared, name: "chi2".into() }
    }

    pub fn renyi(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::Domain(format!("renyi alpha must be finite and > 1, got {alpha}")));
        }
        Ok(FGenerator { kind: Kind::Renyi(alpha), name: format!("renyi:alpha={alpha}") })
    }

    /// A user generator. `declared` overrides probing in [`classify_regime`].
    pub fn custom<F>(name: &str, f: F, f_prime_at_inf: f64, declared: Option<Regime>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        FGenerator {
            kind: Kind::Custom { f: Arc::new(f), f_prime_at_inf, declared },
            name: name.to_string(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.kind, Kind::Custom { .. })
    }

    /// Evaluates `f(t)` for `t >= 0`.
    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            Kind::TotalVariation => 0.5 * (t - 1.0).abs(),
            Kind::Hellinger => {
                let s = t.sqrt() - 1.0;
                s * s
            }
            Kind::Kl => {
                if t == 0.0 {
                    1.0
                } else {
                    t * t.ln() - t + 1.0
                }
            }
            Kind::ChiSquared => (t - 1.0) * (t - 1.0),
            Kind::Renyi(a) => t.powf(*a) - a * (t - 1.0) - 1.0,
            Kind::Custom { f, .. } => f(t),
        }
    }

    /// `lim_{t -> inf} f(t)/t`.
    pub fn f_prime_at_inf(&self) -> f64 {
        match &self.kind {
            Kind::TotalVariation => 0.5,
            Kind::Hellinger => 1.0,
            Kind::Kl | Kind::ChiSquared | Kind::Renyi(_) => f64::INFINITY,
            Kind::Custom { f_prime_at_inf, .. } => *f_prime_at_inf,
        }
    }

    /// `sup_{t >= 1} f(t)/t` when known in closed form.
    fn sup_f_over_t(&self) -> Option<f64> {
        match &self.kind {
            Kind::TotalVariation => Some(0.5),
            Kind::Hellinger => Some(1.0),
            Kind::Kl | Kind::ChiSquared | Kind::Renyi(_) => Some(f64::INFINITY),
            Kind::Custom { .. } => None,
        }
    }

    /// Declared regime of a built-in (or of a custom generator with a declared tag).
    pub fn declared_regime(&self) -> Option<Regime> {
        match &self.kind {
            Kind::TotalVariation | Kind::Hellinger => Some(Regime::Linear),
            Kind::Kl | Kind::ChiSquared => Some(Regime::SubquadraticSuperlinear),
            Kind::Renyi(a) if *a > 2.0 => Some(Regime::Superquadratic),
            Kind::Renyi(_) => Some(Regime::SubquadraticSuperlinear),
            Kind::Custom { declared, .. } => *declared,
        }
    }

    /// Smallest `c >= 1` with `t -> f(t)/t^2` non-increasing on `[c, inf)`.
    ///
    /// Infinite when no such `c` exists (superquadratic generators). The chi-square
    /// generator is the boundary case: `f(t)/t^2 = (1 - 1/t)^2` increases to 1, yet
    /// `IC_M/M <= 1/M + M chi2/f(M)` holds directly since `IC_M <= 1 + chi2`, so it
    /// ships with `c = 1`.
    pub fn c_threshold(&self) -> f64 {
        match &self.kind {
            Kind::ChiSquared => 1.0,
            // d/dt [(t-1)/(2t^2)] = 0 at t = 2.
            Kind::TotalVariation => 2.0,
            // With s = sqrt t, (s-1)^2/s^4 peaks at s = 2.
            Kind::Hellinger => 4.0,
            // t ln t = 2(t - 1).
            Kind::Kl => bisect_root(|t| t * t.ln() - 2.0 * (t - 1.0), 2.0, 16.0),
            Kind::Renyi(a) if *a == 2.0 => 1.0,
            Kind::Renyi(a) if *a > 2.0 => f64::INFINITY,
            // (a-2) t^a + a t - 2(a-1) = 0.
            Kind::Renyi(a) => {
                let a = *a;
                let g = |t: f64| (a - 2.0) * t.powf(a) + a * t - 2.0 * (a - 1.0);
                // t = 1 is also a root; g is positive just past it.
                let mut hi = 2.0;
                while g(hi) > 0.0 && hi < 1e150 {
                    hi *= 2.0;
                }
                bisect_root(g, 1.5, hi)
            }
            Kind::Custom { f, .. } => scan_c_threshold(f.as_ref()),
        }
    }

    /// The `c` used by the f-divergence planner: [`c_threshold`](Self::c_threshold)
    /// when finite, else 1, so superquadratic generators plan with the bare `1/eps^2` term.
    pub fn planning_c(&self) -> f64 {
        let c = self.c_threshold();
        if c.is_finite() { c } else { 1.0 }
    }
}

/// Root of a function that is positive at `lo` and non-positive at `hi`, or the reverse.
fn bisect_root<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
    let lo_sign = g(lo) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Last increase of `f(t)/t^2` on a geometric grid over `[1, 1e9]`.
fn scan_c_threshold(f: &GeneratorFn) -> f64 {
    const POINTS: usize = 2000;
    let step = (1e9f64).ln() / (POINTS - 1) as f64;
    let mut prev = f(1.0);
    let mut last_rise = None;
    for i in 1..POINTS {
        let t = (step * i as f64).exp();
        let v = f(t) / (t * t);
        if v > prev * (1.0 + 1e-12) && v > prev {
            last_rise = Some(i);
        }
        prev = v;
    }
    match last_rise {
        None => 1.0,
        Some(i) if i == POINTS - 1 => f64::INFINITY,
        Some(i) => (step * i as f64).exp(),
    }
}

impl FromStr for FGenerator {
    type Err = Error;

    /// Parses `tv`, `hellinger`, `kl`, `chi2`, or `renyi:alpha=<A>`.
    fn from_str(s: &str) -> Result<Self> {
        let spec = s.trim().to_ascii_lowercase();
        match spec.as_str() {
            "tv" => Ok(Self::total_variation()),
            "hellinger" => Ok(Self::hellinger()),
            "kl" => Ok(Self::kl()),
            "chi2" => Ok(Self::chi_squared()),
            other => {
                let alpha = other
                    .strip_prefix("renyi:alpha=")
                    .or_else(|| other.strip_prefix("renyi:"))
                    .ok_or_else(|| Error::UnknownDivergence(s.to_string()))?;
                let alpha: f64 = alpha.parse().map_err(|_| Error::UnknownDivergence(s.to_string()))?;
                Self::renyi(alpha)
            }
        }
    }
}

/// `D_f(nu || mu)`: `sum_{mu_i > 0} mu_i f(ratio_i) + singular_mass * f'(inf)`.
pub fn f_divergence(pair: &DistributionPair, f: &FGenerator) -> f64 {
    let regular: f64 = pair
        .mu()
        .iter()
        .zip(pair.ratios())
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, r)| m * f.eval(*r))
        .sum();
    let singular = pair.singular_mass();
    if singular > 0.0 {
        regular + singular * f.f_prime_at_inf()
    } else {
        regular
    }
}

/// `gamma_f(m) = inf { t >= 1 : f(t)/t >= m }`, infinite when `m` exceeds `sup f(t)/t`.
pub fn gamma_f(f: &FGenerator, m: f64) -> f64 {
    if m.is_nan() {
        return f64::NAN;
    }
    let ratio = |t: f64| f.eval(t) / t;
    if m <= 0.0 || ratio(1.0) >= m {
        return 1.0;
    }
    if let Some(sup) = f.sup_f_over_t() {
        if m >= sup {
            return f64::INFINITY;
        }
    }
    let mut lo = 1.0;
    let mut hi = GAMMA_BRACKET_START;
    while ratio(hi) < m {
        lo = hi;
        hi *= 2.0;
        if hi > GAMMA_BRACKET_LIMIT {
            return f64::INFINITY;
        }
    }
    while hi - lo > GAMMA_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) >= m {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Built-ins report their declared regime; user generators without a declared tag
/// are probed at `t = 1e3, 1e6, 1e9`.
pub fn classify_regime(f: &FGenerator) -> Result<Regime> {
    if let Some(r) = f.declared_regime() {
        return Ok(r);
    }
    let mut over_t = [0.0; 3];
    let mut over_t2 = [0.0; 3];
    for (i, &t) in REGIME_PROBES.iter().enumerate() {
        let v = f.eval(t);
        if !v.is_finite() {
            return Err(Error::ClassificationFailed(format!("f({t}) = {v}")));
        }
        over_t[i] = v / t;
        over_t2[i] = v / (t * t);
    }
    if over_t[0] <= 0.0 || over_t2[0] <= 0.0 {
        return Err(Error::ClassificationFailed("f vanishes at the first probe".into()));
    }
    let unbounded = |v: &[f64; 3]| v[2] / v[0] >= REGIME_GROWTH && v[2] - v[1] > REGIME_SETTLE * (v[1] - v[0]);
    if !unbounded(&over_t) {
        Ok(Regime::Linear)
    } else if unbounded(&over_t2) {
        Ok(Regime::Superquadratic)
    } else {
        Ok(Regime::SubquadraticSuperlinear)
    }
}
