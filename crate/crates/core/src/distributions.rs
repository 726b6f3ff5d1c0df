//! Finite-support distribution pairs.
//!
//! A [`DistributionPair`] holds a base measure `mu` and a target `nu` on atoms
//! `0..support_size`, the per-atom density ratio `dnu/dmu`, and a hidden
//! normalizer `z` so that the unnormalized ratio is `lambda(x) = z * dnu/dmu(x)`.
//!
//! Atoms that carry target mass but no base mass get ratio `f64::INFINITY`; their
//! total target mass is kept as `singular_mass`. Atoms with neither mass get ratio 0
//! and are never sampled.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Tolerance on the sum of an input weight vector.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DistributionPair {
    name: String,
    mu: Vec<f64>,
    nu: Vec<f64>,
    z: f64,
    ratios: Vec<f64>,
    singular_mass: f64,
    cumulative: Vec<f64>,
}

/// Draws from the base measure with their unnormalized ratios attached.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub atoms: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub n: usize,
}

impl SampleBatch {
    /// Builds a batch directly from lambda values; atoms are numbered by position.
    pub fn from_lambdas(lambdas: Vec<f64>) -> Self {
        let n = lambdas.len();
        SampleBatch { atoms: (0..n).collect(), lambdas, seed: 0, n }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// The same draws with every lambda multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        SampleBatch {
            atoms: self.atoms.clone(),
            lambdas: self.lambdas.iter().map(|l| l * c).collect(),
            seed: self.seed,
            n: self.n,
        }
    }
}

fn check_z(z: f64) -> Result<()> {
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::Domain(format!("normalizer z must be positive and finite, got {z}")));
    }
    Ok(())
}

fn normalized(w: &[f64]) -> Result<Vec<f64>> {
    for (idx, &value) in w.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::Domain(format!("non-finite weight at index {idx}: {value}")));
        }
        if value < 0.0 {
            return Err(Error::NegativeWeight { idx, value });
        }
    }
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err(Error::Domain("weight vector sums to zero".into()));
    }
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized { sum });
    }
    Ok(w.iter().map(|x| x / sum).collect())
}

impl DistributionPair {
    /// General pair from two weight vectors. Each must sum to 1 within 1e-9 and is
    /// renormalized exactly.
    pub fn from_weights(mu: &[f64], nu: &[f64], z: f64) -> Result<Self> {
        Self::named("finite", mu, nu, z)
    }

    pub fn named(name: &str, mu: &[f64], nu: &[f64], z: f64) -> Result<Self> {
        if mu.len() != nu.len() {
            return Err(Error::LengthMismatch(mu.len(), nu.len()));
        }
        if mu.is_empty() {
            return Err(Error::Domain("empty support".into()));
        }
        check_z(z)?;
        let mu = normalized(mu)?;
        let nu = normalized(nu)?;
        Ok(Self::assemble(name.to_string(), mu, nu, z))
    }

    fn assemble(name: String, mu: Vec<f64>, nu: Vec<f64>, z: f64) -> Self {
        let mut singular_mass = 0.0;
        let ratios = mu
            .iter()
            .zip(&nu)
            .map(|(&m, &v)| {
                if m > 0.0 {
                    v / m
                } else if v > 0.0 {
                    singular_mass += v;
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .collect();
        let mut acc = 0.0;
        let cumulative = mu
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect();
        DistributionPair { name, mu, nu, z, ratios, singular_mass, cumulative }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn support_size(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// The hidden normalizer Z.
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Per-atom `dnu/dmu`, infinite on base-null atoms carrying target mass.
    pub fn ratios(&self) -> &[f64] {
        &self.ratios
    }

    pub fn ratio(&self, atom: usize) -> f64 {
        self.ratios[atom]
    }

    /// Unnormalized ratio `z * dnu/dmu` at an atom.
    pub fn lambda(&self, atom: usize) -> f64 {
        self.z * self.ratios[atom]
    }

    /// Target mass on atoms the base measure never visits.
    pub fn singular_mass(&self) -> f64 {
        self.singular_mass
    }

    pub fn is_absolutely_continuous(&self) -> bool {
        self.singular_mass == 0.0
    }

    /// `sum_i mu_i * ratio_i` over atoms with positive base mass.
    pub fn ratio_mean_under_mu(&self) -> f64 {
        self.mu
            .iter()
            .zip(&self.ratios)
            .filter(|(m, _)| **m > 0.0)
            .map(|(m, r)| m * r)
            .sum()
    }

    /// Largest finite ratio among atoms with positive base mass.
    pub fn max_finite_ratio(&self) -> f64 {
        self.ratios
            .iter()
            .zip(&self.mu)
            .filter(|(r, m)| **m > 0.0 && r.is_finite())
            .map(|(r, _)| *r)
            .fold(0.0, f64::max)
    }

    /// Total variation between the target and a probability vector on the same atoms.
    pub fn tv_to_target(&self, freqs: &[f64]) -> f64 {
        0.5 * self.nu.iter().zip(freqs).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }

    /// Draws one atom from the base measure by inverse CDF.
    #[inline]
    pub fn draw_atom<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty support");
        let u = rng.random::<f64>() * total;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.mu.len() - 1)
    }

    /// `n` i.i.d. draws from the base measure, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        let mut rng = rng::stream(seed);
        let atoms: Vec<usize> = (0..n).map(|_| self.draw_atom(&mut rng)).collect();
        let lambdas = atoms.iter().map(|&a| self.lambda(a)).collect();
        Ok(SampleBatch { atoms, lambdas, seed, n })
    }

    /// Target mass of `g`: `E_nu[g]`.
    pub fn target_mean(&self, g: &[f64]) -> Result<f64> {
        if g.len() != self.support_size() {
            return Err(Error::LengthMismatch(g.len(), self.support_size()));
        }
        Ok(self.nu.iter().zip(g).map(|(v, gi)| v * gi).sum())
    }

    /// The pair `(mu, g*nu / nu_g)` with normalizer `z * nu_g`, where `nu_g = E_nu[g]`.
    pub fn weighted(&self, g: &[f64]) -> Result<Self> {
        if g.len() != self.support_size() {
            return Err(Error::LengthMismatch(g.len(), self.support_size()));
        }
        if let Some((idx, &value)) = g.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("g must be finite and nonnegative; g[{idx}] = {value}")));
        }
        let nu_g = self.target_mean(g)?;
        if nu_g <= 0.0 {
            return Err(Error::Domain("E_nu[g] = 0; weighted target undefined".into()));
        }
        let nu = self.nu.iter().zip(g).map(|(v, gi)| v * gi / nu_g).collect();
        Ok(Self::assemble(format!("{}*g", self.name), self.mu.clone(), nu, self.z * nu_g))
    }

    pub fn to_document(&self) -> PairDocument {
        PairDocument { name: self.name.clone(), z: self.z, mu: self.mu.clone(), nu: self.nu.clone() }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_document()).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: PairDocument = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        doc.into_pair()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// On-disk form of a pair: `name`, `z`, `mu`, `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairDocument {
    pub name: String,
    pub z: f64,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
}

impl PairDocument {
    pub fn into_pair(self) -> Result<DistributionPair> {
        DistributionPair::named(&self.name, &self.mu, &self.nu, self.z)
    }
}

/// Two atoms `(low, high)` with base masses `(1-p, p)` and ratios
/// `(1-eps, 1+eps(1/p-1))`. This is the lower-bound family `nu_{p,eps}`.
pub fn make_bernoulli_pair(p: f64, eps: f64, z: f64) -> Result<DistributionPair> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Domain(format!("p must lie in (0, 1], got {p}")));
    }
    if !(eps > 0.0 && eps <= 0.25) {
        return Err(Error::Domain(format!("eps must lie in (0, 1/4], got {eps}")));
    }
    check_z(z)?;
    let high_ratio = 1.0 + eps * (1.0 / p - 1.0);
    let mu = vec![1.0 - p, p];
    let nu = vec![(1.0 - p) * (1.0 - eps), p * high_ratio];
    let mut pair = DistributionPair::assemble(format!("bernoulli(p={p},eps={eps})"), mu, nu, z);
    // Exact ratios from the definition rather than nu/mu round trips.
    if p < 1.0 {
        pair.ratios[0] = 1.0 - eps;
    }
    pair.ratios[1] = high_ratio;
    Ok(pair)
}

/// Base measure is a point mass on atom 0; the target puts `q` on the base-null atom 1.
pub fn make_pointmass_pair(q: f64, z: f64) -> Result<DistributionPair> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("q must lie in [0, 1], got {q}")));
    }
    check_z(z)?;
    Ok(DistributionPair::assemble(format!("pointmass(q={q})"), vec![1.0, 0.0], vec![1.0 - q, q], z))
}

/// Base masses `(1-p, p)` with the target a point mass on atom 1; ratios `(0, 1/p)`.
pub fn make_twopoint_mu_pair(p: f64, z: f64) -> Result<DistributionPair> {
    if !(0.25..=0.5).contains(&p) {
        return Err(Error::Domain(format!("p must lie in [1/4, 1/2], got {p}")));
    }
    check_z(z)?;
    let mut pair = DistributionPair::assemble(format!("twopoint(p={p})"), vec![1.0 - p, p], vec![0.0, 1.0], z);
    pair.ratios[1] = 1.0 / p;
    Ok(pair)
}

pub fn make_finite_pair(mu: &[f64], nu: &[f64], z: f64) -> Result<DistributionPair> {
    DistributionPair::from_weights(mu, nu, z)
}

pub fn make_weighted_pair(pair: &DistributionPair, g: &[f64]) -> Result<DistributionPair> {
    pair.weighted(g)
}

/// Random pair with Dirichlet(1) weights on `support` atoms. Every third seed cubes
/// the base weights before normalizing, which produces heavy ratio tails.
pub fn make_random_pair(support: usize, seed: u64, z: f64) -> Result<DistributionPair> {
    if support == 0 {
        return Err(Error::Domain("support must be positive".into()));
    }
    check_z(z)?;
    let mut rng = rng::stream(seed);
    let mut draw = |heavy: bool| -> Vec<f64> {
        let w: Vec<f64> = (0..support)
            .map(|_| {
                let e = -rng::open_unit(&mut rng).ln();
                if heavy { e.powi(3) } else { e }
            })
            .map(|e| e.max(1e-300))
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    };
    let mu = draw(seed.is_multiple_of(3));
    let nu = draw(false);
    Ok(DistributionPair::assemble(format!("random(k={support},seed={seed})"), mu, nu, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernoulli_half_quarter() {
        let pair = make_bernoulli_pair(0.5, 0.25, 1.0).unwrap();
        assert_eq!(pair.ratios(), &[0.75, 1.25]);
        assert_eq!(pair.mu(), &[0.5, 0.5]);
        assert_eq!(pair.ratio_mean_under_mu(), 1.0);
        assert!((pair.nu()[1] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_degenerate_p_one() {
        let pair = make_bernoulli_pair(1.0, 0.1, 1.0).unwrap();
        assert_eq!(pair.ratio(1), 1.0);
        assert_eq!(pair.mu()[0], 0.0);
        assert_eq!(pair.mu(), pair.nu());
    }

    #[test]
    fn bernoulli_rejects_bad_params() {
        assert!(make_bernoulli_pair(0.0, 0.1, 1.0).is_err());
        assert!(make_bernoulli_pair(0.5, 0.3, 1.0).is_err());
        assert!(make_bernoulli_pair(0.5, 0.0, 1.0).is_err());
        assert!(make_bernoulli_pair(0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn pointmass_cases() {
        let id = make_pointmass_pair(0.0, 1.0).unwrap();
        assert!(id.is_absolutely_continuous());
        assert_eq!(id.ratio(0), 1.0);

        let half = make_pointmass_pair(0.5, 1.0).unwrap();
        assert_eq!(half.singular_mass(), 0.5);
        assert!(!half.is_absolutely_continuous());
        assert_eq!(half.ratio(1), f64::INFINITY);

        let all = make_pointmass_pair(1.0, 1.0).unwrap();
        assert_eq!(all.singular_mass(), 1.0);
        assert!(!all.is_absolutely_continuous());
    }

    #[test]
    fn twopoint_ratios() {
        let pair = make_twopoint_mu_pair(0.5, 1.0).unwrap();
        assert_eq!(pair.ratios(), &[0.0, 2.0]);
        assert_eq!(pair.ratio_mean_under_mu(), 1.0);
        let quarter = make_twopoint_mu_pair(0.25, 1.0).unwrap();
        assert_eq!(quarter.max_finite_ratio(), 4.0);
        assert!(make_twopoint_mu_pair(0.2, 1.0).is_err());
        assert!(make_twopoint_mu_pair(0.6, 1.0).is_err());
    }

    #[test]
    fn finite_pair_examples() {
        let single = make_finite_pair(&[1.0], &[1.0], 7.0).unwrap();
        assert_eq!(single.lambda(0), 7.0);

        let two = make_finite_pair(&[0.5, 0.5], &[0.25, 0.75], 1.0).unwrap();
        assert_eq!(two.ratios(), &[0.5, 1.5]);

        let sing = make_finite_pair(&[1.0, 0.0], &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(sing.singular_mass(), 0.5);
        assert_eq!(sing.ratio(1), f64::INFINITY);
    }

    #[test]
    fn finite_pair_errors() {
        assert!(matches!(make_finite_pair(&[1.0], &[0.5, 0.5], 1.0), Err(Error::LengthMismatch(1, 2))));
        assert!(matches!(
            make_finite_pair(&[1.5, -0.5], &[0.5, 0.5], 1.0),
            Err(Error::NegativeWeight { idx: 1, .. })
        ));
        assert!(make_finite_pair(&[0.0, 0.0], &[0.5, 0.5], 1.0).is_err());
        assert!(matches!(make_finite_pair(&[0.5, 0.6], &[0.5, 0.5], 1.0), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn sampling_single_atom_and_determinism() {
        let single = make_finite_pair(&[1.0], &[1.0], 3.0).unwrap();
        let b = single.sample(100, 9).unwrap();
        assert!(b.atoms.iter().all(|&a| a == 0));
        assert!(b.lambdas.iter().all(|&l| l == 3.0));

        let pair = make_bernoulli_pair(0.5, 0.25, 1.0).unwrap();
        assert_eq!(pair.sample(1000, 42).unwrap(), pair.sample(1000, 42).unwrap());
        assert_ne!(pair.sample(1000, 42).unwrap(), pair.sample(1000, 43).unwrap());
        assert!(matches!(pair.sample(0, 1), Err(Error::EmptySample)));
    }

    #[test]
    fn sampling_frequency_million() {
        let pair = make_bernoulli_pair(0.5, 0.25, 1.0).unwrap();
        let b = pair.sample(1_000_000, 2024).unwrap();
        let high = b.atoms.iter().filter(|&&a| a == 1).count() as f64 / 1e6;
        assert!((high - 0.5).abs() <= 3e-3, "high frequency {high}");
    }

    #[test]
    fn null_atoms_never_drawn() {
        let pair = make_finite_pair(&[0.0, 0.5, 0.0, 0.5, 0.0], &[0.2; 5], 1.0).unwrap();
        let b = pair.sample(10_000, 1).unwrap();
        assert!(b.atoms.iter().all(|&a| a == 1 || a == 3));
    }

    #[test]
    fn weighted_pair_examples() {
        let pair = make_finite_pair(&[0.5, 0.5], &[0.5, 0.5], 2.0).unwrap();
        let same = pair.weighted(&[1.0, 1.0]).unwrap();
        assert_eq!(same.ratios(), pair.ratios());
        assert_eq!(same.z(), 2.0);

        let w = pair.weighted(&[1.0, 3.0]).unwrap();
        assert_eq!(w.nu(), &[0.25, 0.75]);
        assert_eq!(w.z(), 4.0);
        assert!(w.is_absolutely_continuous());
        assert!((w.nu().iter().sum::<f64>() - 1.0).abs() < 1e-15);

        assert!(pair.weighted(&[0.0, 0.0]).is_err());
        assert!(pair.weighted(&[1.0]).is_err());
        assert!(pair.weighted(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let pair = make_finite_pair(&[0.123456789012345, 0.876543210987655], &[0.5, 0.5], 2.5)
            .unwrap()
            .with_name("demo");
        let text = pair.to_toml().unwrap();
        let back = DistributionPair::from_toml(&text).unwrap();
        assert_eq!(back.name(), "demo");
        for (a, b) in pair.mu().iter().zip(back.mu()) {
            assert_eq!(format!("{a:.14e}"), format!("{b:.14e}"));
        }
        assert!(DistributionPair::from_toml("name='x'\nz=1\nmu=[1]\nnu=[1]\nextra=2").is_err());
    }

    #[test]
    fn random_pairs_normalized() {
        for seed in 0..50 {
            let p = make_random_pair(1 + (seed as usize % 64), seed, 1.0).unwrap();
            assert!((p.ratio_mean_under_mu() - 1.0).abs() < 1e-12);
        }
    }
}
