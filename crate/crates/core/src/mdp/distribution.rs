use rand::Rng;
use thiserror::Error;

/// Tolerance on the probability sum of a distribution.
pub const PROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("probabilities sum to {sum}, expected 1")]
    SumNotOne { sum: f64 },
    #[error("entry {index} has non-positive probability {probability}")]
    NonPositiveProbability { index: usize, probability: f64 },
    #[error("entry {index} repeats an earlier outcome")]
    DuplicateOutcome { index: usize },
}

/// Checks the invariants of a finite-support distribution: strictly positive
/// weights, unique outcomes, and a sum of one within [`PROB_TOLERANCE`].
pub fn validate_distribution<T: PartialEq>(support: &[(T, f64)]) -> Result<(), DistributionError> {
    for (index, (outcome, probability)) in support.iter().enumerate() {
        if !(*probability > 0.0 && *probability <= 1.0 + PROB_TOLERANCE) {
            return Err(DistributionError::NonPositiveProbability {
                index,
                probability: *probability,
            });
        }
        if support[..index].iter().any(|(o, _)| o == outcome) {
            return Err(DistributionError::DuplicateOutcome { index });
        }
    }
    let sum: f64 = support.iter().map(|(_, p)| p).sum();
    if (sum - 1.0).abs() > PROB_TOLERANCE {
        return Err(DistributionError::SumNotOne { sum });
    }
    Ok(())
}

/// A probability distribution with finite support. Zero-weight outcomes are
/// never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution<T> {
    support: Vec<(T, f64)>,
}

impl<T: PartialEq> Distribution<T> {
    pub fn new(support: Vec<(T, f64)>) -> Result<Self, DistributionError> {
        validate_distribution(&support)?;
        Ok(Self { support })
    }

    pub fn point(outcome: T) -> Self {
        Self {
            support: vec![(outcome, 1.0)],
        }
    }

    /// Normalizes positive counts into a distribution. Returns `None` when
    /// every count is zero.
    pub fn from_counts(counts: impl IntoIterator<Item = (T, u64)>) -> Option<Self> {
        let counts: Vec<(T, u64)> = counts.into_iter().filter(|(_, c)| *c > 0).collect();
        let total: u64 = counts.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return None;
        }
        let support = counts
            .into_iter()
            .map(|(o, c)| (o, c as f64 / total as f64))
            .collect();
        Some(Self { support })
    }

    pub fn probability(&self, outcome: &T) -> f64 {
        self.support
            .iter()
            .find(|(o, _)| o == outcome)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        validate_distribution(&self.support)
    }
}

impl<T> Distribution<T> {
    pub fn iter(&self) -> impl Iterator<Item = (&T, f64)> {
        self.support.iter().map(|(o, p)| (o, *p))
    }

    pub fn outcomes(&self) -> impl Iterator<Item = &T> {
        self.support.iter().map(|(o, _)| o)
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[(T, f64)] {
        &self.support
    }

    /// Draws an outcome by inverse-CDF sampling on one uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &T {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (outcome, p) in &self.support {
            acc += p;
            if u < acc {
                return outcome;
            }
        }
        // Rounding can leave the cumulative sum a hair below one.
        &self.support[self.support.len() - 1].0
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> Distribution<U> {
        Distribution {
            support: self.support.into_iter().map(|(o, p)| (f(o), p)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accepts_fair_coin_and_point_mass() {
        assert!(validate_distribution(&[('A', 0.5), ('B', 0.5)]).is_ok());
        assert!(validate_distribution(&[('A', 1.0)]).is_ok());
    }

    #[test]
    fn rejects_short_sum() {
        assert!(matches!(
            validate_distribution(&[('A', 0.3), ('B', 0.3)]),
            Err(DistributionError::SumNotOne { .. })
        ));
        assert!(matches!(
            validate_distribution::<char>(&[]),
            Err(DistributionError::SumNotOne { .. })
        ));
    }

    #[test]
    fn rejects_zero_and_duplicates() {
        assert_eq!(
            validate_distribution(&[('A', 1.0), ('B', 0.0)]),
            Err(DistributionError::NonPositiveProbability {
                index: 1,
                probability: 0.0
            })
        );
        assert_eq!(
            validate_distribution(&[('A', 0.5), ('A', 0.5)]),
            Err(DistributionError::DuplicateOutcome { index: 1 })
        );
    }

    #[test]
    fn point_mass_always_sampled() {
        let d = Distribution::point('A');
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..1000).all(|_| *d.sample(&mut rng) == 'A'));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let d = Distribution::new(vec![('A', 0.5), ('B', 0.5)]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| *d.sample(&mut rng)).collect::<String>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn empirical_frequency_matches_weight() {
        let d = Distribution::new(vec![('A', 0.9), ('B', 0.1)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let hits = (0..n).filter(|_| *d.sample(&mut rng) == 'A').count();
        let freq = hits as f64 / n as f64;
        assert!((0.89..=0.91).contains(&freq), "freq {freq}");
    }

    #[test]
    fn from_counts_normalizes() {
        let d = Distribution::from_counts(vec![('A', 3), ('B', 1), ('C', 0)]).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.probability(&'A'), 0.75);
        assert!(d.validate().is_ok());
        assert!(Distribution::<char>::from_counts(vec![('A', 0)]).is_none());
    }

    proptest::proptest! {
        #[test]
        fn samples_stay_in_support(weights in proptest::collection::vec(1u64..100, 1..8), seed: u64) {
            let d = Distribution::from_counts(weights.iter().copied().enumerate().map(|(i, w)| (i, w))).unwrap();
            proptest::prop_assert!(d.validate().is_ok());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let o = *d.sample(&mut rng);
                proptest::prop_assert!(d.probability(&o) > 0.0);
            }
        }
    }
}
