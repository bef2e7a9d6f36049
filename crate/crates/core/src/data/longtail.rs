//! Exponential long-tail subsampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Dataset;

/// Class-count profile `n_i = round(n_max * rho^(i / (C - 1)))`, class 0 = head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub num_classes: usize,
    pub n_max: usize,
    pub rho: f64,
}

impl LongTailSpec {
    pub fn new(num_classes: usize, n_max: usize, rho: f64) -> Result<Self> {
        let spec = Self {
            num_classes,
            n_max,
            rho,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1], got {}",
                self.rho
            )));
        }
        if self.n_max == 0 || self.count(self.num_classes - 1) == 0 {
            return Err(Error::InvalidConfig(format!(
                "n_max = {} with rho = {} leaves the tail class empty",
                self.n_max, self.rho
            )));
        }
        Ok(())
    }

    pub fn count(&self, class: usize) -> usize {
        let exponent = class as f64 / (self.num_classes - 1) as f64;
        (self.n_max as f64 * self.rho.powf(exponent)).round() as usize
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.num_classes).map(|i| self.count(i)).collect()
    }

    pub fn total(&self) -> usize {
        self.counts().iter().sum()
    }
}

/// Imbalanced training set whose class counts follow a [`LongTailSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct LongTailDataset {
    pub spec: LongTailSpec,
    pub data: Dataset,
}

impl LongTailDataset {
    pub fn counts(&self) -> Vec<usize> {
        self.data.class_counts()
    }
}

/// Subsample `source` without replacement so class `i` keeps `n_i` examples.
pub fn build_longtail(source: &Dataset, spec: &LongTailSpec, seed: u64) -> Result<LongTailDataset> {
    spec.validate()?;
    if source.num_classes() != spec.num_classes {
        return Err(Error::InvalidConfig(format!(
            "source has {} classes, spec expects {}",
            source.num_classes(),
            spec.num_classes
        )));
    }
    let counts = spec.counts();
    let by_class = source.indices_by_class();
    let deficient: Vec<(usize, usize, usize)> = by_class
        .iter()
        .zip(&counts)
        .enumerate()
        .filter(|(_, (have, &need))| have.len() < need)
        .map(|(c, (have, &need))| (c, have.len(), need))
        .collect();
    if !deficient.is_empty() {
        return Err(Error::InsufficientExamples(deficient));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::with_capacity(spec.total());
    for (pool, &need) in by_class.iter().zip(&counts) {
        let mut picks = rand::seq::index::sample(&mut rng, pool.len(), need).into_vec();
        picks.sort_unstable();
        chosen.extend(picks.into_iter().map(|p| pool[p]));
    }
    Ok(LongTailDataset {
        spec: *spec,
        data: source.subset(&chosen),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(per_class: usize, classes: usize) -> Dataset {
        let n = per_class * classes;
        let labels = (0..n).map(|i| i % classes).collect();
        let features = (0..n).map(|i| i as f64 / n as f64).collect();
        Dataset::new(1, classes, features, labels).unwrap()
    }

    #[test]
    fn ten_class_profile() {
        let spec = LongTailSpec::new(10, 1000, 0.01).unwrap();
        assert_eq!(spec.counts(), vec![1000, 599, 359, 215, 129, 77, 46, 28, 17, 10]);
        assert_eq!(spec.total(), 2480);
    }

    #[test]
    fn balanced_when_rho_is_one() {
        let spec = LongTailSpec::new(7, 300, 1.0).unwrap();
        assert!(spec.counts().iter().all(|&n| n == 300));
    }

    #[test]
    fn two_class_profile() {
        assert_eq!(LongTailSpec::new(2, 100, 0.1).unwrap().counts(), vec![100, 10]);
    }

    #[test]
    fn invalid_specs() {
        assert!(LongTailSpec::new(1, 10, 0.5).is_err());
        assert!(LongTailSpec::new(3, 10, 0.0).is_err());
        assert!(LongTailSpec::new(3, 10, 1.5).is_err());
        assert!(LongTailSpec::new(3, 10, 0.01).is_err());
    }

    #[test]
    fn build_matches_counts_and_is_seeded() {
        let src = balanced(50, 4);
        let spec = LongTailSpec::new(4, 40, 0.1).unwrap();
        let a = build_longtail(&src, &spec, 3).unwrap();
        assert_eq!(a.counts(), spec.counts());
        assert_eq!(a, build_longtail(&src, &spec, 3).unwrap());
        assert_ne!(a.data, build_longtail(&src, &spec, 4).unwrap().data);
    }

    #[test]
    fn insufficient_source_lists_classes() {
        let src = balanced(20, 3);
        let spec = LongTailSpec::new(3, 30, 0.5).unwrap();
        match build_longtail(&src, &spec, 0).unwrap_err() {
            Error::InsufficientExamples(d) => assert_eq!(d, vec![(0, 20, 30), (1, 20, 21)]),
            e => panic!("{e:?}"),
        }
    }
}
