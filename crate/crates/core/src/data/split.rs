use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::Dataset;

/// Size of the balanced held-out split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSize {
    /// `floor(fraction * smallest class count)` per class.
    Fraction(f64),
    /// Fixed number of test examples per class.
    PerClass(usize),
}

/// Split into `(train, test)` with an equal number of test examples per class.
pub fn stratified_split(data: &Dataset, size: TestSize, seed: u64) -> Result<(Dataset, Dataset)> {
    let by_class = data.indices_by_class();
    for (class, idx) in by_class.iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::ClassTooSmall {
                class,
                count: idx.len(),
                needed: 2,
            });
        }
    }
    let smallest = by_class.iter().map(Vec::len).min().unwrap_or(0);
    let per_class = match size {
        TestSize::Fraction(f) if (0.0..=1.0).contains(&f) => (f * smallest as f64).floor() as usize,
        TestSize::Fraction(f) => {
            return Err(Error::InvalidConfig(format!("test fraction {f} outside [0, 1]")))
        }
        TestSize::PerClass(n) => n,
    };
    if let Some((class, idx)) = by_class.iter().enumerate().find(|(_, idx)| idx.len() <= per_class) {
        return Err(Error::ClassTooSmall {
            class,
            count: idx.len(),
            needed: per_class + 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in &by_class {
        let mut shuffled = idx.clone();
        shuffled.shuffle(&mut rng);
        let (t, r) = shuffled.split_at(per_class);
        test.extend_from_slice(t);
        train.extend_from_slice(r);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.subset(&train), data.subset(&test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_class(n0: usize, n1: usize) -> Dataset {
        let labels: Vec<usize> = std::iter::repeat(0).take(n0).chain(std::iter::repeat(1).take(n1)).collect();
        let features = (0..labels.len()).map(|i| i as f64 / labels.len() as f64).collect();
        Dataset::new(1, 2, features, labels).unwrap()
    }

    #[test]
    fn balanced_absolute_test_set() {
        let (train, test) = stratified_split(&two_class(100, 10), TestSize::PerClass(5), 1).unwrap();
        assert_eq!(test.class_counts(), vec![5, 5]);
        assert_eq!(train.class_counts(), vec![95, 5]);
    }

    #[test]
    fn fraction_uses_smallest_class() {
        let (_, test) = stratified_split(&two_class(100, 10), TestSize::Fraction(0.5), 1).unwrap();
        assert_eq!(test.class_counts(), vec![5, 5]);
    }

    #[test]
    fn zero_fraction_keeps_everything() {
        let data = two_class(100, 10);
        let (train, test) = stratified_split(&data, TestSize::Fraction(0.0), 1).unwrap();
        assert!(test.is_empty());
        assert_eq!(train, data);
    }

    #[test]
    fn seeded() {
        let data = two_class(40, 12);
        let a = stratified_split(&data, TestSize::PerClass(4), 7).unwrap();
        assert_eq!(a, stratified_split(&data, TestSize::PerClass(4), 7).unwrap());
    }

    #[test]
    fn tiny_class_is_rejected() {
        assert!(matches!(
            stratified_split(&two_class(10, 1), TestSize::Fraction(0.0), 0),
            Err(Error::ClassTooSmall { class: 1, .. })
        ));
        assert!(stratified_split(&two_class(10, 3), TestSize::PerClass(3), 0).is_err());
    }
}
