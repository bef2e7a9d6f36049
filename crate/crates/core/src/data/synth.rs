//! Gaussian-mixture data for desk-scale experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, LongTailDataset, LongTailSpec};

pub const CIRCLE_RADIUS: f64 = 0.3;
pub const CIRCLE_STD: f64 = 0.08;

/// One axis-aligned Gaussian per class; samples are clipped to `[0, 1]^D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub means: Vec<Vec<f64>>,
    /// Per-class, per-dimension standard deviations.
    pub stds: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(means: Vec<Vec<f64>>, stds: Vec<Vec<f64>>) -> Result<Self> {
        let dim = means.first().map_or(0, Vec::len);
        let consistent = means.len() == stds.len()
            && means.len() >= 2
            && dim > 0
            && means.iter().chain(&stds).all(|v| v.len() == dim)
            && stds.iter().flatten().all(|&s| s >= 0.0 && s.is_finite());
        if !consistent {
            return Err(Error::InvalidConfig(
                "mixture needs >= 2 classes with matching mean/std dimensions".into(),
            ));
        }
        Ok(Self { means, stds })
    }

    /// Means evenly spaced on a circle of radius 0.3 around (0.5, 0.5), isotropic std 0.08.
    pub fn circle(num_classes: usize) -> Result<Self> {
        let means = (0..num_classes)
            .map(|i| {
                let angle = std::f64::consts::TAU * i as f64 / num_classes as f64;
                vec![
                    0.5 + CIRCLE_RADIUS * angle.cos(),
                    0.5 + CIRCLE_RADIUS * angle.sin(),
                ]
            })
            .collect();
        Self::new(means, vec![vec![CIRCLE_STD; 2]; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Draw `counts[i]` examples of class `i`, grouped by class.
    pub fn sample(&self, counts: &[usize], seed: u64) -> Result<Dataset> {
        if counts.len() != self.num_classes() {
            return Err(Error::InvalidConfig(format!(
                "{} class counts for a {}-class mixture",
                counts.len(),
                self.num_classes()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.dim();
        let total: usize = counts.iter().sum();
        let mut features = Vec::with_capacity(total * dim);
        let mut labels = Vec::with_capacity(total);
        for (class, &n) in counts.iter().enumerate() {
            let dists: Vec<Normal<f64>> = self.means[class]
                .iter()
                .zip(&self.stds[class])
                .map(|(&m, &s)| Normal::new(m, s).expect("validated std"))
                .collect();
            for _ in 0..n {
                features.extend(dists.iter().map(|d| d.sample(&mut rng).clamp(0.0, 1.0)));
                labels.push(class);
            }
        }
        Dataset::new(dim, self.num_classes(), features, labels)
    }

    /// Class-balanced sample, e.g. for a held-out test set.
    pub fn sample_balanced(&self, per_class: usize, seed: u64) -> Result<Dataset> {
        self.sample(&vec![per_class; self.num_classes()], seed)
    }
}

/// Long-tailed training set drawn from `mixture` with counts from `spec`.
pub fn synth_gaussians(
    mixture: &GaussianMixture,
    spec: &LongTailSpec,
    seed: u64,
) -> Result<LongTailDataset> {
    spec.validate()?;
    if spec.num_classes != mixture.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "spec has {} classes, mixture has {}",
            spec.num_classes,
            mixture.num_classes()
        )));
    }
    Ok(LongTailDataset {
        spec: *spec,
        data: mixture.sample(&spec.counts(), seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_layout() {
        let m = GaussianMixture::circle(4).unwrap();
        assert_eq!(m.dim(), 2);
        assert!((m.means[0][0] - 0.8).abs() < 1e-15 && (m.means[0][1] - 0.5).abs() < 1e-15);
        assert!((m.means[2][0] - 0.2).abs() < 1e-15);
        for mean in &m.means {
            let r = ((mean[0] - 0.5).powi(2) + (mean[1] - 0.5).powi(2)).sqrt();
            assert!((r - CIRCLE_RADIUS).abs() < 1e-12);
        }
    }

    #[test]
    fn ten_class_longtail_size_and_range() {
        let spec = LongTailSpec::new(10, 1000, 0.01).unwrap();
        let ds = synth_gaussians(&GaussianMixture::circle(10).unwrap(), &spec, 5).unwrap();
        assert_eq!(ds.data.len(), 2480);
        assert_eq!(ds.counts(), spec.counts());
        assert!(ds.data.in_unit_range());
    }

    #[test]
    fn seeded() {
        let spec = LongTailSpec::new(3, 50, 0.2).unwrap();
        let mix = GaussianMixture::circle(3).unwrap();
        assert_eq!(synth_gaussians(&mix, &spec, 9).unwrap(), synth_gaussians(&mix, &spec, 9).unwrap());
        assert_ne!(synth_gaussians(&mix, &spec, 9).unwrap(), synth_gaussians(&mix, &spec, 10).unwrap());
    }

    #[test]
    fn rejects_mismatched_mixture() {
        assert!(GaussianMixture::new(vec![vec![0.5, 0.5], vec![0.1]], vec![vec![0.1, 0.1], vec![0.1]]).is_err());
    }
}
