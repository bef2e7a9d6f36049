use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Labeled feature vectors stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        dim: usize,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::Malformed(format!(
                "{} feature values for {} examples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                classes: num_classes,
            });
        }
        Ok(Self {
            dim,
            num_classes,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Example indices grouped by class, each list in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.example(i));
        }
        Self {
            dim: self.dim,
            num_classes: self.num_classes,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// `[len, dim]` feature tensor and labels for the selected rows.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let sub = self.subset(indices);
        let n = sub.len();
        let x = Tensor::new(vec![n, self.dim], sub.features).expect("consistent subset");
        (x, sub.labels)
    }

    pub fn all(&self) -> (Tensor, Vec<usize>) {
        let x = Tensor::new(vec![self.len(), self.dim], self.features.clone())
            .expect("consistent dataset");
        (x, self.labels.clone())
    }

    /// True when every feature lies in `[0, 1]`.
    pub fn in_unit_range(&self) -> bool {
        self.features.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_label() {
        assert!(matches!(
            Dataset::new(1, 2, vec![0.0, 1.0], vec![0, 2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn subset_and_counts() {
        let ds = Dataset::new(2, 3, (0..10).map(f64::from).collect(), vec![0, 2, 2, 1, 0]).unwrap();
        assert_eq!(ds.class_counts(), vec![2, 1, 2]);
        let sub = ds.subset(&[4, 1]);
        assert_eq!(sub.labels(), &[0, 2]);
        assert_eq!(sub.features(), &[8.0, 9.0, 2.0, 3.0]);
        assert_eq!(ds.indices_by_class()[2], vec![1, 2]);
    }
}
