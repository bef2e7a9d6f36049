//! Classification metrics and rank statistics.

use serde::{Deserialize, Serialize};

/// Confusion-matrix derived accuracy figures for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    /// Recall per class (`confusion[i][i] / row_sum[i]`); 0 for classes absent from the set.
    pub per_class_accuracy: Vec<f64>,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
}

impl EvalMetrics {
    pub fn from_predictions(num_classes: usize, truth: &[usize], predicted: &[usize]) -> Self {
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let total: usize = truth.len();
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                if n == 0 {
                    0.0
                } else {
                    row[c] as f64 / n as f64
                }
            })
            .collect();
        Self {
            accuracy: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
            per_class_accuracy,
            confusion,
        }
    }

    /// Mean recall over `classes`; `None` when the set is empty.
    pub fn mean_recall(&self, classes: &[usize]) -> Option<f64> {
        mean(classes.iter().map(|&c| self.per_class_accuracy[c]))
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; `None` if either series is constant or shorter than 2.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}

pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let mx = mean(x.iter().copied())?;
    let my = mean(y.iter().copied())?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let truth = [0, 1, 2, 2, 1, 0];
        let m = EvalMetrics::from_predictions(3, &truth, &truth);
        assert_eq!(m.accuracy, 1.0);
        for (i, row) in m.confusion.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, if i == j { 2 } else { 0 });
            }
        }
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let truth: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let m = EvalMetrics::from_predictions(4, &truth, &[1; 40]);
        assert_eq!(m.accuracy, 0.25);
        assert_eq!(m.per_class_accuracy, vec![0.0, 1.0, 0.0, 0.0]);
        let rows: Vec<usize> = m.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![10; 4]);
    }

    #[test]
    fn accuracy_is_trace_over_total() {
        let truth = [0, 0, 1, 1, 1, 2];
        let pred = [0, 1, 1, 2, 1, 0];
        let m = EvalMetrics::from_predictions(3, &truth, &pred);
        let trace: usize = (0..3).map(|c| m.confusion[c][c]).sum();
        assert_eq!(m.accuracy, trace as f64 / 6.0);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(ranks(&[10.0, 20.0, 10.0, 5.0]), vec![2.5, 4.0, 2.5, 1.0]);
    }

    #[test]
    fn spearman_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[1.0, 4.0, 9.0, 16.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[9.0, 3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman(&x, &[5.0; 4]), None);
    }

    #[test]
    fn spearman_matches_textbook_formula_without_ties() {
        // 1 - 6 sum d^2 / (n (n^2 - 1))
        let x = [3.0, 1.0, 4.0, 1.5, 5.0, 9.0, 2.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.8, 1.8, 2.9];
        let (rx, ry) = (ranks(&x), ranks(&y));
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let n = x.len() as f64;
        let expected = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-12);
    }
}
