//! Guiding adversarial example selection.
//!
//! A trace becomes a GAE when its source is a tail class, the attack crossed
//! within `k` steps, and it landed in a more frequent class. The GAE keeps the
//! source label.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attack::AttackTrace;
use crate::error::{Error, Result};

/// How tail (minority) classes are chosen from training counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionRule {
    /// Tail iff `n_i` is strictly below the mean class count.
    BelowMeanCount,
    /// The `floor(C/2)` least frequent classes (ties broken towards higher index).
    BottomHalf,
    Explicit(Vec<usize>),
}

impl Default for PartitionRule {
    fn default() -> Self {
        Self::BelowMeanCount
    }
}

/// Which landing classes make a crossed trace a GAE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptRule {
    /// Target must be a head class.
    #[default]
    HeadOnly,
    /// Target must have strictly more training examples than the source.
    StrictlyMoreFrequent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPartition {
    tail: Vec<bool>,
    pub rule: PartitionRule,
}

impl ClassPartition {
    pub fn num_classes(&self) -> usize {
        self.tail.len()
    }

    pub fn is_tail(&self, class: usize) -> bool {
        self.tail.get(class).copied().unwrap_or(false)
    }

    pub fn tail_classes(&self) -> Vec<usize> {
        (0..self.tail.len()).filter(|&c| self.tail[c]).collect()
    }

    pub fn head_classes(&self) -> Vec<usize> {
        (0..self.tail.len()).filter(|&c| !self.tail[c]).collect()
    }
}

pub fn partition_classes(counts: &[usize], rule: &PartitionRule) -> Result<ClassPartition> {
    let c = counts.len();
    let tail = match rule {
        PartitionRule::BelowMeanCount => {
            let total: usize = counts.iter().sum();
            // n_i < total / C, kept in integers
            counts.iter().map(|&n| n * c < total).collect()
        }
        PartitionRule::BottomHalf => {
            let mut order: Vec<usize> = (0..c).collect();
            order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
            let mut tail = vec![false; c];
            for &class in &order[c - c / 2..] {
                tail[class] = true;
            }
            tail
        }
        PartitionRule::Explicit(classes) => {
            let mut tail = vec![false; c];
            for &class in classes {
                if class >= c {
                    return Err(Error::UnknownClass { class, classes: c });
                }
                tail[class] = true;
            }
            tail
        }
    };
    Ok(ClassPartition {
        tail,
        rule: rule.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gae {
    /// The iterate at the crossing step.
    pub x_cross: Vec<f64>,
    /// Original (tail) label, used as the training target.
    pub label: usize,
    pub source_class: usize,
    pub target_class: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaeBatch {
    pub members: Vec<Gae>,
}

impl GaeBatch {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.members.iter().map(|g| g.label).collect()
    }

    /// Row-major `[len, dim]` features.
    pub fn features(&self) -> Vec<f64> {
        self.members
            .iter()
            .flat_map(|g| g.x_cross.iter().copied())
            .collect()
    }
}

/// Keep the traces that crossed into an acceptable, more frequent class.
pub fn select_gaes(
    traces: &[AttackTrace],
    partition: &ClassPartition,
    counts: &[usize],
    accept: AcceptRule,
) -> Result<GaeBatch> {
    let mut members = Vec::new();
    for trace in traces {
        let source = trace.source_class;
        if !partition.is_tail(source) {
            return Err(Error::Misuse(format!(
                "trace from class {source}, which is not a tail class"
            )));
        }
        let (Some(s), Some(x_cross)) = (trace.crossing_step, trace.crossing_iterate()) else {
            continue;
        };
        let target = trace.final_class;
        let frequent = counts[target] > counts[source];
        let accepted = match accept {
            AcceptRule::HeadOnly => frequent && !partition.is_tail(target),
            AcceptRule::StrictlyMoreFrequent => frequent,
        };
        if accepted {
            members.push(Gae {
                x_cross: x_cross.to_vec(),
                label: source,
                source_class: source,
                target_class: target,
                steps: s,
            });
        }
    }
    Ok(GaeBatch { members })
}

/// Per-epoch GAE tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaeStats {
    pub epoch: usize,
    pub count: usize,
    pub source_hist: Vec<usize>,
    pub target_hist: Vec<usize>,
    /// `pairs[source][target]`
    pub pairs: Vec<Vec<usize>>,
}

impl GaeStats {
    pub fn new(epoch: usize, num_classes: usize) -> Self {
        Self {
            epoch,
            count: 0,
            source_hist: vec![0; num_classes],
            target_hist: vec![0; num_classes],
            pairs: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn record(&mut self, batch: &GaeBatch) {
        for g in &batch.members {
            self.count += 1;
            self.source_hist[g.source_class] += 1;
            self.target_hist[g.target_class] += 1;
            self.pairs[g.source_class][g.target_class] += 1;
        }
    }
}

pub fn gae_stats(batch: &GaeBatch, epoch: usize, num_classes: usize) -> GaeStats {
    let mut stats = GaeStats::new(epoch, num_classes);
    stats.record(batch);
    stats
}

#[derive(Serialize)]
struct AuditRecord<'a> {
    epoch: usize,
    count: usize,
    source_class_histogram: &'a [usize],
    target_class_histogram: &'a [usize],
}

/// JSON-lines audit log, one record per epoch.
pub fn write_audit_log(out: &mut impl Write, stats: &[GaeStats]) -> std::io::Result<()> {
    for s in stats {
        let rec = AuditRecord {
            epoch: s.epoch,
            count: s.count,
            source_class_histogram: &s.source_hist,
            target_class_histogram: &s.target_hist,
        };
        serde_json::to_writer(&mut *out, &rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_audit_log(path: &Path, stats: &[GaeStats]) -> Result<()> {
    let mut buf = Vec::new();
    write_audit_log(&mut buf, stats).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const COUNTS: [usize; 10] = [1000, 599, 359, 215, 129, 77, 46, 28, 17, 10];

    fn trace(source: usize, s: Option<usize>, target: usize) -> AttackTrace {
        let steps = s.unwrap_or(3);
        AttackTrace {
            source_class: source,
            iterates: (0..=steps).map(|t| vec![t as f64 * 0.01, 0.5]).collect(),
            margins: (0..=steps)
                .map(|t| if Some(t) == s { -0.1 } else { 0.2 })
                .collect(),
            crossing_step: s,
            final_class: if s.is_some() { target } else { source },
            already_crossed: false,
        }
    }

    #[test]
    fn below_mean_on_longtail_counts() {
        // mean = 2480 / 10 = 248; 215 < 248 puts class 3 in the tail
        let p = partition_classes(&COUNTS, &PartitionRule::BelowMeanCount).unwrap();
        assert_eq!(p.tail_classes(), vec![3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(p.head_classes(), vec![0, 1, 2]);
    }

    #[test]
    fn balanced_counts_have_no_tail() {
        let p = partition_classes(&[50; 10], &PartitionRule::BelowMeanCount).unwrap();
        assert!(p.tail_classes().is_empty());
    }

    #[test]
    fn bottom_half() {
        let p = partition_classes(&COUNTS, &PartitionRule::BottomHalf).unwrap();
        assert_eq!(p.tail_classes(), vec![5, 6, 7, 8, 9]);
    }

    #[test]
    fn explicit_unknown_class() {
        assert!(matches!(
            partition_classes(&COUNTS, &PartitionRule::Explicit(vec![2, 10])),
            Err(Error::UnknownClass { class: 10, classes: 10 })
        ));
    }

    #[test]
    fn failed_attack_is_excluded() {
        let p = partition_classes(&COUNTS, &PartitionRule::BelowMeanCount).unwrap();
        let b = select_gaes(&[trace(9, None, 9)], &p, &COUNTS, AcceptRule::HeadOnly).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn tail_to_head_keeps_original_label() {
        let p = partition_classes(&COUNTS, &PartitionRule::BelowMeanCount).unwrap();
        let t = trace(9, Some(2), 0);
        let b = select_gaes(&[t.clone()], &p, &COUNTS, AcceptRule::HeadOnly).unwrap();
        assert_eq!(b.len(), 1);
        let g = &b.members[0];
        assert_eq!((g.label, g.source_class, g.target_class, g.steps), (9, 9, 0, 2));
        assert_eq!(g.x_cross, t.iterates[2]);
    }

    #[test]
    fn tail_to_tail_depends_on_rule() {
        let p = partition_classes(&COUNTS, &PartitionRule::BelowMeanCount).unwrap();
        let t = [trace(9, Some(1), 8)];
        assert!(select_gaes(&t, &p, &COUNTS, AcceptRule::HeadOnly).unwrap().is_empty());
        assert_eq!(select_gaes(&t, &p, &COUNTS, AcceptRule::StrictlyMoreFrequent).unwrap().len(), 1);
        // into a rarer class is never accepted
        let rarer = [trace(8, Some(1), 9)];
        assert!(select_gaes(&rarer, &p, &COUNTS, AcceptRule::StrictlyMoreFrequent).unwrap().is_empty());
    }

    #[test]
    fn head_source_is_misuse() {
        let p = partition_classes(&COUNTS, &PartitionRule::BelowMeanCount).unwrap();
        assert!(matches!(
            select_gaes(&[trace(1, Some(1), 0)], &p, &COUNTS, AcceptRule::HeadOnly),
            Err(Error::Misuse(_))
        ));
    }

    #[test]
    fn stats_and_audit() {
        let p = partition_classes(&COUNTS, &PartitionRule::BelowMeanCount).unwrap();
        let traces = [trace(9, Some(1), 0), trace(3, Some(2), 2), trace(5, None, 5)];
        let b = select_gaes(&traces, &p, &COUNTS, AcceptRule::HeadOnly).unwrap();
        let s = gae_stats(&b, 4, 10);
        assert_eq!(s.count, 2);
        assert_eq!(s.pairs[9][0], 1);
        assert_eq!(s.target_hist[2], 1);
        assert_eq!(gae_stats(&GaeBatch::default(), 0, 10).count, 0);

        let mut buf = Vec::new();
        write_audit_log(&mut buf, &[s]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["epoch"], 4);
        assert_eq!(v["count"], 2);
    }
}
