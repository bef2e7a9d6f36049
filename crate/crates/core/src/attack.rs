//! ℓ∞ projected gradient descent with per-step margin tracing.
//!
//! Each iterate is
//! `x_{t+1} = clamp(Π_{‖x − x_0‖∞ ≤ ε}(x_t + α·sign(∇_x L_CE(x_t, y))), lo, hi)`
//! and the attack stops at the first step whose margin `f_t − f_m` is `≤ 0`.
//! A zero margin counts as crossed.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Maximum number of PGD steps.
    pub k: usize,
    /// Step size per feature.
    pub alpha: f64,
    /// ℓ∞ radius around the clean input.
    pub epsilon: f64,
    #[serde(default = "AttackConfig::default_clamp")]
    pub clamp_range: (f64, f64),
}

impl AttackConfig {
    fn default_clamp() -> (f64, f64) {
        (0.0, 1.0)
    }

    pub fn new(k: usize, alpha: f64, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            k,
            alpha,
            epsilon,
            clamp_range: Self::default_clamp(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// ε = 0.1, α = ε/4 for low-dimensional vector data.
    pub fn for_vectors(k: usize) -> Self {
        Self {
            k,
            alpha: 0.025,
            epsilon: 0.1,
            clamp_range: Self::default_clamp(),
        }
    }

    /// ε = 8/255, α = ε/4 for pixel data.
    pub fn for_images(k: usize) -> Self {
        let epsilon = 8.0 / 255.0;
        Self {
            k,
            alpha: epsilon / 4.0,
            epsilon,
            clamp_range: Self::default_clamp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clamp_range;
        if self.k == 0 {
            return Err(Error::InvalidConfig("attack.k must be >= 1".into()));
        }
        if !(self.alpha > 0.0) || !(self.epsilon >= self.alpha) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "attack needs 0 < alpha <= epsilon, got alpha = {}, epsilon = {}",
                self.alpha, self.epsilon
            )));
        }
        if !(lo < hi) {
            return Err(Error::InvalidConfig(format!(
                "empty clamp range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// Iterates and margins of one attack.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTrace {
    pub source_class: usize,
    /// `x^0 ..= x^T`, `T <= k`.
    pub iterates: Vec<Vec<f64>>,
    /// `m_t = f_t(x^t) − f_m(x^t)` for each iterate.
    pub margins: Vec<f64>,
    /// First step `s` with `m_{s−1} > 0` and `m_s <= 0`.
    pub crossing_step: Option<usize>,
    pub final_class: usize,
    /// The clean input was already misclassified; no steps were taken.
    pub already_crossed: bool,
}

impl AttackTrace {
    pub fn steps(&self) -> usize {
        self.iterates.len() - 1
    }

    /// `x^s` when the attack crossed.
    pub fn crossing_iterate(&self) -> Option<&[f64]> {
        self.crossing_step.map(|s| self.iterates[s].as_slice())
    }
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn advance(x_t: &mut [f64], x_0: &[f64], grad: &[f64], cfg: &AttackConfig) {
    let (lo, hi) = cfg.clamp_range;
    for ((x, &x0), &g) in x_t.iter_mut().zip(x_0).zip(grad) {
        let stepped = *x + cfg.alpha * sign(g);
        *x = stepped
            .clamp(x0 - cfg.epsilon, x0 + cfg.epsilon)
            .clamp(lo, hi);
    }
}

/// One projected signed-gradient ascent step on the cross-entropy of `y`.
pub fn pgd_step(
    model: &Model,
    x_t: &[f64],
    x_0: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    if x_t.len() != x_0.len() {
        return Err(Error::ShapeMismatch {
            op: "pgd_step",
            lhs: vec![x_t.len()],
            rhs: vec![x_0.len()],
        });
    }
    // A single step only needs a well-formed ball; alpha > epsilon is legal here.
    let (lo, hi) = cfg.clamp_range;
    if !(cfg.alpha > 0.0 && cfg.epsilon >= 0.0 && lo < hi) {
        return Err(Error::InvalidConfig(format!("unusable attack config {cfg:?}")));
    }
    let x = Tensor::new(vec![1, x_t.len()], x_t.to_vec())?;
    let grad = model.per_sample_input_gradient(&x, &[y])?;
    if !grad.is_finite() {
        return Err(Error::NonFinite { op: "pgd_step" });
    }
    let mut next = x_t.to_vec();
    advance(&mut next, x_0, grad.data(), cfg);
    Ok(next)
}

pub fn attack_with_trace(
    model: &Model,
    x_0: &[f64],
    y: usize,
    cfg: &AttackConfig,
) -> Result<AttackTrace> {
    let x = Tensor::new(vec![1, x_0.len()], x_0.to_vec())?;
    Ok(batch_attack(model, &x, &[y], cfg)?.remove(0))
}

/// Attack every row of `x` independently; output order follows input order.
///
/// Rows are advanced together for speed, but every per-row quantity depends
/// only on that row, so traces match [`attack_with_trace`] bit for bit.
pub fn batch_attack(
    model: &Model,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<Vec<AttackTrace>> {
    cfg.validate()?;
    if labels.is_empty() {
        return Ok(Vec::new());
    }
    if x.shape().len() != 2 || x.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "batch_attack",
            lhs: x.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    let dim = x.shape()[1];
    let initial = model.margins(x, labels)?;
    let mut traces: Vec<AttackTrace> = initial
        .iter()
        .enumerate()
        .map(|(i, mv)| AttackTrace {
            source_class: labels[i],
            iterates: vec![x.row(i).to_vec()],
            margins: vec![mv.margin],
            crossing_step: None,
            final_class: mv.predicted_class,
            already_crossed: mv.margin <= 0.0,
        })
        .collect();

    let mut active: Vec<usize> = (0..traces.len())
        .filter(|&i| !traces[i].already_crossed)
        .collect();
    for step in 1..=cfg.k {
        if active.is_empty() {
            break;
        }
        let mut current = Vec::with_capacity(active.len() * dim);
        for &i in &active {
            current.extend_from_slice(traces[i].iterates.last().unwrap());
        }
        let active_labels: Vec<usize> = active.iter().map(|&i| labels[i]).collect();
        let current = Tensor::new(vec![active.len(), dim], current)?;
        let grads = model.per_sample_input_gradient(&current, &active_labels)?;
        if !grads.is_finite() {
            return Err(Error::NonFinite { op: "pgd_step" });
        }

        let mut next = current.into_data();
        for (r, chunk) in next.chunks_mut(dim).enumerate() {
            advance(chunk, x.row(active[r]), grads.row(r), cfg);
        }
        let next = Tensor::new(vec![active.len(), dim], next)?;
        let views = model.margins(&next, &active_labels)?;

        let mut still_active = Vec::with_capacity(active.len());
        for (r, &i) in active.iter().enumerate() {
            let trace = &mut traces[i];
            trace.iterates.push(next.row(r).to_vec());
            trace.margins.push(views[r].margin);
            trace.final_class = views[r].predicted_class;
            if views[r].margin <= 0.0 {
                trace.crossing_step = Some(step);
            } else {
                still_active.push(i);
            }
        }
        active = still_active;
    }
    Ok(traces)
}

/// One line of the optional trace dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub sample_id: usize,
    pub source_class: usize,
    pub s: Option<usize>,
    pub final_class: usize,
    pub margins: Vec<f64>,
}

impl TraceRecord {
    pub fn from_trace(sample_id: usize, trace: &AttackTrace) -> Self {
        Self {
            sample_id,
            source_class: trace.source_class,
            s: trace.crossing_step,
            final_class: trace.final_class,
            margins: trace.margins.clone(),
        }
    }
}

/// Write traces as JSON lines, one [`TraceRecord`] per line.
pub fn write_trace_dump(
    out: &mut impl Write,
    ids: &[usize],
    traces: &[AttackTrace],
) -> std::io::Result<()> {
    for (&id, trace) in ids.iter().zip(traces) {
        serde_json::to_writer(&mut *out, &TraceRecord::from_trace(id, trace))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_trace_dump(path: &Path, ids: &[usize], traces: &[AttackTrace]) -> Result<()> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    write_trace_dump(&mut file, ids, traces)
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic() -> Model {
        Model::logistic(&[1.0, -1.0], 0.0).unwrap()
    }

    #[test]
    fn logistic_step_moves_against_weights() {
        let cfg = AttackConfig::new(3, 0.1, 0.3).unwrap();
        let x1 = pgd_step(&logistic(), &[0.5, 0.5], &[0.5, 0.5], 0, &cfg).unwrap();
        assert!((x1[0] - 0.4).abs() < 1e-15 && (x1[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_point_unchanged() {
        let flat = Model::logistic(&[0.0, 0.0], 0.0).unwrap();
        let cfg = AttackConfig::new(1, 0.05, 0.1).unwrap();
        let x = [0.3, 0.7];
        assert_eq!(pgd_step(&flat, &x, &x, 0, &cfg).unwrap(), x.to_vec());
    }

    #[test]
    fn projection_pins_to_ball_edge() {
        // Oversized step; constructed directly to bypass the alpha <= epsilon check.
        let cfg = AttackConfig {
            k: 1,
            alpha: 0.5,
            epsilon: 0.1,
            clamp_range: (0.0, 1.0),
        };
        let x1 = pgd_step(&logistic(), &[0.5, 0.5], &[0.5, 0.5], 0, &cfg).unwrap();
        assert!((x1[0] - 0.4).abs() < 1e-15 && (x1[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn clamp_range_is_respected() {
        let cfg = AttackConfig::new(1, 0.1, 0.3).unwrap();
        let x1 = pgd_step(&logistic(), &[0.05, 0.97], &[0.05, 0.97], 0, &cfg).unwrap();
        assert_eq!(x1, vec![0.0, 1.0]);
    }

    #[test]
    fn already_misclassified_input_takes_no_steps() {
        let cfg = AttackConfig::for_vectors(3);
        let trace = attack_with_trace(&logistic(), &[0.2, 0.8], 0, &cfg).unwrap();
        assert!(trace.already_crossed);
        assert_eq!(trace.steps(), 0);
        assert_eq!(trace.crossing_step, None);
    }

    #[test]
    fn empty_batch() {
        let x = Tensor::new(vec![0, 2], vec![]).unwrap();
        assert!(batch_attack(&logistic(), &x, &[], &AttackConfig::for_vectors(3)).unwrap().is_empty());
    }

    #[test]
    fn invalid_configs() {
        assert!(AttackConfig::new(0, 0.1, 0.1).is_err());
        assert!(AttackConfig::new(1, 0.0, 0.1).is_err());
        assert!(AttackConfig::new(1, 0.2, 0.1).is_err());
    }

    #[test]
    fn trace_dump_lines() {
        let cfg = AttackConfig::for_vectors(2);
        let t = attack_with_trace(&logistic(), &[0.54, 0.5], 0, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trace_dump(&mut buf, &[7], &[t.clone()]).unwrap();
        let line = String::from_utf8(buf).unwrap();
        let rec: TraceRecord = serde_json::from_str(line.trim_end()).unwrap();
        assert_eq!(rec, TraceRecord::from_trace(7, &t));
        assert_eq!(rec.s, Some(1));
    }
}
