//! Small feed-forward classifiers, softmax outputs and margin queries.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Reduction, Tape, Tensor, Var};
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"GAECKPT1";

/// Layer widths of a ReLU MLP. No hidden layers gives multinomial logistic
/// regression.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn mlp(input_dim: usize, hidden: &[usize], num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            num_classes,
        }
    }

    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        Self::mlp(input_dim, &[], num_classes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidModel(format!(
                "zero-width layer in {}",
                self.describe()
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every dense layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let widths: Vec<usize> = std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.num_classes))
            .collect();
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Shapes of the parameter tensors in declaration order (W0, b0, W1, b1, ...).
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.layer_dims()
            .into_iter()
            .flat_map(|(i, o)| [vec![i, o], vec![o]])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn describe(&self) -> String {
        let mut parts = vec![self.input_dim.to_string()];
        parts.extend(self.hidden.iter().map(ToString::to_string));
        parts.push(self.num_classes.to_string());
        format!("MLP({})", parts.join("->"))
    }
}

/// Confidence gap between the true class and the strongest other class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginView {
    /// f_t: softmax confidence of the true label.
    pub true_conf: f64,
    /// f_m: largest softmax confidence over the remaining classes.
    pub top_other_conf: f64,
    /// True label while the margin is positive, otherwise the strongest other class.
    pub predicted_class: usize,
    pub margin: f64,
}

impl MarginView {
    fn from_probs(probs: &[f64], y_true: usize) -> Self {
        let (other_class, top_other) = probs
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != y_true)
            .fold((usize::MAX, f64::NEG_INFINITY), |(bj, bp), (j, &p)| {
                if p > bp {
                    (j, p)
                } else {
                    (bj, bp)
                }
            });
        let true_conf = probs[y_true];
        let margin = true_conf - top_other;
        Self {
            true_conf,
            top_other_conf: top_other,
            predicted_class: if margin > 0.0 { y_true } else { other_class },
            margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Vec<Tensor>,
}

impl Model {
    /// Uniform initialisation in `±1/sqrt(fan_in)`, deterministic in `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (fan_in, fan_out) in spec.layer_dims() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut draw = |n: usize| -> Vec<f64> {
                (0..n).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.push(Tensor::new(vec![fan_in, fan_out], draw(fan_in * fan_out))?);
            params.push(Tensor::new(vec![fan_out], draw(fan_out))?);
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::InvalidModel(format!(
                "{} expects {} parameter tensors, got {}",
                spec.describe(),
                shapes.len(),
                params.len()
            )));
        }
        for (shape, p) in shapes.iter().zip(&params) {
            if p.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    op: "from_params",
                    lhs: shape.clone(),
                    rhs: p.shape().to_vec(),
                });
            }
        }
        Ok(Self { spec, params })
    }

    /// Two-class logistic model `p(class 0) = sigmoid(w.x + b)`.
    pub fn logistic(w: &[f64], b: f64) -> Result<Self> {
        let d = w.len();
        let weight = w.iter().flat_map(|&wi| [wi, 0.0]).collect();
        Self::from_params(
            ModelSpec::logistic(d, 2),
            vec![Tensor::new(vec![d, 2], weight)?, Tensor::vector(vec![b, 0.0])],
        )
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// All parameter values, flattened in declaration order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.data().iter().copied()).collect()
    }

    /// Record the parameters on `tape` as leaves.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.clone(), requires_grad))
            .collect()
    }

    /// Record the forward pass producing `[B, C]` logits.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let layers = params.len() / 2;
        let mut h = x;
        for (l, pair) in params.chunks(2).enumerate() {
            h = tape.matmul(h, pair[0])?;
            h = tape.add(h, pair[1])?;
            if l + 1 < layers {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != 2 || x.shape()[1] != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "predict",
                lhs: x.shape().to_vec(),
                rhs: vec![x.rows(), self.spec.input_dim],
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite { op: "predict" });
        }
        Ok(())
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let z = self.forward(&mut tape, &params, xv)?;
        Ok(tape.value(z).clone())
    }

    /// Softmax probabilities h(x), one row per input.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let z = self.forward(&mut tape, &params, xv)?;
        let p = tape.softmax(z)?;
        Ok(tape.value(p).clone())
    }

    /// Argmax class per row (lowest index wins ties).
    pub fn classify(&self, x: &Tensor) -> Result<Vec<usize>> {
        let z = self.logits(x)?;
        Ok((0..z.rows()).map(|i| argmax(z.row(i))).collect())
    }

    pub fn margin(&self, x: &[f64], y_true: usize) -> Result<MarginView> {
        let x = Tensor::new(vec![1, x.len()], x.to_vec())?;
        Ok(self.margins(&x, &[y_true])?.remove(0))
    }

    pub fn margins(&self, x: &Tensor, labels: &[usize]) -> Result<Vec<MarginView>> {
        let probs = self.predict(x)?;
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| {
                if y >= self.num_classes() {
                    return Err(Error::LabelOutOfRange {
                        label: y,
                        classes: self.num_classes(),
                    });
                }
                Ok(MarginView::from_probs(probs.row(i), y))
            })
            .collect()
    }

    /// Gradient of the batch-mean cross-entropy with respect to the inputs.
    pub fn input_gradient(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
        self.input_gradient_with(x, labels, Reduction::Mean)
    }

    /// Per-row loss gradients: row `i` equals the gradient of sample `i` alone,
    /// independent of the rest of the batch.
    pub fn per_sample_input_gradient(&self, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
        self.input_gradient_with(x, labels, Reduction::Sum)
    }

    fn input_gradient_with(
        &self,
        x: &Tensor,
        labels: &[usize],
        reduction: Reduction,
    ) -> Result<Tensor> {
        self.check_input(x)?;
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let xv = tape.leaf(x.clone(), true);
        let z = self.forward(&mut tape, &params, xv)?;
        let loss = tape.cross_entropy_with(z, labels, reduction)?;
        let mut grads = tape.backward(loss)?;
        Ok(grads.take(xv).expect("input is a grad leaf"))
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.spec).expect("spec serializes");
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.spec.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.params.iter().flat_map(|p| p.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body_start = 12 + header_len;
        let header = bytes.get(12..body_start).ok_or_else(|| bad("truncated header"))?;
        let spec: ModelSpec =
            serde_json::from_slice(header).map_err(|e| bad(&format!("header: {e}")))?;
        spec.validate()?;
        let body = &bytes[body_start..];
        if body.len() != 8 * spec.param_count() {
            return Err(bad(&format!(
                "expected {} parameter bytes, found {}",
                8 * spec.param_count(),
                body.len()
            )));
        }
        let mut values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|shape| {
                let n = shape.iter().product();
                Tensor::new(shape, values.by_ref().take(n).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_params(spec, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_checkpoint_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}
