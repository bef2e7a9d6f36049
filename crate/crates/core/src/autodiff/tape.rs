use crate::error::{Error, Result};

use super::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How per-row cross-entropy terms are combined into a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

/// One recorded operation. Inputs always precede the output on the tape.
#[derive(Debug, Clone)]
pub enum Op<T> {
    Leaf,
    /// `[m, k] x [k, n] -> [m, n]`
    MatMul(Var, Var),
    /// Elementwise add; the right operand may be a `[n]` bias against `[m, n]`.
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Sum(Var),
    Mean(Var),
    /// Softmax over the last axis.
    Softmax(Var),
    Log(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        reduction: Reduction,
    },
    /// 3x3 kernel, stride 1, no padding.
    #[cfg(feature = "conv")]
    Conv2d { input: Var, kernel: Var },
}

impl<T> Op<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Softmax(_) => "softmax",
            Op::Log(_) => "log",
            Op::CrossEntropy { .. } => "cross_entropy",
            #[cfg(feature = "conv")]
            Op::Conv2d { .. } => "conv2d",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Softmax(a)
            | Op::Log(a) => vec![*a],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            #[cfg(feature = "conv")]
            Op::Conv2d { input, kernel } => vec![*input, *kernel],
        }
    }
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    requires_grad: bool,
}

/// Wengert list of operations applied to leaf tensors.
///
/// Every forward op evaluates eagerly, appends exactly one node, and rejects
/// non-finite outputs. `backward` walks the list in reverse.
#[derive(Debug, Clone, Default)]
pub struct Tape<T = f64> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar loss with respect to the `requires_grad` leaves.
#[derive(Debug, Clone)]
pub struct Gradients<T = f64> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient for `var`; `None` unless it is a leaf created with `requires_grad`.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    /// The recorded operation that produced `var`.
    pub fn op(&self, var: Var) -> &Op<T> {
        &self.nodes[var.0].op
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Result<Var> {
        self.push(Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Relu(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Mean(a))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Softmax(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Log(a))
    }

    /// Mean softmax cross-entropy of `[B, C]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        self.cross_entropy_with(logits, labels, Reduction::Mean)
    }

    pub fn cross_entropy_with(
        &mut self,
        logits: Var,
        labels: &[usize],
        reduction: Reduction,
    ) -> Result<Var> {
        self.push(Op::CrossEntropy {
            logits,
            labels: labels.to_vec(),
            reduction,
        })
    }

    #[cfg(feature = "conv")]
    pub fn conv2d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        self.push(Op::Conv2d { input, kernel })
    }

    fn push(&mut self, op: Op<T>) -> Result<Var> {
        let value = eval(&op, |v| &self.nodes[v.0].value)?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Recompute every node from the stored leaf values.
    pub fn replay(&self) -> Result<Vec<Tensor<T>>> {
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let value = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => eval(op, |v| &values[v.0])?,
            };
            values.push(value);
        }
        Ok(values)
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(Error::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut adjoints: Vec<Option<Vec<T>>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(vec![T::one()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(upstream) = adjoints[idx].take() else {
                continue;
            };
            self.propagate(node, &upstream, &mut adjoints);
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(idx, node)| {
                (matches!(node.op, Op::Leaf) && node.requires_grad).then(|| {
                    let data = adjoints
                        .get_mut(idx)
                        .and_then(Option::take)
                        .unwrap_or_else(|| vec![T::zero(); node.value.len()]);
                    Tensor::new(node.value.shape().to_vec(), data)
                        .expect("adjoint length matches value")
                })
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, dy: &[T], adjoints: &mut [Option<Vec<T>>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let (ad, bd) = (av.data(), bv.data());
                if wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    for i in 0..m {
                        let dy_row = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let b_row = &bd[p * n..(p + 1) * n];
                            let mut acc = T::zero();
                            for j in 0..n {
                                acc = acc + dy_row[j] * b_row[j];
                            }
                            da[i * k + p] = acc;
                        }
                    }
                    accumulate(adjoints, *a, &da);
                }
                if wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    for i in 0..m {
                        let dy_row = &dy[i * n..(i + 1) * n];
                        for p in 0..k {
                            let a_ip = ad[i * k + p];
                            let db_row = &mut db[p * n..(p + 1) * n];
                            for j in 0..n {
                                db_row[j] = db_row[j] + a_ip * dy_row[j];
                            }
                        }
                    }
                    accumulate(adjoints, *b, &db);
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    accumulate(adjoints, *a, dy);
                }
                if wants(*b) {
                    let bl = val(*b).len();
                    if bl == dy.len() {
                        accumulate(adjoints, *b, dy);
                    } else {
                        let mut db = vec![T::zero(); bl];
                        for chunk in dy.chunks(bl) {
                            for (d, &g) in db.iter_mut().zip(chunk) {
                                *d = *d + g;
                            }
                        }
                        accumulate(adjoints, *b, &db);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(*a).data(), val(*b).data());
                if wants(*a) {
                    let da: Vec<T> = dy.iter().zip(bd).map(|(&g, &y)| g * y).collect();
                    accumulate(adjoints, *a, &da);
                }
                if wants(*b) {
                    let db: Vec<T> = dy.iter().zip(ad).map(|(&g, &x)| g * x).collect();
                    accumulate(adjoints, *b, &db);
                }
            }
            Op::Scale(a, c) => {
                let da: Vec<T> = dy.iter().map(|&g| g * *c).collect();
                accumulate(adjoints, *a, &da);
            }
            Op::Relu(a) => {
                let da: Vec<T> = dy
                    .iter()
                    .zip(val(*a).data())
                    .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                accumulate(adjoints, *a, &da);
            }
            Op::Sum(a) => {
                let da = vec![dy[0]; val(*a).len()];
                accumulate(adjoints, *a, &da);
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                let g = dy[0] / T::from(n).unwrap();
                accumulate(adjoints, *a, &vec![g; n]);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let width = last_axis(node.value.shape());
                let mut da = vec![T::zero(); y.len()];
                for ((yr, gr), dr) in y
                    .chunks(width)
                    .zip(dy.chunks(width))
                    .zip(da.chunks_mut(width))
                {
                    let dot = yr
                        .iter()
                        .zip(gr)
                        .fold(T::zero(), |acc, (&yv, &gv)| acc + yv * gv);
                    for j in 0..width {
                        dr[j] = yr[j] * (gr[j] - dot);
                    }
                }
                accumulate(adjoints, *a, &da);
            }
            Op::Log(a) => {
                let da: Vec<T> = dy
                    .iter()
                    .zip(val(*a).data())
                    .map(|(&g, &x)| g / x)
                    .collect();
                accumulate(adjoints, *a, &da);
            }
            Op::CrossEntropy {
                logits,
                labels,
                reduction,
            } => {
                let z = val(*logits);
                let (batch, classes) = (z.shape()[0], z.shape()[1]);
                let scale = match reduction {
                    Reduction::Mean => dy[0] / T::from(batch).unwrap(),
                    Reduction::Sum => dy[0],
                };
                let mut dz = vec![T::zero(); batch * classes];
                for (i, &label) in labels.iter().enumerate() {
                    let row = z.row(i);
                    let (max, lse) = shifted_log_sum_exp(row);
                    for j in 0..classes {
                        let p = (row[j] - max - lse).exp();
                        let target = if j == label { T::one() } else { T::zero() };
                        dz[i * classes + j] = scale * (p - target);
                    }
                }
                accumulate(adjoints, *logits, &dz);
            }
            #[cfg(feature = "conv")]
            Op::Conv2d { input, kernel } => {
                let (xv, kv) = (val(*input), val(*kernel));
                let (dx, dk) = super::conv::conv2d_backward(xv, kv, dy);
                if wants(*input) {
                    accumulate(adjoints, *input, &dx);
                }
                if wants(*kernel) {
                    accumulate(adjoints, *kernel, &dk);
                }
            }
        }
    }
}

fn accumulate<T: Scalar>(adjoints: &mut [Option<Vec<T>>], var: Var, delta: &[T]) {
    match &mut adjoints[var.0] {
        Some(existing) => {
            for (e, &d) in existing.iter_mut().zip(delta) {
                *e = *e + d;
            }
        }
        slot @ None => *slot = Some(delta.to_vec()),
    }
}

fn last_axis(shape: &[usize]) -> usize {
    shape.last().copied().unwrap_or(1).max(1)
}

/// Returns `(max, ln sum_j exp(x_j - max))`, with the sum evaluated as
/// `ln_1p` over the non-maximal terms so tiny tails keep full precision.
fn shifted_log_sum_exp<T: Scalar>(row: &[T]) -> (T, T) {
    let (arg, max) = row
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let rest = row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .fold(T::zero(), |acc, (_, &v)| acc + (v - max).exp());
    (max, rest.ln_1p())
}

fn mismatch<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn eval<'a, T: Scalar>(
    op: &Op<T>,
    value: impl Fn(Var) -> &'a Tensor<T>,
) -> Result<Tensor<T>> {
    let out = match op {
        Op::Leaf => unreachable!("leaves are never evaluated"),
        Op::MatMul(a, b) => {
            let (a, b) = (value(*a), value(*b));
            if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                return Err(mismatch("matmul", a, b));
            }
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            let (ad, bd) = (a.data(), b.data());
            let mut out = vec![T::zero(); m * n];
            for i in 0..m {
                let out_row = &mut out[i * n..(i + 1) * n];
                for p in 0..k {
                    let a_ip = ad[i * k + p];
                    let b_row = &bd[p * n..(p + 1) * n];
                    for j in 0..n {
                        out_row[j] = out_row[j] + a_ip * b_row[j];
                    }
                }
            }
            Tensor::new(vec![m, n], out)?
        }
        Op::Add(a, b) => {
            let (a, b) = (value(*a), value(*b));
            if a.shape() == b.shape() {
                let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
                Tensor::new(a.shape().to_vec(), data)?
            } else if a.shape().len() == 2 && b.shape() == [a.shape()[1]] {
                let n = b.len();
                let data = a
                    .data()
                    .chunks(n)
                    .flat_map(|row| row.iter().zip(b.data()).map(|(&x, &y)| x + y))
                    .collect();
                Tensor::new(a.shape().to_vec(), data)?
            } else {
                return Err(mismatch("add", a, b));
            }
        }
        Op::Mul(a, b) => {
            let (a, b) = (value(*a), value(*b));
            if a.shape() != b.shape() {
                return Err(mismatch("mul", a, b));
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect();
            Tensor::new(a.shape().to_vec(), data)?
        }
        Op::Scale(a, c) => value(*a).map(|x| x * *c),
        Op::Relu(a) => value(*a).map(|x| if x > T::zero() { x } else { T::zero() }),
        Op::Sum(a) => {
            let a = value(*a);
            Tensor::scalar(a.data().iter().fold(T::zero(), |acc, &x| acc + x))
        }
        Op::Mean(a) => {
            let a = value(*a);
            if a.is_empty() {
                return Err(Error::ShapeMismatch {
                    op: "mean",
                    lhs: a.shape().to_vec(),
                    rhs: Vec::new(),
                });
            }
            let total = a.data().iter().fold(T::zero(), |acc, &x| acc + x);
            Tensor::scalar(total / T::from(a.len()).unwrap())
        }
        Op::Softmax(a) => {
            let a = value(*a);
            let width = last_axis(a.shape());
            let mut data = Vec::with_capacity(a.len());
            for row in a.data().chunks(width) {
                let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
                let start = data.len();
                let mut total = T::zero();
                for &v in row {
                    let e = (v - max).exp();
                    total = total + e;
                    data.push(e);
                }
                for e in &mut data[start..] {
                    *e = *e / total;
                }
            }
            Tensor::new(a.shape().to_vec(), data)?
        }
        Op::Log(a) => value(*a).map(|x| x.ln()),
        Op::CrossEntropy {
            logits,
            labels,
            reduction,
        } => {
            let z = value(*logits);
            if z.shape().len() != 2 || z.shape()[0] != labels.len() || z.shape()[0] == 0 {
                return Err(Error::ShapeMismatch {
                    op: "cross_entropy",
                    lhs: z.shape().to_vec(),
                    rhs: vec![labels.len()],
                });
            }
            let classes = z.shape()[1];
            if classes < 2 {
                return Err(Error::ShapeMismatch {
                    op: "cross_entropy",
                    lhs: z.shape().to_vec(),
                    rhs: vec![labels.len(), 2],
                });
            }
            let mut total = T::zero();
            for (i, &label) in labels.iter().enumerate() {
                if label >= classes {
                    return Err(Error::LabelOutOfRange { label, classes });
                }
                let row = z.row(i);
                let (max, lse) = shifted_log_sum_exp(row);
                total = total + (lse - (row[label] - max));
            }
            match reduction {
                Reduction::Mean => Tensor::scalar(total / T::from(labels.len()).unwrap()),
                Reduction::Sum => Tensor::scalar(total),
            }
        }
        #[cfg(feature = "conv")]
        Op::Conv2d { input, kernel } => super::conv::conv2d_forward(value(*input), value(*kernel))?,
    };
    if !out.is_finite() {
        return Err(Error::NonFinite { op: op.name() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        for &p in tape.value(y).data() {
            assert!(close(p, 1.0 / 3.0, 1e-15));
        }
    }

    #[test]
    fn relu_clips_negative() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
    }

    #[test]
    fn matmul_identity_returns_operand() {
        let a = Tensor::new(
            vec![3, 3],
            vec![0.3, -1.2, 4.0, 2.5, 0.0, -0.7, 1.1, 9.0, -3.3],
        )
        .unwrap();
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let mut tape = Tape::new();
        let (i, av) = (tape.constant(eye), tape.constant(a.clone()));
        let out = tape.matmul(i, av).unwrap();
        assert_eq!(tape.value(out), &a);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![2, 3]));
        match tape.matmul(a, b).unwrap_err() {
            Error::ShapeMismatch { op, lhs, rhs } => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cross_entropy_uniform_is_ln2() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        let l = tape.cross_entropy(z, &[0]).unwrap();
        assert!(close(tape.value(l).item().unwrap(), std::f64::consts::LN_2, 1e-15));
    }

    #[test]
    fn cross_entropy_confident_keeps_precision() {
        // -ln sigma(20) = ln(1 + e^-20)
        let expected = (-20.0f64).exp().ln_1p();
        assert!(close(expected, 2.0611536e-9, 1e-15));
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[vec![10.0, -10.0]]).unwrap());
        let l = tape.cross_entropy(z, &[0]).unwrap();
        let got = tape.value(l).item().unwrap();
        assert!((got - expected).abs() / expected < 1e-12, "{got}");
    }

    #[test]
    fn cross_entropy_decreases_with_confidence() {
        let mut prev = f64::INFINITY;
        for scale in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let mut tape = Tape::new();
            let z = tape.constant(Tensor::from_rows(&[vec![0.0, scale, 0.0]]).unwrap());
            let l = tape.cross_entropy(z, &[1]).unwrap();
            let v = tape.value(l).item().unwrap();
            assert!(v < prev && v > 0.0);
            prev = v;
        }
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        assert!(matches!(
            tape.cross_entropy(z, &[2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]), true);
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let c = tape.constant(Tensor::vector(vec![5.0, 6.0]));
        let loss = tape.sum(c).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[0.0, 0.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let y = tape.relu(x).unwrap();
        assert!(matches!(tape.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn log_of_zero_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        assert!(matches!(tape.log(x), Err(Error::NonFinite { op: "log" })));
    }

    #[test]
    fn replay_reproduces_values_bitwise() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_rows(&[vec![0.1, -0.4], vec![2.0, 0.3]]).unwrap(), true);
        let w = tape.leaf(Tensor::from_rows(&[vec![1.5, -0.2, 0.7], vec![0.3, 0.9, -1.1]]).unwrap(), true);
        let b = tape.leaf(Tensor::vector(vec![0.01, 0.02, -0.03]), true);
        let h = tape.matmul(x, w).unwrap();
        let h = tape.add(h, b).unwrap();
        let h = tape.relu(h).unwrap();
        let p = tape.softmax(h).unwrap();
        let lp = tape.log(p).unwrap();
        let _ = tape.mean(lp).unwrap();
        let replayed = tape.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            let orig = tape.value(Var(i));
            let bits = |t: &Tensor| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(v), bits(orig));
        }
    }

    #[test]
    fn f32_path_computes() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::<f32>::vector(vec![1.0, 2.0]), true);
        let s = tape.mul(x, x).unwrap();
        let l = tape.sum(s).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0f32, 4.0]);
    }
}
