//! Dense row-major tensors and a small reverse-mode tape.
//!
//! The tape only knows the handful of primitives an MLP classifier needs:
//! affine layers, elementwise activations, the logit-scaled softmax
//! cross-entropy, and two reductions (`sum`, `weighted_mean`). Each
//! primitive records enough of its forward pass to compute vector-Jacobian
//! products, and [`Tape::backward`] walks the records once, newest first.

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
///
/// A scalar has an empty shape and one element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from user data, rejecting zero dimensions, length
    /// mismatches and non-finite values.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Parameter(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(&shape, &[data.len()]));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!(
                "non-finite value {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for results of arithmetic on valid tensors.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape, vec![0.0; n])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), vec![value])
    }

    /// Stacks equally long rows into an `n × d` matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::dim(&[n, d], &[bad.len()]));
        }
        Self::new(vec![n, d], rows.concat())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.iter().all(|&d| d == 1)
    }

    /// Number of rows of a matrix.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Number of columns of a matrix (1 for vectors).
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.row(i).to_vec()).collect()
    }

    /// Selects rows by index into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor::from_parts(shape, data)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn expect_matrix(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n, d] => Ok((*n, *d)),
            other => Err(Error::Contract(format!(
                "expected a matrix, got shape {other:?}"
            ))),
        }
    }
}

/// Elementwise nonlinearity between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    v
                } else {
                    0.0
                }
            }
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the input and the output.
    /// The relu subgradient at exactly 0 is 0.
    fn derivative(self, input: f64, output: f64) -> f64 {
        match self {
            Activation::Relu => {
                if input > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - output * output,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parameter(format!("unknown activation '{other}'"))),
        }
    }
}

/// `input · weight + bias` for `input: n×d`, `weight: d×m`, `bias: m`.
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, d) = input.expect_matrix()?;
    let (wd, m) = weight.expect_matrix()?;
    if wd != d {
        return Err(Error::dim(input.shape(), weight.shape()));
    }
    if bias.shape() != [m] {
        return Err(Error::dim(weight.shape(), bias.shape()));
    }
    let w = weight.data();
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let x = input.row(i);
        let o = &mut out[i * m..(i + 1) * m];
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            let wk = &w[k * m..(k + 1) * m];
            for (oj, &wkj) in o.iter_mut().zip(wk) {
                *oj += xk * wkj;
            }
        }
        for (oj, &bj) in o.iter_mut().zip(bias.data()) {
            *oj += bj;
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

pub fn activation(input: &Tensor, kind: Activation) -> Tensor {
    Tensor::from_parts(
        input.shape.clone(),
        input.data.iter().map(|&v| kind.apply(v)).collect(),
    )
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "logit scale alpha must be positive and finite, got {alpha}"
        )))
    }
}

/// Softmax of `alpha · logits` for one row, stabilized by subtracting the
/// maximum scaled logit.
pub fn softmax_row(logits: &[f64], alpha: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|&z| alpha * z)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|&z| (alpha * z - max).exp()).collect();
    let s: f64 = e.iter().sum();
    for v in &mut e {
        *v /= s;
    }
    e
}

/// Row-wise softmax of `alpha · logits`.
pub fn softmax(logits: &Tensor, alpha: f64) -> Result<Tensor> {
    check_alpha(alpha)?;
    let (n, c) = logits.expect_matrix()?;
    let mut out = Vec::with_capacity(n * c);
    for i in 0..n {
        out.extend(softmax_row(logits.row(i), alpha));
    }
    Ok(Tensor::from_parts(vec![n, c], out))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn argmax_rows(m: &Tensor) -> Vec<usize> {
    (0..m.rows()).map(|i| argmax(m.row(i))).collect()
}

fn check_labels(labels: &[usize], n: usize, c: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::dim(&[n], &[labels.len()]));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= c) {
        return Err(Error::Index(format!(
            "label {y} of example {i} outside [0, {c})"
        )));
    }
    Ok(())
}

/// Per-example loss `−log softmax(alpha · logits)_y` and `softmax − onehot`
/// (the loss gradient w.r.t. the scaled logits).
///
/// Both stay accurate when the softmax saturates: the log-sum-exp goes
/// through `ln_1p` of the non-max terms, and the label entry is formed as
/// `−Σ_{j≠y} p_j` instead of `p_y − 1`.
fn scaled_ce_forward(
    logits: &Tensor,
    labels: &[usize],
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_alpha(alpha)?;
    let (n, c) = logits.expect_matrix()?;
    check_labels(labels, n, c)?;
    let mut losses = Vec::with_capacity(n);
    let mut dlogits = Vec::with_capacity(n * c);
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let top = argmax(row);
        let max = alpha * row[top];
        let shifted: Vec<f64> = row.iter().map(|&z| alpha * z - max).collect();
        let rest: f64 = shifted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != top)
            .map(|(_, s)| s.exp())
            .sum();
        let log_sum = rest.ln_1p();
        losses.push(log_sum - shifted[y]);
        let start = dlogits.len();
        dlogits.extend(shifted.iter().map(|s| (s - log_sum).exp()));
        let others: f64 = (0..c).filter(|&j| j != y).map(|j| dlogits[start + j]).sum();
        dlogits[start + y] = -others;
    }
    Ok((losses, dlogits))
}

/// Per-example logit-scaled softmax cross-entropy, untaped.
pub fn scaled_softmax_cross_entropy(
    logits: &Tensor,
    labels: &[usize],
    alpha: f64,
) -> Result<Vec<f64>> {
    scaled_ce_forward(logits, labels, alpha).map(|(l, _)| l)
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Activation {
        input: Var,
        kind: Activation,
    },
    ScaledCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        alpha: f64,
        dlogits: Vec<f64>,
    },
    Sum {
        input: Var,
    },
    WeightedMean {
        input: Var,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of the primitives applied during one forward pass.
///
/// One tape per worker; tapes are not shared across threads.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = linear(self.value(input), self.value(weight), self.value(bias))?;
        let ng = self.needs(input) || self.needs(weight) || self.needs(bias);
        Ok(self.push(
            out,
            Op::Linear {
                input,
                weight,
                bias,
            },
            ng,
        ))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let out = activation(self.value(input), kind);
        let ng = self.needs(input);
        self.push(out, Op::Activation { input, kind }, ng)
    }

    /// Per-example `−log softmax(alpha · logits)_y`, shape `[n]`.
    pub fn scaled_softmax_cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        alpha: f64,
    ) -> Result<Var> {
        let (losses, dlogits) = scaled_ce_forward(self.value(logits), labels, alpha)?;
        let n = losses.len();
        let ng = self.needs(logits);
        Ok(self.push(
            Tensor::from_parts(vec![n], losses),
            Op::ScaledCrossEntropy {
                logits,
                labels: labels.to_vec(),
                alpha,
                dlogits,
            },
            ng,
        ))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        let ng = self.needs(input);
        self.push(Tensor::scalar(s), Op::Sum { input }, ng)
    }

    /// `(1/n) Σ w_i · x_i` over a length-`n` vector.
    pub fn weighted_mean(&mut self, input: Var, weights: &[f64]) -> Result<Var> {
        let x = self.value(input);
        if x.len() != weights.len() {
            return Err(Error::dim(x.shape(), &[weights.len()]));
        }
        let n = weights.len() as f64;
        let s = x
            .data()
            .iter()
            .zip(weights)
            .map(|(a, w)| a * w)
            .sum::<f64>()
            / n;
        let ng = self.needs(input);
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedMean {
                input,
                weights: weights.to_vec(),
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar node. Every recorded operation at or
    /// before `loss` is visited exactly once, newest first.
    pub fn backward(&self, loss: Var) -> Result<Gradient> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Contract(format!("node {} not on this tape", loss.0)));
        }
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::from_parts(
            self.value(loss).shape().to_vec(),
            vec![1.0],
        ));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let x = self.value(*input);
                    let w = self.value(*weight);
                    let (n, d) = (x.rows(), x.cols());
                    let m = w.cols();
                    let gd = g.data();
                    if self.needs(*input) {
                        let mut dx = vec![0.0; n * d];
                        let wd = w.data();
                        for i in 0..n {
                            let gi = &gd[i * m..(i + 1) * m];
                            for k in 0..d {
                                let wk = &wd[k * m..(k + 1) * m];
                                dx[i * d + k] = gi.iter().zip(wk).map(|(a, b)| a * b).sum();
                            }
                        }
                        accumulate(&mut adj, *input, Tensor::from_parts(vec![n, d], dx));
                    }
                    if self.needs(*weight) {
                        let mut dw = vec![0.0; d * m];
                        for i in 0..n {
                            let xi = x.row(i);
                            let gi = &gd[i * m..(i + 1) * m];
                            for (k, &xk) in xi.iter().enumerate() {
                                let row = &mut dw[k * m..(k + 1) * m];
                                for (r, &gj) in row.iter_mut().zip(gi) {
                                    *r += xk * gj;
                                }
                            }
                        }
                        accumulate(&mut adj, *weight, Tensor::from_parts(vec![d, m], dw));
                    }
                    if self.needs(*bias) {
                        let mut db = vec![0.0; m];
                        for i in 0..n {
                            for (b, &gj) in db.iter_mut().zip(&gd[i * m..(i + 1) * m]) {
                                *b += gj;
                            }
                        }
                        accumulate(&mut adj, *bias, Tensor::from_parts(vec![m], db));
                    }
                }
                Op::Activation { input, kind } => {
                    let x = self.value(*input);
                    let dx = x
                        .data()
                        .iter()
                        .zip(node.value.data())
                        .zip(g.data())
                        .map(|((&xi, &yi), &gi)| gi * kind.derivative(xi, yi))
                        .collect();
                    accumulate(&mut adj, *input, Tensor::from_parts(x.shape().to_vec(), dx));
                }
                Op::ScaledCrossEntropy {
                    logits,
                    labels,
                    alpha,
                    dlogits,
                } => {
                    let z = self.value(*logits);
                    let c = z.cols();
                    let mut dz = vec![0.0; z.len()];
                    for i in 0..labels.len() {
                        let gi = g.data()[i];
                        for j in 0..c {
                            dz[i * c + j] = gi * alpha * dlogits[i * c + j];
                        }
                    }
                    accumulate(&mut adj, *logits, Tensor::from_parts(z.shape().to_vec(), dz));
                }
                Op::Sum { input } => {
                    let x = self.value(*input);
                    let gv = g.data()[0];
                    accumulate(
                        &mut adj,
                        *input,
                        Tensor::from_parts(x.shape().to_vec(), vec![gv; x.len()]),
                    );
                }
                Op::WeightedMean { input, weights } => {
                    let x = self.value(*input);
                    let n = weights.len() as f64;
                    let gv = g.data()[0];
                    let dx = weights.iter().map(|w| gv * w / n).collect();
                    accumulate(&mut adj, *input, Tensor::from_parts(x.shape().to_vec(), dx));
                }
            }
        }

        let grads = adj
            .into_iter()
            .enumerate()
            .map(|(i, g)| match self.nodes[i].op {
                Op::Leaf if self.nodes[i].needs_grad => g.or_else(|| {
                    Some(Tensor::zeros(self.nodes[i].value.shape().to_vec()))
                }),
                _ => None,
            })
            .collect();
        Ok(Gradient { grads })
    }
}

fn accumulate(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of a scalar loss with respect to the differentiable leaves of
/// a tape. Each gradient has its leaf's shape.
#[derive(Debug, Clone)]
pub struct Gradient {
    grads: Vec<Option<Tensor>>,
}

impl Gradient {
    /// `None` for constants, non-leaf nodes and leaves recorded after the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn wrt(&self, v: Var) -> Result<&Tensor> {
        self.get(v)
            .ok_or_else(|| Error::Contract(format!("no gradient recorded for node {}", v.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn saturated_cross_entropy_keeps_tiny_values() {
        // e^-50 = 1.9287498479639178e-22; loss ln(1 + e^-50) and both logit
        // gradients equal it up to a relative 2e-22.
        let tiny = 1.9287498479639178e-22;
        let logits = Tensor::new(vec![1, 2], vec![0.0, 50.0]).unwrap();
        let loss = scaled_softmax_cross_entropy(&logits, &[1], 1.0).unwrap();
        assert!((loss[0] - tiny).abs() < tiny * 1e-14);
        let mut tape = Tape::new();
        let z = tape.leaf(logits);
        let ce = tape.scaled_softmax_cross_entropy(z, &[1], 1.0).unwrap();
        let l = tape.sum(ce);
        let g = tape.backward(l).unwrap();
        let dz = g.wrt(z).unwrap().data().to_vec();
        assert!((dz[0] - tiny).abs() < tiny * 1e-14);
        assert!((dz[1] + tiny).abs() < tiny * 1e-14);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::NAN]).is_err());
        assert!(Tensor::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn linear_identity() {
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let out = linear(&eye, &eye, &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(out, eye);
    }

    #[test]
    fn linear_sum_plus_bias() {
        let out = linear(&t(&[1, 2], &[1.0, 2.0]), &t(&[2, 1], &[1.0, 1.0]), &t(&[1], &[3.0])).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn linear_matches_triple_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut r = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let x = t(&[4, 3], &r(12));
        let w = t(&[3, 5], &r(15));
        let b = t(&[5], &r(5));
        let out = linear(&x, &w, &b).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += x.data()[i * 3 + k] * w.data()[k * 5 + j];
                }
                acc += b.data()[j];
                assert!((out.data()[i * 5 + j] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_shape_error_names_both_shapes() {
        let err = linear(&t(&[1, 2], &[1.0, 2.0]), &t(&[3, 1], &[1.0; 3]), &t(&[1], &[0.0]))
            .unwrap_err();
        match err {
            Error::Dimension { left, right } => {
                assert_eq!(left, vec![1, 2]);
                assert_eq!(right, vec![3, 1]);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn relu_and_tanh_values() {
        let out = activation(&t(&[3], &[-1.0, 0.0, 2.0]), Activation::Relu);
        assert_eq!(out.data(), &[0.0, 0.0, 2.0]);
        assert_eq!(activation(&t(&[1], &[0.0]), Activation::Tanh).data(), &[0.0]);
        // mpmath, 40 digits
        let hp = 0.462_117_157_260_009_758_502_318_483_643_672_548_730_3_f64;
        let v = activation(&t(&[1], &[0.5]), Activation::Tanh).data()[0];
        assert!((v - hp).abs() < 1e-12);
    }

    #[test]
    fn ce_symmetric_logits_is_log_c() {
        let logits = t(&[2, 4], &[0.3; 8]);
        for alpha in [0.01, 1.0, 100.0] {
            let l = scaled_softmax_cross_entropy(&logits, &[0, 3], alpha).unwrap();
            for v in l {
                assert!((v - 4f64.ln()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ce_closed_form() {
        // ln(1 + e^-1), mpmath 40 digits
        let hp = 0.313_261_687_518_222_834_048_995_494_967_855_641_915_3_f64;
        let l = scaled_softmax_cross_entropy(&t(&[1, 2], &[1.0, 0.0]), &[0], 1.0).unwrap();
        assert!((l[0] - hp).abs() < 1e-15);
    }

    #[test]
    fn ce_argmax_scale_invariant() {
        let logits = t(&[1, 2], &[2.0, 1.0]);
        for alpha in [0.01, 1.0, 10.0, 100.0] {
            let p = softmax(&logits, alpha).unwrap();
            assert_eq!(argmax(p.row(0)), 0);
        }
    }

    #[test]
    fn ce_errors() {
        let logits = t(&[1, 2], &[1.0, 0.0]);
        assert!(matches!(
            scaled_softmax_cross_entropy(&logits, &[0], 0.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            scaled_softmax_cross_entropy(&logits, &[0], -1.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            scaled_softmax_cross_entropy(&logits, &[2], 1.0),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn ce_no_overflow_at_large_alpha() {
        let logits = t(&[1, 3], &[50.0, -20.0, 10.0]);
        let l = scaled_softmax_cross_entropy(&logits, &[1], 100.0).unwrap();
        assert!(l[0].is_finite());
        assert!((l[0] - 7000.0).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_lowest_index() {
        assert_eq!(argmax(&[1.0, 1.0]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn backward_dead_relu_unit() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[-0.5, 0.0, 2.0]));
        let a = tape.activation(x, Activation::Relu);
        let s = tape.sum(a);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let a = tape.activation(x, Activation::Tanh);
        assert!(matches!(tape.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.constant(t(&[1, 2], &[1.0, 2.0]));
        let w = tape.leaf(t(&[2, 1], &[0.5, -0.5]));
        let b = tape.leaf(t(&[1], &[0.1]));
        let o = tape.linear(x, w, b).unwrap();
        let s = tape.sum(o);
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(w).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(g.wrt(b).unwrap().data(), &[1.0]);
    }

    #[test]
    fn weighted_mean_gradient_scales_linearly() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3], &[1.0, 2.0, 3.0]));
        let m = tape.weighted_mean(x, &[0.5, 1.0, 1.5]).unwrap();
        assert!((tape.value(m).data()[0] - (0.5 + 2.0 + 4.5) / 3.0).abs() < 1e-15);
        let g = tape.backward(m).unwrap();
        assert_eq!(g.wrt(x).unwrap().data(), &[0.5 / 3.0, 1.0 / 3.0, 1.5 / 3.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let y = tape.leaf(t(&[1], &[5.0]));
        let s = tape.sum(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(y).unwrap().data(), &[0.0]);
    }
}
