use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use super::tensor::{Real, Tensor};
use super::KernelError;

/// Denominator offset of the cosine similarity. Zero vectors get similarity 0.
pub const COSINE_EPS: f64 = 1e-8;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable operations the tape knows how to record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Primitive {
    MatMul,
    Transpose,
    Relu,
    Sigmoid,
    RowSoftmax,
    Cosine,
    MaskedMeanRows,
    FrobeniusSq,
    RowRange,
    Concat,
    WeightedSum,
    HardShrink,
    Entropy,
    Add,
    Scale,
    MaskRows,
}

impl Primitive {
    pub const ALL: [Primitive; 16] = [
        Primitive::MatMul,
        Primitive::Transpose,
        Primitive::Relu,
        Primitive::Sigmoid,
        Primitive::RowSoftmax,
        Primitive::Cosine,
        Primitive::MaskedMeanRows,
        Primitive::FrobeniusSq,
        Primitive::RowRange,
        Primitive::Concat,
        Primitive::WeightedSum,
        Primitive::HardShrink,
        Primitive::Entropy,
        Primitive::Add,
        Primitive::Scale,
        Primitive::MaskRows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Transpose => "transpose",
            Primitive::Relu => "relu",
            Primitive::Sigmoid => "sigmoid",
            Primitive::RowSoftmax => "row_softmax",
            Primitive::Cosine => "cosine",
            Primitive::MaskedMeanRows => "masked_mean_rows",
            Primitive::FrobeniusSq => "frobenius_sq",
            Primitive::RowRange => "row_range",
            Primitive::Concat => "concat",
            Primitive::WeightedSum => "weighted_sum",
            Primitive::HardShrink => "hard_shrink",
            Primitive::Entropy => "entropy",
            Primitive::Add => "add",
            Primitive::Scale => "scale",
            Primitive::MaskRows => "mask_rows",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| KernelError::UnknownPrimitive(s.to_string()))
    }
}

enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Transpose(usize),
    Relu(usize),
    Sigmoid(usize),
    RowSoftmax(usize),
    Cosine {
        u: usize,
        v: usize,
        dot: T,
        nu: T,
        nv: T,
    },
    MaskedMeanRows {
        x: usize,
        mask: Vec<bool>,
        count: usize,
    },
    FrobeniusSq {
        a: usize,
        b: usize,
        mask: Option<Tensor<T>>,
    },
    RowRange {
        x: usize,
        start: usize,
    },
    Concat(Vec<usize>),
    WeightedSum {
        weights: usize,
        blocks: Vec<usize>,
    },
    HardShrink {
        x: usize,
        keep: Vec<bool>,
        total: T,
    },
    Entropy(usize),
    Add(usize, usize),
    Scale(usize, T),
    MaskRows {
        x: usize,
        mask: Vec<bool>,
    },
}

impl<T> Op<T> {
    fn primitive(&self) -> Option<Primitive> {
        Some(match self {
            Op::Leaf => return None,
            Op::MatMul(..) => Primitive::MatMul,
            Op::Transpose(_) => Primitive::Transpose,
            Op::Relu(_) => Primitive::Relu,
            Op::Sigmoid(_) => Primitive::Sigmoid,
            Op::RowSoftmax(_) => Primitive::RowSoftmax,
            Op::Cosine { .. } => Primitive::Cosine,
            Op::MaskedMeanRows { .. } => Primitive::MaskedMeanRows,
            Op::FrobeniusSq { .. } => Primitive::FrobeniusSq,
            Op::RowRange { .. } => Primitive::RowRange,
            Op::Concat(_) => Primitive::Concat,
            Op::WeightedSum { .. } => Primitive::WeightedSum,
            Op::HardShrink { .. } => Primitive::HardShrink,
            Op::Entropy(_) => Primitive::Entropy,
            Op::Add(..) => Primitive::Add,
            Op::Scale(..) => Primitive::Scale,
            Op::MaskRows { .. } => Primitive::MaskRows,
        })
    }
}

struct Node<'a, T: Real> {
    value: Cow<'a, Tensor<T>>,
    op: Op<T>,
}

/// Records a computation for reverse-mode differentiation.
///
/// Leaves may borrow tensors (`leaf_ref`) so parameters are not copied for
/// every forward pass. Backward accumulates gradients in reverse recording
/// order, which fixes the summation order and keeps runs bit-reproducible.
pub struct Tape<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    fault: Option<Primitive>,
    relu_margin: f64,
    shrink_margin: f64,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            fault: None,
            relu_margin: f64::INFINITY,
            shrink_margin: f64::INFINITY,
        }
    }

    /// Negates every gradient produced by `primitive`'s backward rule.
    /// Only used to verify that the gradient checker catches broken rules.
    pub fn inject_fault(&mut self, primitive: Primitive) {
        self.fault = Some(primitive);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest nonzero |input| seen by any ReLU on this tape. Exact zeros
    /// come from zero rows (padding, empty products) and stay put under
    /// perturbation.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin
    }

    /// Smallest |weight - threshold| seen by any hard shrinkage on this tape.
    pub fn shrink_margin(&self) -> f64 {
        self.shrink_margin
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn leaf_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// The single entry of a 1×1 value.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v).data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a.0, b.0)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a.0))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let margin = x
            .data()
            .iter()
            .filter(|v| **v != T::zero())
            .fold(f64::INFINITY, |m, v| m.min(v.as_f64().abs()));
        let out = x.map(|v| if v > T::zero() { v } else { T::zero() });
        self.relu_margin = self.relu_margin.min(margin);
        self.push(out, Op::Relu(a.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a.0))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let cols = x.cols();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(cols) {
            softmax_in_place(row);
        }
        self.push(out, Op::RowSoftmax(a.0))
    }

    /// Cosine similarity of two equally sized tensors, read as flat vectors.
    /// Result is 1×1.
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var, KernelError> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.len() != tv.len() {
            return Err(KernelError::ShapeMismatch {
                op: "cosine",
                left: tu.shape().to_vec(),
                right: tv.shape().to_vec(),
            });
        }
        let dot: T = tu.data().iter().zip(tv.data()).map(|(&a, &b)| a * b).sum();
        let nu = tu.data().iter().map(|&a| a * a).sum::<T>().sqrt();
        let nv = tv.data().iter().map(|&b| b * b).sum::<T>().sqrt();
        let sim = dot / (nu * nv + T::of_f64(COSINE_EPS));
        Ok(self.push(
            Tensor::scalar(sim),
            Op::Cosine {
                u: u.0,
                v: v.0,
                dot,
                nu,
                nv,
            },
        ))
    }

    /// Mean of the rows selected by `mask`, as a 1×cols tensor.
    pub fn masked_mean_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var, KernelError> {
        let t = self.value(x);
        let (rows, cols) = (t.rows(), t.cols());
        if mask.len() != rows {
            return Err(KernelError::ShapeMismatch {
                op: "masked_mean_rows",
                left: vec![rows, cols],
                right: vec![mask.len()],
            });
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(KernelError::EmptyMask {
                op: "masked_mean_rows",
            });
        }
        let mut out = vec![T::zero(); cols];
        for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            for (o, &v) in out.iter_mut().zip(t.row(r)) {
                *o += v;
            }
        }
        let inv = T::one() / T::of_f64(count as f64);
        out.iter_mut().for_each(|o| *o *= inv);
        Ok(self.push(
            Tensor::matrix(1, cols, out)?,
            Op::MaskedMeanRows {
                x: x.0,
                mask: mask.to_vec(),
                count,
            },
        ))
    }

    /// `Σ mask ⊙ (a − b)²` as a 1×1 tensor.
    pub fn frobenius_sq(&mut self, a: Var, b: Var, mask: Option<Tensor<T>>) -> Result<Var, KernelError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(KernelError::ShapeMismatch {
                op: "frobenius_sq",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        if let Some(m) = &mask {
            if m.shape() != ta.shape() {
                return Err(KernelError::ShapeMismatch {
                    op: "frobenius_sq",
                    left: ta.shape().to_vec(),
                    right: m.shape().to_vec(),
                });
            }
        }
        let total: T = match &mask {
            None => ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| (x - y) * (x - y))
                .sum(),
            Some(m) => ta
                .data()
                .iter()
                .zip(tb.data())
                .zip(m.data())
                .map(|((&x, &y), &w)| w * (x - y) * (x - y))
                .sum(),
        };
        Ok(self.push(Tensor::scalar(total), Op::FrobeniusSq { a: a.0, b: b.0, mask }))
    }

    /// Rows `start..start + len` of `x`'s row view, as a len×cols matrix.
    pub fn row_range(&mut self, x: Var, start: usize, len: usize) -> Result<Var, KernelError> {
        let t = self.value(x);
        let cols = t.cols();
        if len == 0 || start + len > t.rows() {
            return Err(KernelError::ShapeMismatch {
                op: "row_range",
                left: t.shape().to_vec(),
                right: vec![start, len],
            });
        }
        let data = t.data()[start * cols..(start + len) * cols].to_vec();
        Ok(self.push(Tensor::matrix(len, cols, data)?, Op::RowRange { x: x.0, start }))
    }

    /// Joins 1×1 values into a 1×k row.
    pub fn concat(&mut self, scalars: &[Var]) -> Result<Var, KernelError> {
        let mut data = Vec::with_capacity(scalars.len());
        for &s in scalars {
            let t = self.value(s);
            if t.len() != 1 {
                return Err(KernelError::NonScalar {
                    shape: t.shape().to_vec(),
                });
            }
            data.push(t.data()[0]);
        }
        let out = Tensor::matrix(1, scalars.len(), data)?;
        Ok(self.push(out, Op::Concat(scalars.iter().map(|v| v.0).collect())))
    }

    /// `Σ_p weights[p] · blocks[p]` for equally shaped blocks.
    pub fn weighted_sum(&mut self, weights: Var, blocks: &[Var]) -> Result<Var, KernelError> {
        let w = self.value(weights);
        if w.len() != blocks.len() || blocks.is_empty() {
            return Err(KernelError::ShapeMismatch {
                op: "weighted_sum",
                left: w.shape().to_vec(),
                right: vec![blocks.len()],
            });
        }
        let shape = self.value(blocks[0]).shape().to_vec();
        let mut out = Tensor::zeros(&shape);
        for (&wp, &b) in w.data().iter().zip(blocks) {
            let tb = self.value(b);
            if tb.shape() != shape.as_slice() {
                return Err(KernelError::ShapeMismatch {
                    op: "weighted_sum",
                    left: shape,
                    right: tb.shape().to_vec(),
                });
            }
            for (o, &v) in out.data_mut().iter_mut().zip(tb.data()) {
                *o += wp * v;
            }
        }
        Ok(self.push(
            out,
            Op::WeightedSum {
                weights: weights.0,
                blocks: blocks.iter().map(|v| v.0).collect(),
            },
        ))
    }

    /// Hard shrinkage of a weight row, see [`shrink_weights`].
    pub fn hard_shrink(&mut self, x: Var, lambda: f64) -> Result<Var, KernelError> {
        let t = self.value(x);
        let shape = t.shape().to_vec();
        let (out, keep, total) = shrink_weights(t.data(), lambda)?;
        let margin = t
            .data()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min((v.as_f64() - lambda).abs()));
        self.shrink_margin = self.shrink_margin.min(margin);
        Ok(self.push(Tensor::new(shape, out)?, Op::HardShrink { x: x.0, keep, total }))
    }

    /// `Σ −w ln w` over the entries, with `0 · ln 0 = 0`. Result is 1×1.
    pub fn entropy(&mut self, x: Var) -> Var {
        let h: T = self
            .value(x)
            .data()
            .iter()
            .filter(|&&w| w > T::zero())
            .map(|&w| -w * w.ln())
            .sum();
        self.push(Tensor::scalar(h), Op::Entropy(x.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, KernelError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(KernelError::ShapeMismatch {
                op: "add",
                left: ta.shape().to_vec(),
                right: tb.shape().to_vec(),
            });
        }
        let mut out = ta.clone();
        out.add_assign(tb);
        Ok(self.push(out, Op::Add(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, factor: T) -> Var {
        let out = self.value(a).map(|v| v * factor);
        self.push(out, Op::Scale(a.0, factor))
    }

    /// Zeroes the rows whose mask entry is false.
    pub fn mask_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var, KernelError> {
        let t = self.value(x);
        if mask.len() != t.rows() {
            return Err(KernelError::ShapeMismatch {
                op: "mask_rows",
                left: t.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let cols = t.cols();
        let mut out = t.clone();
        for (row, &m) in out.data_mut().chunks_mut(cols).zip(mask) {
            if !m {
                row.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        Ok(self.push(
            out,
            Op::MaskRows {
                x: x.0,
                mask: mask.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a 1×1 output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, KernelError> {
        let out_val = self.value(output);
        if out_val.len() != 1 {
            return Err(KernelError::NonScalar {
                shape: out_val.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out_val.shape(), T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let mut contributions = self.backward_rule(node, &g);
            if self.fault.is_some() && self.fault == node.op.primitive() {
                for (_, t) in &mut contributions {
                    t.scale(-T::one());
                }
            }
            for (target, t) in contributions {
                match &mut grads[target] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn backward_rule(&self, node: &Node<'a, T>, g: &Tensor<T>) -> Vec<(usize, Tensor<T>)> {
        let y = node.value.as_ref();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(Var(*a)), self.value(Var(*b)));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                // gA = G · Bᵀ
                let mut ga = Tensor::zeros(ta.shape());
                T::gemm(
                    m,
                    n,
                    k,
                    T::one(),
                    g.data(),
                    n as isize,
                    1,
                    tb.data(),
                    1,
                    n as isize,
                    T::zero(),
                    ga.data_mut(),
                    k as isize,
                    1,
                );
                // gB = Aᵀ · G
                let mut gb = Tensor::zeros(tb.shape());
                T::gemm(
                    k,
                    m,
                    n,
                    T::one(),
                    ta.data(),
                    1,
                    k as isize,
                    g.data(),
                    n as isize,
                    1,
                    T::zero(),
                    gb.data_mut(),
                    n as isize,
                    1,
                );
                vec![(*a, ga), (*b, gb)]
            }
            Op::Transpose(a) => {
                let ga = g
                    .transpose()
                    .reshape(self.value(Var(*a)).shape())
                    .expect("same size");
                vec![(*a, ga)]
            }
            Op::Relu(a) => {
                let x = self.value(Var(*a));
                let mut ga = g.clone();
                for (gv, &xv) in ga.data_mut().iter_mut().zip(x.data()) {
                    if xv <= T::zero() {
                        *gv = T::zero();
                    }
                }
                vec![(*a, ga)]
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                for (gv, &s) in ga.data_mut().iter_mut().zip(y.data()) {
                    *gv *= s * (T::one() - s);
                }
                vec![(*a, ga)]
            }
            Op::RowSoftmax(a) => {
                let cols = y.cols();
                let mut ga = g.clone();
                for (grow, yrow) in ga.data_mut().chunks_mut(cols).zip(y.data().chunks(cols)) {
                    let inner: T = grow.iter().zip(yrow).map(|(&gv, &yv)| gv * yv).sum();
                    for (gv, &yv) in grow.iter_mut().zip(yrow) {
                        *gv = yv * (*gv - inner);
                    }
                }
                vec![(*a, ga)]
            }
            Op::Cosine { u, v, dot, nu, nv } => {
                let (tu, tv) = (self.value(Var(*u)), self.value(Var(*v)));
                let g0 = g.data()[0];
                let den = *nu * *nv + T::of_f64(COSINE_EPS);
                let cos_grad = |own: &Tensor<T>, other: &Tensor<T>, n_own: T, n_other: T| {
                    let mut out = Tensor::zeros(own.shape());
                    let radial = if n_own > T::zero() {
                        *dot * n_other / (n_own * den * den)
                    } else {
                        T::zero()
                    };
                    for ((o, &x), &w) in out.data_mut().iter_mut().zip(own.data()).zip(other.data()) {
                        *o = g0 * (w / den - radial * x);
                    }
                    out
                };
                let gu = cos_grad(tu, tv, *nu, *nv);
                let gv = cos_grad(tv, tu, *nv, *nu);
                vec![(*u, gu), (*v, gv)]
            }
            Op::MaskedMeanRows { x, mask, count } => {
                let tx = self.value(Var(*x));
                let cols = tx.cols();
                let inv = T::one() / T::of_f64(*count as f64);
                let mut gx = Tensor::zeros(tx.shape());
                for (row, &m) in gx.data_mut().chunks_mut(cols).zip(mask) {
                    if m {
                        for (r, &gv) in row.iter_mut().zip(g.data()) {
                            *r = gv * inv;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::FrobeniusSq { a, b, mask } => {
                let (ta, tb) = (self.value(Var(*a)), self.value(Var(*b)));
                let two_g = T::of_f64(2.0) * g.data()[0];
                let mut ga = Tensor::zeros(ta.shape());
                for (i, o) in ga.data_mut().iter_mut().enumerate() {
                    let w = mask.as_ref().map_or(T::one(), |m| m.data()[i]);
                    *o = two_g * w * (ta.data()[i] - tb.data()[i]);
                }
                let gb = ga.map(|v| -v);
                vec![(*a, ga), (*b, gb)]
            }
            Op::RowRange { x, start } => {
                let tx = self.value(Var(*x));
                let cols = tx.cols();
                let mut gx = Tensor::zeros(tx.shape());
                let off = start * cols;
                gx.data_mut()[off..off + g.len()].copy_from_slice(g.data());
                vec![(*x, gx)]
            }
            Op::Concat(parts) => parts
                .iter()
                .zip(g.data())
                .map(|(&p, &gv)| (p, Tensor::full(self.value(Var(p)).shape(), gv)))
                .collect(),
            Op::WeightedSum { weights, blocks } => {
                let tw = self.value(Var(*weights));
                let mut gw = Tensor::zeros(tw.shape());
                let mut out = Vec::with_capacity(blocks.len() + 1);
                for (p, &b) in blocks.iter().enumerate() {
                    let tb = self.value(Var(b));
                    gw.data_mut()[p] = g.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).sum();
                    out.push((b, g.map(|v| v * tw.data()[p])));
                }
                out.push((*weights, gw));
                out
            }
            Op::HardShrink { x, keep, total } => {
                let tx = self.value(Var(*x));
                let mut gx = Tensor::zeros(tx.shape());
                if *total > T::zero() {
                    let inner: T = g.data().iter().zip(y.data()).map(|(&a, &b)| a * b).sum();
                    for (j, o) in gx.data_mut().iter_mut().enumerate() {
                        if keep[j] {
                            *o = (g.data()[j] - inner) / *total;
                        }
                    }
                }
                vec![(*x, gx)]
            }
            Op::Entropy(a) => {
                let x = self.value(Var(*a));
                let g0 = g.data()[0];
                let ga = x.map(|w| {
                    if w > T::zero() {
                        -g0 * (w.ln() + T::one())
                    } else {
                        T::zero()
                    }
                });
                vec![(*a, ga)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Scale(a, factor) => vec![(*a, g.map(|v| v * *factor))],
            Op::MaskRows { x, mask } => {
                let cols = g.cols();
                let mut gx = g.clone();
                for (row, &m) in gx.data_mut().chunks_mut(cols).zip(mask) {
                    if !m {
                        row.iter_mut().for_each(|v| *v = T::zero());
                    }
                }
                vec![(*x, gx)]
            }
        }
    }
}

/// Gradients of a scalar output with respect to every leaf on the tape.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    /// `None` when the output does not depend on `v`.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Logistic sigmoid, evaluated without overflow for large |x|.
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Softmax with max subtraction.
pub fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Hard shrinkage of simplex weights.
///
/// Entries below `lambda` become zero and the survivors are renormalized to
/// sum to one. If nothing survives, the largest entry (lowest index on ties)
/// is kept at one. Returns the shrunk weights, the keep mask and the
/// renormalization total (zero for the fallback, whose gradient is zero).
pub fn shrink_weights<T: Real>(weights: &[T], lambda: f64) -> Result<(Vec<T>, Vec<bool>, T), KernelError> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(KernelError::InvalidShrinkThreshold(lambda));
    }
    let lam = T::of_f64(lambda);
    let keep: Vec<bool> = weights.iter().map(|&w| w >= lam).collect();
    let total: T = weights
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(&w, _)| w)
        .sum();
    if total > T::zero() {
        let out = weights
            .iter()
            .zip(&keep)
            .map(|(&w, &k)| if k { w / total } else { T::zero() })
            .collect();
        Ok((out, keep, total))
    } else {
        let mut best = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > weights[best] {
                best = i;
            }
        }
        let mut out = vec![T::zero(); weights.len()];
        if !out.is_empty() {
            out[best] = T::one();
        }
        Ok((out, vec![false; weights.len()], T::zero()))
    }
}
