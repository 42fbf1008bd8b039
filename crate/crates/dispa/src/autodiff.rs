//! Minimal reverse-mode automatic differentiation over dense row-major
//! matrices, double precision, with exactly the operator set the model
//! needs plus a finite-difference verification harness.
//!
//! A [`Tape`] records operations in topological order; [`Tape::backward`]
//! visits them once in reverse. Shape mismatches and non-finite values are
//! programming errors and panic with context; recoverable error handling
//! belongs to the layers above, which validate their inputs.

use serde::{Deserialize, Serialize};

/// Dense rows x cols matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
        Tensor { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.len()).unwrap_or(0);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Tensor { rows: r, cols: c, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Tensor::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = k * other.cols;
                let trow = i * other.cols;
                for j in 0..other.cols {
                    out.data[trow + j] += a * other.data[orow + j];
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    MulElem(NodeId, NodeId),
    ScalarMul(NodeId, NodeId),
    Transpose(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize, usize),
    MeanRows(NodeId),
    Sum(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    Exp(NodeId),
    Clamp(NodeId, f64, f64),
    Mse(NodeId, NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation; single-writer.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        assert!(value.is_finite(), "leaf tensor contains non-finite values");
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        debug_assert!(value.is_finite(), "op produced non-finite values: {op:?}");
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        id
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "add shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x + y).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "sub shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    /// Broadcast-add a 1 x n row vector to every row of an m x n matrix.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (ta, tr) = (self.value(a), self.value(row));
        assert_eq!(tr.rows, 1, "add_row second arg must be 1 x n");
        assert_eq!(ta.cols, tr.cols, "add_row width mismatch");
        let mut v = ta.clone();
        for r in 0..v.rows {
            for c in 0..v.cols {
                let x = v.get(r, c) + tr.get(0, c);
                v.set(r, c, x);
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(v, Op::AddRow(a, row), rg)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x * factor).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, factor), rg)
    }

    pub fn mul_elem(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols), "mul_elem shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a) || self.rg(b);
        self.push(v, Op::MulElem(a, b), rg)
    }

    /// Multiply a matrix by a 1 x 1 scalar node.
    pub fn scalar_mul(&mut self, scalar: NodeId, a: NodeId) -> NodeId {
        let ts = self.value(scalar);
        assert_eq!((ts.rows, ts.cols), (1, 1), "scalar_mul first arg must be 1 x 1");
        let s = ts.data[0];
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x * s).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a) || self.rg(scalar);
        self.push(v, Op::ScalarMul(scalar, a), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(v, Op::Transpose(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols needs at least one part");
        let rows = self.value(parts[0]).rows;
        let total: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Tensor::zeros(rows, total);
        let mut offset = 0;
        for p in parts {
            let tp = self.value(*p);
            assert_eq!(tp.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..tp.cols {
                    v.set(r, offset + c, tp.get(r, c));
                }
            }
            offset += tp.cols;
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push(v, Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Columns [from, to) of a.
    pub fn slice_cols(&mut self, a: NodeId, from: usize, to: usize) -> NodeId {
        let ta = self.value(a);
        assert!(from < to && to <= ta.cols, "slice_cols out of range");
        let mut v = Tensor::zeros(ta.rows, to - from);
        for r in 0..ta.rows {
            for c in from..to {
                v.set(r, c - from, ta.get(r, c));
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::SliceCols(a, from, to), rg)
    }

    /// Column means: m x n -> 1 x n.
    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        assert!(ta.rows > 0, "mean_rows over zero rows");
        let mut v = Tensor::zeros(1, ta.cols);
        for c in 0..ta.cols {
            let s: f64 = (0..ta.rows).map(|r| ta.get(r, c)).sum();
            v.set(0, c, s / ta.rows as f64);
        }
        let rg = self.rg(a);
        self.push(v, Op::MeanRows(a), rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data.iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.max(0.0)).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a);
        self.push(v, Op::Relu(a), rg)
    }

    /// Row-wise softmax with max-subtraction for stability.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let mut v = Tensor::zeros(ta.rows, ta.cols);
        for r in 0..ta.rows {
            let row = ta.row(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..ta.cols {
                let e = (row[c] - max).exp();
                v.set(r, c, e);
                sum += e;
            }
            for c in 0..ta.cols {
                let e = v.get(r, c) / sum;
                v.set(r, c, e);
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::SoftmaxRows(a), rg)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.exp()).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a);
        self.push(v, Op::Exp(a), rg)
    }

    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        let ta = self.value(a);
        let data = ta.data.iter().map(|x| x.clamp(lo, hi)).collect();
        let v = Tensor::from_vec(ta.rows, ta.cols, data);
        let rg = self.rg(a);
        self.push(v, Op::Clamp(a, lo, hi), rg)
    }

    /// Mean squared error of two n x 1 columns, as a 1 x 1 node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> NodeId {
        let (tp, tt) = (self.value(pred), self.value(target));
        assert_eq!(
            (tp.rows, tp.cols),
            (tt.rows, tt.cols),
            "mse shape mismatch"
        );
        let n = tp.data.len() as f64;
        let s: f64 = tp
            .data
            .iter()
            .zip(&tt.data)
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let rg = self.rg(pred) || self.rg(target);
        self.push(Tensor::scalar(s / n), Op::Mse(pred, target), rg)
    }

    /// Reverse pass from a scalar loss; returns one gradient slot per node.
    /// Leaves never touched by the loss get a zero gradient from
    /// [`Gradients::get`].
    pub fn backward(&self, loss: NodeId) -> Gradients {
        let lt = self.value(loss);
        assert_eq!((lt.rows, lt.cols), (1, 1), "backward needs a scalar loss");

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].clone() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.rg(*a) {
                        let ga = g.matmul(&tb.transpose());
                        accumulate(&mut grads[a.0], ga);
                    }
                    if self.rg(*b) {
                        let gb = ta.transpose().matmul(&g);
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads[b.0], g.clone());
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.rg(*b) {
                        let neg = scale_tensor(&g, -1.0);
                        accumulate(&mut grads[b.0], neg);
                    }
                }
                Op::AddRow(a, row) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], g.clone());
                    }
                    if self.rg(*row) {
                        let mut gr = Tensor::zeros(1, g.cols);
                        for r in 0..g.rows {
                            for c in 0..g.cols {
                                gr.data[c] += g.get(r, c);
                            }
                        }
                        accumulate(&mut grads[row.0], gr);
                    }
                }
                Op::Scale(a, f) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], scale_tensor(&g, *f));
                    }
                }
                Op::MulElem(a, b) => {
                    let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    if self.rg(*a) {
                        let ga = hadamard(&g, tb);
                        accumulate(&mut grads[a.0], ga);
                    }
                    if self.rg(*b) {
                        let gb = hadamard(&g, ta);
                        accumulate(&mut grads[b.0], gb);
                    }
                }
                Op::ScalarMul(s, a) => {
                    let (ts, ta) = (&self.nodes[s.0].value, &self.nodes[a.0].value);
                    if self.rg(*s) {
                        let dot: f64 = g.data.iter().zip(&ta.data).map(|(x, y)| x * y).sum();
                        accumulate(&mut grads[s.0], Tensor::scalar(dot));
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], scale_tensor(&g, ts.data[0]));
                    }
                }
                Op::Transpose(a) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], g.transpose());
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols;
                        if self.rg(*p) {
                            let mut gp = Tensor::zeros(g.rows, w);
                            for r in 0..g.rows {
                                for c in 0..w {
                                    gp.set(r, c, g.get(r, offset + c));
                                }
                            }
                            accumulate(&mut grads[p.0], gp);
                        }
                        offset += w;
                    }
                }
                Op::SliceCols(a, from, _to) => {
                    if self.rg(*a) {
                        let ta = &self.nodes[a.0].value;
                        let mut ga = Tensor::zeros(ta.rows, ta.cols);
                        for r in 0..g.rows {
                            for c in 0..g.cols {
                                ga.set(r, from + c, g.get(r, c));
                            }
                        }
                        accumulate(&mut grads[a.0], ga);
                    }
                }
                Op::MeanRows(a) => {
                    if self.rg(*a) {
                        let ta = &self.nodes[a.0].value;
                        let inv = 1.0 / ta.rows as f64;
                        let mut ga = Tensor::zeros(ta.rows, ta.cols);
                        for r in 0..ta.rows {
                            for c in 0..ta.cols {
                                ga.set(r, c, g.get(0, c) * inv);
                            }
                        }
                        accumulate(&mut grads[a.0], ga);
                    }
                }
                Op::Sum(a) => {
                    if self.rg(*a) {
                        let ta = &self.nodes[a.0].value;
                        let mut ga = Tensor::zeros(ta.rows, ta.cols);
                        ga.data.fill(g.data[0]);
                        accumulate(&mut grads[a.0], ga);
                    }
                }
                Op::Relu(a) => {
                    if self.rg(*a) {
                        let ta = &self.nodes[a.0].value;
                        let data = g
                            .data
                            .iter()
                            .zip(&ta.data)
                            .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                            .collect();
                        accumulate(&mut grads[a.0], Tensor::from_vec(g.rows, g.cols, data));
                    }
                }
                Op::SoftmaxRows(a) => {
                    if self.rg(*a) {
                        let y = &node.value;
                        let mut ga = Tensor::zeros(y.rows, y.cols);
                        for r in 0..y.rows {
                            let dot: f64 = (0..y.cols).map(|c| g.get(r, c) * y.get(r, c)).sum();
                            for c in 0..y.cols {
                                ga.set(r, c, y.get(r, c) * (g.get(r, c) - dot));
                            }
                        }
                        accumulate(&mut grads[a.0], ga);
                    }
                }
                Op::Exp(a) => {
                    if self.rg(*a) {
                        accumulate(&mut grads[a.0], hadamard(&g, &node.value));
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    if self.rg(*a) {
                        let ta = &self.nodes[a.0].value;
                        let data = g
                            .data
                            .iter()
                            .zip(&ta.data)
                            .map(|(gv, x)| if *x > *lo && *x < *hi { *gv } else { 0.0 })
                            .collect();
                        accumulate(&mut grads[a.0], Tensor::from_vec(g.rows, g.cols, data));
                    }
                }
                Op::Mse(pred, target) => {
                    let (tp, tt) = (&self.nodes[pred.0].value, &self.nodes[target.0].value);
                    let n = tp.data.len() as f64;
                    let gs = g.data[0];
                    if self.rg(*pred) {
                        let data = tp
                            .data
                            .iter()
                            .zip(&tt.data)
                            .map(|(p, t)| gs * 2.0 * (p - t) / n)
                            .collect();
                        accumulate(&mut grads[pred.0], Tensor::from_vec(tp.rows, tp.cols, data));
                    }
                    if self.rg(*target) {
                        let data = tp
                            .data
                            .iter()
                            .zip(&tt.data)
                            .map(|(p, t)| -gs * 2.0 * (p - t) / n)
                            .collect();
                        accumulate(&mut grads[target.0], Tensor::from_vec(tp.rows, tp.cols, data));
                    }
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `id`'s tensor; zero if the loss
    /// never touched it.
    pub fn get(&self, tape: &Tape, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => {
                let v = tape.value(id);
                Tensor::zeros(v.rows, v.cols)
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        None => *slot = Some(g),
        Some(existing) => {
            for (e, v) in existing.data.iter_mut().zip(&g.data) {
                *e += v;
            }
        }
    }
}

fn scale_tensor(t: &Tensor, f: f64) -> Tensor {
    Tensor::from_vec(t.rows, t.cols, t.data.iter().map(|x| x * f).collect())
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    )
}

/// Maximum relative error between analytic gradients and central finite
/// differences of `f` at `points`. `f` receives a fresh tape and the leaf
/// ids for each point tensor and must return a scalar loss node.
pub fn grad_check<F>(f: F, points: &[Tensor], eps: f64) -> f64
where
    F: Fn(&mut Tape, &[NodeId]) -> NodeId,
{
    let eval = |tensors: &[Tensor]| -> (f64, Vec<Tensor>) {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), true))
            .collect();
        let loss = f(&mut tape, &ids);
        let value = tape.value(loss).data[0];
        let grads = tape.backward(loss);
        let gs = ids.iter().map(|id| grads.get(&tape, *id)).collect();
        (value, gs)
    };

    let (_, analytic) = eval(points);
    let mut max_rel = 0.0f64;
    for (pi, point) in points.iter().enumerate() {
        for k in 0..point.data.len() {
            let mut plus = points.to_vec();
            plus[pi].data[k] += eps;
            let mut minus = points.to_vec();
            minus[pi].data[k] -= eps;
            let (fp, _) = eval(&plus);
            let (fm, _) = eval(&minus);
            let fd = (fp - fm) / (2.0 * eps);
            let an = analytic[pi].data[k];
            let rel = (an - fd).abs() / f64::max(1.0, an.abs());
            max_rel = max_rel.max(rel);
        }
    }
    max_rel
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randt(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0], vec![0.0, 3f64.ln()]]));
        let y = tape.softmax_rows(x);
        let v = tape.value(y);
        assert!((v.get(0, 0) - 0.5).abs() < 1e-12);
        assert!((v.get(1, 0) - 0.25).abs() < 1e-12);
        assert!((v.get(1, 1) - 0.75).abs() < 1e-12);

        let x2 = tape.constant(Tensor::from_rows(&[vec![100.0, 100.0 + 3f64.ln()]]));
        let y2 = tape.softmax_rows(x2);
        assert!((tape.value(y2).get(0, 1) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn mse_values() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_vec(1, 1, vec![0.0]));
        let t = tape.constant(Tensor::from_vec(1, 1, vec![2.0]));
        let l = tape.mse(p, t);
        assert_eq!(tape.value(l).data[0], 4.0);

        let p = tape.constant(Tensor::from_vec(2, 1, vec![1.0, 2.0]));
        let l = tape.mse(p, p);
        assert_eq!(tape.value(l).data[0], 0.0);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let x = tape.leaf(randt(&mut ChaCha8Rng::seed_from_u64(0), 2, 2), true);
        let l = tape.sum(x);
        let g = tape.backward(l).get(&tape, x);
        assert_eq!(g.data, vec![1.0; 4]);
    }

    #[test]
    fn unused_leaf_gets_zero_grad() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.0), true);
        let unused = tape.leaf(Tensor::scalar(5.0), true);
        let l = tape.sum(x);
        let g = tape.backward(l).get(&tape, unused);
        assert_eq!(g.data, vec![0.0]);
    }

    #[test]
    fn linear_map_grad_check_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = randt(&mut rng, 3, 2);
        let x = randt(&mut rng, 4, 3);
        let err = grad_check(
            |tape, ids| {
                let y = tape.matmul(ids[1], ids[0]);
                tape.sum(y)
            },
            &[w, x],
            1e-5,
        );
        assert!(err < 1e-7, "rel err {err}");
    }

    #[test]
    fn softmax_matmul_composite_grad_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = randt(&mut rng, 3, 4);
        let b = randt(&mut rng, 4, 3);
        let err = grad_check(
            |tape, ids| {
                let m = tape.matmul(ids[0], ids[1]);
                let s = tape.softmax_rows(m);
                let sq = tape.mul_elem(s, s);
                tape.sum(sq)
            },
            &[a, b],
            1e-5,
        );
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn every_op_passes_grad_check_at_seeded_points() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = randt(&mut rng, 3, 3);
            let b = randt(&mut rng, 3, 3);
            let row = randt(&mut rng, 1, 3);
            let target = randt(&mut rng, 1, 1);
            // Nudge values off ReLU/clamp kinks.
            for v in a.data.iter_mut() {
                if v.abs() < 1e-3 {
                    *v += 0.01;
                }
            }
            let err = grad_check(
                |tape, ids| {
                    let (a, b, row) = (ids[0], ids[1], ids[2]);
                    let t = tape.constant(target.clone());
                    let mm = tape.matmul(a, b);
                    let ar = tape.add_row(mm, row);
                    let sc = tape.scale(ar, 0.7);
                    let tr = tape.transpose(sc);
                    let tr2 = tape.transpose(tr);
                    let rl = tape.relu(tr2);
                    let sm = tape.softmax_rows(rl);
                    let he = tape.mul_elem(sm, a);
                    let ex = tape.exp(he);
                    let cl = tape.clamp(ex, -10.0, 10.0);
                    let cc = tape.concat_cols(&[he, cl]);
                    let sl = tape.slice_cols(cc, 1, 5);
                    let mr = tape.mean_rows(sl);
                    let pred = tape.slice_cols(mr, 0, 1);
                    let l2 = tape.mse(pred, t);
                    let s1 = tape.sum(mr);
                    let s1m = tape.scale(s1, 0.1);
                    let both = tape.concat_cols(&[s1m, l2]);
                    let tot = tape.sum(both);
                    let s = tape.scalar_mul(l2, tot);
                    tape.sum(s)
                },
                &[a.clone(), b.clone(), row.clone()],
                1e-5,
            );
            assert!(err < 1e-4, "seed {seed}: rel err {err}");
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(
                Tensor::from_vec(2, 2, vec![0.3, -0.7, 1.1, 0.2]),
                true,
            );
            let b = tape.leaf(Tensor::from_vec(2, 2, vec![0.9, 0.1, -0.4, 0.5]), true);
            let m = tape.matmul(a, b);
            let s = tape.softmax_rows(m);
            let l = tape.sum(s);
            let g = tape.backward(l);
            (g.get(&tape, a).data, g.get(&tape, b).data)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pred = randt(&mut rng, 5, 1);
        let target = randt(&mut rng, 5, 1);
        let err = grad_check(
            |tape, ids| {
                let t = tape.constant(target.clone());
                tape.mse(ids[0], t)
            },
            &[pred],
            1e-5,
        );
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    #[should_panic(expected = "scalar loss")]
    fn non_scalar_loss_panics() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2), true);
        let y = tape.relu(x);
        tape.backward(y);
    }
}
