//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Nodes are appended in evaluation order, so a single reverse sweep over
//! the tape visits every node after all of its consumers.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::training::eig_penalty::{eig_penalty, eig_penalty_gradient};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    HCat(Vec<Var>),
    SliceCols(Var, usize),
    Mse(Var, Var),
    EigPenalty(Var),
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node> {
        self.nodes
            .get(v.0)
            .ok_or_else(|| Error::Graph(format!("variable {} is not recorded on this graph", v.0)))
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].tracked)
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf; its gradient is available after [`Graph::backward`].
    pub fn param(&mut self, value: &Matrix) -> Var {
        self.push(value.clone(), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.matmul(&self.node(b)?.value)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), t))
    }

    /// `a · bᵀ`; with `b` a weight matrix `[out×in]` this is the affine map
    /// applied to a batch of rows.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.matmul_t(&self.node(b)?.value)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(value, Op::MatMulT(a, b), t))
    }

    /// Adds the `1×n` row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let av = &self.node(a)?.value;
        let rv = &self.node(row)?.value;
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape(format!(
                "add_row: {:?} + row {:?}",
                av.shape(),
                rv.shape()
            )));
        }
        let mut value = av.clone();
        let r = rv.row(0).to_vec();
        for i in 0..value.rows() {
            for (x, b) in value.row_mut(i).iter_mut().zip(&r) {
                *x += b;
            }
        }
        let t = self.tracked(&[a, row]);
        Ok(self.push(value, Op::AddRow(a, row), t))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.add(&self.node(b)?.value)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(value, Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.node(a)?.value.sub(&self.node(b)?.value)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(value, Op::Sub(a, b), t))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        let value = self.node(a)?.value.scale(k);
        let t = self.tracked(&[a]);
        Ok(self.push(value, Op::Scale(a, k), t))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.node(a)?.value.map(|x| if x > 0.0 { x } else { 0.0 });
        let t = self.tracked(&[a]);
        Ok(self.push(value, Op::Relu(a), t))
    }

    /// Column-wise concatenation `[a | b | ...]`.
    pub fn hcat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        let mats: Vec<&Matrix> = parts
            .iter()
            .map(|&p| self.node(p).map(|n| &n.value))
            .collect::<Result<_>>()?;
        let value = Matrix::hstack(&mats)?;
        let t = self.tracked(parts);
        Ok(self.push(value, Op::HCat(parts.to_vec()), t))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = &self.node(a)?.value;
        if start > end || end > av.cols() {
            return Err(Error::shape(format!(
                "slice_cols {start}..{end} of {:?}",
                av.shape()
            )));
        }
        let value = av.slice_cols(start..end);
        let t = self.tracked(&[a]);
        Ok(self.push(value, Op::SliceCols(a, start), t))
    }

    /// Mean squared difference, a 1×1 node.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = super::mse(&self.node(a)?.value, &self.node(b)?.value)?;
        let t = self.tracked(&[a, b]);
        Ok(self.push(Matrix::filled(1, 1, value), Op::Mse(a, b), t))
    }

    /// `Σ max(0, |λ_i(a)| − 1)` of a square node, as a 1×1 node.
    pub fn eig_penalty(&mut self, a: Var) -> Result<Var> {
        let value = eig_penalty(&self.node(a)?.value)?;
        let t = self.tracked(&[a]);
        Ok(self.push(Matrix::filled(1, 1, value), Op::EigPenalty(a), t))
    }

    /// `Σ w_k · term_k` over same-shaped nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let first = terms
            .first()
            .ok_or_else(|| Error::Graph("weighted_sum of no terms".into()))?;
        let mut value = Matrix::zeros(self.node(first.0)?.value.rows(), self.node(first.0)?.value.cols());
        for &(v, w) in terms {
            value.add_assign(&self.node(v)?.value.scale(w))?;
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let t = self.tracked(&vars);
        Ok(self.push(value, Op::WeightedSum(terms.to_vec()), t))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.node(loss)?;
        if root.value.shape() != (1, 1) {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, got {:?}",
                root.value.shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    self.accumulate(&mut grads, *a, || g.matmul_t(bv))?;
                    self.accumulate(&mut grads, *b, || av.t_matmul(&g))?;
                }
                Op::MatMulT(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    self.accumulate(&mut grads, *a, || g.matmul(bv))?;
                    self.accumulate(&mut grads, *b, || g.t_matmul(av))?;
                }
                Op::AddRow(a, row) => {
                    self.accumulate(&mut grads, *a, || Ok(g.clone()))?;
                    self.accumulate(&mut grads, *row, || {
                        let mut s = Matrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            for (acc, x) in s.row_mut(0).iter_mut().zip(g.row(i)) {
                                *acc += x;
                            }
                        }
                        Ok(s)
                    })?;
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, || Ok(g.clone()))?;
                    self.accumulate(&mut grads, *b, || Ok(g.clone()))?;
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut grads, *a, || Ok(g.clone()))?;
                    self.accumulate(&mut grads, *b, || Ok(g.scale(-1.0)))?;
                }
                Op::Scale(a, k) => {
                    self.accumulate(&mut grads, *a, || Ok(g.scale(*k)))?;
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value;
                    self.accumulate(&mut grads, *a, || {
                        Ok(g.zip_map(av, |gi, x| if x > 0.0 { gi } else { 0.0 }))
                    })?;
                }
                Op::HCat(parts) => {
                    let mut col = 0;
                    for p in parts {
                        let w = self.nodes[p.0].value.cols();
                        let start = col;
                        self.accumulate(&mut grads, *p, || Ok(g.slice_cols(start..start + w)))?;
                        col += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.nodes[a.0].value.shape();
                    self.accumulate(&mut grads, *a, || {
                        let mut full = Matrix::zeros(rows, cols);
                        full.set_block(0, *start, &g);
                        Ok(full)
                    })?;
                }
                Op::Mse(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let n = (av.rows() * av.cols()) as f64;
                    let k = 2.0 * g[(0, 0)] / n;
                    self.accumulate(&mut grads, *a, || Ok(av.zip_map(bv, |x, y| k * (x - y))))?;
                    self.accumulate(&mut grads, *b, || Ok(av.zip_map(bv, |x, y| -k * (x - y))))?;
                }
                Op::EigPenalty(a) => {
                    let av = &self.nodes[a.0].value;
                    let seed = g[(0, 0)];
                    self.accumulate(&mut grads, *a, || {
                        Ok(eig_penalty_gradient(av)?.scale(seed))
                    })?;
                }
                Op::WeightedSum(terms) => {
                    for &(v, w) in terms {
                        self.accumulate(&mut grads, v, || Ok(g.scale(w)))?;
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(
        &self,
        grads: &mut [Option<Matrix>],
        target: Var,
        contribution: impl FnOnce() -> Result<Matrix>,
    ) -> Result<()> {
        if !self.nodes[target.0].tracked {
            return Ok(());
        }
        let c = contribution()?;
        match &mut grads[target.0] {
            Some(existing) => existing.add_assign(&c)?,
            slot @ None => *slot = Some(c),
        }
        Ok(())
    }
}

/// Gradients of every tracked leaf reached by a backward sweep.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to a parameter leaf. Leaves that do not
    /// influence the loss get a zero gradient of their own shape.
    pub fn wrt(&self, graph: &Graph, v: Var) -> Result<Matrix> {
        let node = graph.node(v)?;
        if !node.tracked || !matches!(node.op, Op::Leaf) {
            return Err(Error::Graph(format!(
                "variable {} is not a trainable leaf",
                v.0
            )));
        }
        Ok(self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols())))
    }

    pub fn collect(&self, graph: &Graph, vars: &[Var]) -> Result<Vec<Matrix>> {
        vars.iter().map(|&v| self.wrt(graph, v)).collect()
    }
}
