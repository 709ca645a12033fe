//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] is an append-only list of nodes; node ids are therefore a
//! topological order. The backward pass ([`Tape::grad_nodes`]) does not
//! compute raw numbers: it appends the adjoint computation to the same tape,
//! so the gradients are themselves nodes and can be differentiated again.
//! This is what the gradient penalty needs (a norm of `∇ₓD` differentiated
//! with respect to the discriminator weights).
//!
//! Every vector-Jacobian product is expressed with ops from the same closed
//! set, so second-order passes work for the dense / ReLU / tanh / exp / log
//! ops used by the networks and losses. Masks (ReLU, max-reduce) are treated
//! as constants, which is exact almost everywhere. The ReLU subgradient at
//! `0` is `0`.

use std::rc::Rc;

use super::{DiffError, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `A · B`
    MatMul(NodeId, NodeId),
    /// `A · Bᵀ`
    MatMulNt(NodeId, NodeId),
    /// `Aᵀ · B`
    MatMulTn(NodeId, NodeId),
    /// `A + 1·b` with `b` a `1 x cols` row.
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Offset(NodeId),
    Relu(NodeId),
    Mask(NodeId, Rc<Matrix>),
    Tanh(NodeId),
    Exp(NodeId),
    Log(NodeId),
    /// `1/a`; the safe variant defines `1/0` as `0`.
    Recip(NodeId),
    NormRows(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MaxReduce(NodeId, usize),
    Broadcast(NodeId),
    SumRows(NodeId),
    BroadcastRows(NodeId),
    SumCols(NodeId),
    BroadcastCols(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::MatMulNt(..) => "matmul_nt",
            Op::MatMulTn(..) => "matmul_tn",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Relu(..) => "relu",
            Op::Mask(..) => "mask",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Recip(..) => "recip",
            Op::NormRows(..) => "norm_rows",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::MaxReduce(..) => "max",
            Op::Broadcast(..) => "broadcast",
            Op::SumRows(..) => "sum_rows",
            Op::BroadcastRows(..) => "broadcast_rows",
            Op::SumCols(..) => "sum_cols",
            Op::BroadcastCols(..) => "broadcast_cols",
        }
    }

    fn parents(&self) -> ([Option<NodeId>; 2], usize) {
        use Op::*;
        match *self {
            Leaf => ([None, None], 0),
            MatMul(a, b) | MatMulNt(a, b) | MatMulTn(a, b) | AddRow(a, b) | Add(a, b)
            | Sub(a, b) | Mul(a, b) => ([Some(a), Some(b)], 2),
            Scale(a, _)
            | Offset(a)
            | Relu(a)
            | Mask(a, _)
            | Tanh(a)
            | Exp(a)
            | Log(a)
            | Recip(a)
            | NormRows(a)
            | Sum(a)
            | Mean(a)
            | MaxReduce(a, _)
            | Broadcast(a)
            | SumRows(a)
            | BroadcastRows(a)
            | SumCols(a)
            | BroadcastCols(a) => ([Some(a), None], 1),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
}

/// Append-only computation graph.
#[derive(Clone, Debug, Default)]
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

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    /// A differentiable leaf.
    pub fn var(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn unary(&mut self, op: Op, a: NodeId, value: Matrix) -> NodeId {
        let rg = self.rg(&[a]);
        self.push(op, value, rg)
    }

    fn binary(&mut self, op: Op, a: NodeId, b: NodeId, value: Matrix) -> NodeId {
        let rg = self.rg(&[a, b]);
        self.push(op, value, rg)
    }

    fn same_shape(&self, a: NodeId, b: NodeId, what: &str) {
        assert_eq!(
            self.shape(a),
            self.shape(b),
            "{what}: operand shapes differ"
        );
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a).1, self.shape(b).0, "matmul: inner dimension");
        let v = self.value(a).matmul(self.value(b));
        self.binary(Op::MatMul(a, b), a, b, v)
    }

    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a).1, self.shape(b).1, "matmul_nt: inner dimension");
        let v = self.value(a).matmul_nt(self.value(b));
        self.binary(Op::MatMulNt(a, b), a, b, v)
    }

    pub fn matmul_tn(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.shape(a).0, self.shape(b).0, "matmul_tn: inner dimension");
        let v = self.value(a).matmul_tn(self.value(b));
        self.binary(Op::MatMulTn(a, b), a, b, v)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        assert_eq!(self.shape(row), (1, self.shape(a).1), "add_row: bias shape");
        let v = self.value(a).add_row(self.value(row));
        self.binary(Op::AddRow(a, row), a, row, v)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "add");
        let v = self.value(a).add(self.value(b));
        self.binary(Op::Add(a, b), a, b, v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "sub");
        let v = self.value(a).sub(self.value(b));
        self.binary(Op::Sub(a, b), a, b, v)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.same_shape(a, b, "mul");
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.binary(Op::Mul(a, b), a, b, v)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).scale(c);
        self.unary(Op::Scale(a, c), a, v)
    }

    pub fn offset(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.unary(Op::Offset(a), a, v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(Op::Relu(a), a, v)
    }

    /// Elementwise product with a constant mask.
    pub fn mask(&mut self, a: NodeId, mask: Rc<Matrix>) -> NodeId {
        assert_eq!(self.shape(a), mask.shape(), "mask: shape");
        let v = self.value(a).zip_map(&mask, |x, m| x * m);
        self.unary(Op::Mask(a, mask), a, v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.unary(Op::Tanh(a), a, v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.unary(Op::Exp(a), a, v)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.unary(Op::Log(a), a, v)
    }

    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / x);
        self.unary(Op::Recip(a), a, v)
    }

    fn recip_safe(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x == 0.0 { 0.0 } else { 1.0 / x });
        self.unary(Op::Recip(a), a, v)
    }

    /// Euclidean norm of each row, as an `n x 1` column. The derivative at a
    /// zero row is taken to be zero.
    pub fn norm_rows(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .zip_map(self.value(a), |x, y| x * y)
            .sum_cols()
            .map(f64::sqrt);
        self.unary(Op::NormRows(a), a, v)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::scalar(self.value(a).sum());
        self.unary(Op::Sum(a), a, v)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let v = Matrix::scalar(m.sum() * (1.0 / m.len() as f64));
        self.unary(Op::Mean(a), a, v)
    }

    /// Maximum entry; the gradient flows to the first maximiser.
    pub fn max_reduce(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let (idx, max) = m
            .as_slice()
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, x)| if x > acc.1 { (i, x) } else { acc });
        self.unary(Op::MaxReduce(a, idx), a, Matrix::scalar(max))
    }

    /// Expands a `1 x 1` node to `rows x cols`.
    pub fn broadcast(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        assert_eq!(self.shape(a), (1, 1), "broadcast: expects a scalar");
        let v = Matrix::filled(rows, cols, self.value(a).item());
        self.unary(Op::Broadcast(a), a, v)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_rows();
        self.unary(Op::SumRows(a), a, v)
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> NodeId {
        assert_eq!(self.shape(a).0, 1, "broadcast_rows: expects a row");
        let v = self.value(a).broadcast_rows(rows);
        self.unary(Op::BroadcastRows(a), a, v)
    }

    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sum_cols();
        self.unary(Op::SumCols(a), a, v)
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> NodeId {
        assert_eq!(self.shape(a).1, 1, "broadcast_cols: expects a column");
        let v = self.value(a).broadcast_cols(cols);
        self.unary(Op::BroadcastCols(a), a, v)
    }

    /// `a - s` for a scalar node `s`.
    pub fn sub_scalar(&mut self, a: NodeId, s: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let b = self.broadcast(s, r, c);
        self.sub(a, b)
    }

    /// Records the vector-Jacobian product of `root` against `seed` and
    /// returns one adjoint node per entry of `wrt`.
    ///
    /// Targets that `root` does not depend on get a constant zero node.
    pub fn grad_nodes(
        &mut self,
        root: NodeId,
        seed: NodeId,
        wrt: &[NodeId],
    ) -> Result<Vec<NodeId>, DiffError> {
        assert_eq!(self.shape(root), self.shape(seed), "grad: seed shape");
        let n = root.0 + 1;

        // Nodes on some path from a target to the root.
        let mut relevant = vec![false; n];
        for id in wrt {
            if id.0 < n {
                relevant[id.0] = true;
            }
        }
        for i in 0..n {
            if !relevant[i] && self.nodes[i].requires_grad {
                let (ps, k) = self.nodes[i].op.parents();
                relevant[i] = ps[..k].iter().flatten().any(|p| relevant[p.0]);
            }
        }

        let mut adj: Vec<Option<NodeId>> = vec![None; n];
        adj[root.0] = Some(seed);
        for i in (0..n).rev() {
            let Some(g) = adj[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let (ps, k) = op.parents();
            let wanted: Vec<bool> = ps[..k]
                .iter()
                .map(|p| p.is_some_and(|p| relevant[p.0]))
                .collect();
            if !wanted.iter().any(|&w| w) {
                continue;
            }
            let contribs = self.vjp(&op, NodeId(i), g, &wanted);
            for (slot, c) in ps[..k].iter().zip(contribs) {
                let (Some(p), Some(c)) = (slot, c) else { continue };
                if !self.value(c).is_finite() {
                    return Err(DiffError::NonFinite {
                        node: i,
                        op: op.name(),
                    });
                }
                adj[p.0] = Some(match adj[p.0] {
                    Some(prev) => self.add(prev, c),
                    None => c,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|id| match adj.get(id.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let (r, c) = self.shape(*id);
                    self.constant(Matrix::zeros(r, c))
                }
            })
            .collect())
    }

    fn vjp(&mut self, op: &Op, y: NodeId, g: NodeId, wanted: &[bool]) -> Vec<Option<NodeId>> {
        let want = |i: usize| wanted.get(i).copied().unwrap_or(false);
        match *op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => vec![
                want(0).then(|| self.matmul_nt(g, b)),
                want(1).then(|| self.matmul_tn(a, g)),
            ],
            Op::MatMulNt(a, b) => vec![
                want(0).then(|| self.matmul(g, b)),
                want(1).then(|| self.matmul_tn(g, a)),
            ],
            Op::MatMulTn(a, b) => vec![
                want(0).then(|| self.matmul_nt(b, g)),
                want(1).then(|| self.matmul(a, g)),
            ],
            Op::AddRow(_, _) => vec![want(0).then_some(g), want(1).then(|| self.sum_rows(g))],
            Op::Add(_, _) => vec![want(0).then_some(g), want(1).then_some(g)],
            Op::Sub(_, _) => vec![want(0).then_some(g), want(1).then(|| self.scale(g, -1.0))],
            Op::Mul(a, b) => vec![
                want(0).then(|| self.mul(g, b)),
                want(1).then(|| self.mul(g, a)),
            ],
            Op::Scale(_, c) => vec![Some(self.scale(g, c))],
            Op::Offset(_) => vec![Some(g)],
            Op::Relu(a) => {
                let mask = Rc::new(self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 }));
                vec![Some(self.mask(g, mask))]
            }
            Op::Mask(_, ref m) => vec![Some(self.mask(g, Rc::clone(m)))],
            Op::Tanh(_) => {
                let y2 = self.mul(y, y);
                let neg = self.scale(y2, -1.0);
                let d = self.offset(neg, 1.0);
                vec![Some(self.mul(g, d))]
            }
            Op::Exp(_) => vec![Some(self.mul(g, y))],
            Op::Log(a) => {
                let r = self.recip(a);
                vec![Some(self.mul(g, r))]
            }
            Op::Recip(_) => {
                let y2 = self.mul(y, y);
                let d = self.scale(y2, -1.0);
                vec![Some(self.mul(g, d))]
            }
            Op::NormRows(a) => {
                let cols = self.shape(a).1;
                let r = self.recip_safe(y);
                let t = self.mul(g, r);
                let tb = self.broadcast_cols(t, cols);
                vec![Some(self.mul(a, tb))]
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(a);
                vec![Some(self.broadcast(g, r, c))]
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(a);
                let b = self.broadcast(g, r, c);
                vec![Some(self.scale(b, 1.0 / (r * c) as f64))]
            }
            Op::MaxReduce(a, idx) => {
                let (r, c) = self.shape(a);
                let mut onehot = Matrix::zeros(r, c);
                onehot.as_mut_slice()[idx] = 1.0;
                let b = self.broadcast(g, r, c);
                vec![Some(self.mask(b, Rc::new(onehot)))]
            }
            Op::Broadcast(_) => vec![Some(self.sum(g))],
            Op::SumRows(a) => {
                let rows = self.shape(a).0;
                vec![Some(self.broadcast_rows(g, rows))]
            }
            Op::BroadcastRows(_) => vec![Some(self.sum_rows(g))],
            Op::SumCols(a) => {
                let cols = self.shape(a).1;
                vec![Some(self.broadcast_cols(g, cols))]
            }
            Op::BroadcastCols(_) => vec![Some(self.sum_cols(g))],
        }
    }

    /// Numeric gradient of a scalar `root` with respect to `wrt`.
    pub fn gradient(&mut self, root: NodeId, wrt: &[NodeId]) -> Result<Vec<Matrix>, DiffError> {
        let shape = self.shape(root);
        if shape != (1, 1) {
            return Err(DiffError::NonScalarRoot { shape });
        }
        if !self.value(root).is_finite() {
            return Err(DiffError::NonFinite {
                node: root.0,
                op: self.nodes[root.0].op.name(),
            });
        }
        let seed = self.constant(Matrix::scalar(1.0));
        let ids = self.grad_nodes(root, seed, wrt)?;
        Ok(ids.into_iter().map(|id| self.value(id).clone()).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> Matrix {
        Matrix::scalar(x)
    }

    #[test]
    fn linear_gradient() {
        let mut t = Tape::new();
        let w = t.var(s(1.5));
        let x = t.constant(s(3.0));
        let y = t.mul(w, x);
        let g = t.gradient(y, &[w]).unwrap();
        assert_eq!(g[0].item(), 3.0);
    }

    #[test]
    fn inactive_relu_has_zero_gradient() {
        let mut t = Tape::new();
        let w = t.var(s(-1.0));
        let x = t.constant(s(3.0));
        let y = t.mul(w, x);
        let r = t.relu(y);
        assert_eq!(t.gradient(r, &[w]).unwrap()[0].item(), 0.0);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let w = t.var(s(0.0));
        let r = t.relu(w);
        assert_eq!(t.gradient(r, &[w]).unwrap()[0].item(), 0.0);
    }

    #[test]
    fn log_mean_exp_gradient_is_softmax() {
        let mut t = Tape::new();
        let v = t.var(Matrix::column_vector(&[0.0, 1.0]));
        let e = t.exp(v);
        let m = t.mean(e);
        let l = t.log(m);
        let g = t.gradient(l, &[v]).unwrap();
        let z = 1.0 + 1f64.exp();
        assert!((g[0].as_slice()[0] - 1.0 / z).abs() < 1e-15);
        assert!((g[0].as_slice()[1] - 1f64.exp() / z).abs() < 1e-15);
        assert!((g[0].as_slice()[0] - 0.2689414213699951).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut t = Tape::new();
        let v = t.var(Matrix::column_vector(&[1.0, 2.0]));
        assert!(matches!(
            t.gradient(v, &[v]),
            Err(DiffError::NonScalarRoot { shape: (2, 1) })
        ));
    }

    #[test]
    fn nan_in_backward_is_reported_with_provenance() {
        let mut t = Tape::new();
        let v = t.var(s(0.0));
        let l = t.log(v);
        let z = t.scale(l, 0.0);
        // value is NaN (-inf * 0), caught at the root
        assert!(t.gradient(z, &[v]).is_err());

        let mut t = Tape::new();
        let v = t.var(s(0.0));
        let l = t.log(v); // -inf
        let e = t.exp(l); // 0, finite
        let err = t.gradient(e, &[v]).unwrap_err();
        assert!(matches!(err, DiffError::NonFinite { op: "log", .. }), "{err:?}");
    }

    #[test]
    fn second_order_through_tanh() {
        // f(x) = tanh(x); f'(x) = 1 - tanh², f''(x) = -2 tanh (1 - tanh²)
        let mut t = Tape::new();
        let x = t.var(s(0.7));
        let y = t.tanh(x);
        let one = t.constant(s(1.0));
        let g = t.grad_nodes(y, one, &[x]).unwrap()[0];
        let h = t.gradient(g, &[x]).unwrap()[0].item();
        let th = 0.7f64.tanh();
        assert!((h + 2.0 * th * (1.0 - th * th)).abs() < 1e-14);
    }

    #[test]
    fn unreached_target_gets_zeros() {
        let mut t = Tape::new();
        let a = t.var(s(1.0));
        let b = t.var(Matrix::zeros(2, 3));
        let y = t.scale(a, 2.0);
        let g = t.gradient(y, &[a, b]).unwrap();
        assert_eq!(g[1], Matrix::zeros(2, 3));
    }

    #[test]
    fn norm_rows_gradient_at_zero_row_is_zero() {
        let mut t = Tape::new();
        let a = t.var(Matrix::zeros(1, 2));
        let n = t.norm_rows(a);
        let sq = t.mul(n, n);
        let l = t.sum(sq);
        let g = t.gradient(l, &[a]).unwrap();
        assert_eq!(g[0], Matrix::zeros(1, 2));
    }
}
