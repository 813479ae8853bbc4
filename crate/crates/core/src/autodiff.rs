//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is an append-only expression tape. Every op validates shapes,
//! evaluates its result eagerly and records enough to run a vector-Jacobian
//! product later. `backward` walks the tape in reverse and returns a fresh
//! [`Gradients`] set, so calling it twice yields identical (not accumulated)
//! results. Inputs are never mutated; every op allocates its output.

use crate::error::{Error, Result};
use crate::tensor::{shapes, Tensor};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// m×n plus a 1×n bias row added to every row.
    AddBiasRow(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    Concat { a: NodeId, b: NodeId, axis: usize },
    MeanRows(NodeId),
    MeanAll(NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    OneMinus(NodeId),
    /// Node-specific graph convolution body: given mixed features Z (N×D_in),
    /// node embeddings E (N×K), a weight pool W (K×D_in×D_out) and a bias
    /// pool B (K×D_out), computes Y[n,o] = Σ_i Z[n,i]·Θ[n,i,o] + β[n,o]
    /// with Θ[n] = Σ_k E[n,k]·W[k] and β[n] = E[n]·B.
    NodeMixed { z: NodeId, e: NodeId, w_pool: NodeId, b_pool: NodeId },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of one scalar output with respect to every node that needed one.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn wrt(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for a parameter node, zeros if the output did not depend on it.
    pub fn wrt_or_zeros(&self, id: NodeId, shape: &[usize]) -> Tensor {
        match self.wrt(id) {
            Some(g) => g.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Leaf that participates in differentiation (a parameter).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that is treated as a constant; backward skips it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op, parents: &[NodeId]) -> NodeId {
        let requires = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, requires)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if !av.is_matrix() || !bv.is_matrix() || av.cols() != bv.rows() {
            return Err(Error::dimension("matmul", shapes(av, bv)));
        }
        let value = mm(av, bv);
        Ok(self.push_op(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::dimension("transpose", format!("{:?}", av.shape())));
        }
        let value = av.transposed();
        Ok(self.push_op(value, Op::Transpose(a), &[a]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dimension(name, shapes(av, bv)));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push_op(value, op, &[a, b]))
    }

    /// Adds a 1×n bias row to every row of an m×n tensor — the only
    /// broadcasting the engine permits.
    pub fn add_bias_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if !av.is_matrix() || !bv.is_matrix() || bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(Error::dimension("add_bias_row", shapes(av, bv)));
        }
        let (m, n) = (av.rows(), av.cols());
        let mut out = Tensor::zeros(&[m, n]);
        for r in 0..m {
            for c in 0..n {
                out.data_mut()[r * n + c] = av.at2(r, c) + bv.at2(0, c);
            }
        }
        Ok(self.push_op(out, Op::AddBiasRow(a, bias), &[a, bias]))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.map(a, stable_sigmoid);
        self.push_op(value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.map(a, f64::tanh);
        self.push_op(value, Op::Tanh(a), &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.map(a, |x| if x > 0.0 { x } else { 0.0 });
        self.push_op(value, Op::Relu(a), &[a])
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.map(a, |x| c * x);
        self.push_op(value, Op::Scale(a, c), &[a])
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.map(a, |x| x + c);
        self.push_op(value, Op::AddScalar(a), &[a])
    }

    pub fn one_minus(&mut self, a: NodeId) -> NodeId {
        let value = self.map(a, |x| 1.0 - x);
        self.push_op(value, Op::OneMinus(a), &[a])
    }

    fn map(&self, a: NodeId, f: impl Fn(f64) -> f64) -> Tensor {
        let av = self.value(a);
        let data = av.data().iter().map(|x| f(*x)).collect();
        Tensor::new(av.shape().to_vec(), data).expect("same shape")
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::dimension("softmax_rows", format!("{:?}", av.shape())));
        }
        let value = softmax_rows_value(av);
        Ok(self.push_op(value, Op::SoftmaxRows(a), &[a]))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: usize) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != bv.rank() || axis >= av.rank() {
            return Err(Error::dimension("concat", shapes(av, bv)));
        }
        for d in 0..av.rank() {
            if d != axis && av.shape()[d] != bv.shape()[d] {
                return Err(Error::dimension("concat", shapes(av, bv)));
            }
        }
        let value = match (av.rank(), axis) {
            (1, 0) => {
                let mut data = av.data().to_vec();
                data.extend_from_slice(bv.data());
                Tensor::new(vec![av.shape()[0] + bv.shape()[0]], data)?
            }
            (2, 0) => {
                let mut data = av.data().to_vec();
                data.extend_from_slice(bv.data());
                Tensor::new(vec![av.rows() + bv.rows(), av.cols()], data)?
            }
            (2, 1) => {
                let m = av.rows();
                let (ca, cb) = (av.cols(), bv.cols());
                let mut data = Vec::with_capacity(m * (ca + cb));
                for r in 0..m {
                    data.extend_from_slice(av.row(r));
                    data.extend_from_slice(bv.row(r));
                }
                Tensor::new(vec![m, ca + cb], data)?
            }
            _ => {
                return Err(Error::dimension(
                    "concat",
                    format!("axis {axis} unsupported for rank {}", av.rank()),
                ))
            }
        };
        Ok(self.push_op(value, Op::Concat { a, b, axis }, &[a, b]))
    }

    /// Mean over rows of an m×n tensor, giving 1×n.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if !av.is_matrix() {
            return Err(Error::dimension("mean_rows", format!("{:?}", av.shape())));
        }
        let (m, n) = (av.rows(), av.cols());
        if m == 0 {
            return Err(Error::EmptyInput("mean_rows: zero rows".into()));
        }
        let mut out = Tensor::zeros(&[1, n]);
        for r in 0..m {
            for c in 0..n {
                out.data_mut()[c] += av.at2(r, c);
            }
        }
        for c in 0..n {
            out.data_mut()[c] /= m as f64;
        }
        Ok(self.push_op(out, Op::MeanRows(a), &[a]))
    }

    /// Mean over every element, giving a scalar node.
    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.numel() == 0 {
            return Err(Error::EmptyInput("mean_all: empty tensor".into()));
        }
        let mean = av.data().iter().sum::<f64>() / av.numel() as f64;
        Ok(self.push_op(Tensor::scalar(mean), Op::MeanAll(a), &[a]))
    }

    /// See [`Op::NodeMixed`]. The node-specific half of the adaptive graph
    /// convolution; callers pass Z = support · X.
    pub fn node_mixed(
        &mut self,
        z: NodeId,
        e: NodeId,
        w_pool: NodeId,
        b_pool: NodeId,
    ) -> Result<NodeId> {
        let (zv, ev, wv, bv) = (self.value(z), self.value(e), self.value(w_pool), self.value(b_pool));
        let ok = zv.is_matrix()
            && ev.is_matrix()
            && wv.rank() == 3
            && bv.is_matrix()
            && zv.rows() == ev.rows()
            && ev.cols() == wv.shape()[0]
            && zv.cols() == wv.shape()[1]
            && bv.rows() == wv.shape()[0]
            && bv.cols() == wv.shape()[2];
        if !ok {
            return Err(Error::dimension(
                "node_mixed",
                format!(
                    "z {:?}, e {:?}, w_pool {:?}, b_pool {:?}",
                    zv.shape(),
                    ev.shape(),
                    wv.shape(),
                    bv.shape()
                ),
            ));
        }
        let value = node_mixed_value(zv, ev, wv, bv);
        Ok(self.push_op(value, Op::NodeMixed { z, e, w_pool, b_pool }, &[z, e, w_pool, b_pool]))
    }

    /// Reverse-mode accumulation from a scalar output node.
    pub fn backward(&self, output: NodeId) -> Result<Gradients> {
        if self.value(output).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::new(self.value(output).shape().to_vec(), vec![1.0])?);

        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.apply_vjp(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn apply_vjp(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor| {
            if !self.nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(t) => {
                    for (a, b) in t.data_mut().iter_mut().zip(delta.data()) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, mm_nt(g, self.value(*b)));
                acc(grads, *b, mm_tn(self.value(*a), g));
            }
            Op::Transpose(a) => acc(grads, *a, g.transposed()),
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, negate(g));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, hadamard(g, self.value(*b)));
                acc(grads, *b, hadamard(g, self.value(*a)));
            }
            Op::AddBiasRow(a, bias) => {
                acc(grads, *a, g.clone());
                let n = g.cols();
                let mut db = Tensor::zeros(&[1, n]);
                for r in 0..g.rows() {
                    for c in 0..n {
                        db.data_mut()[c] += g.at2(r, c);
                    }
                }
                acc(grads, *bias, db);
            }
            Op::Sigmoid(a) => {
                let y = &self.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gi, yi)| gi * yi * (1.0 - yi))
                    .collect();
                acc(grads, *a, Tensor::new(y.shape().to_vec(), data).unwrap());
            }
            Op::Tanh(a) => {
                let y = &self.nodes[i].value;
                let data = g
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(gi, yi)| gi * (1.0 - yi * yi))
                    .collect();
                acc(grads, *a, Tensor::new(y.shape().to_vec(), data).unwrap());
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(gi, xi)| if *xi > 0.0 { *gi } else { 0.0 })
                    .collect();
                acc(grads, *a, Tensor::new(x.shape().to_vec(), data).unwrap());
            }
            Op::SoftmaxRows(a) => {
                let y = &self.nodes[i].value;
                let (m, n) = (y.rows(), y.cols());
                let mut dx = Tensor::zeros(&[m, n]);
                for r in 0..m {
                    let dot: f64 = (0..n).map(|c| g.at2(r, c) * y.at2(r, c)).sum();
                    for c in 0..n {
                        dx.data_mut()[r * n + c] = y.at2(r, c) * (g.at2(r, c) - dot);
                    }
                }
                acc(grads, *a, dx);
            }
            Op::Concat { a, b, axis } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (da, db) = split_like(g, av, bv, *axis);
                acc(grads, *a, da);
                acc(grads, *b, db);
            }
            Op::MeanRows(a) => {
                let av = self.value(*a);
                let (m, n) = (av.rows(), av.cols());
                let mut dx = Tensor::zeros(&[m, n]);
                for r in 0..m {
                    for c in 0..n {
                        dx.data_mut()[r * n + c] = g.at2(0, c) / m as f64;
                    }
                }
                acc(grads, *a, dx);
            }
            Op::MeanAll(a) => {
                let av = self.value(*a);
                let scale = g.data()[0] / av.numel() as f64;
                acc(grads, *a, Tensor::filled(av.shape(), scale));
            }
            Op::Scale(a, c) => {
                let data = g.data().iter().map(|x| c * x).collect();
                acc(grads, *a, Tensor::new(g.shape().to_vec(), data).unwrap());
            }
            Op::AddScalar(a) => acc(grads, *a, g.clone()),
            Op::OneMinus(a) => acc(grads, *a, negate(g)),
            Op::NodeMixed { z, e, w_pool, b_pool } => {
                let (zv, ev, wv, bv) =
                    (self.value(*z), self.value(*e), self.value(*w_pool), self.value(*b_pool));
                let (dz, de, dw, db) = node_mixed_backward(g, zv, ev, wv, bv);
                acc(grads, *z, dz);
                acc(grads, *e, de);
                acc(grads, *w_pool, dw);
                acc(grads, *b_pool, db);
            }
        }
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows_value(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for r in 0..m {
        let row = a.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..n {
            let e = (row[c] - max).exp();
            out.data_mut()[r * n + c] = e;
            sum += e;
        }
        for c in 0..n {
            out.data_mut()[r * n + c] /= sum;
        }
    }
    out
}

/// a(m×k) · b(k×n)
fn mm(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for p in 0..k {
            let aip = a.at2(i, p);
            if aip == 0.0 {
                continue;
            }
            let brow = b.row(p);
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
    out
}

/// a(m×k) · bᵀ where b is n×k
fn mm_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let brow = b.row(j);
            let mut s = 0.0;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            out.data_mut()[i * n + j] = s;
        }
    }
    out
}

/// aᵀ · b where a is k×m, b is k×n
fn mm_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (k, m, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for p in 0..k {
        let arow = a.row(p);
        let brow = b.row(p);
        for i in 0..m {
            let api = arow[i];
            if api == 0.0 {
                continue;
            }
            let orow = &mut out.data_mut()[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += api * brow[j];
            }
        }
    }
    out
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn negate(a: &Tensor) -> Tensor {
    let data = a.data().iter().map(|x| -x).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn split_like(g: &Tensor, a: &Tensor, b: &Tensor, axis: usize) -> (Tensor, Tensor) {
    match (g.rank(), axis) {
        (1, 0) => {
            let na = a.shape()[0];
            let da = Tensor::new(vec![na], g.data()[..na].to_vec()).unwrap();
            let db = Tensor::new(vec![b.shape()[0]], g.data()[na..].to_vec()).unwrap();
            (da, db)
        }
        (2, 0) => {
            let na = a.rows() * a.cols();
            let da = Tensor::new(vec![a.rows(), a.cols()], g.data()[..na].to_vec()).unwrap();
            let db = Tensor::new(vec![b.rows(), b.cols()], g.data()[na..].to_vec()).unwrap();
            (da, db)
        }
        (2, 1) => {
            let m = g.rows();
            let (ca, cb) = (a.cols(), b.cols());
            let mut da = Tensor::zeros(&[m, ca]);
            let mut db = Tensor::zeros(&[m, cb]);
            for r in 0..m {
                let row = g.row(r);
                da.data_mut()[r * ca..(r + 1) * ca].copy_from_slice(&row[..ca]);
                db.data_mut()[r * cb..(r + 1) * cb].copy_from_slice(&row[ca..]);
            }
            (da, db)
        }
        _ => unreachable!("validated at construction"),
    }
}

fn node_mixed_value(z: &Tensor, e: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let n = z.rows();
    let (kk, d_in, d_out) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let mut out = Tensor::zeros(&[n, d_out]);
    // Per node: theta = Σ_k E[n,k]·W[k], then Y[n] = Z[n]·theta + E[n]·B.
    let mut theta = vec![0.0; d_in * d_out];
    for node in 0..n {
        theta.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..kk {
            let ek = e.at2(node, k);
            if ek == 0.0 {
                continue;
            }
            let wk = &w.data()[k * d_in * d_out..(k + 1) * d_in * d_out];
            for t in 0..d_in * d_out {
                theta[t] += ek * wk[t];
            }
        }
        let zrow = z.row(node);
        let orow = &mut out.data_mut()[node * d_out..(node + 1) * d_out];
        for i in 0..d_in {
            let zi = zrow[i];
            if zi == 0.0 {
                continue;
            }
            for o in 0..d_out {
                orow[o] += zi * theta[i * d_out + o];
            }
        }
        for k in 0..kk {
            let ek = e.at2(node, k);
            for o in 0..d_out {
                orow[o] += ek * b.at2(k, o);
            }
        }
    }
    out
}

fn node_mixed_backward(
    g: &Tensor,
    z: &Tensor,
    e: &Tensor,
    w: &Tensor,
    b: &Tensor,
) -> (Tensor, Tensor, Tensor, Tensor) {
    let n = z.rows();
    let (kk, d_in, d_out) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let mut dz = Tensor::zeros(&[n, d_in]);
    let mut de = Tensor::zeros(&[n, kk]);
    let mut dw = Tensor::zeros(&[kk, d_in, d_out]);
    let mut db = Tensor::zeros(&[kk, d_out]);

    let mut theta = vec![0.0; d_in * d_out];
    for node in 0..n {
        theta.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..kk {
            let ek = e.at2(node, k);
            if ek == 0.0 {
                continue;
            }
            let wk = &w.data()[k * d_in * d_out..(k + 1) * d_in * d_out];
            for t in 0..d_in * d_out {
                theta[t] += ek * wk[t];
            }
        }
        let grow = g.row(node);
        let zrow = z.row(node);
        // dZ[n,i] = Σ_o g[n,o]·Θ[n,i,o]
        for i in 0..d_in {
            let mut s = 0.0;
            for o in 0..d_out {
                s += grow[o] * theta[i * d_out + o];
            }
            dz.data_mut()[node * d_in + i] = s;
        }
        // dE[n,k] = Σ_o g[n,o]·(Σ_i Z[n,i]·W[k,i,o] + B[k,o])
        for k in 0..kk {
            let wk = &w.data()[k * d_in * d_out..(k + 1) * d_in * d_out];
            let mut s = 0.0;
            for o in 0..d_out {
                let mut zw = 0.0;
                for i in 0..d_in {
                    zw += zrow[i] * wk[i * d_out + o];
                }
                s += grow[o] * (zw + b.at2(k, o));
            }
            de.data_mut()[node * kk + k] = s;
        }
        // dW[k,i,o] += E[n,k]·Z[n,i]·g[n,o]; dB[k,o] += E[n,k]·g[n,o]
        for k in 0..kk {
            let ek = e.at2(node, k);
            if ek == 0.0 {
                continue;
            }
            let dwk = &mut dw.data_mut()[k * d_in * d_out..(k + 1) * d_in * d_out];
            for i in 0..d_in {
                let f = ek * zrow[i];
                if f == 0.0 {
                    continue;
                }
                for o in 0..d_out {
                    dwk[i * d_out + o] += f * grow[o];
                }
            }
            for o in 0..d_out {
                db.data_mut()[k * d_out + o] += ek * grow[o];
            }
        }
    }
    (dz, de, dw, db)
}
