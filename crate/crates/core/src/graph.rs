//! Graph convolutions and the temporal graph GRU.
//!
//! The model path builds its adjacency from learnable node embeddings:
//! support = I_N + softmax_rows(ReLU(E·Eᵀ)), and synthesizes node-specific
//! convolution weights from a shared pool, Θ[n] = Σ_k E[n,k]·W_pool[k].
//! The static Chebyshev-style support and the dot-product similarity
//! adjacency are kept for analysis.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// I_N + D^{-1/2}·A·D^{-1/2} for a symmetric non-negative adjacency.
/// Zero-degree rows contribute only the identity term.
pub fn normalized_support(a: &Tensor) -> Result<Tensor> {
    if !a.is_matrix() || a.rows() != a.cols() {
        return Err(Error::dimension("normalized_support", format!("{:?}", a.shape())));
    }
    let n = a.rows();
    for i in 0..n {
        for j in 0..n {
            let v = a.at2(i, j);
            if v < 0.0 {
                return Err(Error::Contract(format!(
                    "normalized_support: negative entry {v} at ({i},{j})"
                )));
            }
            if (v - a.at2(j, i)).abs() > 1e-9 {
                return Err(Error::Contract(format!(
                    "normalized_support: adjacency not symmetric at ({i},{j})"
                )));
            }
        }
    }
    let degrees: Vec<f64> = (0..n).map(|i| a.row(i).iter().sum()).collect();
    let inv_sqrt: Vec<f64> =
        degrees.iter().map(|d| if *d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut out = Tensor::eye(n);
    for i in 0..n {
        for j in 0..n {
            out.data_mut()[i * n + j] += inv_sqrt[i] * a.at2(i, j) * inv_sqrt[j];
        }
    }
    Ok(out)
}

/// Dot-product similarity X·Xᵀ; analysis only, the model path uses
/// [`adaptive_support`].
pub fn similarity_adjacency(x: &Tensor) -> Result<Tensor> {
    if !x.is_matrix() {
        return Err(Error::dimension("similarity_adjacency", format!("{:?}", x.shape())));
    }
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let xt = g.transpose(xn)?;
    let y = g.matmul(xn, xt)?;
    Ok(g.value(y).clone())
}

/// I_N + softmax_rows(ReLU(E·Eᵀ)) as graph nodes.
pub fn adaptive_support_graph(g: &mut Graph, e: NodeId) -> Result<NodeId> {
    let n = g.value(e).rows();
    let et = g.transpose(e)?;
    let ee = g.matmul(e, et)?;
    let r = g.relu(ee);
    let s = g.softmax_rows(r)?;
    let eye = g.constant(Tensor::eye(n));
    g.add(s, eye)
}

pub fn adaptive_support(e: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let en = g.constant(e.clone());
    let s = adaptive_support_graph(&mut g, en)?;
    Ok(g.value(s).clone())
}

/// Node embedding matrix E plus the weight/bias pools it indexes into.
#[derive(Clone, Debug)]
pub struct AdaptiveGraphConvParams {
    /// N×D_emb learnable node embeddings.
    pub embedding: Tensor,
    /// D_emb×D_in×D_out weight pool.
    pub w_pool: Tensor,
    /// D_emb×D_out bias pool.
    pub b_pool: Tensor,
}

impl AdaptiveGraphConvParams {
    pub fn init(
        nodes: usize,
        d_emb: usize,
        d_in: usize,
        d_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        AdaptiveGraphConvParams {
            embedding: Tensor::uniform(&[nodes, d_emb], -0.1, 0.1, rng),
            w_pool: pool_init(d_emb, d_in, d_out, rng),
            b_pool: Tensor::zeros(&[d_emb, d_out]),
        }
    }
}

/// Per-slice Glorot bound over (D_in, D_out) for a D_emb×D_in×D_out pool.
fn pool_init(d_emb: usize, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (d_in + d_out) as f64).sqrt();
    Tensor::uniform(&[d_emb, d_in, d_out], -bound, bound, rng)
}

/// Node-specific adaptive graph convolution on plain tensors:
/// Y[n] = (S·X)[n]·Θ[n] + β[n] with S the adaptive support.
pub fn adaptive_graph_conv(p: &AdaptiveGraphConvParams, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let e = g.constant(p.embedding.clone());
    let w = g.constant(p.w_pool.clone());
    let b = g.constant(p.b_pool.clone());
    let xn = g.constant(x.clone());
    let s = adaptive_support_graph(&mut g, e)?;
    let z = g.matmul(s, xn)?;
    let y = g.node_mixed(z, e, w, b)?;
    Ok(g.value(y).clone())
}

/// One weight/bias pool pair of the temporal graph cell.
#[derive(Clone, Debug)]
pub struct ConvPool {
    pub w_pool: Tensor,
    pub b_pool: Tensor,
}

impl ConvPool {
    fn init(d_emb: usize, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        ConvPool { w_pool: pool_init(d_emb, d_in, d_out, rng), b_pool: Tensor::zeros(&[d_emb, d_out]) }
    }
}

/// Parameters of the temporal graph GRU: four adaptive conv blocks (update
/// gate and candidate, each over the hidden state and the input) plus the
/// gate and candidate row biases.
///
/// `e_x = None` ties the input embeddings to `e_h`; the candidate blocks
/// reuse the gate embeddings unless separate copies are configured.
#[derive(Clone, Debug)]
pub struct TemporalGraphParams {
    pub e_h: Tensor,
    pub e_x: Option<Tensor>,
    pub e_h_cand: Option<Tensor>,
    pub e_x_cand: Option<Tensor>,
    pub gate_h: ConvPool,
    pub gate_x: ConvPool,
    pub cand_h: ConvPool,
    pub cand_x: ConvPool,
    /// 1×D_H gate bias.
    pub b_gate: Tensor,
    /// 1×D_H candidate bias.
    pub b_cand: Tensor,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TgOptions {
    /// Use one embedding matrix for both the hidden and input convolutions.
    pub tie_embeddings: bool,
    /// Give the candidate blocks their own embedding matrices.
    pub separate_candidate_embeddings: bool,
}

impl TemporalGraphParams {
    pub fn init(
        nodes: usize,
        d_emb: usize,
        d_h: usize,
        d_x: usize,
        opts: TgOptions,
        rng: &mut impl Rng,
    ) -> Self {
        let e_h = Tensor::uniform(&[nodes, d_emb], -0.1, 0.1, rng);
        let e_x =
            if opts.tie_embeddings { None } else { Some(Tensor::uniform(&[nodes, d_emb], -0.1, 0.1, rng)) };
        let (e_h_cand, e_x_cand) = if opts.separate_candidate_embeddings {
            let h = Tensor::uniform(&[nodes, d_emb], -0.1, 0.1, rng);
            let x = if opts.tie_embeddings {
                None
            } else {
                Some(Tensor::uniform(&[nodes, d_emb], -0.1, 0.1, rng))
            };
            (Some(h), x)
        } else {
            (None, None)
        };
        TemporalGraphParams {
            e_h,
            e_x,
            e_h_cand,
            e_x_cand,
            gate_h: ConvPool::init(d_emb, d_h, d_h, rng),
            gate_x: ConvPool::init(d_emb, d_x, d_h, rng),
            cand_h: ConvPool::init(d_emb, d_h, d_h, rng),
            cand_x: ConvPool::init(d_emb, d_x, d_h, rng),
            b_gate: Tensor::zeros(&[1, d_h]),
            b_cand: Tensor::zeros(&[1, d_h]),
        }
    }

    pub fn node_count(&self) -> usize {
        self.e_h.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.b_gate.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.gate_x.w_pool.shape()[1]
    }

    /// Canonical parameter order used for checkpoints and the optimizer.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = vec![&self.e_h];
        v.extend(self.e_x.iter());
        v.extend(self.e_h_cand.iter());
        v.extend(self.e_x_cand.iter());
        v.extend([
            &self.gate_h.w_pool,
            &self.gate_h.b_pool,
            &self.gate_x.w_pool,
            &self.gate_x.b_pool,
            &self.cand_h.w_pool,
            &self.cand_h.b_pool,
            &self.cand_x.w_pool,
            &self.cand_x.b_pool,
            &self.b_gate,
            &self.b_cand,
        ]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = vec![&mut self.e_h];
        v.extend(self.e_x.iter_mut());
        v.extend(self.e_h_cand.iter_mut());
        v.extend(self.e_x_cand.iter_mut());
        v.extend([
            &mut self.gate_h.w_pool,
            &mut self.gate_h.b_pool,
            &mut self.gate_x.w_pool,
            &mut self.gate_x.b_pool,
            &mut self.cand_h.w_pool,
            &mut self.cand_h.b_pool,
            &mut self.cand_x.w_pool,
            &mut self.cand_x.b_pool,
            &mut self.b_gate,
            &mut self.b_cand,
        ]);
        v
    }

    /// One temporal-graph GRU step on plain tensors.
    pub fn step(&self, h_prev: &Tensor, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = bind_temporal_graph(&mut g, self)?;
        let h = g.constant(h_prev.clone());
        let xn = g.constant(x.clone());
        let h_next = tg_gru_step_graph(&mut g, &nodes, h, xn)?;
        Ok(g.value(h_next).clone())
    }

    /// Folds the cell over a window of N×D_X snapshots from H₀ = 0.
    pub fn run(&self, snapshots: &[Tensor]) -> Result<Tensor> {
        if snapshots.is_empty() {
            return Err(Error::EmptyInput("run_temporal_graph: empty window".into()));
        }
        let mut g = Graph::new();
        let nodes = bind_temporal_graph(&mut g, self)?;
        let xs: Vec<NodeId> = snapshots.iter().map(|s| g.constant(s.clone())).collect();
        let h0 = g.constant(Tensor::zeros(&[self.node_count(), self.hidden_dim()]));
        let h = run_temporal_graph_graph(&mut g, &nodes, &xs, h0)?;
        Ok(g.value(h).clone())
    }
}

/// Graph-bound temporal cell. Supports are computed once at bind time and
/// shared by every step; shared embeddings resolve to the same node ids.
pub struct TemporalGraphNodes {
    pub e_h: NodeId,
    pub e_x: NodeId,
    pub e_h_cand: NodeId,
    pub e_x_cand: NodeId,
    pub s_h: NodeId,
    pub s_x: NodeId,
    pub s_h_cand: NodeId,
    pub s_x_cand: NodeId,
    pub gate_h_w: NodeId,
    pub gate_h_b: NodeId,
    pub gate_x_w: NodeId,
    pub gate_x_b: NodeId,
    pub cand_h_w: NodeId,
    pub cand_h_b: NodeId,
    pub cand_x_w: NodeId,
    pub cand_x_b: NodeId,
    pub b_gate: NodeId,
    pub b_cand: NodeId,
}

impl TemporalGraphNodes {
    /// Parameter ids in the same order as [`TemporalGraphParams::tensors`].
    pub fn ids(&self, p: &TemporalGraphParams) -> Vec<NodeId> {
        let mut v = vec![self.e_h];
        if p.e_x.is_some() {
            v.push(self.e_x);
        }
        if p.e_h_cand.is_some() {
            v.push(self.e_h_cand);
        }
        if p.e_x_cand.is_some() {
            v.push(self.e_x_cand);
        }
        v.extend([
            self.gate_h_w,
            self.gate_h_b,
            self.gate_x_w,
            self.gate_x_b,
            self.cand_h_w,
            self.cand_h_b,
            self.cand_x_w,
            self.cand_x_b,
            self.b_gate,
            self.b_cand,
        ]);
        v
    }
}

pub fn bind_temporal_graph(g: &mut Graph, p: &TemporalGraphParams) -> Result<TemporalGraphNodes> {
    let e_h = g.param(p.e_h.clone());
    let e_x = match &p.e_x {
        Some(t) => g.param(t.clone()),
        None => e_h,
    };
    let e_h_cand = match &p.e_h_cand {
        Some(t) => g.param(t.clone()),
        None => e_h,
    };
    let e_x_cand = match &p.e_x_cand {
        Some(t) => g.param(t.clone()),
        None => e_x,
    };
    let s_h = adaptive_support_graph(g, e_h)?;
    let s_x = if e_x == e_h { s_h } else { adaptive_support_graph(g, e_x)? };
    let s_h_cand = if e_h_cand == e_h { s_h } else { adaptive_support_graph(g, e_h_cand)? };
    let s_x_cand = if e_x_cand == e_x {
        s_x
    } else if e_x_cand == e_h_cand {
        s_h_cand
    } else {
        adaptive_support_graph(g, e_x_cand)?
    };
    Ok(TemporalGraphNodes {
        e_h,
        e_x,
        e_h_cand,
        e_x_cand,
        s_h,
        s_x,
        s_h_cand,
        s_x_cand,
        gate_h_w: g.param(p.gate_h.w_pool.clone()),
        gate_h_b: g.param(p.gate_h.b_pool.clone()),
        gate_x_w: g.param(p.gate_x.w_pool.clone()),
        gate_x_b: g.param(p.gate_x.b_pool.clone()),
        cand_h_w: g.param(p.cand_h.w_pool.clone()),
        cand_h_b: g.param(p.cand_h.b_pool.clone()),
        cand_x_w: g.param(p.cand_x.w_pool.clone()),
        cand_x_b: g.param(p.cand_x.b_pool.clone()),
        b_gate: g.param(p.b_gate.clone()),
        b_cand: g.param(p.b_cand.clone()),
    })
}

/// Γ_U = σ(conv(H) + conv(X) + b_U); Γ_F = 1 − Γ_U;
/// H̃ = tanh(conv'(H) + conv'(X) + b_H); H_t = Γ_U⊙H̃ + Γ_F⊙H_prev.
pub fn tg_gru_step_graph(
    g: &mut Graph,
    p: &TemporalGraphNodes,
    h_prev: NodeId,
    x: NodeId,
) -> Result<NodeId> {
    let z_gate_h = g.matmul(p.s_h, h_prev)?;
    let z_gate_x = g.matmul(p.s_x, x)?;
    let gate_h = g.node_mixed(z_gate_h, p.e_h, p.gate_h_w, p.gate_h_b)?;
    let gate_x = g.node_mixed(z_gate_x, p.e_x, p.gate_x_w, p.gate_x_b)?;
    let gate_sum = g.add(gate_h, gate_x)?;
    let gate_pre = g.add_bias_row(gate_sum, p.b_gate)?;
    let gamma_u = g.sigmoid(gate_pre);
    let gamma_f = g.one_minus(gamma_u);

    let z_cand_h = if p.s_h_cand == p.s_h { z_gate_h } else { g.matmul(p.s_h_cand, h_prev)? };
    let z_cand_x = if p.s_x_cand == p.s_x { z_gate_x } else { g.matmul(p.s_x_cand, x)? };
    let cand_h = g.node_mixed(z_cand_h, p.e_h_cand, p.cand_h_w, p.cand_h_b)?;
    let cand_x = g.node_mixed(z_cand_x, p.e_x_cand, p.cand_x_w, p.cand_x_b)?;
    let cand_sum = g.add(cand_h, cand_x)?;
    let cand_pre = g.add_bias_row(cand_sum, p.b_cand)?;
    let h_tilde = g.tanh(cand_pre);

    let new_part = g.mul(gamma_u, h_tilde)?;
    let old_part = g.mul(gamma_f, h_prev)?;
    g.add(new_part, old_part)
}

pub fn run_temporal_graph_graph(
    g: &mut Graph,
    p: &TemporalGraphNodes,
    snapshots: &[NodeId],
    h0: NodeId,
) -> Result<NodeId> {
    if snapshots.is_empty() {
        return Err(Error::EmptyInput("run_temporal_graph: empty window".into()));
    }
    let mut h = h0;
    for &x in snapshots {
        h = tg_gru_step_graph(g, p, h, x)?;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t2(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn normalized_support_zero_graph_is_identity() {
        let a = Tensor::zeros(&[3, 3]);
        assert_eq!(normalized_support(&a).unwrap(), Tensor::eye(3));
    }

    #[test]
    fn normalized_support_two_node_path() {
        // A=[[0,1],[1,0]] has D=I, so I + A = all-ones.
        let a = t2(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let s = normalized_support(&a).unwrap();
        assert!(s.max_abs_diff(&Tensor::filled(&[2, 2], 1.0)) < 1e-12);
    }

    #[test]
    fn normalized_support_self_loops() {
        let s = normalized_support(&Tensor::eye(4)).unwrap();
        let mut expect = Tensor::eye(4);
        expect.data_mut().iter_mut().for_each(|v| *v *= 2.0);
        assert!(s.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn normalized_support_rejects_negative() {
        let a = t2(&[vec![0.0, -1.0], vec![-1.0, 0.0]]);
        assert!(matches!(normalized_support(&a), Err(Error::Contract(_))));
    }

    #[test]
    fn similarity_adjacency_cases() {
        let x = Tensor::eye(2); // orthonormal rows
        assert_eq!(similarity_adjacency(&x).unwrap(), Tensor::eye(2));
        let z = Tensor::zeros(&[3, 2]);
        assert_eq!(similarity_adjacency(&z).unwrap(), Tensor::zeros(&[3, 3]));
        // random case against a direct loop
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng);
        let got = similarity_adjacency(&x).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let expect: f64 = (0..2).map(|k| x.at2(i, k) * x.at2(j, k)).sum();
                assert!((got.at2(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_support_zero_embeddings() {
        // E = 0 → I + (1/N)·ones
        let s = adaptive_support(&Tensor::zeros(&[4, 3])).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.25 } else { 0.25 };
                assert!((s.at2(i, j) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn adaptive_support_single_node() {
        let s = adaptive_support(&t2(&[vec![3.0]])).unwrap();
        assert!((s.at2(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn adaptive_support_identity_embeddings() {
        let s = adaptive_support(&Tensor::eye(2)).unwrap();
        let e = std::f64::consts::E;
        let hi = e / (e + 1.0);
        let lo = 1.0 / (e + 1.0);
        let expect = t2(&[vec![1.0 + hi, lo], vec![lo, 1.0 + hi]]);
        assert!(s.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn adaptive_support_rows_sum_to_one_plus_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let e = Tensor::uniform(&[5, 3], -2.0, 2.0, &mut rng);
        let s = adaptive_support(&e).unwrap();
        for i in 0..5 {
            let mut sum: f64 = s.row(i).iter().sum();
            sum -= 1.0; // remove the identity contribution
            assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..5 {
                let soft = s.at2(i, j) - if i == j { 1.0 } else { 0.0 };
                assert!(soft > 0.0);
            }
        }
    }

    #[test]
    fn adaptive_conv_zero_embedding_zeroes_output() {
        let p = AdaptiveGraphConvParams {
            embedding: Tensor::zeros(&[3, 2]),
            w_pool: Tensor::filled(&[2, 2, 2], 0.7),
            b_pool: Tensor::filled(&[2, 2], -0.3),
        };
        let x = t2(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let y = adaptive_graph_conv(&p, &x).unwrap();
        assert_eq!(y, Tensor::zeros(&[3, 2]));
    }

    #[test]
    fn adaptive_conv_single_node_doubles_input() {
        // N=1, E=[[1]]: support [[2]], Θ = W₀ → Y = 2·X·W₀ + b
        let w0 = t2(&[vec![0.5, -1.0], vec![2.0, 0.25]]);
        let p = AdaptiveGraphConvParams {
            embedding: t2(&[vec![1.0]]),
            w_pool: Tensor::new(vec![1, 2, 2], w0.data().to_vec()).unwrap(),
            b_pool: t2(&[vec![0.1, 0.2]]),
        };
        let x = t2(&[vec![3.0, -2.0]]);
        let y = adaptive_graph_conv(&p, &x).unwrap();
        for o in 0..2 {
            let expect: f64 =
                (0..2).map(|i| 2.0 * x.at2(0, i) * w0.at2(i, o)).sum::<f64>() + p.b_pool.at2(0, o);
            assert!((y.at2(0, o) - expect).abs() < 1e-12);
        }
    }

    /// Independent loop-based evaluation of the node-specific convolution.
    fn conv_oracle(p: &AdaptiveGraphConvParams, x: &Tensor) -> Tensor {
        let n = x.rows();
        let d_emb = p.embedding.cols();
        let d_in = p.w_pool.shape()[1];
        let d_out = p.w_pool.shape()[2];
        // support
        let mut scores = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut dot = 0.0;
                for k in 0..d_emb {
                    dot += p.embedding.at2(i, k) * p.embedding.at2(j, k);
                }
                scores[i][j] = dot.max(0.0);
            }
        }
        let mut support = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mx = scores[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores[i].iter().map(|v| (v - mx).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for j in 0..n {
                support[i][j] = exps[j] / sum + if i == j { 1.0 } else { 0.0 };
            }
        }
        let mut out = Tensor::zeros(&[n, d_out]);
        for node in 0..n {
            for o in 0..d_out {
                let mut acc = 0.0;
                for i in 0..d_in {
                    let mut z = 0.0;
                    for j in 0..n {
                        z += support[node][j] * x.at2(j, i);
                    }
                    let mut theta = 0.0;
                    for k in 0..d_emb {
                        theta += p.embedding.at2(node, k) * p.w_pool.at3(k, i, o);
                    }
                    acc += z * theta;
                }
                for k in 0..d_emb {
                    acc += p.embedding.at2(node, k) * p.b_pool.at2(k, o);
                }
                out.data_mut()[node * d_out + o] = acc;
            }
        }
        out
    }

    #[test]
    fn adaptive_conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let p = AdaptiveGraphConvParams {
                embedding: Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng),
                w_pool: Tensor::uniform(&[2, 1, 1], -1.0, 1.0, &mut rng),
                b_pool: Tensor::uniform(&[2, 1], -1.0, 1.0, &mut rng),
            };
            let x = Tensor::uniform(&[2, 1], -1.0, 1.0, &mut rng);
            let got = adaptive_graph_conv(&p, &x).unwrap();
            let expect = conv_oracle(&p, &x);
            assert!(got.max_abs_diff(&expect) < 1e-12);
        }
    }

    #[test]
    fn adaptive_conv_homogeneous_part_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AdaptiveGraphConvParams {
            embedding: Tensor::uniform(&[3, 2], -0.5, 0.5, &mut rng),
            w_pool: Tensor::uniform(&[2, 2, 2], -0.5, 0.5, &mut rng),
            b_pool: Tensor::uniform(&[2, 2], -0.5, 0.5, &mut rng),
        };
        let x1 = Tensor::uniform(&[3, 2], -1.0, 1.0, &mut rng);
        let x2 = Tensor::uniform(&[3, 2], -1.0, 1.0, &mut rng);
        let zero = Tensor::zeros(&[3, 2]);
        let f0 = adaptive_graph_conv(&p, &zero).unwrap();
        let lin = |y: &Tensor| {
            let mut t = y.clone();
            for (a, b) in t.data_mut().iter_mut().zip(f0.data()) {
                *a -= b;
            }
            t
        };
        let (a, b) = (0.7, -1.3);
        let mut combo = Tensor::zeros(&[3, 2]);
        for i in 0..combo.numel() {
            combo.data_mut()[i] = a * x1.data()[i] + b * x2.data()[i];
        }
        let left = lin(&adaptive_graph_conv(&p, &combo).unwrap());
        let l1 = lin(&adaptive_graph_conv(&p, &x1).unwrap());
        let l2 = lin(&adaptive_graph_conv(&p, &x2).unwrap());
        for i in 0..left.numel() {
            let expect = a * l1.data()[i] + b * l2.data()[i];
            assert!((left.data()[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn tg_step_zero_params_halves_hidden() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = TemporalGraphParams::init(3, 2, 2, 2, TgOptions::default(), &mut rng);
        for t in p.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let h = t2(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![4.0, -4.0]]);
        let x = Tensor::filled(&[3, 2], 9.0);
        let next = p.step(&h, &x).unwrap();
        for i in 0..next.numel() {
            assert!((next.data()[i] - 0.5 * h.data()[i]).abs() < 1e-15);
        }
        let zero_h = Tensor::zeros(&[3, 2]);
        let z = p.step(&zero_h, &x).unwrap();
        assert_eq!(z, zero_h);
    }

    /// Independent straight-line evaluation of one temporal-graph GRU step.
    fn tg_oracle(p: &TemporalGraphParams, h: &Tensor, x: &Tensor) -> Tensor {
        let conv = |e: &Tensor, pool: &ConvPool, inp: &Tensor| {
            let q = AdaptiveGraphConvParams {
                embedding: e.clone(),
                w_pool: pool.w_pool.clone(),
                b_pool: pool.b_pool.clone(),
            };
            conv_oracle(&q, inp)
        };
        let e_h = &p.e_h;
        let e_x = p.e_x.as_ref().unwrap_or(e_h);
        let e_hc = p.e_h_cand.as_ref().unwrap_or(e_h);
        let e_xc = p.e_x_cand.as_ref().unwrap_or(e_x);
        let gh = conv(e_h, &p.gate_h, h);
        let gx = conv(e_x, &p.gate_x, x);
        let ch = conv(e_hc, &p.cand_h, h);
        let cx = conv(e_xc, &p.cand_x, x);
        let (n, d) = (h.rows(), h.cols());
        let mut out = Tensor::zeros(&[n, d]);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        for i in 0..n {
            for j in 0..d {
                let gu = sig(gh.at2(i, j) + gx.at2(i, j) + p.b_gate.at2(0, j));
                let cand = (ch.at2(i, j) + cx.at2(i, j) + p.b_cand.at2(0, j)).tanh();
                out.data_mut()[i * d + j] = gu * cand + (1.0 - gu) * h.at2(i, j);
            }
        }
        out
    }

    #[test]
    fn tg_step_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..20 {
            let opts = TgOptions {
                tie_embeddings: trial % 2 == 0,
                separate_candidate_embeddings: trial % 3 == 0,
            };
            let p = TemporalGraphParams::init(2, 2, 1, 1, opts, &mut rng);
            let h = Tensor::uniform(&[2, 1], -1.0, 1.0, &mut rng);
            let x = Tensor::uniform(&[2, 1], -1.0, 1.0, &mut rng);
            let got = p.step(&h, &x).unwrap();
            assert!(got.max_abs_diff(&tg_oracle(&p, &h, &x)) < 1e-12);
        }
    }

    #[test]
    fn run_matches_manual_chaining() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = TemporalGraphParams::init(2, 2, 2, 2, TgOptions::default(), &mut rng);
        let snaps: Vec<Tensor> =
            (0..3).map(|_| Tensor::uniform(&[2, 2], -1.0, 1.0, &mut rng)).collect();
        let folded = p.run(&snaps).unwrap();
        let mut h = Tensor::zeros(&[2, 2]);
        for s in &snaps {
            h = p.step(&h, s).unwrap();
        }
        assert!(folded.max_abs_diff(&h) < 1e-12);

        assert!(matches!(p.run(&[]), Err(Error::EmptyInput(_))));
        let single = p.run(&snaps[..1]).unwrap();
        let manual = p.step(&Tensor::zeros(&[2, 2]), &snaps[0]).unwrap();
        assert!(single.max_abs_diff(&manual) < 1e-12);
    }

    fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| t.row(i).to_vec()).collect();
        Tensor::from_rows(&rows).unwrap()
    }

    #[test]
    fn tg_step_permutation_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = TemporalGraphParams::init(4, 3, 2, 2, TgOptions::default(), &mut rng);
        let h = Tensor::uniform(&[4, 2], -1.0, 1.0, &mut rng);
        let x = Tensor::uniform(&[4, 2], -1.0, 1.0, &mut rng);
        let perm = [2usize, 0, 3, 1];

        let base = p.step(&h, &x).unwrap();
        let mut permuted = p.clone();
        permuted.e_h = permute_rows(&p.e_h, &perm);
        permuted.e_x = p.e_x.as_ref().map(|e| permute_rows(e, &perm));
        let out = permuted.step(&permute_rows(&h, &perm), &permute_rows(&x, &perm)).unwrap();
        assert!(out.max_abs_diff(&permute_rows(&base, &perm)) < 1e-9);
    }

    #[test]
    fn tg_gradients_pass_fd_check() {
        use crate::gradcheck::{finite_difference_grad, max_relative_error, DEFAULT_FD_STEP};
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = TemporalGraphParams::init(3, 2, 2, 2, TgOptions::default(), &mut rng);
        let h0 = Tensor::uniform(&[3, 2], -0.5, 0.5, &mut rng);
        let x = Tensor::uniform(&[3, 2], -0.5, 0.5, &mut rng);

        let mut g = Graph::new();
        let nodes = bind_temporal_graph(&mut g, &p).unwrap();
        let hn = g.constant(h0.clone());
        let xn = g.constant(x.clone());
        let out = tg_gru_step_graph(&mut g, &nodes, hn, xn).unwrap();
        let sq = g.mul(out, out).unwrap();
        let loss = g.mean_all(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        let ids = nodes.ids(&p);

        for (slot, id) in ids.iter().enumerate() {
            let analytic = grads.wrt_or_zeros(*id, g.value(*id).shape());
            let numeric = finite_difference_grad(
                |t| {
                    let mut q = p.clone();
                    *q.tensors_mut()[slot] = t.clone();
                    let y = q.step(&h0, &x)?;
                    Ok(y.data().iter().map(|v| v * v).sum::<f64>() / y.numel() as f64)
                },
                p.tensors()[slot],
                DEFAULT_FD_STEP,
            )
            .unwrap();
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < 1e-5, "param {slot}: relative error {err}");
        }
    }
}
