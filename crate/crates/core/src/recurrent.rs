//! LSTM and GRU cells, sequence runners, and the dense output head.
//!
//! Cells follow the gate structure used throughout the engine: the GRU's
//! forget gate is the complement of its update gate (Γ_f = 1 − Γ_u) and the
//! candidate state applies no reset gating, so with all-zero parameters one
//! step halves the hidden state.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-vector hidden state; `cell` is present for LSTM only.
#[derive(Clone, Debug)]
pub struct RecurrentState {
    pub h: Tensor,
    pub cell: Option<Tensor>,
}

impl RecurrentState {
    pub fn zero_gru(hidden: usize) -> Self {
        RecurrentState { h: Tensor::zeros(&[1, hidden]), cell: None }
    }

    pub fn zero_lstm(hidden: usize) -> Self {
        RecurrentState { h: Tensor::zeros(&[1, hidden]), cell: Some(Tensor::zeros(&[1, hidden])) }
    }
}

/// LSTM parameters. Hidden-to-hidden weights are H×H, input-to-hidden D×H,
/// biases 1×H; states are row vectors so gates read h·W_h + x·W_x + b.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_hu: Tensor,
    pub w_xu: Tensor,
    pub b_u: Tensor,
    pub w_hf: Tensor,
    pub w_xf: Tensor,
    pub b_f: Tensor,
    pub w_hc: Tensor,
    pub w_xc: Tensor,
    pub b_c: Tensor,
    pub w_ho: Tensor,
    pub w_xo: Tensor,
    pub b_o: Tensor,
}

#[derive(Clone, Debug)]
pub struct GruParams {
    pub w_hu: Tensor,
    pub w_xu: Tensor,
    pub b_u: Tensor,
    pub w_hh: Tensor,
    pub w_xh: Tensor,
    pub b_h: Tensor,
}

impl LstmParams {
    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        LstmParams {
            w_hu: Tensor::glorot(hidden, hidden, rng),
            w_xu: Tensor::glorot(input, hidden, rng),
            b_u: Tensor::zeros(&[1, hidden]),
            w_hf: Tensor::glorot(hidden, hidden, rng),
            w_xf: Tensor::glorot(input, hidden, rng),
            b_f: Tensor::zeros(&[1, hidden]),
            w_hc: Tensor::glorot(hidden, hidden, rng),
            w_xc: Tensor::glorot(input, hidden, rng),
            b_c: Tensor::zeros(&[1, hidden]),
            w_ho: Tensor::glorot(hidden, hidden, rng),
            w_xo: Tensor::glorot(input, hidden, rng),
            b_o: Tensor::zeros(&[1, hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hu.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_xu.rows()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![
            &self.w_hu, &self.w_xu, &self.b_u, &self.w_hf, &self.w_xf, &self.b_f, &self.w_hc,
            &self.w_xc, &self.b_c, &self.w_ho, &self.w_xo, &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_hu, &mut self.w_xu, &mut self.b_u, &mut self.w_hf, &mut self.w_xf,
            &mut self.b_f, &mut self.w_hc, &mut self.w_xc, &mut self.b_c, &mut self.w_ho,
            &mut self.w_xo, &mut self.b_o,
        ]
    }

    /// One cell step on plain tensors.
    pub fn step(&self, state: &RecurrentState, x: &Tensor) -> Result<RecurrentState> {
        let mut g = Graph::new();
        let nodes = bind_lstm(&mut g, self);
        let h = g.constant(state.h.clone());
        let c = g.constant(
            state
                .cell
                .clone()
                .ok_or_else(|| Error::Contract("LSTM step requires a cell state".into()))?,
        );
        let x = g.constant(x.clone());
        let (hn, cn) = lstm_step_graph(&mut g, &nodes, h, c, x)?;
        Ok(RecurrentState { h: g.value(hn).clone(), cell: Some(g.value(cn).clone()) })
    }

    /// Folds the cell over the rows of a d×D sequence from a zero state.
    pub fn run_sequence(&self, xs: &Tensor) -> Result<RecurrentState> {
        run_cell_sequence(xs, RecurrentState::zero_lstm(self.hidden_dim()), |state, x| {
            self.step(state, x)
        })
    }
}

impl GruParams {
    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        GruParams {
            w_hu: Tensor::glorot(hidden, hidden, rng),
            w_xu: Tensor::glorot(input, hidden, rng),
            b_u: Tensor::zeros(&[1, hidden]),
            w_hh: Tensor::glorot(hidden, hidden, rng),
            w_xh: Tensor::glorot(input, hidden, rng),
            b_h: Tensor::zeros(&[1, hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hu.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_xu.rows()
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_hu, &self.w_xu, &self.b_u, &self.w_hh, &self.w_xh, &self.b_h]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            &mut self.w_hu, &mut self.w_xu, &mut self.b_u, &mut self.w_hh, &mut self.w_xh,
            &mut self.b_h,
        ]
    }

    pub fn step(&self, h_prev: &Tensor, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let nodes = bind_gru(&mut g, self);
        let h = g.constant(h_prev.clone());
        let x = g.constant(x.clone());
        let hn = gru_step_graph(&mut g, &nodes, h, x)?;
        Ok(g.value(hn).clone())
    }

    pub fn run_sequence(&self, xs: &Tensor) -> Result<Tensor> {
        let state = run_cell_sequence(xs, RecurrentState::zero_gru(self.hidden_dim()), |s, x| {
            Ok(RecurrentState { h: self.step(&s.h, x)?, cell: None })
        })?;
        Ok(state.h)
    }
}

fn run_cell_sequence(
    xs: &Tensor,
    init: RecurrentState,
    mut step: impl FnMut(&RecurrentState, &Tensor) -> Result<RecurrentState>,
) -> Result<RecurrentState> {
    if !xs.is_matrix() || xs.rows() == 0 {
        return Err(Error::EmptyInput("run_sequence: need at least one time step".into()));
    }
    let mut state = init;
    for t in 0..xs.rows() {
        state = step(&state, &xs.row_tensor(t))?;
    }
    Ok(state)
}

pub struct LstmNodes {
    pub w_hu: NodeId,
    pub w_xu: NodeId,
    pub b_u: NodeId,
    pub w_hf: NodeId,
    pub w_xf: NodeId,
    pub b_f: NodeId,
    pub w_hc: NodeId,
    pub w_xc: NodeId,
    pub b_c: NodeId,
    pub w_ho: NodeId,
    pub w_xo: NodeId,
    pub b_o: NodeId,
}

pub struct GruNodes {
    pub w_hu: NodeId,
    pub w_xu: NodeId,
    pub b_u: NodeId,
    pub w_hh: NodeId,
    pub w_xh: NodeId,
    pub b_h: NodeId,
}

pub fn bind_lstm(g: &mut Graph, p: &LstmParams) -> LstmNodes {
    LstmNodes {
        w_hu: g.param(p.w_hu.clone()),
        w_xu: g.param(p.w_xu.clone()),
        b_u: g.param(p.b_u.clone()),
        w_hf: g.param(p.w_hf.clone()),
        w_xf: g.param(p.w_xf.clone()),
        b_f: g.param(p.b_f.clone()),
        w_hc: g.param(p.w_hc.clone()),
        w_xc: g.param(p.w_xc.clone()),
        b_c: g.param(p.b_c.clone()),
        w_ho: g.param(p.w_ho.clone()),
        w_xo: g.param(p.w_xo.clone()),
        b_o: g.param(p.b_o.clone()),
    }
}

pub fn bind_gru(g: &mut Graph, p: &GruParams) -> GruNodes {
    GruNodes {
        w_hu: g.param(p.w_hu.clone()),
        w_xu: g.param(p.w_xu.clone()),
        b_u: g.param(p.b_u.clone()),
        w_hh: g.param(p.w_hh.clone()),
        w_xh: g.param(p.w_xh.clone()),
        b_h: g.param(p.b_h.clone()),
    }
}

impl LstmNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        vec![
            self.w_hu, self.w_xu, self.b_u, self.w_hf, self.w_xf, self.b_f, self.w_hc, self.w_xc,
            self.b_c, self.w_ho, self.w_xo, self.b_o,
        ]
    }
}

impl GruNodes {
    pub fn ids(&self) -> Vec<NodeId> {
        vec![self.w_hu, self.w_xu, self.b_u, self.w_hh, self.w_xh, self.b_h]
    }
}

/// One gate pre-activation: h·W_h + x·W_x + b.
fn gate_preact(
    g: &mut Graph,
    h: NodeId,
    w_h: NodeId,
    x: NodeId,
    w_x: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let hw = g.matmul(h, w_h)?;
    let xw = g.matmul(x, w_x)?;
    let s = g.add(hw, xw)?;
    g.add_bias_row(s, b)
}

/// Γ_u=σ(·); Γ_f=σ(·); c̃=tanh(·); c_t=Γ_u⊙c̃+Γ_f⊙c_prev; Γ_o=σ(·); h_t=Γ_o⊙tanh(c_t).
pub fn lstm_step_graph(
    g: &mut Graph,
    p: &LstmNodes,
    h_prev: NodeId,
    c_prev: NodeId,
    x: NodeId,
) -> Result<(NodeId, NodeId)> {
    let u = gate_preact(g, h_prev, p.w_hu, x, p.w_xu, p.b_u)?;
    let gamma_u = g.sigmoid(u);
    let f = gate_preact(g, h_prev, p.w_hf, x, p.w_xf, p.b_f)?;
    let gamma_f = g.sigmoid(f);
    let c_pre = gate_preact(g, h_prev, p.w_hc, x, p.w_xc, p.b_c)?;
    let c_tilde = g.tanh(c_pre);
    let new_part = g.mul(gamma_u, c_tilde)?;
    let old_part = g.mul(gamma_f, c_prev)?;
    let c_t = g.add(new_part, old_part)?;
    let o = gate_preact(g, h_prev, p.w_ho, x, p.w_xo, p.b_o)?;
    let gamma_o = g.sigmoid(o);
    let c_act = g.tanh(c_t);
    let h_t = g.mul(gamma_o, c_act)?;
    Ok((h_t, c_t))
}

/// Γ_u=σ(·); Γ_f=1−Γ_u; h̃=tanh(·); h_t=Γ_u⊙h̃+Γ_f⊙h_prev.
pub fn gru_step_graph(g: &mut Graph, p: &GruNodes, h_prev: NodeId, x: NodeId) -> Result<NodeId> {
    let u = gate_preact(g, h_prev, p.w_hu, x, p.w_xu, p.b_u)?;
    let gamma_u = g.sigmoid(u);
    let gamma_f = g.one_minus(gamma_u);
    let pre = gate_preact(g, h_prev, p.w_hh, x, p.w_xh, p.b_h)?;
    let h_tilde = g.tanh(pre);
    let new_part = g.mul(gamma_u, h_tilde)?;
    let old_part = g.mul(gamma_f, h_prev)?;
    g.add(new_part, old_part)
}

/// h·W + b with unconstrained real outputs.
pub fn linear_head_graph(g: &mut Graph, w: NodeId, b: NodeId, h: NodeId) -> Result<NodeId> {
    let y = g.matmul(h, w)?;
    g.add_bias_row(y, b)
}

/// Plain-tensor output head: h (1×H) · W (H×K) + b (1×K).
pub fn linear_head(w: &Tensor, b: &Tensor, h: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let wn = g.constant(w.clone());
    let bn = g.constant(b.clone());
    let hn = g.constant(h.clone());
    let y = linear_head_graph(&mut g, wn, bn, hn)?;
    Ok(g.value(y).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellKind {
    #[serde(rename = "GRU")]
    Gru,
    #[serde(rename = "LSTM")]
    Lstm,
}

/// A recurrent cell plus its parameters, usable as one sequence branch.
#[derive(Clone, Debug)]
pub enum SeqCell {
    Gru(GruParams),
    Lstm(LstmParams),
}

impl SeqCell {
    pub fn init(kind: CellKind, hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        match kind {
            CellKind::Gru => SeqCell::Gru(GruParams::init(hidden, input, rng)),
            CellKind::Lstm => SeqCell::Lstm(LstmParams::init(hidden, input, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            SeqCell::Gru(_) => CellKind::Gru,
            SeqCell::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            SeqCell::Gru(p) => p.hidden_dim(),
            SeqCell::Lstm(p) => p.hidden_dim(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            SeqCell::Gru(p) => p.input_dim(),
            SeqCell::Lstm(p) => p.input_dim(),
        }
    }

    /// Final hidden state after folding the cell over a d×D sequence.
    pub fn run_sequence(&self, xs: &Tensor) -> Result<Tensor> {
        match self {
            SeqCell::Gru(p) => p.run_sequence(xs),
            SeqCell::Lstm(p) => Ok(p.run_sequence(xs)?.h),
        }
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        match self {
            SeqCell::Gru(p) => p.tensors(),
            SeqCell::Lstm(p) => p.tensors(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            SeqCell::Gru(p) => p.tensors_mut(),
            SeqCell::Lstm(p) => p.tensors_mut(),
        }
    }
}

/// Graph-bound counterpart of [`SeqCell`].
pub enum SeqCellNodes {
    Gru(GruNodes),
    Lstm(LstmNodes),
}

impl SeqCellNodes {
    pub fn bind(g: &mut Graph, cell: &SeqCell) -> Self {
        match cell {
            SeqCell::Gru(p) => SeqCellNodes::Gru(bind_gru(g, p)),
            SeqCell::Lstm(p) => SeqCellNodes::Lstm(bind_lstm(g, p)),
        }
    }

    pub fn ids(&self) -> Vec<NodeId> {
        match self {
            SeqCellNodes::Gru(n) => n.ids(),
            SeqCellNodes::Lstm(n) => n.ids(),
        }
    }

    /// Folds the bound cell over per-step input nodes; returns the last hidden.
    pub fn run(&self, g: &mut Graph, hidden: usize, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("run_sequence: need at least one time step".into()));
        }
        match self {
            SeqCellNodes::Gru(nodes) => {
                let mut h = g.constant(Tensor::zeros(&[1, hidden]));
                for &x in xs {
                    h = gru_step_graph(g, nodes, h, x)?;
                }
                Ok(h)
            }
            SeqCellNodes::Lstm(nodes) => {
                let mut h = g.constant(Tensor::zeros(&[1, hidden]));
                let mut c = g.constant(Tensor::zeros(&[1, hidden]));
                for &x in xs {
                    let (hn, cn) = lstm_step_graph(g, nodes, h, c, x)?;
                    h = hn;
                    c = cn;
                }
                Ok(h)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_lstm(h: usize, d: usize) -> LstmParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = LstmParams::init(h, d, &mut rng);
        for t in p.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        p
    }

    fn zero_gru(h: usize, d: usize) -> GruParams {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = GruParams::init(h, d, &mut rng);
        for t in p.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        p
    }

    #[test]
    fn lstm_zero_params_halves_cell() {
        // σ(0)=0.5, tanh(0)=0 → c₁ = 0.5·c₀, h₁ = 0.5·tanh(0.5·c₀)
        let p = zero_lstm(3, 2);
        let c0 = Tensor::row_vec(vec![0.8, -0.2, 1.0]);
        let state = RecurrentState { h: Tensor::zeros(&[1, 3]), cell: Some(c0.clone()) };
        let x = Tensor::row_vec(vec![5.0, -5.0]);
        let next = p.step(&state, &x).unwrap();
        let c1 = next.cell.unwrap();
        for i in 0..3 {
            assert!((c1.data()[i] - 0.5 * c0.data()[i]).abs() < 1e-15);
            let expect_h = 0.5 * (0.5 * c0.data()[i]).tanh();
            assert!((next.h.data()[i] - expect_h).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_zero_memory_zero_hidden() {
        let p = zero_lstm(2, 2);
        let state = RecurrentState::zero_lstm(2);
        let x = Tensor::row_vec(vec![3.0, 4.0]);
        let next = p.step(&state, &x).unwrap();
        assert_eq!(next.h.data(), &[0.0, 0.0]);
    }

    #[test]
    fn gru_zero_params_halves_hidden() {
        let p = zero_gru(3, 2);
        let h0 = Tensor::row_vec(vec![1.0, -4.0, 0.5]);
        let h1 = p.step(&h0, &Tensor::row_vec(vec![9.0, 9.0])).unwrap();
        for i in 0..3 {
            assert!((h1.data()[i] - 0.5 * h0.data()[i]).abs() < 1e-15);
        }
        let h_zero = p.step(&Tensor::zeros(&[1, 3]), &Tensor::row_vec(vec![1.0, 2.0])).unwrap();
        assert_eq!(h_zero.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn gru_zero_params_contraction_over_steps() {
        // ‖h_d‖ = 2^−d ‖h₀‖ exactly when all parameters are zero.
        let p = zero_gru(2, 1);
        let mut h = Tensor::row_vec(vec![8.0, -16.0]);
        let x = Tensor::row_vec(vec![1.0]);
        for _ in 0..4 {
            h = p.step(&h, &x).unwrap();
        }
        assert_eq!(h.data(), &[8.0 / 16.0, -16.0 / 16.0]);
    }

    #[test]
    fn run_sequence_matches_manual_chaining() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = GruParams::init(2, 2, &mut rng);
        let xs = Tensor::from_rows(&[
            vec![0.1, -0.2],
            vec![0.7, 0.3],
            vec![-0.5, 0.9],
        ])
        .unwrap();
        let folded = p.run_sequence(&xs).unwrap();
        let mut h = Tensor::zeros(&[1, 2]);
        for t in 0..3 {
            h = p.step(&h, &xs.row_tensor(t)).unwrap();
        }
        assert!(folded.max_abs_diff(&h) < 1e-15);

        // d=1 equals one step
        let one = Tensor::from_rows(&[vec![0.4, 0.6]]).unwrap();
        let f1 = p.run_sequence(&one).unwrap();
        let s1 = p.step(&Tensor::zeros(&[1, 2]), &one.row_tensor(0)).unwrap();
        assert_eq!(f1, s1);
    }

    #[test]
    fn run_sequence_rejects_empty() {
        let p = zero_gru(2, 2);
        let empty = Tensor::zeros(&[0, 2]);
        assert!(matches!(p.run_sequence(&empty), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn gate_outputs_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::init(3, 3, &mut rng);
        let state = RecurrentState {
            h: Tensor::row_vec(vec![10.0, -10.0, 3.0]),
            cell: Some(Tensor::row_vec(vec![2.0, -2.0, 0.0])),
        };
        let next = p.step(&state, &Tensor::row_vec(vec![100.0, -100.0, 0.0])).unwrap();
        assert!(next.h.all_finite());
        for v in next.h.data() {
            assert!(v.abs() <= 1.0); // |Γ_o·tanh(c)| ≤ 1
        }
    }

    #[test]
    fn linear_head_cases() {
        let h = Tensor::row_vec(vec![1.0, 2.0]);
        let id = Tensor::eye(2);
        let b = Tensor::zeros(&[1, 2]);
        let y = linear_head(&id, &b, &h).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);

        let w0 = Tensor::zeros(&[2, 3]);
        let b0 = Tensor::zeros(&[1, 3]);
        let y0 = linear_head(&w0, &b0, &h).unwrap();
        assert_eq!(y0.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn lstm_oracle_random_instances() {
        // Independent step-by-step evaluation with scalar loops.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let (hd, xd) = (2, 2);
            let p = LstmParams::init(hd, xd, &mut rng);
            let h0 = Tensor::uniform(&[1, hd], -1.0, 1.0, &mut rng);
            let c0 = Tensor::uniform(&[1, hd], -1.0, 1.0, &mut rng);
            let x = Tensor::uniform(&[1, xd], -1.0, 1.0, &mut rng);

            let got = p
                .step(&RecurrentState { h: h0.clone(), cell: Some(c0.clone()) }, &x)
                .unwrap();

            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            let pre = |wh: &Tensor, wx: &Tensor, b: &Tensor, j: usize| {
                let mut s = b.data()[j];
                for i in 0..hd {
                    s += h0.data()[i] * wh.at2(i, j);
                }
                for i in 0..xd {
                    s += x.data()[i] * wx.at2(i, j);
                }
                s
            };
            for j in 0..hd {
                let gu = sig(pre(&p.w_hu, &p.w_xu, &p.b_u, j));
                let gf = sig(pre(&p.w_hf, &p.w_xf, &p.b_f, j));
                let ct = pre(&p.w_hc, &p.w_xc, &p.b_c, j).tanh();
                let c = gu * ct + gf * c0.data()[j];
                let go = sig(pre(&p.w_ho, &p.w_xo, &p.b_o, j));
                let h = go * c.tanh();
                assert!((got.cell.as_ref().unwrap().data()[j] - c).abs() < 1e-12);
                assert!((got.h.data()[j] - h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gru_oracle_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..20 {
            let (hd, xd) = (2, 2);
            let p = GruParams::init(hd, xd, &mut rng);
            let h0 = Tensor::uniform(&[1, hd], -1.0, 1.0, &mut rng);
            let x = Tensor::uniform(&[1, xd], -1.0, 1.0, &mut rng);
            let got = p.step(&h0, &x).unwrap();

            let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
            for j in 0..hd {
                let mut su = p.b_u.data()[j];
                let mut sh = p.b_h.data()[j];
                for i in 0..hd {
                    su += h0.data()[i] * p.w_hu.at2(i, j);
                    sh += h0.data()[i] * p.w_hh.at2(i, j);
                }
                for i in 0..xd {
                    su += x.data()[i] * p.w_xu.at2(i, j);
                    sh += x.data()[i] * p.w_xh.at2(i, j);
                }
                let gu = sig(su);
                let ht = sh.tanh();
                let expect = gu * ht + (1.0 - gu) * h0.data()[j];
                assert!((got.data()[j] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sequence_gradients_pass_fd_check() {
        use crate::gradcheck::{finite_difference_grad, max_relative_error, DEFAULT_FD_STEP};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = GruParams::init(3, 2, &mut rng);
        let xs = Tensor::uniform(&[4, 2], -1.0, 1.0, &mut rng);

        // Analytic gradient w.r.t. w_xh via the tape.
        let mut g = Graph::new();
        let nodes = bind_gru(&mut g, &p);
        let x_ids: Vec<_> = (0..4).map(|t| g.constant(xs.row_tensor(t))).collect();
        let cell = SeqCellNodes::Gru(nodes);
        let h = cell.run(&mut g, 3, &x_ids).unwrap();
        let sq = g.mul(h, h).unwrap();
        let loss = g.mean_all(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        let ids = cell.ids();

        for (slot, id) in ids.iter().enumerate() {
            let analytic = grads.wrt_or_zeros(*id, g.value(*id).shape());
            let numeric = finite_difference_grad(
                |t| {
                    let mut q = p.clone();
                    *q.tensors_mut()[slot] = t.clone();
                    let h = q.run_sequence(&xs)?;
                    Ok(h.data().iter().map(|v| v * v).sum::<f64>() / h.numel() as f64)
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
