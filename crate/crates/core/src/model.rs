//! The multi-modal forecasting model family and its checkpoint format.
//!
//! A model has up to two branches. The sequence branch folds a recurrent
//! cell over d days of per-day feature rows; the graph branch folds the
//! temporal graph GRU over d node-feature snapshots and mean-pools the
//! per-node hidden states. Branch outputs are concatenated and mapped by a
//! linear head to the K per-day targets at horizon T.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::graph::{bind_temporal_graph, run_temporal_graph_graph, TemporalGraphNodes, TemporalGraphParams, TgOptions};
use crate::recurrent::{linear_head_graph, CellKind, SeqCell, SeqCellNodes};
use crate::tensor::Tensor;
use crate::training::WindowSample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// Input modalities used by a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Statistics + regulations through the sequence branch only.
    #[serde(rename = "SR")]
    Sr,
    /// Statistics sequence branch + node-embedding graph branch.
    #[serde(rename = "SE")]
    Se,
    /// All three modalities.
    #[serde(rename = "SRE")]
    Sre,
    /// Statistics-only LSTM, the plain deep-learning baseline.
    #[serde(rename = "LSTM_ONLY")]
    LstmOnly,
}

impl Variant {
    pub fn uses_regulations(&self) -> bool {
        matches!(self, Variant::Sr | Variant::Sre)
    }

    pub fn uses_graph(&self) -> bool {
        matches!(self, Variant::Se | Variant::Sre)
    }
}

fn default_node_embed_dim() -> usize {
    8
}

fn default_window() -> usize {
    7
}

fn default_output_dim() -> usize {
    2
}

fn default_cell() -> CellKind {
    CellKind::Gru
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Statistics features per day (K_stat); 0 lets the CLI take it from
    /// the dataset.
    #[serde(default)]
    pub stat_features: usize,
    /// Regulation features per day (K_reg).
    #[serde(default)]
    pub reg_features: usize,
    /// Graph nodes (N).
    #[serde(default)]
    pub node_count: usize,
    /// Node feature width of one snapshot (D_X).
    #[serde(default)]
    pub embed_dim: usize,
    /// Hidden width of the graph branch (D_H).
    #[serde(default)]
    pub graph_hidden: usize,
    /// Hidden width of the sequence branch (H).
    #[serde(default)]
    pub seq_hidden: usize,
    /// Width of the learnable node embeddings (D_emb).
    #[serde(default = "default_node_embed_dim")]
    pub node_embed_dim: usize,
    /// Days ahead to predict (T ≥ 1).
    #[serde(default)]
    pub horizon: usize,
    /// Input window length in days (d).
    #[serde(default = "default_window")]
    pub window: usize,
    /// Targets per day (K).
    #[serde(default = "default_output_dim")]
    pub output_dim: usize,
    #[serde(default = "default_cell")]
    pub cell: CellKind,
    /// Apply softmax to the head output instead of leaving it linear.
    #[serde(default)]
    pub softmax_head: bool,
    /// Share one embedding matrix between the H- and X-side convolutions.
    #[serde(default)]
    pub tie_embeddings: bool,
    /// Give candidate conv blocks their own embeddings.
    #[serde(default)]
    pub separate_candidate_embeddings: bool,
    /// Drop the sequence branch and predict from the graph branch alone.
    #[serde(default)]
    pub graph_only: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.stat_features == 0 {
            return fail("stat_features must be >= 1".into());
        }
        if self.horizon == 0 {
            return fail("horizon must be >= 1".into());
        }
        if self.window == 0 {
            return fail("window must be >= 1".into());
        }
        if self.output_dim == 0 {
            return fail("output_dim must be >= 1".into());
        }
        if self.variant.uses_graph() {
            if self.node_count == 0 || self.embed_dim == 0 {
                return fail(format!(
                    "variant {:?} needs node_count >= 1 and embed_dim >= 1",
                    self.variant
                ));
            }
            if self.graph_hidden == 0 || self.node_embed_dim == 0 {
                return fail("graph_hidden and node_embed_dim must be >= 1".into());
            }
        }
        if self.variant.uses_regulations() && self.reg_features == 0 {
            return fail(format!("variant {:?} needs reg_features >= 1", self.variant));
        }
        if self.graph_only && !self.variant.uses_graph() {
            return fail("graph_only requires a graph variant (SE or SRE)".into());
        }
        if self.has_seq_branch() && self.seq_hidden == 0 {
            return fail("seq_hidden must be >= 1".into());
        }
        Ok(())
    }

    pub fn has_seq_branch(&self) -> bool {
        !self.graph_only
    }

    pub fn has_graph_branch(&self) -> bool {
        self.variant.uses_graph()
    }

    /// Width of one per-day input row of the sequence branch.
    pub fn seq_input_dim(&self) -> usize {
        match self.variant {
            Variant::Sr | Variant::Sre => self.stat_features + self.reg_features,
            Variant::Se | Variant::LstmOnly => self.stat_features,
        }
    }

    /// Width of the fused feature vector entering the output head.
    pub fn fusion_width(&self) -> usize {
        let seq = if self.has_seq_branch() { self.seq_hidden } else { 0 };
        let graph = if self.has_graph_branch() { self.graph_hidden } else { 0 };
        seq + graph
    }

    fn effective_cell(&self) -> CellKind {
        match self.variant {
            Variant::LstmOnly => CellKind::Lstm,
            _ => self.cell,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MglModel {
    pub config: ModelConfig,
    pub seq: Option<SeqCell>,
    pub graph: Option<TemporalGraphParams>,
    pub w_fuse: Tensor,
    pub b_fuse: Tensor,
}

impl MglModel {
    /// Deterministic initialization: same seed, same parameters.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = if config.has_seq_branch() {
            Some(SeqCell::init(
                config.effective_cell(),
                config.seq_hidden,
                config.seq_input_dim(),
                &mut rng,
            ))
        } else {
            None
        };
        let graph = if config.has_graph_branch() {
            Some(TemporalGraphParams::init(
                config.node_count,
                config.node_embed_dim,
                config.graph_hidden,
                config.embed_dim,
                TgOptions {
                    tie_embeddings: config.tie_embeddings,
                    separate_candidate_embeddings: config.separate_candidate_embeddings,
                },
                &mut rng,
            ))
        } else {
            None
        };
        let fusion = config.fusion_width();
        let w_fuse = Tensor::glorot(fusion, config.output_dim, &mut rng);
        let b_fuse = Tensor::zeros(&[1, config.output_dim]);
        Ok(MglModel { config: config.clone(), seq, graph, w_fuse, b_fuse })
    }

    /// Parameter tensors in the fixed checkpoint order.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        if let Some(seq) = &self.seq {
            v.extend(seq.tensors());
        }
        if let Some(graph) = &self.graph {
            v.extend(graph.tensors());
        }
        v.push(&self.w_fuse);
        v.push(&self.b_fuse);
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = Vec::new();
        if let Some(seq) = &mut self.seq {
            v.extend(seq.tensors_mut());
        }
        if let Some(graph) = &mut self.graph {
            v.extend(graph.tensors_mut());
        }
        v.push(&mut self.w_fuse);
        v.push(&mut self.b_fuse);
        v
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|t| t.numel()).sum()
    }

    pub fn bind(&self, g: &mut Graph) -> Result<BoundModel> {
        let seq = self.seq.as_ref().map(|cell| SeqCellNodes::bind(g, cell));
        let graph = match &self.graph {
            Some(p) => Some(bind_temporal_graph(g, p)?),
            None => None,
        };
        Ok(BoundModel {
            config: self.config.clone(),
            seq,
            graph,
            w_fuse: g.param(self.w_fuse.clone()),
            b_fuse: g.param(self.b_fuse.clone()),
        })
    }

    /// Forward pass on plain tensors.
    pub fn forward(&self, window: &WindowSample) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g)?;
        let out = bound.forward(&mut g, window)?;
        Ok(g.value(out).clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let config = serde_json::to_vec(&self.config)
            .map_err(|e| Error::Format { offset: None, detail: format!("config encode: {e}") })?;
        buf.extend_from_slice(&(config.len() as u32).to_le_bytes());
        buf.extend_from_slice(&config);
        let params = self.parameters();
        buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            buf.extend_from_slice(&(p.rank() as u32).to_le_bytes());
            for d in p.shape() {
                buf.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in p.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader::new(&bytes);
        let magic = r.take(4)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::format_at(0, "bad checkpoint magic, expected \"MGLM\""));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format_at(4, format!("unsupported checkpoint version {version}")));
        }
        let config_len = r.u32()? as usize;
        let config_bytes = r.take(config_len)?;
        let config: ModelConfig = serde_json::from_slice(config_bytes).map_err(|e| {
            Error::format_at(12, format!("config decode: {e}"))
        })?;
        let mut model = MglModel::init(&config, 0)?;
        let declared = r.u32()? as usize;
        {
            let mut params = model.parameters_mut();
            if declared != params.len() {
                return Err(Error::Format {
                    offset: None,
                    detail: format!(
                        "checkpoint declares {declared} tensors, model expects {}",
                        params.len()
                    ),
                });
            }
            for p in params.iter_mut() {
                let offset = r.pos as u64;
                let rank = r.u32()? as usize;
                let mut shape = Vec::with_capacity(rank);
                for _ in 0..rank {
                    shape.push(r.u32()? as usize);
                }
                if shape != p.shape() {
                    return Err(Error::format_at(
                        offset,
                        format!("tensor shape {:?} does not match model shape {:?}", shape, p.shape()),
                    ));
                }
                for v in p.data_mut().iter_mut() {
                    *v = r.f64()?;
                }
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format_at(
                r.pos as u64,
                format!("{} trailing bytes after parameters", bytes.len() - r.pos),
            ));
        }
        Ok(model)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGLM";
pub const CHECKPOINT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format_at(
                self.pos as u64,
                format!("unexpected end of file, wanted {n} bytes"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let b = self.take(8)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// A model bound into a graph; reusable for many windows within one tape.
pub struct BoundModel {
    config: ModelConfig,
    seq: Option<SeqCellNodes>,
    graph: Option<TemporalGraphNodes>,
    w_fuse: NodeId,
    b_fuse: NodeId,
}

impl BoundModel {
    /// Parameter node ids in the same order as [`MglModel::parameters`].
    pub fn param_ids(&self, model: &MglModel) -> Vec<NodeId> {
        let mut v = Vec::new();
        if let Some(seq) = &self.seq {
            v.extend(seq.ids());
        }
        if let (Some(nodes), Some(params)) = (&self.graph, &model.graph) {
            v.extend(nodes.ids(params));
        }
        v.push(self.w_fuse);
        v.push(self.b_fuse);
        v
    }

    fn check_window(&self, w: &WindowSample) -> Result<()> {
        let cfg = &self.config;
        let d = cfg.window;
        let fail = |msg: String| Err(Error::Config(msg));
        if w.stats.rows() != d || w.stats.cols() != cfg.stat_features {
            return fail(format!(
                "window stats shape {:?} does not match config (d={}, stat_features={})",
                w.stats.shape(),
                d,
                cfg.stat_features
            ));
        }
        if cfg.variant.uses_regulations()
            && (w.regs.rows() != d || w.regs.cols() != cfg.reg_features)
        {
            return fail(format!(
                "window regulations shape {:?} does not match config (d={}, reg_features={})",
                w.regs.shape(),
                d,
                cfg.reg_features
            ));
        }
        if cfg.has_graph_branch() {
            if w.graph.len() != d {
                return fail(format!(
                    "graph window has {} snapshots, config wants {}",
                    w.graph.len(),
                    d
                ));
            }
            for s in &w.graph {
                if s.rows() != cfg.node_count || s.cols() != cfg.embed_dim {
                    return fail(format!(
                        "snapshot shape {:?} does not match config (N={}, embed_dim={})",
                        s.shape(),
                        cfg.node_count,
                        cfg.embed_dim
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds the forward computation for one window; returns the 1×K output.
    pub fn forward(&self, g: &mut Graph, w: &WindowSample) -> Result<NodeId> {
        self.check_window(w)?;
        let cfg = &self.config;
        let d = cfg.window;

        let seq_out = match &self.seq {
            Some(cell) => {
                let mut xs = Vec::with_capacity(d);
                for t in 0..d {
                    let mut row = w.stats.row(t).to_vec();
                    if cfg.variant.uses_regulations() {
                        row.extend_from_slice(w.regs.row(t));
                    }
                    xs.push(g.constant(Tensor::row_vec(row)));
                }
                Some(cell.run(g, cfg.seq_hidden, &xs)?)
            }
            None => None,
        };

        let graph_out = match &self.graph {
            Some(nodes) => {
                let snaps: Vec<NodeId> =
                    w.graph.iter().map(|s| g.constant(s.clone())).collect();
                let h0 = g.constant(Tensor::zeros(&[cfg.node_count, cfg.graph_hidden]));
                let h = run_temporal_graph_graph(g, nodes, &snaps, h0)?;
                Some(g.mean_rows(h)?)
            }
            None => None,
        };

        let fused = match (seq_out, graph_out) {
            (Some(s), Some(gr)) => g.concat(s, gr, 1)?,
            (Some(s), None) => s,
            (None, Some(gr)) => gr,
            (None, None) => unreachable!("config validation requires a branch"),
        };
        let out = linear_head_graph(g, self.w_fuse, self.b_fuse, fused)?;
        if cfg.softmax_head {
            g.softmax_rows(out)
        } else {
            Ok(out)
        }
    }
}

/// Mean squared error over the K targets as a graph node.
pub fn mse_loss_graph(g: &mut Graph, pred: NodeId, target: NodeId) -> Result<NodeId> {
    if g.value(pred).shape() != g.value(target).shape() {
        return Err(Error::dimension(
            "mse_loss",
            crate::tensor::shapes(g.value(pred), g.value(target)),
        ));
    }
    let diff = g.sub(pred, target)?;
    let sq = g.mul(diff, diff)?;
    g.mean_all(sq)
}

/// Mean squared error on plain tensors.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::dimension("mse_loss", crate::tensor::shapes(pred, target)));
    }
    let n = pred.numel() as f64;
    Ok(pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}
