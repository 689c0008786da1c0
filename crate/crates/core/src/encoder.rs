//! GRU cell and bi-directional source encoding.

use rand::Rng;

use crate::graph::{Graph, NodeId, ParamId, Params};
use crate::tensor::Tensor;

pub const INIT_RANGE: f64 = 0.08;

/// One GRU's six weight matrices: reset gate, update gate, and candidate
/// state, each with an input-side and a hidden-side matrix.
#[derive(Debug, Clone, Copy)]
pub struct GruParams {
    pub reset_x: ParamId,
    pub reset_h: ParamId,
    pub update_x: ParamId,
    pub update_h: ParamId,
    pub cand_x: ParamId,
    pub cand_h: ParamId,
}

impl GruParams {
    pub fn init(
        params: &mut Params,
        prefix: &str,
        hidden: usize,
        input: usize,
        rng: &mut impl Rng,
    ) -> GruParams {
        let mut mat = |name: &str, rows: usize, cols: usize| {
            params.add(
                format!("{prefix}.{name}"),
                Tensor::uniform(vec![rows, cols], -INIT_RANGE, INIT_RANGE, rng),
            )
        };
        GruParams {
            reset_x: mat("reset_x", hidden, input),
            reset_h: mat("reset_h", hidden, hidden),
            update_x: mat("update_x", hidden, input),
            update_h: mat("update_h", hidden, hidden),
            cand_x: mat("cand_x", hidden, input),
            cand_h: mat("cand_h", hidden, hidden),
        }
    }
}

/// One GRU step:
///   r = sigmoid(Wr x + Ur h),  u = sigmoid(Wu x + Uu h),
///   cand = tanh(W x + U (r ⊙ h)),  h' = (1 − u) ⊙ h + u ⊙ cand.
pub fn gru_step(g: &mut Graph, p: &GruParams, h_prev: NodeId, x: NodeId) -> NodeId {
    let reset = {
        let wx = g.param(p.reset_x);
        let wh = g.param(p.reset_h);
        let a = g.matvec(wx, x);
        let b = g.matvec(wh, h_prev);
        let s = g.add(a, b);
        g.sigmoid(s)
    };
    let update = {
        let wx = g.param(p.update_x);
        let wh = g.param(p.update_h);
        let a = g.matvec(wx, x);
        let b = g.matvec(wh, h_prev);
        let s = g.add(a, b);
        g.sigmoid(s)
    };
    let cand = {
        let wx = g.param(p.cand_x);
        let wh = g.param(p.cand_h);
        let gated = g.mul(reset, h_prev);
        let a = g.matvec(wx, x);
        let b = g.matvec(wh, gated);
        let s = g.add(a, b);
        g.tanh(s)
    };
    let ones = g.constant(Tensor::ones(vec![g.value(update).len()]));
    let keep = g.sub(ones, update);
    let kept = g.mul(keep, h_prev);
    let fresh = g.mul(update, cand);
    g.add(kept, fresh)
}

/// Embedding table plus one GRU per direction; `bwd` is None in
/// uni-directional mode.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub embedding: ParamId,
    pub fwd: GruParams,
    pub bwd: Option<GruParams>,
    pub hidden: usize,
}

impl EncoderParams {
    pub fn init(
        params: &mut Params,
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        bidirectional: bool,
        rng: &mut impl Rng,
    ) -> EncoderParams {
        let embedding = params.add(
            "encoder.embedding",
            Tensor::uniform(vec![vocab_size, embed_dim], -INIT_RANGE, INIT_RANGE, rng),
        );
        let fwd = GruParams::init(params, "encoder.fwd", hidden, embed_dim, rng);
        let bwd = bidirectional
            .then(|| GruParams::init(params, "encoder.bwd", hidden, embed_dim, rng));
        EncoderParams { embedding, fwd, bwd, hidden }
    }

    /// Width of one annotation row: 2n bidirectional, n otherwise.
    pub fn annotation_dim(&self) -> usize {
        if self.bwd.is_some() {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

/// Run the encoder over a token id sequence, producing one annotation node
/// per position. Bidirectional rows are [forward; backward]; initial states
/// are zero in both directions.
pub fn encode_sequence(g: &mut Graph, enc: &EncoderParams, ids: &[u32]) -> Vec<NodeId> {
    assert!(!ids.is_empty(), "cannot encode an empty sequence");
    let embed = g.param(enc.embedding);
    let embedded: Vec<NodeId> = ids.iter().map(|&id| g.row(embed, id as usize)).collect();

    let run = |g: &mut Graph, p: &GruParams, reverse: bool| -> Vec<NodeId> {
        let mut h = g.constant(Tensor::zeros(vec![enc.hidden]));
        let mut states = Vec::with_capacity(embedded.len());
        let inputs: Vec<NodeId> = if reverse {
            embedded.iter().rev().copied().collect()
        } else {
            embedded.clone()
        };
        for x in inputs {
            h = gru_step(g, p, h, x);
            states.push(h);
        }
        if reverse {
            states.reverse();
        }
        states
    };

    let fwd_states = run(g, &enc.fwd, false);
    match &enc.bwd {
        Some(bwd) => {
            let bwd_states = run(g, bwd, true);
            fwd_states
                .into_iter()
                .zip(bwd_states)
                .map(|(f, b)| g.concat(f, b))
                .collect()
        }
        None => fwd_states,
    }
}
