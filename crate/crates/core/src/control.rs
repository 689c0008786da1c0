//! The control layer between encoder and generator: additive attention with
//! an optional attention-history penalty, the content vector with an
//! optional content-history penalty, the two-level decoder state update,
//! and the output word distribution.

use rand::Rng;

use crate::encoder::{gru_step, GruParams, INIT_RANGE};
use crate::graph::{Graph, NodeId, ParamId, Params};
use crate::tensor::Tensor;

/// Additive attention: score_i = score · tanh(state_proj s' + memory_proj h_i
/// − history_penalty · A_i), where A_i is the accumulated attention mass on
/// position i. `history_penalty` exists only when attention-history
/// distraction is enabled.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub state_proj: ParamId,
    pub memory_proj: ParamId,
    pub score: ParamId,
    pub history_penalty: Option<ParamId>,
}

impl AttentionParams {
    pub fn init(
        params: &mut Params,
        attention_dim: usize,
        state_dim: usize,
        memory_dim: usize,
        with_history: bool,
        rng: &mut impl Rng,
    ) -> AttentionParams {
        let state_proj = params.add(
            "attention.state_proj",
            Tensor::uniform(vec![attention_dim, state_dim], -INIT_RANGE, INIT_RANGE, rng),
        );
        let memory_proj = params.add(
            "attention.memory_proj",
            Tensor::uniform(vec![attention_dim, memory_dim], -INIT_RANGE, INIT_RANGE, rng),
        );
        let score = params.add(
            "attention.score",
            Tensor::uniform(vec![attention_dim], -INIT_RANGE, INIT_RANGE, rng),
        );
        // Unconstrained, started small and positive so the history term
        // penalizes re-attention from the first update.
        let history_penalty = with_history.then(|| {
            params.add(
                "attention.history_penalty",
                Tensor::uniform(vec![attention_dim], 0.0, INIT_RANGE, rng),
            )
        });
        AttentionParams { state_proj, memory_proj, score, history_penalty }
    }
}

/// Elementwise (diagonal) scales for content distraction:
/// c = tanh(fresh_scale ⊙ c' − history_scale ⊙ Σ previous c).
#[derive(Debug, Clone, Copy)]
pub struct DistractParams {
    pub fresh_scale: ParamId,
    pub history_scale: ParamId,
}

impl DistractParams {
    pub fn init(params: &mut Params, memory_dim: usize, rng: &mut impl Rng) -> DistractParams {
        // fresh_scale starts near one so an untrained model behaves like the
        // baseline tanh(c'); history_scale starts near zero.
        let mut fresh = Tensor::uniform(vec![memory_dim], -INIT_RANGE, INIT_RANGE, rng);
        for v in fresh.data_mut() {
            *v += 1.0;
        }
        DistractParams {
            fresh_scale: params.add("distraction.fresh_scale", fresh),
            history_scale: params.add(
                "distraction.history_scale",
                Tensor::uniform(vec![memory_dim], -INIT_RANGE, INIT_RANGE, rng),
            ),
        }
    }
}

/// Readout stack: softmax(readout · tanh(prev_word_proj e(y) + state_proj s
/// + context_proj c)).
#[derive(Debug, Clone, Copy)]
pub struct OutputParams {
    pub readout: ParamId,
    pub state_proj: ParamId,
    pub prev_word_proj: ParamId,
    pub context_proj: ParamId,
}

impl OutputParams {
    pub fn init(
        params: &mut Params,
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        memory_dim: usize,
        rng: &mut impl Rng,
    ) -> OutputParams {
        let mut mat = |name: &str, rows: usize, cols: usize| {
            params.add(
                format!("output.{name}"),
                Tensor::uniform(vec![rows, cols], -INIT_RANGE, INIT_RANGE, rng),
            )
        };
        OutputParams {
            readout: mat("readout", vocab_size, hidden),
            state_proj: mat("state_proj", hidden, hidden),
            prev_word_proj: mat("prev_word_proj", hidden, embed_dim),
            context_proj: mat("context_proj", hidden, memory_dim),
        }
    }
}

/// Precomputed per-document attention memory: the annotation nodes and
/// their `memory_proj` images, shared by every decode step.
pub struct Memory {
    pub annotations: Vec<NodeId>,
    pub projected: Vec<NodeId>,
    pub mask: Option<Vec<bool>>,
}

impl Memory {
    pub fn build(
        g: &mut Graph,
        att: &AttentionParams,
        annotations: Vec<NodeId>,
        mask: Option<Vec<bool>>,
    ) -> Memory {
        let proj = g.param(att.memory_proj);
        let projected = annotations.iter().map(|&h| g.matvec(proj, h)).collect();
        Memory { annotations, projected, mask }
    }

    pub fn len(&self) -> usize {
        self.annotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.annotations.is_empty()
    }
}

/// Raw (pre-softmax) attention scores for one step. `history` is the
/// accumulated attention-weight vector Σ_{j<t} α_j, absent at t=1 or when
/// the history penalty is disabled.
pub fn attention_scores(
    g: &mut Graph,
    att: &AttentionParams,
    s_inner: NodeId,
    memory: &Memory,
    history: Option<NodeId>,
) -> NodeId {
    let state_proj = g.param(att.state_proj);
    let score_vec = g.param(att.score);
    let from_state = g.matvec(state_proj, s_inner);
    let penalty = match (att.history_penalty, history) {
        (Some(p), Some(h)) => Some((g.param(p), h)),
        _ => None,
    };
    let mut scores = Vec::with_capacity(memory.len());
    for i in 0..memory.len() {
        let mut pre = g.add(from_state, memory.projected[i]);
        if let Some((penalty_vec, history)) = penalty {
            let mass = g.index(history, i);
            let scaled = g.scale(penalty_vec, mass);
            pre = g.sub(pre, scaled);
        }
        let activated = g.tanh(pre);
        scores.push(g.dot(score_vec, activated));
    }
    g.stack(&scores)
}

/// Softmax over source positions, with PAD positions forced to weight 0.
pub fn attention_normalize(g: &mut Graph, raw: NodeId, mask: Option<&[bool]>) -> NodeId {
    match mask {
        Some(m) => g.softmax_masked(raw, m),
        None => g.softmax(raw),
    }
}

/// c' = Σ_i α_i h_i.
pub fn content_vector(g: &mut Graph, alpha: NodeId, memory: &Memory) -> NodeId {
    g.lincomb(alpha, &memory.annotations)
}

/// Content distraction. With params present:
/// c = tanh(fresh_scale ⊙ c' − history_scale ⊙ history); without, the
/// baseline c = tanh(c'). `history` is Σ of previous post-distraction c.
pub fn distract_content(
    g: &mut Graph,
    distract: Option<&DistractParams>,
    c_fresh: NodeId,
    history: Option<NodeId>,
) -> NodeId {
    match distract {
        Some(p) => {
            let fresh_scale = g.param(p.fresh_scale);
            let mut pre = g.mul(fresh_scale, c_fresh);
            if let Some(h) = history {
                let history_scale = g.param(p.history_scale);
                let scaled = g.mul(history_scale, h);
                pre = g.sub(pre, scaled);
            }
            g.tanh(pre)
        }
        None => g.tanh(c_fresh),
    }
}

/// Word distribution over the vocabulary for one step.
pub fn output_distribution(
    g: &mut Graph,
    out: &OutputParams,
    y_prev_embed: NodeId,
    state: NodeId,
    context: NodeId,
) -> NodeId {
    let prev_word_proj = g.param(out.prev_word_proj);
    let state_proj = g.param(out.state_proj);
    let context_proj = g.param(out.context_proj);
    let readout = g.param(out.readout);
    let a = g.matvec(prev_word_proj, y_prev_embed);
    let b = g.matvec(state_proj, state);
    let c = g.matvec(context_proj, context);
    let ab = g.add(a, b);
    let pre = g.add(ab, c);
    let hidden = g.tanh(pre);
    let logits = g.matvec(readout, hidden);
    g.softmax(logits)
}

/// State threaded between decode steps. Histories are `None` at t=1
/// (equivalent to zero vectors) and when the corresponding distraction is
/// disabled.
#[derive(Debug, Clone, Copy)]
pub struct StepState {
    pub state: NodeId,
    pub content_history: Option<NodeId>,
    pub attention_history: Option<NodeId>,
    pub step: usize,
}

impl StepState {
    pub fn initial(state: NodeId) -> StepState {
        StepState { state, content_history: None, attention_history: None, step: 1 }
    }
}

/// Everything produced by one decode step.
pub struct StepNodes {
    /// s': output of the word-level GRU (or the previous state in
    /// single-level mode); the attention query.
    pub inner_state: NodeId,
    pub alpha: NodeId,
    pub content_fresh: NodeId,
    pub content: NodeId,
    pub state: NodeId,
    pub distribution: NodeId,
    pub next: StepState,
}

/// Decoder wiring for one step. Evaluation order: s' → attention → c' → c →
/// s → distribution, since the attention query is s' and the state GRU
/// consumes the distraction-primed content vector.
#[allow(clippy::too_many_arguments)]
pub fn decoder_step(
    g: &mut Graph,
    word_gru: Option<&GruParams>,
    context_gru: &GruParams,
    att: &AttentionParams,
    distract: Option<&DistractParams>,
    out: &OutputParams,
    memory: &Memory,
    state: &StepState,
    y_prev_embed: NodeId,
) -> StepNodes {
    let inner_state = match word_gru {
        Some(p) => gru_step(g, p, state.state, y_prev_embed),
        None => state.state,
    };
    let raw = attention_scores(g, att, inner_state, memory, state.attention_history);
    let alpha = attention_normalize(g, raw, memory.mask.as_deref());
    let content_fresh = content_vector(g, alpha, memory);
    let content = distract_content(g, distract, content_fresh, state.content_history);
    let new_state = gru_step(g, context_gru, inner_state, content);
    let distribution = output_distribution(g, out, y_prev_embed, new_state, content);

    let attention_history = att.history_penalty.map(|_| match state.attention_history {
        Some(h) => g.add(h, alpha),
        None => alpha,
    });
    let content_history = distract.map(|_| match state.content_history {
        Some(h) => g.add(h, content),
        None => content,
    });
    StepNodes {
        inner_state,
        alpha,
        content_fresh,
        content,
        state: new_state,
        distribution,
        next: StepState {
            state: new_state,
            content_history,
            attention_history,
            step: state.step + 1,
        },
    }
}
