//! The long/short-term interest network.
//!
//! For one context and a set of candidate items, [`SlsRec::forward`] records:
//!
//! 1. session representations from a shared additive-attention encoder;
//! 2. the short-term interest `u^S = [u_s; u_c]` of the current session, where
//!    `u_c` attends only to items of the session's dominant category;
//! 3. the long-term interest `u^L = [u_h; u_h']`, pooling the historical
//!    session representations and their GRU states against each candidate;
//! 4. a candidate-dependent gate `α` mixing `u^L` and `u^S`;
//! 5. a two-layer MLP score per candidate.

mod encoders;

use std::sync::Arc;

use rand::Rng;

pub use encoders::{
    adaptive_fuse, attention_encode, attention_pool, attention_scores, category_mask, dominant_category, gru_forward,
    predict_score, short_term_interest, AttentionVars, FusionVars, GruVars, MlpVars,
};

use crate::autodiff::{Graph, GraphError, Matrix, ParamError, ParamId, ParamStore, Var};
use crate::data::{SessionizedHistory, PAD};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("context has no items in its current session")]
    EmptyCurrentSession,
}

/// Components switched off for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Ablation {
    /// Drop the contrastive term (λ = 0).
    pub no_cl: bool,
    /// `u^S = [u_s; u_s]`.
    pub no_cate: bool,
    /// `u^L = 0`.
    pub no_long: bool,
    /// `u^S = 0`.
    pub no_short: bool,
}

impl Ablation {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.no_long && self.no_short {
            return Err(ModelError::Config("no_long and no_short together leave the model without inputs".into()));
        }
        Ok(())
    }
}

/// How the `2d` interests are brought to `d` for the contrastive terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ContrastProjection {
    /// `u_h` for the long-term side, `u_s` for the short-term side.
    #[default]
    FirstHalf,
    /// Separate learned `2d × d` maps.
    LearnedLinear,
}

impl std::str::FromStr for ContrastProjection {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first_half" => Ok(ContrastProjection::FirstHalf),
            "learned_linear" => Ok(ContrastProjection::LearnedLinear),
            other => Err(format!("unknown contrast_projection `{other}`")),
        }
    }
}

impl std::fmt::Display for ContrastProjection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ContrastProjection::FirstHalf => "first_half",
            ContrastProjection::LearnedLinear => "learned_linear",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub d: usize,
    /// Use one bilinear matrix for both pooling heads.
    pub share_pool_weights: bool,
    pub contrast_projection: ContrastProjection,
    pub ablation: Ablation,
}

impl ModelConfig {
    pub fn new(d: usize) -> Self {
        ModelConfig {
            d,
            share_pool_weights: false,
            contrast_projection: ContrastProjection::FirstHalf,
            ablation: Ablation::default(),
        }
    }
}

#[derive(Clone, Debug)]
struct ParamIds {
    embedding: ParamId,
    att: [ParamId; 3],
    gru: [ParamId; 9],
    pool: ParamId,
    pool_waam: ParamId,
    fusion: [ParamId; 2],
    mlp: [ParamId; 4],
    proj: Option<[ParamId; 2]>,
}

const GRU_NAMES: [&str; 9] =
    ["gru.w_z", "gru.u_z", "gru.b_z", "gru.w_r", "gru.u_r", "gru.b_r", "gru.w_n", "gru.u_n", "gru.b_n"];

/// Name, rows, cols and whether the entry is a bias (zero-initialized).
fn layout(cfg: &ModelConfig, num_items: usize) -> Vec<(&'static str, usize, usize, bool)> {
    let d = cfg.d;
    let mut out = vec![
        ("item_embedding", num_items, d, false),
        ("attention.w1", d, d, false),
        ("attention.b1", 1, d, true),
        ("attention.w2", d, 1, false),
    ];
    for name in GRU_NAMES {
        let bias = name.starts_with("gru.b");
        out.push((name, if bias { 1 } else { d }, d, bias));
    }
    out.push(("pool.w", d, d, false));
    if !cfg.share_pool_weights {
        out.push(("pool.w_waam", d, d, false));
    }
    out.extend([
        ("fusion.w_q", 5 * d, 1, false),
        ("fusion.b_q", 1, 1, true),
        ("mlp.w1", 3 * d, d, false),
        ("mlp.b1", 1, d, true),
        ("mlp.w2", d, 1, false),
        ("mlp.b2", 1, 1, true),
    ]);
    if cfg.contrast_projection == ContrastProjection::LearnedLinear {
        out.push(("contrast.proj_long", 2 * d, d, false));
        out.push(("contrast.proj_short", 2 * d, d, false));
    }
    out
}

/// Graph handles for one forward pass.
#[derive(Clone, Debug)]
pub struct InterestBundle {
    pub candidates: Arc<[u32]>,
    /// `n × d` candidate embeddings.
    pub targets: Var,
    /// `(k-1) × d`, absent without history.
    pub session_reps: Option<Var>,
    pub gru_states: Option<Var>,
    pub u_s: Var,
    pub u_c: Var,
    /// `1 × 2d`
    pub u_short: Var,
    /// `n × d`
    pub u_h: Var,
    pub u_h_prime: Var,
    /// `n × 2d`
    pub u_long: Var,
    /// `n × 1`
    pub alpha: Var,
    /// `n × 2d`
    pub u_fused: Var,
    /// `n × 1`, one probability per candidate.
    pub scores: Var,
    /// No historical session: the long-term branch is zero.
    pub cold_start: bool,
}

#[derive(Clone, Debug)]
pub struct SlsRec {
    cfg: ModelConfig,
    num_items: usize,
    ids: ParamIds,
}

/// Half-width of the uniform embedding initialization.
pub const EMBEDDING_INIT: f64 = 0.05;

impl SlsRec {
    /// Registers freshly initialized parameters: embeddings uniform in
    /// `±EMBEDDING_INIT`, other weights uniform in `[-1/√d, 1/√d]`, biases zero.
    pub fn init<R: Rng>(cfg: ModelConfig, num_items: usize, rng: &mut R) -> Result<(SlsRec, ParamStore), ModelError> {
        cfg.ablation.validate()?;
        if cfg.d == 0 {
            return Err(ModelError::Config("d must be positive".into()));
        }
        let bound = 1.0 / (cfg.d as f64).sqrt();
        let mut store = ParamStore::new();
        for (name, rows, cols, bias) in layout(&cfg, num_items) {
            if bias {
                store.add_zeros(name, rows, cols)?;
            } else if name == "item_embedding" {
                store.add_uniform(name, rows, cols, EMBEDDING_INIT, rng)?;
            } else {
                store.add_uniform(name, rows, cols, bound, rng)?;
            }
        }
        let model = SlsRec::bind(cfg, &store)?;
        Ok((model, store))
    }

    /// Looks parameters up by name, checking every shape.
    pub fn bind(cfg: ModelConfig, store: &ParamStore) -> Result<SlsRec, ModelError> {
        cfg.ablation.validate()?;
        let emb = store.id("item_embedding").ok_or_else(|| ParamError::Unknown("item_embedding".into()))?;
        let num_items = store.value(emb).rows();
        let mut ids = std::collections::HashMap::new();
        for (name, rows, cols, _) in layout(&cfg, num_items) {
            let id = store.id(name).ok_or_else(|| ParamError::Unknown(name.into()))?;
            let found = store.value(id).shape();
            if found != (rows, cols) {
                return Err(ParamError::Shape { name: name.into(), found, expected: (rows, cols) }.into());
            }
            ids.insert(name, id);
        }
        let id = |n: &str| ids[n];
        let pool = id("pool.w");
        let ids = ParamIds {
            embedding: emb,
            att: [id("attention.w1"), id("attention.b1"), id("attention.w2")],
            gru: GRU_NAMES.map(id),
            pool,
            pool_waam: if cfg.share_pool_weights { pool } else { id("pool.w_waam") },
            fusion: [id("fusion.w_q"), id("fusion.b_q")],
            mlp: [id("mlp.w1"), id("mlp.b1"), id("mlp.w2"), id("mlp.b2")],
            proj: (cfg.contrast_projection == ContrastProjection::LearnedLinear)
                .then(|| [id("contrast.proj_long"), id("contrast.proj_short")]),
        };
        Ok(SlsRec { cfg, num_items, ids })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn embedding(&self, g: &mut Graph, store: &ParamStore) -> Var {
        g.param(store, self.ids.embedding)
    }

    pub fn attention_vars(&self, g: &mut Graph, store: &ParamStore) -> AttentionVars {
        let [w1, b1, w2] = self.ids.att.map(|id| g.param(store, id));
        AttentionVars { w1, b1, w2 }
    }

    pub fn gru_vars(&self, g: &mut Graph, store: &ParamStore) -> GruVars {
        let [w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n] = self.ids.gru.map(|id| g.param(store, id));
        GruVars { w_z, u_z, b_z, w_r, u_r, b_r, w_n, u_n, b_n }
    }

    /// Contrastive projections `(long, short)`, when learned.
    pub fn projection_vars(&self, g: &mut Graph, store: &ParamStore) -> Option<(Var, Var)> {
        self.ids.proj.map(|[a, b]| (g.param(store, a), g.param(store, b)))
    }

    /// Records the network for one context and `candidates`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        history: &SessionizedHistory,
        candidates: &[u32],
    ) -> Result<InterestBundle, ModelError> {
        let d = self.cfg.d;
        let ab = self.cfg.ablation;
        let l = history.l;
        let k = history.num_sessions();
        if k == 0 || !history.session_mask(k - 1).iter().any(|&m| m) {
            return Err(ModelError::EmptyCurrentSession);
        }
        let n = candidates.len();
        let emb = self.embedding(g, store);
        let att = self.attention_vars(g, store);

        let candidates: Arc<[u32]> = candidates.into();
        let target_rows: Vec<usize> = candidates.iter().map(|&c| c as usize).collect();
        let targets = g.gather(emb, target_rows)?;

        // Padding rows are gathered too; the mask gives them zero weight.
        let rows = g.gather(emb, history.items.iter().map(|&i| i as usize).collect::<Vec<_>>())?;
        let scores = attention_scores(g, rows, &att)?;

        let cur = k - 1;
        let cur_rows = g.slice_rows(rows, cur * l, l)?;
        let cur_scores = g.slice_rows(scores, cur * l, l)?;
        let (mut u_s, mut u_c, mut u_short) = encoders::short_term_from_scores(
            g,
            cur_rows,
            cur_scores,
            history.session_categories(cur),
            history.session_mask(cur),
            ab.no_cate,
            l,
        )?;
        if ab.no_short {
            u_s = g.constant(Matrix::zeros(1, d));
            u_c = u_s;
            u_short = g.constant(Matrix::zeros(1, 2 * d));
        }

        let cold_start = k < 2;
        let (session_reps, gru_states, u_h, u_h_prime, u_long) = if cold_start || ab.no_long {
            let zeros = g.constant(Matrix::zeros(n, d));
            let u_long = g.constant(Matrix::zeros(n, 2 * d));
            (None, None, zeros, zeros, u_long)
        } else {
            let hist_rows = g.slice_rows(rows, 0, cur * l)?;
            let hist_scores = g.slice_rows(scores, 0, cur * l)?;
            let hist_mask = &history.mask[..cur * l];
            let reps = encoders::pool_scored(g, hist_rows, hist_scores, hist_mask.to_vec(), cur, l)?;
            let gru = self.gru_vars(g, store);
            let states = gru_forward(g, reps, &gru)?;
            let w = g.param(store, self.ids.pool);
            let w_waam = g.param(store, self.ids.pool_waam);
            let u_h = attention_pool(g, reps, targets, w)?;
            let u_h_prime = attention_pool(g, states, targets, w_waam)?;
            let u_long = g.concat_cols(&[u_h, u_h_prime])?;
            (Some(reps), Some(states), u_h, u_h_prime, u_long)
        };

        let fusion = FusionVars { w_q: g.param(store, self.ids.fusion[0]), b_q: g.param(store, self.ids.fusion[1]) };
        let (alpha, u_fused) = adaptive_fuse(g, u_long, u_short, targets, &fusion)?;
        let [w1, b1, w2, b2] = self.ids.mlp.map(|id| g.param(store, id));
        let scores = predict_score(g, u_fused, targets, &MlpVars { w1, b1, w2, b2 })?;

        Ok(InterestBundle {
            candidates,
            targets,
            session_reps,
            gru_states,
            u_s,
            u_c,
            u_short,
            u_h,
            u_h_prime,
            u_long,
            alpha,
            u_fused,
            scores,
            cold_start,
        })
    }

    /// Probability for each candidate, without keeping the graph.
    pub fn score(
        &self,
        store: &ParamStore,
        history: &SessionizedHistory,
        candidates: &[u32],
    ) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new();
        let bundle = self.forward(&mut g, store, history, candidates)?;
        Ok(g.value(bundle.scores).data().to_vec())
    }
}

/// Item indices of the real positions of `history`, split into the historical
/// sessions and the current one.
pub fn history_items(history: &SessionizedHistory) -> (Vec<usize>, Vec<usize>) {
    let cur = history.current();
    let l = history.l;
    let pick = |range: std::ops::Range<usize>| {
        range.filter(|&i| history.mask[i] && history.items[i] != PAD).map(|i| history.items[i] as usize).collect()
    };
    (pick(0..cur * l), pick(cur * l..(cur + 1) * l))
}
