//! Training losses: binary cross-entropy on candidate scores plus a triplet
//! term that ties the learned interests to simple supervised summaries.

use crate::autodiff::{Graph, Matrix, ParamStore, Var};
use crate::data::SessionizedHistory;
use crate::model::{history_items, ContrastProjection, InterestBundle, ModelError, SlsRec};

/// Probabilities are clamped to `[CLAMP, 1 - CLAMP]` before the log.
pub const CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the contrastive term.
    pub lambda: f64,
    pub margin: f64,
    /// Use `f(u^S, Û^L, Û^S)` as the third term instead of `f(u^S, Û^S, Û^L)`.
    pub eq17_literal: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 0.2, margin: 0.5, eq17_literal: false }
    }
}

/// Row-wise `max(‖a - p‖² - ‖a - n‖² + margin, 0)`.
pub fn triplet(g: &mut Graph, a: Var, p: Var, n: Var, margin: f64) -> Result<Var, ModelError> {
    let pos = g.sq_dist(a, p)?;
    let neg = g.sq_dist(a, n)?;
    let diff = g.sub(pos, neg)?;
    let shifted = g.add_scalar(diff, margin);
    Ok(g.hinge(shifted))
}

/// Plain-number twin of [`triplet`] for one row.
pub fn triplet_value(a: &[f64], p: &[f64], n: &[f64], margin: f64) -> f64 {
    (sq_dist(a, p) - sq_dist(a, n) + margin).max(0.0)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Interests and their supervised counterparts, each `1 × d'`.
#[derive(Clone, Copy, Debug)]
pub struct ContrastInputs {
    pub u_long: Var,
    pub u_short: Var,
    pub hat_long: Var,
    pub hat_short: Var,
}

/// `Û^L`: mean embedding of the historical items; `Û^S`: of the current session.
///
/// `None` for a cold-start context.
pub fn supervised_reps(
    g: &mut Graph,
    embedding: Var,
    history: &SessionizedHistory,
) -> Result<Option<(Var, Var)>, ModelError> {
    let (past, current) = history_items(history);
    if past.is_empty() || current.is_empty() {
        return Ok(None);
    }
    let past = g.gather(embedding, past)?;
    let current = g.gather(embedding, current)?;
    Ok(Some((g.mean_rows(past)?, g.mean_rows(current)?)))
}

/// Sum of the four triplet terms.
pub fn contrastive_loss(g: &mut Graph, x: ContrastInputs, margin: f64, eq17_literal: bool) -> Result<Var, ModelError> {
    let ContrastInputs { u_long, u_short, hat_long, hat_short } = x;
    let t1 = triplet(g, u_long, hat_long, hat_short, margin)?;
    let t2 = triplet(g, hat_long, u_long, u_short, margin)?;
    let t3 = if eq17_literal {
        triplet(g, u_short, hat_long, hat_short, margin)?
    } else {
        triplet(g, u_short, hat_short, hat_long, margin)?
    };
    let t4 = triplet(g, hat_short, u_short, u_long, margin)?;
    let all = g.concat_rows(&[t1, t2, t3, t4])?;
    Ok(g.sum(all))
}

/// Mean binary cross-entropy; also returns how many scores hit the clamp.
pub fn main_loss(g: &mut Graph, scores: Var, labels: &[f64]) -> Result<(Var, usize), ModelError> {
    let n = labels.len();
    let clamped = g.value(scores).data().iter().filter(|&&p| !(CLAMP..=1.0 - CLAMP).contains(&p)).count();
    let p = g.clamp(scores, CLAMP, 1.0 - CLAMP);
    let q = g.one_minus(p);
    let log_p = g.log(p);
    let log_q = g.log(q);
    let y = g.constant(Matrix::from_vec(n, 1, labels.to_vec()));
    let not_y = g.constant(Matrix::from_vec(n, 1, labels.iter().map(|v| 1.0 - v).collect()));
    let a = g.mul(y, log_p)?;
    let b = g.mul(not_y, log_q)?;
    let both = g.add(a, b)?;
    let total = g.sum(both);
    Ok((g.scale(total, -1.0 / n as f64), clamped))
}

/// Reduces the interests of the positive candidate (row 0) to the contrastive space.
pub fn contrast_inputs(
    g: &mut Graph,
    model: &SlsRec,
    store: &ParamStore,
    bundle: &InterestBundle,
    history: &SessionizedHistory,
) -> Result<Option<ContrastInputs>, ModelError> {
    if bundle.cold_start {
        return Ok(None);
    }
    let emb = model.embedding(g, store);
    let Some((hat_long, hat_short)) = supervised_reps(g, emb, history)? else {
        return Ok(None);
    };
    let (u_long, u_short) = match model.config().contrast_projection {
        ContrastProjection::FirstHalf => (g.slice_rows(bundle.u_h, 0, 1)?, bundle.u_s),
        ContrastProjection::LearnedLinear => {
            let (pl, ps) = model.projection_vars(g, store).expect("learned projections are registered");
            let row = g.slice_rows(bundle.u_long, 0, 1)?;
            (g.matmul(row, pl)?, g.matmul(bundle.u_short, ps)?)
        }
    };
    Ok(Some(ContrastInputs { u_long, u_short, hat_long, hat_short }))
}

#[derive(Clone, Debug)]
pub struct TaskLoss {
    pub bundle: InterestBundle,
    /// `L_main + λ·L_con`
    pub total: Var,
    pub main: Var,
    pub contrastive: Option<Var>,
    pub clamped: usize,
    /// The contrastive term was wanted but the context has no history.
    pub contrast_skipped: bool,
}

/// Records the loss of one ranking task. `candidates[i]` has label `labels[i]`.
pub fn task_loss(
    g: &mut Graph,
    model: &SlsRec,
    store: &ParamStore,
    history: &SessionizedHistory,
    candidates: &[u32],
    labels: &[f64],
    cfg: &LossConfig,
) -> Result<TaskLoss, ModelError> {
    let bundle = model.forward(g, store, history, candidates)?;
    let (main, clamped) = main_loss(g, bundle.scores, labels)?;
    let mut total = main;
    let mut contrastive = None;
    let mut contrast_skipped = false;
    if cfg.lambda != 0.0 && !model.config().ablation.no_cl {
        match contrast_inputs(g, model, store, &bundle, history)? {
            Some(x) => {
                let con = contrastive_loss(g, x, cfg.margin, cfg.eq17_literal)?;
                let weighted = g.scale(con, cfg.lambda);
                total = g.add(main, weighted)?;
                contrastive = Some(con);
            }
            None => contrast_skipped = true,
        }
    }
    Ok(TaskLoss { bundle, total, main, contrastive, clamped, contrast_skipped })
}

/// Which of the four contrastive orderings hold strictly:
/// `d(u^L,Û^L) < d(u^L,Û^S)`, `d(Û^L,u^L) < d(Û^L,u^S)`,
/// `d(u^S,Û^S) < d(u^S,Û^L)`, `d(Û^S,u^S) < d(Û^S,u^L)`.
pub fn contrast_orderings(u_long: &[f64], u_short: &[f64], hat_long: &[f64], hat_short: &[f64]) -> [bool; 4] {
    [
        sq_dist(u_long, hat_long) < sq_dist(u_long, hat_short),
        sq_dist(hat_long, u_long) < sq_dist(hat_long, u_short),
        sq_dist(u_short, hat_short) < sq_dist(u_short, hat_long),
        sq_dist(hat_short, u_short) < sq_dist(hat_short, u_long),
    ]
}
