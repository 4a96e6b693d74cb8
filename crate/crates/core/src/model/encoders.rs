//! Building blocks of the network, expressed as graph ops.
//!
//! Row convention: a `d`-vector is a `1 × d` row and a stack of `n` of them is
//! `n × d`. Candidate items are scored together as rows of one matrix; each
//! row's computation only reads its own candidate.

use std::sync::Arc;

use crate::autodiff::{Graph, Result, Var};

/// Additive attention: `score_i = w₂ᵀ tanh(W₁ᵀ row_i + b₁)`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    pub w_n: Var,
    pub u_n: Var,
    pub b_n: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    /// `5d × 1`
    pub w_q: Var,
    /// `1 × 1`
    pub b_q: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// One attention score per row of `rows`, as an `m × 1` column.
pub fn attention_scores(g: &mut Graph, rows: Var, att: &AttentionVars) -> Result<Var> {
    let proj = g.matmul(rows, att.w1)?;
    let proj = g.add_row(proj, att.b1)?;
    let hidden = g.tanh(proj);
    g.matmul(hidden, att.w2)
}

/// Encodes `k` sessions stored as `(k·l) × d` rows into a `k × d` matrix.
///
/// `mask` marks real positions. Every session needs at least one.
pub fn attention_encode(
    g: &mut Graph,
    rows: Var,
    mask: impl Into<Arc<[bool]>>,
    l: usize,
    att: &AttentionVars,
) -> Result<Var> {
    let k = g.shape(rows).0 / l;
    let scores = attention_scores(g, rows, att)?;
    pool_scored(g, rows, scores, mask, k, l)
}

/// Softmax over each session's scores, then the weighted sum of its rows.
pub(crate) fn pool_scored(
    g: &mut Graph,
    rows: Var,
    scores: Var,
    mask: impl Into<Arc<[bool]>>,
    k: usize,
    l: usize,
) -> Result<Var> {
    let grid = g.reshape(scores, k, l)?;
    let weights = g.masked_softmax(grid, mask)?;
    g.segment_weighted_sum(weights, rows)
}

/// Modal category; ties go to the tied category seen most recently.
///
/// `categories` is a session's real categories, oldest first. When the last
/// item's category is among the tied ones it is the most recent, so it wins.
pub fn dominant_category(categories: &[u32]) -> Option<u32> {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for &c in categories {
        match counts.iter_mut().find(|(k, _)| *k == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c, 1)),
        }
    }
    let max = counts.iter().map(|&(_, n)| n).max()?;
    categories
        .iter()
        .rev()
        .copied()
        .find(|c| counts.iter().any(|&(k, n)| k == *c && n == max))
}

/// Per-position indicator of the dominant category; padding gets `false`.
pub fn category_mask(categories: &[u32], pad_mask: &[bool]) -> Vec<bool> {
    let real: Vec<u32> = categories.iter().zip(pad_mask).filter(|(_, &m)| m).map(|(&c, _)| c).collect();
    let Some(dominant) = dominant_category(&real) else {
        return vec![false; categories.len()];
    };
    categories.iter().zip(pad_mask).map(|(&c, &m)| m && c == dominant).collect()
}

/// Short-term interest of one `l × d` session.
///
/// Returns `(u_s, u_c, u^S)`; with `no_cate` the category-masked half is
/// replaced by `u_s`.
pub fn short_term_interest(
    g: &mut Graph,
    rows: Var,
    categories: &[u32],
    pad_mask: &[bool],
    att: &AttentionVars,
    no_cate: bool,
) -> Result<(Var, Var, Var)> {
    let l = pad_mask.len();
    let scores = attention_scores(g, rows, att)?;
    short_term_from_scores(g, rows, scores, categories, pad_mask, no_cate, l)
}

pub(crate) fn short_term_from_scores(
    g: &mut Graph,
    rows: Var,
    scores: Var,
    categories: &[u32],
    pad_mask: &[bool],
    no_cate: bool,
    l: usize,
) -> Result<(Var, Var, Var)> {
    let u_s = pool_scored(g, rows, scores, pad_mask.to_vec(), 1, l)?;
    let u_c = if no_cate {
        u_s
    } else {
        pool_scored(g, rows, scores, category_mask(categories, pad_mask), 1, l)?
    };
    let u_short = g.concat_cols(&[u_s, u_c])?;
    Ok((u_s, u_c, u_short))
}

/// Runs a GRU from a zero state over the rows of `inputs`; returns every hidden state.
///
/// `z = σ(x W_z + h U_z + b_z)`, `r = σ(x W_r + h U_r + b_r)`,
/// `n = tanh(x W_n + (r ⊙ h) U_n + b_n)`, `h' = (1 - z) ⊙ h + z ⊙ n`.
pub fn gru_forward(g: &mut Graph, inputs: Var, gru: &GruVars) -> Result<Var> {
    let (steps, d) = g.shape(inputs);
    let xz = g.matmul(inputs, gru.w_z)?;
    let xz = g.add_row(xz, gru.b_z)?;
    let xr = g.matmul(inputs, gru.w_r)?;
    let xr = g.add_row(xr, gru.b_r)?;
    let xn = g.matmul(inputs, gru.w_n)?;
    let xn = g.add_row(xn, gru.b_n)?;

    let mut h = g.constant(crate::autodiff::Matrix::zeros(1, d));
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        let xz_t = g.slice_rows(xz, t, 1)?;
        let xr_t = g.slice_rows(xr, t, 1)?;
        let xn_t = g.slice_rows(xn, t, 1)?;

        let hz = g.matmul(h, gru.u_z)?;
        let z_in = g.add(xz_t, hz)?;
        let z = g.sigmoid(z_in);

        let hr = g.matmul(h, gru.u_r)?;
        let r_in = g.add(xr_t, hr)?;
        let r = g.sigmoid(r_in);

        let rh = g.mul(r, h)?;
        let hn = g.matmul(rh, gru.u_n)?;
        let n_in = g.add(xn_t, hn)?;
        let n = g.tanh(n_in);

        // h + z ⊙ (n - h)
        let delta = g.sub(n, h)?;
        let step = g.mul(z, delta)?;
        h = g.add(h, step)?;
        outputs.push(h);
    }
    g.concat_rows(&outputs)
}

/// Target-aware pooling of `m × d` session representations.
///
/// For candidate `c`, `a_i = softmax_i(repsᵢᵀ W v_c)` and row `c` of the
/// output is `Σ a_i reps_i`.
pub fn attention_pool(g: &mut Graph, reps: Var, targets: Var, w: Var) -> Result<Var> {
    let proj = g.matmul(reps, w)?;
    let proj_t = g.transpose(proj);
    let logits = g.matmul(targets, proj_t)?;
    let weights = g.softmax_rows(logits)?;
    g.matmul(weights, reps)
}

/// `α = σ(W^q [u^L; u^S; v_T] + b_q)` and `u^{LS} = α u^L + (1 - α) u^S`, one row per candidate.
///
/// `u_short` is a single `1 × 2d` row shared by every candidate.
pub fn adaptive_fuse(g: &mut Graph, u_long: Var, u_short: Var, targets: Var, fusion: &FusionVars) -> Result<(Var, Var)> {
    let n = g.shape(targets).0;
    let short_rows = g.repeat_rows(u_short, n)?;
    let gate_in = g.concat_cols(&[u_long, short_rows, targets])?;
    let logit = g.matmul(gate_in, fusion.w_q)?;
    let logit = g.add_row(logit, fusion.b_q)?;
    let alpha = g.sigmoid(logit);
    let long_part = g.mul_col(alpha, u_long)?;
    let beta = g.one_minus(alpha);
    let short_part = g.mul_col(beta, short_rows)?;
    let fused = g.add(long_part, short_part)?;
    Ok((alpha, fused))
}

/// `ŷ = σ(relu([u^{LS}; v_T] W₁ + b₁) W₂ + b₂)`, an `n × 1` column.
pub fn predict_score(g: &mut Graph, fused: Var, targets: Var, mlp: &MlpVars) -> Result<Var> {
    let input = g.concat_cols(&[fused, targets])?;
    let hidden = g.matmul(input, mlp.w1)?;
    let hidden = g.add_row(hidden, mlp.b1)?;
    let hidden = g.relu(hidden);
    let logit = g.matmul(hidden, mlp.w2)?;
    let logit = g.add_row(logit, mlp.b2)?;
    Ok(g.sigmoid(logit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Matrix;

    #[test]
    fn dominant_category_cases() {
        assert_eq!(dominant_category(&[1, 1, 2]), Some(1));
        assert_eq!(dominant_category(&[1, 2]), Some(2));
        assert_eq!(dominant_category(&[1, 2, 1, 2]), Some(2));
        // last item's category (3) is not tied for the max: latest tied one wins
        assert_eq!(dominant_category(&[1, 2, 2, 1, 3]), Some(1));
        assert_eq!(dominant_category(&[]), None);
    }

    #[test]
    fn category_mask_ignores_padding() {
        let mask = category_mask(&[0, 0, 4, 5, 4], &[false, false, true, true, true]);
        assert_eq!(mask, vec![false, false, true, false, true]);
    }

    fn att(g: &mut Graph, d: usize, seed: u64) -> AttentionVars {
        let f = |r: usize, c: usize| (((r * 7 + c * 3) as u64 + seed) % 11) as f64 / 11.0 - 0.5;
        AttentionVars {
            w1: g.constant(Matrix::from_fn(d, d, f)),
            b1: g.constant(Matrix::from_fn(1, d, f)),
            w2: g.constant(Matrix::from_fn(d, 1, f)),
        }
    }

    #[test]
    fn identical_rows_encode_to_that_row() {
        let mut g = Graph::new();
        let a = att(&mut g, 3, 1);
        let row = [0.2, -0.4, 1.5];
        let rows = g.constant(Matrix::from_fn(4, 3, |_, c| row[c]));
        let out = attention_encode(&mut g, rows, vec![true; 4], 4, &a).unwrap();
        assert!(g.value(out).max_abs_diff(&Matrix::row_vector(row.to_vec())) < 1e-15);
    }

    #[test]
    fn single_real_row_is_returned() {
        let mut g = Graph::new();
        let a = att(&mut g, 3, 2);
        let rows = g.constant(Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64));
        let out = attention_encode(&mut g, rows, vec![false, true, false], 3, &a).unwrap();
        assert_eq!(g.value(out).data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn zero_scoring_vector_gives_masked_mean() {
        let mut g = Graph::new();
        let mut a = att(&mut g, 2, 3);
        a.w2 = g.constant(Matrix::zeros(2, 1));
        let rows = g.constant(Matrix::from_vec(3, 2, vec![100.0, 100.0, 1.0, 2.0, 3.0, 6.0]));
        let out = attention_encode(&mut g, rows, vec![false, true, true], 3, &a).unwrap();
        assert_eq!(g.value(out).data(), &[2.0, 4.0]);
    }

    #[test]
    fn zero_gru_stays_at_zero() {
        let mut g = Graph::new();
        let z = |g: &mut Graph, r, c| g.constant(Matrix::zeros(r, c));
        let gru = GruVars {
            w_z: z(&mut g, 2, 2),
            u_z: z(&mut g, 2, 2),
            b_z: z(&mut g, 1, 2),
            w_r: z(&mut g, 2, 2),
            u_r: z(&mut g, 2, 2),
            b_r: z(&mut g, 1, 2),
            w_n: z(&mut g, 2, 2),
            u_n: z(&mut g, 2, 2),
            b_n: z(&mut g, 1, 2),
        };
        let inputs = z(&mut g, 3, 2);
        let out = gru_forward(&mut g, inputs, &gru).unwrap();
        assert_eq!(g.value(out), &Matrix::zeros(3, 2));
    }

    #[test]
    fn pooling_edge_cases() {
        let mut g = Graph::new();
        let targets = g.constant(Matrix::from_fn(2, 2, |r, c| (r + c) as f64 - 0.3));
        let w = g.constant(Matrix::from_fn(2, 2, |r, c| (r as f64 - c as f64) * 0.7 + 0.1));

        let one = g.constant(Matrix::row_vector(vec![0.5, -2.0]));
        let out = attention_pool(&mut g, one, targets, w).unwrap();
        for r in 0..2 {
            assert_eq!(g.value(out).row(r), &[0.5, -2.0]);
        }

        let reps = g.constant(Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 8.0]));
        let zero = g.constant(Matrix::zeros(2, 2));
        let out = attention_pool(&mut g, reps, targets, zero).unwrap();
        assert_eq!(g.value(out).row(0), &[2.0, 5.0]);

        let same = g.constant(Matrix::from_vec(3, 2, vec![0.25, -1.0, 0.25, -1.0, 0.25, -1.0]));
        let out = attention_pool(&mut g, same, targets, w).unwrap();
        assert!(g.value(out).max_abs_diff(&Matrix::from_vec(2, 2, vec![0.25, -1.0, 0.25, -1.0])) < 1e-15);
    }

    #[test]
    fn fusion_limits() {
        let mut g = Graph::new();
        let d = 2;
        let u_long = g.constant(Matrix::from_fn(1, 2 * d, |_, c| c as f64));
        let u_short = g.constant(Matrix::from_fn(1, 2 * d, |_, c| 10.0 - c as f64));
        let target = g.constant(Matrix::row_vector(vec![0.3, 0.9]));

        let zero = FusionVars { w_q: g.constant(Matrix::zeros(5 * d, 1)), b_q: g.constant(Matrix::scalar(0.0)) };
        let (alpha, fused) = adaptive_fuse(&mut g, u_long, u_short, target, &zero).unwrap();
        assert_eq!(g.value(alpha).item(), 0.5);
        assert_eq!(g.value(fused).data(), &[5.0, 5.0, 5.0, 5.0]);

        let saturated = FusionVars { w_q: zero.w_q, b_q: g.constant(Matrix::scalar(50.0)) };
        let (_, fused) = adaptive_fuse(&mut g, u_long, u_short, target, &saturated).unwrap();
        assert!(g.value(fused).max_abs_diff(g.value(u_long)) < 1e-15);
    }

    #[test]
    fn zero_mlp_scores_one_half() {
        let mut g = Graph::new();
        let d = 3;
        let mlp = MlpVars {
            w1: g.constant(Matrix::zeros(3 * d, d)),
            b1: g.constant(Matrix::zeros(1, d)),
            w2: g.constant(Matrix::zeros(d, 1)),
            b2: g.constant(Matrix::zeros(1, 1)),
        };
        let fused = g.constant(Matrix::from_fn(4, 2 * d, |r, c| (r * c) as f64 - 3.0));
        let targets = g.constant(Matrix::from_fn(4, d, |r, c| (r + c) as f64));
        let y = predict_score(&mut g, fused, targets, &mlp).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.5));
    }
}
