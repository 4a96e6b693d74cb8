//! Ranking metrics over scored candidate lists.
//!
//! Every task lists its positive first. AUC counts tied positive/negative
//! pairs as one half; the rank of the positive is pessimistic, so a negative
//! with an equal score is ranked above it.

use std::collections::BTreeMap;

/// Cutoffs reported for NDCG and HIT.
pub const CUTOFFS: [usize; 3] = [2, 5, 10];

/// Scores of one task; index 0 is the positive.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTask {
    pub user: u32,
    pub scores: Vec<f64>,
}

impl ScoredTask {
    pub fn labels(&self) -> Vec<bool> {
        (0..self.scores.len()).map(|i| i == 0).collect()
    }
}

/// Area under the ROC curve via the rank-sum statistic, ties at one half.
///
/// `None` when either class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// AUC of each user's pooled candidates with the candidate count as weight.
/// Users whose candidates are all one class are left out.
pub fn per_user_auc(tasks: &[ScoredTask]) -> Vec<(f64, f64)> {
    let mut by_user: BTreeMap<u32, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    for t in tasks {
        let entry = by_user.entry(t.user).or_default();
        entry.0.extend_from_slice(&t.scores);
        entry.1.extend(t.labels());
    }
    by_user
        .values()
        .filter_map(|(scores, labels)| auc(scores, labels).map(|a| (a, scores.len() as f64)))
        .collect()
}

/// Weighted mean of `(auc, weight)` pairs; `None` for an empty set.
pub fn gauc(per_user: &[(f64, f64)]) -> Option<f64> {
    let den: f64 = per_user.iter().map(|&(_, w)| w).sum();
    (den > 0.0).then(|| per_user.iter().map(|&(a, w)| a * w).sum::<f64>() / den)
}

/// 1-based rank of `scores[0]`; ties rank it below the others.
pub fn rank_of_positive(scores: &[f64]) -> usize {
    let p = scores[0];
    1 + scores[1..].iter().filter(|&&s| s >= p).count()
}

pub fn reciprocal_rank(rank: usize) -> f64 {
    1.0 / rank as f64
}

pub fn ndcg_at(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

pub fn hit_at(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub tasks: usize,
    /// Tasks with fewer than two candidates, left out of every metric.
    pub skipped: usize,
    pub auc: f64,
    pub gauc: f64,
    pub mrr: f64,
    /// At each of [`CUTOFFS`].
    pub ndcg: [f64; 3],
    pub hit: [f64; 3],
}

impl MetricReport {
    pub fn compute(tasks: &[ScoredTask]) -> MetricReport {
        let skipped = tasks.iter().filter(|t| t.scores.len() < 2).count();
        let kept: Vec<ScoredTask> = tasks.iter().filter(|t| t.scores.len() >= 2).cloned().collect();
        let tasks = kept.as_slice();
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let (mut mrr, mut ndcg, mut hit) = (0.0, [0.0; 3], [0.0; 3]);
        for t in tasks {
            scores.extend_from_slice(&t.scores);
            labels.extend(t.labels());
            let r = rank_of_positive(&t.scores);
            mrr += reciprocal_rank(r);
            for (i, &k) in CUTOFFS.iter().enumerate() {
                ndcg[i] += ndcg_at(r, k);
                hit[i] += hit_at(r, k);
            }
        }
        let n = tasks.len().max(1) as f64;
        MetricReport {
            tasks: tasks.len(),
            skipped,
            auc: auc(&scores, &labels).unwrap_or(f64::NAN),
            gauc: gauc(&per_user_auc(tasks)).unwrap_or(f64::NAN),
            mrr: mrr / n,
            ndcg: ndcg.map(|v| v / n),
            hit: hit.map(|v| v / n),
        }
    }

    pub fn csv_header() -> Vec<String> {
        let mut h: Vec<String> = ["tasks", "skipped", "auc", "gauc", "mrr"].map(String::from).to_vec();
        h.extend(CUTOFFS.iter().map(|k| format!("ndcg@{k}")));
        h.extend(CUTOFFS.iter().map(|k| format!("hit@{k}")));
        h
    }

    pub fn csv_row(&self) -> Vec<String> {
        let mut r = vec![self.tasks.to_string(), self.skipped.to_string(), fmt(self.auc), fmt(self.gauc), fmt(self.mrr)];
        r.extend(self.ndcg.iter().map(|&v| fmt(v)));
        r.extend(self.hit.iter().map(|&v| fmt(v)));
        r
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_reversed_auc() {
        assert_eq!(auc(&[0.9, 0.1, 0.2], &[true, false, false]), Some(1.0));
        assert_eq!(auc(&[0.0, 0.1, 0.2], &[true, false, false]), Some(0.0));
        assert_eq!(auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(auc(&[0.5], &[true]), None);
    }

    #[test]
    fn tied_positive_ranks_last() {
        assert_eq!(rank_of_positive(&[0.5, 0.5, 0.5]), 3);
        assert_eq!(rank_of_positive(&[0.6, 0.5, 0.5]), 1);
    }

    #[test]
    fn ndcg_at_rank_two() {
        assert!((ndcg_at(2, 2) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(ndcg_at(3, 2), 0.0);
        assert_eq!(hit_at(5, 5), 1.0);
    }

    #[test]
    fn gauc_weights_by_candidates() {
        let tasks = vec![
            ScoredTask { user: 1, scores: vec![1.0, 0.0] },
            ScoredTask { user: 2, scores: vec![0.0, 1.0, 2.0, 3.0] },
        ];
        assert!((gauc(&per_user_auc(&tasks)).unwrap() - (2.0 * 1.0 + 4.0 * 0.0) / 6.0).abs() < 1e-15);
        assert_eq!(gauc(&[(1.0, 2.0), (0.5, 2.0)]), Some(0.75));
        assert_eq!(gauc(&[]), None);
    }

    #[test]
    fn report_csv_columns_line_up() {
        let r = MetricReport::compute(&[ScoredTask { user: 0, scores: vec![0.9, 0.1] }]);
        assert_eq!(MetricReport::csv_header().len(), r.csv_row().len());
        assert_eq!(r.mrr, 1.0);
    }
}
