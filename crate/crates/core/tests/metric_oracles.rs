//! Metrics against brute-force re-derivations.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slsrec::metrics::{auc, gauc, hit_at, ndcg_at, per_user_auc, rank_of_positive, MetricReport, ScoredTask, CUTOFFS};

/// Fraction of (positive, negative) pairs ordered correctly, ties at one half.
fn pairwise_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Position of the positive after a full sort, descending, with the positive
/// placed after every candidate of equal score.
fn sorted_rank(scores: &[f64]) -> usize {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then((a == 0).cmp(&(b == 0))));
    idx.iter().position(|&i| i == 0).unwrap() + 1
}

/// Scores drawn from a small grid so ties are common.
fn task_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.gen_bool(0.3) { rng.gen_range(0..4) as f64 / 4.0 } else { rng.gen::<f64>() }).collect()
}

fn random_tasks(seed: u64, count: usize) -> Vec<ScoredTask> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..30);
            ScoredTask { user: rng.gen_range(0..40), scores: task_scores(&mut rng, n) }
        })
        .collect()
}

fn oracle_report(tasks: &[ScoredTask]) -> MetricReport {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    let ranks: Vec<usize> = tasks.iter().map(|t| sorted_rank(&t.scores)).collect();
    let mut users: Vec<u32> = tasks.iter().map(|t| t.user).collect();
    users.sort_unstable();
    users.dedup();
    let (mut num, mut den) = (0.0, 0.0);
    for u in users {
        let (mut s, mut y) = (Vec::new(), Vec::new());
        for t in tasks.iter().filter(|t| t.user == u) {
            s.extend_from_slice(&t.scores);
            y.extend((0..t.scores.len()).map(|i| i == 0));
        }
        if let Some(a) = pairwise_auc(&s, &y) {
            num += a * s.len() as f64;
            den += s.len() as f64;
        }
    }
    for t in tasks {
        scores.extend_from_slice(&t.scores);
        labels.extend((0..t.scores.len()).map(|i| i == 0));
    }
    let n = tasks.len() as f64;
    let mean = |f: &dyn Fn(usize) -> f64| ranks.iter().map(|&r| f(r)).sum::<f64>() / n;
    MetricReport {
        tasks: tasks.len(),
        skipped: 0,
        auc: pairwise_auc(&scores, &labels).unwrap(),
        gauc: num / den,
        mrr: mean(&|r| 1.0 / r as f64),
        ndcg: CUTOFFS.map(|k| mean(&|r| if r <= k { 1.0 / (r as f64 + 1.0).log2() } else { 0.0 })),
        hit: CUTOFFS.map(|k| mean(&|r| if r <= k { 1.0 } else { 0.0 })),
    }
}

fn assert_close(a: &MetricReport, b: &MetricReport, tol: f64) {
    let pairs = [(a.auc, b.auc), (a.gauc, b.gauc), (a.mrr, b.mrr)]
        .into_iter()
        .chain(a.ndcg.iter().copied().zip(b.ndcg))
        .chain(a.hit.iter().copied().zip(b.hit));
    for (x, y) in pairs {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
    assert_eq!(a.tasks, b.tasks);
}

#[test]
fn report_matches_brute_force_on_600_tasks() {
    for seed in 0..5 {
        let tasks = random_tasks(seed, 600);
        assert_close(&MetricReport::compute(&tasks), &oracle_report(&tasks), 1e-12);
    }
}

#[test]
fn rank_statistic_auc_matches_pairwise_on_1000_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let scores = task_scores(&mut rng, 1000);
        let labels: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.3)).collect();
        let (a, b) = (auc(&scores, &labels).unwrap(), pairwise_auc(&scores, &labels).unwrap());
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn strictly_increasing_transforms_leave_metrics_unchanged() {
    let tasks = random_tasks(3, 500);
    let base = MetricReport::compute(&tasks);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let (a, b, c) = (rng.gen_range(0.1..5.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.1..3.0));
        let f = |x: f64| match i % 4 {
            0 => a * x + b,
            1 => (c * x).exp(),
            2 => 1.0 / (1.0 + (-(a * x + b)).exp()),
            _ => x * x * x + a * x,
        };
        let moved: Vec<ScoredTask> =
            tasks.iter().map(|t| ScoredTask { user: t.user, scores: t.scores.iter().map(|&x| f(x)).collect() }).collect();
        // the transforms above are injective on [0, 1], so ties are preserved exactly
        assert_eq!(MetricReport::compute(&moved), base, "transform {i}");
    }
}

#[test]
fn worked_examples() {
    assert_eq!(auc(&[0.9, 0.1], &[true, false]), Some(1.0));
    assert_eq!(auc(&[0.3; 6], &[true, false, true, false, false, false]), Some(0.5));
    assert_eq!(gauc(&[(1.0, 2.0), (0.5, 2.0)]), Some(0.75));
    assert_eq!(rank_of_positive(&[0.9, 0.9, 0.1]), 2);
    let ranks = [1usize, 2, 4];
    let mrr: f64 = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / 3.0;
    assert!((mrr - 0.5833333333333334).abs() < 1e-15);
    assert!((ndcg_at(2, 2) - 0.6309297535714574).abs() < 1e-15);
    assert_eq!((ndcg_at(3, 2), hit_at(3, 2)), (0.0, 0.0));
    let one_user = vec![ScoredTask { user: 7, scores: vec![0.2, 0.4, 0.1] }];
    assert_eq!(gauc(&per_user_auc(&one_user)), auc(&[0.2, 0.4, 0.1], &[true, false, false]));
}

#[test]
fn perfect_scorer_gets_perfect_metrics() {
    let tasks: Vec<ScoredTask> =
        (0..50).map(|u| ScoredTask { user: u, scores: (0..50).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect() }).collect();
    let r = MetricReport::compute(&tasks);
    assert_eq!((r.auc, r.gauc, r.mrr), (1.0, 1.0, 1.0));
    assert_eq!(r.hit, [1.0; 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn rank_matches_sort_oracle(scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0]), 2..40)) {
        prop_assert_eq!(rank_of_positive(&scores), sorted_rank(&scores));
    }

    #[test]
    fn cutoff_metrics_grow_with_k(seed in 0u64..10_000) {
        let tasks = random_tasks(seed, 20);
        let r = MetricReport::compute(&tasks);
        prop_assert!(r.hit.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(r.ndcg.windows(2).all(|w| w[0] <= w[1]));
        for v in [r.auc, r.gauc, r.mrr].into_iter().chain(r.hit).chain(r.ndcg) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        // every positive is within its own candidate list
        let n = tasks.iter().map(|t| t.scores.len()).max().unwrap();
        prop_assert!(tasks.iter().all(|t| hit_at(rank_of_positive(&t.scores), n) == 1.0));
    }
}
