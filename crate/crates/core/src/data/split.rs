use rand::Rng;

use super::sampling::sample_negatives;
use super::session::{pad_truncate, sessionize_events, SessionizedHistory, Shape};
use super::vocab::{Event, Vocab};
use super::DataError;

/// One positive target with its sampled negatives and the shared context.
#[derive(Clone, Debug, PartialEq)]
pub struct RankingTask {
    pub user: u32,
    /// Timestamp of the positive interaction.
    pub time: u64,
    /// Context; its target is the positive item.
    pub history: SessionizedHistory,
    pub negatives: Vec<u32>,
}

impl RankingTask {
    pub fn positive(&self) -> u32 {
        self.history.target_item
    }

    /// Positive first, then the negatives.
    pub fn candidates(&self) -> Vec<u32> {
        let mut c = Vec::with_capacity(1 + self.negatives.len());
        c.push(self.history.target_item);
        c.extend_from_slice(&self.negatives);
        c
    }

    pub fn labels(&self) -> Vec<f64> {
        let mut y = vec![0.0; 1 + self.negatives.len()];
        y[0] = 1.0;
        y
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitConfig {
    pub omega: u64,
    pub shape: Shape,
    /// Targets at or before this timestamp train.
    pub train_end: u64,
    /// Targets in `(train_end, val_end]` validate; later ones test.
    pub val_end: u64,
    /// Candidates per training task (positive included).
    pub train_candidates: usize,
    /// Candidates per evaluation task (positive included).
    pub eval_candidates: usize,
}

#[derive(Clone, Debug, Default)]
pub struct SplitTasks {
    pub train: Vec<RankingTask>,
    pub val: Vec<RankingTask>,
    pub test: Vec<RankingTask>,
    /// Targets with no strictly earlier interaction.
    pub skipped: usize,
}

/// Builds the context for a target at time `time`: every strictly earlier event.
pub fn context_before(seq: &[Event], time: u64) -> &[Event] {
    let end = seq.partition_point(|e| e.timestamp < time);
    &seq[..end]
}

pub fn build_history(
    seq: &[Event],
    target: Event,
    omega: u64,
    shape: Shape,
) -> Result<Option<SessionizedHistory>, DataError> {
    let ctx = context_before(seq, target.timestamp);
    if ctx.is_empty() {
        return Ok(None);
    }
    let sessions = sessionize_events(ctx, omega);
    pad_truncate(&sessions, shape, target.item, target.category).map(Some)
}

/// Every interaction becomes a target; the split is decided by its timestamp.
///
/// Users are visited in index order, so the output order depends only on the
/// inputs and `rng`.
pub fn temporal_split<R: Rng>(
    sequences: &[Vec<Event>],
    vocab: &Vocab,
    cfg: &SplitConfig,
    rng: &mut R,
) -> Result<SplitTasks, DataError> {
    if cfg.train_end >= cfg.val_end {
        return Err(DataError::Config(format!(
            "train_end ({}) must precede val_end ({})",
            cfg.train_end, cfg.val_end
        )));
    }
    if cfg.train_candidates < 2 || cfg.eval_candidates < 2 {
        return Err(DataError::Config("tasks need at least two candidates".into()));
    }
    cfg.shape.validate()?;
    let mut out = SplitTasks::default();
    for (user, seq) in sequences.iter().enumerate() {
        for &target in seq {
            let Some(history) = build_history(seq, target, cfg.omega, cfg.shape)? else {
                out.skipped += 1;
                continue;
            };
            let (bucket, n) = if target.timestamp <= cfg.train_end {
                (&mut out.train, cfg.train_candidates)
            } else if target.timestamp <= cfg.val_end {
                (&mut out.val, cfg.eval_candidates)
            } else {
                (&mut out.test, cfg.eval_candidates)
            };
            let negatives = sample_negatives(target.item, n - 1, vocab.num_items(), rng)?;
            bucket.push(RankingTask { user: user as u32, time: target.timestamp, history, negatives });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ev(item: u32, t: u64) -> Event {
        Event { item, category: 1, timestamp: t }
    }

    fn cfg(train_end: u64, val_end: u64) -> SplitConfig {
        SplitConfig {
            omega: 100,
            shape: Shape { l: 4, k_max: 10, s_max: 50 },
            train_end,
            val_end,
            train_candidates: 3,
            eval_candidates: 5,
        }
    }

    fn vocab_with(n: usize) -> Vocab {
        use crate::data::records::{Behavior, InteractionRecord};
        let recs: Vec<_> = (1..=n)
            .map(|i| InteractionRecord {
                user_id: "u".into(),
                item_id: format!("i{i}"),
                category_id: "c".into(),
                timestamp: i as u64,
                behavior: Behavior::Click,
            })
            .collect();
        Vocab::build(&recs)
    }

    #[test]
    fn ten_interactions_split_eight_one_one() {
        let seq: Vec<_> = (0..10).map(|i| ev(i + 1, i as u64 * 10)).collect();
        let vocab = vocab_with(12);
        let tasks = temporal_split(&[seq], &vocab, &cfg(70, 80), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        // the first interaction has no context
        assert_eq!(tasks.skipped, 1);
        assert_eq!((tasks.train.len(), tasks.val.len(), tasks.test.len()), (7, 1, 1));
        for t in tasks.train.iter().chain(&tasks.val).chain(&tasks.test) {
            assert!(t.history.items.iter().all(|&i| i == 0 || (i as u64 - 1) * 10 < t.time));
        }
        assert_eq!(tasks.test[0].negatives.len(), 4);
        assert_eq!(tasks.train[0].negatives.len(), 2);
    }

    #[test]
    fn target_at_train_end_trains() {
        let seq = vec![ev(1, 0), ev(2, 50)];
        let tasks = temporal_split(&[seq], &vocab_with(5), &cfg(50, 60), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(tasks.train.len(), 1);
        assert_eq!(tasks.train[0].time, 50);
    }

    #[test]
    fn same_timestamp_interactions_are_not_context() {
        let seq = vec![ev(1, 10), ev(2, 10), ev(3, 20)];
        assert_eq!(context_before(&seq, 10).len(), 0);
        assert_eq!(context_before(&seq, 20).len(), 2);
    }

    #[test]
    fn inverted_boundaries_are_rejected() {
        let err = temporal_split(&[], &vocab_with(5), &cfg(10, 10), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(DataError::Config(_))));
    }
}
