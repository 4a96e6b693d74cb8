//! Interaction logs with planted long- and short-term interest.
//!
//! Every user has a persistent long-term category. A short-term category
//! starts there and, at the start of every session, switches to a different
//! uniformly drawn category with probability `drift_prob`. Session items come
//! from the short-term category, except that with probability `noise_prob`
//! an item is drawn from the long-term category instead.
//!
//! After the last session comes one held-out positive from the final session's
//! short-term category, close enough in time to belong to that session. All
//! timelines are aligned so that every user's held-out positive falls on
//! [`SyntheticDataset::end`] and the last regular interaction on
//! `end - holdout gap`; a global temporal split then puts exactly one
//! validation target (the last regular item) and one test target per user.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::records::{Behavior, InteractionRecord};
use super::DataError;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub sessions_per_user: usize,
    pub session_len: usize,
    pub drift_prob: f64,
    pub noise_prob: f64,
    /// Planted inter-session gap in seconds. Gaps between sessions fall in
    /// `[gap, 3·gap)`; gaps inside a session fall in `[gap/50, 4·gap/5)`.
    pub session_gap: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 2000,
            items: 500,
            categories: 20,
            sessions_per_user: 6,
            session_len: 8,
            drift_prob: 0.5,
            noise_prob: 0.2,
            session_gap: 90 * 60,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::Config(msg));
        if self.categories < 2 || self.items < self.categories {
            return bad(format!("need items >= categories >= 2 (items={}, categories={})", self.items, self.categories));
        }
        if self.users == 0 || self.sessions_per_user == 0 || self.session_len == 0 {
            return bad("users, sessions_per_user and session_len must be positive".into());
        }
        for (name, p) in [("drift_prob", self.drift_prob), ("noise_prob", self.noise_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name}={p} is not a probability"));
            }
        }
        if self.session_gap < 50 {
            return bad(format!("session_gap={} is too small to plant intra-session gaps", self.session_gap));
        }
        Ok(())
    }

    fn intra_gap<R: Rng>(&self, rng: &mut R) -> u64 {
        rng.gen_range(self.session_gap / 50..self.session_gap * 4 / 5)
    }

    fn inter_gap<R: Rng>(&self, rng: &mut R) -> u64 {
        rng.gen_range(self.session_gap..3 * self.session_gap)
    }

    /// Gap between the last regular item and the held-out positive.
    fn holdout_gap(&self) -> u64 {
        self.session_gap * 3 / 10
    }
}

/// Planted ground truth for one user.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserTruth {
    pub long_term: u32,
    /// Short-term category of each session, oldest first.
    pub short_term: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub config: SyntheticConfig,
    pub records: Vec<InteractionRecord>,
    pub truth: Vec<UserTruth>,
    /// Timestamp of every user's held-out positive.
    pub end: u64,
    /// Last timestamp that belongs to the training split.
    pub train_end: u64,
    /// Last timestamp of the validation split.
    pub val_end: u64,
}

/// Nov 30 2017, 00:00 UTC.
const END: u64 = 1_512_000_000;

/// Category of synthetic item `i` (0-based): items are dealt round-robin.
pub fn synthetic_category(item: usize, categories: usize) -> usize {
    item % categories
}

pub fn item_key(item: usize) -> String {
    format!("i{item}")
}

pub fn category_key(category: usize) -> String {
    format!("c{category}")
}

fn draw_item<R: Rng>(cfg: &SyntheticConfig, category: usize, rng: &mut R) -> usize {
    // items of category c are c, c + C, c + 2C, ... below `items`
    let count = (cfg.items - category).div_ceil(cfg.categories);
    category + cfg.categories * rng.gen_range(0..count)
}

pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let behaviors = [Behavior::Click, Behavior::Collect, Behavior::Cart, Behavior::Purchase];
    let mut records = Vec::with_capacity(cfg.users * (cfg.sessions_per_user * cfg.session_len + 1));
    let mut truth = Vec::with_capacity(cfg.users);

    for user in 0..cfg.users {
        let long_term = rng.gen_range(0..cfg.categories);
        let mut short = long_term;
        let mut shorts = Vec::with_capacity(cfg.sessions_per_user);
        // (item, offset from the user's first interaction)
        let mut events: Vec<(usize, u64)> = Vec::new();
        let mut t = 0u64;
        for s in 0..cfg.sessions_per_user {
            if rng.gen_bool(cfg.drift_prob) {
                let other = rng.gen_range(0..cfg.categories - 1);
                short = if other >= short { other + 1 } else { other };
            }
            shorts.push(short as u32);
            if s > 0 {
                t += cfg.inter_gap(&mut rng);
            }
            for i in 0..cfg.session_len {
                if i > 0 {
                    t += cfg.intra_gap(&mut rng);
                }
                let cat = if rng.gen_bool(cfg.noise_prob) { long_term } else { short };
                events.push((draw_item(cfg, cat, &mut rng), t));
            }
        }
        t += cfg.holdout_gap();
        events.push((draw_item(cfg, short, &mut rng), t));

        let shift = END - t;
        let uid = format!("u{user}");
        for (item, offset) in events {
            records.push(InteractionRecord {
                user_id: uid.clone(),
                item_id: item_key(item),
                category_id: category_key(synthetic_category(item, cfg.categories)),
                timestamp: offset + shift,
                behavior: behaviors[rng.gen_range(0..behaviors.len())],
            });
        }
        truth.push(UserTruth { long_term: long_term as u32, short_term: shorts });
    }

    let val_time = END - cfg.holdout_gap();
    Ok(SyntheticDataset {
        config: cfg.clone(),
        records,
        truth,
        end: END,
        train_end: val_time - 1,
        val_end: END - 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::session::sessionize;

    fn small() -> SyntheticConfig {
        SyntheticConfig { users: 50, items: 60, categories: 6, ..Default::default() }
    }

    fn category_of(r: &InteractionRecord) -> String {
        r.category_id.clone()
    }

    #[test]
    fn zero_drift_keeps_one_category() {
        let cfg = SyntheticConfig { drift_prob: 0.0, ..small() };
        let ds = generate_synthetic(&cfg, 1).unwrap();
        for t in &ds.truth {
            assert!(t.short_term.iter().all(|&c| c == t.long_term));
        }
        // with no drift every item, noise or not, is from the long-term category
        for (u, t) in ds.truth.iter().enumerate() {
            let key = category_key(t.long_term as usize);
            let uid = format!("u{u}");
            assert!(ds.records.iter().filter(|r| r.user_id == uid).all(|r| category_of(r) == key));
        }
    }

    #[test]
    fn zero_noise_makes_sessions_pure() {
        let cfg = SyntheticConfig { noise_prob: 0.0, ..small() };
        let ds = generate_synthetic(&cfg, 2).unwrap();
        let per_user = cfg.sessions_per_user * cfg.session_len + 1;
        for (u, chunk) in ds.records.chunks(per_user).enumerate() {
            let sessions = sessionize(chunk, cfg.session_gap, |r| r.timestamp);
            assert_eq!(sessions.len(), cfg.sessions_per_user);
            for (s, sess) in sessions.iter().enumerate() {
                let want = category_key(ds.truth[u].short_term[s] as usize);
                assert!(sess.iter().all(|r| category_of(r) == want));
            }
        }
    }

    #[test]
    fn planted_gaps_segment_exactly_at_the_session_gap() {
        let cfg = small();
        let ds = generate_synthetic(&cfg, 3).unwrap();
        let per_user = cfg.sessions_per_user * cfg.session_len + 1;
        for chunk in ds.records.chunks(per_user) {
            let sessions = sessionize(chunk, cfg.session_gap, |r| r.timestamp);
            let lens: Vec<_> = sessions.iter().map(|s| s.len()).collect();
            let mut want = vec![cfg.session_len; cfg.sessions_per_user];
            *want.last_mut().unwrap() += 1;
            assert_eq!(lens, want);
        }
    }

    #[test]
    fn holdouts_align_with_split_boundaries() {
        let ds = generate_synthetic(&small(), 4).unwrap();
        let per_user = ds.config.sessions_per_user * ds.config.session_len + 1;
        for chunk in ds.records.chunks(per_user) {
            let n = chunk.len();
            assert_eq!(chunk[n - 1].timestamp, ds.end);
            assert!(chunk[n - 2].timestamp > ds.train_end && chunk[n - 2].timestamp <= ds.val_end);
            assert!(chunk[..n - 2].iter().all(|r| r.timestamp <= ds.train_end));
        }
    }

    #[test]
    fn same_seed_same_log() {
        let a = generate_synthetic(&small(), 11).unwrap();
        let b = generate_synthetic(&small(), 11).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        assert!(generate_synthetic(&SyntheticConfig { categories: 1, ..small() }, 0).is_err());
        assert!(generate_synthetic(&SyntheticConfig { items: 3, categories: 4, ..small() }, 0).is_err());
    }
}
