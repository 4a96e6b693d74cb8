//! Time-gap session segmentation and fixed-shape model inputs.

use super::vocab::{Event, PAD};
use super::DataError;

/// Splits a time-sorted sequence wherever the gap to the previous element is `>= omega`.
///
/// Consecutive elements share a session iff `t[i+1] - t[i] < omega`. The returned
/// slices concatenate back to `seq`.
///
/// # Panics
///
/// If `seq` is not sorted by timestamp.
pub fn sessionize<T>(seq: &[T], omega: u64, timestamp: impl Fn(&T) -> u64) -> Vec<&[T]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..seq.len() {
        let (prev, cur) = (timestamp(&seq[i - 1]), timestamp(&seq[i]));
        assert!(cur >= prev, "sessionize needs a time-sorted sequence ({prev} then {cur})");
        if cur - prev >= omega {
            out.push(&seq[start..i]);
            start = i;
        }
    }
    if !seq.is_empty() {
        out.push(&seq[start..]);
    }
    out
}

pub fn sessionize_events(seq: &[Event], omega: u64) -> Vec<&[Event]> {
    sessionize(seq, omega, |e| e.timestamp)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    /// Max items per session.
    pub l: usize,
    /// Max sessions kept.
    pub k_max: usize,
    /// Max items kept in total.
    pub s_max: usize,
}

impl Shape {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.l == 0 || self.k_max == 0 {
            return Err(DataError::Config(format!("l and k_max must be positive (l={}, k_max={})", self.l, self.k_max)));
        }
        if self.l > self.s_max {
            return Err(DataError::Config(format!("l={} exceeds s_max={}", self.l, self.s_max)));
        }
        Ok(())
    }
}

/// A user's context as `k` front-padded sessions of length `l`, plus the target.
///
/// Session `k` (the last) is the current session; the ones before it are history.
/// Storage is flat and row-major: position `i` of session `n` is at `n * l + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionizedHistory {
    pub l: usize,
    pub items: Vec<u32>,
    pub categories: Vec<u32>,
    pub mask: Vec<bool>,
    pub target_item: u32,
    pub target_category: u32,
}

impl SessionizedHistory {
    /// Number of sessions `k`.
    pub fn num_sessions(&self) -> usize {
        self.items.len() / self.l
    }

    pub fn session_items(&self, n: usize) -> &[u32] {
        &self.items[n * self.l..(n + 1) * self.l]
    }

    pub fn session_categories(&self, n: usize) -> &[u32] {
        &self.categories[n * self.l..(n + 1) * self.l]
    }

    pub fn session_mask(&self, n: usize) -> &[bool] {
        &self.mask[n * self.l..(n + 1) * self.l]
    }

    /// Index of the current session.
    pub fn current(&self) -> usize {
        self.num_sessions() - 1
    }

    pub fn has_history(&self) -> bool {
        self.num_sessions() >= 2
    }

    /// Real (item, category) pairs of session `n`, oldest first.
    pub fn session_pairs(&self, n: usize) -> Vec<(u32, u32)> {
        let range = n * self.l..(n + 1) * self.l;
        range.filter(|&i| self.mask[i]).map(|i| (self.items[i], self.categories[i])).collect()
    }

    pub fn real_items(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Keeps the `k_max` most recent sessions and the `l` most recent items of each,
/// then drops the oldest sessions until at most `s_max` items remain. Shorter
/// sessions are padded at the front.
pub fn pad_truncate(
    sessions: &[&[Event]],
    shape: Shape,
    target_item: u32,
    target_category: u32,
) -> Result<SessionizedHistory, DataError> {
    shape.validate()?;
    if sessions.is_empty() || sessions.last().is_some_and(|s| s.is_empty()) {
        return Err(DataError::EmptyContext);
    }
    let l = shape.l;
    let mut kept: Vec<&[Event]> = Vec::new();
    let mut total = 0;
    for s in sessions.iter().rev().take(shape.k_max) {
        let tail = &s[s.len().saturating_sub(l)..];
        if total + tail.len() > shape.s_max {
            break;
        }
        total += tail.len();
        kept.push(tail);
    }
    kept.reverse();

    let k = kept.len();
    let mut items = vec![PAD; k * l];
    let mut categories = vec![PAD; k * l];
    let mut mask = vec![false; k * l];
    for (n, s) in kept.iter().enumerate() {
        let off = n * l + (l - s.len());
        for (i, e) in s.iter().enumerate() {
            items[off + i] = e.item;
            categories[off + i] = e.category;
            mask[off + i] = true;
        }
    }
    Ok(SessionizedHistory { l, items, categories, mask, target_item, target_category })
}
