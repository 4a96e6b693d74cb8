use proptest::prelude::*;
use slsrec::data::{pad_truncate, sessionize_events, Event, Shape, PAD};

/// Time-sorted events with gaps that sometimes sit exactly on small round values.
fn sequence() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..400, 1u32..50), 0..60).prop_map(|steps| {
        let mut t = 0;
        steps
            .into_iter()
            .map(|(gap, item)| {
                t += if gap % 7 == 0 { (gap / 7) * 10 } else { gap };
                Event { item, category: item % 5 + 1, timestamp: t }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1500))]

    #[test]
    fn flatten_reproduces_input(seq in sequence(), omega in 1u64..500) {
        let sessions = sessionize_events(&seq, omega);
        let flat: Vec<Event> = sessions.iter().flat_map(|s| s.iter().copied()).collect();
        prop_assert_eq!(&flat, &seq);
        prop_assert!(sessions.iter().all(|s| !s.is_empty()));
    }

    #[test]
    fn gaps_respect_omega(seq in sequence(), omega in 1u64..500) {
        let sessions = sessionize_events(&seq, omega);
        for s in &sessions {
            for w in s.windows(2) {
                prop_assert!(w[1].timestamp - w[0].timestamp < omega);
            }
        }
        for pair in sessions.windows(2) {
            let gap = pair[1][0].timestamp - pair[0].last().unwrap().timestamp;
            prop_assert!(gap >= omega);
        }
    }

    #[test]
    fn larger_omega_never_adds_sessions(seq in sequence(), a in 1u64..500, b in 1u64..500) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(sessionize_events(&seq, lo).len() >= sessionize_events(&seq, hi).len());
    }

    #[test]
    fn padding_keeps_the_most_recent_items(
        seq in sequence().prop_filter("non-empty", |s| !s.is_empty()),
        omega in 1u64..500,
        l in 1usize..8,
        k_max in 1usize..6,
        extra in 0usize..30,
    ) {
        let shape = Shape { l, k_max, s_max: l + extra };
        let sessions = sessionize_events(&seq, omega);
        let h = pad_truncate(&sessions, shape, 99, 1).unwrap();
        let k = h.num_sessions();
        prop_assert!(k >= 1 && k <= k_max);
        prop_assert!(h.real_items() <= shape.s_max);
        prop_assert_eq!(h.items.len(), k * l);
        // kept sessions are the k most recent ones, each cut to its last l items
        for n in 0..k {
            let source = sessions[sessions.len() - k + n];
            let tail = &source[source.len().saturating_sub(l)..];
            let want: Vec<(u32, u32)> = tail.iter().map(|e| (e.item, e.category)).collect();
            prop_assert_eq!(h.session_pairs(n), want);
            // front padding: real positions form a suffix
            let mask = h.session_mask(n);
            let first = mask.iter().position(|&m| m).unwrap();
            prop_assert!(mask[first..].iter().all(|&m| m));
            prop_assert!(h.session_items(n)[..first].iter().all(|&i| i == PAD));
        }
        // one more session would have broken a limit
        if k < sessions.len() && k < k_max {
            let next = sessions[sessions.len() - k - 1];
            prop_assert!(h.real_items() + next.len().min(l) > shape.s_max);
        }
    }
}
