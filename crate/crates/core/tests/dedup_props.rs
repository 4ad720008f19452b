use proptest::prelude::*;
use qagen::dedup::{bigram_overlap_with, dedup_against, dedup_within, BigramSet, DedupConfig, OverlapMode};

/// O(n^2) reference implementation of the greedy keep-first scan.
fn brute_force(qs: &[String], cfg: &DedupConfig) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for (i, q) in qs.iter().enumerate() {
        if kept
            .iter()
            .all(|&k| bigram_overlap_with(&qs[k], q, cfg.mode) < cfg.threshold)
        {
            kept.push(i);
        }
    }
    kept
}

fn question() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "report", "rail"]), 0..7)
        .prop_map(|w| w.join(" "))
}

fn config() -> impl Strategy<Value = DedupConfig> {
    (0.05f64..=1.0, prop::bool::ANY).prop_map(|(threshold, j)| DedupConfig {
        threshold,
        mode: if j { OverlapMode::Jaccard } else { OverlapMode::Containment },
    })
}

proptest! {
    #[test]
    fn index_matches_brute_force(qs in prop::collection::vec(question(), 0..40), cfg in config()) {
        let out = dedup_within(&qs, &cfg).unwrap();
        prop_assert_eq!(out.kept, brute_force(&qs, &cfg));
    }

    #[test]
    fn kept_set_is_sound_and_idempotent(qs in prop::collection::vec(question(), 0..40), cfg in config()) {
        let kept: Vec<String> = dedup_within(&qs, &cfg).unwrap().kept.iter().map(|&i| qs[i].clone()).collect();
        for i in 0..kept.len() {
            for j in (i + 1)..kept.len() {
                prop_assert!(bigram_overlap_with(&kept[i], &kept[j], cfg.mode) < cfg.threshold);
            }
        }
        let again = dedup_within(&kept, &cfg).unwrap();
        prop_assert_eq!(again.kept.len(), kept.len());
    }

    #[test]
    fn lower_threshold_never_keeps_more(qs in prop::collection::vec(question(), 0..40), t in 0.05f64..=1.0, dt in 0.0f64..0.5) {
        let hi = DedupConfig { threshold: t, mode: OverlapMode::Containment };
        let lo = DedupConfig { threshold: (t - dt).max(0.01), ..hi };
        // Against a fixed reference the kept set shrinks as the threshold drops.
        let reference = &qs[..qs.len() / 2];
        let rest = &qs[qs.len() / 2..];
        let k_hi = dedup_against(rest, reference, &hi).unwrap().kept;
        let k_lo = dedup_against(rest, reference, &lo).unwrap().kept;
        prop_assert!(k_lo.iter().all(|i| k_hi.contains(i)));
    }

    #[test]
    fn overlap_is_symmetric_and_bounded(a in question(), b in question()) {
        for mode in [OverlapMode::Containment, OverlapMode::Jaccard] {
            let x = BigramSet::new(&a).overlap(&BigramSet::new(&b), mode);
            let y = BigramSet::new(&b).overlap(&BigramSet::new(&a), mode);
            prop_assert_eq!(x, y);
            prop_assert!((0.0..=1.0).contains(&x));
        }
        prop_assert_eq!(bigram_overlap_with(&a, &a, OverlapMode::Containment), 1.0);
    }

    #[test]
    fn against_drops_exactly_colliding_items(qs in prop::collection::vec(question(), 0..20), refs in prop::collection::vec(question(), 0..20), cfg in config()) {
        let out = dedup_against(&qs, &refs, &cfg).unwrap();
        for (i, q) in qs.iter().enumerate() {
            let collides = refs.iter().any(|r| bigram_overlap_with(q, r, cfg.mode) >= cfg.threshold);
            prop_assert_eq!(out.kept.contains(&i), !collides);
        }
    }
}
