//! Property tests for the data pipeline, sampling and loss invariants.

use proptest::prelude::*;

use ruie_core::data::{
    build_sequences, reward_of, split_leave_one_out, Behavior, Catalog, InteractionRecord,
};
use ruie_core::embed::fuse;
use ruie_core::eval::{ndcg_at_k, rank_target};
use ruie_core::intent::{sample_negatives, triplet_loss};
use ruie_core::qnet::gate;
use ruie_core::rng::stream;

fn behavior_strategy() -> impl Strategy<Value = Behavior> {
    prop_oneof![
        Just(Behavior::Click),
        Just(Behavior::Follow),
        Just(Behavior::Like),
        Just(Behavior::Share),
    ]
}

fn records_strategy() -> impl Strategy<Value = Vec<InteractionRecord>> {
    // A handful of users with short histories over a small catalog.
    prop::collection::vec(
        (0u64..5, 0u64..30, 0u64..3, behavior_strategy(), 0i64..1000),
        0..60,
    )
    .prop_map(|rows| {
        let mut records: Vec<InteractionRecord> = rows
            .into_iter()
            .map(|(user_id, item_id, scenario_id, behavior, timestamp)| InteractionRecord {
                user_id,
                item_id,
                scenario_id,
                behavior,
                timestamp,
            })
            .collect();
        records.sort_by_key(|r| (r.user_id, r.timestamp));
        records
    })
}

proptest! {
    #[test]
    fn sequences_shift_append_and_count(records in records_strategy(), h in 1usize..6) {
        let catalog = Catalog::new(30, 3).unwrap();
        let samples = build_sequences(&records, h, &catalog).unwrap();
        prop_assert_eq!(samples.len(), records.len());
        let pad = catalog.padding_item_id();
        for s in &samples {
            // next history is the shift-append of (history, target)
            let mut expect_items = s.history_items.clone();
            expect_items.rotate_left(1);
            expect_items[h - 1] = s.target_item;
            prop_assert_eq!(&s.next_history_items, &expect_items);
            let mut expect_scens = s.history_scenarios.clone();
            expect_scens.rotate_left(1);
            expect_scens[h - 1] = s.target_scenario;
            prop_assert_eq!(&s.next_history_scenarios, &expect_scens);
            // the padding token is never a target
            prop_assert!(s.target_item != pad);
        }
        // per-user sample counts equal per-user interaction counts
        for user in records.iter().map(|r| r.user_id) {
            let n_rec = records.iter().filter(|r| r.user_id == user).count();
            let n_samp = samples.iter().filter(|s| s.user_id == user).count();
            prop_assert_eq!(n_rec, n_samp);
        }
    }

    #[test]
    fn leave_one_out_partitions(records in records_strategy(), h in 1usize..4) {
        let catalog = Catalog::new(30, 3).unwrap();
        let samples = build_sequences(&records, h, &catalog).unwrap();
        let total = samples.len();
        let (train, test) = split_leave_one_out(samples.clone());
        prop_assert_eq!(train.len() + test.len(), total);
        // at most one test sample per user, and it is that user's last
        for t in &test {
            let user_samples: Vec<_> =
                samples.iter().filter(|s| s.user_id == t.user_id).collect();
            prop_assert!(user_samples.len() >= 2);
            prop_assert_eq!(*user_samples.last().unwrap(), t);
            prop_assert_eq!(test.iter().filter(|x| x.user_id == t.user_id).count(), 1);
        }
    }

    #[test]
    fn negatives_never_collide(
        history in prop::collection::vec(0u32..15, 1..6),
        target in 0u32..15,
        seed in 0u64..200,
    ) {
        let catalog = Catalog::new(30, 2).unwrap();
        let mut rng = stream(seed, "prop-neg", &[]);
        let negs = sample_negatives(&catalog, &history, target, 10, &mut rng).unwrap();
        prop_assert_eq!(negs.len(), 10);
        let mut sorted = negs.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), 10);
        for n in &negs {
            prop_assert!(*n < 30);
            prop_assert!(*n != target);
            prop_assert!(!history.contains(n));
        }
    }

    #[test]
    fn gate_is_monotone_and_bounded(p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0) {
        let eps = 1e-6;
        let cap = 100.0;
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(gate(lo, eps, cap) <= gate(hi, eps, cap));
        // gate(0) = 1/(1+eps), i.e. equal to 1 within 2*eps.
        let g0 = gate(0.0, eps, cap);
        prop_assert!((g0 - 1.0).abs() <= 2.0 * eps);
        prop_assert!(gate(hi, eps, cap) <= cap);
    }

    #[test]
    fn fuse_is_commutative_and_linear(
        a in prop::collection::vec(-10.0f64..10.0, 4),
        b in prop::collection::vec(-10.0f64..10.0, 4),
        s in -3.0f64..3.0,
    ) {
        let ab = fuse(&a, &b).unwrap();
        let ba = fuse(&b, &a).unwrap();
        prop_assert_eq!(&ab, &ba);
        let sa: Vec<f64> = a.iter().map(|x| s * x).collect();
        let sb: Vec<f64> = b.iter().map(|x| s * x).collect();
        let scaled = fuse(&sa, &sb).unwrap();
        for (x, y) in scaled.iter().zip(&ab) {
            prop_assert!((x - s * y).abs() < 1e-9);
        }
    }

    #[test]
    fn triplet_nonnegative_and_zero_iff_separated(
        a in prop::collection::vec(-2.0f64..2.0, 3),
        p in prop::collection::vec(-2.0f64..2.0, 3),
        n1 in prop::collection::vec(-2.0f64..2.0, 3),
        n2 in prop::collection::vec(-2.0f64..2.0, 3),
        margin in 0.0f64..2.0,
    ) {
        let dist = |x: &[f64], y: &[f64]| -> f64 {
            x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
        };
        let loss = triplet_loss(&a, &p, &[&n1, &n2], margin).unwrap();
        prop_assert!(loss >= 0.0);
        let separated = [&n1, &n2]
            .iter()
            .all(|n| dist(&a, n) >= dist(&a, &p) + margin);
        prop_assert_eq!(loss == 0.0, separated);
    }

    #[test]
    fn ndcg_monotonicity(rank in 1u32..50, k in 1u32..25) {
        prop_assert!(ndcg_at_k(rank, k) <= ndcg_at_k(rank, k + 1) + 1e-15);
        prop_assert!(ndcg_at_k(rank + 1, k) <= ndcg_at_k(rank, k) + 1e-15);
        let v = ndcg_at_k(rank, k);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn rank_matches_full_sort(
        rows in prop::collection::vec(-4.0f64..4.0, 2 * 8),
        pred in prop::collection::vec(-4.0f64..4.0, 2),
        target in 0u32..8,
    ) {
        let d = 2;
        let num_items = 8u32;
        // Append a padding row so the table has num_items + 1 rows.
        let mut table = rows.clone();
        table.extend_from_slice(&[0.0, 0.0]);
        let mut scored: Vec<(f64, u32)> = (0..num_items)
            .map(|id| {
                let row = &table[id as usize * d..(id as usize + 1) * d];
                let dist: f64 = pred.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                (dist, id)
            })
            .collect();
        scored.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let oracle = scored.iter().position(|&(_, id)| id == target).unwrap() as u32 + 1;
        let fast = rank_target(&pred, &table, d, num_items, target).unwrap();
        prop_assert_eq!(fast, oracle);
    }

    #[test]
    fn rewards_stay_in_table(b in behavior_strategy()) {
        let r = reward_of(b);
        prop_assert!([1.0, 2.0, 3.0].contains(&r));
    }
}
