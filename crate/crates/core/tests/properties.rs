//! Randomized checks of propagation, pruning and retrieval against
//! independent brute-force oracles.

mod support;

use bonsai_core::inference::aggregate_mean;
use bonsai_core::model::leaves;
use proptest::prelude::*;
use support::Shape;

fn shape(depth: u32) -> BoxedStrategy<Shape> {
    let leaf = any::<u8>().prop_map(|b| Shape::Leaf(b % 7 == 0));
    if depth == 0 {
        return leaf.boxed();
    }
    prop_oneof![
        1 => leaf,
        2 => (any::<u8>(), prop::collection::vec(shape(depth - 1), 2..=3))
            .prop_map(|(b, c)| Shape::Node(b % 9 == 0, c)),
    ]
    .boxed()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn infer_matches_path_oracle(s in shape(4)) {
        let (tree, p, expected) = support::infer_against_oracle(&s);
        prop_assert!((p - expected).abs() <= 1e-12, "infer {p} vs oracle {expected}");
        prop_assert!((0.0..=1.0).contains(&p));
        if let Ok(m) = aggregate_mean(&tree) {
            let scores: Vec<f64> = leaves(&tree).iter().map(|l| l.effective_score().unwrap()).collect();
            let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo - 1e-12 <= m && m <= hi + 1e-12);
        }
    }

    #[test]
    fn pruning_follows_every_other_rule(
        counts in prop::collection::vec(1usize..4, 2..5),
        raw in prop::collection::vec(0u8..=20, 64),
        tau in prop::sample::select(vec![0.5, 0.8, 0.9]),
    ) {
        let r = support::check_pruning(&counts, &raw, tau);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn retrieval_is_selection_by_score(
        rows in prop::collection::vec((0u8..3, 0u8..20, 0u8..5), 1..300),
        k in 1usize..12,
    ) {
        let r = support::check_retrieval(&rows, k);
        prop_assert!(r.is_ok(), "{:?}", r);
    }
}
