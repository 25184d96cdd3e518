//! Hit-count buckets and coverage-map accounting.

use attachfuzz::coverage::{bucketize, CoverageMap, EdgeHits};
use proptest::prelude::*;

/// Bucket bounds as inclusive intervals, lowest first.
const INTERVALS: [(u32, u32); 8] = [
    (1, 1),
    (2, 2),
    (3, 3),
    (4, 7),
    (8, 15),
    (16, 31),
    (32, 127),
    (128, u32::MAX),
];

#[test]
fn buckets_match_interval_list_exhaustively() {
    for hits in 1..=10_000u32 {
        let want = INTERVALS.iter().position(|&(lo, hi)| (lo..=hi).contains(&hits)).unwrap() as u8;
        assert_eq!(bucketize(hits).unwrap(), want, "hits={hits}");
    }
    assert_eq!(bucketize(u32::MAX).unwrap(), 7);
    assert!(bucketize(0).is_err());
}

#[test]
fn repeated_merge_adds_nothing() {
    let hits: EdgeHits = [(1, 1), (2, 5), (3, 200)].into_iter().collect();
    let mut map = CoverageMap::new();
    assert_eq!(map.merge(&hits), 3);
    assert_eq!(map.merge(&hits), 0);
    let more: EdgeHits = [(1, 2), (2, 6)].into_iter().collect();
    assert_eq!(map.merge(&more), 1);
    assert_eq!(map.total_units(), 4);
    assert_eq!(map.edge_count(), 3);
}

fn hit_maps() -> impl Strategy<Value = Vec<EdgeHits>> {
    prop::collection::vec(prop::collection::btree_map(0u64..40, 0u32..300, 0..12), 1..20)
}

proptest! {
    #[test]
    fn merge_returns_telescope_to_the_total(iterations in hit_maps()) {
        let mut map = CoverageMap::new();
        let mut sum = 0;
        for hits in &iterations {
            let before = map.total_units();
            let new = map.merge(hits);
            prop_assert_eq!(map.total_units(), before + new);
            sum += new;
        }
        prop_assert_eq!(sum, map.total_units());
        prop_assert!(map.total_units() <= 8 * map.edge_count() as u64);
    }
}
