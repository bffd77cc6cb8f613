use std::collections::BTreeSet;

use fairsketch::data::{balanced_split, largest_remainder, minibatches, Features, LabeledExample, SplitRatios, SplitSet};
use fairsketch::metrics::Group;
use proptest::prelude::*;

fn dataset(n_protected: usize, n_unprotected: usize) -> Vec<LabeledExample> {
    (0..n_protected + n_unprotected)
        .map(|i| LabeledExample {
            id: format!("e{i:05}"),
            features: Features::Vector(vec![i as f64]),
            label: i % 2,
            z: if i < n_protected { Group::Protected } else { Group::Unprotected },
        })
        .collect()
}

fn count(part: &[LabeledExample], g: Group) -> usize {
    part.iter().filter(|e| e.z == g).count()
}

fn ids(parts: &[&[LabeledExample]]) -> Vec<String> {
    parts.iter().flat_map(|p| p.iter().map(|e| e.id.clone())).collect()
}

fn check_protocol(data: &[LabeledExample], s: &SplitSet, ratios: SplitRatios) {
    let m = count(data, Group::Protected).min(count(data, Group::Unprotected));
    for part in s.parts() {
        assert!(count(part, Group::Protected).abs_diff(count(part, Group::Unprotected)) <= 1);
    }
    let kept = (s.train.len() + s.val.len() + s.test.len()) as f64;
    assert_eq!(kept as usize, 2 * m);
    for (part, r) in s.parts().iter().zip(ratios.as_array()) {
        assert!((part.len() as f64 - r * kept).abs() <= 1.0, "{} vs {}", part.len(), r * kept);
    }
    let all = ids(&[&s.train, &s.val, &s.test, &s.discarded]);
    let unique: BTreeSet<&String> = all.iter().collect();
    assert_eq!(unique.len(), all.len(), "an id appears twice");
    let original: BTreeSet<String> = data.iter().map(|e| e.id.clone()).collect();
    assert_eq!(unique.into_iter().cloned().collect::<BTreeSet<_>>(), original);
}

proptest! {
    #[test]
    fn balanced_split_protocol(p in 1usize..120, u in 1usize..120, seed in any::<u64>(), a in 1u32..8, b in 0u32..4, c in 0u32..4) {
        let sum = f64::from(a + b + c);
        let ratios = SplitRatios { train: f64::from(a) / sum, val: f64::from(b) / sum, test: 1.0 - f64::from(a + b) / sum };
        let data = dataset(p, u);
        let s = balanced_split(&data, seed, ratios).unwrap();
        check_protocol(&data, &s, ratios);
        prop_assert_eq!(&s, &balanced_split(&data, seed, ratios).unwrap());
    }

    #[test]
    fn input_order_does_not_matter(p in 1usize..40, u in 1usize..40, seed in any::<u64>()) {
        let data = dataset(p, u);
        let mut reversed = data.clone();
        reversed.reverse();
        let ratios = SplitRatios::default();
        prop_assert_eq!(balanced_split(&data, seed, ratios).unwrap(), balanced_split(&reversed, seed, ratios).unwrap());
    }

    #[test]
    fn largest_remainder_sums(total in 0usize..5000, a in 1u32..100, b in 0u32..100) {
        let s = f64::from(a + b + 1);
        let r = [f64::from(a) / s, f64::from(b) / s, 1.0 / s];
        let sizes = largest_remainder(total, r);
        prop_assert_eq!(sizes.iter().sum::<usize>(), total);
        for (n, q) in sizes.iter().zip(r) {
            prop_assert!((*n as f64 - q * total as f64).abs() < 1.0);
        }
    }

    #[test]
    fn minibatches_cover_every_index_once(len in 1usize..300, bs in 1usize..64, seed in any::<u64>()) {
        let batches = minibatches(len, bs, seed);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..len).collect::<Vec<_>>());
        prop_assert!(batches.iter().all(|b| b.len() <= bs && !b.is_empty()));
    }
}

#[test]
fn thousand_examples_split_560_120_120() {
    let data = dataset(400, 600);
    let s = balanced_split(&data, 0, SplitRatios::default()).unwrap();
    assert_eq!([s.train.len(), s.val.len(), s.test.len()], [560, 120, 120]);
    assert_eq!(count(&s.train, Group::Protected), 280);
    assert_eq!(s.discarded.len(), 200);
}

#[test]
fn different_seeds_shuffle_differently() {
    let data = dataset(50, 50);
    let a = balanced_split(&data, 1, SplitRatios::default()).unwrap();
    let b = balanced_split(&data, 2, SplitRatios::default()).unwrap();
    assert_ne!(ids(&[&a.train]), ids(&[&b.train]));
}
