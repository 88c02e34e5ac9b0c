use proptest::prelude::*;
use rsac_core::metrics::{accuracy, macro_accuracy};
use rsac_core::{ClassId, ConfusionMatrix};

fn labels(n: usize, classes: u32) -> impl Strategy<Value = (Vec<ClassId>, Vec<ClassId>)> {
    (proptest::collection::vec(0..classes, n), proptest::collection::vec(0..classes, n))
}

proptest! {
    #[test]
    fn accuracy_matches_per_sample_count((truth, pred) in (1usize..300).prop_flat_map(|n| labels(n, 7))) {
        let m = ConfusionMatrix::from_predictions(7, &truth, &pred).unwrap();
        let hits = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        prop_assert_eq!(accuracy(&m).unwrap(), hits as f64 / truth.len() as f64);
        prop_assert_eq!(m.total() as usize, truth.len());
        for c in 0..7 {
            let n = truth.iter().filter(|&&t| t == c).count() as u64;
            prop_assert_eq!(m.row_sums()[c as usize], n);
        }
    }

    #[test]
    fn accuracy_ignores_relabelling(
        (truth, pred) in (1usize..200).prop_flat_map(|n| labels(n, 6)),
        perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle(),
    ) {
        let m = ConfusionMatrix::from_predictions(6, &truth, &pred).unwrap();
        let p = m.permuted(&perm).unwrap();
        prop_assert_eq!(accuracy(&p).unwrap(), accuracy(&m).unwrap());
        prop_assert_eq!(p.total(), m.total());
        if let (Ok(a), Ok(b)) = (macro_accuracy(&p), macro_accuracy(&m)) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn shards_merge_to_the_whole((truth, pred) in (2usize..200).prop_flat_map(|n| labels(n, 5)), cut in any::<prop::sample::Index>()) {
        let at = cut.index(truth.len());
        let whole = ConfusionMatrix::from_predictions(5, &truth, &pred).unwrap();
        let mut left = ConfusionMatrix::from_predictions(5, &truth[..at], &pred[..at]).unwrap();
        let right = ConfusionMatrix::from_predictions(5, &truth[at..], &pred[at..]).unwrap();
        left.merge(&right).unwrap();
        prop_assert_eq!(left, whole);
    }
}
