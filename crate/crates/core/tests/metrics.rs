use glomics::metrics::*;
use proptest::prelude::*;

fn all_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &p) in scores.iter().enumerate().filter(|&(i, _)| labels[i]) {
        let _ = i;
        for (j, &q) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            num += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
            den += 1.0;
        }
    }
    num / den
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..50).prop_flat_map(|n| {
        (
            prop::collection::vec((0i32..12).prop_map(|v| f64::from(v) / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(|(s, mut l)| {
                l[0] = true;
                l[1] = false;
                (s, l)
            })
    })
}

proptest! {
    #[test]
    fn roc_auc_equals_all_pairs((s, l) in scored()) {
        prop_assert_eq!(roc_auc(&s, &l).unwrap(), all_pairs(&s, &l));
    }

    #[test]
    fn negating_scores_reflects_auc((s, l) in scored()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let sum = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pr_auc_is_a_probability((s, l) in scored()) {
        let v = pr_auc(&s, &l).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn iou_is_symmetric_and_bounded(a in prop::collection::vec(any::<bool>(), 1..200), seed in any::<u64>()) {
        let b: Vec<bool> = a.iter().enumerate().map(|(i, &v)| v ^ ((seed >> (i % 64)) & 1 == 1)).collect();
        match (iou(&a, &b), iou(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert!(x == y && (0.0..=1.0).contains(&x)),
            (Err(_), Err(_)) => prop_assert!(!a.contains(&true) && !b.contains(&true)),
            _ => prop_assert!(false, "IoU defined one way only"),
        }
        if a.contains(&true) {
            prop_assert_eq!(iou(&a, &a).unwrap(), 1.0);
        }
    }
}

#[test]
fn worked_example() {
    let auc = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
    assert_eq!(auc, 0.75);
    assert_eq!(pr_auc(&[0.2, 0.9, 0.8], &[false, true, true]).unwrap(), 1.0);
}

#[test]
fn single_class_is_an_error() {
    assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    assert!(pr_auc(&[0.1, 0.2], &[false, false]).is_err());
    assert!(iou(&[true], &[true, false]).is_err());
}

#[test]
fn f1_at_threshold() {
    let c = ConfusionCounts::at_threshold(&[0.1, 0.6, 0.7, 0.4], &[false, true, false, true], 0.5);
    assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 1, 1));
    assert_eq!(f1_score(&c).unwrap(), 0.5);
}
