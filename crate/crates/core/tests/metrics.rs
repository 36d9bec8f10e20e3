mod support;

use hinge_qe::corpus::Task;
use hinge_qe::metrics::*;
use proptest::prelude::*;
use rand::Rng;
use support::*;

struct Oracle {
    macro_f1: f64,
    weighted_f1: f64,
    kappa: Option<f64>,
    accuracy: f64,
}

/// Confusion-matrix evaluation, written from the textbook definitions.
fn oracle(preds: &[usize], gold: &[usize]) -> Oracle {
    let n = preds.len() as f64;
    let mut m = [[0usize; 10]; 10];
    for (&p, &g) in preds.iter().zip(gold) {
        m[g][p] += 1;
    }
    let (mut macro_sum, mut macro_classes, mut weighted) = (0.0, 0, 0.0);
    let (mut p_o, mut p_e) = (0.0, 0.0);
    for (k, row) in m.iter().enumerate() {
        let tp = row[k] as f64;
        let gold_k: usize = row.iter().sum();
        let pred_k: usize = m.iter().map(|r| r[k]).sum();
        p_o += tp / n;
        p_e += (gold_k as f64 / n) * (pred_k as f64 / n);
        if gold_k + pred_k == 0 {
            continue;
        }
        let f1 = 2.0 * tp / (gold_k + pred_k) as f64;
        macro_sum += f1;
        macro_classes += 1;
        weighted += f1 * gold_k as f64 / n;
    }
    let kappa = if (1.0 - p_e).abs() < 1e-15 { None } else { Some((p_o - p_e) / (1.0 - p_e)) };
    Oracle { macro_f1: macro_sum / macro_classes as f64, weighted_f1: weighted, kappa, accuracy: p_o }
}

#[test]
fn textbook_examples() {
    let gold = [0, 1, 2, 0, 1, 2];
    let preds = [0, 2, 1, 0, 0, 1];
    assert!((f1_score(&preds, &gold, F1Averaging::Macro).unwrap() - 0.26666666666666666).abs() < 1e-12);
    assert!((f1_score(&preds, &gold, F1Averaging::Weighted).unwrap() - 0.26666666666666666).abs() < 1e-12);
    assert_eq!(cohens_kappa(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), Some(0.5));
    assert_eq!(cohens_kappa(&[3, 3], &[3, 3]).unwrap(), None);
    assert_eq!(cohens_kappa(&[1, 2], &[1, 2]).unwrap(), Some(1.0));
    assert_eq!(mse(&[8, 6], &[6, 6]).unwrap(), 2.0);
    assert!(f1_score(&[1], &[1, 2], F1Averaging::Macro).is_err());
    assert!(accuracy(&[], &[]).is_err());
}

#[test]
fn weighted_differs_from_macro_on_imbalance() {
    let gold = [0, 0, 0, 0, 1];
    let preds = [0, 0, 0, 0, 0];
    let m = f1_score(&preds, &gold, F1Averaging::Macro).unwrap();
    let w = f1_score(&preds, &gold, F1Averaging::Weighted).unwrap();
    assert!((m - (8.0 / 9.0) / 2.0).abs() < 1e-12);
    assert!((w - 0.8 * 8.0 / 9.0).abs() < 1e-12);
}

#[test]
fn report_uses_task_scale_for_mse() {
    // classes 0 and 2 are ratings 1 and 3 but disagreements 0 and 2
    let r = MetricsReport::from_predictions(&[0, 2], &[2, 2], Task::AverageRating, F1Averaging::Weighted).unwrap();
    assert_eq!(r.mse, 2.0);
    let d = MetricsReport::from_predictions(&[0, 2], &[2, 2], Task::Disagreement, F1Averaging::Macro).unwrap();
    assert_eq!(d.mse, 2.0);
    assert_eq!(d.f1, d.f1_macro);
    let text = r.key_values();
    for key in ["n=2", "f1=", "kappa=", "mse=2", "mse_rounded=2.00", "accuracy=0.5"] {
        assert!(text.contains(key), "{} missing from {}", key, text);
    }
    assert!(r.to_string().contains("MSE"));
}

#[test]
fn published_numbers_are_recorded() {
    let v = published_result(Task::AverageRating, Split::Validation);
    assert_eq!((v.n, v.f1, v.kappa, v.mse), (395, 0.09899, Some(-0.01521), 6.00));
    let t = published_result(Task::Disagreement, Split::Test);
    assert_eq!((t.n, t.f1, t.kappa, t.mse), (791, 0.18331, None, 5.00));
}

#[test]
fn matches_oracle_on_random_pairs() {
    let mut r = rng(77);
    for _ in 0..1000 {
        let n = r.gen_range(1..60);
        let classes = r.gen_range(1..=10);
        let gold: Vec<usize> = (0..n).map(|_| r.gen_range(0..classes)).collect();
        let preds: Vec<usize> = (0..n).map(|_| if r.gen_bool(0.4) { gold.len() % classes } else { r.gen_range(0..10) }).collect();
        let o = oracle(&preds, &gold);
        assert!((f1_score(&preds, &gold, F1Averaging::Macro).unwrap() - o.macro_f1).abs() < 1e-12);
        assert!((f1_score(&preds, &gold, F1Averaging::Weighted).unwrap() - o.weighted_f1).abs() < 1e-12);
        assert!((accuracy(&preds, &gold).unwrap() - o.accuracy).abs() < 1e-12);
        match (cohens_kappa(&preds, &gold).unwrap(), o.kappa) {
            (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{} vs {}", a, b),
            (a, b) => assert_eq!(a, b),
        }
    }
}

fn labels() -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1usize..50).prop_flat_map(|n| (prop::collection::vec(0usize..10, n), prop::collection::vec(0usize..10, n)))
}

proptest! {
    #[test]
    fn relabeling_classes_changes_nothing((preds, gold) in labels(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut rng(seed));
        let p2: Vec<usize> = preds.iter().map(|&c| perm[c]).collect();
        let g2: Vec<usize> = gold.iter().map(|&c| perm[c]).collect();
        for avg in [F1Averaging::Macro, F1Averaging::Weighted] {
            let a = f1_score(&preds, &gold, avg).unwrap();
            let b = f1_score(&p2, &g2, avg).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(cohens_kappa(&preds, &gold).unwrap(), cohens_kappa(&p2, &g2).unwrap());
    }

    #[test]
    fn scores_stay_in_range((preds, gold) in labels()) {
        for avg in [F1Averaging::Macro, F1Averaging::Weighted] {
            let f = f1_score(&preds, &gold, avg).unwrap();
            prop_assert!((0.0..=1.0).contains(&f));
        }
        if let Some(k) = cohens_kappa(&preds, &gold).unwrap() {
            prop_assert!((-1.0..=1.0).contains(&k));
        }
        prop_assert_eq!(cohens_kappa(&gold, &gold).unwrap().unwrap_or(1.0), 1.0);
        prop_assert_eq!(f1_score(&gold, &gold, F1Averaging::Weighted).unwrap(), 1.0);
        prop_assert_eq!(cohens_kappa(&preds, &gold).unwrap(), cohens_kappa(&gold, &preds).unwrap());
    }

    #[test]
    fn mse_is_symmetric_and_nonnegative(pairs in prop::collection::vec((0i64..10, 0i64..10), 1..40)) {
        let (a, b): (Vec<i64>, Vec<i64>) = pairs.into_iter().unzip();
        let x = mse(&a, &b).unwrap();
        prop_assert_eq!(x, mse(&b, &a).unwrap());
        prop_assert!((0.0..=81.0).contains(&x));
        prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }
}
