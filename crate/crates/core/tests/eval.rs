use adcrnn_core::eval::{
    classification_metrics, ensemble, regression_metrics, severity_class, severity_report,
    SeverityClass,
};
use adcrnn_core::rng::substream;
use proptest::prelude::*;
use rand::Rng;

/// k-th smallest by repeatedly removing the minimum.
fn kth_smallest(values: &[f64], k: usize) -> f64 {
    let mut rest = values.to_vec();
    for _ in 0..k {
        let i = (0..rest.len()).fold(0, |b, i| if rest[i] < rest[b] { i } else { b });
        rest.swap_remove(i);
    }
    rest.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn brute_ensemble(members: &[(bool, f64)]) -> (bool, f64) {
    let yes = members.iter().filter(|m| m.0).count();
    let no = members.len() - yes;
    let scores: Vec<f64> = members.iter().map(|m| m.1).collect();
    let n = scores.len();
    let med = if n % 2 == 1 {
        kth_smallest(&scores, n / 2)
    } else {
        (kth_smallest(&scores, n / 2 - 1) + kth_smallest(&scores, n / 2)) / 2.0
    };
    (yes >= no, med)
}

#[test]
fn ensemble_matches_brute_force() {
    let mut rng = substream(5, "ensemble-oracle", 0);
    for _ in 0..1000 {
        let n = rng.gen_range(1..=9);
        let members: Vec<(bool, f64)> = (0..n)
            .map(|_| (rng.gen_bool(0.5), (rng.gen_range(0.0..30.0f64) * 4.0).round() / 4.0))
            .collect();
        let got = ensemble(&members).unwrap();
        let want = brute_ensemble(&members);
        assert_eq!(got.0, want.0, "{members:?}");
        assert!((got.1 - want.1).abs() < 1e-12, "{members:?}");
    }
}

#[test]
fn five_members_never_tie() {
    for mask in 0u32..32 {
        let members: Vec<(bool, f64)> = (0..5).map(|i| (mask >> i & 1 == 1, i as f64)).collect();
        let yes = mask.count_ones();
        assert_eq!(ensemble(&members).unwrap().0, yes >= 3);
    }
}

#[test]
fn regression_hand_values() {
    let m = regression_metrics(&[10.0, 20.0], &[12.0, 18.0]).unwrap();
    assert!((m.rmse - 2.0).abs() < 1e-12);
    let truths = [12.0, 18.0, 27.0, 30.0];
    let mean = truths.iter().sum::<f64>() / 4.0;
    let m = regression_metrics(&[mean; 4], &truths).unwrap();
    assert!(m.r2.abs() < 1e-12);
    assert!(m.r2_pearson.is_nan());
    let m = regression_metrics(&truths, &truths).unwrap();
    assert_eq!(m.rmse, 0.0);
    assert!((m.r2 - 1.0).abs() < 1e-12);
    assert!(regression_metrics(&[1.0, 2.0], &[5.0, 5.0]).unwrap().r2.is_nan());
    assert!(regression_metrics(&[], &[]).is_err());
}

#[test]
fn constant_ad_predictor() {
    let truths: Vec<bool> = (0..20).map(|i| i % 2 == 0).collect();
    let m = classification_metrics(&[true; 20], &truths).unwrap();
    assert_eq!(m.accuracy, 0.5);
    assert_eq!(m.ad.recall, 1.0);
    assert_eq!(m.non_ad.recall, 0.0);
}

#[test]
fn severity_agreement_brute_force() {
    let mut rng = substream(8, "severity-oracle", 0);
    let bucket = |x: f64| {
        let s = (x + 0.5).floor();
        if s >= 24.0 {
            0
        } else if s >= 19.0 {
            1
        } else if s >= 10.0 {
            2
        } else {
            3
        }
    };
    for _ in 0..50 {
        let n = rng.gen_range(1..60);
        let truths: Vec<f64> = (0..n).map(|_| rng.gen_range(0..=30) as f64).collect();
        let preds: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..30.0)).collect();
        let r = severity_report(&preds, &truths).unwrap();
        let same = preds.iter().zip(&truths).filter(|(p, t)| bucket(**p) == bucket(**t)).count();
        assert!((r.agreement - same as f64 / n as f64).abs() < 1e-12);
        assert_eq!(r.confusion.iter().flatten().sum::<usize>(), n);
        let diag: usize = (0..4).map(|i| r.confusion[i][i]).sum();
        assert_eq!(diag, same);
    }
    // Constant 15 predictions agree exactly on the moderate truths.
    let truths: Vec<f64> = (0..=30).map(f64::from).collect();
    let r = severity_report(&[15.0; 31], &truths).unwrap();
    assert!((r.agreement - 9.0 / 31.0).abs() < 1e-12);
}

#[test]
fn severity_examples() {
    assert_eq!(severity_class(30.0).unwrap(), SeverityClass::Normal);
    assert_eq!(severity_class(0.0).unwrap(), SeverityClass::Severe);
    assert_eq!(severity_class(23.5).unwrap(), SeverityClass::Normal);
    assert_eq!(severity_class(23.49).unwrap(), SeverityClass::Mild);
    assert!(severity_class(30.5).is_err());
    assert!(severity_class(-0.1).is_err());
}

proptest! {
    #[test]
    fn ensemble_ignores_member_order(
        members in prop::collection::vec((any::<bool>(), 0.0f64..30.0), 1..10),
        seed in any::<u64>(),
    ) {
        let mut shuffled = members.clone();
        let mut rng = substream(seed, "perm", 0);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        prop_assert_eq!(ensemble(&members).unwrap(), ensemble(&shuffled).unwrap());
    }

    #[test]
    fn severity_is_monotone(a in 0.0f64..=30.0, b in 0.0f64..=30.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // Enum order runs from most to least severe.
        prop_assert!(severity_class(lo).unwrap() <= severity_class(hi).unwrap());
    }

    #[test]
    fn rmse_symmetric_and_scales(
        pairs in prop::collection::vec((-30.0f64..30.0, -30.0f64..30.0), 1..40),
        a in -5.0f64..5.0,
    ) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let r = regression_metrics(&p, &t).unwrap().rmse;
        prop_assert!((r - regression_metrics(&t, &p).unwrap().rmse).abs() <= 1e-12 * r.max(1.0));
        let sp: Vec<f64> = p.iter().map(|x| a * x).collect();
        let st: Vec<f64> = t.iter().map(|x| a * x).collect();
        let rs = regression_metrics(&sp, &st).unwrap().rmse;
        prop_assert!((rs - a.abs() * r).abs() <= 1e-9 * r.max(1.0));
        prop_assert!(r >= 0.0);
    }

    #[test]
    fn metric_bounds(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60)) {
        let (p, t): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let m = classification_metrics(&p, &t).unwrap();
        let lo = m.ad.f1.min(m.non_ad.f1);
        let hi = m.ad.f1.max(m.non_ad.f1);
        prop_assert!(lo <= m.macro_f1 && m.macro_f1 <= hi);
        for v in [m.accuracy, m.ad.precision, m.ad.recall, m.ad.f1, m.non_ad.precision, m.non_ad.recall, m.non_ad.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
