//! Interval and significance test against reference values from an independent implementation.

use demobot::stats::{clopper_pearson, fisher_exact};

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}

#[test]
fn fisher_matches_reference_values() {
    let cases = [
        (10, 20, 12, 20, 0.7511863074565595),
        (20, 20, 0, 20, 1.4508889103849688e-11),
        (17, 20, 10, 20, 0.040742395024931176),
        (14, 20, 18, 20, 0.2351162351162351),
        (16, 20, 8, 20, 0.0224774273717544),
        (1, 20, 19, 20, 5.818064530643725e-09),
        (43, 50, 23, 50, 4.255513859258733e-05),
        (3, 7, 9, 11, 0.1414027149321267),
    ];
    for (a, na, b, nb, want) in cases {
        let got = fisher_exact(a, na, b, nb).unwrap();
        assert!(close(got, want, 1e-9), "{a}/{na} vs {b}/{nb}: {got} != {want}");
    }
}

#[test]
fn fisher_equal_counts_and_degenerate_margins() {
    assert!(close(fisher_exact(5, 20, 5, 20).unwrap(), 1.0, 1e-12));
    assert_eq!(fisher_exact(0, 20, 0, 20).unwrap(), 1.0);
    assert_eq!(fisher_exact(20, 20, 20, 20).unwrap(), 1.0);
    assert!(fisher_exact(20, 20, 0, 20).unwrap() < 0.001);
}

#[test]
fn fisher_is_symmetric_in_its_arms() {
    for a in 0..=10 {
        for b in 0..=10 {
            let p = fisher_exact(a, 10, b, 10).unwrap();
            let q = fisher_exact(b, 10, a, 10).unwrap();
            assert!((p - q).abs() <= 1e-12 * p.max(1e-300));
            assert!(p > 0.0 && p <= 1.0);
        }
    }
}

#[test]
fn fisher_rejects_impossible_counts() {
    assert!(fisher_exact(21, 20, 0, 20).is_err());
    assert!(fisher_exact(0, 0, 0, 20).is_err());
}

#[test]
fn clopper_pearson_matches_reference_values() {
    let cases = [
        (0, 20, 0.0, 0.16843347098308548),
        (1, 20, 0.0012650894979560335, 0.24873276277202772),
        (10, 20, 0.27195784956079133, 0.7280421504392086),
        (17, 20, 0.6210731734547044, 0.9679290628144552),
        (20, 20, 0.8315665290169145, 1.0),
        (3, 7, 0.09898827844243689, 0.81594843235993),
        (43, 50, 0.7326039975029915, 0.941808299660027),
    ];
    for (k, n, lo, hi) in cases {
        let (l, h) = clopper_pearson(k, n, 0.05).unwrap();
        assert!((l - lo).abs() <= 1e-10, "{k}/{n} low {l} != {lo}");
        assert!((h - hi).abs() <= 1e-10, "{k}/{n} high {h} != {hi}");
    }
}

#[test]
fn clopper_pearson_brackets_the_point_estimate() {
    for n in 1..=30 {
        for k in 0..=n {
            let (l, h) = clopper_pearson(k, n, 0.05).unwrap();
            let p = k as f64 / n as f64;
            assert!(0.0 <= l && l <= p && p <= h && h <= 1.0);
        }
    }
    assert!(clopper_pearson(3, 0, 0.05).is_err());
    assert!(clopper_pearson(1, 2, 0.0).is_err());
}
