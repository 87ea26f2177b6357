use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toltiers::domain::{degradation, degradation_with, top1_error, wer, wer_text, DegradationMode};
use toltiers::stats::normal_quantile;

/// Minimum edits over every alignment, by exhaustive recursion with memo.
fn edit_oracle(a: &[u8], b: &[u8]) -> usize {
    fn go(a: &[u8], b: &[u8], i: usize, j: usize, memo: &mut Vec<Vec<Option<usize>>>) -> usize {
        if let Some(v) = memo[i][j] {
            return v;
        }
        let v = if i == a.len() {
            b.len() - j
        } else if j == b.len() {
            a.len() - i
        } else {
            let sub = go(a, b, i + 1, j + 1, memo) + usize::from(a[i] != b[j]);
            let del = go(a, b, i + 1, j, memo) + 1;
            let ins = go(a, b, i, j + 1, memo) + 1;
            sub.min(del).min(ins)
        };
        memo[i][j] = Some(v);
        v
    }
    let mut memo = vec![vec![None; b.len() + 1]; a.len() + 1];
    go(a, b, 0, 0, &mut memo)
}

fn words(seq: &[u8]) -> Vec<String> {
    seq.iter().map(|&c| ((b'a' + c) as char).to_string()).collect()
}

#[test]
fn wer_matches_edit_oracle_on_thousand_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let rl = rng.random_range(1..=10);
        let hl = rng.random_range(0..=10);
        let r: Vec<u8> = (0..rl).map(|_| rng.random_range(0..5)).collect();
        let h: Vec<u8> = (0..hl).map(|_| rng.random_range(0..5)).collect();
        let expected = edit_oracle(&r, &h) as f64 / rl as f64;
        assert_eq!(wer(&words(&r), &words(&h)).unwrap(), expected, "ref {r:?} hyp {h:?}");
    }
}

#[test]
fn wer_examples() {
    assert_eq!(wer(&["the", "cat", "sat"], &["the", "cat", "sat"]).unwrap(), 0.0);
    assert_eq!(wer(&["the", "cat", "sat"], &["the", "cat"]).unwrap(), 1.0 / 3.0);
    assert_eq!(wer(&["a", "b"], &["a", "b", "c", "d"]).unwrap(), 1.0);
    assert!(wer::<&str>(&[], &["a"]).is_err());
    assert_eq!(wer_text("The  cat\tSAT", "the cat sat").unwrap(), 0.0);
}

#[test]
fn quantile_at_tabulated_points() {
    assert!((normal_quantile(0.999) - 3.090232).abs() < 1e-4);
    assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-6);
    assert!(normal_quantile(0.5).abs() < 1e-9);
}

fn normal_cdf_simpson(x: f64) -> f64 {
    // Integrate the density from 0 to |x| and add the half mass.
    let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let n = 2000;
    let h = x.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(x.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

fn quantile_by_bisection(p: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..80 {
        let mid = (lo + hi) / 2.0;
        if normal_cdf_simpson(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

#[test]
fn quantile_matches_bisection_oracle() {
    for p in [0.51, 0.6, 0.75, 0.9, 0.95, 0.99, 0.995, 0.999, 0.9999, 0.01, 0.2] {
        let q = normal_quantile(p);
        let oracle = quantile_by_bisection(p);
        assert!((q - oracle).abs() < 1e-6, "p={p} got {q} oracle {oracle}");
    }
}

#[test]
fn degradation_examples() {
    assert_eq!(degradation(0.16, 0.16), 0.0);
    assert!((degradation(0.1616, 0.16) - 0.01).abs() < 1e-12);
    assert_eq!(degradation(0.01, 0.0), 0.01);
    assert_eq!(degradation_with(DegradationMode::Absolute, 0.2, 0.1), 0.1);
}

#[test]
fn top1_examples() {
    assert_eq!(top1_error("cat", "cat"), 0.0);
    assert_eq!(top1_error("cat", "dog"), 1.0);
}

fn word_seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 0..=max)
}

proptest! {
    #[test]
    fn wer_agrees_with_oracle(r in word_seq(10).prop_filter("non-empty", |r| !r.is_empty()), h in word_seq(10)) {
        let expected = edit_oracle(&r, &h) as f64 / r.len() as f64;
        prop_assert_eq!(wer(&words(&r), &words(&h)).unwrap(), expected);
    }

    #[test]
    fn wer_identity_and_empty_hypothesis(r in word_seq(12).prop_filter("non-empty", |r| !r.is_empty())) {
        let w = words(&r);
        prop_assert_eq!(wer(&w, &w).unwrap(), 0.0);
        prop_assert_eq!(wer::<String>(&w, &[]).unwrap(), 1.0);
    }

    #[test]
    fn top1_is_symmetric(a in 0u32..4, b in 0u32..4) {
        prop_assert_eq!(top1_error(&a, &b), top1_error(&b, &a));
    }

    #[test]
    fn degradation_monotone_in_candidate(x in 0.0f64..=1.0, y in 0.0f64..=1.0, r in 0.0f64..=1.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        prop_assert!(degradation(lo, r) <= degradation(hi, r));
        prop_assert_eq!(degradation(x, x), 0.0);
    }
}
