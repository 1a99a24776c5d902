use mentionvec::embedding::StaticEmbedding;
use mentionvec::similarity::{
    eval_similarity, quartile_disagreements, read_sim_dataset, spearman, SimDataset, SimPair,
};
use proptest::prelude::*;

// words on the unit circle; the cosine of a pair is the cosine of the angle
// between them
fn circle(n: usize) -> StaticEmbedding {
    let mut e = StaticEmbedding::new(2, "circle").unwrap();
    for i in 0..n {
        let t = (i as f64 * 7.0).to_radians();
        e.insert(format!("w{i}"), vec![t.cos() as f32, t.sin() as f32])
            .unwrap();
    }
    e
}

fn pairs(list: &[(usize, usize, f64)]) -> SimDataset {
    let p = list
        .iter()
        .map(|&(a, b, g)| SimPair {
            a: format!("w{a}"),
            b: format!("w{b}"),
            gold: g,
        })
        .collect();
    SimDataset::new("t", p).unwrap()
}

fn textbook_spearman(x: &[f64], y: &[f64]) -> f64 {
    // distinct values only
    let rank = |v: &[f64]| {
        let mut r = vec![0.0; v.len()];
        for i in 0..v.len() {
            r[i] = 1.0 + v.iter().filter(|&&o| o < v[i]).count() as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn planted_ratings_correlate_perfectly() {
    let e = circle(20);
    // gold = negative angular gap, strictly decreasing in the gap
    let list: Vec<(usize, usize, f64)> = (1..12).map(|g| (0, g, -(g as f64))).collect();
    let r = eval_similarity(&e, &pairs(&list), false).unwrap();
    assert!((r.spearman - 1.0).abs() < 1e-12);
    assert_eq!((r.covered, r.skipped), (11, 0));
}

#[test]
fn missing_words_are_skipped() {
    let e = circle(5);
    let ds = pairs(&[(0, 1, 3.0), (0, 2, 2.0), (0, 3, 1.0), (0, 9, 5.0)]);
    let r = eval_similarity(&e, &ds, false).unwrap();
    assert_eq!((r.covered, r.skipped), (3, 1));
    let too_few = pairs(&[(0, 1, 3.0), (0, 9, 5.0)]);
    let err = eval_similarity(&e, &too_few, false).unwrap_err();
    assert!(err.is_evaluation());
}

#[test]
fn lowercase_lookup() {
    let e = circle(4);
    let text = "W0\tw1\t9\nw0\tW2\t5\nW0\tW3\t1\n";
    let ds = read_sim_dataset(text.as_bytes(), "caps").unwrap();
    assert!(eval_similarity(&e, &ds, false).unwrap_err().is_evaluation());
    let r = eval_similarity(&e, &ds, true).unwrap();
    assert_eq!(r.covered, 3);
    assert!((r.spearman - 1.0).abs() < 1e-12);
}

#[test]
fn spearman_fixture_values() {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let cases: [([f64; 5], f64); 3] = [
        ([5.0, 6.0, 7.0, 8.0, 7.0], 0.820782681668123),
        ([2.0, 1.0, 4.0, 3.0, 5.0], 0.8),
        ([1.0, 1.0, 1.0, 2.0, 2.0], 0.866025403784439),
    ];
    for (y, want) in cases {
        assert!((spearman(&x, &y).unwrap() - want).abs() < 1e-9, "{y:?}");
    }
}

#[test]
fn quartiles_of_perfect_agreement_are_empty() {
    let e = circle(20);
    let list: Vec<(usize, usize, f64)> = (1..13).map(|g| (0, g, -(g as f64))).collect();
    let d = quartile_disagreements(&e, &pairs(&list), false).unwrap();
    assert!(d.high_gold_low_cosine.is_empty());
    assert!(d.low_gold_high_cosine.is_empty());
}

#[test]
fn quartiles_of_reversed_ratings() {
    let e = circle(20);
    let list: Vec<(usize, usize, f64)> = (1..9).map(|g| (0, g, g as f64)).collect();
    let d = quartile_disagreements(&e, &pairs(&list), false).unwrap();
    let names = |v: &[mentionvec::similarity::ScoredPair]| {
        v.iter().map(|p| p.b.clone()).collect::<Vec<_>>()
    };
    assert_eq!(names(&d.high_gold_low_cosine), ["w7", "w8"]);
    assert_eq!(names(&d.low_gold_high_cosine), ["w1", "w2"]);
    assert!(quartile_disagreements(&e, &pairs(&list[..7]), false).is_err());
}

fn distinct(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::hash_set(-10_000i32..10_000, n)
        .prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect())
}

proptest! {
    #[test]
    fn spearman_matches_textbook_formula((x, y) in (3usize..40).prop_flat_map(|n| (distinct(n..n + 1), distinct(n..n + 1)))) {
        let got = spearman(&x, &y).unwrap();
        prop_assert!((got - textbook_spearman(&x, &y)).abs() < 1e-9);
        prop_assert!((got - spearman(&y, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(x in prop::collection::vec(-3.0f64..3.0, 3..50), seed in 0u64..1000) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| (v * 13.0 + (i as u64 * seed % 17) as f64).sin()).collect();
        prop_assume!(x.windows(2).any(|w| w[0] != w[1]) && y.windows(2).any(|w| w[0] != w[1]));
        let base = spearman(&x, &y).unwrap();
        let cubed: Vec<f64> = x.iter().map(|v| v.powi(3) * 2.0 + 1.0).collect();
        prop_assert!((spearman(&cubed, &y).unwrap() - base).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&base));
    }

    #[test]
    fn disagreement_lists_are_disjoint(golds in prop::collection::vec(-5.0f64..5.0, 8..30)) {
        let e = circle(50);
        let list: Vec<(usize, usize, f64)> = golds.iter().enumerate().map(|(i, &g)| (0, i + 1, g)).collect();
        let d = quartile_disagreements(&e, &pairs(&list), false).unwrap();
        let q = list.len().div_ceil(4);
        prop_assert!(d.high_gold_low_cosine.len() <= q && d.low_gold_high_cosine.len() <= q);
        for p in &d.high_gold_low_cosine {
            prop_assert!(!d.low_gold_high_cosine.contains(p));
        }
    }
}
