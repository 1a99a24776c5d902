use std::collections::HashSet;

use mentionvec::embedding::StaticEmbedding;
use mentionvec::lexclass::{
    average_precision, evaluate, f1_score, make_splits, read_dataset, train_svm, Candidate,
    LexDataset, SplitSpec,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn svm50() -> (Vec<Vec<f32>>, Vec<bool>) {
    let text = include_str!("fixtures/svm50.tsv");
    let mut x = Vec::new();
    let mut y = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')) {
        let cols: Vec<&str> = line.split('\t').collect();
        y.push(cols[0] == "1");
        x.push(
            cols[1..]
                .iter()
                .map(|c| c.parse::<f32>().unwrap())
                .collect(),
        );
    }
    (x, y)
}

#[test]
fn svm50_objective_near_reference() {
    // reference optima from an independent convex solver
    let (x, y) = svm50();
    assert_eq!(x.len(), 50);
    let rows: Vec<&[f32]> = x.iter().map(Vec::as_slice).collect();
    for (c, reference) in [(1.0, 9.074571785899451), (10.0, 45.40939329406917)] {
        let model = train_svm(&rows, &y, c).unwrap();
        let obj = model.objective(&rows, &y).unwrap();
        assert!(
            (obj - reference).abs() / reference < 0.01,
            "C={c}: {obj} vs {reference}"
        );
        assert!(obj >= reference - 1e-6);
    }
}

#[test]
fn separable_blobs_are_fit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..200 {
        let label = i % 2 == 0;
        let centre = if label { 2.0 } else { -2.0 };
        x.push(
            (0..5)
                .map(|_| centre + rng.gen_range(-1.0f32..1.0))
                .collect::<Vec<f32>>(),
        );
        y.push(label);
    }
    let rows: Vec<&[f32]> = x.iter().map(Vec::as_slice).collect();
    for c in [0.1, 1.0, 100.0] {
        let model = train_svm(&rows, &y, c).unwrap();
        for (r, &l) in rows.iter().zip(&y) {
            assert_eq!(model.decision_value(r).unwrap() > 0.0, l);
        }
    }
}

#[test]
fn random_scores_give_map_near_positive_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let n = 200;
    let labels: Vec<bool> = (0..n).map(|i| i < 40).collect();
    let mut total = 0.0;
    for _ in 0..1000 {
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        total += average_precision(&scores, &labels).unwrap();
    }
    assert!((total / 1000.0 - 0.2).abs() < 0.05);
}

#[test]
fn metric_fixtures() {
    let ap = average_precision(&[0.9, 0.8, 0.7, 0.1], &[true, false, true, false]).unwrap();
    assert!((ap - 5.0 / 6.0).abs() < 1e-9);
    let ap = average_precision(&[1.0, 1.0, 1.0], &[false, true, false]).unwrap();
    assert!((ap - 0.5).abs() < 1e-9);
    let f1 = f1_score(&[true, true, false, false], &[true, false, true, false]).unwrap();
    assert!((f1 - 0.5).abs() < 1e-9);
    assert_eq!(f1_score(&[false; 3], &[true, false, false]).unwrap(), 0.0);
    assert!(average_precision(&[0.1], &[false]).is_err());
}

// five well separated classes of 20 words plus 40 unrelated nouns
fn blob_world(seed: u64) -> (StaticEmbedding, LexDataset, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 10;
    let mut emb = StaticEmbedding::new(dim, "blobs").unwrap();
    let mut tsv = String::new();
    let mut pool = Vec::new();
    for c in 0..5 {
        for i in 0..20 {
            let w = format!("c{c}w{i}");
            let v: Vec<f32> = (0..dim)
                .map(|d| if d == c { 3.0 } else { 0.0 } + rng.gen_range(-0.3f32..0.3))
                .collect();
            emb.insert(w.clone(), v).unwrap();
            tsv.push_str(&format!("class{c}\t{w}\n"));
            pool.push(w);
        }
    }
    for i in 0..40 {
        let w = format!("noun{i}");
        let v: Vec<f32> = (0..dim)
            .map(|d| if d == 5 + i % 5 { 3.0 } else { 0.0 } + rng.gen_range(-0.3f32..0.3))
            .collect();
        emb.insert(w.clone(), v).unwrap();
        pool.push(w);
    }
    (emb, read_dataset(tsv.as_bytes(), "blobs").unwrap(), pool)
}

#[test]
fn planted_classes_reach_near_perfect_map() {
    let (emb, ds, pool) = blob_world(33);
    let spec = SplitSpec::new(7, pool);
    let cand = [Candidate {
        label: "blobs",
        embedding: &emb,
    }];
    let report = evaluate(&cand, &ds, &spec, &[0.1, 1.0, 10.0, 100.0]).unwrap();
    assert_eq!(report.classes.len(), 5);
    assert!(report.macro_map >= 0.99, "{}", report.macro_map);
    assert!(report.macro_f1 >= 0.9);
}

#[test]
fn evaluation_is_deterministic_and_thread_independent() {
    let (emb, ds, pool) = blob_world(34);
    let spec = SplitSpec::new(3, pool);
    let cand = [Candidate {
        label: "blobs",
        embedding: &emb,
    }];
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate(&cand, &ds, &spec, &[0.5, 2.0]).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.write_tsv(&mut ta).unwrap();
    b.write_tsv(&mut tb).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn single_point_grid_reports_that_point() {
    let (emb, ds, pool) = blob_world(35);
    let spec = SplitSpec::new(3, pool);
    let cand = [Candidate {
        label: "only",
        embedding: &emb,
    }];
    let report = evaluate(&cand, &ds, &spec, &[0.25]).unwrap();
    for c in &report.classes {
        assert_eq!(c.map_selection.c, 0.25);
        assert_eq!(c.f1_selection.candidate, "only");
    }
    let mut out = Vec::new();
    report.write_tsv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("class0\tMAP_config\tonly,C=0.25\n"));
    assert!(text.lines().last().unwrap().starts_with("MACRO\tF1\t"));
}

#[test]
fn empty_grid_is_rejected() {
    let (emb, ds, pool) = blob_world(36);
    let cand = [Candidate {
        label: "x",
        embedding: &emb,
    }];
    assert!(evaluate(&cand, &ds, &SplitSpec::new(1, pool), &[]).is_err());
}

#[test]
fn explicit_negatives_are_cut_not_sampled() {
    let mut tsv = String::new();
    for i in 0..10 {
        tsv.push_str(&format!("fly\tp{i}\n"));
        tsv.push_str(&format!("fly\tn{i}\tneg\n"));
    }
    let ds = read_dataset(tsv.as_bytes(), "x").unwrap();
    let vocab: HashSet<String> = (0..10)
        .flat_map(|i| [format!("p{i}"), format!("n{i}")])
        .collect();
    let splits = make_splits(&ds, &SplitSpec::new(9, vec!["other".into()]), &vocab).unwrap();
    let s = &splits.splits[0];
    assert_eq!(
        (s.train_neg.len(), s.tune_neg.len(), s.test_neg.len()),
        (6, 2, 2)
    );
    assert!(s
        .train_neg
        .iter()
        .chain(&s.tune_neg)
        .chain(&s.test_neg)
        .all(|w| w.starts_with('n')));
}

fn arb_dataset() -> impl Strategy<Value = (LexDataset, Vec<String>, u64)> {
    (
        prop::collection::vec(10usize..40, 1..6),
        0usize..100,
        any::<u64>(),
    )
        .prop_map(|(sizes, extra, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut words: Vec<String> = (0..200).map(|i| format!("w{i}")).collect();
            let mut tsv = String::new();
            for (c, n) in sizes.iter().enumerate() {
                // classes may overlap
                words.shuffle(&mut rng);
                for w in &words[..*n] {
                    tsv.push_str(&format!("k{c}\t{w}\n"));
                }
            }
            let pool: Vec<String> = (0..200 + extra).map(|i| format!("w{i}")).collect();
            (read_dataset(tsv.as_bytes(), "p").unwrap(), pool, seed)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ap_ignores_monotone_transforms(scores in prop::collection::vec(-5.0f64..5.0, 2..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labels: Vec<bool> = scores.iter().map(|_| rng.gen()).collect();
        labels[0] = true;
        let base = average_precision(&scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        prop_assert!((average_precision(&exp, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((average_precision(&affine, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!(base > 0.0 && base <= 1.0);
    }

    #[test]
    fn splits_are_disjoint((ds, pool, seed) in arb_dataset()) {
        let vocab: HashSet<String> = pool.iter().cloned().collect();
        let spec = SplitSpec::new(seed, pool);
        let splits = make_splits(&ds, &spec, &vocab).unwrap();
        prop_assert_eq!(&splits, &make_splits(&ds, &spec, &vocab).unwrap());
        for s in &splits.splits {
            let members: HashSet<&String> = ds.classes[&s.class_name].iter().collect();
            let train: HashSet<&String> = s.train_pos.iter().chain(&s.train_neg).collect();
            let tune: HashSet<&String> = s.tune_pos.iter().chain(&s.tune_neg).collect();
            let test: HashSet<&String> = s.test_pos.iter().chain(&s.test_neg).collect();
            prop_assert!(train.is_disjoint(&test));
            prop_assert!(tune.is_disjoint(&test));
            prop_assert!(train.is_disjoint(&tune));
            prop_assert!(s.train_neg.iter().chain(&s.tune_neg).chain(&s.test_neg).all(|w| !members.contains(w)));
            let n = members.len() as f64;
            prop_assert_eq!(s.train_pos.len(), (0.6 * n).round() as usize);
            prop_assert_eq!(s.tune_pos.len(), (0.2 * n).round() as usize);
            prop_assert!(s.test_neg.len() <= 5 * s.test_pos.len());
            prop_assert!(s.train_neg.len() <= 2 * s.train_pos.len());
        }
    }
}
