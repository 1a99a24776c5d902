//! Lexical classification: one binary linear SVM per class, scored with
//! average precision and F1 on held-out words.

mod metrics;
mod svm;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::{IndexMap, IndexSet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use metrics::{average_precision, f1_score};
pub use svm::{decision_values, train_svm, train_svm_with, SvmModel, SvmParams};

use crate::embedding::StaticEmbedding;
use crate::error::{Error, Result};

/// Classes with fewer positives are not evaluated.
pub const MIN_POSITIVES: usize = 10;
/// Smallest class (after vocabulary intersection) that can still be split.
pub const MIN_SPLIT_POSITIVES: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct LexDataset {
    pub name: String,
    pub classes: IndexMap<String, Vec<String>>,
    pub explicit_negatives: Option<IndexMap<String, Vec<String>>>,
    /// Classes dropped at load time with their positive counts.
    pub dropped: Vec<(String, usize)>,
}

/// Reads `class<TAB>word` lines; a third column `neg` marks an explicit
/// negative example. Blank lines and lines starting with `#` are ignored.
pub fn read_dataset<R: BufRead>(input: R, name: &str) -> Result<LexDataset> {
    let mut pos: IndexMap<String, IndexSet<String>> = IndexMap::new();
    let mut neg: IndexMap<String, IndexSet<String>> = IndexMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        let (class, word, negative) = match cols.as_slice() {
            [c, w] => (*c, *w, false),
            [c, w, "neg"] => (*c, *w, true),
            [c, w, "pos"] => (*c, *w, false),
            [_, _, other] => {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("unknown marker {other:?}, expected \"neg\""),
                })
            }
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("expected 2 or 3 tab-separated columns, got {}", cols.len()),
                })
            }
        };
        let (class, word) = (class.trim(), word.trim());
        if class.is_empty() || word.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                reason: "empty class or word".into(),
            });
        }
        let (target, other) = if negative {
            (&mut neg, &pos)
        } else {
            (&mut pos, &neg)
        };
        if other.get(class).is_some_and(|s| s.contains(word)) {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("{word:?} is both a positive and a negative of {class:?}"),
            });
        }
        if !target
            .entry(class.to_owned())
            .or_default()
            .insert(word.to_owned())
        {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("duplicate word {word:?} in class {class:?}"),
            });
        }
    }

    let mut classes = IndexMap::new();
    let mut dropped = Vec::new();
    for (class, words) in pos {
        if words.len() < MIN_POSITIVES {
            log::warn!(
                "{name}: dropping class {class:?} with {} positives (< {MIN_POSITIVES})",
                words.len()
            );
            dropped.push((class, words.len()));
        } else {
            classes.insert(class, words.into_iter().collect());
        }
    }
    for class in neg.keys() {
        if !classes.contains_key(class) && !dropped.iter().any(|(c, _)| c == class) {
            log::warn!("{name}: dropping class {class:?} with no positives");
            dropped.push((class.clone(), 0));
        }
    }
    let explicit_negatives = if neg.is_empty() {
        None
    } else {
        Some(
            neg.into_iter()
                .filter(|(c, _)| classes.contains_key(c))
                .map(|(c, w)| (c, w.into_iter().collect()))
                .collect(),
        )
    };
    Ok(LexDataset {
        name: name.to_owned(),
        classes,
        explicit_negatives,
        dropped,
    })
}

pub fn load_dataset(path: impl AsRef<Path>, name: &str) -> Result<LexDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_frac: f64,
    pub tune_frac: f64,
    pub test_frac: f64,
    /// Negatives per positive in the train and tune splits.
    pub train_neg_ratio: f64,
    /// Negatives per positive in the test split.
    pub test_neg_ratio: f64,
    /// Words that train and tune negatives are drawn from.
    pub neg_pool: Vec<String>,
}

impl SplitSpec {
    pub fn new(seed: u64, neg_pool: Vec<String>) -> Self {
        Self {
            seed,
            train_frac: 0.6,
            tune_frac: 0.2,
            test_frac: 0.2,
            train_neg_ratio: 2.0,
            test_neg_ratio: 5.0,
            neg_pool,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.tune_frac, self.test_frac];
        if fracs.iter().any(|f| f.is_nan() || *f <= 0.0) || (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "split spec",
                "fractions must be positive and sum to 1",
            ));
        }
        if !(self.train_neg_ratio > 0.0 && self.test_neg_ratio > 0.0) {
            return Err(Error::invalid(
                "split spec",
                "negative ratios must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassSplit {
    pub class_name: String,
    pub train_pos: Vec<String>,
    pub tune_pos: Vec<String>,
    pub test_pos: Vec<String>,
    pub train_neg: Vec<String>,
    pub tune_neg: Vec<String>,
    pub test_neg: Vec<String>,
}

impl ClassSplit {
    pub fn train(&self) -> impl Iterator<Item = (&str, bool)> {
        labelled(&self.train_pos, &self.train_neg)
    }

    pub fn tune(&self) -> impl Iterator<Item = (&str, bool)> {
        labelled(&self.tune_pos, &self.tune_neg)
    }

    pub fn test(&self) -> impl Iterator<Item = (&str, bool)> {
        labelled(&self.test_pos, &self.test_neg)
    }
}

fn labelled<'a>(pos: &'a [String], neg: &'a [String]) -> impl Iterator<Item = (&'a str, bool)> {
    pos.iter()
        .map(|w| (w.as_str(), true))
        .chain(neg.iter().map(|w| (w.as_str(), false)))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitSet {
    pub splits: Vec<ClassSplit>,
    /// Dataset words (positives and explicit negatives) missing from the
    /// vocabulary.
    pub missing_words: usize,
    pub skipped: Vec<String>,
}

/// FNV-1a, used to derive a per-class RNG stream that does not depend on
/// evaluation order.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub(crate) fn class_rng(seed: u64, class: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(class))
}

/// Sizes of the train/tune/test cut of `n` items.
fn cut_sizes(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let train = (spec.train_frac * n as f64).round() as usize;
    let tune = (spec.tune_frac * n as f64).round() as usize;
    let train = train.min(n);
    let tune = tune.min(n - train);
    (train, tune, n - train - tune)
}

fn take_random(rng: &mut ChaCha8Rng, candidates: &[String], wanted: usize) -> Vec<String> {
    let amount = wanted.min(candidates.len());
    rand::seq::index::sample(rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i].clone())
        .collect()
}

fn count(ratio: f64, n: usize) -> usize {
    (ratio * n as f64).round() as usize
}

pub fn make_splits(ds: &LexDataset, spec: &SplitSpec, vocab: &HashSet<String>) -> Result<SplitSet> {
    spec.validate()?;
    let mut out = SplitSet::default();
    for (class, positives) in &ds.classes {
        let mut rng = class_rng(spec.seed, class);
        let members: HashSet<&str> = positives.iter().map(String::as_str).collect();
        let mut pos: Vec<String> = positives
            .iter()
            .filter(|w| vocab.contains(*w))
            .cloned()
            .collect();
        out.missing_words += positives.len() - pos.len();
        if pos.len() < MIN_SPLIT_POSITIVES {
            log::warn!(
                "{}: skipping class {class:?}, only {} positives in vocabulary",
                ds.name,
                pos.len()
            );
            out.skipped.push(class.clone());
            continue;
        }
        pos.shuffle(&mut rng);
        let (n_train, n_tune, _) = cut_sizes(pos.len(), spec);
        let mut split = ClassSplit {
            class_name: class.clone(),
            test_pos: pos.split_off(n_train + n_tune),
            tune_pos: pos.split_off(n_train),
            train_pos: pos,
            ..Default::default()
        };

        let explicit = ds.explicit_negatives.as_ref().and_then(|m| m.get(class));
        if let Some(negatives) = explicit {
            let mut neg: Vec<String> = negatives
                .iter()
                .filter(|w| vocab.contains(*w) && !members.contains(w.as_str()))
                .cloned()
                .collect();
            out.missing_words += negatives.iter().filter(|w| !vocab.contains(*w)).count();
            neg.shuffle(&mut rng);
            let (n_train, n_tune, _) = cut_sizes(neg.len(), spec);
            split.test_neg = neg.split_off(n_train + n_tune);
            split.tune_neg = neg.split_off(n_train);
            split.train_neg = neg;
        } else {
            // test negatives: positives of the other classes that are not
            // members of this one
            let mut seen = HashSet::new();
            let candidates: Vec<String> = ds
                .classes
                .iter()
                .filter(|(c, _)| *c != class)
                .flat_map(|(_, ws)| ws.iter())
                .filter(|w| vocab.contains(*w) && !members.contains(w.as_str()))
                .filter(|w| seen.insert(w.as_str()))
                .cloned()
                .collect();
            let wanted = count(spec.test_neg_ratio, split.test_pos.len());
            split.test_neg = take_random(&mut rng, &candidates, wanted);
            if split.test_neg.len() < wanted {
                log::warn!(
                    "{}: class {class:?} has only {} test negatives available (wanted {wanted})",
                    ds.name,
                    split.test_neg.len()
                );
            }

            let test_neg: HashSet<&str> = split.test_neg.iter().map(String::as_str).collect();
            let mut seen = HashSet::new();
            let pool: Vec<String> = spec
                .neg_pool
                .iter()
                .filter(|w| {
                    vocab.contains(*w)
                        && !members.contains(w.as_str())
                        && !test_neg.contains(w.as_str())
                })
                .filter(|w| seen.insert(w.as_str()))
                .cloned()
                .collect();
            let want_train = count(spec.train_neg_ratio, split.train_pos.len());
            let want_tune = count(spec.train_neg_ratio, split.tune_pos.len());
            let mut drawn = take_random(&mut rng, &pool, want_train + want_tune);
            if drawn.len() < want_train + want_tune {
                log::warn!(
                    "{}: class {class:?} has only {} train/tune negatives available (wanted {})",
                    ds.name,
                    drawn.len(),
                    want_train + want_tune
                );
            }
            let n_train = want_train.min(drawn.len());
            split.tune_neg = drawn.split_off(n_train);
            split.train_neg = drawn;
        }
        out.splits.push(split);
    }
    if out.missing_words > 0 {
        log::info!(
            "{}: {} dataset words are not in the vocabulary",
            ds.name,
            out.missing_words
        );
    }
    Ok(out)
}

/// One embedding to evaluate, labelled for the report (e.g. the aggregation
/// method that produced it).
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'a> {
    pub label: &'a str,
    pub embedding: &'a StaticEmbedding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub candidate: String,
    pub c: f64,
    pub tune_score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassResult {
    pub class_name: String,
    /// Test average precision of the model selected by tune AP.
    pub average_precision: f64,
    /// Test F1 of the model selected by tune F1.
    pub f1: f64,
    pub map_selection: Selection,
    pub f1_selection: Selection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexReport {
    pub dataset: String,
    pub classes: Vec<ClassResult>,
    pub macro_map: f64,
    pub macro_f1: f64,
    pub skipped: Vec<String>,
    pub missing_words: usize,
}

impl LexReport {
    /// `class<TAB>metric<TAB>value` rows followed by the `MACRO` rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# dataset={} classes={} skipped={} selection=per-metric-on-tune retrain=train-only",
            self.dataset,
            self.classes.len(),
            self.skipped.len()
        )?;
        for c in &self.classes {
            writeln!(out, "{}\tMAP\t{:.6}", c.class_name, c.average_precision)?;
            writeln!(out, "{}\tF1\t{:.6}", c.class_name, c.f1)?;
            writeln!(
                out,
                "{}\tMAP_config\t{},C={}",
                c.class_name, c.map_selection.candidate, c.map_selection.c
            )?;
            writeln!(
                out,
                "{}\tF1_config\t{},C={}",
                c.class_name, c.f1_selection.candidate, c.f1_selection.c
            )?;
        }
        writeln!(out, "MACRO\tMAP\t{:.6}", self.macro_map)?;
        writeln!(out, "MACRO\tF1\t{:.6}", self.macro_f1)?;
        out.flush()
    }
}

fn rows<'a>(
    emb: &'a StaticEmbedding,
    items: impl Iterator<Item = (&'a str, bool)>,
) -> (Vec<&'a [f32]>, Vec<bool>) {
    items
        .map(|(w, l)| {
            (
                emb.get(w)
                    .expect("split words come from the shared vocabulary"),
                l,
            )
        })
        .unzip()
}

fn evaluate_class(
    split: &ClassSplit,
    candidates: &[Candidate<'_>],
    c_grid: &[f64],
) -> Result<Option<ClassResult>> {
    if split.train_neg.is_empty() || split.test_neg.is_empty() {
        log::warn!(
            "skipping class {:?}: no negatives available",
            split.class_name
        );
        return Ok(None);
    }
    struct Best {
        score: f64,
        model: SvmModel,
        candidate: usize,
    }
    let mut best_ap: Option<Best> = None;
    let mut best_f1: Option<Best> = None;
    for (ci, cand) in candidates.iter().enumerate() {
        let (x_train, y_train) = rows(cand.embedding, split.train());
        let (x_tune, y_tune) = rows(cand.embedding, split.tune());
        for &c in c_grid {
            let model = train_svm(&x_train, &y_train, c)?;
            let scores = decision_values(&model, &x_tune)?;
            let ap = average_precision(&scores, &y_tune)?;
            let pred: Vec<bool> = scores.iter().map(|&s| s > 0.0).collect();
            let f1 = f1_score(&pred, &y_tune)?;
            // strict comparison keeps the first grid point among equals
            if best_ap.as_ref().is_none_or(|b| ap > b.score) {
                best_ap = Some(Best {
                    score: ap,
                    model: model.clone(),
                    candidate: ci,
                });
            }
            if best_f1.as_ref().is_none_or(|b| f1 > b.score) {
                best_f1 = Some(Best {
                    score: f1,
                    model,
                    candidate: ci,
                });
            }
        }
    }
    let (best_ap, best_f1) = (best_ap.unwrap(), best_f1.unwrap());

    let (x, y) = rows(candidates[best_ap.candidate].embedding, split.test());
    let ap = average_precision(&decision_values(&best_ap.model, &x)?, &y)?;
    let (x, y) = rows(candidates[best_f1.candidate].embedding, split.test());
    let pred: Vec<bool> = decision_values(&best_f1.model, &x)?
        .into_iter()
        .map(|s| s > 0.0)
        .collect();
    let f1 = f1_score(&pred, &y)?;

    let selection = |b: &Best| Selection {
        candidate: candidates[b.candidate].label.to_owned(),
        c: b.model.c,
        tune_score: b.score,
    };
    Ok(Some(ClassResult {
        class_name: split.class_name.clone(),
        average_precision: ap,
        f1,
        map_selection: selection(&best_ap),
        f1_selection: selection(&best_f1),
    }))
}

/// Per class, trains one SVM per (candidate embedding, C) on the train
/// split, keeps the best on the tune split separately for AP and for F1,
/// and reports those two models on the test split. Only words present in
/// every candidate are used.
pub fn evaluate(
    candidates: &[Candidate<'_>],
    ds: &LexDataset,
    spec: &SplitSpec,
    c_grid: &[f64],
) -> Result<LexReport> {
    if candidates.is_empty() || c_grid.is_empty() {
        return Err(Error::invalid("grid", "hyperparameter grid is empty"));
    }
    let mut vocab: HashSet<String> = candidates[0].embedding.words().map(str::to_owned).collect();
    for cand in &candidates[1..] {
        vocab.retain(|w| cand.embedding.contains(w));
    }
    let splits = make_splits(ds, spec, &vocab)?;
    let results = splits
        .splits
        .par_iter()
        .map(|s| evaluate_class(s, candidates, c_grid))
        .collect::<Result<Vec<_>>>()?;

    let mut skipped = splits.skipped;
    let mut classes = Vec::new();
    for (split, result) in splits.splits.iter().zip(results) {
        match result {
            Some(r) => classes.push(r),
            None => skipped.push(split.class_name.clone()),
        }
    }
    if classes.is_empty() {
        return Err(Error::Evaluation(format!(
            "{}: no class could be evaluated",
            ds.name
        )));
    }
    let n = classes.len() as f64;
    let macro_map = classes.iter().map(|c| c.average_precision).sum::<f64>() / n;
    let macro_f1 = classes.iter().map(|c| c.f1).sum::<f64>() / n;
    Ok(LexReport {
        dataset: ds.name.clone(),
        classes,
        macro_map,
        macro_f1,
        skipped,
        missing_words: splits.missing_words,
    })
}
