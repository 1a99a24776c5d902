//! Word-similarity benchmarks: cosine scores against gold ratings,
//! compared with Spearman's rank correlation.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::embedding::StaticEmbedding;
use crate::error::{Error, Result};
use crate::knn::cosine;

#[derive(Clone, Debug, PartialEq)]
pub struct SimPair {
    pub a: String,
    pub b: String,
    pub gold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimDataset {
    pub name: String,
    pub pairs: Vec<SimPair>,
}

impl SimDataset {
    pub fn new(name: impl Into<String>, pairs: Vec<SimPair>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &pairs {
            if !p.gold.is_finite() {
                return Err(Error::invalid(
                    "similarity dataset",
                    format!("non-finite rating for {}/{}", p.a, p.b),
                ));
            }
            let key = if p.a <= p.b {
                (&p.a, &p.b)
            } else {
                (&p.b, &p.a)
            };
            if !seen.insert(key) {
                return Err(Error::invalid(
                    "similarity dataset",
                    format!("duplicate pair {}/{}", p.a, p.b),
                ));
            }
        }
        Ok(Self {
            name: name.into(),
            pairs,
        })
    }
}

/// Reads `word1<TAB>word2<TAB>rating` lines.
pub fn read_sim_dataset<R: BufRead>(input: R, name: &str) -> Result<SimDataset> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [a, b, r] = cols.as_slice() else {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("expected 3 tab-separated columns, got {}", cols.len()),
            });
        };
        let gold: f64 = r.trim().parse().map_err(|_| Error::Parse {
            line: lineno,
            reason: format!("rating {r:?} is not a number"),
        })?;
        if !gold.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                reason: "rating is not finite".into(),
            });
        }
        let (a, b) = (a.trim().to_owned(), b.trim().to_owned());
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        if !seen.insert(key) {
            return Err(Error::Parse {
                line: lineno,
                reason: format!("duplicate pair {a}/{b}"),
            });
        }
        pairs.push(SimPair { a, b, gold });
    }
    Ok(SimDataset {
        name: name.to_owned(),
        pairs,
    })
}

pub fn load_sim_dataset(path: impl AsRef<Path>, name: &str) -> Result<SimDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_sim_dataset(BufReader::new(file), name)
}

/// 1-based fractional ranks; tied values share the mean of their ranks.
pub fn fractional_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation (Pearson correlation of fractional ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Evaluation(
            "spearman needs at least two values".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::invalid("spearman input", "non-finite value"));
    }
    pearson(&fractional_ranks(xs), &fractional_ranks(ys))
        .ok_or_else(|| Error::Evaluation("spearman is undefined for constant input".into()))
}

/// Word lookup that optionally ignores case. With case folding, the first
/// embedding entry of each lowercased form wins.
struct Lookup<'a> {
    emb: &'a StaticEmbedding,
    folded: Option<HashMap<String, &'a [f32]>>,
}

impl<'a> Lookup<'a> {
    fn new(emb: &'a StaticEmbedding, lowercase: bool) -> Self {
        let folded = lowercase.then(|| {
            let mut m = HashMap::with_capacity(emb.len());
            for (w, v) in emb.iter() {
                m.entry(w.to_lowercase()).or_insert(v);
            }
            m
        });
        Self { emb, folded }
    }

    fn get(&self, word: &str) -> Option<&'a [f32]> {
        match &self.folded {
            Some(m) => m.get(&word.to_lowercase()).copied(),
            None => self.emb.get(word),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredPair {
    pub a: String,
    pub b: String,
    pub gold: f64,
    pub cosine: f64,
}

fn covered_pairs(
    emb: &StaticEmbedding,
    ds: &SimDataset,
    lowercase: bool,
) -> Result<(Vec<ScoredPair>, usize)> {
    let lookup = Lookup::new(emb, lowercase);
    let mut covered = Vec::new();
    let mut skipped = 0;
    for p in &ds.pairs {
        match (lookup.get(&p.a), lookup.get(&p.b)) {
            (Some(u), Some(v)) => covered.push(ScoredPair {
                a: p.a.clone(),
                b: p.b.clone(),
                gold: p.gold,
                cosine: cosine(u, v)?,
            }),
            _ => skipped += 1,
        }
    }
    Ok((covered, skipped))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub spearman: f64,
    pub covered: usize,
    pub skipped: usize,
}

/// Spearman correlation between embedding cosines and gold ratings over the
/// pairs whose words both have vectors.
pub fn eval_similarity(
    emb: &StaticEmbedding,
    ds: &SimDataset,
    lowercase: bool,
) -> Result<SimResult> {
    let (pairs, skipped) = covered_pairs(emb, ds, lowercase)?;
    if pairs.len() < 2 {
        return Err(Error::Evaluation(format!(
            "{}: insufficient coverage ({} of {} pairs)",
            ds.name,
            pairs.len(),
            ds.pairs.len()
        )));
    }
    let cos: Vec<f64> = pairs.iter().map(|p| p.cosine).collect();
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    Ok(SimResult {
        spearman: spearman(&cos, &gold)?,
        covered: pairs.len(),
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Disagreements {
    /// Top quartile by gold rating, bottom quartile by cosine.
    pub high_gold_low_cosine: Vec<ScoredPair>,
    /// Bottom quartile by gold rating, top quartile by cosine.
    pub low_gold_high_cosine: Vec<ScoredPair>,
}

/// Pairs on which gold ratings and cosines disagree by at least a full
/// quartile band. Each band holds `ceil(n / 4)` pairs; ties in either
/// ranking are broken by dataset order.
pub fn quartile_disagreements(
    emb: &StaticEmbedding,
    ds: &SimDataset,
    lowercase: bool,
) -> Result<Disagreements> {
    let (pairs, _) = covered_pairs(emb, ds, lowercase)?;
    let n = pairs.len();
    if n < 8 {
        return Err(Error::Evaluation(format!(
            "{}: quartile analysis needs at least 8 covered pairs, got {n}",
            ds.name
        )));
    }
    let q = n.div_ceil(4);
    let descending = |key: fn(&ScoredPair) -> f64| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| key(&pairs[b]).total_cmp(&key(&pairs[a])).then(a.cmp(&b)));
        idx
    };
    let by_gold = descending(|p| p.gold);
    let by_cos = descending(|p| p.cosine);
    let top = |order: &[usize]| order[..q].iter().copied().collect::<HashSet<_>>();
    let bottom = |order: &[usize]| order[n - q..].iter().copied().collect::<HashSet<_>>();
    let (top_gold, bottom_gold) = (top(&by_gold), bottom(&by_gold));
    let (top_cos, bottom_cos) = (top(&by_cos), bottom(&by_cos));

    let pick = |a: &HashSet<usize>, b: &HashSet<usize>| {
        (0..n)
            .filter(|i| a.contains(i) && b.contains(i))
            .map(|i| pairs[i].clone())
            .collect::<Vec<_>>()
    };
    Ok(Disagreements {
        high_gold_low_cosine: pick(&top_gold, &bottom_cos),
        low_gold_high_cosine: pick(&bottom_gold, &top_cos),
    })
}
