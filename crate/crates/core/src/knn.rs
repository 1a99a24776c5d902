//! Exact cosine k-nearest-neighbour search over all mention vectors, the
//! idiosyncratic-mention filter built on it, and the distance-from-mean
//! outlier baseline.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{MentionId, MentionStore};

/// Queries handled together in one pass over the data.
const QUERY_BLOCK: usize = 32;

pub(crate) fn dot(u: &[f32], v: &[f32]) -> f64 {
    let mut acc = [0f64; 8];
    let mut uc = u.chunks_exact(8);
    let mut vc = v.chunks_exact(8);
    for (a, b) in (&mut uc).zip(&mut vc) {
        for i in 0..8 {
            acc[i] += a[i] as f64 * b[i] as f64;
        }
    }
    let mut tail = 0f64;
    for (a, b) in uc.remainder().iter().zip(vc.remainder()) {
        tail += *a as f64 * *b as f64;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

pub(crate) fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, computed in f64.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: MentionId,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborResult {
    pub query: MentionId,
    /// Exactly `k` neighbours, most similar first. Equal similarities are
    /// ordered by `(word, mention)` ascending.
    pub neighbors: Vec<Neighbor>,
}

/// Heap entry; `Ord` puts the *worse* candidate on top so the heap can
/// evict it.
#[derive(Clone, Copy)]
struct Candidate {
    similarity: f64,
    index: usize,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then(self.index.cmp(&other.index))
    }
}

/// Brute-force cosine index over a single-layer store.
pub struct KnnIndex<'a> {
    store: &'a MentionStore,
    norms: Vec<f64>,
}

impl<'a> KnnIndex<'a> {
    pub fn new(store: &'a MentionStore) -> Result<Self> {
        if !store.is_single_layer() {
            return Err(Error::invalid(
                "knn input",
                format!(
                    "store has {} layers; slice to one layer first",
                    store.layers().len()
                ),
            ));
        }
        let norms: Vec<f64> = (0..store.total_mentions())
            .into_par_iter()
            .map(|g| norm(store.vector(g, 0)))
            .collect();
        if let Some(g) = norms.iter().position(|&n| n == 0.0) {
            let id = store.locate(g);
            return Err(Error::invalid(
                "knn input",
                format!(
                    "zero-norm vector for mention {} of {:?}",
                    id.mention,
                    store.words()[id.word].surface
                ),
            ));
        }
        Ok(Self { store, norms })
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::invalid("k", "k must be positive"));
        }
        if k >= self.len() {
            return Err(Error::invalid(
                "k",
                format!(
                    "k = {k} must be smaller than the number of mentions ({})",
                    self.len()
                ),
            ));
        }
        Ok(())
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        dot(self.store.vector(i, 0), self.store.vector(j, 0)) / (self.norms[i] * self.norms[j])
    }

    fn search_block(&self, queries: std::ops::Range<usize>, k: usize) -> Vec<NeighborResult> {
        let mut heaps: Vec<BinaryHeap<Candidate>> = queries
            .clone()
            .map(|_| BinaryHeap::with_capacity(k + 1))
            .collect();
        for j in 0..self.len() {
            for (q, heap) in queries.clone().zip(heaps.iter_mut()) {
                if q == j {
                    continue;
                }
                let cand = Candidate {
                    similarity: self.similarity(q, j),
                    index: j,
                };
                if heap.len() < k {
                    heap.push(cand);
                } else if cand < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(cand);
                }
            }
        }
        queries
            .zip(heaps)
            .map(|(q, heap)| NeighborResult {
                query: self.store.locate(q),
                neighbors: heap
                    .into_sorted_vec()
                    .into_iter()
                    .map(|c| Neighbor {
                        id: self.store.locate(c.index),
                        similarity: c.similarity,
                    })
                    .collect(),
            })
            .collect()
    }

    /// Runs the search for every mention and maps each result through `f`.
    /// Output order follows the global mention order regardless of how the
    /// work is scheduled.
    pub fn map_all<T, F>(&self, k: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(NeighborResult) -> T + Sync,
    {
        self.check_k(k)?;
        let n = self.len();
        let blocks = n.div_ceil(QUERY_BLOCK);
        let out: Vec<Vec<T>> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let range = b * QUERY_BLOCK..((b + 1) * QUERY_BLOCK).min(n);
                self.search_block(range, k).into_iter().map(&f).collect()
            })
            .collect();
        Ok(out.into_iter().flatten().collect())
    }

    pub fn query(&self, global: usize, k: usize) -> Result<NeighborResult> {
        self.check_k(k)?;
        Ok(self.search_block(global..global + 1, k).pop().unwrap())
    }
}

/// Exact top-`k` cosine neighbours of every mention among all other
/// mentions of the store.
pub fn knn_all(store: &MentionStore, k: usize) -> Result<Vec<NeighborResult>> {
    KnnIndex::new(store)?.map_all(k, |r| r)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterEntry {
    pub word: String,
    pub mention_count: usize,
    /// Mentions whose `k` nearest neighbours all belong to this word.
    pub flagged: Vec<usize>,
    /// Every mention was flagged, so none are removed.
    pub fallback: bool,
}

impl FilterEntry {
    pub fn removed(&self) -> &[usize] {
        if self.fallback {
            &[]
        } else {
            &self.flagged
        }
    }
}

/// Outcome of the idiosyncrasy filter, one entry per store word in store
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterReport {
    pub k: usize,
    pub entries: Vec<FilterEntry>,
}

impl FilterReport {
    pub fn entry(&self, word: &str) -> Option<&FilterEntry> {
        self.entries.iter().find(|e| e.word == word)
    }

    pub fn removed(&self, word: &str) -> Option<&[usize]> {
        self.entry(word).map(FilterEntry::removed)
    }

    pub fn fallbacks(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|e| e.fallback)
            .map(|e| e.word.as_str())
    }

    pub fn total_mentions(&self) -> usize {
        self.entries.iter().map(|e| e.mention_count).sum()
    }

    pub fn removed_count(&self) -> usize {
        self.entries.iter().map(|e| e.removed().len()).sum()
    }

    pub fn flagged_count(&self) -> usize {
        self.entries.iter().map(|e| e.flagged.len()).sum()
    }

    /// Share of all mentions actually dropped from the averages.
    pub fn removed_fraction(&self) -> f64 {
        self.removed_count() as f64 / self.total_mentions() as f64
    }

    /// Share of all mentions the rule flagged, fallbacks included.
    pub fn flagged_fraction(&self) -> f64 {
        self.flagged_count() as f64 / self.total_mentions() as f64
    }

    /// Writes `word<TAB>removed indices (comma separated)<TAB>fallback (0/1)`
    /// for every word.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            let removed = e
                .removed()
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{}\t{}\t{}", e.word, removed, e.fallback as u8)?;
        }
        out.flush()
    }
}

/// Flags every mention whose `k` nearest neighbours (over the mentions of
/// all words) are mentions of its own word. Words with every mention
/// flagged keep all of them.
pub fn filter_idiosyncratic(store: &MentionStore, k: usize) -> Result<FilterReport> {
    Ok(filter_idiosyncratic_multi(store, &[k])?.pop().unwrap())
}

/// [`filter_idiosyncratic`] for several `k` from a single neighbour search
/// at the largest one; reports come back in the order of `ks`.
pub fn filter_idiosyncratic_multi(store: &MentionStore, ks: &[usize]) -> Result<Vec<FilterReport>> {
    let Some(&k_max) = ks.iter().max() else {
        return Err(Error::invalid("k", "no neighbourhood sizes given"));
    };
    if ks.contains(&0) {
        return Err(Error::invalid("k", "k must be positive"));
    }
    let index = KnnIndex::new(store)?;
    // same_prefix[q] = length of the leading run of same-word neighbours
    let same_prefix = index.map_all(k_max, |r| {
        r.neighbors
            .iter()
            .take_while(|n| n.id.word == r.query.word)
            .count()
    })?;
    let reports = ks
        .iter()
        .map(|&k| {
            let entries = store
                .words()
                .iter()
                .enumerate()
                .map(|(w, word)| {
                    let range = store.mention_range(w);
                    let flagged: Vec<usize> = same_prefix[range.clone()]
                        .iter()
                        .enumerate()
                        .filter_map(|(m, &run)| (run >= k).then_some(m))
                        .collect();
                    let fallback = flagged.len() == range.len();
                    FilterEntry {
                        word: word.surface.clone(),
                        mention_count: range.len(),
                        flagged,
                        fallback,
                    }
                })
                .collect();
            FilterReport { k, entries }
        })
        .collect();
    Ok(reports)
}

pub const MAX_OUTLIER_FRACTION: f64 = 0.9;

/// Number of vectors the outlier baseline removes from `n`.
pub fn outlier_removal_count(n: usize, fraction: f64) -> usize {
    // the epsilon keeps e.g. 0.29 * 100 = 28.999999999999996 at 29
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Drops the `floor(fraction * n)` vectors farthest (Euclidean) from the
/// arithmetic mean and returns the surviving indices in ascending order.
/// Among equally distant vectors the later one is dropped first.
pub fn filter_outliers(vectors: &[&[f32]], fraction: f64) -> Result<Vec<usize>> {
    if vectors.is_empty() {
        return Err(Error::invalid("outlier input", "no vectors"));
    }
    if !(0.0..=MAX_OUTLIER_FRACTION).contains(&fraction) {
        return Err(Error::invalid(
            "outlier fraction",
            format!("{fraction} is outside [0, {MAX_OUTLIER_FRACTION}]"),
        ));
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let remove = outlier_removal_count(vectors.len(), fraction);
    if remove == 0 {
        return Ok((0..vectors.len()).collect());
    }

    let mut mean = vec![0f64; dim];
    for v in vectors {
        for (m, &x) in mean.iter_mut().zip(v.iter()) {
            *m += x as f64;
        }
    }
    let n = vectors.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);

    let dist: Vec<f64> = vectors
        .iter()
        .map(|v| {
            v.iter()
                .zip(&mean)
                .map(|(&x, m)| (x as f64 - m).powi(2))
                .sum::<f64>()
        })
        .collect();
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(b.cmp(&a)));
    let mut survivors: Vec<usize> = order[remove..].to_vec();
    survivors.sort_unstable();
    Ok(survivors)
}
