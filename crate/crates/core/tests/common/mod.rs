#![allow(dead_code)]

use mentionvec::{MentionStore, WordEntry};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random single- or multi-layer store with the given mention counts.
pub fn random_store(
    rng: &mut ChaCha8Rng,
    counts: &[usize],
    layers: Vec<u32>,
    dim: usize,
) -> MentionStore {
    let mut words = Vec::new();
    let mut sid = 0u64;
    for (i, &c) in counts.iter().enumerate() {
        let ids = (0..c).map(|_| {
            sid += rng.gen_range(1..1000);
            sid
        });
        words.push(WordEntry::new(format!("w{i}"), ids.collect()));
    }
    let total: usize = counts.iter().sum();
    let vectors = (0..total * layers.len() * dim)
        .map(|_| rng.gen_range(-1.0f32..1.0))
        .collect();
    MentionStore::new(dim, layers, true, words, vectors).unwrap()
}

/// Plain scalar cosine.
pub fn scalar_cosine(u: &[f32], v: &[f32]) -> f64 {
    let mut uv = 0.0f64;
    let mut uu = 0.0f64;
    let mut vv = 0.0f64;
    for i in 0..u.len() {
        uv += u[i] as f64 * v[i] as f64;
        uu += u[i] as f64 * u[i] as f64;
        vv += v[i] as f64 * v[i] as f64;
    }
    uv / (uu.sqrt() * vv.sqrt())
}

/// Double-loop kNN: for every mention, all others sorted by descending
/// cosine, ties by global index, truncated to k.
pub fn brute_force_knn(store: &MentionStore, k: usize) -> Vec<Vec<(usize, f64)>> {
    let n = store.total_mentions();
    let mut out = Vec::with_capacity(n);
    for q in 0..n {
        let mut all = Vec::with_capacity(n - 1);
        for j in 0..n {
            if j != q {
                all.push((j, scalar_cosine(store.vector(q, 0), store.vector(j, 0))));
            }
        }
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        out.push(all);
    }
    out
}

/// Mentions whose brute-force k neighbours are all of their own word.
pub fn brute_force_flags(store: &MentionStore, k: usize) -> Vec<bool> {
    brute_force_knn(store, k)
        .iter()
        .enumerate()
        .map(|(q, nn)| {
            let w = store.locate(q).word;
            nn.iter().all(|&(j, _)| store.locate(j).word == w)
        })
        .collect()
}

pub fn store_from(words: &[(&str, Vec<Vec<f32>>)]) -> MentionStore {
    let dim = words[0].1[0].len();
    let mut entries = Vec::new();
    let mut v = Vec::new();
    let mut sid = 0;
    for (w, ms) in words {
        entries.push(WordEntry::new(*w, (sid..sid + ms.len() as u64).collect()));
        sid += ms.len() as u64;
        for m in ms {
            v.extend_from_slice(m);
        }
    }
    MentionStore::new(dim, vec![24], true, entries, v).unwrap()
}
