//! Static word vectors from mention stores, plus helpers that operate on
//! the resulting embeddings.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::embedding::StaticEmbedding;
use crate::error::{Error, Result};
use crate::knn::{
    cosine, filter_idiosyncratic, filter_idiosyncratic_multi, filter_outliers, norm, FilterReport,
    MAX_OUTLIER_FRACTION,
};
use crate::store::MentionStore;

/// How mention vectors are turned into one vector per word. Whether the
/// mentions were masked is a property of the store, so the same methods
/// cover masked and unmasked inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AggregationMethod {
    /// Mean of all mentions.
    AvgLast,
    /// Mean of the mentions that survive the kNN idiosyncrasy filter.
    AvgFilt { k: usize },
    /// Mean after dropping the given fraction of mentions farthest from
    /// the word's mean.
    AvgOutl { fraction: f64 },
    /// Mean of all mentions taken from one layer.
    LayerSingle { layer: u32 },
    /// Mean of all mentions after averaging layers `1..=layer` per mention.
    LayerPrefixMean { layer: u32 },
}

impl AggregationMethod {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AggregationMethod::AvgFilt { k: 0 } => {
                Err(Error::invalid("method", "k must be positive"))
            }
            AggregationMethod::AvgOutl { fraction }
                if !(0.0..=MAX_OUTLIER_FRACTION).contains(&fraction) =>
            {
                Err(Error::invalid(
                    "method",
                    format!("outlier fraction {fraction} is outside [0, {MAX_OUTLIER_FRACTION}]"),
                ))
            }
            AggregationMethod::LayerSingle { layer: 0 }
            | AggregationMethod::LayerPrefixMean { layer: 0 } => {
                Err(Error::invalid("method", "layers are numbered from 1"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for AggregationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationMethod::AvgLast => write!(f, "avg_last"),
            AggregationMethod::AvgFilt { k } => write!(f, "avg_filt_k{k}"),
            AggregationMethod::AvgOutl { fraction } => write!(f, "avg_outl_f{fraction}"),
            AggregationMethod::LayerSingle { layer } => write!(f, "layer_eq_{layer}"),
            AggregationMethod::LayerPrefixMean { layer } => write!(f, "layer_le_{layer}"),
        }
    }
}

impl FromStr for AggregationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("method", format!("unrecognised method tag {s:?}"));
        let method = if s == "avg_last" {
            AggregationMethod::AvgLast
        } else if let Some(k) = s.strip_prefix("avg_filt_k") {
            AggregationMethod::AvgFilt {
                k: k.parse().map_err(|_| bad())?,
            }
        } else if let Some(f) = s.strip_prefix("avg_outl_f") {
            AggregationMethod::AvgOutl {
                fraction: f.parse().map_err(|_| bad())?,
            }
        } else if let Some(l) = s.strip_prefix("layer_eq_") {
            AggregationMethod::LayerSingle {
                layer: l.parse().map_err(|_| bad())?,
            }
        } else if let Some(l) = s.strip_prefix("layer_le_") {
            AggregationMethod::LayerPrefixMean {
                layer: l.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        method.validate()?;
        Ok(method)
    }
}

#[derive(Clone, Debug)]
pub struct Aggregation {
    pub embedding: StaticEmbedding,
    /// Present for [`AggregationMethod::AvgFilt`] only.
    pub report: Option<FilterReport>,
}

/// Mean of the selected mentions (global indices) of a single-layer store,
/// accumulated in f64.
fn mean_of(store: &MentionStore, mentions: impl Iterator<Item = usize>) -> Vec<f32> {
    let mut acc = vec![0f64; store.dim()];
    let mut n = 0usize;
    for g in mentions {
        for (a, &v) in acc.iter_mut().zip(store.vector(g, 0)) {
            *a += v as f64;
        }
        n += 1;
    }
    debug_assert!(n > 0);
    acc.into_iter().map(|a| (a / n as f64) as f32).collect()
}

fn collect_embedding(
    store: &MentionStore,
    tag: String,
    vectors: Vec<Vec<f32>>,
) -> Result<StaticEmbedding> {
    let mut emb = StaticEmbedding::new(store.dim(), tag)?;
    for (word, v) in store.words().iter().zip(vectors) {
        emb.insert(word.surface.clone(), v)?;
    }
    Ok(emb)
}

fn average_all(store: &MentionStore, tag: String) -> Result<StaticEmbedding> {
    let vectors = (0..store.num_words())
        .into_par_iter()
        .map(|w| mean_of(store, store.mention_range(w)))
        .collect();
    collect_embedding(store, tag, vectors)
}

fn filtered(store: &MentionStore, report: FilterReport) -> Result<Aggregation> {
    let vectors = report
        .entries
        .par_iter()
        .enumerate()
        .map(|(w, entry)| {
            let range = store.mention_range(w);
            let removed = entry.removed();
            mean_of(
                store,
                range
                    .enumerate()
                    .filter(|(m, _)| removed.binary_search(m).is_err())
                    .map(|(_, g)| g),
            )
        })
        .collect();
    let tag = AggregationMethod::AvgFilt { k: report.k }.to_string();
    Ok(Aggregation {
        embedding: collect_embedding(store, tag, vectors)?,
        report: Some(report),
    })
}

// the mention-level methods work on the last layer of multi-layer stores
fn last_layer(store: &MentionStore) -> Result<Cow<'_, MentionStore>> {
    if store.is_single_layer() {
        Ok(Cow::Borrowed(store))
    } else {
        Ok(Cow::Owned(store.slice_layer(store.last_layer())?))
    }
}

pub fn aggregate(store: &MentionStore, method: AggregationMethod) -> Result<Aggregation> {
    method.validate()?;
    let tag = method.to_string();
    let last = || last_layer(store);

    match method {
        AggregationMethod::AvgLast => Ok(Aggregation {
            embedding: average_all(&*last()?, tag)?,
            report: None,
        }),
        AggregationMethod::AvgFilt { k } => {
            let store = last()?;
            let report = filter_idiosyncratic(&store, k)?;
            filtered(&store, report)
        }
        AggregationMethod::AvgOutl { fraction } => {
            let store = last()?;
            let vectors = (0..store.num_words())
                .into_par_iter()
                .map(|w| {
                    let range = store.mention_range(w);
                    let mentions: Vec<&[f32]> = range.clone().map(|g| store.vector(g, 0)).collect();
                    let keep = filter_outliers(&mentions, fraction)?;
                    Ok(mean_of(&store, keep.into_iter().map(|m| range.start + m)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Aggregation {
                embedding: collect_embedding(&store, tag, vectors)?,
                report: None,
            })
        }
        AggregationMethod::LayerSingle { layer } => Ok(Aggregation {
            embedding: average_all(&store.slice_layer(layer)?, tag)?,
            report: None,
        }),
        AggregationMethod::LayerPrefixMean { layer } => Ok(Aggregation {
            embedding: average_all(&store.average_first_layers(layer)?, tag)?,
            report: None,
        }),
    }
}

/// [`aggregate`] for several methods; all `AvgFilt` variants share one
/// neighbour search. Results follow the order of `methods`.
pub fn aggregate_many(
    store: &MentionStore,
    methods: &[AggregationMethod],
) -> Result<Vec<Aggregation>> {
    for m in methods {
        m.validate()?;
    }
    let ks: Vec<usize> = methods
        .iter()
        .filter_map(|m| match m {
            AggregationMethod::AvgFilt { k } => Some(*k),
            _ => None,
        })
        .collect();
    let mut reports = if ks.is_empty() {
        Vec::new()
    } else {
        let store = last_layer(store)?;
        filter_idiosyncratic_multi(&store, &ks)?
            .into_iter()
            .map(|r| filtered(&store, r))
            .collect::<Result<Vec<_>>>()?
    }
    .into_iter();
    methods
        .iter()
        .map(|&m| match m {
            AggregationMethod::AvgFilt { .. } => Ok(reports.next().unwrap()),
            other => aggregate(store, other),
        })
        .collect()
}

/// Concatenation of two embeddings after scaling each vector to unit length.
#[derive(Clone, Debug)]
pub struct Concatenation {
    pub embedding: StaticEmbedding,
    /// Words of `a` with no vector in `b`, which are left out.
    pub missing: usize,
}

pub fn concat_normalized(a: &StaticEmbedding, b: &StaticEmbedding) -> Result<Concatenation> {
    let tag = format!("{}+{}", a.method_tag(), b.method_tag());
    let mut out = StaticEmbedding::new(a.dim() + b.dim(), tag)?;
    let mut missing = 0;
    for (word, va) in a.iter() {
        let Some(vb) = b.get(word) else {
            missing += 1;
            continue;
        };
        let (na, nb) = (norm(va), norm(vb));
        if na == 0.0 || nb == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let v = va
            .iter()
            .map(|&x| (x as f64 / na) as f32)
            .chain(vb.iter().map(|&x| (x as f64 / nb) as f32))
            .collect();
        out.insert(word, v)?;
    }
    if missing > 0 {
        log::warn!(
            "{missing} words of {} have no vector in {}",
            a.method_tag(),
            b.method_tag()
        );
    }
    Ok(Concatenation {
        embedding: out,
        missing,
    })
}

/// The `n` words most cosine-similar to `query`, excluding the query.
/// Equal similarities are ordered by word.
pub fn nearest_words(emb: &StaticEmbedding, query: &str, n: usize) -> Result<Vec<(String, f64)>> {
    let q = emb
        .get(query)
        .ok_or_else(|| Error::UnknownWord(query.to_owned()))?;
    let mut scored = emb
        .iter()
        .filter(|(w, _)| *w != query)
        .map(|(w, v)| Ok((w.to_owned(), cosine(q, v)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored)
}
