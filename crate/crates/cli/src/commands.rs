use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mentionvec::lexclass::{evaluate, load_dataset, Candidate, SplitSpec};
use mentionvec::similarity::{eval_similarity, load_sim_dataset, quartile_disagreements};
use mentionvec::{
    aggregate, aggregate_many, load_text_embedding, nearest_words, read_store,
    write_text_embedding, AggregationMethod, Error, MentionStore, StaticEmbedding,
};

use crate::config::{LexclassConfig, RunConfig};

/// Destination for command results: a file when a path is given,
/// otherwise standard output.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn require<'a>(value: Option<&'a PathBuf>, what: &str) -> Result<&'a Path> {
    value
        .map(PathBuf::as_path)
        .ok_or_else(|| anyhow!("no {what} given (set it in the config or on the command line)"))
}

fn load_store(path: &Path) -> Result<MentionStore> {
    log::info!("reading {}", path.display());
    Ok(read_store(path)?)
}

pub fn aggregate_cmd(cfg: &RunConfig, output: Option<&Path>) -> Result<()> {
    let store = load_store(require(cfg.store.as_ref(), "store")?)?;
    let method: AggregationMethod = cfg.method.as_deref().unwrap_or("avg_last").parse()?;
    let out_path = output
        .or(cfg.output.as_deref())
        .ok_or_else(|| anyhow!("no output path for the embedding"))?;
    log::info!(
        "{method}: {} words, {} mentions",
        store.num_words(),
        store.total_mentions()
    );
    let result = aggregate(&store, method)?;
    write_text_embedding(&result.embedding, out_path)?;

    let mut stdout = io::stdout().lock();
    writeln!(stdout, "method\t{method}")?;
    writeln!(stdout, "words\t{}", result.embedding.len())?;
    writeln!(stdout, "mentions\t{}", store.total_mentions())?;
    if let Some(report) = &result.report {
        let report_path = cfg.report.clone().unwrap_or_else(|| {
            let mut p = out_path.as_os_str().to_owned();
            p.push(".filter.tsv");
            PathBuf::from(p)
        });
        report
            .write_text(BufWriter::new(File::create(&report_path).with_context(
                || format!("cannot create {}", report_path.display()),
            )?))?;
        writeln!(stdout, "flagged_fraction\t{:.6}", report.flagged_fraction())?;
        writeln!(stdout, "removed_fraction\t{:.6}", report.removed_fraction())?;
        writeln!(stdout, "fallbacks\t{}", report.fallbacks().count())?;
    }
    Ok(())
}

/// Expands a method family over its grid, or parses a single tag.
fn expand_methods(
    spec: &str,
    lc: &LexclassConfig,
    store: &MentionStore,
) -> Result<Vec<AggregationMethod>> {
    let methods: Vec<AggregationMethod> = match spec {
        "avg_filt" => {
            let total = store.total_mentions();
            let ks: Vec<usize> =
                lc.k.iter()
                    .copied()
                    .filter(|&k| k > 0 && k < total)
                    .collect();
            if ks.len() < lc.k.len() {
                log::warn!("dropping k values not in 1..{total} from the grid");
            }
            ks.into_iter()
                .map(|k| AggregationMethod::AvgFilt { k })
                .collect()
        }
        "avg_outl" => lc
            .fraction
            .iter()
            .map(|&fraction| AggregationMethod::AvgOutl { fraction })
            .collect(),
        "layer_eq" => layers(lc, store, false)
            .into_iter()
            .map(|layer| AggregationMethod::LayerSingle { layer })
            .collect(),
        "layer_le" => layers(lc, store, true)
            .into_iter()
            .map(|layer| AggregationMethod::LayerPrefixMean { layer })
            .collect(),
        tag => vec![tag.parse()?],
    };
    if methods.is_empty() {
        bail!("the {spec} grid is empty for this store");
    }
    for m in &methods {
        m.validate()?;
    }
    Ok(methods)
}

fn layers(lc: &LexclassConfig, store: &MentionStore, prefix: bool) -> Vec<u32> {
    if let Some(l) = &lc.layer {
        return l.clone();
    }
    let present = store.layers();
    present
        .iter()
        .copied()
        .filter(|&l| !prefix || (1..=l).all(|p| present.contains(&p)))
        .collect()
}

fn read_word_list(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut words = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        let w = line.trim();
        if !w.is_empty() && !w.starts_with('#') {
            words.push(w.to_owned());
        }
    }
    Ok(words)
}

pub fn eval_lexclass_cmd(cfg: &RunConfig, seed: Option<u64>, output: Option<&Path>) -> Result<()> {
    let lc = cfg
        .lexclass
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [lexclass] section"))?;
    if lc.gamma.is_some() {
        log::warn!("lexclass.gamma is ignored: the classifier is a linear SVM");
    }
    let embeddings: Vec<(String, StaticEmbedding)> = match &lc.embedding {
        Some(path) => {
            let emb = load_text_embedding(path)?;
            vec![(emb.method_tag().to_owned(), emb)]
        }
        None => {
            let store = load_store(require(cfg.store.as_ref(), "store")?)?;
            let spec = lc
                .method
                .as_deref()
                .or(cfg.method.as_deref())
                .unwrap_or("avg_last");
            let methods = expand_methods(spec, lc, &store)?;
            log::info!("aggregating {} candidate embeddings", methods.len());
            aggregate_many(&store, &methods)?
                .into_iter()
                .zip(&methods)
                .map(|(a, m)| (m.to_string(), a.embedding))
                .collect()
        }
    };
    let candidates: Vec<Candidate<'_>> = embeddings
        .iter()
        .map(|(label, embedding)| Candidate { label, embedding })
        .collect();
    let pool = match &lc.negatives {
        Some(p) => read_word_list(p)?,
        None => embeddings[0].1.words().map(str::to_owned).collect(),
    };
    let spec = SplitSpec::new(seed.unwrap_or(lc.seed), pool);

    let mut out = open_output(output.or(lc.output.as_deref()))?;
    for path in &lc.datasets {
        let ds = load_dataset(path, &stem(path))?;
        log::info!("{}: {} classes", ds.name, ds.classes.len());
        let report = evaluate(&candidates, &ds, &spec, &lc.c)?;
        report.write_tsv(&mut out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn eval_sim_cmd(cfg: &RunConfig, output: Option<&Path>, quartiles: bool) -> Result<()> {
    let sc = cfg
        .similarity
        .as_ref()
        .ok_or_else(|| anyhow!("config has no [similarity] section"))?;
    let emb_path = require(sc.embedding.as_ref().or(cfg.output.as_ref()), "embedding")?;
    let emb = load_text_embedding(emb_path)?;
    let mut out = open_output(output.or(sc.output.as_deref()))?;
    writeln!(out, "dataset\tspearman\tcovered\tskipped")?;
    let mut failure = None;
    for path in &sc.datasets {
        let ds = load_sim_dataset(path, &stem(path))?;
        match eval_similarity(&emb, &ds, sc.lowercase) {
            Ok(r) => writeln!(
                out,
                "{}\t{:.4}\t{}\t{}",
                ds.name, r.spearman, r.covered, r.skipped
            )?,
            Err(e) if e.is_evaluation() => {
                log::error!("{e}");
                failure = Some(e);
                continue;
            }
            Err(e) => return Err(e.into()),
        }
        if quartiles {
            match quartile_disagreements(&emb, &ds, sc.lowercase) {
                Ok(d) => {
                    for (label, list) in [
                        ("high_gold_low_cosine", &d.high_gold_low_cosine),
                        ("low_gold_high_cosine", &d.low_gold_high_cosine),
                    ] {
                        for p in list {
                            writeln!(
                                out,
                                "{}\t{label}\t{}\t{}\t{}\t{:.4}",
                                ds.name, p.a, p.b, p.gold, p.cosine
                            )?;
                        }
                    }
                }
                Err(e) if e.is_evaluation() => log::warn!("{e}"),
                Err(e) => return Err(e.into()),
            }
        }
    }
    out.flush()?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn neighbors_cmd(
    cfg: &RunConfig,
    embedding: Option<&Path>,
    word: &str,
    n: usize,
    output: Option<&Path>,
) -> Result<()> {
    let fallback = cfg
        .similarity
        .as_ref()
        .and_then(|s| s.embedding.as_deref())
        .or(cfg.output.as_deref());
    let path = embedding
        .or(fallback)
        .ok_or_else(|| anyhow!("no embedding given"))?;
    let emb = load_text_embedding(path)?;
    let list = nearest_words(&emb, word, n)?;
    let mut out = open_output(output)?;
    for (w, c) in list {
        writeln!(out, "{w}\t{c:.6}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn inspect_store_cmd(
    cfg: &RunConfig,
    store: Option<&Path>,
    vocab: bool,
    output: Option<&Path>,
) -> Result<()> {
    let path = store
        .or(cfg.store.as_deref())
        .ok_or_else(|| anyhow!("no store given"))?;
    let store = load_store(path)?;
    let mut counts: Vec<usize> = store.words().iter().map(|w| w.mention_count()).collect();
    let mut out = open_output(output)?;
    writeln!(out, "dim\t{}", store.dim())?;
    let layers: Vec<String> = store.layers().iter().map(u32::to_string).collect();
    writeln!(out, "layers\t{}", layers.join(","))?;
    writeln!(out, "masked\t{}", store.masked())?;
    writeln!(out, "words\t{}", store.num_words())?;
    writeln!(out, "mentions\t{}", store.total_mentions())?;
    counts.sort_unstable();
    if let (Some(min), Some(max)) = (counts.first(), counts.last()) {
        writeln!(
            out,
            "mentions_per_word\tmin={min}\tmedian={}\tmax={max}",
            counts[counts.len() / 2]
        )?;
    }
    if vocab {
        for w in store.words() {
            writeln!(out, "{}\t{}", w.surface, w.mention_count())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// 1 for failed evaluations, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let evaluation = err
        .chain()
        .filter_map(|e| e.downcast_ref::<Error>())
        .any(Error::is_evaluation);
    if evaluation {
        1
    } else {
        2
    }
}
