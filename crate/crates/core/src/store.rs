//! Mention-vector store and its binary file format.
//!
//! A [`MentionStore`] holds, for every target word, the contextualised
//! vectors of its sampled mentions, optionally across several model layers.
//! The on-disk layout (all integers little-endian):
//!
//! ```text
//! "MVS1" | version u8 = 1 | masked u8 (0/1) | reserved u16 = 0
//! dim u32 | layer_count u32 | layer_count x u32 layer index (ascending)
//! word_count u64
//! per word: surface_len u16 | surface utf-8 | mention_count u32 | mention_count x u64 sentence id
//! vector block: word -> mention -> layer -> dim x f32
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"MVS1";
pub const FORMAT_VERSION: u8 = 1;

/// Floats are read in chunks of this size so a corrupted header cannot
/// trigger a huge up-front allocation.
const READ_CHUNK_FLOATS: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordEntry {
    pub surface: String,
    /// Provenance back-references into the source corpus, one per mention.
    pub sentence_ids: Vec<u64>,
}

impl WordEntry {
    pub fn new(surface: impl Into<String>, sentence_ids: Vec<u64>) -> Self {
        Self {
            surface: surface.into(),
            sentence_ids,
        }
    }

    pub fn mention_count(&self) -> usize {
        self.sentence_ids.len()
    }
}

/// Identifies one mention by word position and mention position within
/// that word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MentionId {
    pub word: usize,
    pub mention: usize,
}

/// Immutable collection of per-word mention vectors.
///
/// Mentions are also addressable by a global index: the mentions of word 0
/// come first, then word 1, and so on. Ordering by global index is the same
/// as ordering by `(word, mention)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MentionStore {
    dim: usize,
    layers: Vec<u32>,
    masked: bool,
    words: Vec<WordEntry>,
    /// Global index of each word's first mention, plus a trailing total.
    offsets: Vec<usize>,
    vectors: Vec<f32>,
}

impl MentionStore {
    pub fn new(
        dim: usize,
        layers: Vec<u32>,
        masked: bool,
        words: Vec<WordEntry>,
        vectors: Vec<f32>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("store", "dim must be positive"));
        }
        if dim > u32::MAX as usize {
            return Err(Error::invalid("store", "dim does not fit in u32"));
        }
        validate_layers(&layers).map_err(|reason| Error::invalid("store", reason))?;
        if words.is_empty() {
            return Err(Error::invalid("store", "empty store"));
        }

        let mut seen = HashMap::with_capacity(words.len());
        let mut offsets = Vec::with_capacity(words.len() + 1);
        let mut total = 0usize;
        for (i, word) in words.iter().enumerate() {
            if word.surface.is_empty() {
                return Err(Error::invalid(
                    "store",
                    format!("word {i} has an empty surface"),
                ));
            }
            if word.surface.len() > u16::MAX as usize {
                return Err(Error::invalid(
                    "store",
                    format!("surface of word {i} is longer than {} bytes", u16::MAX),
                ));
            }
            if word.mention_count() == 0 {
                return Err(Error::invalid(
                    "store",
                    format!("word {:?} has no mentions", word.surface),
                ));
            }
            if word.mention_count() > u32::MAX as usize {
                return Err(Error::invalid(
                    "store",
                    format!("word {:?} has too many mentions", word.surface),
                ));
            }
            if seen.insert(word.surface.as_str(), i).is_some() {
                return Err(Error::invalid(
                    "store",
                    format!("duplicate word {:?}", word.surface),
                ));
            }
            offsets.push(total);
            total += word.mention_count();
        }
        offsets.push(total);

        let expected = total
            .checked_mul(layers.len())
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::invalid("store", "vector block size overflows"))?;
        if vectors.len() != expected {
            return Err(Error::invalid(
                "store",
                format!(
                    "vector block has {} floats, expected {expected} ({total} mentions x {} layers x {dim} dims)",
                    vectors.len(),
                    layers.len()
                ),
            ));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "store",
                format!("non-finite value at vector block offset {pos}"),
            ));
        }

        Ok(Self {
            dim,
            layers,
            masked,
            words,
            offsets,
            vectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[u32] {
        &self.layers
    }

    pub fn masked(&self) -> bool {
        self.masked
    }

    pub fn words(&self) -> &[WordEntry] {
        &self.words
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn total_mentions(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_single_layer(&self) -> bool {
        self.layers.len() == 1
    }

    pub fn last_layer(&self) -> u32 {
        *self.layers.last().unwrap()
    }

    /// The raw vector block in `[word][mention][layer][dim]` order.
    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn word_index(&self, surface: &str) -> Option<usize> {
        self.words.iter().position(|w| w.surface == surface)
    }

    /// Global mention indices belonging to `word`.
    pub fn mention_range(&self, word: usize) -> Range<usize> {
        self.offsets[word]..self.offsets[word + 1]
    }

    pub fn global_index(&self, id: MentionId) -> usize {
        self.offsets[id.word] + id.mention
    }

    pub fn locate(&self, global: usize) -> MentionId {
        assert!(global < self.total_mentions(), "mention index out of range");
        // offsets is sorted; find the last word whose first mention is <= global
        let word = self.offsets.partition_point(|&o| o <= global) - 1;
        MentionId {
            word,
            mention: global - self.offsets[word],
        }
    }

    /// Vector of mention `global` at layer position `layer_pos` (an index
    /// into [`layers`](Self::layers), not a layer number).
    pub fn vector(&self, global: usize, layer_pos: usize) -> &[f32] {
        let start = (global * self.layers.len() + layer_pos) * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn layer_position(&self, layer: u32) -> Result<usize> {
        self.layers
            .binary_search(&layer)
            .map_err(|_| Error::MissingLayer(layer))
    }

    /// Restricts the store to a single layer.
    pub fn slice_layer(&self, layer: u32) -> Result<MentionStore> {
        let pos = self.layer_position(layer)?;
        let total = self.total_mentions();
        let mut vectors = Vec::with_capacity(total * self.dim);
        for g in 0..total {
            vectors.extend_from_slice(self.vector(g, pos));
        }
        Ok(MentionStore {
            dim: self.dim,
            layers: vec![layer],
            masked: self.masked,
            words: self.words.clone(),
            offsets: self.offsets.clone(),
            vectors,
        })
    }

    /// Collapses layers `1..=ell` into their per-mention arithmetic mean. The
    /// result is a single-layer store labelled with layer `ell`.
    pub fn average_first_layers(&self, ell: u32) -> Result<MentionStore> {
        if ell == 0 {
            return Err(Error::MissingLayer(0));
        }
        let positions = (1..=ell)
            .map(|l| self.layer_position(l))
            .collect::<Result<Vec<_>>>()?;
        let total = self.total_mentions();
        let mut vectors = Vec::with_capacity(total * self.dim);
        let mut acc = vec![0f64; self.dim];
        for g in 0..total {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &p in &positions {
                for (a, &v) in acc.iter_mut().zip(self.vector(g, p)) {
                    *a += v as f64;
                }
            }
            let n = positions.len() as f64;
            vectors.extend(acc.iter().map(|a| (a / n) as f32));
        }
        Ok(MentionStore {
            dim: self.dim,
            layers: vec![ell],
            masked: self.masked,
            words: self.words.clone(),
            offsets: self.offsets.clone(),
            vectors,
        })
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&[FORMAT_VERSION, self.masked as u8, 0, 0])?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for &l in &self.layers {
            out.write_all(&l.to_le_bytes())?;
        }
        out.write_all(&(self.words.len() as u64).to_le_bytes())?;
        for w in &self.words {
            out.write_all(&(w.surface.len() as u16).to_le_bytes())?;
            out.write_all(w.surface.as_bytes())?;
            out.write_all(&(w.mention_count() as u32).to_le_bytes())?;
            for id in &w.sentence_ids {
                out.write_all(&id.to_le_bytes())?;
            }
        }
        let mut buf = Vec::with_capacity(4 * READ_CHUNK_FLOATS);
        for chunk in self.vectors.chunks(READ_CHUNK_FLOATS) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            out.write_all(&buf)?;
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    /// Decodes a store, rejecting anything that would violate the store
    /// invariants. Errors name the offending field.
    pub fn read_from<R: Read>(input: R) -> Result<MentionStore> {
        let mut r = FieldReader { inner: input };

        let magic: [u8; 4] = r.array("magic")?;
        if &magic != MAGIC {
            return Err(Error::format("magic", format!("bad magic {magic:?}")));
        }
        let [version, masked, res0, res1]: [u8; 4] = r.array("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::format(
                "version",
                format!("version mismatch: file has {version}, expected {FORMAT_VERSION}"),
            ));
        }
        let masked = match masked {
            0 => false,
            1 => true,
            other => {
                return Err(Error::format(
                    "masked",
                    format!("flag must be 0 or 1, got {other}"),
                ))
            }
        };
        if res0 != 0 || res1 != 0 {
            return Err(Error::format("reserved", "reserved bytes must be zero"));
        }

        let dim = r.u32("dim")? as usize;
        if dim == 0 {
            return Err(Error::format("dim", "dim must be positive"));
        }
        let layer_count = r.u32("layer_count")? as usize;
        if layer_count == 0 {
            return Err(Error::format(
                "layer_count",
                "at least one layer is required",
            ));
        }
        let mut layers = Vec::with_capacity(layer_count.min(1024));
        for _ in 0..layer_count {
            layers.push(r.u32("layer_indices")?);
        }
        validate_layers(&layers).map_err(|reason| Error::format("layer_indices", reason))?;

        let word_count = r.u64("word_count")?;
        if word_count == 0 {
            return Err(Error::format("word_count", "empty store"));
        }
        let mut words = Vec::new();
        let mut seen = HashMap::new();
        let mut total_mentions = 0usize;
        for i in 0..word_count {
            let len = r.u16("surface_len")? as usize;
            if len == 0 {
                return Err(Error::format(
                    "surface",
                    format!("word {i} has an empty surface"),
                ));
            }
            let bytes = r.bytes(len, "surface")?;
            let surface = String::from_utf8(bytes)
                .map_err(|_| Error::format("surface", format!("word {i} is not valid utf-8")))?;
            if seen.insert(surface.clone(), i).is_some() {
                return Err(Error::format(
                    "surface",
                    format!("duplicate word {surface:?}"),
                ));
            }
            let count = r.u32("mention_count")? as usize;
            if count == 0 {
                return Err(Error::format(
                    "mention_count",
                    format!("word {surface:?} has zero mentions"),
                ));
            }
            let mut ids = Vec::with_capacity(count.min(4096));
            for _ in 0..count {
                ids.push(r.u64("sentence_ids")?);
            }
            total_mentions += count;
            words.push(WordEntry::new(surface, ids));
        }

        let floats = total_mentions
            .checked_mul(layer_count)
            .and_then(|n| n.checked_mul(dim))
            .ok_or_else(|| Error::format("vector block", "size overflows"))?;
        let mut vectors = Vec::with_capacity(floats.min(READ_CHUNK_FLOATS));
        let mut buf = vec![0u8; 4 * READ_CHUNK_FLOATS.min(floats)];
        let mut remaining = floats;
        while remaining > 0 {
            let n = remaining.min(READ_CHUNK_FLOATS);
            let bytes = &mut buf[..4 * n];
            r.fill(bytes, "vector block")?;
            for c in bytes.chunks_exact(4) {
                let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
                if !v.is_finite() {
                    let offset = vectors.len();
                    let mention = offset / (layer_count * dim);
                    return Err(Error::format(
                        "vector block",
                        format!("non-finite value {v} in global mention {mention} (float offset {offset})"),
                    ));
                }
                vectors.push(v);
            }
            remaining -= n;
        }

        let mut probe = [0u8; 1];
        loop {
            match r.inner.read(&mut probe) {
                Ok(0) => break,
                Ok(_) => {
                    return Err(Error::format(
                        "trailer",
                        "trailing bytes after vector block",
                    ))
                }
                Err(e) if e.kind() == ErrorKind::Interrupted => continue,
                Err(e) => return Err(Error::Stream(e)),
            }
        }

        MentionStore::new(dim, layers, masked, words, vectors)
    }
}

fn validate_layers(layers: &[u32]) -> std::result::Result<(), String> {
    if layers.is_empty() {
        return Err("at least one layer is required".into());
    }
    if layers[0] == 0 {
        return Err("layer indices must be positive".into());
    }
    if let Some(w) = layers.windows(2).find(|w| w[0] >= w[1]) {
        return Err(format!(
            "layer indices must be strictly increasing ({} then {})",
            w[0], w[1]
        ));
    }
    Ok(())
}

struct FieldReader<R> {
    inner: R,
}

impl<R: Read> FieldReader<R> {
    fn fill(&mut self, buf: &mut [u8], field: &'static str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| {
            if e.kind() == ErrorKind::UnexpectedEof {
                Error::format(field, "truncated payload")
            } else {
                Error::Stream(e)
            }
        })
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, field)?;
        Ok(b)
    }

    fn bytes(&mut self, len: usize, field: &'static str) -> Result<Vec<u8>> {
        let mut b = vec![0u8; len];
        self.fill(&mut b, field)?;
        Ok(b)
    }

    fn u16(&mut self, field: &'static str) -> Result<u16> {
        self.array(field).map(u16::from_le_bytes)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32> {
        self.array(field).map(u32::from_le_bytes)
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        self.array(field).map(u64::from_le_bytes)
    }
}

pub fn write_store(store: &MentionStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    store
        .write_to(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

pub fn read_store(path: impl AsRef<Path>) -> Result<MentionStore> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    MentionStore::read_from(BufReader::new(file))
}
