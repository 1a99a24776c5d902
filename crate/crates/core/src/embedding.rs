//! Static word embeddings and the plain-text vector format
//! (`word v1 v2 ... vd`, one record per line).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Word to dense vector map. Iteration follows insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticEmbedding {
    dim: usize,
    entries: IndexMap<String, Vec<f32>>,
    method_tag: String,
}

impl StaticEmbedding {
    pub fn new(dim: usize, method_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding", "dim must be positive"));
        }
        Ok(Self {
            dim,
            entries: IndexMap::new(),
            method_tag: method_tag.into(),
        })
    }

    pub fn insert(&mut self, word: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let word = word.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "embedding",
                format!("non-finite value for {word:?}"),
            ));
        }
        if self.entries.contains_key(&word) {
            return Err(Error::invalid(
                "embedding",
                format!("duplicate word {word:?}"),
            ));
        }
        self.entries.insert(word, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn method_tag(&self) -> &str {
        &self.method_tag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(w, v)| (w.as_str(), v.as_slice()))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (word, vector) in &self.entries {
            if word.is_empty() || word.chars().any(char::is_whitespace) {
                return Err(Error::invalid(
                    "embedding",
                    format!("word {word:?} cannot be written in the text format"),
                ));
            }
            out.write_all(word.as_bytes())?;
            for v in vector {
                // `Display` for f32 prints the shortest string that parses back exactly
                write!(out, " {v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R, method_tag: impl Into<String>) -> Result<Self> {
        let mut emb: Option<StaticEmbedding> = None;
        let method_tag = method_tag.into();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let mut tokens = line.split_whitespace();
            let Some(word) = tokens.next() else {
                continue;
            };
            let vector = tokens
                .map(|t| {
                    t.parse::<f32>().map_err(|_| Error::Parse {
                        line: lineno,
                        reason: format!("non-numeric token {t:?}"),
                    })
                })
                .collect::<Result<Vec<f32>>>()?;
            if vector.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("word {word:?} has no values"),
                });
            }
            let emb = match &mut emb {
                Some(e) => e,
                None => emb.insert(StaticEmbedding::new(vector.len(), method_tag.clone())?),
            };
            if vector.len() != emb.dim {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!(
                        "ragged rows: expected {} values, got {}",
                        emb.dim,
                        vector.len()
                    ),
                });
            }
            if emb.contains(word) {
                return Err(Error::Parse {
                    line: lineno,
                    reason: format!("duplicate word {word:?}"),
                });
            }
            emb.insert(word, vector).map_err(|e| Error::Parse {
                line: lineno,
                reason: e.to_string(),
            })?;
        }
        emb.ok_or_else(|| Error::invalid("embedding", "file contains no vectors"))
    }
}

pub fn load_text_embedding(path: impl AsRef<Path>) -> Result<StaticEmbedding> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "text".to_owned());
    StaticEmbedding::read_text(BufReader::new(file), tag)
}

pub fn write_text_embedding(emb: &StaticEmbedding, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    emb.write_text(BufWriter::new(file))
}
