//! Run configuration, read from a TOML file.
//!
//! ```toml
//! store = "mentions.mvs"
//! method = "avg_filt_k5"
//! output = "vectors.txt"
//! report = "filter.tsv"
//!
//! [lexclass]
//! datasets = ["norms.tsv"]
//! seed = 7
//! method = "avg_filt"
//! c = [0.1, 1.0, 10.0, 100.0]
//! k = [3, 5, 10]
//! output = "lexclass.tsv"
//!
//! [similarity]
//! datasets = ["simlex.tsv"]
//! embedding = "vectors.txt"
//! ```
//!
//! Relative paths are taken relative to the directory holding the file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub store: Option<PathBuf>,
    /// Aggregation method tag, e.g. `avg_last`, `avg_filt_k5`,
    /// `avg_outl_f0.3`, `layer_eq_12`, `layer_le_12`.
    pub method: Option<String>,
    pub output: Option<PathBuf>,
    /// Filter report written next to the output for `avg_filt_*`.
    pub report: Option<PathBuf>,
    pub lexclass: Option<LexclassConfig>,
    pub similarity: Option<SimilarityConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LexclassConfig {
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate this embedding file instead of aggregating the store.
    pub embedding: Option<PathBuf>,
    /// A method tag, or a family (`avg_filt`, `avg_outl`, `layer_eq`,
    /// `layer_le`) expanded over the matching grid below.
    pub method: Option<String>,
    #[serde(default = "default_c")]
    pub c: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: Vec<usize>,
    #[serde(default = "default_fraction")]
    pub fraction: Vec<f64>,
    /// Defaults to the layers present in the store.
    pub layer: Option<Vec<u32>>,
    /// Accepted for compatibility and ignored; the classifier is linear.
    pub gamma: Option<Vec<f64>>,
    /// Word list (one per line) for train/tune negatives. Defaults to the
    /// embedding vocabulary.
    pub negatives: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimilarityConfig {
    pub datasets: Vec<PathBuf>,
    /// Defaults to the top-level `output`.
    pub embedding: Option<PathBuf>,
    #[serde(default = "yes")]
    pub lowercase: bool,
    pub output: Option<PathBuf>,
}

fn default_c() -> Vec<f64> {
    vec![0.1, 1.0, 10.0, 100.0]
}

fn default_k() -> Vec<usize> {
    vec![3, 5, 10, 20, 50, 100]
}

fn default_fraction() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg =
            Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn validate(&self) -> Result<()> {
        if let Some(lc) = &self.lexclass {
            anyhow::ensure!(!lc.c.is_empty(), "lexclass.c grid is empty");
            anyhow::ensure!(!lc.k.is_empty(), "lexclass.k grid is empty");
            anyhow::ensure!(!lc.fraction.is_empty(), "lexclass.fraction grid is empty");
            anyhow::ensure!(
                lc.c.iter().all(|c| c.is_finite() && *c > 0.0),
                "lexclass.c values must be positive"
            );
            if let Some(l) = &lc.layer {
                anyhow::ensure!(!l.is_empty(), "lexclass.layer grid is empty");
            }
        }
        Ok(())
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        let fix_opt = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                fix(p);
            }
        };
        fix_opt(&mut self.store);
        fix_opt(&mut self.output);
        fix_opt(&mut self.report);
        if let Some(lc) = &mut self.lexclass {
            lc.datasets.iter_mut().for_each(fix);
            fix_opt(&mut lc.embedding);
            fix_opt(&mut lc.negatives);
            fix_opt(&mut lc.output);
        }
        if let Some(sc) = &mut self.similarity {
            sc.datasets.iter_mut().for_each(fix);
            fix_opt(&mut sc.embedding);
            fix_opt(&mut sc.output);
        }
    }
}
