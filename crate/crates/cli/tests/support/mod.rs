#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mentionvec::{MentionStore, WordEntry};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Shape of a synthetic mention store.
#[derive(Clone, Debug)]
pub struct WorldSpec {
    pub dim: usize,
    pub classes: usize,
    pub words_per_class: usize,
    /// Words outside every class, used as negatives.
    pub distractors: usize,
    pub mentions_per_word: usize,
    /// Share of each word's mentions that are idiosyncratic.
    pub planted_fraction: f64,
    /// Length of the class direction in a contextual mention.
    pub class_signal: f32,
    /// Spread of a word's own offset around its class direction.
    pub word_spread: f32,
    /// Per-mention noise of contextual mentions.
    pub mention_noise: f32,
    /// Length of the word-specific direction of idiosyncratic mentions.
    pub planted_length: f32,
    pub planted_noise: f32,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            dim: 24,
            classes: 4,
            words_per_class: 20,
            distractors: 40,
            mentions_per_word: 20,
            planted_fraction: 0.2,
            class_signal: 1.0,
            word_spread: 0.1,
            mention_noise: 0.4,
            planted_length: 8.0,
            planted_noise: 0.02,
        }
    }
}

pub struct World {
    pub store: MentionStore,
    /// `class<TAB>word` lines.
    pub lexclass_tsv: String,
    /// Global indices of the planted idiosyncratic mentions.
    pub planted: Vec<usize>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sd: f32) -> Vec<f32> {
    let n = Normal::new(0.0f32, sd).unwrap();
    (0..dim).map(|_| n.sample(rng)).collect()
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Words grouped in classes along orthogonal directions. Most mentions of
/// a word scatter around its class direction; a planted share sits in a
/// tight clump along a direction of its own.
pub fn synthetic_world(spec: &WorldSpec, seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim;
    let planted_per_word = (spec.planted_fraction * spec.mentions_per_word as f64).round() as usize;
    let groups = spec.classes + 1;
    let mut words = Vec::new();
    let mut vectors = Vec::new();
    let mut planted = Vec::new();
    let mut tsv = String::new();
    let mut sid = 0u64;
    let mut g = 0usize;
    for group in 0..groups {
        let count = if group < spec.classes {
            spec.words_per_class
        } else {
            spec.distractors
        };
        for i in 0..count {
            let surface = if group < spec.classes {
                format!("c{group}_{i}")
            } else {
                format!("noun{i}")
            };
            if group < spec.classes {
                writeln!(tsv, "class{group}\t{surface}").unwrap();
            }
            // distractors point along the remaining axes
            let axis = if group < spec.classes {
                group
            } else {
                spec.classes + i % (d - spec.classes)
            };
            let mut centre = gaussian(&mut rng, d, spec.word_spread);
            centre[axis] += spec.class_signal;
            let own = unit(&mut rng, d);
            let mut ids = Vec::new();
            for m in 0..spec.mentions_per_word {
                sid += rng.gen_range(1..50);
                ids.push(sid);
                let v: Vec<f32> = if m < planted_per_word {
                    planted.push(g);
                    let noise = gaussian(&mut rng, d, spec.planted_noise);
                    own.iter()
                        .zip(noise)
                        .map(|(o, n)| o * spec.planted_length + n)
                        .collect()
                } else {
                    let noise = gaussian(&mut rng, d, spec.mention_noise);
                    centre.iter().zip(noise).map(|(c, n)| c + n).collect()
                };
                vectors.extend(v);
                g += 1;
            }
            words.push(WordEntry::new(surface, ids));
        }
    }
    World {
        store: MentionStore::new(d, vec![24], true, words, vectors).unwrap(),
        lexclass_tsv: tsv,
        planted,
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_mentionvec"))
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}
