//! Review-text vectors for content similarity.
//!
//! Two modes: a hashed term-frequency bag (no external model) and a
//! pretrained word-vector table where a review is the mean of its token
//! vectors. Texts without any usable token map to the zero vector, whose
//! cosine with anything is 0.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Dataset;

pub const HASH_BUCKETS: u32 = 1 << 15;

#[derive(Clone, Debug, PartialEq)]
pub enum TextVec {
    /// Sorted (bucket, weight) pairs, L2-normalized.
    Sparse(Vec<(u32, f32)>),
    /// Dense vector, L2-normalized (or all zeros).
    Dense(Vec<f32>),
    Zero,
}

impl TextVec {
    pub fn is_zero(&self) -> bool {
        matches!(self, TextVec::Zero)
    }

    pub fn cosine(&self, other: &TextVec) -> f64 {
        match (self, other) {
            (TextVec::Sparse(a), TextVec::Sparse(b)) => {
                let (mut i, mut j) = (0, 0);
                let mut dot = 0.0f64;
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            dot += f64::from(a[i].1) * f64::from(b[j].1);
                            i += 1;
                            j += 1;
                        }
                    }
                }
                dot.clamp(-1.0, 1.0)
            }
            (TextVec::Dense(a), TextVec::Dense(b)) => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
                dot.clamp(-1.0, 1.0)
            }
            _ => 0.0,
        }
    }
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug)]
pub enum TextVectorizer {
    HashedTermFrequency { buckets: u32 },
    PretrainedWordVectors(WordVectors),
}

impl Default for TextVectorizer {
    fn default() -> Self {
        TextVectorizer::HashedTermFrequency { buckets: HASH_BUCKETS }
    }
}

impl TextVectorizer {
    pub fn pretrained(path: &Path) -> Result<Self> {
        Ok(TextVectorizer::PretrainedWordVectors(WordVectors::load(path)?))
    }

    pub fn vectorize(&self, text: &str) -> TextVec {
        match self {
            TextVectorizer::HashedTermFrequency { buckets } => {
                let mut counts: HashMap<u32, f32> = HashMap::new();
                for tok in tokenize(text) {
                    *counts
                        .entry((fnv1a(tok.as_bytes()) % u64::from(*buckets)) as u32)
                        .or_default() += 1.0;
                }
                if counts.is_empty() {
                    return TextVec::Zero;
                }
                let mut v: Vec<(u32, f32)> = counts.into_iter().collect();
                v.sort_unstable_by_key(|&(k, _)| k);
                let norm = v.iter().map(|&(_, w)| w * w).sum::<f32>().sqrt();
                v.iter_mut().for_each(|(_, w)| *w /= norm);
                TextVec::Sparse(v)
            }
            TextVectorizer::PretrainedWordVectors(table) => table.embed(text),
        }
    }

    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        self.vectorize(a).cosine(&self.vectorize(b))
    }

    /// Vectors for every review in `dataset`, aligned with `dataset.reviews()`.
    pub fn vectorize_dataset(&self, dataset: &Dataset) -> ReviewVectors {
        use rayon::prelude::*;
        ReviewVectors(dataset.reviews().par_iter().map(|r| self.vectorize(&r.text)).collect())
    }
}

#[derive(Clone, Debug)]
pub struct ReviewVectors(pub Vec<TextVec>);

impl ReviewVectors {
    pub fn get(&self, review: usize) -> &TextVec {
        &self.0[review]
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        self.0[a].cosine(&self.0[b])
    }
}

/// Token → vector table in the common text format: `token f1 .. fd` per line,
/// with an optional leading `count dim` header.
#[derive(Clone, Debug)]
pub struct WordVectors {
    dim: usize,
    table: HashMap<String, Vec<f32>>,
}

impl WordVectors {
    pub fn from_table(dim: usize, table: HashMap<String, Vec<f32>>) -> Result<Self> {
        if let Some((tok, _)) = table.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::InvalidParams(format!(
                "word vector for {tok:?} has wrong dimension"
            )));
        }
        Ok(WordVectors { dim, table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut dim = None;
        let mut table = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if n == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|f| f.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::format(path, format!("line {}: expected {d} values", n + 1)))
                }
                _ => {}
            }
            table.insert(fields[0].to_lowercase(), values);
        }
        let dim = dim.ok_or_else(|| Error::format(path, "no word vectors"))?;
        Ok(WordVectors { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> TextVec {
        let mut sum = vec![0.0f32; self.dim];
        let mut n = 0usize;
        for tok in tokenize(text) {
            if let Some(v) = self.table.get(&tok) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        if n == 0 {
            return TextVec::Zero;
        }
        let norm = sum.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm == 0.0 {
            return TextVec::Zero;
        }
        // The mean and the sum share a direction; normalizing either gives the
        // same unit vector.
        sum.iter_mut().for_each(|x| *x /= norm);
        TextVec::Dense(sum)
    }
}
