//! Frozen description encoder.
//!
//! Hashed mode buckets character trigrams of each whitespace token into a
//! fixed-dimensional vector, averages the token vectors and L2-normalizes.
//! It is deterministic, training never touches it, and lexically overlapping
//! descriptions land near each other, which is what the policy architecture
//! relies on. File mode loads an exact description -> vector table so real
//! language-model embeddings can be dropped in.

use std::collections::BTreeMap;
use std::path::Path;

use crate::FeatureError;

pub const DEFAULT_DESC_DIM: usize = 64;

#[derive(Debug, Clone)]
pub enum DescriptionEncoder {
    Hashed { dim: usize },
    Table { dim: usize, map: BTreeMap<String, Vec<f64>> },
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl DescriptionEncoder {
    pub fn hashed(dim: usize) -> Self {
        assert!(dim > 0);
        DescriptionEncoder::Hashed { dim }
    }

    /// Loads a JSON map `description -> [floats; dim]`. Vectors are
    /// L2-normalized on load.
    pub fn from_table_file(path: &Path) -> Result<Self, FeatureError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FeatureError::EncoderTable(format!("cannot read {}: {e}", path.display())))?;
        let raw: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text)
            .map_err(|e| FeatureError::EncoderTable(format!("bad table JSON: {e}")))?;
        let dim = raw
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| FeatureError::EncoderTable("empty embedding table".into()))?;
        let mut map = BTreeMap::new();
        for (k, mut v) in raw {
            if v.len() != dim {
                return Err(FeatureError::EncoderTable(format!(
                    "vector for {k:?} has length {}, expected {dim}",
                    v.len()
                )));
            }
            normalize(&mut v);
            map.insert(k, v);
        }
        Ok(DescriptionEncoder::Table { dim, map })
    }

    pub fn dim(&self) -> usize {
        match self {
            DescriptionEncoder::Hashed { dim } => *dim,
            DescriptionEncoder::Table { dim, .. } => *dim,
        }
    }

    /// L2-normalized vector for a non-empty description.
    pub fn encode(&self, text: &str) -> Result<Vec<f64>, FeatureError> {
        if text.trim().is_empty() {
            return Err(FeatureError::EmptyDescription);
        }
        match self {
            DescriptionEncoder::Hashed { dim } => Ok(hash_encode(text, *dim)),
            DescriptionEncoder::Table { map, .. } => map
                .get(text)
                .cloned()
                .ok_or_else(|| FeatureError::MissingDescription(text.to_string())),
        }
    }
}

fn hash_encode(text: &str, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut tokens = 0usize;
    for token in text.split_whitespace() {
        tokens += 1;
        let bytes = token.as_bytes();
        if bytes.len() < 3 {
            acc[(fnv1a(bytes) % dim as u64) as usize] += 1.0;
            continue;
        }
        for tri in bytes.windows(3) {
            acc[(fnv1a(tri) % dim as u64) as usize] += 1.0;
        }
    }
    for v in acc.iter_mut() {
        *v /= tokens as f64;
    }
    normalize(&mut acc);
    acc
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-12)
}
