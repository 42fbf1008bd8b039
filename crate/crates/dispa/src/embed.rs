//! Drug- and substructure-level embedding vectors.
//!
//! Two modes: `file` loads precomputed vectors (e.g. 768-dim encoder
//! output) from CSV, `hashed` builds deterministic signed-hash embeddings
//! from counted character n-grams of the SMILES string. The hash is a fixed
//! 64-bit mix so vectors are bit-identical across runs and platforms.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::brics::Fragment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingMode {
    File,
    Hashed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// Vector dimension; 64 is the desk-scale default, file mode commonly
    /// carries 768.
    pub dim: usize,
    pub mode: EmbeddingMode,
    /// Inclusive n-gram length range for hashed mode.
    pub ngram_range: (usize, usize),
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 64,
            mode: EmbeddingMode::Hashed,
            ngram_range: (1, 3),
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 8 {
            return Err(Error::Embedding(format!("dim {} < 8", self.dim)));
        }
        if self.ngram_range.0 == 0 || self.ngram_range.0 > self.ngram_range.1 {
            return Err(Error::Embedding(format!(
                "bad ngram range {:?}",
                self.ngram_range
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugEmbedding {
    pub drug_id: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEmbeddings {
    pub drug_id: String,
    /// One row per fragment, fragment order preserved.
    pub matrix: Vec<Vec<f64>>,
}

/// Fixed seed for the embedding hash; part of the on-disk fixture contract.
const HASH_SEED: u64 = 0x5d15_a0f0_9e37_79b9;

fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn hash_ngram(bytes: &[u8]) -> u64 {
    let mut h = HASH_SEED;
    for &b in bytes {
        h = mix(h ^ b as u64);
    }
    h
}

/// Signed-hash embedding of counted character n-grams, L2-normalized.
pub fn embed_string(s: &str, cfg: &EmbeddingConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.mode != EmbeddingMode::Hashed {
        return Err(Error::Embedding("embed_string requires hashed mode".into()));
    }
    if s.is_empty() {
        return Err(Error::Embedding("cannot embed an empty string".into()));
    }
    let bytes = s.as_bytes();
    let mut v = vec![0.0f64; cfg.dim];
    for n in cfg.ngram_range.0..=cfg.ngram_range.1 {
        if n > bytes.len() {
            break;
        }
        for window in bytes.windows(n) {
            let h = hash_ngram(window);
            let bucket = (h % cfg.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        // All n-gram signs cancelled; fall back to a single deterministic
        // indicator so the unit-norm contract still holds.
        let h = hash_ngram(bytes);
        v[(h % cfg.dim as u64) as usize] = 1.0;
    }
    Ok(v)
}

/// Precomputed embeddings keyed by drug id (drug level) and by
/// (drug id, fragment index) (substructure level).
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    pub dim: usize,
    pub drug: HashMap<String, Vec<f64>>,
    pub fragment: HashMap<(String, usize), Vec<f64>>,
}

/// Load an embedding CSV. Header: `drug_id[,fragment_index],v0..v{d-1}`.
/// Rows with an empty fragment_index (or no such column) are drug-level.
pub fn load_embedding_file(path: &Path) -> Result<EmbeddingStore> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let has_frag = headers.iter().any(|h| h == "fragment_index");
    let id_cols = if has_frag { 2 } else { 1 };
    let dim = headers.len().saturating_sub(id_cols);
    if dim == 0 {
        return Err(Error::Embedding("embedding file has no value columns".into()));
    }

    let mut store = EmbeddingStore {
        dim,
        ..Default::default()
    };
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != headers.len() {
            return Err(Error::Embedding(format!(
                "row {line}: expected {} fields, found {}",
                headers.len(),
                rec.len()
            )));
        }
        let drug_id = rec.get(0).unwrap_or("").to_string();
        let frag: Option<usize> = if has_frag {
            let f = rec.get(1).unwrap_or("").trim();
            if f.is_empty() {
                None
            } else {
                Some(f.parse().map_err(|_| {
                    Error::Embedding(format!("row {line}: bad fragment_index '{f}'"))
                })?)
            }
        } else {
            None
        };
        let mut vector = Vec::with_capacity(dim);
        for field in rec.iter().skip(id_cols) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Embedding(format!("row {line}: non-numeric value")))?;
            vector.push(v);
        }
        let duplicate = match frag {
            Some(fi) => store.fragment.insert((drug_id.clone(), fi), vector).is_some(),
            None => store.drug.insert(drug_id.clone(), vector).is_some(),
        };
        if duplicate {
            return Err(Error::Embedding(format!(
                "row {line}: duplicate key ({drug_id}, {frag:?})"
            )));
        }
    }
    Ok(store)
}

/// Produce the drug-level vector and one substructure row per fragment.
pub fn embed_drug(
    drug_id: &str,
    smiles: &str,
    fragments: &[Fragment],
    cfg: &EmbeddingConfig,
    store: Option<&EmbeddingStore>,
) -> Result<(DrugEmbedding, SubEmbeddings)> {
    cfg.validate()?;
    if fragments.is_empty() {
        return Err(Error::Embedding(format!("drug '{drug_id}' has no fragments")));
    }
    match cfg.mode {
        EmbeddingMode::Hashed => {
            let vector = embed_string(smiles, cfg)?;
            let matrix = fragments
                .iter()
                .map(|f| embed_string(&f.smiles, cfg))
                .collect::<Result<Vec<_>>>()?;
            Ok((
                DrugEmbedding {
                    drug_id: drug_id.to_string(),
                    vector,
                },
                SubEmbeddings {
                    drug_id: drug_id.to_string(),
                    matrix,
                },
            ))
        }
        EmbeddingMode::File => {
            let store = store.ok_or_else(|| {
                Error::Embedding("file mode requires a loaded embedding store".into())
            })?;
            if store.dim != cfg.dim {
                return Err(Error::Embedding(format!(
                    "embedding file dim {} does not match configured dim {}",
                    store.dim, cfg.dim
                )));
            }
            let vector = store
                .drug
                .get(drug_id)
                .cloned()
                .ok_or_else(|| Error::Embedding(format!("no drug-level row for '{drug_id}'")))?;
            let mut matrix = Vec::with_capacity(fragments.len());
            for fi in 0..fragments.len() {
                let row = store
                    .fragment
                    .get(&(drug_id.to_string(), fi))
                    .cloned()
                    .ok_or_else(|| {
                        Error::Embedding(format!(
                            "no fragment row for drug '{drug_id}' fragment {fi}"
                        ))
                    })?;
                matrix.push(row);
            }
            Ok((
                DrugEmbedding {
                    drug_id: drug_id.to_string(),
                    vector,
                },
                SubEmbeddings {
                    drug_id: drug_id.to_string(),
                    matrix,
                },
            ))
        }
    }
}
