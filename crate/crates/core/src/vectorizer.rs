//! Feature hashing of word lists into fixed-dimension count vectors.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::category::Category;
use crate::corpus::EnterpriseRecord;
use crate::segmenter::{feature_words, segment, Lexicon};

pub const DEFAULT_DIM: usize = 15_000;

const FNV32_OFFSET: u32 = 0x811c_9dc5;
const FNV32_PRIME: u32 = 0x0100_0193;
const FNV64_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV64_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a_32(bytes: &[u8]) -> u32 {
    bytes
        .iter()
        .fold(FNV32_OFFSET, |h, &b| (h ^ u32::from(b)).wrapping_mul(FNV32_PRIME))
}

pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV64_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV64_PRIME))
}

pub fn hash_index(word: &str, dim: usize) -> u32 {
    (fnv1a_32(word.as_bytes()) as u64 % dim as u64) as u32
}

/// Sparse count vector. Indices strictly increase and every count is positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(u32, u32)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        SparseVector { dim, entries: Vec::new() }
    }

    /// Builds a vector from arbitrary `(index, count)` pairs, merging duplicates
    /// and dropping zero counts.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (u32, u32)>) -> Self {
        assert!(dim >= 1, "dimension must be positive");
        let mut acc: BTreeMap<u32, u32> = BTreeMap::new();
        for (i, c) in pairs {
            assert!((i as usize) < dim, "index {i} out of range for dimension {dim}");
            *acc.entry(i).or_default() += c;
        }
        SparseVector {
            dim,
            entries: acc.into_iter().filter(|&(_, c)| c > 0).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, u32)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    pub fn get(&self, index: u32) -> u32 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|k| self.entries[k].1)
            .unwrap_or(0)
    }
}

impl fmt::Display for SparseVector {
    /// `idx:count,...`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (i, c)) in self.entries.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}:{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub label: Category,
    pub vector: SparseVector,
}

pub fn hash_vector<S: AsRef<str>>(words: &[S], dim: usize) -> SparseVector {
    SparseVector::from_pairs(dim, words.iter().map(|w| (hash_index(w.as_ref(), dim), 1)))
}

/// Feature vector of the record's name; `None` when the name is absent.
pub fn record_vector(record: &EnterpriseRecord, lexicon: &Lexicon, dim: usize) -> Option<SparseVector> {
    let name = record.name.as_deref()?;
    let tokens = segment(name, lexicon);
    Some(hash_vector(&feature_words(&tokens), dim))
}

/// Training example for a record; `None` when the name or category is absent.
pub fn to_labeled(record: &EnterpriseRecord, lexicon: &Lexicon, dim: usize) -> Option<LabeledPoint> {
    let label = record.category?;
    record_vector(record, lexicon, dim).map(|vector| LabeledPoint { label, vector })
}

/// One `id<TAB>label<TAB>idx:count,...` line.
pub fn dump_line(id: &str, label: Option<Category>, vector: &SparseVector) -> String {
    format!(
        "{id}\t{}\t{vector}",
        label.map(|c| c.symbol()).unwrap_or_default()
    )
}
