//! Multinomial Naive Bayes over hashed count vectors.

use serde::{Deserialize, Serialize};

use crate::category::NUM_CATEGORIES;
use crate::partition::map_reduce;
use crate::vectorizer::{LabeledPoint, SparseVector};

/// Sufficient statistics: documents per class and per-class feature counts.
/// Merging is exact integer addition, so any partitioning gives the same result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NbStats {
    pub dim: usize,
    pub class_docs: Vec<u64>,
    /// `NUM_CATEGORIES` rows of `dim` counts.
    pub feature_counts: Vec<Vec<u64>>,
}

impl NbStats {
    pub fn new(dim: usize) -> Self {
        NbStats {
            dim,
            class_docs: vec![0; NUM_CATEGORIES],
            feature_counts: vec![vec![0; dim]; NUM_CATEGORIES],
        }
    }

    pub fn observe(&mut self, point: &LabeledPoint) {
        let c = point.label.index();
        self.class_docs[c] += 1;
        let row = &mut self.feature_counts[c];
        for &(i, n) in point.vector.entries() {
            row[i as usize] += u64::from(n);
        }
    }

    pub fn from_points(dim: usize, points: &[LabeledPoint]) -> Self {
        let mut s = NbStats::new(dim);
        for p in points {
            s.observe(p);
        }
        s
    }

    /// Statistics of `points` computed over `workers` partitions and merged.
    pub fn partitioned(dim: usize, points: &[LabeledPoint], workers: usize) -> Self {
        map_reduce(points, workers, |part| NbStats::from_points(dim, part), NbStats::merge)
            .unwrap_or_else(|| NbStats::new(dim))
    }

    pub fn merge(mut self, other: NbStats) -> NbStats {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.class_docs.iter_mut().zip(&other.class_docs) {
            *a += b;
        }
        for (ra, rb) in self.feature_counts.iter_mut().zip(&other.feature_counts) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        self
    }

    pub fn documents(&self) -> u64 {
        self.class_docs.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "NbRepr", into = "NbRepr")]
pub struct NaiveBayes {
    pub alpha: f64,
    stats: NbStats,
    log_prior: Vec<f64>,
    /// Row `c` is a normalized distribution over features, in log space.
    log_likelihood: Vec<Vec<f64>>,
}

impl NaiveBayes {
    /// Class log-priors are `log(n_c / n)`. When some class has no documents
    /// every prior is smoothed to `(n_c + alpha) / (n + alpha K)` instead.
    pub fn from_stats(stats: NbStats, alpha: f64) -> Self {
        let n = stats.documents() as f64;
        let k = NUM_CATEGORIES as f64;
        let smooth_prior = stats.class_docs.contains(&0);
        let log_prior = stats
            .class_docs
            .iter()
            .map(|&nc| {
                let nc = nc as f64;
                if smooth_prior {
                    ((nc + alpha) / (n + alpha * k)).ln()
                } else {
                    (nc / n).ln()
                }
            })
            .collect();
        let dim = stats.dim as f64;
        let log_likelihood = stats
            .feature_counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = (total as f64 + alpha * dim).ln();
                row.iter().map(|&c| (c as f64 + alpha).ln() - denom).collect()
            })
            .collect();
        NaiveBayes {
            alpha,
            stats,
            log_prior,
            log_likelihood,
        }
    }

    pub fn dim(&self) -> usize {
        self.stats.dim
    }

    pub fn stats(&self) -> &NbStats {
        &self.stats
    }

    pub fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    pub fn log_likelihood(&self, class: usize) -> &[f64] {
        &self.log_likelihood[class]
    }

    /// Unnormalized log joint `log P(c) + sum_j x_j log P(j | c)`.
    pub fn log_joint(&self, x: &SparseVector) -> Vec<f64> {
        (0..NUM_CATEGORIES)
            .map(|c| {
                let row = &self.log_likelihood[c];
                self.log_prior[c]
                    + x.entries()
                        .iter()
                        .map(|&(i, n)| f64::from(n) * row[i as usize])
                        .sum::<f64>()
            })
            .collect()
    }

    /// Most probable class. Log joints within `TIE_EPS` (relative) of the
    /// maximum count as tied, and ties go to the lowest class index, so the
    /// choice does not hinge on rounding.
    pub fn predict_class(&self, x: &SparseVector) -> usize {
        let joint = self.log_joint(x);
        let max = joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let eps = TIE_EPS * max.abs().max(1.0);
        joint.iter().position(|&j| j >= max - eps).unwrap_or(0)
    }

    pub fn log_posterior(&self, x: &SparseVector) -> Vec<f64> {
        let joint = self.log_joint(x);
        let lse = log_sum_exp(&joint);
        joint.into_iter().map(|j| j - lse).collect()
    }
}

pub const TIE_EPS: f64 = 1e-12;

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Serialize, Deserialize)]
struct NbRepr {
    alpha: f64,
    dim: usize,
    class_docs: Vec<u64>,
    /// Sparse rows of `(feature, count)`.
    feature_counts: Vec<Vec<(u32, u64)>>,
}

impl From<NaiveBayes> for NbRepr {
    fn from(m: NaiveBayes) -> Self {
        NbRepr {
            alpha: m.alpha,
            dim: m.stats.dim,
            class_docs: m.stats.class_docs,
            feature_counts: m
                .stats
                .feature_counts
                .iter()
                .map(|row| {
                    row.iter()
                        .enumerate()
                        .filter(|(_, &c)| c > 0)
                        .map(|(i, &c)| (i as u32, c))
                        .collect()
                })
                .collect(),
        }
    }
}

impl From<NbRepr> for NaiveBayes {
    fn from(r: NbRepr) -> Self {
        let mut stats = NbStats::new(r.dim);
        stats.class_docs = r.class_docs;
        stats.class_docs.resize(NUM_CATEGORIES, 0);
        for (row, sparse) in stats.feature_counts.iter_mut().zip(r.feature_counts) {
            for (i, c) in sparse {
                if let Some(slot) = row.get_mut(i as usize) {
                    *slot = c;
                }
            }
        }
        NaiveBayes::from_stats(stats, r.alpha)
    }
}
