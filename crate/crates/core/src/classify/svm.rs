//! One-vs-rest linear SVM, hinge loss, full-batch subgradient descent.

use serde::{Deserialize, Serialize};

use crate::category::NUM_CATEGORIES;
use crate::vectorizer::{LabeledPoint, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub iters: usize,
    pub step: f64,
    pub reg: f64,
    /// Only full batches (1.0) are supported.
    pub batch_fraction: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            iters: 50,
            step: 1.0,
            reg: 0.01,
            batch_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub dim: usize,
    /// One weight vector per class, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub params: SvmParams,
}

impl LinearSvm {
    pub fn margins(&self, x: &SparseVector) -> Vec<f64> {
        (0..NUM_CATEGORIES)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c]
                    + x.entries()
                        .iter()
                        .map(|&(i, n)| f64::from(n) * row[i as usize])
                        .sum::<f64>()
            })
            .collect()
    }
}

pub fn train(data: &[LabeledPoint], dim: usize, params: SvmParams) -> LinearSvm {
    let n = data.len().max(1) as f64;
    let mut weights = vec![0.0; NUM_CATEGORIES * dim];
    let mut bias = vec![0.0; NUM_CATEGORIES];
    let mut grad = vec![0.0; dim];
    for c in 0..NUM_CATEGORIES {
        let w = &mut weights[c * dim..(c + 1) * dim];
        let b = &mut bias[c];
        for t in 1..=params.iters {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for p in data {
                let y = if p.label.index() == c { 1.0 } else { -1.0 };
                let margin = *b
                    + p.vector
                        .entries()
                        .iter()
                        .map(|&(i, k)| f64::from(k) * w[i as usize])
                        .sum::<f64>();
                if y * margin < 1.0 {
                    grad_b -= y;
                    for &(i, k) in p.vector.entries() {
                        grad[i as usize] -= y * f64::from(k);
                    }
                }
            }
            let eta = params.step / (t as f64).sqrt();
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= eta * (gi / n + params.reg * *wi);
            }
            *b -= eta * grad_b / n;
        }
    }
    LinearSvm {
        dim,
        weights,
        bias,
        params,
    }
}
