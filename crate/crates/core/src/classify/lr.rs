//! Multinomial (softmax) logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::category::NUM_CATEGORIES;
use crate::error::{Error, Result};
use crate::partition::map_reduce;
use crate::vectorizer::{LabeledPoint, SparseVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    pub iters: usize,
    /// Initial step; iteration `t` uses `step / sqrt(t)`.
    pub step: f64,
    pub l2: f64,
}

impl Default for LrParams {
    fn default() -> Self {
        LrParams {
            iters: 100,
            step: 1.0,
            l2: 0.01,
        }
    }
}

/// Weight matrix (one row of `dim` weights per class, row-major) plus biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Softmax {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub params: LrParams,
}

impl Softmax {
    pub fn zeros(dim: usize, params: LrParams) -> Self {
        Softmax {
            dim,
            weights: vec![0.0; NUM_CATEGORIES * dim],
            bias: vec![0.0; NUM_CATEGORIES],
            params,
        }
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..NUM_CATEGORIES)
            .map(|c| {
                let row = self.row(c);
                self.bias[c]
                    + x.entries()
                        .iter()
                        .map(|&(i, n)| f64::from(n) * row[i as usize])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn probabilities(&self, x: &SparseVector) -> Vec<f64> {
        softmax(&self.logits(x))
    }
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Gradient of the objective with respect to weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

struct Partial {
    loss: f64,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn partial(model: &Softmax, part: &[LabeledPoint]) -> Partial {
    let dim = model.dim;
    let mut g = Partial {
        loss: 0.0,
        weights: vec![0.0; NUM_CATEGORIES * dim],
        bias: vec![0.0; NUM_CATEGORIES],
    };
    for p in part {
        let z = model.logits(&p.vector);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let y = p.label.index();
        g.loss += lse - z[y];
        for c in 0..NUM_CATEGORIES {
            let resid = (z[c] - lse).exp() - if c == y { 1.0 } else { 0.0 };
            g.bias[c] += resid;
            let row = &mut g.weights[c * dim..(c + 1) * dim];
            for &(i, n) in p.vector.entries() {
                row[i as usize] += resid * f64::from(n);
            }
        }
    }
    g
}

fn merge(mut a: Partial, b: Partial) -> Partial {
    a.loss += b.loss;
    for (x, y) in a.weights.iter_mut().zip(&b.weights) {
        *x += y;
    }
    for (x, y) in a.bias.iter_mut().zip(&b.bias) {
        *x += y;
    }
    a
}

/// Mean cross-entropy plus `l2 / 2 * |W|^2` (biases unregularized), and its gradient.
/// Partial sums are merged in partition order, so results depend only on `workers`.
pub fn loss_and_gradient(model: &Softmax, data: &[LabeledPoint], l2: f64, workers: usize) -> (f64, Gradient) {
    let n = data.len().max(1) as f64;
    let total = map_reduce(data, workers, |part| partial(model, part), merge).unwrap_or_else(|| Partial {
        loss: 0.0,
        weights: vec![0.0; model.weights.len()],
        bias: vec![0.0; NUM_CATEGORIES],
    });
    let reg: f64 = model.weights.iter().map(|w| w * w).sum::<f64>();
    let loss = total.loss / n + 0.5 * l2 * reg;
    let weights = total
        .weights
        .iter()
        .zip(&model.weights)
        .map(|(g, w)| g / n + l2 * w)
        .collect();
    let bias = total.bias.iter().map(|g| g / n).collect();
    (loss, Gradient { weights, bias })
}

pub fn train(data: &[LabeledPoint], dim: usize, params: LrParams, workers: usize) -> Result<Softmax> {
    if params.iters == 0 || !(params.step > 0.0) || !(params.l2 >= 0.0) {
        return Err(Error::Config(format!(
            "logistic regression needs iters >= 1, step > 0, l2 >= 0 (got {params:?})"
        )));
    }
    let mut model = Softmax::zeros(dim, params);
    for t in 1..=params.iters {
        let (loss, grad) = loss_and_gradient(&model, data, params.l2, workers);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: t });
        }
        let eta = params.step / (t as f64).sqrt();
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w -= eta * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= eta * g;
        }
    }
    Ok(model)
}
