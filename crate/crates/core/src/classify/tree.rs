//! Entropy-gain decision trees over count features, and bagged forests of them.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::category::NUM_CATEGORIES;
use crate::vectorizer::{LabeledPoint, SparseVector};

/// Candidate split thresholds on a feature count.
pub const THRESHOLDS: [f64; 3] = [0.5, 1.5, 2.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 30,
            min_gain: 0.0075,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSubset {
    All,
    /// `ceil(sqrt(dim))` features drawn per node.
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub num_trees: usize,
    pub tree: TreeParams,
    pub feature_subset: FeatureSubset,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            num_trees: 100,
            tree: TreeParams::default(),
            feature_subset: FeatureSubset::Sqrt,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Class frequencies of the training samples reaching this leaf.
        distribution: Vec<f64>,
    },
    Split {
        feature: u32,
        threshold: f64,
        /// Taken when the count is `<= threshold`.
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub dim: usize,
    pub nodes: Vec<Node>,
    pub params: TreeParams,
}

impl DecisionTree {
    pub fn distribution(&self, x: &SparseVector) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if f64::from(x.get(*feature)) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

fn entropy(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = f64::from(n);
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / n;
            -p * p.log2()
        })
        .sum()
}

type ClassCounts = [u32; NUM_CATEGORIES];

struct Builder<'a> {
    data: &'a [LabeledPoint],
    params: TreeParams,
    subset: FeatureSubset,
    dim: usize,
    rng: Option<ChaCha8Rng>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn counts(&self, samples: &[usize]) -> ClassCounts {
        let mut c = [0u32; NUM_CATEGORIES];
        for &s in samples {
            c[self.data[s].label.index()] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: &ClassCounts) -> usize {
        let n: u32 = counts.iter().sum();
        let distribution = counts
            .iter()
            .map(|&c| if n == 0 { 0.0 } else { f64::from(c) / f64::from(n) })
            .collect();
        self.nodes.push(Node::Leaf { distribution });
        self.nodes.len() - 1
    }

    fn allowed(&mut self) -> Option<HashSet<u32>> {
        match self.subset {
            FeatureSubset::All => None,
            FeatureSubset::Sqrt => {
                let m = (self.dim as f64).sqrt().ceil() as usize;
                let rng = self.rng.as_mut().expect("forest builder carries an rng");
                Some(sample(rng, self.dim, m.min(self.dim)).into_iter().map(|i| i as u32).collect())
            }
        }
    }

    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&samples);
        let parent_h = entropy(&counts);
        if depth >= self.params.max_depth || parent_h == 0.0 || samples.len() < 2 {
            return self.leaf(&counts);
        }
        let allowed = self.allowed();
        // feature -> per-threshold class counts of samples with count > threshold
        let mut right: BTreeMap<u32, [ClassCounts; 3]> = BTreeMap::new();
        for &s in &samples {
            let p = &self.data[s];
            for &(i, k) in p.vector.entries() {
                if allowed.as_ref().is_some_and(|a| !a.contains(&i)) {
                    continue;
                }
                let slot = right.entry(i).or_insert([[0; NUM_CATEGORIES]; 3]);
                for (t, thr) in THRESHOLDS.iter().enumerate() {
                    if f64::from(k) > *thr {
                        slot[t][p.label.index()] += 1;
                    }
                }
            }
        }
        let n = samples.len() as f64;
        let mut best: Option<(f64, u32, f64)> = None;
        for (&feature, per_t) in &right {
            for (t, rc) in per_t.iter().enumerate() {
                let nr: u32 = rc.iter().sum();
                if nr == 0 || nr as usize == samples.len() {
                    continue;
                }
                let mut lc = counts;
                for (l, r) in lc.iter_mut().zip(rc) {
                    *l -= r;
                }
                let nr = f64::from(nr);
                let gain = parent_h - ((n - nr) / n) * entropy(&lc) - (nr / n) * entropy(rc);
                if best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, feature, THRESHOLDS[t]));
                }
            }
        }
        match best {
            Some((gain, feature, threshold)) if gain >= self.params.min_gain && gain > 0.0 => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples
                    .into_iter()
                    .partition(|&s| f64::from(self.data[s].vector.get(feature)) <= threshold);
                let at = self.nodes.len();
                self.nodes.push(Node::Leaf { distribution: Vec::new() });
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[at] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                at
            }
            _ => self.leaf(&counts),
        }
    }
}

fn grow(
    data: &[LabeledPoint],
    samples: Vec<usize>,
    dim: usize,
    params: TreeParams,
    subset: FeatureSubset,
    rng: Option<ChaCha8Rng>,
) -> DecisionTree {
    let mut b = Builder {
        data,
        params,
        subset,
        dim,
        rng,
        nodes: Vec::new(),
    };
    b.build(samples, 0);
    DecisionTree {
        dim,
        nodes: b.nodes,
        params,
    }
}

pub fn train_tree(data: &[LabeledPoint], dim: usize, params: TreeParams) -> DecisionTree {
    grow(data, (0..data.len()).collect(), dim, params, FeatureSubset::All, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub dim: usize,
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
}

impl RandomForest {
    /// Fraction of trees voting for each class.
    pub fn votes(&self, x: &SparseVector) -> Vec<f64> {
        let mut v = vec![0.0; NUM_CATEGORIES];
        for t in &self.trees {
            v[super::argmax(t.distribution(x))] += 1.0;
        }
        let n = self.trees.len().max(1) as f64;
        v.iter_mut().for_each(|x| *x /= n);
        v
    }
}

/// Bootstrap resampling is applied only when more than one tree is grown.
pub fn train_forest(data: &[LabeledPoint], dim: usize, params: ForestParams) -> RandomForest {
    let trees = (0..params.num_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(t as u64));
            let samples: Vec<usize> = if params.num_trees > 1 {
                (0..data.len()).map(|_| rng.gen_range(0..data.len())).collect()
            } else {
                (0..data.len()).collect()
            };
            grow(data, samples, dim, params.tree, params.feature_subset, Some(rng))
        })
        .collect();
    RandomForest { dim, trees, params }
}
