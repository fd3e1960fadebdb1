//! K-fold cross-validation, confusion matrices and speed-up measurement.

use std::fmt::{self, Write as _};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::category::{Category, NUM_CATEGORIES};
use crate::classify::{predict, train, Method, TrainParams};
use crate::corpus::{EnterpriseRecord, GroundTruth};
use crate::error::{Error, Result};
use crate::vectorizer::LabeledPoint;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignments[i]` is the fold of record `i`.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == f)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignments {
            s[a] += 1;
        }
        s
    }
}

/// Seeded shuffle, then round-robin assignment.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Config(format!("k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::TooFewRecords { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignments[i] = pos % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[actual][predicted]`
    pub counts: [[u64; NUM_CATEGORIES]; NUM_CATEGORIES],
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        ConfusionMatrix {
            counts: [[0; NUM_CATEGORIES]; NUM_CATEGORIES],
        }
    }
}

impl ConfusionMatrix {
    pub fn add(&mut self, actual: Category, predicted: Category) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CATEGORIES).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_total(&self, actual: usize) -> u64 {
        self.counts[actual].iter().sum()
    }

    /// Micro accuracy, trace over total. Zero when empty.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    /// Recall of each class; `None` for classes with no test samples.
    pub fn per_class(&self) -> [Option<f64>; NUM_CATEGORIES] {
        let mut out = [None; NUM_CATEGORIES];
        for (c, slot) in out.iter_mut().enumerate() {
            let n = self.row_total(c);
            if n > 0 {
                *slot = Some(self.counts[c][c] as f64 / n as f64);
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("actual\\predicted");
        for c in Category::ALL {
            write!(s, "\t{c}").unwrap();
        }
        s.push('\n');
        for c in Category::ALL {
            s.push_str(c.symbol());
            for n in self.counts[c.index()] {
                write!(s, "\t{n}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: Method,
    pub k: usize,
    pub workers: usize,
    pub confusion: ConfusionMatrix,
    /// Mean over folds.
    pub train_time: Duration,
    pub predict_time: Duration,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        self.confusion.accuracy()
    }

    pub fn per_class(&self) -> [Option<f64>; NUM_CATEGORIES] {
        self.confusion.per_class()
    }

    /// Per-class table; wall-times only when `timings` is set.
    pub fn to_tsv(&self, timings: bool) -> String {
        let mut s = String::from("category\ttest_count\taccuracy\n");
        for (c, acc) in Category::ALL.iter().zip(self.per_class()) {
            let acc = acc.map(|a| format!("{a:.6}")).unwrap_or_else(|| "NA".into());
            writeln!(s, "{c}\t{}\t{acc}", self.confusion.row_total(c.index())).unwrap();
        }
        writeln!(s, "overall\t{}\t{:.6}", self.confusion.total(), self.accuracy()).unwrap();
        if timings {
            writeln!(s, "train_seconds\t\t{:.6}", self.train_time.as_secs_f64()).unwrap();
            writeln!(s, "predict_seconds\t\t{:.6}", self.predict_time.as_secs_f64()).unwrap();
        }
        s
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} {}-fold: accuracy {:.4} over {} test predictions ({} workers)",
            self.method,
            self.k,
            self.accuracy(),
            self.confusion.total(),
            self.workers
        )?;
        writeln!(
            f,
            "mean train {:.3}s, mean predict {:.3}s per fold",
            self.train_time.as_secs_f64(),
            self.predict_time.as_secs_f64()
        )?;
        for (c, acc) in Category::ALL.iter().zip(self.per_class()) {
            if let Some(a) = acc {
                writeln!(f, "  {:<7}{:>7.2}%", c.symbol(), a * 100.0)?;
            }
        }
        Ok(())
    }
}

pub fn cross_validate(method: Method, data: &[LabeledPoint], plan: &FoldPlan, params: &TrainParams) -> Result<EvalReport> {
    if plan.assignments.len() != data.len() {
        return Err(Error::Config(format!(
            "fold plan covers {} records but data has {}",
            plan.assignments.len(),
            data.len()
        )));
    }
    let mut confusion = ConfusionMatrix::default();
    let mut train_time = Duration::ZERO;
    let mut predict_time = Duration::ZERO;
    for f in 0..plan.k {
        let mut test = Vec::new();
        let mut train_set = Vec::new();
        for (p, &a) in data.iter().zip(&plan.assignments) {
            if a == f {
                test.push(p);
            } else {
                train_set.push(p.clone());
            }
        }
        let start = Instant::now();
        let model = train(method, &train_set, params)?;
        train_time += start.elapsed();
        let start = Instant::now();
        for p in test {
            confusion.add(p.label, predict(&model, &p.vector)?.label);
        }
        predict_time += start.elapsed();
    }
    Ok(EvalReport {
        method,
        k: plan.k,
        workers: params.workers,
        confusion,
        train_time: train_time / plan.k as u32,
        predict_time: predict_time / plan.k as u32,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedupPoint {
    pub workers: usize,
    pub wall_time: Duration,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupCurve {
    pub method: Method,
    pub records: usize,
    pub points: Vec<SpeedupPoint>,
}

impl SpeedupCurve {
    pub fn ratio(&self, workers: usize) -> Option<f64> {
        self.points.iter().find(|p| p.workers == workers).map(|p| p.ratio)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("workers\twall_seconds\tspeedup\n");
        for p in &self.points {
            writeln!(s, "{}\t{:.6}\t{:.4}", p.workers, p.wall_time.as_secs_f64(), p.ratio).unwrap();
        }
        s
    }
}

/// Trains `method` once per worker count (the partition count equals the worker
/// count) and records the median of `repeats` wall-times.
pub fn speedup(
    method: Method,
    data: &[LabeledPoint],
    worker_counts: &[usize],
    params: &TrainParams,
    repeats: usize,
) -> Result<SpeedupCurve> {
    if worker_counts.contains(&0) || !worker_counts.contains(&1) {
        return Err(Error::Config("worker counts must be >= 1 and include 1".into()));
    }
    let repeats = repeats.max(1);
    let mut times = Vec::with_capacity(worker_counts.len());
    for &w in worker_counts {
        let mut p = *params;
        p.workers = w;
        let mut runs: Vec<Duration> = (0..repeats)
            .map(|_| {
                let start = Instant::now();
                let model = train(method, data, &p);
                let elapsed = start.elapsed();
                model.map(|m| {
                    std::hint::black_box(m);
                    elapsed
                })
            })
            .collect::<Result<_>>()?;
        runs.sort();
        times.push((w, runs[runs.len() / 2]));
    }
    let base = times.iter().find(|(w, _)| *w == 1).map(|(_, t)| t.as_secs_f64()).unwrap();
    let points = times
        .into_iter()
        .map(|(workers, wall_time)| SpeedupPoint {
            workers,
            wall_time,
            ratio: base / wall_time.as_secs_f64(),
        })
        .collect();
    Ok(SpeedupCurve {
        method,
        records: data.len(),
        points,
    })
}

/// How imputed categories compare with the ground truth, per true class.
pub fn imputation_confusion(records: &[EnterpriseRecord], truth: &GroundTruth) -> ConfusionMatrix {
    let mut m = ConfusionMatrix::default();
    for r in records {
        if r.provenance.category != crate::corpus::Origin::Imputed {
            continue;
        }
        if let (Some(pred), Some(actual)) = (r.category, truth.get(&r.id).and_then(|t| t.category)) {
            m.add(actual, pred);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorizer::SparseVector;
    use proptest::prelude::*;

    #[test]
    fn ten_of_ten() {
        let p = kfold(10, 10, 3).unwrap();
        assert_eq!(p.fold_sizes(), vec![1; 10]);
    }

    #[test]
    fn uneven_sizes() {
        let p = kfold(103, 10, 3).unwrap();
        let sizes = p.fold_sizes();
        assert_eq!(sizes.iter().filter(|&&s| s == 10).count(), 7);
        assert_eq!(sizes.iter().filter(|&&s| s == 11).count(), 3);
    }

    #[test]
    fn seeded_plans_repeat() {
        assert_eq!(kfold(500, 10, 9).unwrap(), kfold(500, 10, 9).unwrap());
        assert_ne!(kfold(500, 10, 9).unwrap(), kfold(500, 10, 10).unwrap());
    }

    #[test]
    fn too_few_records() {
        assert!(matches!(kfold(3, 10, 0), Err(Error::TooFewRecords { n: 3, k: 10 })));
        assert!(kfold(3, 1, 0).is_err());
    }

    #[test]
    fn zero_vectors_predict_majority() {
        let data: Vec<_> = (0..40)
            .map(|i| LabeledPoint {
                label: if i % 4 == 0 { Category::M } else { Category::WRTC },
                vector: SparseVector::zeros(8),
            })
            .collect();
        let plan = kfold(data.len(), 4, 1).unwrap();
        let r = cross_validate(Method::NaiveBayes, &data, &plan, &TrainParams::default()).unwrap();
        assert_eq!(r.confusion.total(), 40);
        assert!((r.accuracy() - 0.75).abs() < 1e-12);
        let tsv = r.to_tsv(false);
        assert!(tsv.contains("overall\t40\t0.750000"));
        assert!(!tsv.contains("seconds"));
    }

    #[test]
    fn speedup_base_ratio_is_one() {
        let data: Vec<_> = (0..200u32)
            .map(|i| LabeledPoint {
                label: Category::from_index((i % 3) as usize).unwrap(),
                vector: SparseVector::from_pairs(16, [(i % 16, 1)]),
            })
            .collect();
        let c = speedup(Method::NaiveBayes, &data, &[1, 2], &TrainParams::default(), 1).unwrap();
        assert_eq!(c.ratio(1), Some(1.0));
        assert!(speedup(Method::NaiveBayes, &data, &[2], &TrainParams::default(), 1).is_err());
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n in 2usize..300, k in 2usize..12, seed: u64) {
            prop_assume!(n >= k);
            let p = kfold(n, k, seed).unwrap();
            let mut seen = vec![false; n];
            for f in 0..k {
                for i in p.fold(f) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
            }
            prop_assert!(seen.iter().all(|&s| s));
            let sizes = p.fold_sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
    }
}
