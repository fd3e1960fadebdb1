//! The five classifiers behind one model type, prediction, and category imputation.

pub mod lr;
pub mod nb;
pub mod svm;
pub mod tree;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::category::{Category, NUM_CATEGORIES};
use crate::corpus::{EnterpriseRecord, Origin};
use crate::error::{Error, Result};
use crate::partition::par_map;
use crate::segmenter::Lexicon;
use crate::vectorizer::{record_vector, LabeledPoint, SparseVector};

pub use lr::{LrParams, Softmax};
pub use nb::{NaiveBayes, NbStats};
pub use svm::{LinearSvm, SvmParams};
pub use tree::{DecisionTree, FeatureSubset, ForestParams, RandomForest, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NaiveBayes,
    LogisticRegression,
    LinearSvm,
    DecisionTree,
    RandomForest,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::NaiveBayes,
        Method::LogisticRegression,
        Method::LinearSvm,
        Method::DecisionTree,
        Method::RandomForest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NaiveBayes => "naive_bayes",
            Method::LogisticRegression => "logistic_regression",
            Method::LinearSvm => "linear_svm",
            Method::DecisionTree => "decision_tree",
            Method::RandomForest => "random_forest",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "naive_bayes" | "nb" => Ok(Method::NaiveBayes),
            "logistic_regression" | "lr" => Ok(Method::LogisticRegression),
            "linear_svm" | "svm" => Ok(Method::LinearSvm),
            "decision_tree" | "dt" => Ok(Method::DecisionTree),
            "random_forest" | "rf" => Ok(Method::RandomForest),
            _ => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

/// Hyperparameters for every method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub nb_alpha: f64,
    pub lr: LrParams,
    pub svm: SvmParams,
    pub tree: TreeParams,
    pub forest: ForestParams,
    /// Partition count for the data-parallel trainers (NB, LR).
    pub workers: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            nb_alpha: 1.0,
            lr: LrParams::default(),
            svm: SvmParams::default(),
            tree: TreeParams::default(),
            forest: ForestParams::default(),
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "state", rename_all = "snake_case")]
pub enum ModelState {
    NaiveBayes(NaiveBayes),
    LogisticRegression(Softmax),
    LinearSvm(LinearSvm),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub dim: usize,
    pub classes: Vec<Category>,
    pub state: ModelState,
}

impl TrainedModel {
    fn wrap(dim: usize, state: ModelState) -> Self {
        TrainedModel {
            format_version: MODEL_FORMAT_VERSION,
            dim,
            classes: Category::ALL.to_vec(),
            state,
        }
    }

    pub fn method(&self) -> Method {
        match self.state {
            ModelState::NaiveBayes(_) => Method::NaiveBayes,
            ModelState::LogisticRegression(_) => Method::LogisticRegression,
            ModelState::LinearSvm(_) => Method::LinearSvm,
            ModelState::DecisionTree(_) => Method::DecisionTree,
            ModelState::RandomForest(_) => Method::RandomForest,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Model(e.to_string()))?;
        fs::write(path, json).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        let text = fs::read_to_string(path).map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let model: TrainedModel = serde_json::from_str(&text).map_err(|e| Error::Model(e.to_string()))?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported format version {}",
                model.format_version
            )));
        }
        if model.classes != Category::ALL {
            return Err(Error::Model("class list does not match the 16 categories".into()));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: Category,
    pub scores: Vec<f64>,
}

/// Index of the first maximum, so ties go to the earlier class.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_data(data: &[LabeledPoint]) -> Result<usize> {
    let first = data.first().ok_or(Error::EmptyTrainingData)?;
    let dim = first.vector.dim();
    if let Some(p) = data.iter().find(|p| p.vector.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.vector.dim(),
        });
    }
    Ok(dim)
}

pub fn train_nb(data: &[LabeledPoint], alpha: f64, workers: usize) -> Result<TrainedModel> {
    let dim = check_data(data)?;
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("smoothing must be positive, got {alpha}")));
    }
    let stats = NbStats::partitioned(dim, data, workers);
    Ok(TrainedModel::wrap(dim, ModelState::NaiveBayes(NaiveBayes::from_stats(stats, alpha))))
}

pub fn train_lr(data: &[LabeledPoint], params: LrParams, workers: usize) -> Result<TrainedModel> {
    let dim = check_data(data)?;
    let m = lr::train(data, dim, params, workers)?;
    Ok(TrainedModel::wrap(dim, ModelState::LogisticRegression(m)))
}

pub fn train_comparison(method: Method, data: &[LabeledPoint], params: &TrainParams) -> Result<TrainedModel> {
    let dim = check_data(data)?;
    let state = match method {
        Method::LinearSvm => {
            if params.svm.batch_fraction != 1.0 {
                return Err(Error::Config("only full-batch SVM training is supported".into()));
            }
            ModelState::LinearSvm(svm::train(data, dim, params.svm))
        }
        Method::DecisionTree => ModelState::DecisionTree(tree::train_tree(data, dim, params.tree)),
        Method::RandomForest => ModelState::RandomForest(tree::train_forest(data, dim, params.forest)),
        other => return Err(Error::UnknownMethod(format!("{other} is not a comparison method"))),
    };
    Ok(TrainedModel::wrap(dim, state))
}

pub fn train(method: Method, data: &[LabeledPoint], params: &TrainParams) -> Result<TrainedModel> {
    match method {
        Method::NaiveBayes => train_nb(data, params.nb_alpha, params.workers),
        Method::LogisticRegression => train_lr(data, params.lr, params.workers),
        other => train_comparison(other, data, params),
    }
}

pub fn predict(model: &TrainedModel, x: &SparseVector) -> Result<Prediction> {
    if x.dim() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            found: x.dim(),
        });
    }
    let scores = match &model.state {
        ModelState::NaiveBayes(m) => m.log_posterior(x).into_iter().map(f64::exp).collect(),
        ModelState::LogisticRegression(m) => m.probabilities(x),
        ModelState::LinearSvm(m) => m.margins(x),
        ModelState::DecisionTree(m) => m.distribution(x).to_vec(),
        ModelState::RandomForest(m) => m.votes(x),
    };
    debug_assert_eq!(scores.len(), NUM_CATEGORIES);
    let label = match &model.state {
        ModelState::NaiveBayes(m) => Category::ALL[m.predict_class(x)],
        _ => Category::ALL[argmax(&scores)],
    };
    Ok(Prediction { label, scores })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryImputation {
    pub filled: usize,
    /// Category absent and no name to classify.
    pub unfilled: usize,
    pub already_present: usize,
    pub filled_per_class: [usize; NUM_CATEGORIES],
}

/// Predicts the category of every record that lacks one. Existing categories are untouched.
pub fn impute_categories(
    records: &mut [EnterpriseRecord],
    model: &TrainedModel,
    lexicon: &Lexicon,
    workers: usize,
) -> Result<CategoryImputation> {
    let predictions: Vec<Option<Category>> = par_map(records, workers, |r| {
        if r.category.is_some() {
            return None;
        }
        record_vector(r, lexicon, model.dim).map(|v| predict(model, &v).expect("dimension matches model").label)
    });
    let mut report = CategoryImputation::default();
    for (r, p) in records.iter_mut().zip(predictions) {
        if r.category.is_some() {
            report.already_present += 1;
            continue;
        }
        match p {
            Some(c) => {
                r.category = Some(c);
                r.provenance.category = Origin::Imputed;
                report.filled += 1;
                report.filled_per_class[c.index()] += 1;
            }
            None => report.unfilled += 1,
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(label: Category, pairs: &[(u32, u32)], dim: usize) -> LabeledPoint {
        LabeledPoint {
            label,
            vector: SparseVector::from_pairs(dim, pairs.iter().copied()),
        }
    }

    fn separable() -> Vec<LabeledPoint> {
        let mut v = Vec::new();
        for k in 1..=3 {
            v.push(pt(Category::RE, &[(0, k), (2, 1)], 4));
            v.push(pt(Category::M, &[(1, k), (2, 1)], 4));
            v.push(pt(Category::RE, &[(0, k), (3, 1)], 4));
            v.push(pt(Category::M, &[(1, k), (3, 2)], 4));
        }
        v
    }

    fn training_accuracy(model: &TrainedModel, data: &[LabeledPoint]) -> f64 {
        let ok = data
            .iter()
            .filter(|p| predict(model, &p.vector).unwrap().label == p.label)
            .count();
        ok as f64 / data.len() as f64
    }

    #[test]
    fn method_names() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!(matches!("kernel_svm".parse::<Method>(), Err(Error::UnknownMethod(_))));
    }

    #[test]
    fn empty_and_mismatched_data() {
        assert!(matches!(train_nb(&[], 1.0, 1), Err(Error::EmptyTrainingData)));
        let data = vec![pt(Category::M, &[], 3), pt(Category::M, &[], 4)];
        assert!(matches!(train_nb(&data, 1.0, 1), Err(Error::DimensionMismatch { .. })));
        let m = train_nb(&data[..1], 1.0, 1).unwrap();
        assert!(matches!(predict(&m, &SparseVector::zeros(4)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(
            train_comparison(Method::NaiveBayes, &data[..1], &TrainParams::default()),
            Err(Error::UnknownMethod(_))
        ));
    }

    #[test]
    fn single_class_training_predicts_that_class() {
        let data: Vec<_> = (0..5).map(|i| pt(Category::GPWC, &[(i % 3, 1)], 10)).collect();
        let m = train_nb(&data, 1.0, 1).unwrap();
        for i in 0..10 {
            let x = SparseVector::from_pairs(10, [(i, 1)]);
            assert_eq!(predict(&m, &x).unwrap().label, Category::GPWC);
        }
    }

    #[test]
    fn zero_vector_uses_priors_only() {
        let data = vec![
            pt(Category::M, &[(0, 1)], 3),
            pt(Category::RE, &[(1, 1)], 3),
            pt(Category::RE, &[(2, 1)], 3),
        ];
        let m = train_nb(&data, 1.0, 1).unwrap();
        let p = predict(&m, &SparseVector::zeros(3)).unwrap();
        assert_eq!(p.label, Category::RE);
        let ModelState::NaiveBayes(nb) = &m.state else { unreachable!() };
        let prior = argmax(nb.log_prior());
        assert_eq!(prior, Category::RE.index());
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_weight_lr_is_uniform_and_picks_first_class() {
        let m = TrainedModel::wrap(5, ModelState::LogisticRegression(Softmax::zeros(5, LrParams::default())));
        let p = predict(&m, &SparseVector::from_pairs(5, [(1, 2)])).unwrap();
        assert_eq!(p.label, Category::ALL[0]);
        assert!(p.scores.iter().all(|&s| (s - 1.0 / 16.0).abs() < 1e-15));
    }

    #[test]
    fn lr_separates_toy_set() {
        let data = separable();
        let params = LrParams { iters: 200, ..Default::default() };
        let m = train_lr(&data, params, 1).unwrap();
        assert_eq!(training_accuracy(&m, &data), 1.0);
        let p = predict(&m, &data[0].vector).unwrap();
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn svm_separates_toy_set() {
        let data = separable();
        let m = train_comparison(Method::LinearSvm, &data, &TrainParams::default()).unwrap();
        assert_eq!(training_accuracy(&m, &data), 1.0);
    }

    #[test]
    fn tree_separates_toy_set() {
        let data = separable();
        let m = train_comparison(Method::DecisionTree, &data, &TrainParams::default()).unwrap();
        assert_eq!(training_accuracy(&m, &data), 1.0);
    }

    #[test]
    fn unreachable_min_gain_gives_majority_leaf() {
        let mut data = separable();
        data.push(pt(Category::M, &[(1, 1)], 4));
        let mut params = TrainParams::default();
        params.tree.min_gain = 10.0;
        let m = train_comparison(Method::DecisionTree, &data, &params).unwrap();
        let ModelState::DecisionTree(t) = &m.state else { unreachable!() };
        assert_eq!(t.nodes.len(), 1);
        for p in &data {
            assert_eq!(predict(&m, &p.vector).unwrap().label, Category::M);
        }
    }

    #[test]
    fn tree_respects_max_depth() {
        let data: Vec<_> = (0..16u32)
            .map(|i| pt(Category::from_index(i as usize).unwrap(), &[(i, 1)], 16))
            .collect();
        let mut params = TrainParams::default();
        params.tree.min_gain = 0.0;
        params.tree.max_depth = 3;
        let m = train_comparison(Method::DecisionTree, &data, &params).unwrap();
        let ModelState::DecisionTree(t) = &m.state else { unreachable!() };
        assert_eq!(t.depth(), 3);
    }

    #[test]
    fn one_tree_forest_equals_tree() {
        let mut data = separable();
        data.push(pt(Category::SS, &[(2, 3)], 4));
        let mut params = TrainParams::default();
        params.forest.num_trees = 1;
        params.forest.feature_subset = FeatureSubset::All;
        params.forest.seed = 42;
        let forest = train_comparison(Method::RandomForest, &data, &params).unwrap();
        let tree = train_comparison(Method::DecisionTree, &data, &params).unwrap();
        for i in 0..4 {
            for k in 0..4 {
                let x = SparseVector::from_pairs(4, [(i, k)]);
                assert_eq!(predict(&forest, &x).unwrap().label, predict(&tree, &x).unwrap().label);
            }
        }
    }

    #[test]
    fn forest_votes_are_fractions() {
        let data = separable();
        let mut params = TrainParams::default();
        params.forest.num_trees = 7;
        params.forest.feature_subset = FeatureSubset::All;
        let m = train_comparison(Method::RandomForest, &data, &params).unwrap();
        let p = predict(&m, &data[0].vector).unwrap();
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn save_load_round_trip() {
        let data = separable();
        let dir = tempfile::tempdir().unwrap();
        let mut params = TrainParams::default();
        params.forest.num_trees = 3;
        for method in Method::ALL {
            let m = train(method, &data, &params).unwrap();
            let path = dir.path().join(format!("{method}.json"));
            m.save(&path).unwrap();
            let back = TrainedModel::load(&path).unwrap();
            assert_eq!(back.method(), method);
            for p in &data {
                assert_eq!(predict(&back, &p.vector).unwrap(), predict(&m, &p.vector).unwrap());
            }
        }
    }

    #[test]
    fn impute_fills_only_missing() {
        let lex = Lexicon::demo();
        let mut records = Vec::new();
        for (i, (name, cat)) in [
            ("物业管理有限公司", Some(Category::RE)),
            ("建筑工程有限公司", Some(Category::BI)),
            ("物业管理有限公司", None),
            ("建筑施工有限公司", None),
        ]
        .into_iter()
        .enumerate()
        {
            let mut r = EnterpriseRecord::new(format!("E{i}"));
            r.name = Some(name.into());
            r.category = cat;
            records.push(r);
        }
        let mut nameless = EnterpriseRecord::new("E9");
        nameless.name = None;
        records.push(nameless);
        let data: Vec<_> = records
            .iter()
            .filter_map(|r| crate::vectorizer::to_labeled(r, &lex, 64))
            .collect();
        let m = train_nb(&data, 1.0, 1).unwrap();
        let report = impute_categories(&mut records, &m, &lex, 2).unwrap();
        assert_eq!(report.filled, 2);
        assert_eq!(report.unfilled, 1);
        assert_eq!(report.already_present, 2);
        assert_eq!(records[2].category, Some(Category::RE));
        assert_eq!(records[3].category, Some(Category::BI));
        assert_eq!(records[2].provenance.category, Origin::Imputed);
        assert_eq!(records[0].provenance.category, Origin::Original);

        let mut again = records.clone();
        let report = impute_categories(&mut again, &m, &lex, 1).unwrap();
        assert_eq!(report.filled, 0);
        assert_eq!(again, records);
    }
}
