//! From-scratch device classifiers with a uniform fit/predict/serialize
//! contract: plain k-nearest-neighbors, a bagged KNN committee, and
//! one-vs-rest linear SVMs trained by subgradient descent on the regularized
//! hinge loss.
//!
//! Every tie anywhere (neighbor distance, committee vote, class score)
//! resolves toward the lower training index or lower label id, so
//! predictions are bit-reproducible from (data, hyperparameters, seed).

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{normalize, FeatureVector, NormalizationStats};
use crate::seeds::derive_seed;

/// Serialization format version for [`TrainedModel`] JSON documents.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("k must be in 1..={max}, got {k}")]
    BadK { k: usize, max: usize },
    #[error("ensemble needs at least one member")]
    BadMemberCount,
    #[error("operation expects a {expected:?} model, got {got:?}")]
    KindMismatch { expected: ModelKind, got: ModelKind },
    #[error("svm training diverged to non-finite weights (bad step size?)")]
    NonFinite,
    #[error("model file error: {0}")]
    Io(String),
}

/// Feature vectors with device labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<u32>,
}

impl LabeledDataset {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<u32>) -> Result<Self, ClassifierError> {
        let ds = Self { vectors, labels };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    /// Sorted unique labels.
    pub fn label_set(&self) -> Vec<u32> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let err = |m: &str| Err(ClassifierError::InvalidDataset(m.to_string()));
        if self.vectors.is_empty() {
            return err("no vectors");
        }
        if self.vectors.len() != self.labels.len() {
            return err("vector/label count mismatch");
        }
        let dim = self.vectors[0].len();
        if dim == 0 {
            return err("zero-dimensional vectors");
        }
        if self.vectors.iter().any(|v| v.len() != dim) {
            return err("inconsistent vector dimensions");
        }
        if self
            .vectors
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return err("non-finite feature value");
        }
        if self.label_set().len() < 2 {
            return err("need at least 2 distinct labels");
        }
        Ok(())
    }

    /// Keeps only the selected feature columns.
    pub fn with_feature_mask(&self, mask: &[usize]) -> Self {
        Self {
            vectors: self
                .vectors
                .iter()
                .map(|v| mask.iter().map(|&i| v[i]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    EnsembleKnn,
    SvmLinear,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Knn, ModelKind::EnsembleKnn, ModelKind::SvmLinear];

    /// Stable name used in CSV output and CLI arguments.
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::EnsembleKnn => "ensemble_knn",
            ModelKind::SvmLinear => "svm_linear",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "knn" => Some(ModelKind::Knn),
            "ensemble_knn" => Some(ModelKind::EnsembleKnn),
            "svm_linear" => Some(ModelKind::SvmLinear),
            _ => None,
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One binary one-vs-rest machine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmMachine {
    pub label: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Kind-specific fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ModelState {
    Knn {
        k: usize,
        train: LabeledDataset,
    },
    EnsembleKnn {
        k: usize,
        members: Vec<LabeledDataset>,
    },
    SvmLinear {
        machines: Vec<SvmMachine>,
    },
}

/// A fitted classifier plus the normalization statistics and feature columns
/// it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub normalization: NormalizationStats,
    pub feature_mask: Vec<usize>,
    pub label_set: Vec<u32>,
    pub state: ModelState,
}

/// Hyperparameters for the linear SVM. The step schedule is fixed at
/// `1/(lambda_reg * t)` with `t` counting updates from 1; data are
/// reshuffled every epoch with the model seed. When the input scale changes
/// by a factor `s`, scaling `lambda_reg` by `s^2` reproduces the same
/// decision sequence for the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmHyper {
    pub lambda_reg: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmHyper {
    fn default() -> Self {
        Self {
            lambda_reg: 1e-3,
            epochs: 200,
            seed: 0,
        }
    }
}

/// Ensemble configuration. `identity_bootstrap` trains every member on the
/// original data instead of a resample; it exists for degenerate-case
/// testing where a single member must match plain KNN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub k: usize,
    pub n_members: usize,
    pub seed: u64,
    pub identity_bootstrap: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            k: 3,
            n_members: 25,
            seed: 0,
            identity_bootstrap: false,
        }
    }
}

/// Default neighbor count for plain KNN.
pub const DEFAULT_KNN_K: usize = 5;

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Majority label among `k` nearest training vectors. Distance ties resolve
/// toward the lower training index, vote ties toward the lower label.
fn knn_vote(train: &LabeledDataset, k: usize, query: &[f64]) -> u32 {
    let mut ranked: Vec<(f64, usize)> = train
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (squared_distance(v, query), i))
        .collect();
    ranked.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("distances are finite")
            .then(a.1.cmp(&b.1))
    });
    majority(ranked[..k].iter().map(|&(_, i)| train.labels[i]))
}

/// Lowest label among those with the highest count.
fn majority<I: Iterator<Item = u32>>(votes: I) -> u32 {
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for label in votes {
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => counts.push((label, 1)),
        }
    }
    counts
        .iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .expect("at least one vote")
        .0
}

/// Stores the training data verbatim along with `k`.
pub fn fit_knn(data: &LabeledDataset, k: usize) -> Result<TrainedModel, ClassifierError> {
    data.validate()?;
    if k == 0 || k > data.len() {
        return Err(ClassifierError::BadK { k, max: data.len() });
    }
    Ok(TrainedModel {
        kind: ModelKind::Knn,
        normalization: NormalizationStats::identity(),
        feature_mask: (0..data.dimension()).collect(),
        label_set: data.label_set(),
        state: ModelState::Knn {
            k,
            train: data.clone(),
        },
    })
}

/// Fits `n_members` KNN members on bootstrap resamples (with replacement,
/// original size, seeded deterministically per member).
pub fn fit_ensemble_knn(
    data: &LabeledDataset,
    cfg: &EnsembleConfig,
) -> Result<TrainedModel, ClassifierError> {
    data.validate()?;
    if cfg.k == 0 || cfg.k > data.len() {
        return Err(ClassifierError::BadK {
            k: cfg.k,
            max: data.len(),
        });
    }
    if cfg.n_members == 0 {
        return Err(ClassifierError::BadMemberCount);
    }
    let n = data.len();
    let members = (0..cfg.n_members)
        .map(|member| {
            if cfg.identity_bootstrap {
                return data.clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[member as u64]));
            let mut vectors = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = rng.gen_range(0..n);
                vectors.push(data.vectors[idx].clone());
                labels.push(data.labels[idx]);
            }
            LabeledDataset { vectors, labels }
        })
        .collect();
    Ok(TrainedModel {
        kind: ModelKind::EnsembleKnn,
        normalization: NormalizationStats::identity(),
        feature_mask: (0..data.dimension()).collect(),
        label_set: data.label_set(),
        state: ModelState::EnsembleKnn { k: cfg.k, members },
    })
}

/// Trains one-vs-rest linear machines by deterministic subgradient descent
/// on the L2-regularized hinge loss.
pub fn fit_svm_linear(
    data: &LabeledDataset,
    hyper: &SvmHyper,
) -> Result<TrainedModel, ClassifierError> {
    data.validate()?;
    let dim = data.dimension();
    let label_set = data.label_set();
    let lambda = hyper.lambda_reg;

    let mut machines: Vec<SvmMachine> = label_set
        .iter()
        .map(|&label| SvmMachine {
            label,
            weights: vec![0.0; dim],
            bias: 0.0,
        })
        .collect();
    // Per-class +/-1 targets, laid out per machine for the inner loop.
    let targets: Vec<Vec<f64>> = label_set
        .iter()
        .map(|&label| {
            data.labels
                .iter()
                .map(|&l| if l == label { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut t: u64 = 0;
    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let x = &data.vectors[idx];
            let shrink = 1.0 - eta * lambda;
            for (machine, target) in machines.iter_mut().zip(targets.iter()) {
                let y = target[idx];
                let score: f64 =
                    machine.weights.iter().zip(x.iter()).map(|(w, v)| w * v).sum::<f64>()
                        + machine.bias;
                let violated = y * score < 1.0;
                for (w, &v) in machine.weights.iter_mut().zip(x.iter()) {
                    *w *= shrink;
                    if violated {
                        *w += eta * y * v;
                    }
                }
                if violated {
                    machine.bias += eta * y;
                }
            }
        }
        if machines
            .iter()
            .any(|m| !m.bias.is_finite() || m.weights.iter().any(|w| !w.is_finite()))
        {
            return Err(ClassifierError::NonFinite);
        }
    }

    Ok(TrainedModel {
        kind: ModelKind::SvmLinear,
        normalization: NormalizationStats::identity(),
        feature_mask: (0..dim).collect(),
        label_set,
        state: ModelState::SvmLinear { machines },
    })
}

impl TrainedModel {
    /// Attaches the normalization statistics the training data were
    /// prepared with.
    pub fn with_normalization(mut self, stats: NormalizationStats) -> Self {
        self.normalization = stats;
        self
    }

    /// Records which feature columns the model consumes (indices into the
    /// full 3-feature vector).
    pub fn with_feature_mask(mut self, mask: Vec<usize>) -> Self {
        self.feature_mask = mask;
        self
    }

    /// Predicts the device id for a vector already normalized and masked
    /// like the training data.
    pub fn predict(&self, v: &[f64]) -> u32 {
        match &self.state {
            ModelState::Knn { k, train } => knn_vote(train, *k, v),
            ModelState::EnsembleKnn { k, members } => {
                majority(members.iter().map(|m| knn_vote(m, *k, v)))
            }
            ModelState::SvmLinear { machines } => {
                let mut best = (f64::NEG_INFINITY, u32::MAX);
                for m in machines {
                    let score: f64 =
                        m.weights.iter().zip(v.iter()).map(|(w, x)| w * x).sum::<f64>() + m.bias;
                    // strict > keeps the lowest label on score ties
                    if score > best.0 {
                        best = (score, m.label);
                    }
                }
                best.1
            }
        }
    }

    /// Normalizes a raw feature vector with the stored statistics, applies
    /// the feature mask, and predicts.
    pub fn predict_raw(&self, fv: &FeatureVector) -> u32 {
        let normalized = normalize(fv, &self.normalization).as_array();
        let masked: Vec<f64> = self.feature_mask.iter().map(|&i| normalized[i]).collect();
        self.predict(&masked)
    }

    /// Writes the model as a versioned JSON document.
    pub fn save_json(&self, path: &Path) -> Result<(), ClassifierError> {
        let doc = serde_json::json!({
            "version": MODEL_FORMAT_VERSION,
            "model": self,
        });
        fs::write(path, serde_json::to_string_pretty(&doc).expect("model serializes"))
            .map_err(|e| ClassifierError::Io(e.to_string()))
    }

    pub fn load_json(path: &Path) -> Result<Self, ClassifierError> {
        let raw = fs::read_to_string(path).map_err(|e| ClassifierError::Io(e.to_string()))?;
        let doc: serde_json::Value =
            serde_json::from_str(&raw).map_err(|e| ClassifierError::Io(e.to_string()))?;
        let version = doc["version"].as_u64().unwrap_or(0) as u32;
        if version != MODEL_FORMAT_VERSION {
            return Err(ClassifierError::Io(format!(
                "unsupported model format version {version}, expected {MODEL_FORMAT_VERSION}"
            )));
        }
        serde_json::from_value(doc["model"].clone())
            .map_err(|e| ClassifierError::Io(e.to_string()))
    }
}

/// Kind-checked KNN prediction.
pub fn predict_knn(m: &TrainedModel, v: &[f64]) -> Result<u32, ClassifierError> {
    if m.kind != ModelKind::Knn {
        return Err(ClassifierError::KindMismatch {
            expected: ModelKind::Knn,
            got: m.kind,
        });
    }
    Ok(m.predict(v))
}

/// Accuracy plus a confusion matrix indexed by the model's label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub labels: Vec<u32>,
    /// `counts[true_index][predicted_index]`
    pub counts: Vec<Vec<usize>>,
    pub n_test: usize,
}

impl Evaluation {
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true_label");
        for l in &self.labels {
            out.push_str(&format!(",pred_{l}"));
        }
        out.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            out.push_str(&format!("{}", self.labels[i]));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluates a model on a normalized, masked test set.
pub fn evaluate(m: &TrainedModel, test: &LabeledDataset) -> Result<Evaluation, ClassifierError> {
    if test.is_empty() {
        return Err(ClassifierError::InvalidDataset("empty test set".into()));
    }
    let labels = m.label_set.clone();
    let index_of = |label: u32| -> Result<usize, ClassifierError> {
        labels.binary_search(&label).map_err(|_| {
            ClassifierError::InvalidDataset(format!("test label {label} unknown to the model"))
        })
    };
    let mut counts = vec![vec![0usize; labels.len()]; labels.len()];
    let mut correct = 0usize;
    for (v, &truth) in test.vectors.iter().zip(test.labels.iter()) {
        let predicted = m.predict(v);
        counts[index_of(truth)?][index_of(predicted)?] += 1;
        if predicted == truth {
            correct += 1;
        }
    }
    Ok(Evaluation {
        accuracy: correct as f64 / test.len() as f64,
        labels,
        counts,
        n_test: test.len(),
    })
}
