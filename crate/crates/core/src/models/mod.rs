//! Classifiers: random forest, MLP and two baselines, plus grid search.
//!
//! Every trained model remembers the feature columns it was fitted on and
//! refuses to score a matrix with a different schema. Scores are the
//! probability of the BI class.
//!
//! Saved models are JSON documents of the form
//! `{"format": "bibo-model/1", "kind": ..., "columns": [...], "params": {...}, "flags": [...]}`.
//! The format string changes whenever the layout does; loading any other
//! format fails.

mod forest;
mod grid;
mod matrix;
mod mlp;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::Label;
use crate::seed;

pub use forest::{Criterion, MaxFeatures, Node, RandomForest, RfConfig, Tree, MAX_DEPTH_GRID, N_ESTIMATORS_GRID};
pub use grid::{group_folds, grid_search, CvScore, GridResult, MlpGrid, ModelConfig, RfGrid};
pub use matrix::Matrix;
pub use mlp::{LrSchedule, Mlp, MlpConfig, Network, Standardizer, HIDDEN_GRID, LEARNING_RATE_GRID};

pub const MODEL_FORMAT: &str = "bibo-model/1";

/// Flag set on a model fitted to data containing a single class.
pub const SINGLE_CLASS_FLAG: &str = "single_class_training";

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("feature schema mismatch at column {index}: expected `{expected}`, found `{found}`")]
    SchemaMismatch { index: usize, expected: String, found: String },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("need at least 2 training rows, got {0}")]
    TooFewRows(usize),
    #[error("training loss became non-finite at epoch {epoch} (learning rate {learning_rate})")]
    NonFiniteLoss { learning_rate: f64, epoch: usize },
    #[error("grid search: {0}")]
    Grid(String),
    #[error("unsupported model format `{0}`")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "RANDOM")]
    Random,
    #[serde(rename = "MAJORITY")]
    Majority,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rf => "RF",
            ModelKind::Mlp => "MLP",
            ModelKind::Random => "RANDOM",
            ModelKind::Majority => "MAJORITY",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RF" => Ok(ModelKind::Rf),
            "MLP" => Ok(ModelKind::Mlp),
            "RANDOM" => Ok(ModelKind::Random),
            "MAJORITY" => Ok(ModelKind::Majority),
            _ => Err(ModelError::Config(format!("unknown model kind `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Forest(RandomForest),
    Mlp(Mlp),
    /// Independent uniform scores from a stream seeded here.
    Random { seed: u64 },
    Constant { score: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub kind: ModelKind,
    pub columns: Vec<String>,
    pub params: ModelParams,
    #[serde(default)]
    pub flags: Vec<String>,
}

impl TrainedModel {
    fn new(kind: ModelKind, columns: &[String], params: ModelParams) -> Self {
        Self { format: MODEL_FORMAT.into(), kind, columns: columns.to_vec(), params, flags: Vec::new() }
    }

    /// Probability of BI per row of `x`.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>, ModelError> {
        x.check_schema(&self.columns)?;
        Ok(match &self.params {
            ModelParams::Forest(rf) => rf.predict_proba(x),
            ModelParams::Mlp(mlp) => mlp.predict_proba(x),
            ModelParams::Random { seed } => {
                let mut rng = seed::rng_from(*seed);
                (0..x.n_rows()).map(|_| rng.random::<f64>()).collect()
            }
            ModelParams::Constant { score } => vec![*score; x.n_rows()],
        })
    }

    /// Both class probabilities per row, `[P(BO), P(BI)]`.
    pub fn predict_classes(&self, x: &Matrix) -> Result<Vec<[f64; 2]>, ModelError> {
        Ok(self.predict_proba(x)?.into_iter().map(|p| [1.0 - p, p]).collect())
    }

    pub fn is_flagged(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let model: Self = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(ModelError::Format(model.format));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// The only class present in `y`, if there is exactly one.
fn single_class(y: &[Label]) -> Option<Label> {
    let first = *y.first()?;
    y.iter().all(|&l| l == first).then_some(first)
}

fn degenerate(kind: ModelKind, columns: &[String], class: Label) -> TrainedModel {
    let mut m = TrainedModel::new(kind, columns, ModelParams::Constant { score: class.as_target() });
    m.flags.push(SINGLE_CLASS_FLAG.into());
    m
}

fn check_rows(x: &Matrix, y: &[Label]) -> Result<(), ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if y.len() < 2 {
        return Err(ModelError::TooFewRows(y.len()));
    }
    Ok(())
}

/// Fits a random forest; single-class data yields a flagged constant model.
pub fn train_rf(x: &Matrix, y: &[Label], config: &RfConfig) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    check_rows(x, y)?;
    if let Some(class) = single_class(y) {
        return Ok(degenerate(ModelKind::Rf, x.columns(), class));
    }
    let rf = RandomForest::fit(x, y, config)?;
    Ok(TrainedModel::new(ModelKind::Rf, x.columns(), ModelParams::Forest(rf)))
}

/// Fits an MLP; single-class data yields a flagged constant model.
pub fn train_mlp(x: &Matrix, y: &[Label], config: &MlpConfig) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    check_rows(x, y)?;
    if let Some(class) = single_class(y) {
        return Ok(degenerate(ModelKind::Mlp, x.columns(), class));
    }
    let mlp = Mlp::fit(x, y, config)?;
    Ok(TrainedModel::new(ModelKind::Mlp, x.columns(), ModelParams::Mlp(mlp)))
}

/// Baseline emitting i.i.d. uniform scores.
pub fn random_baseline(columns: &[String], seed: u64) -> TrainedModel {
    TrainedModel::new(ModelKind::Random, columns, ModelParams::Random { seed })
}

/// Baseline emitting the training BI prior for every row.
pub fn majority_baseline(x: &Matrix, y: &[Label]) -> Result<TrainedModel, ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::Shape(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if y.is_empty() {
        return Err(ModelError::TooFewRows(0));
    }
    let prior = y.iter().filter(|l| l.is_positive()).count() as f64 / y.len() as f64;
    Ok(TrainedModel::new(ModelKind::Majority, x.columns(), ModelParams::Constant { score: prior }))
}
