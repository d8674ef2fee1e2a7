//! Exhaustive hyperparameter search with user-grouped k-fold CV.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    train_mlp, train_rf, Criterion, LrSchedule, Matrix, MaxFeatures, MlpConfig, ModelError, ModelKind, RfConfig,
    TrainedModel, HIDDEN_GRID, LEARNING_RATE_GRID, MAX_DEPTH_GRID, N_ESTIMATORS_GRID,
};
use crate::label::Label;
use crate::metrics;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ModelConfig {
    #[serde(rename = "RF")]
    Rf(RfConfig),
    #[serde(rename = "MLP")]
    Mlp(MlpConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Rf(_) => ModelKind::Rf,
            ModelConfig::Mlp(_) => ModelKind::Mlp,
        }
    }

    /// Tree count for forests, parameter count for MLPs.
    pub fn complexity(&self, n_inputs: usize) -> usize {
        match self {
            ModelConfig::Rf(c) => c.n_estimators,
            ModelConfig::Mlp(c) => c.n_parameters(n_inputs),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        match &mut c {
            ModelConfig::Rf(r) => r.seed = seed,
            ModelConfig::Mlp(m) => m.seed = seed,
        }
        c
    }

    pub fn train(&self, x: &Matrix, y: &[Label]) -> Result<TrainedModel, ModelError> {
        match self {
            ModelConfig::Rf(c) => train_rf(x, y, c),
            ModelConfig::Mlp(c) => train_mlp(x, y, c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfGrid {
    pub n_estimators: Vec<usize>,
    pub max_features: Vec<MaxFeatures>,
    pub max_depth: Vec<usize>,
    pub criterion: Vec<Criterion>,
    #[serde(default = "default_max_bins")]
    pub max_bins: usize,
}

fn default_max_bins() -> usize {
    64
}

impl RfGrid {
    /// The full search space: 5 x 3 x 5 x 2 points.
    pub fn paper() -> Self {
        Self {
            n_estimators: N_ESTIMATORS_GRID.to_vec(),
            max_features: vec![MaxFeatures::All, MaxFeatures::Sqrt, MaxFeatures::Log2],
            max_depth: MAX_DEPTH_GRID.to_vec(),
            criterion: vec![Criterion::Gini, Criterion::Entropy],
            max_bins: default_max_bins(),
        }
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for &n_estimators in &self.n_estimators {
            for &max_features in &self.max_features {
                for &max_depth in &self.max_depth {
                    for &criterion in &self.criterion {
                        out.push(ModelConfig::Rf(RfConfig {
                            n_estimators,
                            max_features,
                            max_depth,
                            criterion,
                            seed: 0,
                            max_bins: self.max_bins,
                        }));
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpGrid {
    pub hidden: Vec<Vec<usize>>,
    pub schedule: Vec<LrSchedule>,
    pub learning_rate: Vec<f64>,
    #[serde(default)]
    pub max_epochs: Option<usize>,
}

impl MlpGrid {
    /// The full search space: 3 x 2 x 2 points.
    pub fn paper() -> Self {
        Self {
            hidden: HIDDEN_GRID.iter().map(|h| h.to_vec()).collect(),
            schedule: vec![LrSchedule::Constant, LrSchedule::InvScaling],
            learning_rate: LEARNING_RATE_GRID.to_vec(),
            max_epochs: None,
        }
    }

    pub fn configs(&self) -> Vec<ModelConfig> {
        let mut out = Vec::new();
        for hidden in &self.hidden {
            for &schedule in &self.schedule {
                for &learning_rate in &self.learning_rate {
                    let mut c = MlpConfig { hidden: hidden.clone(), schedule, learning_rate, ..MlpConfig::default() };
                    if let Some(e) = self.max_epochs {
                        c.max_epochs = e;
                    }
                    out.push(ModelConfig::Mlp(c));
                }
            }
        }
        out
    }
}

/// Fold index per row: groups are shuffled, then dealt round-robin to
/// `min(k, groups)` folds, so no group spans two folds.
pub fn group_folds(groups: &[u32], k: usize, seed: u64) -> Result<(Vec<usize>, usize), ModelError> {
    let mut unique: Vec<u32> = groups.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() < 2 || k < 2 {
        return Err(ModelError::Grid(format!("need at least 2 groups and k >= 2, got {} groups", unique.len())));
    }
    let mut rng = seed::rng_from(seed);
    unique.shuffle(&mut rng);
    let k = k.min(unique.len());
    let fold_of = |g: u32| unique.iter().position(|&u| u == g).expect("group present") % k;
    Ok((groups.iter().map(|&g| fold_of(g)).collect(), k))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub config: ModelConfig,
    /// `None` where the held-out fold holds a single class.
    pub fold_auc: Vec<Option<f64>>,
    pub mean_auc: Option<f64>,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: ModelConfig,
    pub best_index: usize,
    pub scores: Vec<CvScore>,
}

/// Scores every config by mean held-out AUC over group folds and picks the
/// best, preferring simpler configs and then earlier ones on ties.
pub fn grid_search(
    x: &Matrix,
    y: &[Label],
    groups: &[u32],
    configs: &[ModelConfig],
    k: usize,
    seed: u64,
) -> Result<GridResult, ModelError> {
    if configs.is_empty() {
        return Err(ModelError::Grid("empty grid".into()));
    }
    if x.n_rows() != y.len() || groups.len() != y.len() {
        return Err(ModelError::Shape("features, labels and groups differ in length".into()));
    }
    let pos = y.iter().filter(|l| l.is_positive()).count();
    if pos < k || y.len() - pos < k {
        return Err(ModelError::Grid(format!("need at least {k} rows per class, got {pos} BI and {} BO", y.len() - pos)));
    }
    let (fold, k) = group_folds(groups, k, seed)?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| (0..y.len()).partition(|&i| fold[i] != f))
        .collect();

    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let results: Vec<Result<Option<f64>, ModelError>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (train, test) = &splits[f];
            let ytr: Vec<Label> = train.iter().map(|&i| y[i]).collect();
            let yte: Vec<Label> = test.iter().map(|&i| y[i]).collect();
            let model = configs[c].train(&x.select(train), &ytr)?;
            let scores = model.predict_proba(&x.select(test))?;
            match metrics::auc(&yte, &scores) {
                Ok(a) => Ok(Some(a)),
                Err(metrics::MetricsError::SingleClass) => Ok(None),
                Err(e) => Err(ModelError::Grid(e.to_string())),
            }
        })
        .collect();

    let mut scores = Vec::with_capacity(configs.len());
    let mut it = results.into_iter();
    for config in configs {
        let fold_auc = it.by_ref().take(k).collect::<Result<Vec<_>, _>>()?;
        let flags = fold_auc
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_none())
            .map(|(f, _)| format!("fold_{f}_single_class"))
            .collect();
        let valid: Vec<f64> = fold_auc.iter().flatten().copied().collect();
        let mean_auc = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
        scores.push(CvScore { config: config.clone(), fold_auc, mean_auc, flags });
    }

    let n_inputs = x.n_cols();
    let best_index = (0..scores.len())
        .filter(|&i| scores[i].mean_auc.is_some())
        .min_by(|&a, &b| {
            let (sa, sb) = (scores[a].mean_auc.unwrap(), scores[b].mean_auc.unwrap());
            sb.total_cmp(&sa)
                .then(configs[a].complexity(n_inputs).cmp(&configs[b].complexity(n_inputs)))
                .then(a.cmp(&b))
        })
        .ok_or_else(|| ModelError::Grid("no fold contained both classes".into()))?;
    Ok(GridResult { best: configs[best_index].clone(), best_index, scores })
}
