//! Monte-Carlo robustness experiment.
//!
//! For every error level and draw the harness flips labels per user, splits
//! users into training and validation sets, trains each classifier on true
//! and on flipped labels and scores it on the validation users against both
//! label versions. Hyperparameters come from one grid search per sensor,
//! model and label mode on the first draw and stay frozen afterwards.

mod config;
mod report;
mod results;
mod run;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

pub use config::{RunConfig, Sweep};
pub use report::{aggregate_report, BiasPoint, CellSummary, FlipPoint, MetricSummary, Summary};
pub use results::{EvalRecord, ResultTable, Setting, RESULT_COLUMNS};
pub use run::{draw_splits, os_activity_auc, run_monte_carlo, UserSplit, GridLogEntry, LabelMode, Lineage, RunMeta, RunOutput};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("need at least 2 users, got {0}")]
    TooFewUsers(usize),
    #[error("out-of-sample violation in draw {draw}: user {user} is on both sides")]
    OosViolation { draw: usize, user: u32 },
    #[error("results table is empty")]
    EmptyTable,
    #[error("results line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Dataset(#[from] crate::dataset::DatasetError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Validation set size for `n` users: `max(min_users, round(fraction * n))`,
/// never more than `n`.
pub fn validation_size(n: usize, fraction: f64, min_users: usize) -> usize {
    ((fraction * n as f64).round() as usize).max(min_users).min(n)
}

/// Random user-level split into `(train, validation)`, both sorted.
pub fn split_oos<R: Rng + ?Sized>(users: &[u32], fraction: f64, rng: &mut R) -> Result<(Vec<u32>, Vec<u32>), HarnessError> {
    split_oos_min(users, fraction, 2, rng)
}

pub(crate) fn split_oos_min<R: Rng + ?Sized>(
    users: &[u32],
    fraction: f64,
    min_users: usize,
    rng: &mut R,
) -> Result<(Vec<u32>, Vec<u32>), HarnessError> {
    let mut pool = users.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() < 2 {
        return Err(HarnessError::TooFewUsers(pool.len()));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(HarnessError::Config(format!("validation fraction {fraction} outside [0, 1]")));
    }
    pool.shuffle(rng);
    let k = validation_size(pool.len(), fraction, min_users);
    let mut validation = pool[..k].to_vec();
    let mut train = pool[k..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok((train, validation))
}
