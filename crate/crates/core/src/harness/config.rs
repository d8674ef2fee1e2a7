use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::features::SensorFamily;
use crate::imputation::EwmaParams;
use crate::models::{MlpGrid, ModelKind, RfGrid};
use crate::noise::FlipAssumption;

/// Error levels: `start, start + step, ...` up to `max`, optionally
/// preceded by an error-free control level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub step: f64,
    pub max: f64,
    /// Prepend λ = 0.
    pub control: bool,
}

impl Default for Sweep {
    fn default() -> Self {
        Self { start: 0.5, step: 0.5, max: 3.0, control: true }
    }
}

impl Sweep {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.start) || !ok(self.step) || !self.max.is_finite() || self.max < self.start {
            return Err(HarnessError::Config(format!(
                "sweep needs 0 < start <= max and step > 0, got start {} step {} max {}",
                self.start, self.step, self.max
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if self.control {
            out.push(0.0);
        }
        let mut k = 0.0;
        loop {
            let v = self.start + k * self.step;
            if v > self.max + 1e-9 {
                break;
            }
            out.push(v);
            k += 1.0;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Trajectory CSV; used by the command line front end.
    pub dataset: Option<PathBuf>,
    pub sensors: Vec<SensorFamily>,
    pub models: Vec<ModelKind>,
    pub assumption: FlipAssumption,
    pub sweep: Sweep,
    pub draws: usize,
    pub validation_fraction: f64,
    pub min_validation_users: usize,
    pub seed: u64,
    pub cv_folds: usize,
    pub rf_grid: RfGrid,
    pub mlp_grid: MlpGrid,
    pub ewma: EwmaParams,
    /// Also record true-trained models scored against flipped labels.
    pub log_extra_variants: bool,
    /// Also record the OS activity stream scored against true labels.
    pub os_baseline: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            sensors: vec![SensorFamily::Ble, SensorFamily::Gps],
            models: vec![ModelKind::Rf, ModelKind::Mlp],
            assumption: FlipAssumption::OneFlip,
            sweep: Sweep::default(),
            draws: 100,
            validation_fraction: 0.2,
            min_validation_users: 2,
            seed: 20_210_601,
            cv_folds: 5,
            rf_grid: RfGrid::paper(),
            mlp_grid: MlpGrid::paper(),
            ewma: EwmaParams::default(),
            log_extra_variants: false,
            os_baseline: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.sweep.validate()?;
        if self.draws == 0 {
            return Err(HarnessError::Config("draws must be >= 1".into()));
        }
        if self.sensors.is_empty() || self.models.is_empty() {
            return Err(HarnessError::Config("at least one sensor and one model are required".into()));
        }
        if let Some(m) = self.models.iter().find(|m| !matches!(m, ModelKind::Rf | ModelKind::Mlp)) {
            return Err(HarnessError::Config(format!("{m} is a baseline, not a trainable model")));
        }
        if !(0.0..=1.0).contains(&self.validation_fraction) {
            return Err(HarnessError::Config("validation_fraction must lie in [0, 1]".into()));
        }
        if self.min_validation_users < 2 {
            return Err(HarnessError::Config("min_validation_users must be >= 2".into()));
        }
        if self.cv_folds < 2 {
            return Err(HarnessError::Config("cv_folds must be >= 2".into()));
        }
        for c in self.rf_grid.configs() {
            if let crate::models::ModelConfig::Rf(rf) = c {
                rf.validate()?;
            }
        }
        for c in self.mlp_grid.configs() {
            if let crate::models::ModelConfig::Mlp(m) = c {
                m.validate()?;
            }
        }
        if self.rf_grid.configs().is_empty() && self.models.contains(&ModelKind::Rf) {
            return Err(HarnessError::Config("empty RF grid".into()));
        }
        if self.mlp_grid.configs().is_empty() && self.models.contains(&ModelKind::Mlp) {
            return Err(HarnessError::Config("empty MLP grid".into()));
        }
        self.ewma.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }
}
