use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ScenarioError;

/// Transmit power the reference RSSI is calibrated for.
pub const CALIBRATION_TX_POWER_DBM: f64 = -8.0;

/// Log-distance path loss with Gaussian shadowing and Bernoulli dropout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RssiModel {
    /// RSSI at 1 m from a beacon transmitting at [`CALIBRATION_TX_POWER_DBM`].
    pub ref_rssi_dbm: f64,
    pub path_loss_exponent: f64,
    pub shadowing_std_db: f64,
    /// Probability that an individual advertisement is not received.
    pub dropout_prob: f64,
    /// Extra attenuation for users whose phone sits behind their body.
    pub body_shadow_db: f64,
    /// Probability that a given user carries the phone body-shadowed.
    pub body_shadow_prob: f64,
    /// Open interval of reportable readings, (floor, ceiling).
    pub clamp_dbm: (f64, f64),
    /// Readings at or above the ceiling saturate this far below it.
    pub saturation_margin_db: f64,
}

impl Default for RssiModel {
    fn default() -> Self {
        Self {
            ref_rssi_dbm: -62.0,
            path_loss_exponent: 2.5,
            shadowing_std_db: 4.0,
            dropout_prob: 0.2,
            body_shadow_db: 6.0,
            body_shadow_prob: 0.3,
            clamp_dbm: (-100.0, -50.0),
            saturation_margin_db: 1.0,
        }
    }
}

impl RssiModel {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let (floor, ceiling) = self.clamp_dbm;
        if !(floor < ceiling) {
            return Err(ScenarioError::config("rssi clamp floor must be below ceiling"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(ScenarioError::config("rssi dropout probability must lie in [0,1]"));
        }
        if !(0.0..=1.0).contains(&self.body_shadow_prob) {
            return Err(ScenarioError::config("body-shadow probability must lie in [0,1]"));
        }
        if !(self.shadowing_std_db >= 0.0) || !(self.path_loss_exponent > 0.0) {
            return Err(ScenarioError::config(
                "shadowing std must be >= 0 and path-loss exponent > 0",
            ));
        }
        if !(self.saturation_margin_db > 0.0 && self.saturation_margin_db < ceiling - floor) {
            return Err(ScenarioError::config("saturation margin must lie inside the clamp range"));
        }
        Ok(())
    }

    /// Noise-free received power at `distance` metres.
    pub fn expected(&self, distance: f64) -> f64 {
        self.ref_rssi_dbm - 10.0 * self.path_loss_exponent * distance.log10()
    }

    /// Applies the clamp policy to a raw value.
    pub fn clamp(&self, raw: f64) -> Option<f64> {
        let (floor, ceiling) = self.clamp_dbm;
        if raw <= floor {
            None
        } else if raw >= ceiling {
            Some(ceiling - self.saturation_margin_db)
        } else {
            Some(raw)
        }
    }

    /// One reading with `extra_loss_db` of additional attenuation.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        distance: f64,
        extra_loss_db: f64,
        rng: &mut R,
    ) -> Result<Option<f64>, ScenarioError> {
        if !(distance > 0.0) {
            return Err(ScenarioError::Domain(format!(
                "distance must be > 0, got {distance}"
            )));
        }
        // Draw order is fixed so streams stay aligned whatever the outcome.
        let dropped = rng.random::<f64>() < self.dropout_prob;
        let shadow = if self.shadowing_std_db > 0.0 {
            Normal::new(0.0, self.shadowing_std_db)
                .expect("validated std")
                .sample(rng)
        } else {
            0.0
        };
        if dropped {
            return Ok(None);
        }
        Ok(self.clamp(self.expected(distance) - extra_loss_db + shadow))
    }
}

/// RSSI received at `distance` metres, or `None` when the reading is lost.
pub fn rssi_at<R: Rng + ?Sized>(
    distance: f64,
    model: &RssiModel,
    rng: &mut R,
) -> Result<Option<f64>, ScenarioError> {
    model.sample(distance, 0.0, rng)
}
