//! RSSI gap filling.
//!
//! Short gaps are filled with an exponentially weighted moving average of
//! nearby observations. Whatever remains is filled with a constant `C`
//! outside the RSSI domain and flagged with a 0 in a binary mask appended
//! to the fingerprint, so an `n`-slot fingerprint becomes `2n` values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Empirical RSSI domain, an open interval in dBm.
pub const RSSI_DOMAIN: (f64, f64) = (-100.0, -50.0);

pub fn in_rssi_domain(v: f64) -> bool {
    v > RSSI_DOMAIN.0 && v < RSSI_DOMAIN.1
}

#[derive(Debug, Error, PartialEq)]
pub enum ImputationError {
    #[error("invalid imputation parameters: {0}")]
    Config(String),
    #[error("slot {slot} holds {value} dBm, outside the RSSI domain (-100, -50)")]
    OutOfDomain { slot: usize, value: f64 },
    #[error("series length mismatch: {times} timestamps, {values} values")]
    Length { times: usize, values: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EwmaMode {
    /// Window centred on the gap.
    Batch,
    /// Only past and present observations.
    Streaming,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwmaParams {
    pub window_s: f64,
    /// Decay per second of distance from the gap, in (0, 1].
    pub alpha: f64,
    /// Longest gap run, in seconds from first to last missing sample,
    /// that may be filled.
    pub max_gap_s: f64,
    /// Fill value for unfillable gaps; must lie outside the RSSI domain.
    pub constant_dbm: f64,
    pub mode: EwmaMode,
}

impl Default for EwmaParams {
    fn default() -> Self {
        Self { window_s: 10.0, alpha: 0.5, max_gap_s: 10.0, constant_dbm: -120.0, mode: EwmaMode::Batch }
    }
}

impl EwmaParams {
    pub fn validate(&self) -> Result<(), ImputationError> {
        if !(self.window_s > 0.0) {
            return Err(ImputationError::Config("window must be > 0".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ImputationError::Config("alpha must lie in (0, 1]".into()));
        }
        if !(self.max_gap_s >= 0.0) {
            return Err(ImputationError::Config("max gap span must be >= 0".into()));
        }
        if !self.constant_dbm.is_finite() || in_rssi_domain(self.constant_dbm) {
            return Err(ImputationError::Config(format!(
                "constant {} collides with the RSSI domain (-100, -50)",
                self.constant_dbm
            )));
        }
        Ok(())
    }

    /// Observation window around a gap at `t`, inclusive.
    fn bounds(&self, t: f64) -> (f64, f64) {
        match self.mode {
            EwmaMode::Batch => (t - self.window_s / 2.0, t + self.window_s / 2.0),
            EwmaMode::Streaming => (t - self.window_s, t),
        }
    }
}

/// EWMA output: filled series and which entries were imputed.
#[derive(Clone, Debug, PartialEq)]
pub struct EwmaOutput {
    pub values: Vec<Option<f64>>,
    pub imputed: Vec<bool>,
}

/// Fills gap runs no longer than `max_gap_s` with the weighted mean of the
/// observations inside the window, weights `(1 - alpha)^|t_i - t|`.
pub fn ewma_impute(
    times: &[f64],
    series: &[Option<f64>],
    params: &EwmaParams,
) -> Result<EwmaOutput, ImputationError> {
    params.validate()?;
    if times.len() != series.len() {
        return Err(ImputationError::Length { times: times.len(), values: series.len() });
    }
    let obs: Vec<(f64, f64)> = times
        .iter()
        .zip(series)
        .filter_map(|(&t, v)| v.map(|x| (t, x)))
        .collect();
    let mut values = series.to_vec();
    let mut imputed = vec![false; series.len()];
    let decay = 1.0 - params.alpha;

    let mut i = 0;
    while i < series.len() {
        if series[i].is_some() {
            i += 1;
            continue;
        }
        let start = i;
        while i < series.len() && series[i].is_none() {
            i += 1;
        }
        if times[i - 1] - times[start] > params.max_gap_s {
            continue;
        }
        for k in start..i {
            let t = times[k];
            let (lo, hi) = params.bounds(t);
            let from = obs.partition_point(|&(ot, _)| ot < lo);
            let to = obs.partition_point(|&(ot, _)| ot <= hi);
            let window = &obs[from..to];
            if window.is_empty() {
                continue;
            }
            // shift by the nearest distance so that alpha = 1 keeps the
            // nearest observations instead of dividing by zero
            let nearest = window.iter().map(|&(ot, _)| (ot - t).abs()).fold(f64::INFINITY, f64::min);
            let (mut num, mut den) = (0.0, 0.0);
            for &(ot, x) in window {
                let w = decay.powf((ot - t).abs() - nearest);
                num += w * x;
                den += w;
            }
            values[k] = Some(num / den);
            imputed[k] = true;
        }
    }
    Ok(EwmaOutput { values, imputed })
}

/// RSSI readings of all beacons at one instant; `None` marks a gap.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    values: Vec<Option<f64>>,
}

impl Fingerprint {
    pub fn new(values: Vec<Option<f64>>) -> Result<Self, ImputationError> {
        if let Some((slot, value)) = values
            .iter()
            .enumerate()
            .find_map(|(i, v)| v.filter(|x| !in_rssi_domain(*x)).map(|x| (i, x)))
        {
            return Err(ImputationError::OutOfDomain { slot, value });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Fingerprint with every gap filled and a presence mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentedFingerprint {
    pub values: Vec<f64>,
    /// 1 = measured or EWMA-imputed, 0 = constant-filled.
    pub mask: Vec<u8>,
}

impl AugmentedFingerprint {
    /// Values followed by the mask.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.iter().copied().chain(self.mask.iter().map(|&m| f64::from(m))).collect()
    }
}

pub fn imputation_trick(
    fp: &Fingerprint,
    params: &EwmaParams,
) -> Result<AugmentedFingerprint, ImputationError> {
    params.validate()?;
    let (values, mask) = fp
        .values
        .iter()
        .map(|v| match v {
            Some(x) => (*x, 1u8),
            None => (params.constant_dbm, 0u8),
        })
        .unzip();
    Ok(AugmentedFingerprint { values, mask })
}

/// EWMA per channel followed by the imputation trick at every instant.
/// `rows[k][j]` is beacon `j` at `times[k]`.
pub fn impute_series<const N: usize>(
    times: &[f64],
    rows: &[[Option<f64>; N]],
    params: &EwmaParams,
) -> Result<Vec<AugmentedFingerprint>, ImputationError> {
    if times.len() != rows.len() {
        return Err(ImputationError::Length { times: times.len(), values: rows.len() });
    }
    let mut filled = vec![[None; N]; rows.len()];
    for ch in 0..N {
        let series: Vec<Option<f64>> = rows.iter().map(|r| r[ch]).collect();
        let out = ewma_impute(times, &series, params)?;
        for (dst, v) in filled.iter_mut().zip(out.values) {
            dst[ch] = v;
        }
    }
    filled
        .into_iter()
        .map(|r| imputation_trick(&Fingerprint::new(r.to_vec())?, params))
        .collect()
}
