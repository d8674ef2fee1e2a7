//! Windowed time-series features for BLE and GPS signals.

mod gps;
mod window;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{clean_all, CleanedUser, Dataset, DatasetError};
use crate::imputation::{impute_series, EwmaParams, ImputationError};
use crate::label::Label;
use crate::models::Matrix;
use crate::scenario::BEACON_SLOTS;

pub use gps::{gps_kinematics, Fix, Kinematics};
pub use window::{window_features, FEATURE_NAMES, HALF_WINDOW_S, N_FEATURES, WINDOW_S};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("window is empty")]
    EmptyWindow,
    #[error("length mismatch: {times} timestamps, {values} values")]
    Length { times: usize, values: usize },
    #[error("need at least two GPS fixes, got {0}")]
    TooFewFixes(usize),
    #[error(transparent)]
    Imputation(#[from] ImputationError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SensorFamily {
    Ble,
    Gps,
}

impl SensorFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            SensorFamily::Ble => "BLE",
            SensorFamily::Gps => "GPS",
        }
    }

    /// Signal channels whose windows are summarised by the 14 features.
    pub fn channels(self) -> Vec<String> {
        match self {
            SensorFamily::Ble => (0..BEACON_SLOTS).map(|i| format!("rssi_{i}")).collect(),
            SensorFamily::Gps => ["distance", "bearing", "speed"].map(String::from).to_vec(),
        }
    }

    /// Column schema: `f{1..14}_{channel}` channel by channel, then for BLE
    /// one `mask_{channel}` column holding the window mean of the mask.
    pub fn columns(self) -> Vec<String> {
        let channels = self.channels();
        let mut cols: Vec<String> = channels
            .iter()
            .flat_map(|c| (1..=N_FEATURES).map(move |i| format!("f{i}_{c}")))
            .collect();
        if self == SensorFamily::Ble {
            cols.extend(channels.iter().map(|c| format!("mask_{c}")));
        }
        cols
    }
}

impl std::fmt::Display for SensorFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SensorFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BLE" => Ok(SensorFamily::Ble),
            "GPS" => Ok(SensorFamily::Gps),
            other => Err(format!("unknown sensor family {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub user: u32,
    pub timestamp_s: f64,
    /// Index of the source row in the dataset.
    pub row: usize,
    pub features: Vec<f64>,
    pub label: Label,
    pub trip_segment_id: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub family: SensorFamily,
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense matrix of the rows selected by `pick`, in table order.
    pub fn matrix_where(&self, pick: impl Fn(&FeatureRow) -> bool) -> (Matrix, Vec<usize>) {
        let idx: Vec<usize> = (0..self.rows.len()).filter(|&i| pick(&self.rows[i])).collect();
        let mut data = Vec::with_capacity(idx.len() * self.columns.len());
        for &i in &idx {
            data.extend_from_slice(&self.rows[i].features);
        }
        (Matrix::new(self.columns.clone(), data).expect("rows match schema"), idx)
    }

    pub fn matrix(&self) -> Matrix {
        self.matrix_where(|_| true).0
    }

    pub fn labels(&self) -> Vec<Label> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Writes `user_id,timestamp_s,<columns>,bibo_label,trip_segment_id`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), FeatureError> {
        let mut w = csv::Writer::from_writer(writer);
        let header = ["user_id", "timestamp_s"]
            .into_iter()
            .map(String::from)
            .chain(self.columns.iter().cloned())
            .chain(["bibo_label", "trip_segment_id"].into_iter().map(String::from));
        w.write_record(header).map_err(csv_io)?;
        for r in &self.rows {
            let rec = [r.user.to_string(), r.timestamp_s.to_string()]
                .into_iter()
                .chain(r.features.iter().map(f64::to_string))
                .chain([r.label.to_string(), r.trip_segment_id.to_string()]);
            w.write_record(rec).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> FeatureError {
    FeatureError::Io(std::io::Error::other(e))
}

fn windowed(times: &[f64], series: &[f64], starts: &[usize], k: usize) -> Result<[f64; N_FEATURES], FeatureError> {
    window_features(&times[starts[k]..=k], &series[starts[k]..=k])
}

fn user_rows(
    dataset: &Dataset,
    user: &CleanedUser,
    family: SensorFamily,
    params: &EwmaParams,
) -> Result<Vec<FeatureRow>, FeatureError> {
    let points: Vec<_> = user.rows.iter().map(|&i| &dataset.rows()[i]).collect();
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let times: Vec<f64> = points.iter().map(|p| p.timestamp_s).collect();
    let starts = window::window_starts(&times);
    let mut segment_of = vec![0u32; points.len()];
    for s in &user.segments {
        segment_of[s.span.clone()].fill(s.segment_id);
    }

    // channel-major signal series, plus mask series for BLE
    let (signals, masks): (Vec<Vec<f64>>, Vec<Vec<f64>>) = match family {
        SensorFamily::Ble => {
            let rssi: Vec<[Option<f64>; BEACON_SLOTS]> = points.iter().map(|p| p.rssi).collect();
            let aug = impute_series(&times, &rssi, params)?;
            let signals = (0..BEACON_SLOTS).map(|c| aug.iter().map(|a| a.values[c]).collect()).collect();
            let masks = (0..BEACON_SLOTS)
                .map(|c| aug.iter().map(|a| f64::from(a.mask[c])).collect())
                .collect();
            (signals, masks)
        }
        SensorFamily::Gps => {
            if points.len() < 2 {
                log::warn!("user {}: a single GPS fix, no kinematics", user.user);
                return Ok(Vec::new());
            }
            let fixes: Vec<Fix> = points
                .iter()
                .map(|p| Fix { timestamp_s: p.timestamp_s, lat: p.lat, lon: p.lon })
                .collect();
            let Some(kin) = gps::fill_kinematics(&gps_kinematics(&fixes)?) else {
                return Ok(Vec::new());
            };
            let signals = vec![
                kin.iter().map(|k| k.distance_m).collect(),
                kin.iter().map(|k| k.bearing_deg).collect(),
                kin.iter().map(|k| k.speed_mps).collect(),
            ];
            (signals, Vec::new())
        }
    };

    let width = signals.len() * N_FEATURES + masks.len();
    let mut out = Vec::with_capacity(points.len());
    for k in 0..points.len() {
        let mut features = Vec::with_capacity(width);
        for s in &signals {
            features.extend_from_slice(&windowed(&times, s, &starts, k)?);
        }
        for m in &masks {
            let w = &m[starts[k]..=k];
            features.push(w.iter().sum::<f64>() / w.len() as f64);
        }
        out.push(FeatureRow {
            user: user.user,
            timestamp_s: times[k],
            row: user.rows[k],
            features,
            label: points[k].bibo_label,
            trip_segment_id: segment_of[k],
        });
    }
    Ok(out)
}

/// Features for already cleaned users; rows ordered by user then time.
pub fn build_feature_table_from(
    dataset: &Dataset,
    cleaned: &[CleanedUser],
    family: SensorFamily,
    params: &EwmaParams,
) -> Result<FeatureTable, FeatureError> {
    params.validate()?;
    let per_user: Vec<Vec<FeatureRow>> = cleaned
        .par_iter()
        .map(|u| user_rows(dataset, u, family, params))
        .collect::<Result<_, _>>()?;
    Ok(FeatureTable { family, columns: family.columns(), rows: per_user.into_iter().flatten().collect() })
}

/// Cleans and segments every user, then extracts features for `family`.
pub fn build_feature_table(
    dataset: &Dataset,
    family: SensorFamily,
    params: &EwmaParams,
) -> Result<FeatureTable, FeatureError> {
    build_feature_table_from(dataset, &clean_all(dataset), family, params)
}
