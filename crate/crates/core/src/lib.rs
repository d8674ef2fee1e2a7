//! Be-in/be-out (BIBO) passenger detection workbench.
//!
//! The crate covers the whole offline pipeline: a small bus-network
//! simulator instrumented with BLE beacons and GPS, dataset persistence and
//! trip segmentation, RSSI gap imputation, windowed feature extraction,
//! random forest and MLP classifiers, label-flip noise models and the
//! Monte-Carlo harness that measures classifier robustness and evaluation
//! bias across error rates.

pub mod dataset;
pub mod features;
pub mod harness;
pub mod imputation;
pub mod label;
pub mod metrics;
pub mod models;
pub mod noise;
pub mod scenario;
pub mod seed;

pub use label::{Activity, Label};
