//! Synthetic bus-network scenario: buses shuttle along routes, passengers
//! walk, wait, board and alight, and their phones log GPS fixes, BLE beacon
//! RSSI and an OS activity class at a fixed sampling rate.

mod geo;
mod rssi;
mod sim;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{Activity, Label};

pub use geo::{haversine_m, initial_bearing_deg, LocalProjection, EARTH_RADIUS_M};
pub use rssi::{rssi_at, RssiModel, CALIBRATION_TX_POWER_DBM};
pub use sim::{simulate_scenario, BusSchedule, Scenario};

/// Number of RSSI columns carried by every trajectory point.
pub const BEACON_SLOTS: usize = 5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("user {user} completed only {rides} rides, at least {required} required; increase the duration")]
    InsufficientActivity { user: u32, rides: usize, required: usize },
    #[error("cannot read scenario config: {0}")]
    Parse(String),
}

impl ScenarioError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        ScenarioError::InvalidConfig(msg.into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stop {
    pub id: u32,
    /// Metres east of the projection origin.
    pub x: f64,
    /// Metres north of the projection origin.
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Route {
    pub id: u32,
    /// Ordered stop ids; buses shuttle back and forth along them.
    pub stops: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub route: u32,
    pub max_speed_mps: f64,
    /// Phase shift of the bus timetable, seconds.
    #[serde(default)]
    pub start_offset_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mount {
    Bus(u32),
    Stop(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Beacon {
    pub id: u32,
    pub mount: Mount,
    pub tx_rate_hz: f64,
    pub tx_power_dbm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub routes: Vec<Route>,
    pub stops: Vec<Stop>,
    pub buses: Vec<Bus>,
    /// Beacon `i` fills RSSI slot `i`.
    pub beacons: Vec<Beacon>,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
}

impl Default for NetworkConfig {
    /// Two shuttles on two routes sharing the middle stop, one beacon per
    /// bus and per stop.
    fn default() -> Self {
        let stops = vec![
            Stop { id: 0, x: 0.0, y: 0.0 },
            Stop { id: 1, x: 220.0, y: 40.0 },
            Stop { id: 2, x: 420.0, y: -10.0 },
        ];
        let routes = vec![
            Route { id: 0, stops: vec![0, 1] },
            Route { id: 1, stops: vec![1, 2] },
        ];
        let buses = vec![
            Bus { id: 0, route: 0, max_speed_mps: 4.17, start_offset_s: 0.0 },
            Bus { id: 1, route: 1, max_speed_mps: 4.17, start_offset_s: 37.0 },
        ];
        let beacon = |id, mount| Beacon { id, mount, tx_rate_hz: 1.667, tx_power_dbm: -8.0 };
        let beacons = vec![
            beacon(0, Mount::Bus(0)),
            beacon(1, Mount::Bus(1)),
            beacon(2, Mount::Stop(0)),
            beacon(3, Mount::Stop(1)),
            beacon(4, Mount::Stop(2)),
        ];
        Self { routes, stops, buses, beacons, duration_s: 1144.0, sampling_rate_hz: 1.0 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.routes.is_empty() {
            return Err(ScenarioError::config("at least one route is required"));
        }
        if self.stops.len() < 2 {
            return Err(ScenarioError::config("at least two stops are required"));
        }
        if self.buses.is_empty() {
            return Err(ScenarioError::config("at least one bus is required"));
        }
        if self.beacons.is_empty() {
            return Err(ScenarioError::config("at least one beacon is required"));
        }
        if self.beacons.len() > BEACON_SLOTS {
            return Err(ScenarioError::config(format!(
                "at most {BEACON_SLOTS} beacons fit the dataset schema, got {}",
                self.beacons.len()
            )));
        }
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return Err(ScenarioError::config("sampling rate must be > 0"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(ScenarioError::config("duration must be > 0"));
        }
        if has_duplicates(self.stops.iter().map(|s| s.id)) {
            return Err(ScenarioError::config("stop ids must be unique"));
        }
        if has_duplicates(self.routes.iter().map(|r| r.id)) {
            return Err(ScenarioError::config("route ids must be unique"));
        }
        if has_duplicates(self.buses.iter().map(|b| b.id)) {
            return Err(ScenarioError::config("bus ids must be unique"));
        }
        if has_duplicates(self.beacons.iter().map(|b| b.id)) {
            return Err(ScenarioError::config("beacon ids must be unique"));
        }
        for route in &self.routes {
            if route.stops.len() < 2 {
                return Err(ScenarioError::config(format!(
                    "route {} must visit at least two stops",
                    route.id
                )));
            }
            if let Some(s) = route.stops.iter().find(|s| self.stop(**s).is_none()) {
                return Err(ScenarioError::config(format!(
                    "route {} references unknown stop {s}",
                    route.id
                )));
            }
            if route.stops.windows(2).any(|w| w[0] == w[1]) {
                return Err(ScenarioError::config(format!(
                    "route {} repeats a stop consecutively",
                    route.id
                )));
            }
        }
        for bus in &self.buses {
            if self.route(bus.route).is_none() {
                return Err(ScenarioError::config(format!(
                    "bus {} references unknown route {}",
                    bus.id, bus.route
                )));
            }
            if !(bus.max_speed_mps > 0.0) {
                return Err(ScenarioError::config(format!("bus {} max speed must be > 0", bus.id)));
            }
        }
        for beacon in &self.beacons {
            let known = match beacon.mount {
                Mount::Bus(id) => self.buses.iter().any(|b| b.id == id),
                Mount::Stop(id) => self.stop(id).is_some(),
            };
            if !known {
                return Err(ScenarioError::config(format!(
                    "beacon {} is mounted on {:?}, which does not exist",
                    beacon.id, beacon.mount
                )));
            }
            if !(beacon.tx_rate_hz > 0.0) {
                return Err(ScenarioError::config(format!(
                    "beacon {} tx rate must be > 0",
                    beacon.id
                )));
            }
        }
        Ok(())
    }

    pub fn stop(&self, id: u32) -> Option<&Stop> {
        self.stops.iter().find(|s| s.id == id)
    }

    pub fn route(&self, id: u32) -> Option<&Route> {
        self.routes.iter().find(|r| r.id == id)
    }
}

fn has_duplicates(ids: impl Iterator<Item = u32>) -> bool {
    let mut v: Vec<u32> = ids.collect();
    let n = v.len();
    v.sort_unstable();
    v.dedup();
    v.len() != n
}

/// Passenger behaviour and sensor parameters that are not radio-related.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    pub walk_speed_mps: f64,
    pub dwell_s: f64,
    /// Radius around the bus position that counts as on board.
    pub bus_footprint_radius_m: f64,
    /// Distance band from the stop where passengers wait.
    pub wait_offset_m: (f64, f64),
    /// Seconds after bus arrival before a waiting passenger boards.
    pub board_delay_s: (f64, f64),
    /// Seconds after arrival before a rider alights.
    pub alight_delay_s: (f64, f64),
    /// Probability of walking to another stop after alighting.
    pub walk_between_stops_prob: f64,
    /// Inclusive range of rides each user aims to complete.
    pub rides: (usize, usize),
    /// Minimum completed rides per user; simulation fails otherwise.
    pub min_rides: usize,
    /// Distance band of the starting point from the first stop.
    pub approach_distance_m: (f64, f64),
    /// Distance band of the idle spot taken after the last ride.
    pub idle_distance_m: (f64, f64),
    /// Height difference between phone and beacon, keeps distances > 0.
    pub antenna_height_m: f64,
    pub gps_noise_std_m: f64,
    /// Lag-one autocorrelation of the GPS error process.
    pub gps_noise_correlation: f64,
    /// Probability the emulated OS activity agrees with the true state.
    pub os_activity_accuracy: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            walk_speed_mps: 1.4,
            dwell_s: 25.0,
            bus_footprint_radius_m: 3.0,
            wait_offset_m: (2.0, 6.0),
            board_delay_s: (2.0, 8.0),
            alight_delay_s: (2.0, 6.0),
            walk_between_stops_prob: 0.35,
            rides: (2, 4),
            min_rides: 2,
            approach_distance_m: (20.0, 80.0),
            idle_distance_m: (8.0, 25.0),
            antenna_height_m: 1.0,
            gps_noise_std_m: 3.0,
            gps_noise_correlation: 0.9,
            os_activity_accuracy: 0.5,
        }
    }
}

impl BehaviorConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let band = |name: &str, (lo, hi): (f64, f64)| {
            if lo >= 0.0 && lo <= hi && hi.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::config(format!("{name} must be a range 0 <= lo <= hi")))
            }
        };
        band("wait_offset_m", self.wait_offset_m)?;
        band("board_delay_s", self.board_delay_s)?;
        band("alight_delay_s", self.alight_delay_s)?;
        band("approach_distance_m", self.approach_distance_m)?;
        band("idle_distance_m", self.idle_distance_m)?;
        if !(self.walk_speed_mps > 0.0) || !(self.dwell_s > 0.0) {
            return Err(ScenarioError::config("walk speed and dwell must be > 0"));
        }
        if self.board_delay_s.1 >= self.dwell_s || self.alight_delay_s.1 >= self.dwell_s {
            return Err(ScenarioError::config("boarding and alighting delays must fit in the dwell"));
        }
        if !(self.bus_footprint_radius_m > 0.0) {
            return Err(ScenarioError::config("bus footprint radius must be > 0"));
        }
        if self.rides.0 > self.rides.1 || self.rides.0 < self.min_rides {
            return Err(ScenarioError::config("rides range must satisfy min_rides <= lo <= hi"));
        }
        if !(self.antenna_height_m > 0.0) {
            return Err(ScenarioError::config("antenna height must be > 0"));
        }
        for (name, p) in [
            ("walk_between_stops_prob", self.walk_between_stops_prob),
            ("gps_noise_correlation", self.gps_noise_correlation),
            ("os_activity_accuracy", self.os_activity_accuracy),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ScenarioError::config(format!("{name} must lie in [0,1]")));
            }
        }
        if !(self.gps_noise_std_m >= 0.0) {
            return Err(ScenarioError::config("gps noise std must be >= 0"));
        }
        Ok(())
    }
}

/// Everything needed to generate a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_users: u32,
    pub seed: u64,
    pub projection: LocalProjection,
    pub network: NetworkConfig,
    pub rssi: RssiModel,
    pub behavior: BehaviorConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_users: 12,
            seed: 20_210_601,
            projection: LocalProjection::default(),
            network: NetworkConfig::default(),
            rssi: RssiModel::default(),
            behavior: BehaviorConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_users < 1 {
            return Err(ScenarioError::config("n_users must be >= 1"));
        }
        self.network.validate()?;
        self.rssi.validate()?;
        self.behavior.validate()
    }
}

/// One timestamped sensor snapshot of one user.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub user_id: u32,
    pub timestamp_s: f64,
    pub lat: f64,
    pub lon: f64,
    pub rssi: [Option<f64>; BEACON_SLOTS],
    pub os_activity: Activity,
    pub bibo_label: Label,
    pub trip_segment_id: u32,
}

/// Emulated OS activity recognition: reports the state consistent with the
/// true label with probability `accuracy`.
pub fn emulate_os_activity<R: Rng + ?Sized>(true_label: Label, accuracy: f64, rng: &mut R) -> Activity {
    let correct = rng.random::<f64>() < accuracy;
    let reported = if correct { true_label } else { true_label.flipped() };
    Activity::consistent_with(reported)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn default_config_is_valid() {
        ScenarioConfig::default().validate().unwrap();
        let n = NetworkConfig::default();
        assert_eq!(n.beacons.len(), 5);
        assert_eq!(n.stops.len(), 3);
        assert_eq!(n.routes.len(), 2);
        assert!(n.beacons.iter().all(|b| b.tx_rate_hz == 1.667 && b.tx_power_dbm == -8.0));
    }

    #[test]
    fn invalid_configs_name_the_invariant() {
        let mut c = NetworkConfig::default();
        c.beacons[0].mount = Mount::Bus(9);
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("beacon 0"), "{err}");

        let mut c = NetworkConfig::default();
        c.stops.truncate(1);
        assert!(c.validate().unwrap_err().to_string().contains("two stops"));

        let mut c = NetworkConfig::default();
        c.sampling_rate_hz = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("sampling rate"));

        let mut c = NetworkConfig::default();
        c.beacons[2].tx_rate_hz = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("tx rate"));

        let mut c = NetworkConfig::default();
        c.buses.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn os_activity_extremes() {
        let mut rng = seed::rng_from(5);
        for _ in 0..100 {
            assert_eq!(emulate_os_activity(Label::Bi, 1.0, &mut rng), Activity::Automotive);
            assert_eq!(emulate_os_activity(Label::Bo, 1.0, &mut rng), Activity::Other);
            assert_eq!(emulate_os_activity(Label::Bo, 0.0, &mut rng), Activity::Automotive);
            assert_eq!(emulate_os_activity(Label::Bi, 0.0, &mut rng), Activity::Other);
        }
    }

    #[test]
    fn config_parses_from_json_with_defaults() {
        let c: ScenarioConfig = serde_json::from_str(r#"{"n_users": 3}"#).unwrap();
        assert_eq!(c.n_users, 3);
        assert_eq!(c.network, NetworkConfig::default());
        let bad = serde_json::from_str::<ScenarioConfig>(r#"{"n_user": 3}"#);
        assert!(bad.is_err());
    }
}
