//! Local plane <-> WGS84 mapping and great-circle helpers.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Equirectangular projection around a fixed origin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalProjection {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Default for LocalProjection {
    fn default() -> Self {
        // Nordhavn, Copenhagen
        Self { origin_lat: 55.7105, origin_lon: 12.5945 }
    }
}

impl LocalProjection {
    /// Plane metres (east, north) to (lat, lon) degrees.
    pub fn to_lat_lon(&self, x: f64, y: f64) -> (f64, f64) {
        let lat = self.origin_lat + (y / EARTH_RADIUS_M).to_degrees();
        let lon = self.origin_lon
            + (x / (EARTH_RADIUS_M * self.origin_lat.to_radians().cos())).to_degrees();
        (lat, lon)
    }

    pub fn to_plane(&self, lat: f64, lon: f64) -> (f64, f64) {
        let y = (lat - self.origin_lat).to_radians() * EARTH_RADIUS_M;
        let x = (lon - self.origin_lon).to_radians()
            * EARTH_RADIUS_M
            * self.origin_lat.to_radians().cos();
        (x, y)
    }
}

/// Haversine distance in metres.
pub fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// Initial bearing in degrees, normalised to [0, 360).
pub fn initial_bearing_deg(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dl = (lon2 - lon1).to_radians();
    let y = dl.sin() * p2.cos();
    let x = p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos();
    let b = y.atan2(x).to_degrees().rem_euclid(360.0);
    // rem_euclid can round up to exactly 360.0 for tiny negative inputs
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}
