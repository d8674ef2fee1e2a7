use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::scenario::{haversine_m, initial_bearing_deg};

/// Movement since the previous fix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub distance_m: f64,
    pub bearing_deg: f64,
    pub speed_mps: f64,
}

/// A timestamped GPS fix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fix {
    pub timestamp_s: f64,
    pub lat: f64,
    pub lon: f64,
}

/// Kinematics of each fix relative to its predecessor. The first fix, and
/// any fix that does not advance in time, yield `None`.
pub fn gps_kinematics(fixes: &[Fix]) -> Result<Vec<Option<Kinematics>>, FeatureError> {
    if fixes.len() < 2 {
        return Err(FeatureError::TooFewFixes(fixes.len()));
    }
    let mut out = Vec::with_capacity(fixes.len());
    out.push(None);
    for w in fixes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dt = b.timestamp_s - a.timestamp_s;
        if dt <= 0.0 {
            out.push(None);
            continue;
        }
        let distance_m = haversine_m(a.lat, a.lon, b.lat, b.lon);
        out.push(Some(Kinematics {
            distance_m,
            bearing_deg: initial_bearing_deg(a.lat, a.lon, b.lat, b.lon),
            speed_mps: distance_m / dt,
        }));
    }
    Ok(out)
}

/// Fills `None` entries forward, and leading ones from the first value.
pub(crate) fn fill_kinematics(k: &[Option<Kinematics>]) -> Option<Vec<Kinematics>> {
    let first = k.iter().flatten().next().copied()?;
    let mut last = first;
    Some(
        k.iter()
            .map(|v| {
                if let Some(v) = v {
                    last = *v;
                }
                last
            })
            .collect(),
    )
}
