use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Passenger state relative to a vehicle. `Bi` is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Be-out: outside any bus.
    #[serde(rename = "BO")]
    Bo,
    /// Be-in: inside a bus.
    #[serde(rename = "BI")]
    Bi,
}

impl Label {
    pub fn flipped(self) -> Self {
        match self {
            Label::Bi => Label::Bo,
            Label::Bo => Label::Bi,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Bi
    }

    /// 1 for BI, 0 for BO.
    pub fn as_target(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }

    pub fn from_bool(positive: bool) -> Self {
        if positive {
            Label::Bi
        } else {
            Label::Bo
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Bi => "BI",
            Label::Bo => "BO",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BI" => Ok(Label::Bi),
            "BO" => Ok(Label::Bo),
            other => Err(format!("expected BI or BO, got {other:?}")),
        }
    }
}

/// Binary transport activity reported by the phone OS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Automotive,
    Other,
}

impl Activity {
    /// The activity consistent with a BIBO label.
    pub fn consistent_with(label: Label) -> Self {
        match label {
            Label::Bi => Activity::Automotive,
            Label::Bo => Activity::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Automotive => "automotive",
            Activity::Other => "other",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "automotive" => Ok(Activity::Automotive),
            "other" => Ok(Activity::Other),
            other => Err(format!("expected automotive or other, got {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        for l in [Label::Bi, Label::Bo] {
            assert_eq!(l.to_string().parse::<Label>().unwrap(), l);
            assert_eq!(l.flipped().flipped(), l);
        }
        assert!("bi".parse::<Label>().is_err());
        assert_eq!(Activity::consistent_with(Label::Bi), Activity::Automotive);
        assert_eq!("other".parse::<Activity>().unwrap(), Activity::Other);
    }
}
