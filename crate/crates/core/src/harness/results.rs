use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;

pub const RESULT_COLUMNS: [&str; 12] = [
    "sensor", "model", "setting", "lambda", "draw", "precision", "recall", "f1", "accuracy", "auc", "flip_fraction",
    "flags",
];

/// Training labels / evaluation labels of one record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "trueGT/trueGT")]
    TrueTrue,
    #[serde(rename = "flipGT/flipGT")]
    FlipFlip,
    #[serde(rename = "flipGT/trueGT")]
    FlipTrue,
    #[serde(rename = "random/trueGT")]
    RandomTrue,
    /// Extra variant, logged only on request.
    #[serde(rename = "trueGT/flipGT")]
    TrueFlip,
    /// OS activity recognition scored against true labels.
    #[serde(rename = "os/trueGT")]
    OsTrue,
}

impl Setting {
    pub const ALL: [Setting; 6] = [
        Setting::TrueTrue,
        Setting::FlipFlip,
        Setting::FlipTrue,
        Setting::RandomTrue,
        Setting::TrueFlip,
        Setting::OsTrue,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Setting::TrueTrue => "trueGT/trueGT",
            Setting::FlipFlip => "flipGT/flipGT",
            Setting::FlipTrue => "flipGT/trueGT",
            Setting::RandomTrue => "random/trueGT",
            Setting::TrueFlip => "trueGT/flipGT",
            Setting::OsTrue => "os/trueGT",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Setting::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown setting `{s}`"))
    }
}

/// One evaluated cell of the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sensor: String,
    pub model: String,
    pub setting: Setting,
    pub lambda: f64,
    pub draw: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// `None` when the evaluation labels hold a single class.
    pub auc: Option<f64>,
    /// Share of training rows whose label was flipped.
    pub flip_fraction: f64,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub records: Vec<EvalRecord>,
}

impl ResultTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(RESULT_COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.sensor.clone(),
                r.model.clone(),
                r.setting.to_string(),
                r.lambda.to_string(),
                r.draw.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string(),
                r.accuracy.to_string(),
                r.auc.map(|a| a.to_string()).unwrap_or_default(),
                r.flip_fraction.to_string(),
                r.flags.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, HarnessError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        if header != RESULT_COLUMNS {
            return Err(HarnessError::Parse { line: 1, message: format!("unexpected header {header:?}") });
        }
        let mut records = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i as u64 + 2;
            let bad = |message: String| HarnessError::Parse { line, message };
            let num = |k: usize| -> Result<f64, HarnessError> {
                rec[k].parse().map_err(|_| bad(format!("{}: `{}` is not a number", RESULT_COLUMNS[k], &rec[k])))
            };
            records.push(EvalRecord {
                sensor: rec[0].to_string(),
                model: rec[1].to_string(),
                setting: rec[2].parse().map_err(bad)?,
                lambda: num(3)?,
                draw: rec[4].parse().map_err(|_| bad(format!("draw: `{}` is not an integer", &rec[4])))?,
                precision: num(5)?,
                recall: num(6)?,
                f1: num(7)?,
                accuracy: num(8)?,
                auc: if rec[9].is_empty() { None } else { Some(num(9)?) },
                flip_fraction: num(10)?,
                flags: if rec[11].is_empty() { Vec::new() } else { rec[11].split(';').map(String::from).collect() },
            });
        }
        Ok(Self { records })
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), HarnessError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self, HarnessError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
