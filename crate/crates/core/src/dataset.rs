//! Canonical trajectory dataset: CSV persistence, cleaning and trip
//! segmentation.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{Activity, Label};
use crate::scenario::BEACON_SLOTS;

pub use crate::scenario::TrajectoryPoint;

pub const SCHEMA_VERSION: &str = "bibo-dataset/1";

/// Column order of the dataset CSV.
pub const COLUMNS: [&str; 12] = [
    "user_id",
    "timestamp_s",
    "lat",
    "lon",
    "rssi_0",
    "rssi_1",
    "rssi_2",
    "rssi_3",
    "rssi_4",
    "os_activity",
    "bibo_label",
    "trip_segment_id",
];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}, column {column}: {message}")]
    Malformed { line: u64, column: String, message: String },
    #[error("duplicate row for user {user} at t={timestamp_s}")]
    DuplicateKey { user: u32, timestamp_s: f64 },
    #[error("unknown user {0}")]
    UnknownUser(u32),
}

/// Rows in insertion order plus a per-user row index.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    rows: Vec<TrajectoryPoint>,
    index: BTreeMap<u32, Vec<usize>>,
    pub schema_version: &'static str,
}

impl Dataset {
    pub fn new(rows: Vec<TrajectoryPoint>) -> Result<Self, DatasetError> {
        let mut seen = HashSet::with_capacity(rows.len());
        let mut index: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            if !r.timestamp_s.is_finite() {
                return Err(DatasetError::Schema(format!(
                    "row {i} has a non-finite timestamp"
                )));
            }
            // +0.0 and -0.0 are the same instant
            let key = (r.user_id, (r.timestamp_s + 0.0).to_bits());
            if !seen.insert(key) {
                return Err(DatasetError::DuplicateKey { user: r.user_id, timestamp_s: r.timestamp_s });
            }
            index.entry(r.user_id).or_default().push(i);
        }
        Ok(Self { rows, index, schema_version: SCHEMA_VERSION })
    }

    /// Flattens per-user trajectories, as produced by the simulator.
    pub fn from_users(users: Vec<Vec<TrajectoryPoint>>) -> Result<Self, DatasetError> {
        Self::new(users.into_iter().flatten().collect())
    }

    pub fn empty() -> Self {
        Self { rows: Vec::new(), index: BTreeMap::new(), schema_version: SCHEMA_VERSION }
    }

    pub fn rows(&self) -> &[TrajectoryPoint] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row indices of `user`, in insertion order.
    pub fn user_rows(&self, user: u32) -> Option<&[usize]> {
        self.index.get(&user).map(Vec::as_slice)
    }
}

/// Sorted, deduplicated user ids.
pub fn list_unique_users(dataset: &Dataset) -> Vec<u32> {
    dataset.index.keys().copied().collect()
}

fn parse_err(line: u64, column: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed { line, column: column.to_string(), message: message.into() }
}

fn parse_f64(field: &str, line: u64, column: &str) -> Result<f64, DatasetError> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_err(line, column, format!("expected a number, got {field:?}")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(parse_err(line, column, format!("non-finite value {field:?}")))
    }
}

fn parse_int<T: std::str::FromStr>(field: &str, line: u64, column: &str) -> Result<T, DatasetError> {
    field
        .parse()
        .map_err(|_| parse_err(line, column, format!("expected a non-negative integer, got {field:?}")))
}

pub fn read_csv<R: Read>(reader: R) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if let Some(unknown) = headers.iter().find(|h| !COLUMNS.contains(h)) {
        return Err(DatasetError::Schema(format!("unknown column {unknown:?}")));
    }
    if headers.iter().ne(COLUMNS.iter().copied()) {
        return Err(DatasetError::Schema(format!(
            "expected columns {}, got {}",
            COLUMNS.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != COLUMNS.len() {
            let column = COLUMNS.get(record.len()).unwrap_or(&"<extra>");
            return Err(parse_err(
                line,
                column,
                format!("expected {} fields, got {}", COLUMNS.len(), record.len()),
            ));
        }
        let f = |i: usize| &record[i];
        let mut rssi = [None; BEACON_SLOTS];
        for (slot, v) in rssi.iter_mut().enumerate() {
            let col = COLUMNS[4 + slot];
            let raw = f(4 + slot);
            // an empty field is a missing reading, never zero
            *v = if raw.is_empty() { None } else { Some(parse_f64(raw, line, col)?) };
        }
        rows.push(TrajectoryPoint {
            user_id: parse_int(f(0), line, COLUMNS[0])?,
            timestamp_s: parse_f64(f(1), line, COLUMNS[1])?,
            lat: parse_f64(f(2), line, COLUMNS[2])?,
            lon: parse_f64(f(3), line, COLUMNS[3])?,
            rssi,
            os_activity: f(9).parse::<Activity>().map_err(|m| parse_err(line, COLUMNS[9], m))?,
            bibo_label: f(10).parse::<Label>().map_err(|m| parse_err(line, COLUMNS[10], m))?,
            trip_segment_id: parse_int(f(11), line, COLUMNS[11])?,
        });
    }
    Dataset::new(rows)
}

pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS)?;
    let mut fields: Vec<String> = Vec::with_capacity(COLUMNS.len());
    for r in &dataset.rows {
        fields.clear();
        fields.push(r.user_id.to_string());
        fields.push(r.timestamp_s.to_string());
        fields.push(r.lat.to_string());
        fields.push(r.lon.to_string());
        fields.extend(r.rssi.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())));
        fields.push(r.os_activity.to_string());
        fields.push(r.bibo_label.to_string());
        fields.push(r.trip_segment_id.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset, DatasetError> {
    read_csv(File::open(path)?)
}

pub fn save_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    write_csv(dataset, std::io::BufWriter::new(File::create(path)?))
}

/// A maximal run of one user's retained rows sharing a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TripSegment {
    pub user: u32,
    pub segment_id: u32,
    pub label: Label,
    pub start_s: f64,
    pub end_s: f64,
    /// Positions within [`CleanedUser::rows`].
    pub span: Range<usize>,
}

/// One user's retained rows and their trip segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct CleanedUser {
    pub user: u32,
    /// Dataset row indices kept after cleaning, in time order.
    pub rows: Vec<usize>,
    pub segments: Vec<TripSegment>,
    /// Rows dropped for non-increasing timestamps.
    pub dropped: usize,
    pub warning: Option<String>,
}

impl CleanedUser {
    /// Label of every retained row, in order.
    pub fn labels(&self, dataset: &Dataset) -> Vec<Label> {
        self.rows.iter().map(|&i| dataset.rows[i].bibo_label).collect()
    }
}

/// Splits a label sequence into maximal constant runs.
pub fn segment_labels(labels: &[Label]) -> Vec<(Label, Range<usize>)> {
    let mut out: Vec<(Label, Range<usize>)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some((cur, span)) if *cur == l => span.end = i + 1,
            _ => out.push((l, i..i + 1)),
        }
    }
    out
}

/// Drops rows whose timestamp does not exceed the last kept one, then
/// derives trip segments from label transitions.
pub fn clean_segment_trajectories(dataset: &Dataset, user: u32) -> Result<CleanedUser, DatasetError> {
    let idx = dataset.user_rows(user).ok_or(DatasetError::UnknownUser(user))?;
    let mut rows = Vec::with_capacity(idx.len());
    let mut last = f64::NEG_INFINITY;
    for &i in idx {
        let t = dataset.rows[i].timestamp_s;
        if t > last {
            rows.push(i);
            last = t;
        }
    }
    let dropped = idx.len() - rows.len();
    if dropped > 0 {
        log::warn!("user {user}: dropped {dropped} rows with non-increasing timestamps");
    }
    let labels: Vec<Label> = rows.iter().map(|&i| dataset.rows[i].bibo_label).collect();
    let segments = segment_labels(&labels)
        .into_iter()
        .enumerate()
        .map(|(k, (label, span))| TripSegment {
            user,
            segment_id: k as u32,
            label,
            start_s: dataset.rows[rows[span.start]].timestamp_s,
            end_s: dataset.rows[rows[span.end - 1]].timestamp_s,
            span,
        })
        .collect();
    let warning = rows.is_empty().then(|| format!("user {user} has no retained rows"));
    Ok(CleanedUser { user, rows, segments, dropped, warning })
}

/// Cleans every user, in id order.
pub fn clean_all(dataset: &Dataset) -> Vec<CleanedUser> {
    list_unique_users(dataset)
        .into_iter()
        .map(|u| clean_segment_trajectories(dataset, u).expect("listed user exists"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Bi, Bo};

    fn point(user: u32, t: f64, label: Label) -> TrajectoryPoint {
        TrajectoryPoint {
            user_id: user,
            timestamp_s: t,
            lat: 55.7,
            lon: 12.6,
            rssi: [Some(-70.5), None, None, Some(-99.25), None],
            os_activity: Activity::Other,
            bibo_label: label,
            trip_segment_id: 0,
        }
    }

    fn header() -> String {
        COLUMNS.join(",") + "\n"
    }

    #[test]
    fn header_only_is_empty() {
        let ds = read_csv(header().as_bytes()).unwrap();
        assert!(ds.is_empty());
        assert!(list_unique_users(&ds).is_empty());
    }

    #[test]
    fn empty_rssi_field_is_absent() {
        let csv = header() + "1,0,55.7,12.6,,-80,,,,other,BO,0\n";
        let ds = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.rows()[0].rssi, [None, Some(-80.0), None, None, None]);
    }

    #[test]
    fn duplicate_key_rejected() {
        let csv = header() + "1,0,55.7,12.6,,,,,,other,BO,0\n1,0,55.7,12.6,,,,,,other,BI,1\n";
        assert!(matches!(read_csv(csv.as_bytes()), Err(DatasetError::DuplicateKey { user: 1, .. })));
    }

    #[test]
    fn malformed_row_reports_line_and_column() {
        let csv = header() + "1,0,55.7,12.6,,,,,,other,BO,0\n1,1,55.7,12.6,,abc,,,,other,BO,0\n";
        match read_csv(csv.as_bytes()) {
            Err(DatasetError::Malformed { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "rssi_1");
            }
            other => panic!("unexpected {other:?}"),
        }
        let csv = header() + "1,0,55.7,12.6,,,,,,walking,BO,0\n";
        let err = read_csv(csv.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("os_activity") && err.contains("line 2"), "{err}");
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let csv = header().replace("lon", "longitude");
        let err = read_csv(csv.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::Schema(ref m) if m.contains("longitude")), "{err}");
    }

    #[test]
    fn save_then_load_is_identity() {
        let ds = Dataset::new(vec![
            point(2, 0.0, Bo),
            point(2, 1.0, Bi),
            point(1, 0.5, Bo),
            TrajectoryPoint { lat: 55.71051234567891, timestamp_s: 0.1 + 0.2, ..point(1, 0.0, Bi) },
        ])
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_csv(&ds, &path).unwrap();
        assert_eq!(load_csv(&path).unwrap(), ds);
    }

    #[test]
    fn users_sorted_and_deduplicated() {
        let ds = Dataset::new(vec![
            point(3, 0.0, Bo),
            point(1, 0.0, Bo),
            point(1, 1.0, Bo),
            point(2, 0.0, Bo),
        ])
        .unwrap();
        assert_eq!(list_unique_users(&ds), vec![1, 2, 3]);
    }

    fn user_with(labels: &[Label], times: &[f64]) -> Dataset {
        Dataset::new(labels.iter().zip(times).map(|(&l, &t)| point(7, t, l)).collect()).unwrap()
    }

    #[test]
    fn transitions_define_segments() {
        let ds = user_with(&[Bo, Bo, Bi, Bi, Bo], &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let c = clean_segment_trajectories(&ds, 7).unwrap();
        let labels: Vec<Label> = c.segments.iter().map(|s| s.label).collect();
        assert_eq!(labels, vec![Bo, Bi, Bo]);
        assert_eq!(c.segments[1].span, 2..4);
        assert_eq!((c.segments[1].start_s, c.segments[1].end_s), (2.0, 3.0));
        assert_eq!(c.dropped, 0);
    }

    #[test]
    fn constant_label_is_one_segment() {
        let ds = user_with(&[Bi; 6], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(clean_segment_trajectories(&ds, 7).unwrap().segments.len(), 1);
    }

    #[test]
    fn unknown_user_errors() {
        let ds = user_with(&[Bi], &[0.0]);
        assert!(matches!(clean_segment_trajectories(&ds, 8), Err(DatasetError::UnknownUser(8))));
    }

    /// Brute-force reference: keep a row iff it is later than every kept row
    /// before it, then count label changes.
    fn oracle(times: &[f64], labels: &[Label]) -> (usize, usize) {
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..times.len() {
            if kept.iter().all(|&k| times[k] < times[i]) {
                kept.push(i);
            }
        }
        let changes = kept.windows(2).filter(|w| labels[w[0]] != labels[w[1]]).count();
        let segs = if kept.is_empty() { 0 } else { changes + 1 };
        (kept.len(), segs)
    }

    #[test]
    fn out_of_order_row_dropped() {
        let times = [0.0, 1.0, 2.0, 1.5, 3.0, 4.0];
        let labels = [Bo, Bo, Bi, Bo, Bi, Bo];
        let ds = user_with(&labels, &times);
        let c = clean_segment_trajectories(&ds, 7).unwrap();
        let (kept, segs) = oracle(&times, &labels);
        assert_eq!((c.rows.len(), c.segments.len()), (kept, segs));
        assert_eq!((kept, segs), (5, 3));
        assert_eq!(c.dropped, 1);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cleaning_matches_oracle(raw in prop::collection::vec((0u16..400, any::<bool>()), 1..60)) {
            let mut seen = HashSet::new();
            let raw: Vec<_> = raw.into_iter().filter(|(t, _)| seen.insert(*t)).collect();
            let times: Vec<f64> = raw.iter().map(|(t, _)| f64::from(*t) * 0.5).collect();
            let labels: Vec<Label> = raw.iter().map(|(_, b)| Label::from_bool(*b)).collect();
            let ds = user_with(&labels, &times);
            let c = clean_segment_trajectories(&ds, 7).unwrap();
            let (kept, segs) = oracle(&times, &labels);
            prop_assert_eq!(c.rows.len(), kept);
            prop_assert_eq!(c.segments.len(), segs);
            // coverage and tiling
            let covered: usize = c.segments.iter().map(|s| s.span.len()).sum();
            prop_assert_eq!(covered, c.rows.len());
            for w in c.segments.windows(2) {
                prop_assert_eq!(w[0].span.end, w[1].span.start);
                prop_assert_ne!(w[0].label, w[1].label);
            }
            // idempotence
            prop_assert_eq!(clean_segment_trajectories(&ds, 7).unwrap(), c);
        }
    }
}
