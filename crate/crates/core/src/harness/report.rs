use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::results::{ResultTable, Setting};
use super::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let half = if n > 1 && std > 0.0 {
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive dof");
            t.inverse_cdf(0.975) * std / (n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { n, mean, std, ci_low: mean - half, ci_high: mean + half })
    }

    /// One-sided one-sample t-test p-value for `mean > mu`.
    pub fn p_greater(&self, mu: f64) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        if self.std == 0.0 {
            return Some(if self.mean > mu { 0.0 } else { 1.0 });
        }
        let t = (self.mean - mu) / (self.std / (self.n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (self.n - 1) as f64).expect("positive dof");
        Some(1.0 - dist.cdf(t))
    }
}

/// Statistics of one (sensor, model, setting, λ) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sensor: String,
    pub model: String,
    pub setting: Setting,
    pub lambda: f64,
    pub n_records: usize,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    pub accuracy: MetricSummary,
    /// Over records with a defined AUC only.
    pub auc: Option<MetricSummary>,
    /// Records without an AUC (single-class evaluation sets).
    pub auc_excluded: usize,
    /// One-sided t-test of AUC against 0.5.
    pub auc_p_value: Option<f64>,
    pub flip_fraction_mean: f64,
    pub flagged: usize,
}

/// Blind-evaluation bias at one error level: AUC on flipped labels minus
/// AUC on true labels, both for the flipped-label model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub sensor: String,
    pub model: String,
    pub lambda: f64,
    pub n: usize,
    pub signed_bias: f64,
    pub abs_bias: f64,
    /// Mean over draws of the per-draw absolute gap.
    pub mean_abs_draw_bias: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipPoint {
    pub lambda: f64,
    pub flip_fraction: MetricSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub cells: Vec<CellSummary>,
    pub bias: Vec<BiasPoint>,
    pub flip_fraction: Vec<FlipPoint>,
}

type CellKey = (String, String, Setting, u64);

pub fn aggregate_report(table: &ResultTable) -> Result<Summary, HarnessError> {
    if table.is_empty() {
        return Err(HarnessError::EmptyTable);
    }
    // λ keyed by bit pattern; sweep values are exact multiples of the step
    let mut groups: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.records.iter().enumerate() {
        groups.entry((r.sensor.clone(), r.model.clone(), r.setting, r.lambda.to_bits())).or_default().push(i);
    }
    let mut cells: Vec<CellSummary> = groups
        .iter()
        .map(|((sensor, model, setting, lbits), idx)| {
            let rs: Vec<_> = idx.iter().map(|&i| &table.records[i]).collect();
            let col = |f: &dyn Fn(&super::EvalRecord) -> f64| {
                MetricSummary::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("non-empty cell")
            };
            let aucs: Vec<f64> = rs.iter().filter_map(|r| r.auc).collect();
            let auc = MetricSummary::of(&aucs);
            CellSummary {
                sensor: sensor.clone(),
                model: model.clone(),
                setting: *setting,
                lambda: f64::from_bits(*lbits),
                n_records: rs.len(),
                precision: col(&|r| r.precision),
                recall: col(&|r| r.recall),
                f1: col(&|r| r.f1),
                accuracy: col(&|r| r.accuracy),
                auc_p_value: auc.as_ref().and_then(|a| a.p_greater(0.5)),
                auc,
                auc_excluded: rs.len() - aucs.len(),
                flip_fraction_mean: rs.iter().map(|r| r.flip_fraction).sum::<f64>() / rs.len() as f64,
                flagged: rs.iter().filter(|r| !r.flags.is_empty()).count(),
            }
        })
        .collect();
    cells.sort_by(|a, b| {
        (&a.sensor, &a.model, a.setting)
            .cmp(&(&b.sensor, &b.model, b.setting))
            .then(a.lambda.total_cmp(&b.lambda))
    });

    let mut pairs: BTreeMap<(String, String, u64), Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_draw: BTreeMap<(String, String, u64, usize), (Option<f64>, Option<f64>)> = BTreeMap::new();
    for r in &table.records {
        let key = (r.sensor.clone(), r.model.clone(), r.lambda.to_bits(), r.draw);
        match r.setting {
            Setting::FlipFlip => by_draw.entry(key).or_default().0 = r.auc,
            Setting::FlipTrue => by_draw.entry(key).or_default().1 = r.auc,
            _ => {}
        }
    }
    for ((sensor, model, lbits, _), (ff, ft)) in by_draw {
        if let (Some(ff), Some(ft)) = (ff, ft) {
            pairs.entry((sensor, model, lbits)).or_default().push((ff, ft));
        }
    }
    let mut bias: Vec<BiasPoint> = pairs
        .into_iter()
        .map(|((sensor, model, lbits), v)| {
            let n = v.len() as f64;
            let signed = v.iter().map(|(ff, ft)| ff - ft).sum::<f64>() / n;
            BiasPoint {
                sensor,
                model,
                lambda: f64::from_bits(lbits),
                n: v.len(),
                signed_bias: signed,
                abs_bias: signed.abs(),
                mean_abs_draw_bias: v.iter().map(|(ff, ft)| (ff - ft).abs()).sum::<f64>() / n,
            }
        })
        .collect();
    bias.sort_by(|a, b| (&a.sensor, &a.model).cmp(&(&b.sensor, &b.model)).then(a.lambda.total_cmp(&b.lambda)));

    // one flip fraction per (λ, draw): every trained cell shares it
    let mut flips: BTreeMap<u64, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in table.records.iter().filter(|r| r.setting == Setting::FlipTrue) {
        flips.entry(r.lambda.to_bits()).or_default().entry(r.draw).or_insert(r.flip_fraction);
    }
    let mut flip_fraction: Vec<FlipPoint> = flips
        .into_iter()
        .map(|(lbits, per_draw)| FlipPoint {
            lambda: f64::from_bits(lbits),
            flip_fraction: MetricSummary::of(&per_draw.into_values().collect::<Vec<_>>()).expect("non-empty"),
        })
        .collect();
    flip_fraction.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));

    Ok(Summary { cells, bias, flip_fraction })
}

impl Summary {
    pub fn cell(&self, sensor: &str, model: &str, setting: Setting, lambda: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.sensor == sensor && c.model == model && c.setting == setting && c.lambda == lambda)
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// AUC-versus-λ curves, one row per cell, plus the bias curves under
    /// setting `bias`.
    pub fn write_curves_csv<W: Write>(&self, writer: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "sensor", "model", "setting", "lambda", "n", "auc_mean", "auc_std", "auc_ci_low", "auc_ci_high",
            "auc_p_value", "flip_fraction_mean",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for c in &self.cells {
            let a = c.auc.as_ref();
            w.write_record([
                c.sensor.clone(),
                c.model.clone(),
                c.setting.to_string(),
                c.lambda.to_string(),
                a.map_or(0, |a| a.n).to_string(),
                opt(a.map(|a| a.mean)),
                opt(a.map(|a| a.std)),
                opt(a.map(|a| a.ci_low)),
                opt(a.map(|a| a.ci_high)),
                opt(c.auc_p_value),
                c.flip_fraction_mean.to_string(),
            ])?;
        }
        for b in &self.bias {
            w.write_record([
                b.sensor.clone(),
                b.model.clone(),
                "bias".into(),
                b.lambda.to_string(),
                b.n.to_string(),
                b.signed_bias.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
