//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! The default-scenario sweep (configs/acceptance.toml) runs once and feeds
//! criteria 2 and 5 to 8. Its clean baseline and bias curves are frozen in
//! tests/golden/default_summary.json; set `BIBO_UPDATE_GOLDEN=1` to rewrite
//! that file from the current run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use bibo_core::dataset::{segment_labels, Dataset, TripSegment};
use bibo_core::features::build_feature_table;
use bibo_core::features::SensorFamily;
use bibo_core::harness::{aggregate_report, draw_splits, run_monte_carlo, RunConfig, RunOutput, Setting, Summary};
use bibo_core::imputation::{imputation_trick, in_rssi_domain, EwmaParams, Fingerprint};
use bibo_core::label::Label;
use bibo_core::metrics;
use bibo_core::models::{majority_baseline, random_baseline, Matrix, Network, HIDDEN_GRID};
use bibo_core::noise::{apply_flips, draw_poisson, select_segments, FlipAssumption};
use bibo_core::scenario::{simulate_scenario, ScenarioConfig};
use bibo_core::seed;

type Outcome = Result<String, String>;

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_summary.json")
}

fn acceptance_config() -> RunConfig {
    let text = std::fs::read_to_string(workspace().join("configs/acceptance.toml")).expect("acceptance config");
    let value: toml::Table = toml::from_str(&text).expect("valid toml");
    value["run"].clone().try_into().expect("run table")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_labels<R: Rng>(n: usize, rng: &mut R) -> Vec<Label> {
    loop {
        let y: Vec<Label> = (0..n).map(|_| Label::from_bool(rng.random_bool(0.4))).collect();
        if y.iter().any(|l| l.is_positive()) && y.iter().any(|l| !l.is_positive()) {
            return y;
        }
    }
}

// ---------------------------------------------------------------- oracles

fn oracle_confusion(labels: &[Label], preds: &[Label]) -> [u64; 4] {
    let mut c = [0u64; 4]; // tp tn fp fn
    for (l, p) in labels.iter().zip(preds) {
        let k = match (*l == Label::Bi, *p == Label::Bi) {
            (true, true) => 0,
            (false, false) => 1,
            (false, true) => 2,
            (true, false) => 3,
        };
        c[k] += 1;
    }
    c
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn oracle_pairwise_auc(labels: &[Label], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] == Label::Bi && labels[j] == Label::Bo {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

// --------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng_from(101);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let labels = random_labels(50, &mut rng);
        // coarse scores on some instances so ties occur
        let scores: Vec<f64> = if k % 2 == 0 {
            (0..50).map(|_| rng.random::<f64>()).collect()
        } else {
            (0..50).map(|_| f64::from(rng.random_range(0..8u8)) / 7.0).collect()
        };
        let preds: Vec<Label> = scores.iter().map(|&s| Label::from_bool(s > 0.5)).collect();
        let [tp, tn, fp, fn_] = oracle_confusion(&labels, &preds);
        let ev = metrics::evaluate(&labels, &scores).map_err(|e| e.to_string())?;
        let p = ratio(tp, tp + fp);
        let r = ratio(tp, tp + fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let a = ratio(tp + tn, 50);
        let cm = ev.confusion;
        if (cm.tp, cm.tn, cm.fp, cm.fn_) != (tp, tn, fp, fn_)
            || (ev.rates.precision, ev.rates.recall, ev.rates.f1, ev.rates.accuracy) != (p, r, f1, a)
        {
            return Err(format!("instance {k}: threshold metrics differ from brute force"));
        }
        let oracle = oracle_pairwise_auc(&labels, &scores);
        let got = ev.auc.ok_or("auc undefined")?;
        let trap = metrics::auc_trapezoid(&labels, &scores).map_err(|e| e.to_string())?;
        worst = worst.max((got - oracle).abs()).max((trap - oracle).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("1000 instances, max AUC gap {worst:.1e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn criterion_2(run: &RunOutput, summary: &Summary) -> Outcome {
    let mut rng = seed::rng_from(202);
    let labels = random_labels(200, &mut rng);
    let columns = vec!["x0".to_string()];
    let x = Matrix::new(columns.clone(), vec![0.0; 200]).map_err(|e| e.to_string())?;
    let mean = (0..100)
        .map(|d| {
            let s = random_baseline(&columns, seed::derive(202, &[d])).predict_proba(&x).unwrap();
            metrics::auc(&labels, &s).unwrap()
        })
        .sum::<f64>()
        / 100.0;
    let constant = majority_baseline(&x, &labels).map_err(|e| e.to_string())?.predict_proba(&x).unwrap();
    let constant_auc = metrics::auc(&labels, &constant).map_err(|e| e.to_string())?;
    let cells: Vec<f64> = summary
        .cells
        .iter()
        .filter(|c| c.setting == Setting::RandomTrue)
        .map(|c| c.auc.as_ref().map_or(f64::NAN, |a| a.mean))
        .collect();
    let cells_ok = !cells.is_empty() && cells.iter().all(|m| (0.45..=0.55).contains(m));
    let draws = run.meta.config.draws;
    check(
        (0.45..=0.55).contains(&mean) && constant_auc == 0.5 && cells_ok,
        format!(
            "random mean AUC {mean:.4}, constant AUC {constant_auc}, harness random cells ({draws} draws) in [{:.4}, {:.4}]",
            cells.iter().copied().fold(f64::INFINITY, f64::min),
            cells.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng_from(303);
    let params = EwmaParams::default();
    let c = params.constant_dbm;
    for k in 0..10_000 {
        let len = rng.random_range(1..=12);
        let values: Vec<Option<f64>> = (0..len)
            .map(|_| rng.random_bool(0.6).then(|| rng.random_range(-99.999..-50.001)))
            .collect();
        let fp = Fingerprint::new(values.clone()).map_err(|e| e.to_string())?;
        let aug = imputation_trick(&fp, &params).map_err(|e| e.to_string())?;
        let m = values.iter().filter(|v| v.is_some()).count();
        let n = len - m;
        let flat = aug.flatten();
        let ok = flat.len() == 2 * (m + n)
            && aug.mask.iter().zip(&aug.values).all(|(&mask, &v)| match mask {
                0 => v == c,
                1 => in_rssi_domain(v) && v != c,
                _ => false,
            });
        if !ok {
            return Err(format!("fingerprint {k} violates the contract"));
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(1), format!("10000 fingerprints, {:.3}s", elapsed.as_secs_f64()))
}

fn segments_of(labels: &[Label]) -> Vec<TripSegment> {
    segment_labels(labels)
        .into_iter()
        .enumerate()
        .map(|(k, (label, span))| TripSegment {
            user: 0,
            segment_id: k as u32,
            label,
            start_s: span.start as f64,
            end_s: span.end as f64,
            span,
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = seed::rng_from(404);
    let mut means = Vec::new();
    for lambda in [0.7, 1.0, 3.0] {
        let n = 100_000;
        let mean = (0..n).map(|_| draw_poisson(lambda, &mut rng).unwrap() as f64).sum::<f64>() / n as f64;
        if (mean / lambda - 1.0).abs() > 0.03 {
            return Err(format!("poisson mean {mean} for lambda {lambda}"));
        }
        means.push(format!("{lambda}:{mean:.4}"));
    }
    for k in 0..1000 {
        // random alternating segmentation
        let n_seg = rng.random_range(1..=10);
        let mut labels = Vec::new();
        let mut l = Label::from_bool(rng.random_bool(0.5));
        for _ in 0..n_seg {
            labels.extend(std::iter::repeat_n(l, rng.random_range(1..=20)));
            l = l.flipped();
        }
        let segs = segments_of(&labels);
        let errors = rng.random_range(0..=12);
        let picked = select_segments(segs.len(), errors, &mut rng);
        let full = apply_flips(&segs, &labels, &picked, FlipAssumption::FullFlip).unwrap();
        let back = apply_flips(&segs, &full, &picked, FlipAssumption::FullFlip).unwrap();
        if back != labels {
            return Err(format!("vector {k}: full flip is not an involution"));
        }
        let one = apply_flips(&segs, &labels, &picked, FlipAssumption::OneFlip).unwrap();
        for &s in &picked {
            let span = segs[s].span.clone();
            let neighbour = if s > 0 {
                one[segs[s - 1].span.end - 1]
            } else if segs.len() > 1 {
                one[segs[1].span.start]
            } else {
                labels[0]
            };
            if one[span].iter().any(|&x| x != neighbour) {
                return Err(format!("vector {k}: one flip segment {s} disagrees with its neighbour"));
            }
        }
        if picked.len() > segs.len() {
            return Err(format!("vector {k}: more segments picked than exist"));
        }
    }
    Ok(format!("poisson means {}, 1000 segmented vectors", means.join(" ")))
}

fn criterion_5(dataset: &Dataset, run: &RunOutput) -> Outcome {
    let users = bibo_core::dataset::list_unique_users(dataset);
    let cfg = RunConfig { draws: 1000, ..run.meta.config.clone() };
    let splits = draw_splits(&cfg, &users).map_err(|e| e.to_string())?;
    let overlaps: usize = splits.iter().map(|s| s.train.intersection(&s.validation).count()).sum();
    let covered = splits.iter().all(|s| s.train.len() + s.validation.len() == users.len());
    // the sweep used exactly these partitions, and every row belongs to one side
    let used: Vec<u64> = run.meta.lineage.iter().map(|l| l.split_seed).collect();
    let lineage_ok = used.iter().all(|s| splits.iter().any(|x| x.seed == *s));
    let table = build_feature_table(dataset, SensorFamily::Ble, &EwmaParams::default()).map_err(|e| e.to_string())?;
    let row_overlap = splits.iter().any(|s| {
        let train_rows: Vec<u32> = table.rows.iter().filter(|r| s.train.contains(&r.user)).map(|r| r.user).collect();
        train_rows.iter().any(|u| s.validation.contains(u))
    });
    check(
        overlaps == 0 && covered && lineage_ok && !row_overlap,
        format!("1000 draws, {overlaps} user overlaps, lineage consistent: {lineage_ok}"),
    )
}

fn criterion_6(summary: &Summary, elapsed: Duration) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for sensor in ["BLE", "GPS"] {
        let cell = summary.cell(sensor, "RF", Setting::TrueTrue, 0.0).ok_or(format!("no {sensor} cell"))?;
        let auc = cell.auc.as_ref().ok_or("no auc")?;
        let p = cell.auc_p_value.ok_or("no p-value")?;
        ok &= auc.mean > 0.5 && p < 0.01;
        parts.push(format!("{sensor} mean AUC {:.4} (n={}, p={p:.1e})", auc.mean, auc.n));
    }
    let os = summary.cell("OS", "OS", Setting::OsTrue, 0.0).ok_or("no OS cell")?;
    let os_auc = os.auc.as_ref().ok_or("no OS auc")?.mean;
    ok &= (os_auc - 0.5).abs() <= 0.05;
    ok &= elapsed < Duration::from_secs(30 * 60);
    parts.push(format!("OS AUC {os_auc:.4}, sweep {:.0}s", elapsed.as_secs_f64()));
    check(ok, parts.join("; "))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Golden {
    master_seed: u64,
    draws: usize,
    /// Mean AUC of true-trained, true-evaluated RF per sensor.
    clean_auc: BTreeMap<String, f64>,
    lambdas: Vec<f64>,
    flip_fraction: Vec<f64>,
    /// |mean AUC(flip/flip) - mean AUC(flip/true)| per sensor and level.
    abs_bias: BTreeMap<String, Vec<f64>>,
}

fn golden_from(run: &RunOutput, summary: &Summary) -> Golden {
    let sensors = ["BLE", "GPS"];
    Golden {
        master_seed: run.meta.master_seed,
        draws: run.meta.config.draws,
        clean_auc: sensors
            .iter()
            .map(|s| {
                let c = summary.cell(s, "RF", Setting::TrueTrue, 0.0).unwrap();
                (s.to_string(), c.auc.as_ref().unwrap().mean)
            })
            .collect(),
        lambdas: run.meta.lambdas.clone(),
        flip_fraction: summary.flip_fraction.iter().map(|f| f.flip_fraction.mean).collect(),
        abs_bias: sensors
            .iter()
            .map(|s| {
                let curve = summary.bias.iter().filter(|b| b.sensor == *s && b.model == "RF").map(|b| b.abs_bias);
                (s.to_string(), curve.collect())
            })
            .collect(),
    }
}

fn load_golden(current: &Golden) -> Result<Golden, String> {
    let path = golden_path();
    if std::env::var_os("BIBO_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, serde_json::to_string_pretty(current).unwrap() + "\n").map_err(|e| e.to_string())?;
        println!("  (golden summary rewritten at {})", path.display());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn criterion_7(summary: &Summary, golden: &Golden, current: &Golden) -> Outcome {
    let baseline = golden.clean_auc["BLE"];
    if !close(baseline, current.clean_auc["BLE"]) {
        return Err(format!("clean baseline {} drifted from golden {baseline}", current.clean_auc["BLE"]));
    }
    let mut worst: f64 = 0.0;
    let mut levels = 0;
    for f in &summary.flip_fraction {
        if f.lambda == 0.0 || f.flip_fraction.mean > 0.30 {
            continue;
        }
        let cell = summary.cell("BLE", "RF", Setting::FlipTrue, f.lambda).ok_or("missing cell")?;
        let auc = cell.auc.as_ref().ok_or("no auc")?.mean;
        worst = worst.max((auc - baseline).abs());
        levels += 1;
    }
    check(
        levels > 0 && worst <= 0.10,
        format!("clean BLE AUC {baseline:.4}; {levels} levels with flip fraction <= 30%, max drop {worst:.4}"),
    )
}

fn criterion_8(summary: &Summary) -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for sensor in ["BLE", "GPS"] {
        let curve: Vec<_> = summary.bias.iter().filter(|b| b.sensor == sensor && b.model == "RF").collect();
        let (first, last) = (curve.first().ok_or("no bias")?, curve.last().ok_or("no bias")?);
        ok &= first.lambda == 0.0 && first.abs_bias == 0.0 && last.abs_bias > 0.0;
        parts.push(format!("{sensor} bias {} at 0, {:.4} at {}", first.abs_bias, last.abs_bias, last.lambda));
    }
    check(ok, parts.join("; "))
}

/// ReLU on/off pattern of every hidden unit, from an independent forward pass.
fn relu_pattern(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<bool> {
    let n = x.len() / sizes[0];
    let mut pattern = Vec::new();
    let mut acts = x.to_vec();
    let mut offset = 0;
    for (l, w) in sizes.windows(2).enumerate() {
        let (d_in, d_out) = (w[0], w[1]);
        let (weights, bias) = params[offset..offset + (d_in + 1) * d_out].split_at(d_in * d_out);
        offset += (d_in + 1) * d_out;
        let mut next = vec![0.0; n * d_out];
        for r in 0..n {
            for o in 0..d_out {
                let z = bias[o] + (0..d_in).map(|i| weights[o * d_in + i] * acts[r * d_in + i]).sum::<f64>();
                next[r * d_out + o] = z.max(0.0);
                if l + 2 < sizes.len() {
                    pattern.push(z > 0.0);
                }
            }
        }
        acts = next;
    }
    pattern
}

fn criterion_9() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for hidden in HIDDEN_GRID {
        for point in 0..10u64 {
            let mut rng = seed::rng(909, &[hidden.len() as u64, point]);
            let d = 6;
            let mut net = Network::init(d, hidden, &mut rng);
            // move biases off zero so units are not pinned at the kink
            let mut params = net.parameters().to_vec();
            for p in &mut params {
                *p += rng.random_range(-0.05..0.05);
            }
            net.set_parameters(&params).unwrap();
            let n = 8;
            let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
            let analytic = net.gradient(&x, &y);
            let sizes = net.sizes().to_vec();
            let base = relu_pattern(&sizes, &params, &x);
            let mut probe = net.clone();
            for k in 0..params.len() {
                // central differences are only an oracle where the loss is smooth
                let shifted = |h: f64| {
                    let mut p = params.clone();
                    p[k] += h;
                    p
                };
                let step = [1e-5, 1e-6, 1e-7].into_iter().find(|&h| {
                    relu_pattern(&sizes, &shifted(h), &x) == base && relu_pattern(&sizes, &shifted(-h), &x) == base
                });
                let Some(h) = step else {
                    skipped += 1;
                    continue;
                };
                probe.set_parameters(&shifted(h)).unwrap();
                let up = probe.loss(&x, &y);
                probe.set_parameters(&shifted(-h)).unwrap();
                let down = probe.loss(&x, &y);
                let numeric = (up - down) / (2.0 * h);
                let denom = analytic[k].abs().max(numeric.abs()).max(1e-7);
                worst = worst.max((analytic[k] - numeric).abs() / denom);
            }
        }
    }
    check(
        worst < 1e-4,
        format!("3 architectures x 10 points, max relative error {worst:.2e}, {skipped} coordinates on a ReLU kink"),
    )
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    let base = std::fs::read_to_string(workspace().join("configs/acceptance.toml")).map_err(|e| e.to_string())?;
    std::fs::write(&config, base.replace("draws = 100", "draws = 3")).map_err(|e| e.to_string())?;
    let bin = env!("CARGO_BIN_EXE_bibo");
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin).arg("--config").arg(&config).args(args).output().map_err(|e| e.to_string())?;
        if out.status.success() {
            Ok(())
        } else {
            Err(String::from_utf8_lossy(&out.stderr).into_owned())
        }
    };
    let data = dir.path().join("data.csv");
    run(&["simulate", "--out", data.to_str().unwrap()])?;
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("run{k}"));
        run(&["run-mc", "--dataset", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])?;
        outputs.push(std::fs::read(out.join("results.csv")).map_err(|e| e.to_string())?);
    }
    check(
        !outputs[0].is_empty() && outputs[0] == outputs[1],
        format!("two run-mc executions, results.csv {} bytes each, identical: {}", outputs[0].len(), outputs[0] == outputs[1]),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "metric oracle equivalence", criterion_1()));
    results.push((3, "imputation-trick contract", criterion_3()));
    results.push((4, "noise-model statistics", criterion_4()));
    results.push((9, "MLP gradient check", criterion_9()));

    let scenario = ScenarioConfig::default();
    let dataset = Dataset::from_users(simulate_scenario(&scenario).expect("default scenario")).expect("dataset");
    let config = acceptance_config();
    let start = Instant::now();
    let run = run_monte_carlo(&config, &dataset).expect("default sweep");
    let elapsed = start.elapsed();
    let summary = aggregate_report(&run.table).expect("summary");
    let current = golden_from(&run, &summary);

    results.push((2, "baseline calibration", criterion_2(&run, &summary)));
    results.push((5, "OOS integrity", criterion_5(&dataset, &run)));
    results.push((6, "signal beats random", criterion_6(&summary, elapsed)));
    match load_golden(&current) {
        Ok(golden) => {
            results.push((7, "robustness trend", criterion_7(&summary, &golden, &current)));
            let gps = &current.abs_bias["GPS"];
            let frozen = golden.abs_bias["GPS"].iter().zip(gps).all(|(a, b)| close(*a, *b));
            let trend = gps.windows(2).all(|w| w[1] >= w[0]);
            println!(
                "note: RF/GPS bias magnitude over lambda {:?} (matches golden: {frozen}, non-decreasing: {trend})",
                gps.iter().map(|b| (b * 1e4).round() / 1e4).collect::<Vec<_>>()
            );
        }
        Err(e) => results.push((7, "robustness trend", Err(format!("golden summary unavailable: {e}")))),
    }
    results.push((8, "blind-evaluation bias", criterion_8(&summary)));
    results.push((10, "determinism", criterion_10()));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
