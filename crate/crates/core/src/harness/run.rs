use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::results::{EvalRecord, ResultTable, Setting};
use super::{split_oos_min, HarnessError, RunConfig};
use crate::dataset::{clean_all, CleanedUser, Dataset};
use crate::features::{build_feature_table_from, SensorFamily};
use crate::label::{Activity, Label};
use crate::metrics;
use crate::models::{grid_search, random_baseline, Matrix, ModelConfig, ModelKind, SINGLE_CLASS_FLAG};
use crate::noise::{flip_labels, NoiseSpec};
use crate::seed::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelMode {
    #[serde(rename = "trueGT")]
    True,
    #[serde(rename = "flipGT")]
    Flipped,
}

/// Hyperparameters chosen by grid search and used for the whole run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLogEntry {
    pub sensor: SensorFamily,
    pub model: ModelKind,
    pub mode: LabelMode,
    /// Error level whose first draw supplied the search labels.
    pub lambda: f64,
    pub draw: usize,
    pub best: ModelConfig,
    pub best_index: usize,
    pub mean_auc: Option<f64>,
    pub grid_size: usize,
}

/// Seeds behind one record, enough to replay it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub split_seed: u64,
    pub flip_seed: u64,
    pub model_seed: u64,
    /// Index into [`RunMeta::grid`] of the hyperparameters used.
    pub hyperparameters: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub master_seed: u64,
    pub config: RunConfig,
    pub lambdas: Vec<f64>,
    pub grid: Vec<GridLogEntry>,
    /// Parallel to the result records.
    pub lineage: Vec<Lineage>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub table: ResultTable,
    pub meta: RunMeta,
}

fn sensor_code(s: SensorFamily) -> u64 {
    match s {
        SensorFamily::Ble => 0,
        SensorFamily::Gps => 1,
    }
}

fn model_code(m: ModelKind) -> u64 {
    match m {
        ModelKind::Rf => 0,
        ModelKind::Mlp => 1,
        ModelKind::Random => 2,
        ModelKind::Majority => 3,
    }
}

fn mode_code(m: LabelMode) -> u64 {
    match m {
        LabelMode::True => 0,
        LabelMode::Flipped => 1,
    }
}

/// One draw's user partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSplit {
    pub draw: usize,
    pub seed: u64,
    pub train: BTreeSet<u32>,
    pub validation: BTreeSet<u32>,
}

/// The training/validation partition of every draw. Splits depend on the
/// master seed and draw index only.
pub fn draw_splits(config: &RunConfig, users: &[u32]) -> Result<Vec<UserSplit>, HarnessError> {
    (0..config.draws)
        .map(|c| {
            let seed = seed::derive(config.seed, &[stream::SPLIT, c as u64]);
            let (train, validation) =
                split_oos_min(users, config.validation_fraction, config.min_validation_users, &mut seed::rng_from(seed))?;
            if train.is_empty() {
                return Err(HarnessError::TooFewUsers(users.len()));
            }
            Ok(UserSplit { draw: c, seed, train: train.into_iter().collect(), validation: validation.into_iter().collect() })
        })
        .collect()
}

/// Flipped labels of every dataset row for one (λ, draw).
struct Flip {
    seed: u64,
    labels: Vec<Label>,
}

fn flip_dataset(
    dataset: &Dataset,
    cleaned: &[CleanedUser],
    spec: &NoiseSpec,
) -> Result<Vec<Label>, HarnessError> {
    let mut labels: Vec<Label> = dataset.rows().iter().map(|p| p.bibo_label).collect();
    for u in cleaned {
        let tl = u.labels(dataset);
        let mut rng = seed::rng(spec.seed, &[u64::from(u.user)]);
        let (fl, report) = flip_labels(&u.segments, &tl, spec, &mut rng)?;
        if let Some(w) = report.warning {
            log::warn!("{w}");
        }
        for (&row, l) in u.rows.iter().zip(fl) {
            labels[row] = l;
        }
    }
    Ok(labels)
}

fn evaluate(labels: &[Label], scores: &[f64], mut flags: Vec<String>) -> Result<(metrics::Rates, Option<f64>, Vec<String>), HarnessError> {
    let ev = metrics::evaluate(labels, scores)?;
    if ev.auc.is_none() {
        flags.push("single_class_eval".into());
    }
    flags.extend(ev.rates.degenerate.iter().map(|d| format!("degenerate_{d}")));
    Ok((ev.rates, ev.auc, flags))
}

/// AUC of the OS activity stream (automotive = 1) against true labels on
/// the rows of `users`; `None` for a single-class set.
pub fn os_activity_auc(dataset: &Dataset, users: &[u32]) -> Option<f64> {
    let rows: Vec<_> = users.iter().filter_map(|&u| dataset.user_rows(u)).flatten().map(|&i| &dataset.rows()[i]).collect();
    let labels: Vec<Label> = rows.iter().map(|p| p.bibo_label).collect();
    let scores: Vec<f64> = rows.iter().map(|p| f64::from(u8::from(p.os_activity == Activity::Automotive))).collect();
    metrics::auc(&labels, &scores).ok()
}

/// Runs the full sweep on `dataset`.
///
/// Splits depend on the draw only and true-label models on the draw,
/// sensor and model, so every error level is compared on the same
/// partitions and at λ = 0 the flipped-label model is the true-label one.
pub fn run_monte_carlo(config: &RunConfig, dataset: &Dataset) -> Result<RunOutput, HarnessError> {
    config.validate()?;
    let master = config.seed;
    let cleaned = clean_all(dataset);
    let users: Vec<u32> = cleaned.iter().filter(|u| !u.rows.is_empty()).map(|u| u.user).collect();
    let lambdas = config.sweep.values();
    let first_positive = lambdas.iter().position(|&l| l > 0.0);

    let splits = draw_splits(config, &users)?;

    let flips: Vec<Vec<Flip>> = lambdas
        .iter()
        .map(|&lambda| {
            (0..config.draws)
                .into_par_iter()
                .map(|c| {
                    let seed = seed::derive(master, &[stream::FLIP, lambda.to_bits(), c as u64]);
                    let spec = NoiseSpec { assumption: config.assumption, lambda, seed };
                    Ok(Flip { seed, labels: flip_dataset(dataset, &cleaned, &spec)? })
                })
                .collect::<Result<Vec<_>, HarnessError>>()
        })
        .collect::<Result<_, _>>()?;

    // realized flip share over each draw's training rows
    let flip_fraction: Vec<Vec<f64>> = flips
        .iter()
        .map(|per_draw| {
            per_draw
                .iter()
                .zip(&splits)
                .map(|(f, s)| {
                    let rows: Vec<usize> =
                        cleaned.iter().filter(|u| s.train.contains(&u.user)).flat_map(|u| u.rows.iter().copied()).collect();
                    let changed = rows.iter().filter(|&&r| f.labels[r] != dataset.rows()[r].bibo_label).count();
                    if rows.is_empty() {
                        0.0
                    } else {
                        changed as f64 / rows.len() as f64
                    }
                })
                .collect()
        })
        .collect();

    let mut records = Vec::new();
    let mut lineage = Vec::new();
    let mut grid_log = Vec::new();

    for &sensor in &config.sensors {
        let table = build_feature_table_from(dataset, &cleaned, sensor, &config.ewma)?;
        let x_all = table.matrix();
        let tl_all = table.labels();
        let part: Vec<(Vec<usize>, Vec<usize>)> = splits
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let train: Vec<usize> = (0..table.len()).filter(|&i| s.train.contains(&table.rows[i].user)).collect();
                let val: Vec<usize> = (0..table.len()).filter(|&i| s.validation.contains(&table.rows[i].user)).collect();
                if let Some(u) = train.iter().map(|&i| table.rows[i].user).find(|u| s.validation.contains(u)) {
                    return Err(HarnessError::OosViolation { draw: c, user: u });
                }
                Ok((train, val))
            })
            .collect::<Result<_, _>>()?;
        let fl_at = |li: usize, c: usize, idx: &[usize]| -> Vec<Label> {
            idx.iter().map(|&i| flips[li][c].labels[table.rows[i].row]).collect()
        };
        let pick = |idx: &[usize], labels: &[Label]| -> Vec<Label> { idx.iter().map(|&i| labels[i]).collect() };

        for &model in &config.models {
            let grid = match model {
                ModelKind::Rf => config.rf_grid.configs(),
                _ => config.mlp_grid.configs(),
            };
            let search = |mode: LabelMode, labels: Vec<Label>| -> Result<GridLogEntry, HarnessError> {
                let codes = [sensor_code(sensor), model_code(model), mode_code(mode)];
                let grid_seed = seed::derive(master, &[stream::GRID, codes[0], codes[1], codes[2]]);
                let fold_seed = seed::derive(master, &[stream::CV_FOLDS, codes[0], codes[1], codes[2]]);
                let seeded: Vec<ModelConfig> = grid.iter().map(|g| g.with_seed(grid_seed)).collect();
                let train = &part[0].0;
                let groups: Vec<u32> = train.iter().map(|&i| table.rows[i].user).collect();
                let result = grid_search(&x_all.select(train), &labels, &groups, &seeded, config.cv_folds, fold_seed)?;
                let lambda = match mode {
                    LabelMode::True => 0.0,
                    LabelMode::Flipped => first_positive.map_or(0.0, |li| lambdas[li]),
                };
                Ok(GridLogEntry {
                    sensor,
                    model,
                    mode,
                    lambda,
                    draw: 0,
                    best: grid[result.best_index].clone(),
                    best_index: result.best_index,
                    mean_auc: result.scores[result.best_index].mean_auc,
                    grid_size: grid.len(),
                })
            };
            let tl_entry = search(LabelMode::True, pick(&part[0].0, &tl_all))?;
            let fl_entry = match first_positive {
                Some(li) => search(LabelMode::Flipped, fl_at(li, 0, &part[0].0))?,
                None => GridLogEntry { mode: LabelMode::Flipped, ..tl_entry.clone() },
            };
            log::info!(
                "{sensor}/{model}: frozen hyperparameters trueGT #{} flipGT #{}",
                tl_entry.best_index,
                fl_entry.best_index
            );
            let tl_idx = grid_log.len();
            let fl_idx = tl_idx + 1;
            let tl_cfg = tl_entry.best.clone();
            let fl_cfg = fl_entry.best.clone();
            grid_log.push(tl_entry);
            grid_log.push(fl_entry);

            type Cell = (usize, EvalRecord, Lineage);
            let per_draw: Vec<Vec<Cell>> = (0..config.draws)
                .into_par_iter()
                .map(|c| -> Result<Vec<Cell>, HarnessError> {
                    let (train, val) = &part[c];
                    let xtr: Matrix = x_all.select(train);
                    let xva: Matrix = x_all.select(val);
                    let ytr_tl = pick(train, &tl_all);
                    let yva_tl = pick(val, &tl_all);
                    let model_seed =
                        seed::derive(master, &[stream::MODEL, sensor_code(sensor), model_code(model), c as u64]);
                    let tl_model = tl_cfg.with_seed(model_seed).train(&xtr, &ytr_tl)?;
                    let tl_scores = tl_model.predict_proba(&xva)?;
                    let tl_flags: Vec<String> =
                        tl_model.is_flagged(SINGLE_CLASS_FLAG).then(|| SINGLE_CLASS_FLAG.to_string()).into_iter().collect();

                    let mut out = Vec::new();
                    for (li, &lambda) in lambdas.iter().enumerate() {
                        let yva_fl = fl_at(li, c, val);
                        let (fl_scores, fl_flags, fl_hyper) = if lambda == 0.0 {
                            (tl_scores.clone(), tl_flags.clone(), tl_idx)
                        } else {
                            let ytr_fl = fl_at(li, c, train);
                            let m = fl_cfg.with_seed(model_seed).train(&xtr, &ytr_fl)?;
                            let flags =
                                m.is_flagged(SINGLE_CLASS_FLAG).then(|| SINGLE_CLASS_FLAG.to_string()).into_iter().collect();
                            (m.predict_proba(&xva)?, flags, fl_idx)
                        };
                        let random_seed = seed::derive(
                            master,
                            &[stream::RANDOM_BASELINE, sensor_code(sensor), model_code(model), lambda.to_bits(), c as u64],
                        );
                        let random_scores = random_baseline(xva.columns(), random_seed).predict_proba(&xva)?;

                        let mut cells: Vec<(Setting, &[f64], &[Label], &Vec<String>, u64, Option<usize>)> = vec![
                            (Setting::TrueTrue, &tl_scores, &yva_tl, &tl_flags, model_seed, Some(tl_idx)),
                            (Setting::FlipFlip, &fl_scores, &yva_fl, &fl_flags, model_seed, Some(fl_hyper)),
                            (Setting::FlipTrue, &fl_scores, &yva_tl, &fl_flags, model_seed, Some(fl_hyper)),
                        ];
                        let no_flags = Vec::new();
                        cells.push((Setting::RandomTrue, &random_scores, &yva_tl, &no_flags, random_seed, None));
                        if config.log_extra_variants {
                            cells.push((Setting::TrueFlip, &tl_scores, &yva_fl, &tl_flags, model_seed, Some(tl_idx)));
                        }
                        for (setting, scores, labels, flags, mseed, hyper) in cells {
                            let (rates, auc, flags) = evaluate(labels, scores, flags.clone())?;
                            out.push((
                                li,
                                EvalRecord {
                                    sensor: sensor.to_string(),
                                    model: model.to_string(),
                                    setting,
                                    lambda,
                                    draw: c,
                                    precision: rates.precision,
                                    recall: rates.recall,
                                    f1: rates.f1,
                                    accuracy: rates.accuracy,
                                    auc,
                                    flip_fraction: flip_fraction[li][c],
                                    flags,
                                },
                                Lineage {
                                    split_seed: splits[c].seed,
                                    flip_seed: flips[li][c].seed,
                                    model_seed: mseed,
                                    hyperparameters: hyper,
                                },
                            ));
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<_, _>>()?;

            for li in 0..lambdas.len() {
                for cells in &per_draw {
                    for (l, rec, lin) in cells {
                        if *l == li {
                            records.push(rec.clone());
                            lineage.push(lin.clone());
                        }
                    }
                }
            }
        }
    }

    if config.os_baseline {
        for (c, s) in splits.iter().enumerate() {
            let val: Vec<u32> = s.validation.iter().copied().collect();
            let rows: Vec<usize> = val.iter().filter_map(|&u| dataset.user_rows(u)).flatten().copied().collect();
            let labels: Vec<Label> = rows.iter().map(|&i| dataset.rows()[i].bibo_label).collect();
            let scores: Vec<f64> = rows
                .iter()
                .map(|&i| f64::from(u8::from(dataset.rows()[i].os_activity == Activity::Automotive)))
                .collect();
            let (rates, auc, flags) = evaluate(&labels, &scores, Vec::new())?;
            records.push(EvalRecord {
                sensor: "OS".into(),
                model: "OS".into(),
                setting: Setting::OsTrue,
                lambda: 0.0,
                draw: c,
                precision: rates.precision,
                recall: rates.recall,
                f1: rates.f1,
                accuracy: rates.accuracy,
                auc,
                flip_fraction: 0.0,
                flags,
            });
            lineage.push(Lineage { split_seed: s.seed, flip_seed: 0, model_seed: 0, hyperparameters: None });
        }
    }

    Ok(RunOutput {
        table: ResultTable { records },
        meta: RunMeta { master_seed: master, config: config.clone(), lambdas, grid: grid_log, lineage },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Sweep, RESULT_COLUMNS};
    use crate::models::{Criterion, MaxFeatures, RfGrid};
    use crate::scenario::{simulate_scenario, ScenarioConfig};

    fn small_dataset() -> Dataset {
        let cfg = ScenarioConfig { n_users: 6, ..ScenarioConfig::default() };
        Dataset::from_users(simulate_scenario(&cfg).unwrap()).unwrap()
    }

    fn small_config() -> RunConfig {
        RunConfig {
            sensors: vec![SensorFamily::Gps],
            models: vec![ModelKind::Rf],
            sweep: Sweep { start: 0.5, step: 0.5, max: 0.5, control: false },
            draws: 1,
            cv_folds: 2,
            rf_grid: RfGrid {
                n_estimators: vec![10],
                max_features: vec![MaxFeatures::Sqrt],
                max_depth: vec![3],
                criterion: vec![Criterion::Gini],
                max_bins: 32,
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn one_cell_gives_four_records() {
        let ds = small_dataset();
        let out = run_monte_carlo(&small_config(), &ds).unwrap();
        let settings: Vec<Setting> = out.table.records.iter().map(|r| r.setting).collect();
        assert_eq!(settings, [Setting::TrueTrue, Setting::FlipFlip, Setting::FlipTrue, Setting::RandomTrue]);
        assert_eq!(out.meta.lineage.len(), 4);
        assert_eq!(out.meta.grid.len(), 2);
        assert_eq!(RESULT_COLUMNS.len(), 12);
    }

    #[test]
    fn control_level_has_identical_modes() {
        let ds = small_dataset();
        let cfg = RunConfig {
            sweep: Sweep { control: true, ..small_config().sweep },
            draws: 2,
            log_extra_variants: true,
            os_baseline: true,
            ..small_config()
        };
        let out = run_monte_carlo(&cfg, &ds).unwrap();
        // 2 levels x 2 draws x 5 settings, plus one OS record per draw
        assert_eq!(out.table.len(), 22);
        for r in out.table.records.iter().filter(|r| r.lambda == 0.0 && r.model == "RF") {
            assert_eq!(r.flip_fraction, 0.0);
        }
        let at0 = |s: Setting, d: usize| {
            out.table.records.iter().find(|r| r.lambda == 0.0 && r.setting == s && r.draw == d).unwrap().clone()
        };
        for d in 0..2 {
            let (tt, ff, ft) = (at0(Setting::TrueTrue, d), at0(Setting::FlipFlip, d), at0(Setting::FlipTrue, d));
            assert_eq!((tt.auc, tt.f1), (ff.auc, ff.f1));
            assert_eq!((tt.auc, tt.accuracy), (ft.auc, ft.accuracy));
        }
        assert_eq!(out.table.records.iter().filter(|r| r.setting == Setting::OsTrue).count(), 2);
    }

    #[test]
    fn replay_is_identical() {
        let ds = small_dataset();
        let cfg = RunConfig { draws: 2, ..small_config() };
        let a = run_monte_carlo(&cfg, &ds).unwrap();
        let b = run_monte_carlo(&cfg, &ds).unwrap();
        assert_eq!(a, b);
        let other = run_monte_carlo(&RunConfig { seed: 1, ..cfg }, &ds).unwrap();
        assert_ne!(a.table, other.table);
    }
}
