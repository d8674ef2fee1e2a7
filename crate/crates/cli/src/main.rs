//! `bibo`: simulate a scenario, prepare features, run the Monte-Carlo sweep
//! and summarise its results.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use bibo_core::dataset::{self, Dataset};
use bibo_core::features::build_feature_table;
use bibo_core::harness::{aggregate_report, run_monte_carlo, ResultTable, RunConfig};
use bibo_core::scenario::{simulate_scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "bibo", version, about = "BIBO label-noise workbench")]
struct Cli {
    /// TOML file with optional `[scenario]` and `[run]` tables.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed (simulate) or the master seed (run-mc).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate trajectories and write the dataset CSV.
    Simulate {
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Clean, impute and featurize a dataset; writes one CSV per sensor.
    Prepare {
        #[arg(long, short)]
        dataset: Option<PathBuf>,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
    /// Run the error sweep; writes `results.csv` and `results.meta.json`.
    RunMc {
        /// Dataset CSV; defaults to `run.dataset`, else a fresh simulation.
        #[arg(long, short)]
        dataset: Option<PathBuf>,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
    /// Summarise a results CSV into `summary.json` and `curves.csv`.
    Report {
        #[arg(long, short)]
        results: PathBuf,
        #[arg(long, short)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    scenario: ScenarioConfig,
    run: RunConfig,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_dataset(flag: Option<&Path>, config: &Config) -> Result<Dataset> {
    match flag.or(config.run.dataset.as_deref()) {
        Some(p) => dataset::load_csv(p).with_context(|| format!("loading {}", p.display())),
        None => {
            log::info!("no dataset given; simulating scenario seed {}", config.scenario.seed);
            Ok(Dataset::from_users(simulate_scenario(&config.scenario)?)?)
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut config = load_config(cli.config.as_deref())?;

    match cli.command {
        Command::Simulate { out } => {
            if let Some(s) = cli.seed {
                config.scenario.seed = s;
            }
            let ds = Dataset::from_users(simulate_scenario(&config.scenario)?)?;
            dataset::save_csv(&ds, &out)?;
            println!("wrote {} rows for {} users to {}", ds.len(), config.scenario.n_users, out.display());
        }
        Command::Prepare { dataset, out_dir } => {
            let ds = load_dataset(dataset.as_deref(), &config)?;
            fs::create_dir_all(&out_dir)?;
            for &sensor in &config.run.sensors {
                let table = build_feature_table(&ds, sensor, &config.run.ewma)?;
                let path = out_dir.join(format!("features_{sensor}.csv"));
                table.write_csv(BufWriter::new(fs::File::create(&path)?))?;
                println!("wrote {} x {} features to {}", table.len(), table.columns.len(), path.display());
            }
        }
        Command::RunMc { dataset, out_dir } => {
            if let Some(s) = cli.seed {
                config.run.seed = s;
            }
            let ds = load_dataset(dataset.as_deref(), &config)?;
            let out = run_monte_carlo(&config.run, &ds)?;
            fs::create_dir_all(&out_dir)?;
            out.table.save_csv(&out_dir.join("results.csv"))?;
            fs::write(out_dir.join("results.meta.json"), serde_json::to_string_pretty(&out.meta)?)?;
            println!("wrote {} records to {}", out.table.len(), out_dir.join("results.csv").display());
        }
        Command::Report { results, out_dir } => {
            let table = ResultTable::load_csv(&results)?;
            if table.is_empty() {
                bail!("{} holds no records", results.display());
            }
            let summary = aggregate_report(&table)?;
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("summary.json"), summary.to_json()?)?;
            summary.write_curves_csv(BufWriter::new(fs::File::create(out_dir.join("curves.csv"))?))?;
            println!("summarised {} cells into {}", summary.cells.len(), out_dir.display());
        }
    }
    Ok(())
}
