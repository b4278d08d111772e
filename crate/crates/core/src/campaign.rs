//! Multi-seed runs and their on-disk artifacts.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::RunConfig;
use crate::engine::{Algorithm, Engine, IterationRecord, RunRecord};
use crate::envs::{oracle_truth, Environment, OracleTable};
use crate::error::Result;
use crate::grid::ParamGrid;

pub const RECORD_HEADER: [&str; 11] = [
    "seed",
    "iter",
    "stage",
    "param_index",
    "param_coords",
    "y_obj",
    "y_con_min",
    "triggered",
    "safe",
    "recommended_index",
    "best_lower_bound",
];

/// Rounds to nine significant digits and prints the shortest form.
pub fn fmt_g9(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    rounded.to_string()
}

fn fmt_coords(c: &[f64]) -> String {
    c.iter().map(|v| fmt_g9(*v)).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub violations: usize,
    pub triggers: usize,
    pub discovered_regions: usize,
    pub recommended_index: usize,
    pub recommended_coords: Vec<f64>,
    /// Normalized true objective of the recommendation after each iteration.
    pub normalized_objective: Vec<f64>,
    pub final_normalized_objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignSummary {
    pub env: String,
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub oracle_safe_regions: usize,
    pub seeds: Vec<SeedSummary>,
    pub total_violations: usize,
    pub total_triggers: usize,
    pub mean_final_normalized_objective: f64,
    pub mean_discovered_regions: f64,
}

/// Parameters evaluated without a backup intervention.
pub fn clean_params(record: &RunRecord) -> Vec<usize> {
    record.all().filter(|r| r.measurements.is_some() && !r.triggered).map(|r| r.param).collect()
}

pub fn summarize_seed(seed: u64, record: &RunRecord, grid: &ParamGrid, oracle: &OracleTable) -> SeedSummary {
    let normalized: Vec<f64> = record.iterations.iter().map(|r| oracle.normalized(r.recommended)).collect();
    let recommended = record
        .iterations
        .last()
        .or(record.seeds.last())
        .map(|r| r.recommended)
        .unwrap_or(0);
    SeedSummary {
        seed,
        violations: record.violations(),
        triggers: record.triggers(),
        discovered_regions: oracle.regions_touched(grid, &clean_params(record)),
        recommended_index: recommended,
        recommended_coords: grid.point(recommended).coords().to_vec(),
        final_normalized_objective: oracle.normalized(recommended),
        normalized_objective: normalized,
    }
}

pub fn write_records(path: &Path, seed: u64, record: &RunRecord, grid: &ParamGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RECORD_HEADER)?;
    for r in record.all() {
        w.write_record(record_row(seed, r, grid))?;
    }
    w.flush()?;
    Ok(())
}

fn record_row(seed: u64, r: &IterationRecord, grid: &ParamGrid) -> Vec<String> {
    let (y_obj, y_con) = match &r.measurements {
        Some(y) => (
            fmt_g9(y[0]),
            fmt_g9(y[1..].iter().copied().fold(f64::INFINITY, f64::min)),
        ),
        None => (String::new(), String::new()),
    };
    vec![
        seed.to_string(),
        r.iter.to_string(),
        r.stage.as_str().to_string(),
        r.param.to_string(),
        fmt_coords(grid.point(r.param).coords()),
        y_obj,
        y_con,
        r.triggered.to_string(),
        r.safe.to_string(),
        r.recommended.to_string(),
        fmt_g9(r.best_lower_bound),
    ]
}

pub fn write_oracle(path: &Path, oracle: &OracleTable, grid: &ParamGrid) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let q = oracle.g.first().map_or(0, Vec::len);
    let mut header = vec!["param_index".to_string(), "coords".to_string(), "f".to_string()];
    header.extend((1..=q).map(|i| format!("g{i}")));
    w.write_record(&header)?;
    for a in 0..oracle.len() {
        let mut row = vec![a.to_string(), fmt_coords(grid.point(a).coords()), fmt_g9(oracle.f[a])];
        row.extend(oracle.g[a].iter().map(|v| fmt_g9(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Everything a campaign needs besides the seeds.
pub struct Setup {
    pub env: Box<dyn Environment>,
    pub grid: ParamGrid,
    pub oracle: OracleTable,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let env = cfg.build_env()?;
        let grid = cfg.build_grid()?;
        let oracle = oracle_truth(env.as_ref(), &grid, cfg.oracle_repeats, cfg.env_seed)?;
        Ok(Setup { env, grid, oracle })
    }
}

pub fn run_seed(cfg: &RunConfig, setup: &Setup, seed: u64) -> Result<RunRecord> {
    let ec = cfg.engine_config(setup.env.as_ref(), &setup.grid)?;
    Engine::new(setup.env.as_ref(), &setup.grid, ec, seed)?.run()
}

/// Runs every seed in `cfg.seeds` (in parallel) and, when `out` is given,
/// writes `seed_<n>.csv`, `oracle.csv` and `summary.json` there.
pub fn run_campaign(cfg: &RunConfig, out: Option<&Path>) -> Result<CampaignSummary> {
    let setup = Setup::new(cfg)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.seeds.len());
    let chunk = cfg.seeds.len().div_ceil(workers);
    let results: Vec<Result<RunRecord>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .seeds
            .chunks(chunk)
            .map(|seeds| {
                let setup = &setup;
                s.spawn(move || seeds.iter().map(|&seed| run_seed(cfg, setup, seed)).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("seed worker panicked"))
            .collect()
    });

    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_oracle(&dir.join("oracle.csv"), &setup.oracle, &setup.grid)?;
    }
    let mut seeds = Vec::with_capacity(results.len());
    for (&seed, rec) in cfg.seeds.iter().zip(results) {
        let rec = rec?;
        log::info!(
            "seed {seed}: {} violations, {} triggers, recommended {}",
            rec.violations(),
            rec.triggers(),
            rec.iterations.last().map_or(0, |r| r.recommended)
        );
        if let Some(dir) = out {
            write_records(&dir.join(format!("seed_{seed}.csv")), seed, &rec, &setup.grid)?;
        }
        seeds.push(summarize_seed(seed, &rec, &setup.grid, &setup.oracle));
    }
    let n = seeds.len().max(1) as f64;
    let summary = CampaignSummary {
        env: setup.env.name().to_string(),
        algorithm: cfg.algorithm,
        iterations: seeds.first().map_or(0, |s| s.normalized_objective.len()),
        oracle_safe_regions: setup.grid.components(&setup.oracle.safe_indices()).len(),
        total_violations: seeds.iter().map(|s| s.violations).sum(),
        total_triggers: seeds.iter().map(|s| s.triggers).sum(),
        mean_final_normalized_objective: seeds.iter().map(|s| s.final_normalized_objective).sum::<f64>() / n,
        mean_discovered_regions: seeds.iter().map(|s| s.discovered_regions as f64).sum::<f64>() / n,
        seeds,
    };
    if let Some(dir) = out {
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    }
    Ok(summary)
}
