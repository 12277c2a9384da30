//! Subcommand bodies. Each takes a validated [`RunConfig`] and returns what
//! it wrote; printing is left to the caller.

use std::fs;
use std::path::{Path, PathBuf};

use privaflow_core::wire::SizeReport;
use privaflow_core::{group_gen, run_pipeline, DensitySeries, DlogTable, GroundTruth, PoolPolicy};
use serde::Serialize;

use crate::bench::{self, BenchReport};
use crate::config::RunConfig;
use crate::dataset::{export_dataset, Manifest};
use crate::density_io::{write_ground_truth, write_json, write_series};
use crate::error::{Error, Result};
use crate::keystore::{self, Entropy, Keyset};

pub const KEYS_DIR: &str = "keys";
pub const DENSITY_CSV: &str = "density.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const DATASET_DIR: &str = "dataset";
pub const BENCH_DIR: &str = "bench";
/// Name chosen so nobody mistakes the file for shareable output.
pub const GROUND_TRUTH_CSV: &str = "PRIVATE_ground_truth.csv";

pub fn keys_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.join(KEYS_DIR)
}

pub fn pool_size(cfg: &RunConfig) -> usize {
    cfg.pool_epochs as usize * cfg.fleet.grid.cells()
}

pub struct KeygenOutcome {
    pub dir: PathBuf,
    pub n_drivers: usize,
    pub pool_size: usize,
    pub sizes: SizeReport,
}

pub fn keygen(cfg: &RunConfig, os_entropy: bool) -> Result<KeygenOutcome> {
    let params = group_gen(cfg.security_level)?;
    let entropy = if os_entropy { Entropy::Os } else { Entropy::Seeded(cfg.seed) };
    let n = cfg.fleet.n_drivers as usize;
    let keys = keystore::generate(&params, n, pool_size(cfg), entropy)?;
    let dir = keys_dir(cfg);
    keystore::save(&keys, &dir)?;
    Ok(KeygenOutcome {
        dir,
        n_drivers: n,
        pool_size: pool_size(cfg),
        sizes: SizeReport::new(&params),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeySource<'a> {
    /// Load from this directory.
    Dir(&'a Path),
    /// Generate seeded keys for each run.
    Inline,
}

#[derive(Clone, Debug)]
pub struct SimulateOptions<'a> {
    pub keys: KeySource<'a>,
    pub dump_ground_truth: bool,
    pub replenish: bool,
}

/// Decrypted density against the ground truth over one run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RunStats {
    pub run: u32,
    pub seed: u64,
    pub epochs: usize,
    pub cells: usize,
    /// (epoch, cell) pairs where the decrypted count differs from the truth.
    pub mismatches: u64,
    pub under_counts: u64,
    pub over_counts: u64,
    /// Drivers missing from the decrypted totals, summed over epochs.
    pub missing_driver_epochs: u64,
    pub max_abs_error: u16,
    pub padded_ciphertexts: u64,
    pub density_csv: PathBuf,
}

impl RunStats {
    pub fn compare(run: u32, seed: u64, series: &DensitySeries, truth: &GroundTruth) -> Self {
        let mut s = RunStats {
            run,
            seed,
            epochs: series.len(),
            cells: series.grid.cells(),
            ..Default::default()
        };
        for (agg, want) in series.epochs().zip(&truth.density) {
            s.padded_ciphertexts += agg.padded_count as u64;
            for (&got, &want) in agg.density.iter().zip(want) {
                if got != want {
                    s.mismatches += 1;
                    s.max_abs_error = s.max_abs_error.max(got.abs_diff(want));
                    if got < want {
                        s.under_counts += 1;
                        s.missing_driver_epochs += u64::from(want - got);
                    } else {
                        s.over_counts += 1;
                    }
                }
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub runs: usize,
    pub total_mismatches: u64,
    pub total_under_counts: u64,
    pub total_over_counts: u64,
    pub mean_mismatches: f64,
    pub max_mismatches: u64,
    pub runs_with_mismatches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub config: RunConfig,
    pub replenish: bool,
    pub runs: Vec<RunStats>,
    pub aggregate: Aggregate,
}

impl SimulateSummary {
    fn new(config: RunConfig, replenish: bool, runs: Vec<RunStats>) -> Self {
        let total = |f: fn(&RunStats) -> u64| runs.iter().map(f).sum::<u64>();
        let aggregate = Aggregate {
            runs: runs.len(),
            total_mismatches: total(|r| r.mismatches),
            total_under_counts: total(|r| r.under_counts),
            total_over_counts: total(|r| r.over_counts),
            mean_mismatches: total(|r| r.mismatches) as f64 / runs.len().max(1) as f64,
            max_mismatches: runs.iter().map(|r| r.mismatches).max().unwrap_or(0),
            runs_with_mismatches: runs.iter().filter(|r| r.mismatches > 0).count(),
        };
        SimulateSummary {
            config,
            replenish,
            runs,
            aggregate,
        }
    }

    /// Exactness is required at full participation; over-counts never happen
    /// because padding only ever adds encrypted zeros.
    pub fn check(&self) -> Result<()> {
        let a = &self.aggregate;
        if a.total_over_counts > 0 {
            return Err(Error::Integrity(format!("{} cells decrypted above the ground truth", a.total_over_counts)));
        }
        if self.config.fleet.report_probability >= 1.0 && a.total_mismatches > 0 {
            return Err(Error::Integrity(format!(
                "{} mismatching cells with every driver reporting",
                a.total_mismatches
            )));
        }
        Ok(())
    }
}

fn run_dir(cfg: &RunConfig, run: u32) -> PathBuf {
    if run == 0 {
        cfg.out.clone()
    } else {
        cfg.out.join("runs").join(format!("run_{run:03}"))
    }
}

fn pool_error(cfg: &RunConfig, e: privaflow_core::Error) -> Error {
    match e {
        privaflow_core::Error::PoolExhausted { .. } => {
            let epochs = cfg.fleet.n_epochs as usize * cfg.runs as usize;
            Error::PoolExhausted {
                source: e,
                suggested_per_driver: epochs * cfg.fleet.grid.cells(),
                suggested_pool_epochs: epochs,
            }
        }
        other => other.into(),
    }
}

/// Runs `cfg.runs` seeded pipeline runs and compares each with its ground truth.
///
/// Run `i` uses seed `cfg.seed + i`. Run 0 writes `density.csv` into the
/// output directory, later runs into `runs/run_NNN/`.
pub fn simulate(cfg: &RunConfig, opts: &SimulateOptions) -> Result<SimulateSummary> {
    let params = group_gen(cfg.security_level)?;
    let n = cfg.fleet.n_drivers as usize;
    let cells = cfg.fleet.grid.cells();
    let table = DlogTable::new(n as u64);
    let policy = if opts.replenish {
        PoolPolicy::TopUp(cells)
    } else {
        PoolPolicy::Fixed
    };

    let loaded = match opts.keys {
        KeySource::Dir(dir) => {
            let keys = keystore::load(dir)?;
            if keys.info.n_drivers != n {
                return Err(Error::Config(format!(
                    "{} holds keys for {} drivers, config asks for {n}",
                    dir.display(),
                    keys.info.n_drivers
                )));
            }
            Some(keys)
        }
        KeySource::Inline => None,
    };

    let mut stats = Vec::with_capacity(cfg.runs as usize);
    let mut fixed_pool = loaded.as_ref().map(|k| k.pool.clone());
    for run in 0..cfg.runs {
        let fleet = cfg.fleet_config_for_run(run);
        let inline: Keyset;
        let keys = match &loaded {
            Some(k) => k,
            None => {
                inline = keystore::generate(&params, n, pool_size(cfg), Entropy::Seeded(fleet.seed))?;
                &inline
            }
        };
        // A fixed pool is shared by all runs over one keyset; a topped-up one
        // starts from the deposited state every run.
        let mut pool = match (&mut fixed_pool, policy) {
            (Some(p), PoolPolicy::Fixed) => std::mem::take(p),
            _ => keys.pool.clone(),
        };
        let result = run_pipeline(&fleet, &keys.encryptors, &keys.dk, &table, &mut pool, policy);
        if let (Some(p), PoolPolicy::Fixed) = (&mut fixed_pool, policy) {
            *p = pool;
        }
        let (series, truth) = result.map_err(|e| pool_error(cfg, e))?;

        let dir = run_dir(cfg, run);
        let csv = dir.join(DENSITY_CSV);
        write_series(&series, &csv)?;
        if opts.dump_ground_truth {
            write_ground_truth(&truth, &dir.join(GROUND_TRUTH_CSV))?;
        }
        let mut s = RunStats::compare(run, fleet.seed, &series, &truth);
        s.density_csv = csv;
        stats.push(s);
    }

    let summary = SimulateSummary::new(cfg.clone(), opts.replenish, stats);
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_json(&cfg.out.join(SUMMARY_JSON), &summary)?;
    Ok(summary)
}

pub fn bench(cfg: &RunConfig) -> Result<BenchReport> {
    let report = bench::run(&cfg.bench, cfg.fleet.k_anon as usize, cfg.seed)?;
    bench::write(&report, &cfg.out.join(BENCH_DIR))?;
    Ok(report)
}

/// Exports the series at `series_csv` into `out/dataset`. Window width and
/// horizons come from the config, the epoch length from the series.
pub fn export(cfg: &RunConfig, series_csv: &Path) -> Result<(PathBuf, Manifest)> {
    let series = crate::density_io::read_series(series_csv)?;
    let mut window = cfg.window_config();
    window.delta_minutes = series.delta_minutes;
    let dir = cfg.out.join(DATASET_DIR);
    let manifest = export_dataset(&series, &window, cfg.export.split, &dir)?;
    Ok((dir, manifest))
}
