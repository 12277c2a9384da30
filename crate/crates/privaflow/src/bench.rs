//! Timing sweeps: driver-side report encryption against `k`, and aggregator
//! decryption against fleet size.
//!
//! Every point runs `repetitions + 1` times; the first run is a warm-up and is
//! dropped, the rest are summarized by their median.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use privaflow_core::aggregator::assemble_columns;
use privaflow_core::{build_report, decrypt_columns, group_gen, CellId, DlogTable, GridSpec, Report};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::config::{grid_shape, BenchSection};
use crate::error::{Error, Result};
use crate::keystore::{generate, Entropy};

/// Reference figures the measurements are printed next to.
pub const REFERENCE_ENCRYPT_MS_80: f64 = 50.0;
pub const REFERENCE_DECRYPT_MS_200X80: f64 = 600.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Point {
    pub x: usize,
    pub median_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub reps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub encrypt: Vec<Point>,
    pub encrypt_fit: LinearFit,
    pub decrypt_cells: usize,
    pub decrypt: Vec<Point>,
    pub reference_encrypt_ms_80_cells: f64,
    pub reference_decrypt_ms_200_drivers_80_cells: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let syy: f64 = points.iter().map(|(_, y)| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r_squared = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    }
}

fn summarize(x: usize, mut samples: Vec<f64>) -> Point {
    samples.remove(0);
    samples.sort_by(f64::total_cmp);
    let reps = samples.len();
    let median_ms = if reps % 2 == 1 {
        samples[reps / 2]
    } else {
        (samples[reps / 2 - 1] + samples[reps / 2]) / 2.0
    };
    Point {
        x,
        median_ms,
        min_ms: samples[0],
        max_ms: samples[reps - 1],
        reps,
    }
}

fn time_ms<T>(f: impl FnOnce() -> T) -> f64 {
    let start = Instant::now();
    black_box(f());
    start.elapsed().as_secs_f64() * 1e3
}

fn grid_for(cells: usize) -> Result<GridSpec> {
    let (rows, cols) = grid_shape(cells);
    Ok(GridSpec::new(rows as u16, cols as u16, 1000.0)?)
}

/// Time to build one `k`-cell report, for each `k` in `cfg.cell_counts`.
pub fn bench_encrypt(cfg: &BenchSection, seed: u64) -> Result<(Vec<Point>, LinearFit)> {
    let max_k = cfg.cell_counts.iter().copied().max().unwrap_or(1);
    let grid = grid_for(max_k.max(cfg.cells))?;
    let params = group_gen(128)?;
    let keys = generate(&params, 1, 0, Entropy::Seeded(seed))?;
    let enc = &keys.encryptors[0];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    let mut points = Vec::new();
    for &k in &cfg.cell_counts {
        let samples = (0..=cfg.repetitions)
            .map(|_| {
                let cell = CellId(rng.gen_range(0..grid.cells() as u16));
                let mut out = Ok(());
                let ms = time_ms(|| out = build_report(enc, cell, k, &grid, 0, &mut rng).map(drop));
                out.map(|_| ms)
            })
            .collect::<privaflow_core::Result<Vec<f64>>>()?;
        points.push(summarize(k, samples));
    }
    let fit = linear_fit(&points.iter().map(|p| (p.x as f64, p.median_ms)).collect::<Vec<_>>());
    Ok((points, fit))
}

/// Time to decrypt every cell of one padded epoch, for each fleet size in
/// `cfg.driver_counts`, on a grid of `cfg.cells` cells.
pub fn bench_decrypt(cfg: &BenchSection, k_anon: usize, seed: u64) -> Result<Vec<Point>> {
    let grid = grid_for(cfg.cells)?;
    let cells = grid.cells();
    let k = k_anon.clamp(1, cells);
    let params = group_gen(128)?;
    let max_n = cfg.driver_counts.iter().copied().max().unwrap_or(1);
    let table = DlogTable::new(max_n as u64);

    let mut points = Vec::new();
    for &n in &cfg.driver_counts {
        let mut keys = generate(&params, n, cells - k, Entropy::Seeded(seed ^ n as u64))?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let reports = keys
            .encryptors
            .iter()
            .map(|enc| build_report(enc, CellId(rng.gen_range(0..cells as u16)), k, &grid, 0, &mut rng))
            .collect::<privaflow_core::Result<Vec<Report>>>()?;
        let columns = assemble_columns(&reports, &mut keys.pool, n, cells, 0)?;

        let mut check = Ok(());
        let samples: Vec<f64> = (0..=cfg.repetitions)
            .map(|_| {
                time_ms(|| {
                    let r = decrypt_columns(&keys.dk, &columns.cells, &table);
                    if let Ok(d) = &r {
                        if d.iter().map(|&v| v as usize).sum::<usize>() != n {
                            check = Err(Error::Integrity(format!("decrypted {n}-driver epoch does not sum to {n}")));
                        }
                    }
                    if let Err(e) = r {
                        check = Err(e.into());
                    }
                })
            })
            .collect();
        check?;
        points.push(summarize(n, samples));
    }
    Ok(points)
}

pub fn run(cfg: &BenchSection, k_anon: usize, seed: u64) -> Result<BenchReport> {
    let (encrypt, encrypt_fit) = bench_encrypt(cfg, seed)?;
    let decrypt = bench_decrypt(cfg, k_anon, seed)?;
    Ok(BenchReport {
        encrypt,
        encrypt_fit,
        decrypt_cells: cfg.cells,
        decrypt,
        reference_encrypt_ms_80_cells: REFERENCE_ENCRYPT_MS_80,
        reference_decrypt_ms_200_drivers_80_cells: REFERENCE_DECRYPT_MS_200X80,
    })
}

fn write_points(path: &Path, x_name: &str, points: &[Point]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e))?;
    w.write_record([x_name, "median_ms", "min_ms", "max_ms", "reps"])
        .map_err(|e| Error::format(path, e))?;
    for p in points {
        w.write_record([
            p.x.to_string(),
            format!("{:.4}", p.median_ms),
            format!("{:.4}", p.min_ms),
            format!("{:.4}", p.max_ms),
            p.reps.to_string(),
        ])
        .map_err(|e| Error::format(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `bench_encrypt.csv`, `bench_decrypt.csv` and `bench.json`.
pub fn write(report: &BenchReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_points(&dir.join("bench_encrypt.csv"), "cells", &report.encrypt)?;
    write_points(&dir.join("bench_decrypt.csv"), "drivers", &report.decrypt)?;
    crate::density_io::write_json(&dir.join("bench.json"), report)
}
