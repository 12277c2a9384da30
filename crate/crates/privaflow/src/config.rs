//! Run configuration: one TOML file, with command-line flags layered on top.
//!
//! ```toml
//! seed = 7
//! out = "out"
//!
//! [fleet]
//! n_drivers = 200
//! k_anon = 5
//! n_epochs = 100
//! grid = { rows = 8, cols = 10, cell_size_m = 1000.0 }
//!
//! [bench]
//! cell_counts = [10, 20, 40, 80]
//! ```
//!
//! Unknown keys anywhere in the file are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use privaflow_core::matrices::WindowConfig;
use privaflow_core::mobility_sim::Downtown;
use privaflow_core::{FleetConfig, GridSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub security_level: u32,
    pub out: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub runs: u32,
    /// Zero ciphertexts deposited per driver at keygen, in epochs of worst-case demand.
    pub pool_epochs: u32,
    pub fleet: FleetSection,
    pub bench: BenchSection,
    pub export: ExportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            security_level: 128,
            out: PathBuf::from("out"),
            threads: 0,
            runs: 1,
            pool_epochs: 1,
            fleet: FleetSection::default(),
            bench: BenchSection::default(),
            export: ExportSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetSection {
    pub n_drivers: u32,
    pub grid: GridSpec,
    pub k_anon: u16,
    pub delta_minutes: u32,
    pub n_epochs: u32,
    pub speed_mps_range: (f64, f64),
    pub report_probability: f64,
    pub downtown: Downtown,
}

impl Default for FleetSection {
    fn default() -> Self {
        let d = FleetConfig::default();
        FleetSection {
            n_drivers: d.n_drivers,
            grid: d.grid,
            k_anon: d.k_anon,
            delta_minutes: d.delta_minutes,
            n_epochs: d.n_epochs,
            speed_mps_range: d.speed_mps_range,
            report_probability: d.report_probability,
            downtown: d.downtown,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Report sizes `k` timed on the driver side.
    pub cell_counts: Vec<usize>,
    /// Fleet sizes timed on the aggregator side.
    pub driver_counts: Vec<usize>,
    /// Grid size used while timing decryption.
    pub cells: usize,
    pub repetitions: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            cell_counts: vec![10, 20, 40, 80],
            driver_counts: vec![40, 80, 120, 160, 200],
            cells: 80,
            repetitions: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportSection {
    pub n: usize,
    pub horizons: Vec<u32>,
    pub split: (f64, f64, f64),
}

impl Default for ExportSection {
    fn default() -> Self {
        let w = WindowConfig::default();
        ExportSection {
            n: w.n,
            horizons: w.horizons,
            split: (0.7, 0.1, 0.2),
        }
    }
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub drivers: Option<u32>,
    pub cells: Option<usize>,
    pub k_anon: Option<u16>,
    pub epochs: Option<u32>,
    pub report_prob: Option<f64>,
    pub runs: Option<u32>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Most-square `rows x cols` factorization of `cells` with `rows <= cols`.
pub fn grid_shape(cells: usize) -> (usize, usize) {
    let mut rows = (cells as f64).sqrt() as usize;
    while rows > 1 && !cells.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, cells / rows)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.drivers {
            self.fleet.n_drivers = v;
        }
        if let Some(cells) = o.cells {
            self.set_cells(cells)?;
        }
        if let Some(v) = o.k_anon {
            self.fleet.k_anon = v;
        }
        if let Some(v) = o.epochs {
            self.fleet.n_epochs = v;
        }
        if let Some(v) = o.report_prob {
            self.fleet.report_probability = v;
        }
        if let Some(v) = o.runs {
            self.runs = v;
        }
        if let Some(v) = o.threads {
            self.threads = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        Ok(())
    }

    /// Reshapes the grid to `cells` cells and recenters the downtown block.
    pub fn set_cells(&mut self, cells: usize) -> Result<()> {
        if cells == 0 || cells > u16::MAX as usize {
            return Err(Error::Config(format!("cell count {cells} out of range")));
        }
        let (rows, cols) = grid_shape(cells);
        let grid = &mut self.fleet.grid;
        grid.rows = rows as u16;
        grid.cols = cols as u16;
        let d = &mut self.fleet.downtown;
        d.rows = d.rows.clamp(1, grid.rows);
        d.cols = d.cols.clamp(1, grid.cols);
        d.row = (grid.rows - d.rows) / 2;
        d.col = (grid.cols - d.cols) / 2;
        Ok(())
    }

    pub fn fleet_config(&self) -> FleetConfig {
        self.fleet_config_for_run(0)
    }

    /// Run `i` of a multi-run experiment uses seed `seed + i`.
    pub fn fleet_config_for_run(&self, run: u32) -> FleetConfig {
        let f = &self.fleet;
        FleetConfig {
            n_drivers: f.n_drivers,
            grid: f.grid.clone(),
            k_anon: f.k_anon,
            delta_minutes: f.delta_minutes,
            n_epochs: f.n_epochs,
            seed: self.seed.wrapping_add(run as u64),
            speed_mps_range: f.speed_mps_range,
            report_probability: f.report_probability,
            downtown: f.downtown.clone(),
        }
    }

    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            n: self.export.n,
            delta_minutes: self.fleet.delta_minutes,
            horizons: self.export.horizons.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.security_level != 128 {
            return Err(Error::Config(format!(
                "unsupported security level {}",
                self.security_level
            )));
        }
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        self.fleet_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.window_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let b = &self.bench;
        if b.repetitions < 2 || b.cell_counts.is_empty() || b.driver_counts.is_empty() {
            return Err(Error::Config(
                "bench needs at least two repetitions and non-empty sweeps".into(),
            ));
        }
        if b.cell_counts.iter().any(|&k| k == 0 || k > b.cells.max(1) && k > u16::MAX as usize) {
            return Err(Error::Config("bench cell counts must be positive".into()));
        }
        if b.driver_counts.contains(&0) || b.cells == 0 {
            return Err(Error::Config("bench driver and cell counts must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.fleet.grid.cells(), 80);
        assert_eq!(cfg.export.horizons, vec![1, 3, 6, 12]);
    }

    #[test]
    fn parses_partial_file() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 9
            [fleet]
            n_drivers = 12
            grid = { rows = 2, cols = 3, cell_size_m = 250.0 }
            downtown = { row = 0, col = 0, rows = 1, cols = 1, strength = 0.5, peak_hour = 8.0, weekend_factor = 1.0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.fleet.n_drivers, 12);
        assert_eq!(cfg.fleet.grid.cells(), 6);
        assert_eq!(cfg.fleet.k_anon, 5);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 1").is_err());
        assert!(RunConfig::from_toml("[fleet]\nn_driver = 1").is_err());
        assert!(RunConfig::from_toml("[fleet.grid]\nrows = 1\ncols = 1\ncell_size_m = 1.0\nextra = 2").is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            seed: Some(3),
            drivers: Some(10),
            cells: Some(40),
            k_anon: Some(3),
            report_prob: Some(0.5),
            ..Default::default()
        })
        .unwrap();
        assert_eq!((cfg.seed, cfg.fleet.n_drivers, cfg.fleet.k_anon), (3, 10, 3));
        assert_eq!((cfg.fleet.grid.rows, cfg.fleet.grid.cols), (5, 8));
        cfg.validate().unwrap();
        assert_eq!(cfg.fleet_config_for_run(2).seed, 5);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(80), (8, 10));
        assert_eq!(grid_shape(40), (5, 8));
        assert_eq!(grid_shape(7), (1, 7));
        assert_eq!(grid_shape(1), (1, 1));
        assert_eq!(grid_shape(64), (8, 8));
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = RunConfig::default();
        cfg.fleet.k_anon = 81;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.security_level = 256;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg.set_cells(0).is_err());
    }
}
