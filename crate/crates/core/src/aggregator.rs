//! Traffic-management-center side: per-epoch collection and decryption.
//!
//! The only plaintext this module ever produces comes from
//! [`aggregate_decrypt`] over a full vector of one ciphertext per driver.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid_report::{CellId, GridSpec, Report, ZeroPool};
use crate::group::DlogTable;
use crate::ipfe::{aggregate_decrypt, CellCiphertext, DriverId, FunctionalKey};
use crate::par;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochAggregate {
    pub epoch: u32,
    /// Per-cell driver count.
    pub density: Vec<u16>,
    /// Zero ciphertexts drawn from the pool this epoch.
    pub padded_count: usize,
}

impl EpochAggregate {
    pub fn total(&self) -> u64 {
        self.density.iter().map(|&d| u64::from(d)).sum()
    }
}

/// Collects one epoch of reports and decrypts the density of every cell.
///
/// Every (driver, cell) pair not covered by a report is filled from that
/// driver's zero pool. Pool demand is checked for all drivers before any
/// entry is consumed, so a `PoolExhausted` error leaves the pool intact.
/// Reports stamped with another epoch are rejected.
pub fn collect_epoch(
    reports: &[Report],
    dk: &FunctionalKey,
    pool: &mut ZeroPool,
    table: &DlogTable,
    n_cells: usize,
    epoch: u32,
) -> Result<EpochAggregate> {
    if table.bound() < dk.n_drivers() as u64 {
        return Err(Error::InvalidConfig("lookup table bound is below the fleet size".into()));
    }
    let columns = assemble_columns(reports, pool, dk.n_drivers(), n_cells, epoch)?;
    let density = decrypt_columns(dk, &columns.cells, table)?;
    Ok(EpochAggregate {
        epoch,
        density,
        padded_count: columns.padded_count,
    })
}

/// One full ciphertext vector (one entry per driver, in driver order) per cell.
#[derive(Clone, Debug)]
pub struct EpochColumns {
    pub cells: Vec<Vec<CellCiphertext>>,
    pub padded_count: usize,
}

/// Lays reports out per cell and pads every gap from the zero pool.
pub fn assemble_columns(
    reports: &[Report],
    pool: &mut ZeroPool,
    n_drivers: usize,
    n_cells: usize,
    epoch: u32,
) -> Result<EpochColumns> {
    let n = n_drivers;
    if pool.n_drivers() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: pool.n_drivers(),
        });
    }

    // cells x drivers
    let mut grid: Vec<Vec<Option<CellCiphertext>>> = vec![vec![None; n]; n_cells];
    let mut seen = vec![false; n];
    for report in reports {
        if report.epoch != epoch {
            return Err(Error::WrongEpoch {
                expected: epoch,
                got: report.epoch,
            });
        }
        let d = report.driver_id.index(n)?;
        if core::mem::replace(&mut seen[d], true) {
            return Err(Error::DuplicateReport(report.driver_id));
        }
        for (cell, ct) in &report.entries {
            let slot = grid
                .get_mut(cell.0 as usize)
                .ok_or(Error::InvalidCell(*cell))?
                .get_mut(d)
                .expect("driver index checked above");
            if ct.driver_id != report.driver_id {
                return Err(Error::UnknownDriver(ct.driver_id));
            }
            if slot.replace(*ct).is_some() {
                return Err(Error::InvalidConfig("report repeats a cell".into()));
            }
        }
    }

    let mut demand = vec![0usize; n];
    for row in &grid {
        for (d, slot) in row.iter().enumerate() {
            if slot.is_none() {
                demand[d] += 1;
            }
        }
    }
    for (d, &needed) in demand.iter().enumerate() {
        let driver = DriverId::from_index(d);
        let available = pool.available(driver);
        if needed > available {
            return Err(Error::PoolExhausted {
                driver,
                needed,
                available,
            });
        }
    }

    let queues = pool.queues_mut();
    let mut padded_count = 0;
    let cells = grid
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .map(|(d, slot)| {
                    slot.unwrap_or_else(|| {
                        padded_count += 1;
                        queues[d].pop_front().expect("pool demand checked above")
                    })
                })
                .collect()
        })
        .collect();
    Ok(EpochColumns { cells, padded_count })
}

/// Decrypts the driver count of every cell. Cells are independent and are
/// processed in parallel with the `parallel` feature.
pub fn decrypt_columns(dk: &FunctionalKey, columns: &[Vec<CellCiphertext>], table: &DlogTable) -> Result<Vec<u16>> {
    let n = dk.n_drivers();
    if table.bound() < n as u64 {
        return Err(Error::InvalidConfig("lookup table bound is below the fleet size".into()));
    }
    if n > u16::MAX as usize {
        return Err(Error::InvalidConfig("fleet larger than a u16 density can count".into()));
    }
    par::map(columns, |cts| aggregate_decrypt(dk, cts, table).map(|m| m as u16))
        .into_iter()
        .collect()
}

/// Per-cell counts over consecutive epochs of length `delta_minutes`.
///
/// Epoch records are shared, so cloning a series is a cheap snapshot that
/// later appends do not touch.
#[derive(Clone, Debug, PartialEq)]
pub struct DensitySeries {
    pub grid: GridSpec,
    pub delta_minutes: u32,
    epochs: Vec<Arc<EpochAggregate>>,
}

impl DensitySeries {
    pub fn new(grid: GridSpec, delta_minutes: u32) -> Self {
        DensitySeries {
            grid,
            delta_minutes,
            epochs: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn first_epoch(&self) -> Option<u32> {
        self.epochs.first().map(|e| e.epoch)
    }

    pub fn epochs(&self) -> impl Iterator<Item = &EpochAggregate> + '_ {
        self.epochs.iter().map(|e| &**e)
    }

    /// Density vector at position `idx` (not epoch number).
    pub fn column(&self, idx: usize) -> &[u16] {
        &self.epochs[idx].density
    }

    pub fn get(&self, idx: usize) -> Option<&EpochAggregate> {
        self.epochs.get(idx).map(|e| &**e)
    }

    /// Returns a new series extended by `agg`; `self` is unchanged.
    pub fn append(&self, agg: EpochAggregate) -> Result<DensitySeries> {
        let mut next = self.clone();
        next.push(agg)?;
        Ok(next)
    }

    /// In-place append. Epochs must be consecutive.
    pub fn push(&mut self, agg: EpochAggregate) -> Result<()> {
        if agg.density.len() != self.grid.cells() {
            return Err(Error::LengthMismatch {
                expected: self.grid.cells(),
                actual: agg.density.len(),
            });
        }
        if let Some(last) = self.epochs.last() {
            let expected = last.epoch + 1;
            if agg.epoch != expected {
                return Err(Error::EpochGap {
                    expected,
                    got: agg.epoch,
                });
            }
        }
        self.epochs.push(Arc::new(agg));
        Ok(())
    }

    /// Builds a series from raw per-epoch density vectors starting at epoch 0.
    pub fn from_densities(grid: GridSpec, delta_minutes: u32, densities: impl IntoIterator<Item = Vec<u16>>) -> Result<Self> {
        let mut series = DensitySeries::new(grid, delta_minutes);
        for (epoch, density) in densities.into_iter().enumerate() {
            series.push(EpochAggregate {
                epoch: epoch as u32,
                density,
                padded_count: 0,
            })?;
        }
        Ok(series)
    }

    pub fn cell_count(&self, idx: usize, cell: CellId) -> u16 {
        self.epochs[idx].density[cell.0 as usize]
    }
}
