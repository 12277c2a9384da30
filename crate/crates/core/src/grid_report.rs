//! Grid cells and driver-side k-anonymous reports.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index;
use rand_core::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::ipfe::{CellCiphertext, DriverId, Encryptor};

/// Row-major cell index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellId(pub u16);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Rectangular grid of square cells.
///
/// Positions are local meters measured from the south-west corner; `origin`
/// only records where that corner sits on a map.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GridSpec {
    pub rows: u16,
    pub cols: u16,
    pub cell_size_m: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub origin: (f64, f64),
}

impl GridSpec {
    pub fn new(rows: u16, cols: u16, cell_size_m: f64) -> Result<Self> {
        let grid = GridSpec {
            rows,
            cols,
            cell_size_m,
            origin: (0.0, 0.0),
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidConfig("grid needs at least one row and column".into()));
        }
        if self.cells() > u16::MAX as usize {
            return Err(Error::InvalidConfig("grid has more cells than a u16 cell id can address".into()));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::InvalidConfig("cell size must be positive".into()));
        }
        Ok(())
    }

    /// Total number of cells, `L = rows * cols`.
    pub fn cells(&self) -> usize {
        self.rows as usize * self.cols as usize
    }

    pub fn width_m(&self) -> f64 {
        self.cols as f64 * self.cell_size_m
    }

    pub fn height_m(&self) -> f64 {
        self.rows as f64 * self.cell_size_m
    }

    pub fn cell(&self, row: u16, col: u16) -> CellId {
        CellId(row * self.cols + col)
    }

    pub fn row_col(&self, cell: CellId) -> (u16, u16) {
        (cell.0 / self.cols, cell.0 % self.cols)
    }

    pub fn contains(&self, cell: CellId) -> bool {
        (cell.0 as usize) < self.cells()
    }

    /// Maps a position to its cell. The grid box is closed at the origin
    /// and open at the far edges; boundaries fall into the higher row/column.
    pub fn locate(&self, x: f64, y: f64) -> Result<CellId> {
        let inside = x >= 0.0 && y >= 0.0 && x < self.width_m() && y < self.height_m();
        if !inside {
            return Err(Error::OutOfBounds { x, y });
        }
        let col = libm::floor(x / self.cell_size_m) as u16;
        let row = libm::floor(y / self.cell_size_m) as u16;
        // x / size can round up to `cols` for x just below the edge.
        Ok(self.cell(row.min(self.rows - 1), col.min(self.cols - 1)))
    }
}

/// A driver's per-epoch submission: `k` encrypted cells, exactly one of
/// which encrypts 1. Entries are sorted by cell id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Report {
    pub driver_id: DriverId,
    pub epoch: u32,
    pub entries: Vec<(CellId, CellCiphertext)>,
}

impl Report {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.entries.iter().map(|(c, _)| *c)
    }
}

/// Samples `k - 1` dummy cells uniformly without replacement from the other
/// `L - 1` cells and encrypts the report.
pub fn build_report<R: RngCore + CryptoRng>(
    enc: &Encryptor,
    true_cell: CellId,
    k: usize,
    grid: &GridSpec,
    epoch: u32,
    rng: &mut R,
) -> Result<Report> {
    let cells = grid.cells();
    if !grid.contains(true_cell) {
        return Err(Error::InvalidCell(true_cell));
    }
    if k == 0 || k > cells {
        return Err(Error::AnonymityTooLarge { k, cells });
    }
    let mut set: Vec<CellId> = index::sample(rng, cells - 1, k - 1)
        .into_iter()
        .map(|i| {
            // skip over the true cell
            let i = if i >= true_cell.0 as usize { i + 1 } else { i };
            CellId(i as u16)
        })
        .collect();
    set.push(true_cell);
    assemble_report(enc, epoch, &set, true_cell, rng)
}

/// Encrypts 1 for `true_cell` and 0 for every other member of `cell_set`.
///
/// The output depends on `true_cell` only through ciphertext contents:
/// entry count, order and cell ids are fixed by the set.
pub fn assemble_report<R: RngCore + CryptoRng>(
    enc: &Encryptor,
    epoch: u32,
    cell_set: &[CellId],
    true_cell: CellId,
    rng: &mut R,
) -> Result<Report> {
    let mut cells = cell_set.to_vec();
    cells.sort_unstable();
    cells.dedup();
    if cells.len() != cell_set.len() {
        return Err(Error::InvalidConfig("report cells must be distinct".into()));
    }
    if cells.binary_search(&true_cell).is_err() {
        return Err(Error::InvalidCell(true_cell));
    }
    let entries = cells
        .into_iter()
        .map(|cell| (cell, enc.encrypt(u64::from(cell == true_cell), rng)))
        .collect();
    Ok(Report {
        driver_id: enc.driver_id(),
        epoch,
        entries,
    })
}

/// `count` fresh encryptions of zero, deposited with the aggregator so it
/// can fill cells a driver did not report.
pub fn provision_zero_pool<R: RngCore + CryptoRng>(enc: &Encryptor, count: usize, rng: &mut R) -> Vec<CellCiphertext> {
    (0..count).map(|_| enc.encrypt(0, rng)).collect()
}

/// Aggregator-held queues of pre-provisioned zero ciphertexts, one per
/// driver. Each entry is handed out at most once.
#[derive(Clone, Debug, Default)]
pub struct ZeroPool {
    queues: Vec<VecDeque<CellCiphertext>>,
}

impl ZeroPool {
    pub fn new(n_drivers: usize) -> Self {
        ZeroPool {
            queues: (0..n_drivers).map(|_| VecDeque::new()).collect(),
        }
    }

    pub fn n_drivers(&self) -> usize {
        self.queues.len()
    }

    /// Accepts entries for `driver`; entries made by anyone else are rejected.
    pub fn deposit(&mut self, driver: DriverId, entries: impl IntoIterator<Item = CellCiphertext>) -> Result<()> {
        let idx = driver.index(self.queues.len())?;
        let queue = &mut self.queues[idx];
        for ct in entries {
            if ct.driver_id != driver {
                return Err(Error::UnknownDriver(ct.driver_id));
            }
            queue.push_back(ct);
        }
        Ok(())
    }

    pub fn available(&self, driver: DriverId) -> usize {
        driver
            .index(self.queues.len())
            .map(|i| self.queues[i].len())
            .unwrap_or(0)
    }

    pub fn take(&mut self, driver: DriverId) -> Option<CellCiphertext> {
        let idx = driver.index(self.queues.len()).ok()?;
        self.queues[idx].pop_front()
    }

    /// Tops the driver's queue up to `level` entries with fresh zeros.
    pub fn top_up<R: RngCore + CryptoRng>(&mut self, enc: &Encryptor, level: usize, rng: &mut R) -> Result<usize> {
        let have = self.available(enc.driver_id());
        let missing = level.saturating_sub(have);
        if missing > 0 {
            self.deposit(enc.driver_id(), provision_zero_pool(enc, missing, rng))?;
        }
        Ok(missing)
    }

    pub fn queue(&self, driver: DriverId) -> Option<&VecDeque<CellCiphertext>> {
        driver.index(self.queues.len()).ok().map(|i| &self.queues[i])
    }

    pub(crate) fn queues_mut(&mut self) -> &mut [VecDeque<CellCiphertext>] {
        &mut self.queues
    }
}
