//! Spatiotemporal input windows for the forecaster.
//!
//! For a target epoch `ts` and half-window `n`:
//!
//! * `current`: columns `ts - n ..= ts` (`n + 1` columns)
//! * `daily`:   columns `td - n ..= td + n` with `td = ts - day`
//! * `weekly`:  columns `tw - n ..= tw + n` with `tw = ts - week`
//!
//! and one label column `ts + h` per horizon `h`. Rows are cells.

use alloc::vec::Vec;

use crate::aggregator::DensitySeries;
use crate::error::{Error, Result};

const MINUTES_PER_DAY: u32 = 24 * 60;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WindowConfig {
    pub n: usize,
    pub delta_minutes: u32,
    pub horizons: Vec<u32>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            n: 15,
            delta_minutes: 5,
            horizons: alloc::vec![1, 3, 6, 12],
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("window half-width must be at least 1".into()));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::InvalidConfig("horizons must be a non-empty set of positive steps".into()));
        }
        let day = self.epochs_per_day()?;
        if self.n >= day {
            return Err(Error::InvalidConfig("window half-width must be shorter than a day".into()));
        }
        Ok(())
    }

    pub fn epochs_per_day(&self) -> Result<usize> {
        if self.delta_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(self.delta_minutes) {
            return Err(Error::InvalidConfig("epoch length must divide a day evenly".into()));
        }
        Ok((MINUTES_PER_DAY / self.delta_minutes) as usize)
    }

    pub fn epochs_per_week(&self) -> Result<usize> {
        Ok(7 * self.epochs_per_day()?)
    }

    pub fn max_horizon(&self) -> usize {
        self.horizons.iter().copied().max().unwrap_or(0) as usize
    }
}

/// Cells x epochs matrix of counts, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DensityMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u16>,
}

impl DensityMatrix {
    fn from_columns(series: &DensitySeries, start: usize, cols: usize) -> Self {
        let rows = series.grid.cells();
        let mut data = alloc::vec![0u16; rows * cols];
        for k in 0..cols {
            for (r, &v) in series.column(start + k).iter().enumerate() {
                data[r * cols + k] = v;
            }
        }
        DensityMatrix { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(DensityMatrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.data[row * self.cols + col]
    }

    pub fn column(&self, col: usize) -> Vec<u16> {
        (0..self.rows).map(|r| self.get(r, col)).collect()
    }

    pub fn row_major(&self) -> &[u16] {
        &self.data
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Label {
    pub horizon: u32,
    pub epoch: u32,
    pub values: Vec<u16>,
}

/// One training sample. `daily`/`weekly` are `None` when the series does not
/// reach back far enough for them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowMatrices {
    pub target_epoch: u32,
    pub current: DensityMatrix,
    pub daily: Option<DensityMatrix>,
    pub weekly: Option<DensityMatrix>,
    pub labels: Vec<Label>,
}

impl FlowMatrices {
    pub fn is_complete(&self) -> bool {
        self.daily.is_some() && self.weekly.is_some()
    }

    /// Latest epoch that feeds any input matrix of this sample.
    pub fn latest_input_epoch(&self, cfg: &WindowConfig) -> Result<u32> {
        let day = cfg.epochs_per_day()? as u32;
        let week = cfg.epochs_per_week()? as u32;
        let n = cfg.n as u32;
        let mut latest = self.target_epoch;
        if self.daily.is_some() {
            latest = latest.max(self.target_epoch - day + n);
        }
        if self.weekly.is_some() {
            latest = latest.max(self.target_epoch - week + n);
        }
        Ok(latest)
    }
}

/// Lazily emits one sample per admissible target epoch, in order.
///
/// A target is admissible when the current window and every label fit in
/// the series. Fails with `SeriesTooShort` if no target is admissible.
pub fn build_windows<'a>(
    series: &'a DensitySeries,
    cfg: &'a WindowConfig,
) -> Result<impl Iterator<Item = FlowMatrices> + 'a> {
    cfg.validate()?;
    if cfg.delta_minutes != series.delta_minutes {
        return Err(Error::InvalidConfig("window and series epoch lengths differ".into()));
    }
    let day = cfg.epochs_per_day()?;
    let week = cfg.epochs_per_week()?;
    let n = cfg.n;
    let len = series.len();
    let first = n;
    let max_h = cfg.max_horizon();
    if len <= first + max_h {
        return Err(Error::SeriesTooShort);
    }
    let last = len - 1 - max_h;
    let base_epoch = series.first_epoch().unwrap_or(0);

    Ok((first..=last).map(move |ts| {
        let periodic = |offset: usize| {
            (ts >= offset + n).then(|| DensityMatrix::from_columns(series, ts - offset - n, 2 * n + 1))
        };
        FlowMatrices {
            target_epoch: base_epoch + ts as u32,
            current: DensityMatrix::from_columns(series, ts - n, n + 1),
            daily: periodic(day),
            weekly: periodic(week),
            labels: cfg
                .horizons
                .iter()
                .map(|&h| Label {
                    horizon: h,
                    epoch: base_epoch + ts as u32 + h,
                    values: series.column(ts + h as usize).to_vec(),
                })
                .collect(),
        }
    }))
}

/// Sample counts of a chronological train/validation/test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitSizes {
    pub fn ranges(&self) -> [core::ops::Range<usize>; 3] {
        let a = self.train;
        let b = a + self.val;
        [0..a, a..b, b..b + self.test]
    }
}

/// Splits `total` samples chronologically. Fractions must sum to 1; every
/// split must end up non-empty.
pub fn chronological_split(total: usize, fractions: (f64, f64, f64)) -> Result<SplitSizes> {
    let (tr, va, te) = fractions;
    if [tr, va, te].iter().any(|f| !(0.0..=1.0).contains(f)) || libm::fabs(tr + va + te - 1.0) > 1e-9 {
        return Err(Error::InvalidConfig("split fractions must be in [0, 1] and sum to 1".into()));
    }
    let train = libm::round(tr * total as f64) as usize;
    let val = (libm::round(va * total as f64) as usize).min(total - train.min(total));
    let train = train.min(total);
    let test = total - train - val;
    for (size, name) in [(train, "train"), (val, "validation"), (test, "test")] {
        if size == 0 {
            return Err(Error::EmptySplit(name));
        }
    }
    Ok(SplitSizes { train, val, test })
}
