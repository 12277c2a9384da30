//! Density series on disk: `density.csv` plus a `density.json` sidecar.
//!
//! The CSV has header `epoch,cell_0,...,cell_{L-1}` and one row per epoch.
//! The sidecar carries the grid and the epoch length.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use privaflow_core::{DensitySeries, GridSpec, GroundTruth};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT: &str = "privaflow-density";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub grid: GridSpec,
    pub delta_minutes: u32,
    pub cells: usize,
    pub first_epoch: u32,
    pub n_epochs: usize,
}

/// Path of the sidecar belonging to a density CSV.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

/// Writes `series` to `csv_path` and its sidecar next to it.
pub fn write_series(series: &DensitySeries, csv_path: &Path) -> Result<()> {
    let cells = series.grid.cells();
    let mut w = csv::Writer::from_writer(create(csv_path)?);
    let header = std::iter::once("epoch".to_string()).chain((0..cells).map(|c| format!("cell_{c}")));
    w.write_record(header).map_err(|e| csv_err(csv_path, e))?;
    for agg in series.epochs() {
        let row = std::iter::once(agg.epoch.to_string()).chain(agg.density.iter().map(u16::to_string));
        w.write_record(row).map_err(|e| csv_err(csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let sidecar = Sidecar {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        grid: series.grid.clone(),
        delta_minutes: series.delta_minutes,
        cells,
        first_epoch: series.first_epoch().unwrap_or(0),
        n_epochs: series.len(),
    };
    write_json(&sidecar_path(csv_path), &sidecar)
}

/// Reads a series written by [`write_series`], checking it against the sidecar.
pub fn read_series(csv_path: &Path) -> Result<DensitySeries> {
    let sidecar: Sidecar = read_json(&sidecar_path(csv_path))?;
    if sidecar.format != FORMAT || sidecar.version != FORMAT_VERSION {
        return Err(Error::format(csv_path, "unsupported density sidecar format"));
    }
    if sidecar.grid.cells() != sidecar.cells {
        return Err(Error::format(csv_path, "sidecar cell count disagrees with its grid"));
    }
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let header = r.headers().map_err(|e| csv_err(csv_path, e))?.clone();
    let expected: Vec<String> =
        std::iter::once("epoch".to_string()).chain((0..sidecar.cells).map(|c| format!("cell_{c}"))).collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::format(csv_path, "header does not match the sidecar grid"));
    }

    let mut densities = Vec::with_capacity(sidecar.n_epochs);
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(csv_path, e))?;
        let parse = |s: &str| s.trim().parse::<u32>().map_err(|e| Error::format(csv_path, format!("row {i}: {e}")));
        let epoch = parse(&rec[0])?;
        if epoch != sidecar.first_epoch + i as u32 {
            return Err(Error::format(csv_path, format!("row {i}: epochs must be consecutive")));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.trim()
                    .parse::<u16>()
                    .map_err(|e| Error::format(csv_path, format!("row {i}: {e}")))
            })
            .collect::<Result<Vec<u16>>>()?;
        densities.push(row);
    }
    if densities.len() != sidecar.n_epochs {
        return Err(Error::format(
            csv_path,
            format!("sidecar lists {} epochs, file has {}", sidecar.n_epochs, densities.len()),
        ));
    }

    let mut series = DensitySeries::new(sidecar.grid.clone(), sidecar.delta_minutes);
    for (i, density) in densities.into_iter().enumerate() {
        series.push(privaflow_core::EpochAggregate {
            epoch: sidecar.first_epoch + i as u32,
            density,
            padded_count: 0,
        })?;
    }
    Ok(series)
}

/// Per-driver positions and cells, one row per (epoch, driver).
///
/// This is the unprotected location trace the protocol exists to hide. It is
/// debug output for auditing the simulator and must never leave the test bench.
pub fn write_ground_truth(truth: &GroundTruth, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["epoch", "driver_id", "x_m", "y_m", "cell"])
        .map_err(|e| csv_err(path, e))?;
    for (epoch, (pos, cells)) in truth.positions.iter().zip(&truth.cells).enumerate() {
        for (d, (&(x, y), cell)) in pos.iter().zip(cells).enumerate() {
            w.write_record([
                epoch.to_string(),
                (d + 1).to_string(),
                format!("{x:.3}"),
                format!("{y:.3}"),
                cell.0.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}
