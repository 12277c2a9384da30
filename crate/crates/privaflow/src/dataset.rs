//! Forecaster dataset: `train.bin`, `val.bin`, `test.bin` and `manifest.json`.
//!
//! Each split file is little-endian:
//!
//! ```text
//! magic    b"PFDS"
//! version  u16
//! cells    u32        L
//! n        u32        window half-width
//! count    u32        samples in this file
//! n_h      u16
//! horizons n_h x u32
//! count x sample:
//!   target_epoch u32
//!   current      f32[L][n + 1]
//!   daily        f32[L][2n + 1]
//!   weekly       f32[L][2n + 1]
//!   labels       f32[n_h][L]
//! ```
//!
//! Matrices are row-major with one row per cell. Values are raw counts;
//! per-cell scale factors for normalization are listed in the manifest.
//! Only samples with both daily and weekly windows are exported.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use privaflow_core::matrices::{chronological_split, DensityMatrix, SplitSizes};
use privaflow_core::{build_windows, DensitySeries, FlowMatrices, GridSpec, WindowConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::density_io::{read_json, write_json};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"PFDS";
pub const VERSION: u16 = 1;
pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u16,
    pub grid: GridSpec,
    pub cells: usize,
    pub delta_minutes: u32,
    pub window: WindowInfo,
    pub series: SeriesInfo,
    pub split_fractions: (f64, f64, f64),
    pub samples: usize,
    /// Admissible targets dropped for lacking a daily or weekly window.
    pub skipped_incomplete: usize,
    pub splits: Vec<SplitInfo>,
    pub normalization: Normalization,
    /// SHA-256 over the split file digests, in split order.
    pub dataset_sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowInfo {
    pub n: usize,
    pub horizons: Vec<u32>,
    pub epochs_per_day: usize,
    pub epochs_per_week: usize,
    pub current_cols: usize,
    pub periodic_cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesInfo {
    pub first_epoch: u32,
    pub n_epochs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub name: String,
    pub file: String,
    pub samples: usize,
    pub first_target_epoch: u32,
    pub last_target_epoch: u32,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub method: String,
    /// Inclusive epoch range the maxima were taken over.
    pub source_epochs: (u32, u32),
    /// Divide cell `i` by `scale[i]` to map it into [0, 1]. Cells that are
    /// empty throughout the source range get scale 1.
    pub scale: Vec<f32>,
}

/// One decoded sample, laid out as in the file.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub target_epoch: u32,
    pub current: Vec<f32>,
    pub daily: Vec<f32>,
    pub weekly: Vec<f32>,
    pub labels: Vec<Vec<f32>>,
}

impl Sample {
    /// Panics on an incomplete sample; only complete ones are exported.
    pub fn from_matrices(m: &FlowMatrices) -> Self {
        let f = |d: &DensityMatrix| d.row_major().iter().map(|&v| f32::from(v)).collect::<Vec<f32>>();
        Sample {
            target_epoch: m.target_epoch,
            current: f(&m.current),
            daily: f(m.daily.as_ref().expect("complete sample")),
            weekly: f(m.weekly.as_ref().expect("complete sample")),
            labels: m
                .labels
                .iter()
                .map(|l| l.values.iter().map(|&v| f32::from(v)).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitHeader {
    pub cells: usize,
    pub n: usize,
    pub count: usize,
    pub horizons: Vec<u32>,
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_split(
    path: &Path,
    cells: usize,
    cfg: &WindowConfig,
    count: usize,
    samples: impl Iterator<Item = FlowMatrices>,
) -> Result<String> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = HashingWriter {
        inner: BufWriter::new(file),
        hasher: Sha256::new(),
    };
    let res: io::Result<()> = (|| {
        w.write_all(&MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(cells as u32).to_le_bytes())?;
        w.write_all(&(cfg.n as u32).to_le_bytes())?;
        w.write_all(&(count as u32).to_le_bytes())?;
        w.write_all(&(cfg.horizons.len() as u16).to_le_bytes())?;
        for h in &cfg.horizons {
            w.write_all(&h.to_le_bytes())?;
        }
        for m in samples {
            let s = Sample::from_matrices(&m);
            w.write_all(&s.target_epoch.to_le_bytes())?;
            write_f32s(&mut w, &s.current)?;
            write_f32s(&mut w, &s.daily)?;
            write_f32s(&mut w, &s.weekly)?;
            for l in &s.labels {
                write_f32s(&mut w, l)?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(w.hasher.finalize()))
}

/// Writes the three split files and the manifest into `dir`.
pub fn export_dataset(
    series: &DensitySeries,
    cfg: &WindowConfig,
    fractions: (f64, f64, f64),
    dir: &Path,
) -> Result<Manifest> {
    let cells = series.grid.cells();
    let targets: Vec<u32> = build_windows(series, cfg)?.map(|m| m.target_epoch).collect();
    let complete: Vec<u32> = build_windows(series, cfg)?
        .filter(FlowMatrices::is_complete)
        .map(|m| m.target_epoch)
        .collect();
    if complete.is_empty() {
        return Err(privaflow_core::Error::SeriesTooShort.into());
    }
    let sizes: SplitSizes = chronological_split(complete.len(), fractions)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut splits = Vec::with_capacity(3);
    for (name, range) in SPLIT_NAMES.iter().zip(sizes.ranges()) {
        let file = format!("{name}.bin");
        let first = complete[range.start];
        let last = complete[range.end - 1];
        let samples = build_windows(series, cfg)?
            .filter(FlowMatrices::is_complete)
            .skip(range.start)
            .take(range.len());
        let sha256 = write_split(&dir.join(&file), cells, cfg, range.len(), samples)?;
        splits.push(SplitInfo {
            name: name.to_string(),
            file,
            samples: range.len(),
            first_target_epoch: first,
            last_target_epoch: last,
            sha256,
        });
    }

    let mut h = Sha256::new();
    for s in &splits {
        h.update(s.sha256.as_bytes());
    }

    let base = series.first_epoch().unwrap_or(0);
    let norm_end = splits[0].last_target_epoch + cfg.max_horizon() as u32;
    let mut scale = vec![0u16; cells];
    for idx in 0..=(norm_end - base) as usize {
        for (m, &v) in scale.iter_mut().zip(series.column(idx)) {
            *m = (*m).max(v);
        }
    }

    let manifest = Manifest {
        format: "privaflow-dataset".into(),
        version: VERSION,
        grid: series.grid.clone(),
        cells,
        delta_minutes: series.delta_minutes,
        window: WindowInfo {
            n: cfg.n,
            horizons: cfg.horizons.clone(),
            epochs_per_day: cfg.epochs_per_day()?,
            epochs_per_week: cfg.epochs_per_week()?,
            current_cols: cfg.n + 1,
            periodic_cols: 2 * cfg.n + 1,
        },
        series: SeriesInfo {
            first_epoch: base,
            n_epochs: series.len(),
        },
        split_fractions: fractions,
        samples: complete.len(),
        skipped_incomplete: targets.len() - complete.len(),
        splits,
        normalization: Normalization {
            method: "per_cell_max".into(),
            source_epochs: (base, norm_end),
            scale: scale.iter().map(|&m| if m == 0 { 1.0 } else { f32::from(m) }).collect(),
        },
        dataset_sha256: hex::encode(h.finalize()),
    };
    write_json(&dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST))
}

fn read_exact<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f32s(r: &mut impl Read, len: usize) -> io::Result<Vec<f32>> {
    (0..len).map(|_| read_exact::<4>(r).map(f32::from_le_bytes)).collect()
}

/// Reads one split file back.
pub fn read_split(path: &Path) -> Result<(SplitHeader, Vec<Sample>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| Error::format(path, msg);
    let io_err = |e: io::Error| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(path, "truncated dataset file")
        } else {
            Error::io(path, e)
        }
    };

    if read_exact::<4>(&mut r).map_err(io_err)? != MAGIC {
        return Err(bad("bad magic"));
    }
    if u16::from_le_bytes(read_exact(&mut r).map_err(io_err)?) != VERSION {
        return Err(bad("unsupported version"));
    }
    let cells = u32::from_le_bytes(read_exact(&mut r).map_err(io_err)?) as usize;
    let n = u32::from_le_bytes(read_exact(&mut r).map_err(io_err)?) as usize;
    let count = u32::from_le_bytes(read_exact(&mut r).map_err(io_err)?) as usize;
    let n_h = u16::from_le_bytes(read_exact(&mut r).map_err(io_err)?) as usize;
    let horizons = (0..n_h)
        .map(|_| read_exact::<4>(&mut r).map(u32::from_le_bytes))
        .collect::<io::Result<Vec<_>>>()
        .map_err(io_err)?;

    let mut samples = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let target_epoch = u32::from_le_bytes(read_exact(&mut r).map_err(io_err)?);
        let current = read_f32s(&mut r, cells * (n + 1)).map_err(io_err)?;
        let daily = read_f32s(&mut r, cells * (2 * n + 1)).map_err(io_err)?;
        let weekly = read_f32s(&mut r, cells * (2 * n + 1)).map_err(io_err)?;
        let labels = (0..n_h)
            .map(|_| read_f32s(&mut r, cells))
            .collect::<io::Result<Vec<_>>>()
            .map_err(io_err)?;
        samples.push(Sample {
            target_epoch,
            current,
            daily,
            weekly,
            labels,
        });
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
        return Err(bad("trailing bytes after last sample"));
    }
    Ok((
        SplitHeader {
            cells,
            n,
            count,
            horizons,
        },
        samples,
    ))
}

/// SHA-256 of a file, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    io::copy(&mut f, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(len: usize) -> DensitySeries {
        let grid = GridSpec::new(1, 3, 10.0).unwrap();
        DensitySeries::from_densities(
            grid,
            60,
            (0..len).map(|t| (0..3u16).map(|c| ((t * 3 + c as usize) % 97) as u16).collect()),
        )
        .unwrap()
    }

    fn hourly() -> WindowConfig {
        WindowConfig {
            n: 2,
            delta_minutes: 60,
            horizons: vec![1, 3],
        }
    }

    #[test]
    fn round_trip_matches_windows() {
        let dir = tempfile::tempdir().unwrap();
        let s = series(24 * 7 + 60);
        let cfg = hourly();
        let m = export_dataset(&s, &cfg, (0.6, 0.2, 0.2), dir.path()).unwrap();
        let expected: Vec<Sample> = build_windows(&s, &cfg)
            .unwrap()
            .filter(FlowMatrices::is_complete)
            .map(|m| Sample::from_matrices(&m))
            .collect();
        assert_eq!(m.samples, expected.len());
        let mut all = Vec::new();
        for info in &m.splits {
            let path = dir.path().join(&info.file);
            let (hdr, samples) = read_split(&path).unwrap();
            assert_eq!((hdr.cells, hdr.n, hdr.count), (3, 2, info.samples));
            assert_eq!(hdr.horizons, vec![1, 3]);
            assert_eq!(file_sha256(&path).unwrap(), info.sha256);
            all.extend(samples);
        }
        assert_eq!(all, expected);
        assert_eq!(read_manifest(dir.path()).unwrap(), m);
    }

    #[test]
    fn too_short_for_weekly_window() {
        let dir = tempfile::tempdir().unwrap();
        let err = export_dataset(&series(24 * 7), &hourly(), (0.6, 0.2, 0.2), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Protocol(privaflow_core::Error::SeriesTooShort)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn empty_split_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let err = export_dataset(&series(24 * 7 + 6), &hourly(), (0.7, 0.1, 0.2), dir.path()).unwrap_err();
        assert!(matches!(err, Error::Protocol(privaflow_core::Error::EmptySplit(_))));
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = export_dataset(&series(24 * 7 + 60), &hourly(), (0.6, 0.2, 0.2), dir.path()).unwrap();
        let path = dir.path().join(&m.splits[0].file);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_split(&path), Err(Error::Format { .. })));
        let mut extra = bytes.clone();
        extra.push(0);
        fs::write(&path, extra).unwrap();
        assert!(matches!(read_split(&path), Err(Error::Format { .. })));
        fs::write(&path, b"XXXX").unwrap();
        assert!(matches!(read_split(&path), Err(Error::Format { .. })));
    }
}
