//! Seeded synthetic fleet and the end-to-end reporting pipeline.
//!
//! Drivers follow random-waypoint mobility on the grid. Waypoints are drawn
//! from a "downtown" block with a probability that peaks once a day and is
//! damped on weekends, which gives the density series daily and weekly
//! structure.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use rand_core::{CryptoRng, RngCore};

use crate::aggregator::{collect_epoch, DensitySeries};
use crate::error::{Error, Result};
use crate::grid_report::{build_report, provision_zero_pool, CellId, GridSpec, Report, ZeroPool};
use crate::group::{DlogTable, GroupParams};
use crate::ipfe::{
    derive_driver_key, derive_functional_key, ones, setup, DriverId, Encryptor, FunctionalKey, MasterPublic,
    MasterSecret,
};
use crate::par;

const MINUTES_PER_DAY: u32 = 24 * 60;

/// Block of cells drivers are drawn toward during the daily peak.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Downtown {
    pub row: u16,
    pub col: u16,
    pub rows: u16,
    pub cols: u16,
    /// Peak probability that a new waypoint lies downtown.
    pub strength: f64,
    /// Hour of day (0..24) with the strongest pull.
    pub peak_hour: f64,
    /// Multiplier applied to the pull on days 5 and 6 of each week.
    pub weekend_factor: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FleetConfig {
    pub n_drivers: u32,
    pub grid: GridSpec,
    pub k_anon: u16,
    pub delta_minutes: u32,
    pub n_epochs: u32,
    pub seed: u64,
    pub speed_mps_range: (f64, f64),
    pub report_probability: f64,
    pub downtown: Downtown,
}

impl Default for FleetConfig {
    fn default() -> Self {
        FleetConfig {
            n_drivers: 200,
            grid: GridSpec {
                rows: 8,
                cols: 10,
                cell_size_m: 1000.0,
                origin: (0.0, 0.0),
            },
            k_anon: 5,
            delta_minutes: 5,
            n_epochs: 100,
            seed: 0,
            speed_mps_range: (5.0, 15.0),
            report_probability: 1.0,
            downtown: Downtown {
                row: 3,
                col: 4,
                rows: 2,
                cols: 2,
                strength: 0.8,
                peak_hour: 17.0,
                weekend_factor: 0.4,
            },
        }
    }
}

impl FleetConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let cells = self.grid.cells();
        if self.k_anon == 0 || self.k_anon as usize > cells {
            return Err(Error::AnonymityTooLarge {
                k: self.k_anon as usize,
                cells,
            });
        }
        if !(self.report_probability > 0.0 && self.report_probability <= 1.0) {
            return Err(Error::InvalidConfig("report probability must lie in (0, 1]".into()));
        }
        if self.delta_minutes == 0 || !MINUTES_PER_DAY.is_multiple_of(self.delta_minutes) {
            return Err(Error::InvalidConfig("epoch length must divide a day evenly".into()));
        }
        let (lo, hi) = self.speed_mps_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidConfig("speed range must be positive and ordered".into()));
        }
        let d = &self.downtown;
        if d.rows == 0
            || d.cols == 0
            || d.row as u32 + d.rows as u32 > self.grid.rows as u32
            || d.col as u32 + d.cols as u32 > self.grid.cols as u32
        {
            return Err(Error::InvalidConfig("downtown block must lie inside the grid".into()));
        }
        if !(0.0..=1.0).contains(&d.strength) || !(0.0..=1.0).contains(&d.weekend_factor) {
            return Err(Error::InvalidConfig("downtown strength and weekend factor must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn epochs_per_day(&self) -> u32 {
        MINUTES_PER_DAY / self.delta_minutes
    }

    /// Probability that a waypoint chosen during `epoch` lies downtown.
    pub fn attraction(&self, epoch: u32) -> f64 {
        let minutes = epoch as u64 * self.delta_minutes as u64;
        let day = (minutes / MINUTES_PER_DAY as u64) % 7;
        let hour = (minutes % MINUTES_PER_DAY as u64) as f64 / 60.0;
        let d = &self.downtown;
        let daily = 0.5 + 0.5 * libm::cos(2.0 * PI * (hour - d.peak_hour) / 24.0);
        let weekly = if day >= 5 { d.weekend_factor } else { 1.0 };
        d.strength * daily * weekly
    }
}

/// Simulator-side truth: where every driver was at every epoch.
///
/// This is exactly what the protocol hides from the aggregator; it exists to
/// check the decrypted output.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub grid: GridSpec,
    pub delta_minutes: u32,
    /// `positions[epoch][driver]`, local meters.
    pub positions: Vec<Vec<(f64, f64)>>,
    /// `cells[epoch][driver]`.
    pub cells: Vec<Vec<CellId>>,
    /// `density[epoch][cell]`.
    pub density: Vec<Vec<u16>>,
}

impl GroundTruth {
    pub fn n_epochs(&self) -> usize {
        self.density.len()
    }

    pub fn to_series(&self) -> Result<DensitySeries> {
        DensitySeries::from_densities(self.grid.clone(), self.delta_minutes, self.density.iter().cloned())
    }
}

#[derive(Clone, Debug)]
struct Walker {
    pos: (f64, f64),
    waypoint: (f64, f64),
    speed: f64,
    rng: ChaCha8Rng,
}

fn uniform_point<R: Rng>(rng: &mut R, x0: f64, y0: f64, w: f64, h: f64, max: (f64, f64)) -> (f64, f64) {
    let x = x0 + rng.gen::<f64>() * w;
    let y = y0 + rng.gen::<f64>() * h;
    // keep strictly inside the half-open grid box
    (x.min(max.0.next_down()), y.min(max.1.next_down()))
}

impl Walker {
    fn pick_waypoint(&mut self, cfg: &FleetConfig, attraction: f64) {
        let g = &cfg.grid;
        let max = (g.width_m(), g.height_m());
        let size = g.cell_size_m;
        let d = &cfg.downtown;
        self.waypoint = if self.rng.gen_bool(attraction.clamp(0.0, 1.0)) {
            uniform_point(
                &mut self.rng,
                d.col as f64 * size,
                d.row as f64 * size,
                d.cols as f64 * size,
                d.rows as f64 * size,
                max,
            )
        } else {
            uniform_point(&mut self.rng, 0.0, 0.0, max.0, max.1, max)
        };
        let (lo, hi) = cfg.speed_mps_range;
        self.speed = if lo < hi { self.rng.gen_range(lo..hi) } else { lo };
    }

    fn step(&mut self, cfg: &FleetConfig, attraction: f64) {
        let reach = self.speed * cfg.delta_minutes as f64 * 60.0;
        let dx = self.waypoint.0 - self.pos.0;
        let dy = self.waypoint.1 - self.pos.1;
        let dist = libm::hypot(dx, dy);
        if dist <= reach {
            self.pos = self.waypoint;
            self.pick_waypoint(cfg, attraction);
        } else {
            let f = reach / dist;
            let max = (cfg.grid.width_m().next_down(), cfg.grid.height_m().next_down());
            self.pos = (
                (self.pos.0 + dx * f).clamp(0.0, max.0),
                (self.pos.1 + dy * f).clamp(0.0, max.1),
            );
        }
    }
}

/// Runs the mobility model. Fully determined by `cfg` (including its seed).
pub fn simulate(cfg: &FleetConfig) -> Result<GroundTruth> {
    cfg.validate()?;
    let g = &cfg.grid;
    let mut walkers: Vec<Walker> = (0..cfg.n_drivers as u64)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i);
            let max = (g.width_m(), g.height_m());
            let pos = uniform_point(&mut rng, 0.0, 0.0, max.0, max.1, max);
            let mut w = Walker {
                pos,
                waypoint: pos,
                speed: cfg.speed_mps_range.0,
                rng,
            };
            w.pick_waypoint(cfg, cfg.attraction(0));
            w
        })
        .collect();

    let n_epochs = cfg.n_epochs as usize;
    let mut positions = Vec::with_capacity(n_epochs);
    let mut cells = Vec::with_capacity(n_epochs);
    let mut density = Vec::with_capacity(n_epochs);
    for epoch in 0..cfg.n_epochs {
        let pos: Vec<(f64, f64)> = walkers.iter().map(|w| w.pos).collect();
        let located: Vec<CellId> = pos.iter().map(|&(x, y)| g.locate(x, y)).collect::<Result<_>>()?;
        let mut counts = alloc::vec![0u16; g.cells()];
        for c in &located {
            counts[c.0 as usize] += 1;
        }
        positions.push(pos);
        cells.push(located);
        density.push(counts);

        let attraction = cfg.attraction(epoch + 1);
        par::map_mut(&mut walkers, |_, w| w.step(cfg, attraction));
    }

    Ok(GroundTruth {
        grid: g.clone(),
        delta_minutes: cfg.delta_minutes,
        positions,
        cells,
        density,
    })
}

/// Everything the key distribution center hands out for one fleet.
#[derive(Clone, Debug)]
pub struct Provisioned {
    pub mpk: MasterPublic,
    pub msk: MasterSecret,
    pub encryptors: Vec<Encryptor>,
    /// Functional key for the all-ones vector.
    pub dk: FunctionalKey,
}

/// Runs setup, derives every driver key and the all-ones functional key.
pub fn provision<R: RngCore + CryptoRng>(params: &GroupParams, n_drivers: usize, rng: &mut R) -> Result<Provisioned> {
    let (mpk, msk) = setup(params, n_drivers, rng)?;
    let keys = (0..n_drivers)
        .map(|i| derive_driver_key(&mpk, &msk, DriverId::from_index(i)))
        .collect::<Result<Vec<_>>>()?;
    let encryptors = par::map(&keys, |k| Encryptor::new(k.clone()));
    let dk = derive_functional_key(&msk, &ones(n_drivers))?;
    Ok(Provisioned {
        mpk,
        msk,
        encryptors,
        dk,
    })
}

/// How the aggregator's zero pool is refilled during a pipeline run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolPolicy {
    /// Use only what was deposited up front.
    Fixed,
    /// Before every epoch each driver tops its queue up to this many entries.
    TopUp(usize),
}

/// Stream offset separating driver encryption randomness from mobility.
const CRYPTO_STREAM: u64 = 1 << 32;

/// Simulates the fleet and pushes every epoch through encrypted reporting
/// and aggregate decryption.
///
/// Returns the decrypted series next to the ground truth it should match.
/// Report and padding randomness is seeded from `cfg.seed` so the output is
/// reproducible; it is not suitable for deployment keys.
pub fn run_pipeline(
    cfg: &FleetConfig,
    encryptors: &[Encryptor],
    dk: &FunctionalKey,
    table: &DlogTable,
    pool: &mut ZeroPool,
    policy: PoolPolicy,
) -> Result<(DensitySeries, GroundTruth)> {
    let truth = simulate(cfg)?;
    let n = cfg.n_drivers as usize;
    if encryptors.len() != n || dk.n_drivers() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: encryptors.len().min(dk.n_drivers()),
        });
    }
    let k = cfg.k_anon as usize;
    let grid = &cfg.grid;

    let mut rngs: Vec<ChaCha20Rng> = (0..n as u64)
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            rng.set_stream(CRYPTO_STREAM + i);
            rng
        })
        .collect();

    let mut series = DensitySeries::new(grid.clone(), cfg.delta_minutes);
    for epoch in 0..cfg.n_epochs {
        if let PoolPolicy::TopUp(level) = policy {
            let fresh = par::map_mut(&mut rngs, |i, rng| {
                let missing = level.saturating_sub(pool.available(DriverId::from_index(i)));
                provision_zero_pool(&encryptors[i], missing, rng)
            });
            for (i, entries) in fresh.into_iter().enumerate() {
                pool.deposit(DriverId::from_index(i), entries)?;
            }
        }

        let cells = &truth.cells[epoch as usize];
        let reports: Vec<Option<Report>> = par::map_mut(&mut rngs, |i, rng| {
            if !rng.gen_bool(cfg.report_probability) {
                return Ok(None);
            }
            build_report(&encryptors[i], cells[i], k, grid, epoch, rng).map(Some)
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let reports: Vec<Report> = reports.into_iter().flatten().collect();

        let agg = collect_epoch(&reports, dk, pool, table, grid.cells(), epoch)?;
        series.push(agg)?;
    }
    Ok((series, truth))
}
