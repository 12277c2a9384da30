use alloc::string::String;

use crate::grid_report::CellId;
use crate::ipfe::DriverId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unsupported security level: {0} bits")]
    UnsupportedSecurityLevel(u32),

    #[error("invalid encoding: {0}")]
    InvalidEncoding(&'static str),

    #[error("discrete log not found in [0, {bound}]")]
    NotInRange { bound: u64 },

    #[error("unknown driver {0}")]
    UnknownDriver(DriverId),

    #[error("no ciphertext from driver {0}")]
    MissingDriver(DriverId),

    #[error("more than one ciphertext from driver {0}")]
    DuplicateDriver(DriverId),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("position ({x}, {y}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("cell {0} is not part of the grid")]
    InvalidCell(CellId),

    #[error("anonymity set of {k} cells does not fit a grid of {cells} cells")]
    AnonymityTooLarge { k: usize, cells: usize },

    #[error("zero pool of driver {driver} exhausted: {needed} needed, {available} available")]
    PoolExhausted {
        driver: DriverId,
        needed: usize,
        available: usize,
    },

    #[error("driver {0} reported twice in one epoch")]
    DuplicateReport(DriverId),

    #[error("report for epoch {got} delivered to epoch {expected}")]
    WrongEpoch { expected: u32, got: u32 },

    #[error("epoch gap: expected epoch {expected}, got {got}")]
    EpochGap { expected: u32, got: u32 },

    #[error("series too short: no admissible target epoch")]
    SeriesTooShort,

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors caused by bad parameters rather than protocol state.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnsupportedSecurityLevel(_)
                | Error::AnonymityTooLarge { .. }
                | Error::InvalidConfig(_)
                | Error::EmptySplit(_)
                | Error::SeriesTooShort
        )
    }
}
