//! Privacy-preserving traffic density aggregation.
//!
//! Drivers encrypt per-cell occupancy bits under a multi-client
//! inner-product functional encryption scheme and hide their true cell among
//! `k - 1` encrypted-zero dummies. The aggregator holds a functional key that
//! only ever yields the per-cell sum over all drivers.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. `parallel` spreads per-cell decryption and per-driver work
//! over rayon.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod aggregator;
pub mod error;
pub mod grid_report;
pub mod group;
pub mod ipfe;
pub mod matrices;
pub mod mobility_sim;
mod par;
pub mod wire;

pub use aggregator::{assemble_columns, collect_epoch, decrypt_columns, DensitySeries, EpochAggregate};
pub use error::{Error, Result};
pub use grid_report::{build_report, provision_zero_pool, CellId, GridSpec, Report, ZeroPool};
pub use group::{group_gen, DlogTable, GroupElement, GroupParams, Scalar};
pub use ipfe::{
    aggregate_decrypt, derive_driver_key, derive_functional_key, encrypt, setup, CellCiphertext, DriverId, DriverKey,
    Encryptor, FunctionalKey, MasterPublic, MasterSecret,
};
pub use matrices::{build_windows, FlowMatrices, WindowConfig};
pub use mobility_sim::{provision, run_pipeline, simulate, FleetConfig, GroundTruth, PoolPolicy};
