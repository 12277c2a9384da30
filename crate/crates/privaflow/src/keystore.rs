//! Key material on disk.
//!
//! ```text
//! keys/
//!   keyset.json        fleet size, group, pool size
//!   mpk.bin            master public key
//!   dk.bin             functional key for y = (1, ..., 1)
//!   driver_0001.key    one per driver
//!   pool_0001.bin      encrypted zeros deposited by each driver
//! ```
//!
//! The master secret is never written; it exists only during keygen.

use std::fs;
use std::path::{Path, PathBuf};

use privaflow_core::group::RISTRETTO255;
use privaflow_core::ipfe::DriverId;
use privaflow_core::mobility_sim::Provisioned;
use privaflow_core::{provision, provision_zero_pool, wire, Encryptor, FunctionalKey, GroupParams, MasterPublic, ZeroPool};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density_io::{read_json, write_json};
use crate::error::{Error, Result};

const KEYGEN_STREAM: u64 = 1 << 48;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeysetInfo {
    pub group: String,
    pub n_drivers: usize,
    /// Zero ciphertexts deposited per driver.
    pub pool_size: usize,
    /// `seeded` for reproducible simulation keys, `os` for OS entropy.
    pub entropy: String,
}

/// Keys and pool for one fleet, as loaded by the aggregator and drivers.
pub struct Keyset {
    pub info: KeysetInfo,
    pub mpk: MasterPublic,
    pub dk: FunctionalKey,
    pub encryptors: Vec<Encryptor>,
    pub pool: ZeroPool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entropy {
    Seeded(u64),
    Os,
}

pub fn driver_key_file(id: DriverId) -> String {
    format!("driver_{:04}.key", id.0)
}

pub fn pool_file(id: DriverId) -> String {
    format!("pool_{:04}.bin", id.0)
}

fn driver_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn deposit_pools<F, R>(p: &Provisioned, pool_size: usize, rng_for: F) -> Result<ZeroPool>
where
    F: Fn(usize) -> R + Sync,
    R: RngCore + CryptoRng,
{
    let entries: Vec<_> = p
        .encryptors
        .par_iter()
        .enumerate()
        .map(|(i, enc)| provision_zero_pool(enc, pool_size, &mut rng_for(i)))
        .collect();
    let mut pool = ZeroPool::new(p.encryptors.len());
    for (i, e) in entries.into_iter().enumerate() {
        pool.deposit(DriverId::from_index(i), e)?;
    }
    Ok(pool)
}

/// Runs setup for `n_drivers` and has every driver deposit `pool_size` zeros.
pub fn generate(params: &GroupParams, n_drivers: usize, pool_size: usize, entropy: Entropy) -> Result<Keyset> {
    let (p, pool) = match entropy {
        Entropy::Seeded(seed) => {
            let p = provision(params, n_drivers, &mut driver_rng(seed, KEYGEN_STREAM))?;
            let pool = deposit_pools(&p, pool_size, |i| driver_rng(seed, KEYGEN_STREAM + 1 + i as u64))?;
            (p, pool)
        }
        Entropy::Os => {
            let p = provision(params, n_drivers, &mut rand::rngs::OsRng)?;
            let pool = deposit_pools(&p, pool_size, |_| rand::rngs::OsRng)?;
            (p, pool)
        }
    };
    Ok(Keyset {
        info: KeysetInfo {
            group: params.name().into(),
            n_drivers,
            pool_size,
            entropy: match entropy {
                Entropy::Seeded(_) => "seeded".into(),
                Entropy::Os => "os".into(),
            },
        },
        mpk: p.mpk,
        dk: p.dk,
        encryptors: p.encryptors,
        pool,
    })
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: PathBuf) -> Result<Vec<u8>> {
    fs::read(&path).map_err(|e| Error::io(path, e))
}

/// Writes `keys` into `dir`, creating it if needed.
pub fn save(keys: &Keyset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("keyset.json"), &keys.info)?;
    write(dir.join("mpk.bin"), &wire::encode_master_public(&keys.mpk))?;
    write(dir.join("dk.bin"), &wire::encode_functional_key(&keys.dk))?;
    for enc in &keys.encryptors {
        let id = enc.driver_id();
        write(dir.join(driver_key_file(id)), &wire::encode_driver_key(enc.key()))?;
        let entries: Vec<_> = keys
            .pool
            .queue(id)
            .map(|q| q.iter().copied().collect())
            .unwrap_or_default();
        write(dir.join(pool_file(id)), &wire::encode_pool(id, &entries))?;
    }
    Ok(())
}

/// Loads a keyset written by [`save`] and checks that its parts agree.
pub fn load(dir: &Path) -> Result<Keyset> {
    let info: KeysetInfo = read_json(&dir.join("keyset.json"))?;
    fn decode<T>(dir: &Path, file: &str, parse: fn(&[u8]) -> privaflow_core::Result<T>) -> Result<T> {
        parse(&read(dir.join(file))?).map_err(|e| Error::format(dir.join(file), e))
    }

    let mpk: MasterPublic = decode(dir, "mpk.bin", wire::decode_master_public)?;
    let dk: FunctionalKey = decode(dir, "dk.bin", wire::decode_functional_key)?;
    let n = info.n_drivers;
    if mpk.n_drivers() != n || dk.n_drivers() != n || mpk.params.group_id != RISTRETTO255 {
        return Err(Error::format(dir, "keyset.json, mpk.bin and dk.bin disagree"));
    }

    let loaded: Vec<(Encryptor, Vec<_>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let id = DriverId::from_index(i);
            let kf = driver_key_file(id);
            let key = decode(dir, &kf, wire::decode_driver_key)?;
            let public = &mpk.records[i];
            if key.driver_id != id || key.a_vec != public.a_vec || key.wa != public.wa {
                return Err(Error::format(dir.join(&kf), "driver key does not match mpk.bin"));
            }
            let pf = pool_file(id);
            let (owner, entries) = decode(dir, &pf, wire::decode_pool)?;
            if owner != id {
                return Err(Error::format(dir.join(&pf), "pool belongs to another driver"));
            }
            Ok((Encryptor::new(key), entries))
        })
        .collect::<Result<_>>()?;

    let mut pool = ZeroPool::new(n);
    let mut encryptors = Vec::with_capacity(n);
    for (i, (enc, entries)) in loaded.into_iter().enumerate() {
        pool.deposit(DriverId::from_index(i), entries)?;
        encryptors.push(enc);
    }
    Ok(Keyset {
        info,
        mpk,
        dk,
        encryptors,
        pool,
    })
}
