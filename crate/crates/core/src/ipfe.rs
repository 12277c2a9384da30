//! Multi-client inner-product functional encryption.
//!
//! A key distribution center runs [`setup`] once for `n` drivers. Driver `i`
//! receives `pk_i = ([a_i], [W_i a_i], u_i)` with `a_i = (1, a_i)` and
//! encrypts a value `l` as
//!
//! ```text
//! t = [a_i r]            (two elements: g^r, g^(a_i r))
//! c = [l + u_i + W_i a_i r]
//! ```
//!
//! The holder of the functional key `dk = ({d_i = y_i W_i}, z = sum y_i u_i)`
//! combines exactly one ciphertext per driver:
//!
//! ```text
//! prod_i (c_i^(y_i) / [d_i . t_i]) / [z] = [sum_i y_i l_i]
//! ```
//!
//! and recovers the (small) exponent with a lookup table.
//!
//! The blinding term `u_i` is reused across every ciphertext a driver
//! produces; only the nonce `r` is fresh.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand_core::{CryptoRng, RngCore};

use crate::error::{Error, Result};
use crate::group::{DlogTable, FixedBase, GroupElement, GroupParams, Scalar};

/// One-based driver index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DriverId(pub u32);

impl DriverId {
    /// Zero-based slot of this driver in a fleet of `n`.
    pub fn index(self, n: usize) -> Result<usize> {
        let i = self.0 as usize;
        if i == 0 || i > n {
            return Err(Error::UnknownDriver(self));
        }
        Ok(i - 1)
    }

    pub fn from_index(idx: usize) -> Self {
        DriverId(idx as u32 + 1)
    }
}

impl fmt::Display for DriverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriverSecret {
    pub a: Scalar,
    pub w: [Scalar; 2],
    pub u: Scalar,
}

impl DriverSecret {
    /// `(1, a)`.
    pub fn a_vec(&self) -> [Scalar; 2] {
        [Scalar::ONE, self.a]
    }

    /// `W . (1, a)`.
    pub fn w_dot_a(&self) -> Scalar {
        self.w[0] + self.w[1] * self.a
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterSecret {
    pub records: Vec<DriverSecret>,
}

impl MasterSecret {
    pub fn n_drivers(&self) -> usize {
        self.records.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriverPublic {
    /// `[(1, a_i)]`; the first entry is always the generator.
    pub a_vec: [GroupElement; 2],
    /// `[W_i (1, a_i)]`.
    pub wa: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MasterPublic {
    pub params: GroupParams,
    pub records: Vec<DriverPublic>,
}

impl MasterPublic {
    pub fn n_drivers(&self) -> usize {
        self.records.len()
    }
}

/// Encryption key handed to one driver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DriverKey {
    pub driver_id: DriverId,
    pub params: GroupParams,
    pub a_vec: [GroupElement; 2],
    pub wa: GroupElement,
    pub u: Scalar,
}

/// Functional decryption key for the weight vector `y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalKey {
    pub y: Vec<Scalar>,
    pub d: Vec<[Scalar; 2]>,
    pub z: Scalar,
}

impl FunctionalKey {
    pub fn n_drivers(&self) -> usize {
        self.y.len()
    }
}

/// Encryption of one value by one driver.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellCiphertext {
    pub driver_id: DriverId,
    pub t: [GroupElement; 2],
    pub c: GroupElement,
}

/// Generates fresh per-driver secrets and the matching public records.
pub fn setup<R: RngCore + CryptoRng>(
    params: &GroupParams,
    n_drivers: usize,
    rng: &mut R,
) -> Result<(MasterPublic, MasterSecret)> {
    if n_drivers == 0 {
        return Err(Error::InvalidConfig("at least one driver is required".into()));
    }
    let mut secrets = Vec::with_capacity(n_drivers);
    let mut publics = Vec::with_capacity(n_drivers);
    for _ in 0..n_drivers {
        let s = DriverSecret {
            a: Scalar::random(rng),
            w: [Scalar::random(rng), Scalar::random(rng)],
            u: Scalar::random(rng),
        };
        publics.push(DriverPublic {
            a_vec: [GroupElement::generator(), GroupElement::exp_generator(&s.a)],
            wa: GroupElement::exp_generator(&s.w_dot_a()),
        });
        secrets.push(s);
    }
    Ok((
        MasterPublic {
            params: params.clone(),
            records: publics,
        },
        MasterSecret { records: secrets },
    ))
}

pub fn derive_driver_key(mpk: &MasterPublic, msk: &MasterSecret, id: DriverId) -> Result<DriverKey> {
    if mpk.n_drivers() != msk.n_drivers() {
        return Err(Error::LengthMismatch {
            expected: msk.n_drivers(),
            actual: mpk.n_drivers(),
        });
    }
    let idx = id.index(msk.n_drivers())?;
    let public = &mpk.records[idx];
    Ok(DriverKey {
        driver_id: id,
        params: mpk.params.clone(),
        a_vec: public.a_vec,
        wa: public.wa,
        u: msk.records[idx].u,
    })
}

/// `d_i = y_i W_i`, `z = sum_i y_i u_i`.
pub fn derive_functional_key(msk: &MasterSecret, y: &[Scalar]) -> Result<FunctionalKey> {
    if y.len() != msk.n_drivers() {
        return Err(Error::LengthMismatch {
            expected: msk.n_drivers(),
            actual: y.len(),
        });
    }
    let d = msk
        .records
        .iter()
        .zip(y)
        .map(|(s, &yi)| [yi * s.w[0], yi * s.w[1]])
        .collect();
    let z = msk.records.iter().zip(y).map(|(s, &yi)| yi * s.u).sum();
    Ok(FunctionalKey { y: y.to_vec(), d, z })
}

/// The all-ones weight vector; decrypts to per-cell driver counts.
pub fn ones(n: usize) -> Vec<Scalar> {
    vec![Scalar::ONE; n]
}

fn plaintext_term(plaintext: u64) -> Option<GroupElement> {
    match plaintext {
        0 => None,
        1 => Some(GroupElement::generator()),
        m => Some(GroupElement::exp_generator(&Scalar::from_u64(m))),
    }
}

/// Encrypts `plaintext` under `key` with a fresh nonce.
///
/// Protocol flows only encrypt occupancy bits; larger values are accepted as
/// long as the decryptor's lookup table covers the resulting sum.
pub fn encrypt<R: RngCore + CryptoRng>(key: &DriverKey, plaintext: u64, rng: &mut R) -> CellCiphertext {
    let r = Scalar::random(rng);
    let mut c = GroupElement::exp_generator(&key.u) * key.wa.exp(&r);
    if let Some(m) = plaintext_term(plaintext) {
        c = c * m;
    }
    CellCiphertext {
        driver_id: key.driver_id,
        t: [GroupElement::exp_generator(&r), key.a_vec[1].exp(&r)],
        c,
    }
}

/// A driver key with fixed-base tables for `[a_i]` and `[W_i a_i]`.
///
/// Produces the same distribution as [`encrypt`] at a fraction of the cost;
/// use it when a driver encrypts many cells.
#[derive(Clone, Debug)]
pub struct Encryptor {
    key: DriverKey,
    blind: GroupElement,
    a_table: FixedBase,
    wa_table: FixedBase,
}

impl Encryptor {
    pub fn new(key: DriverKey) -> Self {
        Encryptor {
            blind: GroupElement::exp_generator(&key.u),
            a_table: FixedBase::new(&key.a_vec[1]),
            wa_table: FixedBase::new(&key.wa),
            key,
        }
    }

    pub fn key(&self) -> &DriverKey {
        &self.key
    }

    pub fn driver_id(&self) -> DriverId {
        self.key.driver_id
    }

    pub fn encrypt<R: RngCore + CryptoRng>(&self, plaintext: u64, rng: &mut R) -> CellCiphertext {
        let r = Scalar::random(rng);
        let mut c = self.blind * self.wa_table.exp(&r);
        if let Some(m) = plaintext_term(plaintext) {
            c = c * m;
        }
        CellCiphertext {
            driver_id: self.key.driver_id,
            t: [GroupElement::exp_generator(&r), self.a_table.exp(&r)],
            c,
        }
    }
}

/// Orders `cts` by driver slot, rejecting gaps, duplicates and strangers.
fn slot_ciphertexts(n: usize, cts: &[CellCiphertext]) -> Result<Vec<&CellCiphertext>> {
    let mut slots: Vec<Option<&CellCiphertext>> = vec![None; n];
    for ct in cts {
        let idx = ct.driver_id.index(n)?;
        if slots[idx].replace(ct).is_some() {
            return Err(Error::DuplicateDriver(ct.driver_id));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or(Error::MissingDriver(DriverId::from_index(i))))
        .collect()
}

/// Computes `prod_i (c_i^(y_i) / [d_i . t_i]) / [z]`, which equals
/// `g^(sum_i y_i l_i)`.
///
/// Needs exactly one ciphertext per driver, in any order.
pub fn decrypt_element(dk: &FunctionalKey, cts: &[CellCiphertext]) -> Result<GroupElement> {
    let n = dk.n_drivers();
    let slots = slot_ciphertexts(n, cts)?;

    // Unit weights are the common case; fold those in with plain group ops.
    let mut acc = GroupElement::identity();
    let mut exps = Vec::with_capacity(3 * n);
    let mut bases = Vec::with_capacity(3 * n);
    for ((ct, &y), d) in slots.iter().zip(&dk.y).zip(&dk.d) {
        if y == Scalar::ONE {
            acc = acc * ct.c;
        } else if !y.is_zero() {
            exps.push(y);
            bases.push(ct.c);
        }
        for (dk_k, t_k) in d.iter().zip(ct.t) {
            if !dk_k.is_zero() {
                exps.push(-*dk_k);
                bases.push(t_k);
            }
        }
    }
    exps.push(-dk.z);
    bases.push(GroupElement::generator());
    Ok(acc * GroupElement::multi_exp(&exps, &bases))
}

/// Recovers `sum_i y_i l_i` from one ciphertext per driver.
///
/// `table` bounds the answer; with `y` all ones and bit plaintexts a table
/// of bound `n` always suffices.
pub fn aggregate_decrypt(dk: &FunctionalKey, cts: &[CellCiphertext], table: &DlogTable) -> Result<u64> {
    table.recover(&decrypt_element(dk, cts)?)
}
