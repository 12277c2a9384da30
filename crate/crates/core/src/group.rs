//! Prime-order group used by the encryption scheme.
//!
//! The scheme is written multiplicatively (`[x] = g^x`), so [`GroupElement`]
//! exposes `*` and `/` as the group operation and its inverse, and
//! [`GroupElement::exp`] for exponentiation. Underneath sits ristretto255: a
//! prime-order group of order `2^252 + 27742317777372353535851937790883648493`
//! with canonical 32-byte encodings.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::iter::Sum;
use core::ops::{Add, Div, Mul, Neg, Sub};

use curve25519_dalek::constants::{RISTRETTO_BASEPOINT_COMPRESSED, RISTRETTO_BASEPOINT_TABLE};
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoBasepointTable, RistrettoPoint};
use curve25519_dalek::scalar::Scalar as RawScalar;
use curve25519_dalek::traits::{Identity, VartimeMultiscalarMul};
use rand_core::{CryptoRng, RngCore};

use crate::error::{Error, Result};

/// Bytes per serialized group element.
pub const ELEMENT_LEN: usize = 32;
/// Bytes per serialized scalar.
pub const SCALAR_LEN: usize = 32;

/// Little-endian encoding of the group order.
const RISTRETTO_ORDER_LE: [u8; 32] = [
    0xed, 0xd3, 0xf5, 0x5c, 0x1a, 0x63, 0x12, 0x58, 0xd6, 0x9c, 0xf7, 0xa2, 0xde, 0xf9, 0xde, 0x14,
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x10,
];

/// Identifier of the one concrete group this crate supports.
pub const RISTRETTO255: u8 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupParams {
    pub group_id: u8,
    /// Group order, little-endian.
    pub order: [u8; 32],
    /// Canonical encoding of the generator.
    pub generator: [u8; ELEMENT_LEN],
    pub element_len: usize,
}

impl GroupParams {
    pub fn name(&self) -> &'static str {
        match self.group_id {
            RISTRETTO255 => "ristretto255",
            _ => "unknown",
        }
    }

    pub fn order_bits(&self) -> u32 {
        let top = self.order.iter().rposition(|&b| b != 0).unwrap_or(0);
        (top as u32) * 8 + (8 - self.order[top].leading_zeros())
    }

    pub fn generator(&self) -> GroupElement {
        GroupElement::generator()
    }
}

/// Returns the fixed group for the requested security level.
///
/// Only 128-bit security is supported. The result is a constant: every call
/// returns the same parameters.
pub fn group_gen(security_bits: u32) -> Result<GroupParams> {
    match security_bits {
        128 => Ok(GroupParams {
            group_id: RISTRETTO255,
            order: RISTRETTO_ORDER_LE,
            generator: RISTRETTO_BASEPOINT_COMPRESSED.to_bytes(),
            element_len: ELEMENT_LEN,
        }),
        other => Err(Error::UnsupportedSecurityLevel(other)),
    }
}

/// An exponent in `Z_p`, always reduced.
#[derive(Clone, Copy, Default, PartialEq, Eq)]
pub struct Scalar(pub(crate) RawScalar);

impl Scalar {
    pub const ZERO: Scalar = Scalar(RawScalar::ZERO);
    pub const ONE: Scalar = Scalar(RawScalar::ONE);

    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Scalar(RawScalar::random(rng))
    }

    pub fn from_u64(v: u64) -> Self {
        Scalar(RawScalar::from(v))
    }

    /// 32-byte little-endian encoding.
    pub fn to_bytes(&self) -> [u8; SCALAR_LEN] {
        self.0.to_bytes()
    }

    /// Decodes a canonical (fully reduced) little-endian scalar.
    pub fn from_bytes(bytes: &[u8; SCALAR_LEN]) -> Result<Self> {
        Option::from(RawScalar::from_canonical_bytes(*bytes))
            .map(Scalar)
            .ok_or(Error::InvalidEncoding("non-canonical scalar"))
    }

    pub fn is_zero(&self) -> bool {
        self.0 == RawScalar::ZERO
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Scalar(")?;
        for b in self.to_bytes().iter().rev() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl From<u64> for Scalar {
    fn from(v: u64) -> Self {
        Scalar::from_u64(v)
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 + rhs.0)
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 - rhs.0)
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        Scalar(self.0 * rhs.0)
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar(-self.0)
    }
}

impl Sum for Scalar {
    fn sum<I: Iterator<Item = Scalar>>(iter: I) -> Scalar {
        iter.fold(Scalar::ZERO, Add::add)
    }
}

/// One element of the group. `*` is the group operation, `/` its inverse.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct GroupElement(pub(crate) RistrettoPoint);

impl GroupElement {
    pub fn identity() -> Self {
        GroupElement(RistrettoPoint::identity())
    }

    pub fn generator() -> Self {
        GroupElement(curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT)
    }

    /// `g^s`, using the precomputed generator table.
    pub fn exp_generator(s: &Scalar) -> Self {
        GroupElement(RISTRETTO_BASEPOINT_TABLE * &s.0)
    }

    /// `self^s`.
    pub fn exp(&self, s: &Scalar) -> Self {
        GroupElement(self.0 * s.0)
    }

    /// `prod_i bases[i]^exps[i]`. Variable time in the exponents.
    pub fn multi_exp(exps: &[Scalar], bases: &[GroupElement]) -> Self {
        debug_assert_eq!(exps.len(), bases.len());
        GroupElement(RistrettoPoint::vartime_multiscalar_mul(
            exps.iter().map(|s| &s.0),
            bases.iter().map(|b| &b.0),
        ))
    }

    pub fn to_bytes(&self) -> [u8; ELEMENT_LEN] {
        self.0.compress().to_bytes()
    }

    /// Decodes a canonical encoding; anything else is rejected.
    pub fn from_bytes(bytes: &[u8; ELEMENT_LEN]) -> Result<Self> {
        CompressedRistretto(*bytes)
            .decompress()
            .map(GroupElement)
            .ok_or(Error::InvalidEncoding("not a canonical group element"))
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self> {
        let arr: &[u8; ELEMENT_LEN] = bytes
            .try_into()
            .map_err(|_| Error::InvalidEncoding("group element must be 32 bytes"))?;
        Self::from_bytes(arr)
    }

    pub fn is_identity(&self) -> bool {
        self.0 == RistrettoPoint::identity()
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement(")?;
        for b in self.to_bytes() {
            write!(f, "{b:02x}")?;
        }
        write!(f, ")")
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn mul(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 + rhs.0)
    }
}

impl Div for GroupElement {
    type Output = GroupElement;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: GroupElement) -> GroupElement {
        GroupElement(self.0 - rhs.0)
    }
}

/// Precomputed table for repeated exponentiation of one fixed base.
#[derive(Clone)]
pub struct FixedBase(Box<RistrettoBasepointTable>);

impl FixedBase {
    pub fn new(base: &GroupElement) -> Self {
        FixedBase(Box::new(RistrettoBasepointTable::create(&base.0)))
    }

    pub fn exp(&self, s: &Scalar) -> GroupElement {
        GroupElement(&*self.0 * &s.0)
    }
}

impl fmt::Debug for FixedBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("FixedBase").field(&self.0.basepoint()).finish()
    }
}

/// Lookup table `g^0 .. g^bound` keyed by the canonical encoding.
///
/// Built once and shared read-only across epochs.
#[derive(Clone, Debug)]
pub struct DlogTable {
    bound: u64,
    entries: BTreeMap<[u8; ELEMENT_LEN], u64>,
}

impl DlogTable {
    pub fn new(bound: u64) -> Self {
        let mut entries = BTreeMap::new();
        let g = RistrettoPoint::identity();
        let step = curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
        let mut acc = g;
        for m in 0..=bound {
            entries.insert(acc.compress().to_bytes(), m);
            acc += step;
        }
        DlogTable { bound, entries }
    }

    pub fn bound(&self) -> u64 {
        self.bound
    }

    pub fn recover(&self, target: &GroupElement) -> Result<u64> {
        self.entries
            .get(&target.to_bytes())
            .copied()
            .ok_or(Error::NotInRange { bound: self.bound })
    }
}

/// Returns `m` in `[0, bound]` with `g^m = target`, via a fresh lookup table.
///
/// Callers decrypting many values under one bound should keep a [`DlogTable`].
pub fn dlog_recover(target: &GroupElement, bound: u64) -> Result<u64> {
    DlogTable::new(bound).recover(target)
}

/// Baby-step giant-step recovery of `m` in `[0, bound]` with `g^m = target`.
pub fn dlog_bsgs(target: &GroupElement, bound: u64) -> Result<u64> {
    let m = isqrt_ceil(bound + 1).max(1);
    let g = curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;

    let mut baby: BTreeMap<[u8; ELEMENT_LEN], u64> = BTreeMap::new();
    let mut acc = RistrettoPoint::identity();
    for j in 0..m {
        baby.entry(acc.compress().to_bytes()).or_insert(j);
        acc += g;
    }
    // acc == g^m
    let giant = acc;
    let mut gamma = target.0;
    let mut i = 0u64;
    while i * m <= bound {
        if let Some(&j) = baby.get(&gamma.compress().to_bytes()) {
            let found = i * m + j;
            return if found <= bound {
                Ok(found)
            } else {
                Err(Error::NotInRange { bound })
            };
        }
        gamma -= giant;
        i += 1;
    }
    Err(Error::NotInRange { bound })
}

fn isqrt_ceil(n: u64) -> u64 {
    let mut r = libm::sqrt(n as f64) as u64;
    while r * r > n {
        r -= 1;
    }
    while r * r < n {
        r += 1;
    }
    r
}

/// Collects encodings of a slice of elements.
pub fn encode_elements(elems: &[GroupElement]) -> Vec<u8> {
    elems.iter().flat_map(|e| e.to_bytes()).collect()
}
