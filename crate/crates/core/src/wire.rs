//! Little-endian binary encodings.
//!
//! ```text
//! DriverKey      = [u8 version][u32 driver_id][2 x 32B a_vec][32B wa][32B u]
//! CellCiphertext = [u8 version][u32 driver_id][u16 cell_id][3 x 32B t0 t1 c]
//! Report         = [u32 driver_id][u32 epoch][u16 k] k x CellCiphertext
//! MasterPublic   = [u8 version][u8 group_id][u32 n] n x [3 x 32B a0 a1 wa]
//! FunctionalKey  = [u8 version][u32 n] n x [32B y][2 x 32B d] [32B z]
//! ZeroPool file  = [u8 version][u32 driver_id][u32 count] count x CellCiphertext
//! ```
//!
//! Pool entries are not bound to a cell yet and carry cell id `0xffff`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid_report::{CellId, Report};
use crate::group::{group_gen, GroupElement, GroupParams, Scalar, ELEMENT_LEN, RISTRETTO255, SCALAR_LEN};
use crate::ipfe::{CellCiphertext, DriverId, DriverKey, DriverPublic, FunctionalKey, MasterPublic};

pub const VERSION: u8 = 1;

pub const DRIVER_KEY_LEN: usize = 1 + 4 + 3 * ELEMENT_LEN + SCALAR_LEN;
pub const CIPHERTEXT_LEN: usize = 1 + 4 + 2 + 3 * ELEMENT_LEN;
pub const REPORT_HEADER_LEN: usize = 4 + 4 + 2;
pub const UNASSIGNED_CELL: CellId = CellId(u16::MAX);

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::InvalidEncoding("truncated input"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn version(&mut self) -> Result<()> {
        if self.u8()? != VERSION {
            return Err(Error::InvalidEncoding("unsupported format version"));
        }
        Ok(())
    }

    fn element(&mut self) -> Result<GroupElement> {
        GroupElement::from_slice(self.take(ELEMENT_LEN)?)
    }

    fn scalar(&mut self) -> Result<Scalar> {
        Scalar::from_bytes(self.take(SCALAR_LEN)?.try_into().unwrap())
    }

    fn finish(self) -> Result<()> {
        if !self.buf.is_empty() {
            return Err(Error::InvalidEncoding("trailing bytes"));
        }
        Ok(())
    }
}

/// Allocation limit for counts read from untrusted headers.
fn checked_capacity(count: usize, record: usize, remaining: usize) -> Result<usize> {
    if count.saturating_mul(record) > remaining {
        return Err(Error::InvalidEncoding("count exceeds input length"));
    }
    Ok(count)
}

pub fn encode_driver_key(key: &DriverKey) -> Vec<u8> {
    let mut out = Vec::with_capacity(DRIVER_KEY_LEN);
    out.push(VERSION);
    out.extend_from_slice(&key.driver_id.0.to_le_bytes());
    out.extend_from_slice(&key.a_vec[0].to_bytes());
    out.extend_from_slice(&key.a_vec[1].to_bytes());
    out.extend_from_slice(&key.wa.to_bytes());
    out.extend_from_slice(&key.u.to_bytes());
    out
}

pub fn decode_driver_key(bytes: &[u8]) -> Result<DriverKey> {
    let mut r = Reader::new(bytes);
    r.version()?;
    let driver_id = DriverId(r.u32()?);
    let a_vec = [r.element()?, r.element()?];
    if a_vec[0] != GroupElement::generator() {
        return Err(Error::InvalidEncoding("first key element must be the generator"));
    }
    let wa = r.element()?;
    let u = r.scalar()?;
    r.finish()?;
    Ok(DriverKey {
        driver_id,
        params: group_gen(128)?,
        a_vec,
        wa,
        u,
    })
}

fn put_ciphertext(out: &mut Vec<u8>, cell: CellId, ct: &CellCiphertext) {
    out.push(VERSION);
    out.extend_from_slice(&ct.driver_id.0.to_le_bytes());
    out.extend_from_slice(&cell.0.to_le_bytes());
    out.extend_from_slice(&ct.t[0].to_bytes());
    out.extend_from_slice(&ct.t[1].to_bytes());
    out.extend_from_slice(&ct.c.to_bytes());
}

fn read_ciphertext(r: &mut Reader<'_>) -> Result<(CellId, CellCiphertext)> {
    r.version()?;
    let driver_id = DriverId(r.u32()?);
    let cell = CellId(r.u16()?);
    let t = [r.element()?, r.element()?];
    let c = r.element()?;
    Ok((cell, CellCiphertext { driver_id, t, c }))
}

pub fn encode_ciphertext(cell: CellId, ct: &CellCiphertext) -> Vec<u8> {
    let mut out = Vec::with_capacity(CIPHERTEXT_LEN);
    put_ciphertext(&mut out, cell, ct);
    out
}

pub fn decode_ciphertext(bytes: &[u8]) -> Result<(CellId, CellCiphertext)> {
    let mut r = Reader::new(bytes);
    let out = read_ciphertext(&mut r)?;
    r.finish()?;
    Ok(out)
}

pub fn encode_report(report: &Report) -> Vec<u8> {
    let mut out = Vec::with_capacity(REPORT_HEADER_LEN + report.k() * CIPHERTEXT_LEN);
    out.extend_from_slice(&report.driver_id.0.to_le_bytes());
    out.extend_from_slice(&report.epoch.to_le_bytes());
    out.extend_from_slice(&(report.k() as u16).to_le_bytes());
    for (cell, ct) in &report.entries {
        put_ciphertext(&mut out, *cell, ct);
    }
    out
}

/// Decodes a report, requiring strictly increasing cell ids and ciphertexts
/// from the reporting driver only.
pub fn decode_report(bytes: &[u8]) -> Result<Report> {
    let mut r = Reader::new(bytes);
    let driver_id = DriverId(r.u32()?);
    let epoch = r.u32()?;
    let k = r.u16()? as usize;
    let k = checked_capacity(k, CIPHERTEXT_LEN, r.buf.len())?;
    let mut entries: Vec<(CellId, CellCiphertext)> = Vec::with_capacity(k);
    for _ in 0..k {
        let (cell, ct) = read_ciphertext(&mut r)?;
        if ct.driver_id != driver_id {
            return Err(Error::InvalidEncoding("ciphertext from another driver"));
        }
        if entries.last().is_some_and(|(prev, _)| *prev >= cell) {
            return Err(Error::InvalidEncoding("report cells not strictly increasing"));
        }
        entries.push((cell, ct));
    }
    r.finish()?;
    Ok(Report {
        driver_id,
        epoch,
        entries,
    })
}

pub fn encode_master_public(mpk: &MasterPublic) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + mpk.n_drivers() * 3 * ELEMENT_LEN);
    out.push(VERSION);
    out.push(mpk.params.group_id);
    out.extend_from_slice(&(mpk.n_drivers() as u32).to_le_bytes());
    for rec in &mpk.records {
        out.extend_from_slice(&rec.a_vec[0].to_bytes());
        out.extend_from_slice(&rec.a_vec[1].to_bytes());
        out.extend_from_slice(&rec.wa.to_bytes());
    }
    out
}

pub fn decode_master_public(bytes: &[u8]) -> Result<MasterPublic> {
    let mut r = Reader::new(bytes);
    r.version()?;
    if r.u8()? != RISTRETTO255 {
        return Err(Error::InvalidEncoding("unknown group id"));
    }
    let n = checked_capacity(r.u32()? as usize, 3 * ELEMENT_LEN, r.buf.len())?;
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        records.push(DriverPublic {
            a_vec: [r.element()?, r.element()?],
            wa: r.element()?,
        });
    }
    r.finish()?;
    Ok(MasterPublic {
        params: group_gen(128)?,
        records,
    })
}

pub fn encode_functional_key(dk: &FunctionalKey) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + dk.n_drivers() * 3 * SCALAR_LEN + SCALAR_LEN);
    out.push(VERSION);
    out.extend_from_slice(&(dk.n_drivers() as u32).to_le_bytes());
    for (y, d) in dk.y.iter().zip(&dk.d) {
        out.extend_from_slice(&y.to_bytes());
        out.extend_from_slice(&d[0].to_bytes());
        out.extend_from_slice(&d[1].to_bytes());
    }
    out.extend_from_slice(&dk.z.to_bytes());
    out
}

pub fn decode_functional_key(bytes: &[u8]) -> Result<FunctionalKey> {
    let mut r = Reader::new(bytes);
    r.version()?;
    let n = checked_capacity(r.u32()? as usize, 3 * SCALAR_LEN, r.buf.len())?;
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for _ in 0..n {
        y.push(r.scalar()?);
        d.push([r.scalar()?, r.scalar()?]);
    }
    let z = r.scalar()?;
    r.finish()?;
    Ok(FunctionalKey { y, d, z })
}

pub fn encode_pool(driver: DriverId, entries: &[CellCiphertext]) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + entries.len() * CIPHERTEXT_LEN);
    out.push(VERSION);
    out.extend_from_slice(&driver.0.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for ct in entries {
        put_ciphertext(&mut out, UNASSIGNED_CELL, ct);
    }
    out
}

pub fn decode_pool(bytes: &[u8]) -> Result<(DriverId, Vec<CellCiphertext>)> {
    let mut r = Reader::new(bytes);
    r.version()?;
    let driver = DriverId(r.u32()?);
    let count = checked_capacity(r.u32()? as usize, CIPHERTEXT_LEN, r.buf.len())?;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let (cell, ct) = read_ciphertext(&mut r)?;
        if cell != UNASSIGNED_CELL || ct.driver_id != driver {
            return Err(Error::InvalidEncoding("malformed pool entry"));
        }
        entries.push(ct);
    }
    r.finish()?;
    Ok((driver, entries))
}

/// Reference byte figures printed next to the measured sizes.
pub const CLAIMED_CIPHERTEXT_BYTES: usize = 64;
pub const CLAIMED_KEY_BYTES: usize = 66;

/// Measured serialized sizes next to the claimed ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SizeReport {
    pub element_len: usize,
    /// Group elements of one ciphertext: `t` (2) plus `c` (1).
    pub ciphertext_payload: usize,
    /// One framed ciphertext record on the wire.
    pub ciphertext_record: usize,
    /// `[a_i]`, `[W_i a_i]` and `u_i` without framing.
    pub key_payload: usize,
    /// One framed driver key file.
    pub key_record: usize,
    pub claimed_ciphertext: usize,
    pub claimed_key: usize,
}

impl SizeReport {
    pub fn new(params: &GroupParams) -> Self {
        SizeReport {
            element_len: params.element_len,
            ciphertext_payload: 3 * params.element_len,
            ciphertext_record: CIPHERTEXT_LEN,
            key_payload: 3 * params.element_len + SCALAR_LEN,
            key_record: DRIVER_KEY_LEN,
            claimed_ciphertext: CLAIMED_CIPHERTEXT_BYTES,
            claimed_key: CLAIMED_KEY_BYTES,
        }
    }

    /// Ciphertext bytes of a `k`-cell report, measured and claimed.
    pub fn report_payload(&self, k: usize) -> (usize, usize) {
        (k * self.ciphertext_payload, k * self.claimed_ciphertext)
    }

    pub fn ciphertext_discrepancy(&self) -> bool {
        self.ciphertext_payload != self.claimed_ciphertext
    }

    pub fn key_discrepancy(&self) -> bool {
        self.key_payload != self.claimed_key
    }
}
