//! Binary encoding of [`CompressedUpdate`].
//!
//! Layout: one tag byte, then little-endian `u32` lengths and `f64` values.
//! See `docs/wire-format.md` for the per-variant layout.

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use super::{CompressedUpdate, SparseResidual};
use crate::error::{Error, Result};

const TAG_RAW: u8 = 0;
const TAG_SUBSPACE: u8 = 1;
const TAG_PCA_SLICES: u8 = 2;
const TAG_LOW_RANK_DIAG: u8 = 3;
const TAG_PREDICTIVE: u8 = 4;

fn put_len(out: &mut Vec<u8>, n: usize) {
    let n = u32::try_from(n).expect("payload length exceeds u32");
    out.write_u32::<LittleEndian>(n).expect("writing to a Vec cannot fail");
}

fn put_values(out: &mut Vec<u8>, xs: &[f64]) {
    put_len(out, xs.len());
    for &x in xs {
        out.write_f64::<LittleEndian>(x).expect("writing to a Vec cannot fail");
    }
}

/// Serializes an update. Panics only if a length exceeds `u32::MAX`.
pub fn encode(update: &CompressedUpdate) -> Vec<u8> {
    let mut out = Vec::new();
    match update {
        CompressedUpdate::Raw(g) => {
            out.push(TAG_RAW);
            put_values(&mut out, g);
        }
        CompressedUpdate::SubspaceCoeffs(c) => {
            out.push(TAG_SUBSPACE);
            put_values(&mut out, c);
        }
        CompressedUpdate::PcaSlices(slices) => {
            out.push(TAG_PCA_SLICES);
            put_len(&mut out, slices.len());
            for s in slices {
                put_values(&mut out, s);
            }
        }
        CompressedUpdate::LowRankDiag(d) => {
            out.push(TAG_LOW_RANK_DIAG);
            put_values(&mut out, d);
        }
        CompressedUpdate::Predictive { coeffs, residual } => {
            out.push(TAG_PREDICTIVE);
            put_values(&mut out, coeffs);
            put_len(&mut out, residual.dim);
            put_len(&mut out, residual.nnz());
            for &i in &residual.indices {
                put_len(&mut out, i);
            }
            for &v in &residual.values {
                out.write_f64::<LittleEndian>(v).expect("writing to a Vec cannot fail");
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse_at_offset(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1, "tag")?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(LittleEndian::read_u32(self.take(4, what)?) as usize)
    }

    /// Reads `n` finite f64s, checking the byte budget before allocating.
    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = n
            .checked_mul(8)
            .filter(|&b| b <= self.remaining())
            .ok_or_else(|| {
                Error::parse_at_offset(
                    self.pos,
                    format!("truncated {what}: {n} values declared, {} bytes left", self.remaining()),
                )
            })?;
        let start = self.pos;
        let raw = self.take(bytes, what)?;
        let mut out = Vec::with_capacity(n);
        for (i, chunk) in raw.chunks_exact(8).enumerate() {
            let x = LittleEndian::read_f64(chunk);
            if !x.is_finite() {
                return Err(Error::parse_at_offset(start + 8 * i, format!("non-finite value in {what}")));
            }
            out.push(x);
        }
        Ok(out)
    }

    fn values(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.u32(what)?;
        self.f64s(n, what)
    }
}

/// Parses an update produced by [`encode`]. Rejects unknown tags, truncated
/// or trailing bytes, non-finite values and malformed sparse indices.
pub fn decode(bytes: &[u8]) -> Result<CompressedUpdate> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let tag = r.u8()?;
    let update = match tag {
        TAG_RAW => CompressedUpdate::Raw(r.values("raw update")?),
        TAG_SUBSPACE => CompressedUpdate::SubspaceCoeffs(r.values("subspace coefficients")?),
        TAG_LOW_RANK_DIAG => CompressedUpdate::LowRankDiag(r.values("low-rank diagonal")?),
        TAG_PCA_SLICES => {
            let n = r.u32("slice count")?;
            if n.saturating_mul(4) > r.remaining() {
                return Err(Error::parse_at_offset(
                    r.pos,
                    format!("truncated slice list: {n} slices declared, {} bytes left", r.remaining()),
                ));
            }
            let mut slices = Vec::with_capacity(n);
            for _ in 0..n {
                slices.push(r.values("slice coefficients")?);
            }
            CompressedUpdate::PcaSlices(slices)
        }
        TAG_PREDICTIVE => {
            let coeffs = r.values("prediction coefficients")?;
            let dim = r.u32("residual dimension")?;
            let k_pos = r.pos;
            let k = r.u32("residual count")?;
            if k > dim || k.saturating_mul(12) > r.remaining() {
                return Err(Error::parse_at_offset(
                    k_pos,
                    format!("residual count {k} inconsistent with dimension {dim} or payload size"),
                ));
            }
            let mut indices = Vec::with_capacity(k);
            for _ in 0..k {
                let at = r.pos;
                let i = r.u32("residual index")?;
                if i >= dim {
                    return Err(Error::parse_at_offset(at, format!("index {i} out of range for dimension {dim}")));
                }
                if indices.last().is_some_and(|&prev| i <= prev) {
                    return Err(Error::parse_at_offset(at, "residual indices not strictly increasing"));
                }
                indices.push(i);
            }
            let values = r.f64s(k, "residual values")?;
            CompressedUpdate::Predictive {
                coeffs,
                residual: SparseResidual { dim, indices, values },
            }
        }
        other => return Err(Error::parse_at_offset(0, format!("unknown tag {other}"))),
    };
    if r.remaining() != 0 {
        return Err(Error::parse_at_offset(r.pos, format!("{} trailing bytes", r.remaining())));
    }
    Ok(update)
}
