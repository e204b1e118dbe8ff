//! IDX containers: big-endian magic `0x0000TTRR` (type code, rank), one big-endian `u32`
//! per dimension, then the payload in row-major order.
//!
//! Unsigned-byte data (`0x08`) is scaled to `[0, 1]`; `f64` data (`0x0E`) is read as is and
//! is what [`write_idx_f64`] produces, so generated datasets round-trip exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const TYPE_U8: u8 = 0x08;
const TYPE_F64: u8 = 0x0E;

/// Magic of a rank-3 unsigned-byte image file.
pub const MAGIC_U8_RANK3: u32 = 0x0000_0803;
/// Magic of an unsigned-byte label file.
pub const MAGIC_LABELS: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

fn read_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
}

/// Parses an IDX buffer of type `u8` or `f64`, any rank ≥ 1.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray> {
    let magic = read_u32(bytes, 0)
        .ok_or_else(|| Error::Format("IDX file shorter than its magic".into()))?;
    let [z0, z1, ty, rank] = magic.to_be_bytes();
    if z0 != 0 || z1 != 0 || !(ty == TYPE_U8 || ty == TYPE_F64) || rank == 0 {
        return Err(Error::Format(format!(
            "unsupported IDX magic {magic:#010x}"
        )));
    }
    let rank = usize::from(rank);
    let dims: Vec<usize> = (0..rank)
        .map(|k| {
            read_u32(bytes, 4 + 4 * k)
                .map(|v| v as usize)
                .ok_or_else(|| Error::Format("IDX header truncated".into()))
        })
        .collect::<Result<_>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let payload = &bytes[4 + 4 * rank..];
    let elem = if ty == TYPE_U8 { 1 } else { 8 };
    if payload.len() != count * elem {
        return Err(Error::Format(format!(
            "IDX payload has {} bytes, dimensions {dims:?} need {}",
            payload.len(),
            count * elem
        )));
    }
    let values = if ty == TYPE_U8 {
        payload.iter().map(|&b| f64::from(b) / 255.0).collect()
    } else {
        payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes")))
            .collect()
    };
    Ok(IdxArray { dims, values })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Labels must be a rank-1 unsigned-byte file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    match read_u32(bytes, 0) {
        Some(MAGIC_LABELS) => {}
        Some(m) => {
            return Err(Error::Format(format!(
                "label file magic {m:#010x}, expected {MAGIC_LABELS:#010x}"
            )))
        }
        None => return Err(Error::Format("IDX file shorter than its magic".into())),
    }
    let n =
        read_u32(bytes, 4).ok_or_else(|| Error::Format("IDX header truncated".into()))? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Format(format!(
            "label payload has {} bytes, expected {n}",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|&b| usize::from(b)).collect())
}

/// Reads data and labels; data are flattened to `[n, ∏ remaining dims]`.
pub fn load_idx(data: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<(Tensor, Vec<usize>)> {
    let arr = parse_idx(&read(data.as_ref())?)?;
    let labels = parse_idx_labels(&read(labels.as_ref())?)?;
    let n = arr.dims[0];
    if labels.len() != n {
        return Err(Error::Format(format!(
            "{n} samples but {} labels",
            labels.len()
        )));
    }
    let width = arr.dims[1..].iter().product();
    Ok((Tensor::matrix(n, width, arr.values)?, labels))
}

fn header(ty: u8, dims: &[usize]) -> Result<Vec<u8>> {
    let rank = u8::try_from(dims.len()).map_err(|_| Error::Format("IDX rank above 255".into()))?;
    let mut out = vec![0, 0, ty, rank];
    for &d in dims {
        let d =
            u32::try_from(d).map_err(|_| Error::Format(format!("IDX dimension {d} above u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    Ok(out)
}

pub fn encode_idx_f64(x: &Tensor) -> Result<Vec<u8>> {
    let mut out = header(TYPE_F64, &[x.rows(), x.cols()])?;
    for v in x.data() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = header(TYPE_U8, &[labels.len()])?;
    for &l in labels {
        out.push(
            u8::try_from(l).map_err(|_| Error::Format(format!("label {l} does not fit a byte")))?,
        );
    }
    Ok(out)
}

pub fn write_idx_f64(path: impl AsRef<Path>, x: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_idx_f64(x)?).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[usize]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_idx_labels(labels)?).map_err(|e| Error::io(path, e))
}
