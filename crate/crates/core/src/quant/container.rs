//! The `LQQ1` quantized-matrix container.
//!
//! ```text
//! "LQQ1" | version u16 | rows u64 | cols u64 | b0 u8 | b1 u8 | b2 u8 | B0 u32 | B1 u32
//! | codes (byte padded) | scale codes (byte padded) | group scales (b2 width)
//! ```
//! All integers little-endian.

use std::fs;
use std::path::Path;

use super::config::{FloatFormat, QuantConfig};
use super::float::{decode, encode};
use super::nf::QuantizedMatrix;
use super::packing::packed_len;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LQQ1";
const VERSION: u16 = 1;
pub const LQQ_HEADER_BYTES: usize = 33;

/// Byte breakdown of an `LQQ1` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerBytes {
    pub header: usize,
    pub codes: usize,
    pub scale_codes: usize,
    pub group_scales: usize,
}

impl ContainerBytes {
    pub fn payload(&self) -> usize {
        self.codes + self.scale_codes + self.group_scales
    }

    pub fn total(&self) -> usize {
        self.header + self.payload()
    }
}

pub fn exact_container_bytes(rows: usize, cols: usize, cfg: &QuantConfig) -> ContainerBytes {
    let n = rows * cols;
    ContainerBytes {
        header: LQQ_HEADER_BYTES,
        codes: packed_len(n, cfg.b0),
        scale_codes: packed_len(cfg.num_blocks(n), cfg.b1),
        group_scales: cfg.num_groups(n) * cfg.b2.bytes(),
    }
}

impl QuantizedMatrix {
    pub fn to_bytes(&self) -> Vec<u8> {
        let cfg = self.config();
        let sizes = exact_container_bytes(self.rows(), self.cols(), cfg);
        let mut out = Vec::with_capacity(sizes.total());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols() as u64).to_le_bytes());
        out.push(cfg.b0);
        out.push(cfg.b1);
        out.push(cfg.b2.tag());
        out.extend_from_slice(&cfg.block_size.to_le_bytes());
        out.extend_from_slice(&cfg.group_size.to_le_bytes());
        out.extend_from_slice(self.packed_codes());
        out.extend_from_slice(self.packed_scale_codes());
        for &v in self.group_scales() {
            encode(v, cfg.b2, &mut out);
        }
        debug_assert_eq!(out.len(), sizes.total());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < LQQ_HEADER_BYTES {
            return Err(Error::format(format!("truncated header: {} bytes", bytes.len())));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::format(format!(
                "bad magic {:?}, expected \"LQQ1\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::format(format!("unsupported version {version}")));
        }
        let rows = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let cols = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let b0 = bytes[22];
        let b1 = bytes[23];
        let b2 = FloatFormat::from_tag(bytes[24])?;
        let block_size = u32::from_le_bytes(bytes[25..29].try_into().unwrap());
        let group_size = u32::from_le_bytes(bytes[29..33].try_into().unwrap());
        let cfg = QuantConfig::new(b0, b1, b2, block_size, group_size)
            .map_err(Error::into_format)?;
        let (rows, cols) = match (usize::try_from(rows), usize::try_from(cols)) {
            (Ok(r), Ok(c)) if r.checked_mul(c).is_some() => (r, c),
            _ => return Err(Error::format("dimension overflow")),
        };
        let n = rows * cols;
        if n.checked_mul(8).is_none() {
            return Err(Error::format("dimension overflow"));
        }
        let sizes = exact_container_bytes(rows, cols, &cfg);
        if bytes.len() != sizes.total() {
            return Err(Error::format(format!(
                "container is {} bytes, expected {} for {rows}x{cols} at {cfg}",
                bytes.len(),
                sizes.total()
            )));
        }
        let mut at = LQQ_HEADER_BYTES;
        let codes = bytes[at..at + sizes.codes].to_vec();
        at += sizes.codes;
        let s_codes = bytes[at..at + sizes.scale_codes].to_vec();
        at += sizes.scale_codes;
        let group_scales = bytes[at..]
            .chunks_exact(b2.bytes())
            .map(|c| decode(c, b2))
            .collect();
        QuantizedMatrix::from_packed(rows, cols, cfg, codes, s_codes, group_scales)
    }
}

pub fn write_quantized(path: impl AsRef<Path>, q: &QuantizedMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, q.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_quantized(path: impl AsRef<Path>) -> Result<QuantizedMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    QuantizedMatrix::from_bytes(&bytes).map_err(|e| e.in_file(path))
}
