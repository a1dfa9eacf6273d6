//! Dense tensors, the `LQT1` file format, synthetic fixtures and presets.

pub(crate) mod generate;
mod preset;

pub use generate::{gen_fisher, gen_matrix, FisherKind, GenParams, MatrixKind};
pub use preset::{preset, ModelPreset, PresetMatrix};

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const LQT_MAGIC: &[u8; 4] = b"LQT1";
const LQT_VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;
/// Size in bytes of the fixed `LQT1` header.
pub const LQT_HEADER_BYTES: usize = 24;

/// Row-major `f32` matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let expected = checked_len(rows, cols)?;
        if data.len() != expected {
            return Err(Error::arg(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!("non-finite entry at flat index {pos}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix by evaluating `f(row, col)`; panics on non-finite output.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                let v = f(i, j);
                assert!(v.is_finite(), "non-finite entry at ({i}, {j})");
                data.push(v);
            }
        }
        Self { rows, cols, data }
    }

    /// Rounds a double-precision matrix to `f32`.
    pub fn from_nalgebra(m: &DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)] as f32);
            }
        }
        Self::new(rows, cols, data).map_err(|_| Error::Numerical("non-finite matrix entry".into()))
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.data[i * self.cols + j] as f64)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    /// Frobenius norm accumulated in `f64`.
    pub fn frobenius_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Elementwise `self - other`, computed in `f64` and rounded once.
    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::arg(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64) as f32)
            .collect();
        DenseMatrix::new(self.rows, self.cols, data)
            .map_err(|_| Error::Numerical("overflow in matrix difference".into()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LQT_HEADER_BYTES + 4 * self.data.len());
        out.extend_from_slice(LQT_MAGIC);
        out.extend_from_slice(&LQT_VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.push(0);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < LQT_HEADER_BYTES {
            return Err(Error::format(format!(
                "truncated header: {} bytes",
                bytes.len()
            )));
        }
        if &bytes[0..4] != LQT_MAGIC {
            return Err(Error::format(format!(
                "bad magic {:?}, expected \"LQT1\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != LQT_VERSION {
            return Err(Error::format(format!("unsupported version {version}")));
        }
        if bytes[6] != DTYPE_F32 {
            return Err(Error::format(format!("unsupported dtype {}", bytes[6])));
        }
        if bytes[7] != 0 {
            return Err(Error::format("reserved byte must be zero"));
        }
        let rows = read_u64(&bytes[8..16]);
        let cols = read_u64(&bytes[16..24]);
        let (rows, cols) = match (usize::try_from(rows), usize::try_from(cols)) {
            (Ok(r), Ok(c)) => (r, c),
            _ => return Err(Error::format("dimension overflow")),
        };
        let n = checked_len(rows, cols).map_err(|_| Error::format("dimension overflow"))?;
        let payload_len = n
            .checked_mul(4)
            .ok_or_else(|| Error::format("dimension overflow"))?;
        let payload = &bytes[LQT_HEADER_BYTES..];
        if payload.len() != payload_len {
            return Err(Error::format(format!(
                "payload is {} bytes, expected {payload_len} for {rows}x{cols}",
                payload.len()
            )));
        }
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("non-finite entry in payload"));
        }
        Ok(Self { rows, cols, data })
    }
}

fn read_u64(b: &[u8]) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(b);
    u64::from_le_bytes(buf)
}

fn checked_len(rows: usize, cols: usize) -> Result<usize> {
    rows.checked_mul(cols)
        .ok_or_else(|| Error::arg(format!("{rows}x{cols} overflows")))
}

/// Per-weight Fisher information diagonal, reshaped like its weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherDiag(DenseMatrix);

impl FisherDiag {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if let Some(pos) = m.data().iter().position(|&v| v < 0.0) {
            return Err(Error::arg(format!(
                "negative Fisher entry at flat index {pos}"
            )));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn data(&self) -> &[f32] {
        self.0.data()
    }

    pub fn check_matches(&self, shape: (usize, usize)) -> Result<()> {
        if self.shape() != shape {
            return Err(Error::arg(format!(
                "Fisher shape {:?} does not match weight shape {shape:?}",
                self.shape()
            )));
        }
        Ok(())
    }
}

pub fn write_tensor(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    DenseMatrix::from_bytes(&bytes)
        .map_err(|e| e.in_file(path))
}

pub fn read_fisher(path: impl AsRef<Path>) -> Result<FisherDiag> {
    let path = path.as_ref();
    FisherDiag::new(read_tensor(path)?)
        .map_err(|e| e.in_file(path))
}
