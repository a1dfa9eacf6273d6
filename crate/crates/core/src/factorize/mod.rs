//! Truncated SVD and the Fisher-weighted low-rank factorization.
//!
//! Without weights, `factorize` returns the top-`r` SVD split as
//! `L1 = U√Σ`, `L2 = √ΣVᵀ`. With a Fisher diagonal `F`, the matrix is first
//! scaled on both sides by the row and column means of `√F`, factorized, and
//! the scaling is undone on the factors. When `F` is separable
//! (`F_ij = r_i² c_j²`) this minimizes `‖√F ⊙ (A − L1 L2)‖_F` exactly.

mod svd;
mod weighted;

pub use svd::{svd_truncated, truncated_svd_f64, SvdMethod, TruncatedSvd};
pub use weighted::{factorize, factorize_f64, fisher_scalers, weighted_error, WeightScalers};

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor_io::{read_tensor, write_tensor, DenseMatrix};

/// Rank-`r` factors `L1` (`d×r`) and `L2` (`r×k`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankFactors {
    left: DenseMatrix,
    right: DenseMatrix,
}

impl LowRankFactors {
    pub fn new(left: DenseMatrix, right: DenseMatrix) -> Result<Self> {
        if left.cols() != right.rows() {
            return Err(Error::arg(format!(
                "factor shapes {:?} and {:?} do not chain",
                left.shape(),
                right.shape()
            )));
        }
        if left.cols() == 0 {
            return Err(Error::arg("rank must be at least 1"));
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &DenseMatrix {
        &self.left
    }

    pub fn right(&self) -> &DenseMatrix {
        &self.right
    }

    pub fn rank(&self) -> usize {
        self.left.cols()
    }

    /// Shape of the product `L1 L2`.
    pub fn shape(&self) -> (usize, usize) {
        (self.left.rows(), self.right.cols())
    }

    /// `L1 L2` in double precision.
    pub fn product(&self) -> DMatrix<f64> {
        self.left.to_nalgebra() * self.right.to_nalgebra()
    }

    /// Number of stored parameters, `r·(d + k)`.
    pub fn num_params(&self) -> usize {
        self.left.len() + self.right.len()
    }

    pub fn write(&self, left: impl AsRef<Path>, right: impl AsRef<Path>) -> Result<()> {
        write_tensor(left, &self.left)?;
        write_tensor(right, &self.right)
    }

    pub fn read(left: impl AsRef<Path>, right: impl AsRef<Path>) -> Result<Self> {
        Self::new(read_tensor(left)?, read_tensor(right)?)
            .map_err(Error::into_format)
    }
}
