use nalgebra::DMatrix;

use super::nf::QuantizedMatrix;
use crate::error::{Error, Result};
use crate::factorize::LowRankFactors;
use crate::tensor_io::DenseMatrix;

fn check_shapes(x: &DenseMatrix, q: &QuantizedMatrix, factors: Option<&LowRankFactors>) -> Result<()> {
    if x.cols() != q.rows() {
        return Err(Error::arg(format!(
            "inner dimensions differ: x is {:?}, q is {:?}",
            x.shape(),
            q.shape()
        )));
    }
    if let Some(f) = factors {
        if f.shape() != q.shape() {
            return Err(Error::arg(format!(
                "factor product {:?} does not match quantized shape {:?}",
                f.shape(),
                q.shape()
            )));
        }
    }
    Ok(())
}

/// `x · (dequantize(q) + L1 L2)` without materializing the dequantized matrix.
///
/// Rows of `q` are dequantized one at a time into a scratch buffer and
/// accumulated into the output in `f64`.
pub fn matmul_dequant(
    x: &DenseMatrix,
    q: &QuantizedMatrix,
    factors: Option<&LowRankFactors>,
) -> Result<DenseMatrix> {
    check_shapes(x, q, factors)?;
    let (n, d) = x.shape();
    let k = q.cols();
    let codes = q.codes();
    let scales = q.block_scales();
    let mut acc = vec![0.0f64; n * k];
    let mut row = vec![0.0f32; k];
    for p in 0..d {
        q.dequantize_range(&codes, &scales, p * k, &mut row);
        for i in 0..n {
            let a = x.get(i, p) as f64;
            if a == 0.0 {
                continue;
            }
            let out = &mut acc[i * k..(i + 1) * k];
            for (o, &w) in out.iter_mut().zip(&row) {
                *o += a * w as f64;
            }
        }
    }
    if let Some(f) = factors {
        let projected = x.to_nalgebra() * f.left().to_nalgebra();
        let low = projected * f.right().to_nalgebra();
        for i in 0..n {
            for j in 0..k {
                acc[i * k + j] += low[(i, j)];
            }
        }
    }
    DenseMatrix::new(n, k, acc.into_iter().map(|v| v as f32).collect())
        .map_err(|_| Error::Numerical("overflow in quantized matmul".into()))
}

/// Dense double-precision evaluation of `x · dequantize(q) + x · L1 · L2`.
pub fn matmul_dense_reference(
    x: &DenseMatrix,
    q: &QuantizedMatrix,
    factors: Option<&LowRankFactors>,
) -> Result<DMatrix<f64>> {
    check_shapes(x, q, factors)?;
    let xm = x.to_nalgebra();
    let mut out = &xm * q.dequantize().to_nalgebra();
    if let Some(f) = factors {
        out += (&xm * f.left().to_nalgebra()) * f.right().to_nalgebra();
    }
    Ok(out)
}
