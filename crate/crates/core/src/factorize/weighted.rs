use nalgebra::DMatrix;

use super::svd::{truncated_svd_f64, SvdMethod};
use super::LowRankFactors;
use crate::error::{Error, Result};
use crate::tensor_io::{DenseMatrix, FisherDiag};

/// Relative floor applied to vanishing row/column means of `√F`.
const SCALER_FLOOR: f64 = 1e-8;

/// Diagonal row and column scalings derived from a Fisher diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScalers {
    pub row: Vec<f64>,
    pub col: Vec<f64>,
}

fn floor_means(means: &mut [f64]) {
    let max = means.iter().copied().fold(0.0f64, f64::max);
    let floor = SCALER_FLOOR * max;
    for m in means.iter_mut() {
        if *m < floor {
            *m = floor;
        }
    }
}

/// Row means and column means of `√F`.
///
/// A mean below `1e-8` times the largest mean on the same axis is raised to
/// that floor; an all-zero `F` yields all-ones scalers.
pub fn fisher_scalers(f: &FisherDiag) -> Result<WeightScalers> {
    let (d, k) = f.shape();
    let mut row = vec![0.0f64; d];
    let mut col = vec![0.0f64; k];
    for (i, acc) in row.iter_mut().enumerate() {
        for (j, &v) in f.matrix().row(i).iter().enumerate() {
            if v < 0.0 {
                return Err(Error::arg(format!("negative Fisher entry at ({i}, {j})")));
            }
            let root = (v as f64).sqrt();
            *acc += root;
            col[j] += root;
        }
    }
    row.iter_mut().for_each(|m| *m /= k as f64);
    col.iter_mut().for_each(|m| *m /= d as f64);
    if row.iter().all(|&m| m == 0.0) {
        return Ok(WeightScalers {
            row: vec![1.0; d],
            col: vec![1.0; k],
        });
    }
    floor_means(&mut row);
    floor_means(&mut col);
    Ok(WeightScalers { row, col })
}

/// Low-rank factors of a double-precision matrix, optionally Fisher-weighted.
pub fn factorize_f64(
    a: &DMatrix<f64>,
    fisher: Option<&FisherDiag>,
    rank: usize,
    method: SvdMethod,
    seed: u64,
) -> Result<LowRankFactors> {
    let (left, right) = match fisher {
        None => truncated_svd_f64(a, rank, method, seed)?.split(),
        Some(f) => {
            f.check_matches(a.shape())?;
            let s = fisher_scalers(f)?;
            let mut scaled = a.clone();
            for (i, &r) in s.row.iter().enumerate() {
                scaled.row_mut(i).scale_mut(r);
            }
            for (j, &c) in s.col.iter().enumerate() {
                scaled.column_mut(j).scale_mut(c);
            }
            let (mut left, mut right) = truncated_svd_f64(&scaled, rank, method, seed)?.split();
            for (i, &r) in s.row.iter().enumerate() {
                left.row_mut(i).unscale_mut(r);
            }
            for (j, &c) in s.col.iter().enumerate() {
                right.column_mut(j).unscale_mut(c);
            }
            (left, right)
        }
    };
    LowRankFactors::new(
        DenseMatrix::from_nalgebra(&left)?,
        DenseMatrix::from_nalgebra(&right)?,
    )
}

pub fn factorize(
    a: &DenseMatrix,
    fisher: Option<&FisherDiag>,
    rank: usize,
    method: SvdMethod,
    seed: u64,
) -> Result<LowRankFactors> {
    factorize_f64(&a.to_nalgebra(), fisher, rank, method, seed)
}

/// `‖√F ⊙ (W − (Q + L1 L2))‖_F`, or the plain Frobenius norm without `F`.
pub fn weighted_error(
    w: &DenseMatrix,
    q_dequant: &DenseMatrix,
    factors: &LowRankFactors,
    fisher: Option<&FisherDiag>,
) -> Result<f64> {
    let shape = w.shape();
    if q_dequant.shape() != shape || factors.shape() != shape {
        return Err(Error::arg(format!(
            "shape mismatch: W {shape:?}, Q {:?}, L1L2 {:?}",
            q_dequant.shape(),
            factors.shape()
        )));
    }
    if let Some(f) = fisher {
        f.check_matches(shape)?;
    }
    let low = factors.product();
    let cols = shape.1;
    let mut sum = 0.0f64;
    for (idx, (&wv, &qv)) in w.data().iter().zip(q_dequant.data()).enumerate() {
        let (i, j) = (idx / cols, idx % cols);
        let r = wv as f64 - (qv as f64 + low[(i, j)]);
        let weight = fisher.map_or(1.0, |f| f.data()[idx] as f64);
        sum += weight * r * r;
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorize::svd_truncated;
    use crate::tensor_io::{gen_fisher, gen_matrix, FisherKind, GenParams, MatrixKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fisher(d: usize, k: usize, f: impl FnMut(usize, usize) -> f32) -> FisherDiag {
        FisherDiag::new(DenseMatrix::from_fn(d, k, f)).unwrap()
    }

    #[test]
    fn uniform_scalers_are_ones() {
        let s = fisher_scalers(&gen_fisher(FisherKind::Uniform, 3, 4, 0).unwrap()).unwrap();
        assert_eq!(s.row, vec![1.0; 3]);
        assert_eq!(s.col, vec![1.0; 4]);
    }

    #[test]
    fn zero_fisher_gives_ones() {
        let s = fisher_scalers(&fisher(2, 3, |_, _| 0.0)).unwrap();
        assert_eq!(s.row, vec![1.0; 2]);
        assert_eq!(s.col, vec![1.0; 3]);
    }

    #[test]
    fn separable_scalers_are_proportional() {
        let r = [0.5f64, 1.0, 3.0];
        let c = [2.0, 0.25, 1.0, 4.0];
        let f = fisher(3, 4, |i, j| (r[i] * c[j]).powi(2) as f32);
        let s = fisher_scalers(&f).unwrap();
        let mean_c: f64 = c.iter().sum::<f64>() / 4.0;
        let mean_r: f64 = r.iter().sum::<f64>() / 3.0;
        for (got, ri) in s.row.iter().zip(r) {
            assert!((got - ri * mean_c).abs() < 1e-6);
        }
        for (got, cj) in s.col.iter().zip(c) {
            assert!((got - cj * mean_r).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_row_is_floored() {
        let f = fisher(3, 2, |i, _| if i == 1 { 0.0 } else { 4.0 });
        let s = fisher_scalers(&f).unwrap();
        assert_eq!(s.row[1], 2.0 * 1e-8);
        assert!(s.row.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn hand_weighted_error() {
        let w = DenseMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
        let q = DenseMatrix::zeros(2, 2);
        let factors = LowRankFactors::new(DenseMatrix::zeros(2, 1), DenseMatrix::zeros(1, 2)).unwrap();
        let f = fisher(2, 2, |i, j| [[4.0, 1.0], [1.0, 9.0]][i][j]);
        let e = weighted_error(&w, &q, &factors, Some(&f)).unwrap();
        assert!((e - 40f64.sqrt()).abs() < 1e-12);
        let plain = weighted_error(&w, &q, &factors, None).unwrap();
        assert!((plain - 5f64.sqrt()).abs() < 1e-12);
        let ones = gen_fisher(FisherKind::Uniform, 2, 2, 0).unwrap();
        assert_eq!(weighted_error(&w, &q, &factors, Some(&ones)).unwrap(), plain);
    }

    #[test]
    fn exact_decomposition_has_zero_error() {
        let a = gen_matrix(MatrixKind::Gaussian, 6, 5, 3, &GenParams::default()).unwrap();
        let f = svd_truncated(&a, 2, SvdMethod::Exact, 0).unwrap();
        let low = DenseMatrix::from_nalgebra(&f.product()).unwrap();
        let q = a.sub(&low).unwrap();
        // W = Q + L1L2 up to f32 rounding of Q.
        assert!(weighted_error(&a, &q, &f, None).unwrap() < 1e-6);
    }

    #[test]
    fn uniform_weighting_matches_plain_svd() {
        let a = gen_matrix(MatrixKind::Gaussian, 20, 30, 2, &GenParams::default()).unwrap();
        let ones = gen_fisher(FisherKind::Uniform, 20, 30, 0).unwrap();
        let z = DenseMatrix::zeros(20, 30);
        let weighted = factorize(&a, Some(&ones), 4, SvdMethod::Exact, 0).unwrap();
        let plain = factorize(&a, None, 4, SvdMethod::Exact, 0).unwrap();
        let ew = weighted_error(&a, &z, &weighted, Some(&ones)).unwrap();
        let ep = weighted_error(&a, &z, &plain, None).unwrap();
        assert!((ew - ep).abs() <= 1e-9 * ep);
    }

    #[test]
    fn full_rank_weighted_recovery() {
        let a = gen_matrix(MatrixKind::Gaussian, 10, 14, 2, &GenParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = fisher(10, 14, |_, _| rng.random_range(0.1..5.0));
        let z = DenseMatrix::zeros(10, 14);
        let factors = factorize(&a, Some(&f), 10, SvdMethod::Exact, 0).unwrap();
        let err = weighted_error(&a, &z, &factors, Some(&f)).unwrap();
        let scale = weighted_error(&a, &z, &LowRankFactors::new(DenseMatrix::zeros(10, 1), DenseMatrix::zeros(1, 14)).unwrap(), Some(&f)).unwrap();
        assert!(err <= 1e-4 * scale);
    }

    #[test]
    fn shape_mismatch() {
        let a = DenseMatrix::zeros(4, 4);
        let f = gen_fisher(FisherKind::Uniform, 4, 5, 0).unwrap();
        assert!(factorize(&a, Some(&f), 2, SvdMethod::Exact, 0).is_err());
        let factors = LowRankFactors::new(DenseMatrix::zeros(4, 1), DenseMatrix::zeros(1, 3)).unwrap();
        assert!(weighted_error(&a, &a, &factors, None).is_err());
    }
}
