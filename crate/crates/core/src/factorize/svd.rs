use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LowRankFactors;
use crate::error::{Error, Result};
use crate::tensor_io::generate::gaussian_matrix;
use crate::tensor_io::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMethod {
    /// Full SVD, truncated.
    Exact,
    /// Gaussian range sketch with power iterations.
    Randomized {
        oversampling: usize,
        power_iterations: usize,
    },
}

impl SvdMethod {
    /// Randomized SVD with 8 extra sketch columns and 2 power iterations.
    pub const fn randomized() -> Self {
        SvdMethod::Randomized {
            oversampling: 8,
            power_iterations: 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SvdMethod::Exact => "exact",
            SvdMethod::Randomized { .. } => "randomized",
        }
    }
}

impl Default for SvdMethod {
    fn default() -> Self {
        Self::randomized()
    }
}

impl FromStr for SvdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SvdMethod::Exact),
            "randomized" => Ok(SvdMethod::randomized()),
            other => Err(Error::arg(format!(
                "unknown SVD method {other:?} (expected exact or randomized)"
            ))),
        }
    }
}

/// Top-`r` singular triples, singular values descending.
#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl TruncatedSvd {
    /// `L1 = U√Σ`, `L2 = √ΣVᵀ`, before rounding.
    pub fn split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut left = self.u.clone();
        let mut right = self.v_t.clone();
        for (i, &s) in self.singular_values.iter().enumerate() {
            let root = s.max(0.0).sqrt();
            left.column_mut(i).scale_mut(root);
            right.row_mut(i).scale_mut(root);
        }
        (left, right)
    }
}

fn sorted_truncation(
    u: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
    rank: usize,
) -> TruncatedSvd {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    order.truncate(rank);
    TruncatedSvd {
        u: u.select_columns(&order),
        singular_values: DVector::from_iterator(rank, order.iter().map(|&i| s[i])),
        v_t: v_t.select_rows(&order),
    }
}

fn exact(a: &DMatrix<f64>, rank: usize) -> Result<TruncatedSvd> {
    let svd = a.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    Ok(sorted_truncation(u, svd.singular_values, v_t, rank))
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

fn randomized(
    a: &DMatrix<f64>,
    rank: usize,
    oversampling: usize,
    power_iterations: usize,
    seed: u64,
) -> Result<TruncatedSvd> {
    let (d, k) = a.shape();
    let sketch = (rank + oversampling).min(d.min(k));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = gaussian_matrix(&mut rng, k, sketch);
    let mut q = orthonormalize(a * omega);
    for _ in 0..power_iterations {
        let z = orthonormalize(a.tr_mul(&q));
        q = orthonormalize(a * z);
    }
    let b = q.tr_mul(a);
    let small = exact(&b, rank)?;
    Ok(TruncatedSvd {
        u: q * small.u,
        singular_values: small.singular_values,
        v_t: small.v_t,
    })
}

/// Top-`rank` SVD of a double-precision matrix.
pub fn truncated_svd_f64(
    a: &DMatrix<f64>,
    rank: usize,
    method: SvdMethod,
    seed: u64,
) -> Result<TruncatedSvd> {
    let (d, k) = a.shape();
    if rank == 0 || rank > d.min(k) {
        return Err(Error::arg(format!(
            "rank {rank} outside 1..={} for a {d}x{k} matrix",
            d.min(k)
        )));
    }
    let out = match method {
        SvdMethod::Exact => exact(a, rank)?,
        SvdMethod::Randomized {
            oversampling,
            power_iterations,
        } => randomized(a, rank, oversampling, power_iterations, seed)?,
    };
    if out.singular_values.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite singular value".into()));
    }
    Ok(out)
}

/// Rank-`rank` factors `L1 = U√Σ`, `L2 = √ΣVᵀ` of `a`.
pub fn svd_truncated(
    a: &DenseMatrix,
    rank: usize,
    method: SvdMethod,
    seed: u64,
) -> Result<LowRankFactors> {
    let (left, right) = truncated_svd_f64(&a.to_nalgebra(), rank, method, seed)?.split();
    LowRankFactors::new(DenseMatrix::from_nalgebra(&left)?, DenseMatrix::from_nalgebra(&right)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::{gen_matrix, GenParams, MatrixKind};

    fn recon_error(a: &DenseMatrix, f: &LowRankFactors) -> f64 {
        (a.to_nalgebra() - f.product()).norm()
    }

    #[test]
    fn recovers_exact_low_rank() {
        let p = GenParams {
            rank: Some(5),
            ..Default::default()
        };
        let a = gen_matrix(MatrixKind::LowRank, 40, 30, 2, &p).unwrap();
        for method in [SvdMethod::Exact, SvdMethod::randomized()] {
            let f = svd_truncated(&a, 5, method, 9).unwrap();
            assert_eq!(f.rank(), 5);
            assert!(recon_error(&a, &f) <= 1e-4 * a.frobenius_norm());
        }
    }

    #[test]
    fn full_rank_is_identity() {
        let a = gen_matrix(MatrixKind::Gaussian, 12, 20, 4, &GenParams::default()).unwrap();
        let f = svd_truncated(&a, 12, SvdMethod::Exact, 0).unwrap();
        assert!(recon_error(&a, &f) <= 1e-4 * a.frobenius_norm());
    }

    #[test]
    fn rank_bounds() {
        let a = DenseMatrix::zeros(3, 4);
        assert!(svd_truncated(&a, 0, SvdMethod::Exact, 0).is_err());
        assert!(svd_truncated(&a, 4, SvdMethod::Exact, 0).is_err());
    }

    #[test]
    fn error_non_increasing_in_rank() {
        let a = gen_matrix(MatrixKind::Gaussian, 24, 18, 8, &GenParams::default()).unwrap();
        let norm = a.frobenius_norm();
        let mut prev = f64::INFINITY;
        for r in 1..=18 {
            let e = recon_error(&a, &svd_truncated(&a, r, SvdMethod::Exact, 0).unwrap());
            assert!(e <= prev + 1e-9 * norm, "rank {r}");
            prev = e;
        }
    }

    #[test]
    fn factor_norms_balanced() {
        let a = gen_matrix(MatrixKind::Gaussian, 30, 50, 1, &GenParams::default()).unwrap();
        let f = svd_truncated(&a, 7, SvdMethod::Exact, 0).unwrap();
        let (l, r) = (f.left().frobenius_norm(), f.right().frobenius_norm());
        assert!((l - r).abs() <= 1e-5 * l);
    }

    #[test]
    fn randomized_is_reproducible() {
        let a = gen_matrix(MatrixKind::Gaussian, 64, 48, 1, &GenParams::default()).unwrap();
        let f1 = svd_truncated(&a, 6, SvdMethod::randomized(), 42).unwrap();
        let f2 = svd_truncated(&a, 6, SvdMethod::randomized(), 42).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn randomized_close_to_exact_on_decaying_spectrum() {
        let a = gen_matrix(MatrixKind::DecayingSpectrum, 256, 256, 3, &GenParams::default()).unwrap();
        let exact = recon_error(&a, &svd_truncated(&a, 16, SvdMethod::Exact, 0).unwrap());
        let approx = recon_error(&a, &svd_truncated(&a, 16, SvdMethod::randomized(), 5).unwrap());
        assert!(approx <= 1.05 * exact, "{approx} vs {exact}");
    }

    #[test]
    fn parse_method() {
        assert_eq!("exact".parse::<SvdMethod>().unwrap(), SvdMethod::Exact);
        assert_eq!("randomized".parse::<SvdMethod>().unwrap(), SvdMethod::randomized());
        assert!("lanczos".parse::<SvdMethod>().is_err());
    }
}
