use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DenseMatrix, FisherDiag};
use crate::error::{Error, Result};
use crate::quant::{QuantConfig, QuantizedMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Random orthogonal bases around singular values `rho^i`, `i = 1..`.
    DecayingSpectrum,
    /// Product of two Gaussian factors with inner dimension `rank`.
    LowRank,
    /// Values exactly representable by a quantization config.
    OnGrid,
}

impl std::str::FromStr for MatrixKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "decaying-spectrum" => Ok(Self::DecayingSpectrum),
            "low-rank" => Ok(Self::LowRank),
            "on-grid" => Ok(Self::OnGrid),
            other => Err(Error::arg(format!("unknown matrix kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherKind {
    Uniform,
    Separable,
    RandomNonneg,
}

impl std::str::FromStr for FisherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "separable" => Ok(Self::Separable),
            "random-nonneg" => Ok(Self::RandomNonneg),
            other => Err(Error::arg(format!("unknown fisher kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenParams {
    pub rank: Option<usize>,
    pub rho: f64,
    /// Required for [`MatrixKind::OnGrid`].
    pub config: Option<QuantConfig>,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            rank: None,
            rho: 0.9,
            config: None,
        }
    }
}

pub(crate) fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    // Filled row-major so the stream layout does not depend on nalgebra's storage order.
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn orthonormal_columns(rng: &mut impl Rng, n: usize, m: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, m).qr().q()
}

pub fn gen_matrix(
    kind: MatrixKind,
    rows: usize,
    cols: usize,
    seed: u64,
    params: &GenParams,
) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::arg("rows and cols must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        MatrixKind::Gaussian => {
            let data = (0..rows * cols)
                .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
                .collect();
            DenseMatrix::new(rows, cols, data)
        }
        MatrixKind::DecayingSpectrum => {
            let rho = params.rho;
            if !(rho > 0.0 && rho < 1.0) {
                return Err(Error::arg(format!("rho must lie in (0, 1), got {rho}")));
            }
            let m = rows.min(cols);
            let u = orthonormal_columns(&mut rng, rows, m);
            let v = orthonormal_columns(&mut rng, cols, m);
            let mut us = u;
            for i in 0..m {
                let sigma = rho.powi(i as i32 + 1);
                us.column_mut(i).scale_mut(sigma);
            }
            DenseMatrix::from_nalgebra(&(us * v.transpose()))
        }
        MatrixKind::LowRank => {
            let rank = params
                .rank
                .ok_or_else(|| Error::arg("low-rank generator needs a rank"))?;
            if rank == 0 || rank > rows.min(cols) {
                return Err(Error::arg(format!(
                    "rank {rank} outside 1..={}",
                    rows.min(cols)
                )));
            }
            let left = gaussian_matrix(&mut rng, rows, rank);
            let right = gaussian_matrix(&mut rng, rank, cols);
            let scaled = (left * right) / (rank as f64).sqrt();
            DenseMatrix::from_nalgebra(&scaled)
        }
        MatrixKind::OnGrid => {
            let cfg = params
                .config
                .ok_or_else(|| Error::arg("on-grid generator needs a quantization config"))?;
            on_grid(&mut rng, rows, cols, &cfg)
        }
    }
}

/// Draws codes and scales directly in the quantized domain and dequantizes them.
///
/// Every block holds at least one entry at level ±1 and every group holds at
/// least one block at the top second-level code, so re-quantizing the output
/// recovers the same codes and scales. Group maxima are multiples of 1/16 in
/// [0.5, 4], exact in every scale format.
fn on_grid(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    cfg: &QuantConfig,
) -> Result<DenseMatrix> {
    let n = rows * cols;
    let n_blocks = cfg.num_blocks(n);
    let n_groups = cfg.num_groups(n);
    let levels = 1u32 << cfg.b0;
    let top_s = (1u32 << cfg.b1) - 1;
    let block = cfg.block_size as usize;
    let group = cfg.group_size as usize;

    let mut codes = Vec::with_capacity(n);
    for b in 0..n_blocks {
        let start = b * block;
        let len = block.min(n - start);
        let anchor = rng.random_range(0..len);
        for j in 0..len {
            if j == anchor {
                codes.push(if rng.random_bool(0.5) { 0 } else { levels - 1 });
            } else {
                codes.push(rng.random_range(0..levels));
            }
        }
    }

    let mut s_codes = Vec::with_capacity(n_blocks);
    let mut group_scales = Vec::with_capacity(n_groups);
    for g in 0..n_groups {
        let start = g * group;
        let len = group.min(n_blocks - start);
        let anchor = rng.random_range(0..len);
        for j in 0..len {
            s_codes.push(if j == anchor {
                top_s
            } else {
                rng.random_range(1..=top_s)
            });
        }
        group_scales.push(rng.random_range(8..=64u32) as f32 / 16.0);
    }

    // Codes stay below 2^8, so narrowing is lossless.
    let codes: Vec<u8> = codes.into_iter().map(|c| c as u8).collect();
    let s_codes: Vec<u8> = s_codes.into_iter().map(|c| c as u8).collect();
    let q = QuantizedMatrix::from_codes(rows, cols, *cfg, &codes, &s_codes, group_scales)?;
    Ok(q.dequantize())
}

pub fn gen_fisher(kind: FisherKind, rows: usize, cols: usize, seed: u64) -> Result<FisherDiag> {
    if rows == 0 || cols == 0 {
        return Err(Error::arg("rows and cols must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = match kind {
        FisherKind::Uniform => DenseMatrix::new(rows, cols, vec![1.0; rows * cols])?,
        FisherKind::Separable => {
            let r: Vec<f64> = (0..rows).map(|_| rng.random_range(0.5..2.0)).collect();
            let c: Vec<f64> = (0..cols).map(|_| rng.random_range(0.5..2.0)).collect();
            DenseMatrix::from_fn(rows, cols, |i, j| (r[i] * c[j]) as f32)
        }
        FisherKind::RandomNonneg => {
            let data = (0..rows * cols)
                .map(|_| rng.sample::<f64, _>(StandardNormal).abs() as f32)
                .collect();
            DenseMatrix::new(rows, cols, data)?
        }
    };
    FisherDiag::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn singular_values(m: &DenseMatrix) -> Vec<f64> {
        let mut s: Vec<f64> = m.to_nalgebra().singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    #[test]
    fn gaussian_is_deterministic() {
        let p = GenParams::default();
        let a = gen_matrix(MatrixKind::Gaussian, 8, 8, 7, &p).unwrap();
        let b = gen_matrix(MatrixKind::Gaussian, 8, 8, 7, &p).unwrap();
        assert_eq!(a, b);
        let c = gen_matrix(MatrixKind::Gaussian, 8, 8, 8, &p).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn low_rank_has_exact_rank() {
        let p = GenParams {
            rank: Some(4),
            ..Default::default()
        };
        let m = gen_matrix(MatrixKind::LowRank, 64, 64, 1, &p).unwrap();
        let s = singular_values(&m);
        for &tail in &s[4..8] {
            assert!(tail <= 1e-4 * s[0], "tail {tail} vs {}", s[0]);
        }
        assert!(s[3] > 1e-2 * s[0]);
    }

    #[test]
    fn low_rank_validates_rank() {
        let p = GenParams {
            rank: Some(9),
            ..Default::default()
        };
        assert!(gen_matrix(MatrixKind::LowRank, 8, 16, 1, &p).is_err());
        assert!(gen_matrix(MatrixKind::LowRank, 8, 16, 1, &GenParams::default()).is_err());
    }

    #[test]
    fn decaying_spectrum_ratio() {
        let p = GenParams {
            rho: 0.5,
            ..Default::default()
        };
        let m = gen_matrix(MatrixKind::DecayingSpectrum, 32, 32, 3, &p).unwrap();
        let s = singular_values(&m);
        assert!((s[1] / s[0] - 0.5).abs() < 1e-5, "{}", s[1] / s[0]);
        assert!((s[0] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn rejects_zero_dims_and_bad_rho() {
        let p = GenParams::default();
        assert!(gen_matrix(MatrixKind::Gaussian, 0, 3, 1, &p).is_err());
        let bad = GenParams {
            rho: 1.5,
            ..Default::default()
        };
        assert!(gen_matrix(MatrixKind::DecayingSpectrum, 4, 4, 1, &bad).is_err());
        assert!(gen_matrix(MatrixKind::OnGrid, 4, 4, 1, &p).is_err());
    }

    #[test]
    fn fisher_kinds() {
        let u = gen_fisher(FisherKind::Uniform, 3, 3, 11).unwrap();
        assert!(u.data().iter().all(|&v| v == 1.0));

        let s = gen_fisher(FisherKind::Separable, 4, 5, 2).unwrap();
        let sv = singular_values(s.matrix());
        assert!(sv[1] <= 1e-6 * sv[0]);
        assert!(s.data().iter().all(|v| (0.25..=4.0).contains(v)));

        let r = gen_fisher(FisherKind::RandomNonneg, 2, 2, 9).unwrap();
        assert!(r.data().iter().all(|&v| v >= 0.0));
    }
}
