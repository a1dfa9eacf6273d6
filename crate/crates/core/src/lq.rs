//! Alternating low-rank plus quantized decomposition.
//!
//! Starting from `Q = 0`, each iteration fits rank-`r` factors to `W − Q`,
//! then re-quantizes `W − L1 L2`. The (optionally Fisher-weighted)
//! reconstruction error is tracked and the loop stops as soon as it grows,
//! reaches numerical zero, or the iteration cap is hit. The best iterate seen
//! is returned, not the last one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{factorize_f64, weighted_error, LowRankFactors, SvdMethod};
use crate::quant::{quantize_nf, QuantConfig, QuantizedMatrix};
use crate::tensor_io::{DenseMatrix, FisherDiag};

/// Errors at or below this fraction of `‖W‖` (weighted when `F` is given) stop the loop.
pub const ZERO_ERROR_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ErrorIncreased,
    MaxIters,
    ZeroError,
}

/// Starting point for the quantized component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LqInit {
    #[default]
    Zero,
    /// `Q⁽⁰⁾ = quantize(W)`.
    Quantized,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqOptions {
    pub max_iters: usize,
    pub method: SvdMethod,
    pub seed: u64,
    pub init: LqInit,
}

impl Default for LqOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            method: SvdMethod::randomized(),
            seed: 0,
            init: LqInit::Zero,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LqResult {
    pub q: QuantizedMatrix,
    pub factors: LowRankFactors,
    /// `ε_t` for every completed iteration, including a final increase.
    pub error_trace: Vec<f64>,
    /// Index into `error_trace` of the returned iterate.
    pub chosen_iteration: usize,
    pub stop_reason: StopReason,
}

impl LqResult {
    pub fn error(&self) -> f64 {
        self.error_trace[self.chosen_iteration]
    }
}

/// Per-iteration sketch seed, so randomized SVDs differ between iterations
/// but stay reproducible.
fn iteration_seed(seed: u64, t: usize) -> u64 {
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn weighted_norm(w: &DenseMatrix, fisher: Option<&FisherDiag>) -> f64 {
    match fisher {
        None => w.frobenius_norm(),
        Some(f) => w
            .data()
            .iter()
            .zip(f.data())
            .map(|(&v, &fv)| fv as f64 * (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt(),
    }
}

pub fn lq_decompose(
    w: &DenseMatrix,
    fisher: Option<&FisherDiag>,
    cfg: &QuantConfig,
    rank: usize,
    opts: &LqOptions,
) -> Result<LqResult> {
    cfg.validate()?;
    if opts.max_iters == 0 {
        return Err(Error::arg("max_iters must be at least 1"));
    }
    let (d, k) = w.shape();
    if rank == 0 || rank > d.min(k) {
        return Err(Error::arg(format!(
            "rank {rank} outside 1..={} for a {d}x{k} matrix",
            d.min(k)
        )));
    }
    if let Some(f) = fisher {
        f.check_matches(w.shape())?;
    }

    let target = w.to_nalgebra();
    let zero_tol = ZERO_ERROR_TOLERANCE * weighted_norm(w, fisher);
    let mut q_dequant = match opts.init {
        LqInit::Zero => DenseMatrix::zeros(d, k),
        LqInit::Quantized => quantize_nf(w, cfg)?.dequantize(),
    };

    let mut trace = Vec::new();
    let mut best: Option<(usize, QuantizedMatrix, LowRankFactors)> = None;
    let mut best_err = f64::INFINITY;
    let mut prev = f64::INFINITY;
    let mut reason = StopReason::MaxIters;

    for t in 1..=opts.max_iters {
        let residual = &target - q_dequant.to_nalgebra();
        let factors = factorize_f64(&residual, fisher, rank, opts.method, iteration_seed(opts.seed, t))?;
        let to_quantize = DenseMatrix::from_nalgebra(&(&target - factors.product()))?;
        let q = quantize_nf(&to_quantize, cfg)?;
        q_dequant = q.dequantize();
        let err = weighted_error(w, &q_dequant, &factors, fisher)?;
        if !err.is_finite() {
            return Err(Error::Numerical(format!("non-finite error at iteration {t}")));
        }
        trace.push(err);
        if err < best_err {
            best_err = err;
            best = Some((trace.len() - 1, q, factors));
        }
        if err > prev {
            reason = StopReason::ErrorIncreased;
            break;
        }
        if err <= zero_tol {
            reason = StopReason::ZeroError;
            break;
        }
        prev = err;
    }

    let (chosen_iteration, q, factors) = best.expect("at least one iteration recorded");
    Ok(LqResult {
        q,
        factors,
        error_trace: trace,
        chosen_iteration,
        stop_reason: reason,
    })
}

/// Serializable summary of one decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqReport {
    pub rows: usize,
    pub cols: usize,
    pub config: QuantConfig,
    pub rank: usize,
    pub method: String,
    pub seed: u64,
    pub fisher_weighted: bool,
    pub error_trace: Vec<f64>,
    pub chosen_iteration: usize,
    pub stop_reason: StopReason,
    pub final_error: f64,
}

impl LqReport {
    pub fn new(result: &LqResult, rank: usize, opts: &LqOptions, fisher_weighted: bool) -> Self {
        Self {
            rows: result.q.rows(),
            cols: result.q.cols(),
            config: *result.q.config(),
            rank,
            method: opts.method.name().to_string(),
            seed: opts.seed,
            fisher_weighted,
            error_trace: result.error_trace.clone(),
            chosen_iteration: result.chosen_iteration,
            stop_reason: result.stop_reason,
            final_error: result.error(),
        }
    }
}
