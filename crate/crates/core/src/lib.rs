//! Low-rank plus quantized (LQ) matrix decomposition.
//!
//! A weight matrix `W` is split into a NormalFloat-quantized component `Q`
//! and a rank-`r` pair of factors `L1 L2` so that `W ≈ Q + L1 L2`. The crate
//! provides:
//!
//! * [`tensor_io`]: the `LQT1` dense tensor format, synthetic fixtures and
//!   model-dimension presets.
//! * [`quant`]: NormalFloat codebooks, blockwise quantization with two-level
//!   scale quantization, bit packing, the `LQQ1` container and storage math.
//! * [`factorize`]: exact and randomized truncated SVD plus the
//!   Fisher-weighted row/column-scaled factorization.
//! * [`lq`]: the alternating decomposition itself.
//! * [`alloc`]: error sweeps over configuration grids, an exact
//!   multiple-choice knapsack solver and storage accounting.
//! * [`cli`]: the `lqdec` command-line front end.

pub mod alloc;
pub mod cli;
pub mod error;
pub mod factorize;
pub mod lq;
pub mod quant;
pub mod tensor_io;

pub use error::{Error, Result};
pub use factorize::{LowRankFactors, SvdMethod};
pub use lq::{lq_decompose, LqOptions, LqResult, StopReason};
pub use quant::{FloatFormat, QuantConfig, QuantizedMatrix};
pub use tensor_io::{DenseMatrix, FisherDiag};
