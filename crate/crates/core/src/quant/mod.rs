//! NormalFloat quantization with double-quantized block scales.
//!
//! A matrix is flattened row-major and cut into blocks of `B0` entries. Each
//! block is scaled by its absolute maximum and every entry is coded as the
//! nearest level of a `b0`-bit NormalFloat codebook. The per-block maxima are
//! themselves quantized with unsigned round-to-nearest to `b1` bits in groups
//! of `B1`, and each group's maximum is stored in the float format `b2`.

mod codebook;
mod config;
mod container;
mod float;
mod matmul;
mod nf;
mod normal;
mod packing;
mod rtn;
mod storage;

pub use codebook::{build_codebook, codebook, Codebook};
pub use config::{FloatFormat, QuantConfig, SUPPORTED_BITS};
pub use container::{
    exact_container_bytes, read_quantized, write_quantized, ContainerBytes, LQQ_HEADER_BYTES,
};
pub use float::cast_float;
pub use matmul::{matmul_dense_reference, matmul_dequant};
pub use nf::{quantize_nf, QuantizedMatrix};
pub use normal::inverse_normal_cdf;
pub use packing::{pack_bits, packed_len, unpack_bits};
pub use rtn::{rtn_quantize_unsigned, UnsignedRtn};
pub use storage::{storage_bits_per_param, Bits};
