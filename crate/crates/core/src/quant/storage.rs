use num_rational::Ratio;

use super::config::QuantConfig;

/// Exact rational bit counts.
pub type Bits = Ratio<u64>;

/// Amortized storage cost `b0 + b1/B0 + w(b2)/(B0·B1)` in bits per parameter.
pub fn storage_bits_per_param(cfg: &QuantConfig) -> Bits {
    let block = cfg.block_size as u64;
    let group = cfg.group_size as u64;
    Bits::from_integer(cfg.b0 as u64)
        + Bits::new(cfg.b1 as u64, block)
        + Bits::new(cfg.b2.bits() as u64, block * group)
}
