use std::sync::OnceLock;

use super::config::SUPPORTED_BITS;
use super::normal::inverse_normal_cdf;
use crate::error::{Error, Result};

/// Probability offset of the outermost NormalFloat quantiles.
pub const NF_DELTA: f64 = 0.5 * (1.0 / 30.0 + 1.0 / 32.0);

/// Normalized Gaussian quantiles in ascending order, spanning `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    bits: u8,
    levels: Vec<f64>,
}

impl Codebook {
    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn level(&self, code: u8) -> f64 {
        self.levels[code as usize]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of the exact zero level.
    pub fn zero_index(&self) -> u8 {
        ((1u32 << (self.bits - 1)) - 1) as u8
    }

    /// Index of the level nearest to `x`; ties go to the lower index.
    pub fn nearest(&self, x: f64) -> u8 {
        let levels = &self.levels;
        let i = levels.partition_point(|&l| l < x);
        if i == 0 {
            return 0;
        }
        if i == levels.len() {
            return (levels.len() - 1) as u8;
        }
        if x - levels[i - 1] <= levels[i] - x {
            (i - 1) as u8
        } else {
            i as u8
        }
    }
}

/// Probabilities whose quantiles form the `bits`-bit codebook: `2^(b-1)`
/// evenly spaced points on `[δ, ½]` followed by `2^(b-1)` more from the
/// `2^(b-1) + 1` evenly spaced points on `[½, 1-δ]` (the shared ½ once).
pub fn codebook_probabilities(bits: u8) -> Vec<f64> {
    let half = 1usize << (bits - 1);
    let lower_step = (0.5 - NF_DELTA) / (half - 1) as f64;
    let upper_step = (0.5 - NF_DELTA) / half as f64;
    let mut p = Vec::with_capacity(2 * half);
    for i in 0..half - 1 {
        p.push(NF_DELTA + i as f64 * lower_step);
    }
    p.push(0.5);
    for j in 1..half {
        p.push(0.5 + j as f64 * upper_step);
    }
    p.push(1.0 - NF_DELTA);
    p
}

pub fn build_codebook(bits: u8) -> Result<Codebook> {
    if !SUPPORTED_BITS.contains(&bits) {
        return Err(Error::arg(format!("codebook bits {bits} not in {{2,3,4,8}}")));
    }
    let probs = codebook_probabilities(bits);
    let top = inverse_normal_cdf(1.0 - NF_DELTA)?;
    let mut levels = probs
        .iter()
        .map(|&p| inverse_normal_cdf(p).map(|q| q / top))
        .collect::<Result<Vec<_>>>()?;
    // Endpoints and the median are exact by symmetry; pin them against rounding.
    let last = levels.len() - 1;
    levels[0] = -1.0;
    levels[last] = 1.0;
    levels[(1usize << (bits - 1)) - 1] = 0.0;
    Ok(Codebook { bits, levels })
}

/// Cached codebook for a supported bit width.
pub fn codebook(bits: u8) -> Result<&'static Codebook> {
    static CACHE: [OnceLock<Codebook>; 4] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    let slot = SUPPORTED_BITS
        .iter()
        .position(|&b| b == bits)
        .ok_or_else(|| Error::arg(format!("codebook bits {bits} not in {{2,3,4,8}}")))?;
    if let Some(cb) = CACHE[slot].get() {
        return Ok(cb);
    }
    let cb = build_codebook(bits)?;
    Ok(CACHE[slot].get_or_init(|| cb))
}
