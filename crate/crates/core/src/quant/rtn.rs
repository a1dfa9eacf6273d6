use crate::error::{Error, Result};

/// Unsigned round-to-nearest quantization of a nonnegative vector in groups.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsignedRtn {
    pub bits: u8,
    pub group_size: usize,
    pub codes: Vec<u8>,
    /// Maximum of each group; the group's step is `max / (2^bits - 1)`.
    pub group_max: Vec<f64>,
}

impl UnsignedRtn {
    pub fn max_code(&self) -> u32 {
        (1u32 << self.bits) - 1
    }

    pub fn scale(&self, group: usize) -> f64 {
        self.group_max[group] / self.max_code() as f64
    }

    pub fn scales(&self) -> Vec<f64> {
        (0..self.group_max.len()).map(|g| self.scale(g)).collect()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        self.codes
            .iter()
            .enumerate()
            .map(|(i, &c)| dequantize_code(c, self.group_max[i / self.group_size], self.bits))
            .collect()
    }
}

/// `code * max / (2^bits - 1)`, with the top code mapped to `max` exactly.
pub(crate) fn dequantize_code(code: u8, group_max: f64, bits: u8) -> f64 {
    let top = (1u32 << bits) - 1;
    if code as u32 == top {
        group_max
    } else {
        (code as f64 * group_max) / top as f64
    }
}

/// Quantizes `v` with per-group step `max(group) / (2^bits - 1)` and codes
/// `clamp(round(v_i / step), 0, 2^bits - 1)`, rounding half away from zero.
/// All-zero groups get step 0 and zero codes.
pub fn rtn_quantize_unsigned(v: &[f64], bits: u8, group_size: usize) -> Result<UnsignedRtn> {
    if bits == 0 || bits > 8 {
        return Err(Error::arg(format!("bit width {bits} outside 1..=8")));
    }
    if group_size == 0 {
        return Err(Error::arg("group size must be at least 1"));
    }
    if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::arg(format!(
            "entry {i} = {} is not a finite nonnegative value",
            v[i]
        )));
    }
    let max_code = ((1u32 << bits) - 1) as f64;
    let mut codes = Vec::with_capacity(v.len());
    let mut group_max = Vec::with_capacity(v.len().div_ceil(group_size));
    for group in v.chunks(group_size) {
        let m = group.iter().copied().fold(0.0f64, f64::max);
        group_max.push(m);
        if m == 0.0 {
            codes.extend(std::iter::repeat_n(0u8, group.len()));
            continue;
        }
        let step = m / max_code;
        codes.extend(
            group
                .iter()
                .map(|&x| (x / step).round().clamp(0.0, max_code) as u8),
        );
    }
    Ok(UnsignedRtn {
        bits,
        group_size,
        codes,
        group_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_bit_example() {
        let q = rtn_quantize_unsigned(&[3.0, 6.0], 3, 2).unwrap();
        assert!((q.scale(0) - 6.0 / 7.0).abs() < 1e-15);
        assert_eq!(q.codes, vec![4, 7]);
        let d = q.dequantize();
        assert!((d[0] - 24.0 / 7.0).abs() < 1e-12);
        assert_eq!(d[1], 6.0);
    }

    #[test]
    fn zero_group() {
        let q = rtn_quantize_unsigned(&[0.0, 0.0, 0.0], 4, 8).unwrap();
        assert_eq!(q.codes, vec![0, 0, 0]);
        assert_eq!(q.scales(), vec![0.0]);
        assert_eq!(q.dequantize(), vec![0.0; 3]);
    }

    #[test]
    fn group_max_is_exact() {
        let v: Vec<f64> = (0..37).map(|i| ((i * 7919) % 101) as f64 * 0.013_7).collect();
        for bits in [2u8, 3, 4, 8] {
            let q = rtn_quantize_unsigned(&v, bits, 5).unwrap();
            let d = q.dequantize();
            for (g, chunk) in v.chunks(5).enumerate() {
                let m = chunk.iter().copied().fold(0.0, f64::max);
                let at = chunk.iter().position(|&x| x == m).unwrap();
                if m > 0.0 {
                    assert_eq!(q.codes[g * 5 + at] as u32, q.max_code());
                }
                assert_eq!(d[g * 5 + at], m);
            }
        }
    }

    #[test]
    fn rejects_negative() {
        assert!(rtn_quantize_unsigned(&[1.0, -1.0], 4, 2).is_err());
        assert!(rtn_quantize_unsigned(&[1.0], 4, 0).is_err());
    }
}
