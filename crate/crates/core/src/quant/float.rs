use half::{bf16, f16};

use super::config::FloatFormat;

/// Rounds each value to `fmt` (round-to-nearest-even) and widens it back to `f32`.
///
/// Values beyond the largest finite value of the target format saturate to it.
pub fn cast_float(x: &[f32], fmt: FloatFormat) -> Vec<f32> {
    x.iter().map(|&v| cast_one(v, fmt)).collect()
}

pub(crate) fn cast_one(v: f32, fmt: FloatFormat) -> f32 {
    match fmt {
        FloatFormat::Fp32 => v,
        FloatFormat::Fp16 => {
            let h = f16::from_f32(v);
            if h.is_infinite() {
                f16::MAX.to_f32().copysign(v)
            } else {
                h.to_f32()
            }
        }
        FloatFormat::Bf16 => {
            let h = bf16::from_f32(v);
            if h.is_infinite() {
                bf16::MAX.to_f32().copysign(v)
            } else {
                h.to_f32()
            }
        }
    }
}

/// Little-endian encoding of an already-cast value in the width of `fmt`.
pub(crate) fn encode(v: f32, fmt: FloatFormat, out: &mut Vec<u8>) {
    match fmt {
        FloatFormat::Fp32 => out.extend_from_slice(&v.to_le_bytes()),
        FloatFormat::Fp16 => out.extend_from_slice(&f16::from_f32(v).to_bits().to_le_bytes()),
        FloatFormat::Bf16 => out.extend_from_slice(&bf16::from_f32(v).to_bits().to_le_bytes()),
    }
}

pub(crate) fn decode(bytes: &[u8], fmt: FloatFormat) -> f32 {
    match fmt {
        FloatFormat::Fp32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        FloatFormat::Fp16 => f16::from_bits(u16::from_le_bytes([bytes[0], bytes[1]])).to_f32(),
        FloatFormat::Bf16 => bf16::from_bits(u16::from_le_bytes([bytes[0], bytes[1]])).to_f32(),
    }
}
