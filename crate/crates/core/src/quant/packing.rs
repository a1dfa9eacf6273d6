//! LSB-first sub-byte bitstreams.
//!
//! Code `i` occupies bits `[i*b, (i+1)*b)` of the stream, where bit `k` is bit
//! `k % 8` of byte `k / 8`. The stream is zero-padded to a byte boundary.

use crate::error::{Error, Result};

/// Bytes needed to hold `n` codes of `bits` bits.
pub fn packed_len(n: usize, bits: u8) -> usize {
    (n * bits as usize).div_ceil(8)
}

fn check_bits(bits: u8) -> Result<()> {
    if bits == 0 || bits > 8 {
        return Err(Error::arg(format!("bit width {bits} outside 1..=8")));
    }
    Ok(())
}

pub fn pack_bits(codes: &[u8], bits: u8) -> Result<Vec<u8>> {
    check_bits(bits)?;
    if bits == 8 {
        return Ok(codes.to_vec());
    }
    let limit = 1u32 << bits;
    let mut out = Vec::with_capacity(packed_len(codes.len(), bits));
    let mut acc: u32 = 0;
    let mut filled = 0u32;
    for (i, &c) in codes.iter().enumerate() {
        if c as u32 >= limit {
            return Err(Error::arg(format!(
                "code {c} at index {i} does not fit in {bits} bits"
            )));
        }
        acc |= (c as u32) << filled;
        filled += bits as u32;
        while filled >= 8 {
            out.push(acc as u8);
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out.push(acc as u8);
    }
    Ok(out)
}

pub fn unpack_bits(bytes: &[u8], bits: u8, n: usize) -> Result<Vec<u8>> {
    check_bits(bits)?;
    let expected = packed_len(n, bits);
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "bitstream is {} bytes, expected {expected} for {n} codes of {bits} bits",
            bytes.len()
        )));
    }
    if bits == 8 {
        return Ok(bytes.to_vec());
    }
    let used = n * bits as usize;
    if !used.is_multiple_of(8) {
        let pad_mask = !((1u16 << (used % 8)) - 1) as u8;
        if bytes[expected - 1] & pad_mask != 0 {
            return Err(Error::format("nonzero padding bits in bitstream"));
        }
    }
    let mask = (1u32 << bits) - 1;
    let mut out = Vec::with_capacity(n);
    let mut acc: u32 = 0;
    let mut filled = 0u32;
    let mut src = bytes.iter();
    while out.len() < n {
        while filled < bits as u32 {
            acc |= (*src.next().expect("length checked") as u32) << filled;
            filled += 8;
        }
        out.push((acc & mask) as u8);
        acc >>= bits;
        filled -= bits as u32;
    }
    Ok(out)
}
