use super::codebook::codebook;
use super::config::QuantConfig;
use super::float::cast_float;
use super::packing::{pack_bits, unpack_bits};
use super::rtn::{dequantize_code, rtn_quantize_unsigned};
use crate::error::{Error, Result};
use crate::tensor_io::DenseMatrix;

/// A matrix stored as packed NormalFloat codes plus double-quantized scales.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    config: QuantConfig,
    /// `rows·cols` codes of `b0` bits, LSB-first, byte padded.
    codes: Vec<u8>,
    /// One `b1`-bit code per block.
    s_codes: Vec<u8>,
    /// One maximum per group, already rounded to `b2`.
    group_scales: Vec<f32>,
}

impl QuantizedMatrix {
    /// Assembles a matrix from unpacked codes; used by fixtures and tests.
    pub fn from_codes(
        rows: usize,
        cols: usize,
        config: QuantConfig,
        codes: &[u8],
        s_codes: &[u8],
        group_scales: Vec<f32>,
    ) -> Result<Self> {
        config.validate()?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::arg("dimension overflow"))?;
        if codes.len() != n {
            return Err(Error::arg(format!("{} codes for {n} entries", codes.len())));
        }
        if s_codes.len() != config.num_blocks(n) {
            return Err(Error::arg(format!(
                "{} scale codes for {} blocks",
                s_codes.len(),
                config.num_blocks(n)
            )));
        }
        let group_scales = cast_float(&group_scales, config.b2);
        Self::from_packed(
            rows,
            cols,
            config,
            pack_bits(codes, config.b0)?,
            pack_bits(s_codes, config.b1)?,
            group_scales,
        )
        .map_err(|e| match e {
            Error::Format(m) => Error::Argument(m),
            other => other,
        })
    }

    /// Assembles a matrix from packed streams, validating every length.
    pub fn from_packed(
        rows: usize,
        cols: usize,
        config: QuantConfig,
        codes: Vec<u8>,
        s_codes: Vec<u8>,
        group_scales: Vec<f32>,
    ) -> Result<Self> {
        config
            .validate()
            .map_err(Error::into_format)?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("dimension overflow"))?;
        let n_blocks = config.num_blocks(n);
        // Unpacking checks lengths and padding.
        unpack_bits(&codes, config.b0, n)?;
        unpack_bits(&s_codes, config.b1, n_blocks)?;
        if group_scales.len() != config.num_groups(n) {
            return Err(Error::format(format!(
                "{} group scales, expected {}",
                group_scales.len(),
                config.num_groups(n)
            )));
        }
        if group_scales.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::format("group scales must be finite and nonnegative"));
        }
        Ok(Self {
            rows,
            cols,
            config,
            codes,
            s_codes,
            group_scales,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn config(&self) -> &QuantConfig {
        &self.config
    }

    pub fn packed_codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn packed_scale_codes(&self) -> &[u8] {
        &self.s_codes
    }

    pub fn group_scales(&self) -> &[f32] {
        &self.group_scales
    }

    pub fn num_entries(&self) -> usize {
        self.rows * self.cols
    }

    pub fn codes(&self) -> Vec<u8> {
        unpack_bits(&self.codes, self.config.b0, self.num_entries()).expect("validated on construction")
    }

    pub fn scale_codes(&self) -> Vec<u8> {
        unpack_bits(&self.s_codes, self.config.b1, self.config.num_blocks(self.num_entries()))
            .expect("validated on construction")
    }

    /// Dequantized absmax of every block.
    pub fn block_scales(&self) -> Vec<f64> {
        let group = self.config.group_size as usize;
        self.scale_codes()
            .iter()
            .enumerate()
            .map(|(b, &c)| dequantize_code(c, self.group_scales[b / group] as f64, self.config.b1))
            .collect()
    }

    pub fn dequantize(&self) -> DenseMatrix {
        let levels = codebook(self.config.b0).expect("validated config").levels();
        let block = self.config.block_size as usize;
        let scales = self.block_scales();
        let data = self
            .codes()
            .iter()
            .enumerate()
            .map(|(i, &c)| (scales[i / block] * levels[c as usize]) as f32)
            .collect();
        DenseMatrix::new(self.rows, self.cols, data).expect("finite by construction")
    }

    /// Dequantizes the flat range `[start, start + out.len())` into `out`.
    pub(crate) fn dequantize_range(&self, codes: &[u8], scales: &[f64], start: usize, out: &mut [f32]) {
        let levels = codebook(self.config.b0).expect("validated config").levels();
        let block = self.config.block_size as usize;
        for (k, slot) in out.iter_mut().enumerate() {
            let i = start + k;
            *slot = (scales[i / block] * levels[codes[i] as usize]) as f32;
        }
    }
}

/// NormalFloat quantization of `m` under `cfg`.
///
/// Entries are flattened row-major into blocks of `B0` (the last block may be
/// shorter). Each entry is coded by the codebook level nearest to
/// `u / absmax`; all-zero blocks code every entry at the zero level. The block
/// maxima are then quantized with [`rtn_quantize_unsigned`](super::rtn_quantize_unsigned)
/// and each group maximum is cast to `b2`.
pub fn quantize_nf(m: &DenseMatrix, cfg: &QuantConfig) -> Result<QuantizedMatrix> {
    cfg.validate()?;
    let cb = codebook(cfg.b0)?;
    let block = cfg.block_size as usize;
    let data = m.data();

    let mut codes = Vec::with_capacity(data.len());
    let mut absmax = Vec::with_capacity(cfg.num_blocks(data.len()));
    for chunk in data.chunks(block) {
        let s = chunk.iter().fold(0.0f32, |acc, v| acc.max(v.abs()));
        absmax.push(s as f64);
        if s == 0.0 {
            codes.extend(std::iter::repeat_n(cb.zero_index(), chunk.len()));
        } else {
            let s = s as f64;
            codes.extend(chunk.iter().map(|&u| cb.nearest(u as f64 / s)));
        }
    }

    let second = rtn_quantize_unsigned(&absmax, cfg.b1, cfg.group_size as usize)?;
    let group_max: Vec<f32> = second.group_max.iter().map(|&v| v as f32).collect();
    let group_scales = cast_float(&group_max, cfg.b2);

    Ok(QuantizedMatrix {
        rows: m.rows(),
        cols: m.cols(),
        config: *cfg,
        codes: pack_bits(&codes, cfg.b0)?,
        s_codes: pack_bits(&second.codes, cfg.b1)?,
        group_scales,
    })
}

// Debug-only consistency check used by tests.
#[cfg(test)]
fn stream_lengths(q: &QuantizedMatrix) -> (usize, usize, usize) {
    let n = q.num_entries();
    (
        super::packing::packed_len(n, q.config.b0),
        super::packing::packed_len(q.config.num_blocks(n), q.config.b1),
        q.config.num_groups(n),
    )
}
