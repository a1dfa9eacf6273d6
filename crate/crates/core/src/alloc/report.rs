use std::fmt::{self, Write as _};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::mckp::AllocSolution;
use super::sweep::SweepTable;
use crate::error::{Error, Result};
use crate::quant::{storage_bits_per_param, Bits, QuantConfig};

type Wide = Ratio<u128>;

fn widen(b: Bits) -> Wide {
    Wide::new(*b.numer() as u128, *b.denom() as u128)
}

fn to_f64(r: Wide) -> f64 {
    r.to_f64().expect("finite ratio")
}

/// Storage format of the LoRA factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoraFormat {
    Fp16,
    /// NF-8 with the default double-quantization settings.
    Nf8,
}

impl LoraFormat {
    pub fn bits_per_param(self) -> Bits {
        match self {
            LoraFormat::Fp16 => Bits::from_integer(16),
            LoraFormat::Nf8 => storage_bits_per_param(&QuantConfig::NF8),
        }
    }
}

impl FromStr for LoraFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fp16" => Ok(LoraFormat::Fp16),
            "nf8" => Ok(LoraFormat::Nf8),
            _ => Err(Error::arg(format!("unknown LoRA format {s:?} (expected fp16 or nf8)"))),
        }
    }
}

/// Parses a decimal such as `2.75` into an exact ratio.
pub fn parse_decimal_bits(s: &str) -> Result<Bits> {
    let bad = || Error::arg(format!("invalid bit count {s:?}"));
    let (int, frac) = s.trim().split_once('.').unwrap_or((s.trim(), ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if frac.len() > 18 || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let denom = 10u64.pow(frac.len() as u32);
    let numer = int
        .checked_mul(denom)
        .and_then(|v| v.checked_add(frac_val))
        .ok_or_else(bad)?;
    let bits = Bits::new(numer, denom);
    if bits.is_zero() {
        return Err(bad());
    }
    Ok(bits)
}

/// One quantized matrix and its storage cost per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub quant_bits: Bits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub rows: usize,
    pub cols: usize,
    pub params: u64,
    pub quant_bits_per_param: f64,
    pub quantized_bytes: f64,
    pub lora_params: u64,
    pub lora_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageReport {
    pub lora_rank: usize,
    pub lora_bits_per_param: f64,
    pub total_params: u64,
    pub lora_params: u64,
    pub quantized_bytes: f64,
    pub lora_bytes: f64,
    /// Quantized storage alone, per quantized parameter.
    pub quantized_bits_per_param: f64,
    /// Quantized plus LoRA storage, per quantized parameter.
    pub effective_bits: f64,
    pub matrices: Vec<ReportRow>,
}

pub fn storage_report(entries: &[ReportEntry], lora_rank: usize, lora_bits: Bits) -> Result<StorageReport> {
    if entries.is_empty() {
        return Err(Error::arg("storage report needs at least one matrix"));
    }
    let lora_bits_w = widen(lora_bits);
    let mut params = 0u128;
    let mut lora_params = 0u128;
    let mut quant_total = Wide::zero();
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        if e.rows == 0 || e.cols == 0 {
            return Err(Error::arg(format!("matrix {} has an empty shape", e.label)));
        }
        let p = e.rows as u128 * e.cols as u128;
        let lp = lora_rank as u128 * (e.rows as u128 + e.cols as u128);
        let q = widen(e.quant_bits) * Wide::from_integer(p);
        params += p;
        lora_params += lp;
        quant_total += q;
        rows.push(ReportRow {
            label: e.label.clone(),
            rows: e.rows,
            cols: e.cols,
            params: p as u64,
            quant_bits_per_param: to_f64(widen(e.quant_bits)),
            quantized_bytes: to_f64(q) / 8.0,
            lora_params: lp as u64,
            lora_bytes: to_f64(lora_bits_w * Wide::from_integer(lp)) / 8.0,
        });
    }
    let lora_total = lora_bits_w * Wide::from_integer(lora_params);
    let per_param = Wide::from_integer(params);
    Ok(StorageReport {
        lora_rank,
        lora_bits_per_param: to_f64(lora_bits_w),
        total_params: params as u64,
        lora_params: lora_params as u64,
        quantized_bytes: to_f64(quant_total) / 8.0,
        lora_bytes: to_f64(lora_total) / 8.0,
        quantized_bits_per_param: to_f64(quant_total / per_param),
        effective_bits: to_f64((quant_total + lora_total) / per_param),
        matrices: rows,
    })
}

/// Report entries for an allocation; needs the table's matrix shapes.
pub fn entries_from_solution(solution: &AllocSolution, table: &SweepTable) -> Result<Vec<ReportEntry>> {
    if table.shapes.len() != table.num_matrices() {
        return Err(Error::arg("sweep table carries no matrix shapes; cannot report LoRA storage"));
    }
    if solution.assignment.len() != table.num_matrices() {
        return Err(Error::arg("solution and sweep table cover different matrix counts"));
    }
    solution
        .assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let cfg = table
                .configs
                .get(c)
                .ok_or_else(|| Error::arg(format!("assignment {i} names config {c}, outside the grid")))?;
            let (rows, cols) = table.shapes[i];
            Ok(ReportEntry {
                label: format!("matrix{i} [{cfg}]"),
                rows,
                cols,
                quant_bits: storage_bits_per_param(cfg),
            })
        })
        .collect()
}

fn human_bytes(b: f64) -> String {
    const UNITS: [&str; 5] = ["B", "KiB", "MiB", "GiB", "TiB"];
    let mut v = b;
    let mut u = 0;
    while v >= 1024.0 && u + 1 < UNITS.len() {
        v /= 1024.0;
        u += 1;
    }
    format!("{v:.2} {}", UNITS[u])
}

impl fmt::Display for StorageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = ["matrix", "shape", "params", "bits/param", "quantized", "lora"];
        let mut cells: Vec<[String; 6]> = self
            .matrices
            .iter()
            .map(|r| {
                [
                    r.label.clone(),
                    format!("{}x{}", r.rows, r.cols),
                    r.params.to_string(),
                    format!("{:.6}", r.quant_bits_per_param),
                    human_bytes(r.quantized_bytes),
                    human_bytes(r.lora_bytes),
                ]
            })
            .collect();
        cells.push([
            "total".into(),
            String::new(),
            self.total_params.to_string(),
            format!("{:.6}", self.quantized_bits_per_param),
            human_bytes(self.quantized_bytes),
            human_bytes(self.lora_bytes),
        ]);
        let mut width = header.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut line = String::new();
        for (i, h) in header.iter().enumerate() {
            if i == 0 {
                write!(line, "{h:<w$}", w = width[i])?;
            } else {
                write!(line, "  {h:>w$}", w = width[i])?;
            }
        }
        writeln!(f, "{line}")?;
        for row in &cells {
            line.clear();
            for (i, c) in row.iter().enumerate() {
                if i == 0 {
                    write!(line, "{c:<w$}", w = width[i])?;
                } else {
                    write!(line, "  {c:>w$}", w = width[i])?;
                }
            }
            writeln!(f, "{line}")?;
        }
        writeln!(f)?;
        writeln!(f, "lora rank        {}", self.lora_rank)?;
        writeln!(f, "lora bits/param  {}", self.lora_bits_per_param)?;
        write!(f, "effective bits   {:.6}", self.effective_bits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_io::preset;

    fn uniform(name: &str, bits: Bits) -> Vec<ReportEntry> {
        preset(name)
            .unwrap()
            .matrices
            .into_iter()
            .map(|m| ReportEntry {
                label: m.label,
                rows: m.rows,
                cols: m.cols,
                quant_bits: bits,
            })
            .collect()
    }

    #[test]
    fn decimal_parsing() {
        assert_eq!(parse_decimal_bits("2.75").unwrap(), Bits::new(11, 4));
        assert_eq!(parse_decimal_bits("3").unwrap(), Bits::from_integer(3));
        assert_eq!(parse_decimal_bits(".5").unwrap(), Bits::new(1, 2));
        for bad in ["", ".", "-1", "2.7x", "0", "1e3"] {
            assert!(parse_decimal_bits(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn lora_presets() {
        assert_eq!(LoraFormat::Fp16.bits_per_param(), Bits::from_integer(16));
        assert_eq!(LoraFormat::Nf8.bits_per_param(), Bits::new(8_126_953_125, 1_000_000_000));
    }

    #[test]
    fn preset_effective_bits() {
        let b = parse_decimal_bits("2.75").unwrap();
        let nf8 = LoraFormat::Nf8.bits_per_param();
        let r7 = storage_report(&uniform("llama2-7b-linear", b), 64, nf8).unwrap();
        assert!((r7.effective_bits - 2.95).abs() <= 0.01, "{}", r7.effective_bits);
        let r70 = storage_report(&uniform("llama2-70b-linear", b), 64, nf8).unwrap();
        assert!((r70.effective_bits - 2.85).abs() <= 0.01, "{}", r70.effective_bits);
    }

    #[test]
    fn recomputation_from_dims() {
        let b = parse_decimal_bits("2.75").unwrap();
        let r = storage_report(&uniform("llama2-7b-linear", b), 64, LoraFormat::Fp16.bits_per_param()).unwrap();
        let (mut q, mut l, mut p) = (0.0f64, 0.0f64, 0.0f64);
        for m in preset("llama2-7b-linear").unwrap().matrices {
            let n = (m.rows * m.cols) as f64;
            p += n;
            q += n * 2.75;
            l += 64.0 * (m.rows + m.cols) as f64 * 16.0;
        }
        assert!(((q + l) / p - r.effective_bits).abs() <= 1e-9);
        assert_eq!(r.quantized_bytes, q / 8.0);
    }

    #[test]
    fn rank_zero_is_weighted_mean() {
        let entries = vec![
            ReportEntry { label: "a".into(), rows: 10, cols: 10, quant_bits: Bits::from_integer(2) },
            ReportEntry { label: "b".into(), rows: 10, cols: 30, quant_bits: Bits::from_integer(4) },
        ];
        let r = storage_report(&entries, 0, Bits::from_integer(16)).unwrap();
        assert_eq!(r.effective_bits, (100.0 * 2.0 + 300.0 * 4.0) / 400.0);
        assert_eq!(r.lora_bytes, 0.0);
        assert!(r.to_string().contains("effective bits"));
    }

    #[test]
    fn missing_shapes_rejected() {
        let table = SweepTable {
            sizes: vec![16],
            shapes: vec![],
            configs: vec![QuantConfig::NF4],
            errors: vec![vec![1.0]],
            storage_bits: vec![vec![66.03125]],
            fisher_weighted: false,
            rank: 1,
            seed: 0,
        };
        let sol = AllocSolution {
            assignment: vec![0],
            total_error: 1.0,
            total_storage_bits: 66.03125,
            budget_bits: 100.0,
            optimal: true,
        };
        assert!(matches!(entries_from_solution(&sol, &table), Err(Error::Argument(_))));
    }
}
