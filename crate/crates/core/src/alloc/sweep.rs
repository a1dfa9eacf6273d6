use num_rational::Ratio;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::ConfigGrid;
use crate::error::{Error, Result};
use crate::lq::{lq_decompose, LqOptions};
use crate::quant::{storage_bits_per_param, QuantConfig};
use crate::tensor_io::{DenseMatrix, FisherDiag};

/// Squared decomposition errors and storage costs for every (matrix, config).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// Parameter count of each matrix.
    pub sizes: Vec<u64>,
    /// `(rows, cols)` of each matrix; may be empty in hand-written tables.
    #[serde(default)]
    pub shapes: Vec<(usize, usize)>,
    pub configs: Vec<QuantConfig>,
    /// `errors[i][c]`: squared final error of matrix `i` under config `c`.
    pub errors: Vec<Vec<f64>>,
    /// `storage_bits[i][c] = sizes[i] · bits_per_param(c)`.
    pub storage_bits: Vec<Vec<f64>>,
    pub fisher_weighted: bool,
    pub rank: usize,
    pub seed: u64,
}

/// Exact storage of a matrix with `size` parameters, rounded once to `f64`.
pub(crate) fn storage_bits(size: u64, cfg: &QuantConfig) -> f64 {
    let bits = storage_bits_per_param(cfg);
    let exact = Ratio::<u128>::new(*bits.numer() as u128, *bits.denom() as u128)
        * Ratio::from_integer(size as u128);
    exact.to_f64().expect("finite")
}

impl SweepTable {
    pub fn num_matrices(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_configs(&self) -> usize {
        self.configs.len()
    }

    pub fn total_params(&self) -> u64 {
        self.sizes.iter().sum()
    }

    /// Checks table dimensions, nonnegative errors and the storage formula.
    pub fn validate(&self) -> Result<()> {
        let n = self.sizes.len();
        let c = self.configs.len();
        if n == 0 || c == 0 {
            return Err(Error::format("sweep table has no matrices or no configs"));
        }
        if self.errors.len() != n || self.storage_bits.len() != n {
            return Err(Error::format("sweep table row count mismatch"));
        }
        if !self.shapes.is_empty() {
            if self.shapes.len() != n {
                return Err(Error::format("sweep table shape count mismatch"));
            }
            for (i, &(r, k)) in self.shapes.iter().enumerate() {
                if (r as u64) * (k as u64) != self.sizes[i] {
                    return Err(Error::format(format!("shape of matrix {i} does not match its size")));
                }
            }
        }
        for i in 0..n {
            if self.errors[i].len() != c || self.storage_bits[i].len() != c {
                return Err(Error::format(format!("row {i} has the wrong number of columns")));
            }
            if self.errors[i].iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
                return Err(Error::format(format!("row {i} has a negative or non-finite error")));
            }
            for (j, cfg) in self.configs.iter().enumerate() {
                cfg.validate().map_err(Error::into_format)?;
                if self.storage_bits[i][j] != storage_bits(self.sizes[i], cfg) {
                    return Err(Error::format(format!(
                        "storage[{i}][{j}] disagrees with the storage formula"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Stacks tables over disjoint matrix sets. Weighted and unweighted
    /// errors are in different units and cannot be mixed.
    pub fn concat(tables: &[SweepTable]) -> Result<SweepTable> {
        let first = tables
            .first()
            .ok_or_else(|| Error::arg("no sweep tables given"))?;
        let mut out = first.clone();
        for t in &tables[1..] {
            if t.fisher_weighted != first.fisher_weighted {
                return Err(Error::arg(
                    "cannot mix Fisher-weighted and unweighted sweep tables",
                ));
            }
            if t.configs != first.configs || t.rank != first.rank {
                return Err(Error::arg("sweep tables use different grids or ranks"));
            }
            if t.shapes.is_empty() != out.shapes.is_empty() {
                out.shapes.clear();
            } else {
                out.shapes.extend_from_slice(&t.shapes);
            }
            out.sizes.extend_from_slice(&t.sizes);
            out.errors.extend(t.errors.iter().cloned());
            out.storage_bits.extend(t.storage_bits.iter().cloned());
        }
        Ok(out)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: SweepTable = serde_json::from_str(&text)
            .map_err(|e| Error::from(e).in_file(path))?;
        table
            .validate()
            .map_err(|e| e.in_file(path))?;
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Base decomposition options; the seed is specialized per matrix.
    pub lq: LqOptions,
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            lq: LqOptions::default(),
            workers: 1,
        }
    }
}

/// Decomposition options for matrix `index`: the same for every config, so a
/// later decomposition with the chosen config reproduces the swept error.
pub fn matrix_lq_options(base: &LqOptions, index: usize) -> LqOptions {
    LqOptions {
        seed: base
            .seed
            .wrapping_add((index as u64).wrapping_mul(0xD134_2543_DE82_EF95)),
        ..*base
    }
}

fn check_inputs(matrices: &[DenseMatrix], fishers: Option<&[FisherDiag]>) -> Result<()> {
    if matrices.is_empty() {
        return Err(Error::arg("no matrices to sweep"));
    }
    if let Some(fs) = fishers {
        if fs.len() != matrices.len() {
            return Err(Error::arg(format!(
                "{} Fisher matrices for {} weight matrices",
                fs.len(),
                matrices.len()
            )));
        }
        for (i, (m, f)) in matrices.iter().zip(fs).enumerate() {
            f.check_matches(m.shape())
                .map_err(|e| Error::arg(format!("matrix {i}: {e}")))?;
        }
    }
    Ok(())
}

pub fn sweep(
    matrices: &[DenseMatrix],
    fishers: Option<&[FisherDiag]>,
    grid: &ConfigGrid,
    rank: usize,
    opts: &SweepOptions,
) -> Result<SweepTable> {
    sweep_with_progress(matrices, fishers, grid, rank, opts, &[], |_, _| Ok(()))
}

/// Sweep that reuses already-computed error rows (`done[i] = Some(row)`) and
/// reports every finished row to `on_row`, in matrix order.
pub fn sweep_with_progress(
    matrices: &[DenseMatrix],
    fishers: Option<&[FisherDiag]>,
    grid: &ConfigGrid,
    rank: usize,
    opts: &SweepOptions,
    done: &[Option<Vec<f64>>],
    mut on_row: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<SweepTable> {
    check_inputs(matrices, fishers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;

    let mut errors = Vec::with_capacity(matrices.len());
    for (i, w) in matrices.iter().enumerate() {
        if let Some(Some(row)) = done.get(i) {
            if row.len() != grid.len() {
                return Err(Error::arg(format!("resumed row {i} has the wrong length")));
            }
            errors.push(row.clone());
            continue;
        }
        let fisher = fishers.map(|fs| &fs[i]);
        let lq_opts = matrix_lq_options(&opts.lq, i);
        let row: Vec<f64> = pool.install(|| {
            grid.configs()
                .par_iter()
                .map(|cfg| lq_decompose(w, fisher, cfg, rank, &lq_opts).map(|r| r.error().powi(2)))
                .collect::<Result<Vec<f64>>>()
        })?;
        on_row(i, &row)?;
        errors.push(row);
    }

    let sizes: Vec<u64> = matrices.iter().map(|m| m.len() as u64).collect();
    let storage = sizes
        .iter()
        .map(|&s| grid.configs().iter().map(|c| storage_bits(s, c)).collect())
        .collect();
    Ok(SweepTable {
        sizes,
        shapes: matrices.iter().map(DenseMatrix::shape).collect(),
        configs: grid.configs().to_vec(),
        errors,
        storage_bits: storage,
        fisher_weighted: fishers.is_some(),
        rank,
        seed: opts.lq.seed,
    })
}
