use super::grid::ConfigGrid;
use super::mckp::{solve_mckp, AllocSolution};
use super::sweep::{matrix_lq_options, sweep, SweepOptions, SweepTable};
use crate::error::{Error, Result};
use crate::lq::{lq_decompose, LqResult};
use crate::tensor_io::{DenseMatrix, FisherDiag};

/// Everything produced by a budgeted initialization.
#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub table: SweepTable,
    pub solution: AllocSolution,
    /// Final decomposition of each matrix under its chosen config.
    pub results: Vec<LqResult>,
}

/// Sweeps the grid, allocates configs under `bits_per_param` averaged over
/// all quantized parameters, then decomposes each matrix with its choice.
pub fn lq_lora_init(
    matrices: &[DenseMatrix],
    fishers: Option<&[FisherDiag]>,
    grid: &ConfigGrid,
    rank: usize,
    bits_per_param: f64,
    opts: &SweepOptions,
) -> Result<InitOutcome> {
    if !bits_per_param.is_finite() || bits_per_param <= 0.0 {
        return Err(Error::arg(format!(
            "bit budget must be positive, got {bits_per_param}"
        )));
    }
    let table = sweep(matrices, fishers, grid, rank, opts)?;
    let budget = bits_per_param * table.total_params() as f64;
    let solution = solve_mckp(&table, budget)?;
    let results = matrices
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let cfg = &table.configs[solution.assignment[i]];
            let fisher = fishers.map(|fs| &fs[i]);
            lq_decompose(w, fisher, cfg, rank, &matrix_lq_options(&opts.lq, i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InitOutcome {
        table,
        solution,
        results,
    })
}
