//! Budgeted mixed-precision allocation.
//!
//! A sweep decomposes every matrix under every configuration of a grid and
//! records squared errors and storage costs. Choosing one configuration per
//! matrix to minimize total error under a total-bits budget is a
//! multiple-choice knapsack, solved exactly by branch and bound.

mod grid;
mod init;
mod mckp;
mod report;
mod sweep;

pub use grid::ConfigGrid;
pub use init::{lq_lora_init, InitOutcome};
pub use mckp::{
    brute_force_mckp, brute_force_tables, solve_mckp, solve_mckp_tables, AllocSolution,
    MckpOptions, BRUTE_FORCE_LIMIT,
};
pub use report::{
    entries_from_solution, parse_decimal_bits, storage_report, LoraFormat, ReportEntry, ReportRow,
    StorageReport,
};
pub use sweep::{matrix_lq_options, sweep, sweep_with_progress, SweepOptions, SweepTable};
