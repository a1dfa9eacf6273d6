//! Exact multiple-choice knapsack: pick one option per class minimizing total
//! error subject to total storage `≤ budget`.
//!
//! Totals are always summed in class order, so the same assignment yields
//! bit-identical totals in every solver.

use serde::{Deserialize, Serialize};

use super::sweep::SweepTable;
use crate::error::{Error, Result};

/// Largest number of assignments the exhaustive solver will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Improvements smaller than this fraction of the incumbent are not pursued.
const BOUND_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocSolution {
    /// Chosen config index per matrix.
    pub assignment: Vec<usize>,
    pub total_error: f64,
    pub total_storage_bits: f64,
    pub budget_bits: f64,
    /// True when the search proved optimality.
    pub optimal: bool,
}

impl AllocSolution {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MckpOptions {
    /// Drop options that cost at least as much as another with no more error.
    pub dominance_pruning: bool,
    /// Search nodes before giving up on proving optimality.
    pub node_limit: u64,
}

impl Default for MckpOptions {
    fn default() -> Self {
        Self {
            dominance_pruning: true,
            node_limit: 200_000_000,
        }
    }
}

fn check_instance(errors: &[Vec<f64>], storage: &[Vec<f64>], budget: f64) -> Result<()> {
    if !budget.is_finite() || budget <= 0.0 {
        return Err(Error::arg(format!("budget must be positive, got {budget}")));
    }
    if errors.is_empty() || errors.len() != storage.len() {
        return Err(Error::arg("error and storage tables must be non-empty and aligned"));
    }
    for (i, (e, s)) in errors.iter().zip(storage).enumerate() {
        if e.is_empty() || e.len() != s.len() {
            return Err(Error::arg(format!("row {i} is empty or misaligned")));
        }
        if e.iter().chain(s).any(|v| !v.is_finite()) {
            return Err(Error::arg(format!("row {i} has non-finite entries")));
        }
    }
    Ok(())
}

fn min_storage(storage: &[Vec<f64>]) -> f64 {
    storage
        .iter()
        .map(|row| row.iter().copied().fold(f64::INFINITY, f64::min))
        .sum()
}

fn totals(errors: &[Vec<f64>], storage: &[Vec<f64>], assignment: &[usize]) -> (f64, f64) {
    let mut e = 0.0;
    let mut s = 0.0;
    for (i, &c) in assignment.iter().enumerate() {
        e += errors[i][c];
        s += storage[i][c];
    }
    (e, s)
}

fn solution(errors: &[Vec<f64>], storage: &[Vec<f64>], assignment: Vec<usize>, budget: f64, optimal: bool) -> AllocSolution {
    let (total_error, total_storage_bits) = totals(errors, storage, &assignment);
    AllocSolution {
        assignment,
        total_error,
        total_storage_bits,
        budget_bits: budget,
        optimal,
    }
}

fn infeasible(storage: &[Vec<f64>], budget: f64) -> Error {
    Error::Infeasible {
        budget_bits: budget,
        min_storage_bits: min_storage(storage),
    }
}

/// Options on the (storage, error) Pareto frontier, storage ascending.
fn pareto(errors: &[f64], storage: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..errors.len()).collect();
    idx.sort_by(|&a, &b| {
        storage[a]
            .total_cmp(&storage[b])
            .then(errors[a].total_cmp(&errors[b]))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for i in idx {
        if kept.last().is_none_or(|&k| errors[i] < errors[k]) {
            kept.push(i);
        }
    }
    kept
}

/// Lower convex hull of a Pareto frontier: consecutive slopes get flatter.
fn lower_hull(frontier: &[usize], errors: &[f64], storage: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::new();
    for &p in frontier {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // Drop b if it lies on or above the segment a→p.
            let cross = (storage[b] - storage[a]) * (errors[p] - errors[a])
                - (errors[b] - errors[a]) * (storage[p] - storage[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

struct Increment {
    class: usize,
    storage: f64,
    gain: f64,
}

struct Search<'a> {
    errors: &'a [Vec<f64>],
    storage: &'a [Vec<f64>],
    budget: f64,
    /// Branching order per class: ascending error.
    branches: Vec<Vec<usize>>,
    /// Sum over classes `>= i` of the hull start (cheapest) storage / error.
    suffix_base_storage: Vec<f64>,
    suffix_base_error: Vec<f64>,
    /// Hull increments of all classes, steepest error reduction per bit first.
    increments: Vec<Increment>,
    best_error: f64,
    best: Option<Vec<usize>>,
    current: Vec<usize>,
    nodes: u64,
    node_limit: u64,
    exhausted: bool,
}

impl Search<'_> {
    /// LP-relaxation bound on the error of classes `depth..` with `remaining` bits.
    fn lp_bound(&self, depth: usize, remaining: f64) -> Option<f64> {
        let slack = 1e-12 * self.budget.abs().max(1.0);
        let mut room = remaining - self.suffix_base_storage[depth] + slack;
        if room < 0.0 {
            return None;
        }
        let mut bound = self.suffix_base_error[depth];
        for inc in &self.increments {
            if inc.class < depth {
                continue;
            }
            if inc.storage <= room {
                room -= inc.storage;
                bound -= inc.gain;
            } else {
                bound -= inc.gain * (room / inc.storage);
                break;
            }
        }
        Some(bound)
    }

    fn dfs(&mut self, depth: usize, used: f64, acc: f64) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.nodes > self.node_limit {
            self.exhausted = true;
            return;
        }
        let n = self.errors.len();
        if depth == n {
            if used <= self.budget && acc < self.best_error {
                self.best_error = acc;
                self.best = Some(self.current.clone());
            }
            return;
        }
        let Some(bound) = self.lp_bound(depth, self.budget - used) else {
            return;
        };
        if self.best.is_some() && acc + bound >= self.best_error - BOUND_REL_TOL * self.best_error.abs() {
            return;
        }
        for b in 0..self.branches[depth].len() {
            let c = self.branches[depth][b];
            self.current[depth] = c;
            self.dfs(
                depth + 1,
                used + self.storage[depth][c],
                acc + self.errors[depth][c],
            );
        }
    }
}

/// Greedy LP rounding: walk the increments, taking each one that still fits.
fn greedy(search: &Search, hulls: &[Vec<usize>]) -> Vec<usize> {
    let n = hulls.len();
    let mut pos = vec![0usize; n];
    let mut frozen = vec![false; n];
    let mut room = search.budget - search.suffix_base_storage[0];
    for inc in &search.increments {
        let c = inc.class;
        if frozen[c] {
            continue;
        }
        if inc.storage <= room {
            room -= inc.storage;
            pos[c] += 1;
        } else {
            frozen[c] = true;
        }
    }
    (0..n).map(|i| hulls[i][pos[i]]).collect()
}

/// Exact solver on raw tables.
pub fn solve_mckp_tables(
    errors: &[Vec<f64>],
    storage: &[Vec<f64>],
    budget: f64,
    opts: &MckpOptions,
) -> Result<AllocSolution> {
    check_instance(errors, storage, budget)?;
    let n = errors.len();
    let frontiers: Vec<Vec<usize>> = (0..n).map(|i| pareto(&errors[i], &storage[i])).collect();
    let hulls: Vec<Vec<usize>> = (0..n)
        .map(|i| lower_hull(&frontiers[i], &errors[i], &storage[i]))
        .collect();

    let mut suffix_base_storage = vec![0.0; n + 1];
    let mut suffix_base_error = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let start = hulls[i][0];
        suffix_base_storage[i] = suffix_base_storage[i + 1] + storage[i][start];
        suffix_base_error[i] = suffix_base_error[i + 1] + errors[i][start];
    }
    if min_storage(storage) > budget {
        return Err(infeasible(storage, budget));
    }

    let mut increments = Vec::new();
    for (i, hull) in hulls.iter().enumerate() {
        for w in hull.windows(2) {
            increments.push(Increment {
                class: i,
                storage: storage[i][w[1]] - storage[i][w[0]],
                gain: errors[i][w[0]] - errors[i][w[1]],
            });
        }
    }
    // Within a class the hull slopes already decrease, so a stable sort keeps
    // each class's increments in order.
    increments.sort_by(|a, b| (b.gain / b.storage).total_cmp(&(a.gain / a.storage)));

    let branches: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut opts_i: Vec<usize> = if opts.dominance_pruning {
                frontiers[i].clone()
            } else {
                (0..errors[i].len()).collect()
            };
            opts_i.sort_by(|&a, &b| {
                errors[i][a]
                    .total_cmp(&errors[i][b])
                    .then(storage[i][a].total_cmp(&storage[i][b]))
                    .then(a.cmp(&b))
            });
            opts_i
        })
        .collect();

    let mut search = Search {
        errors,
        storage,
        budget,
        branches,
        suffix_base_storage,
        suffix_base_error,
        increments,
        best_error: f64::INFINITY,
        best: None,
        current: vec![0; n],
        nodes: 0,
        node_limit: opts.node_limit,
        exhausted: false,
    };

    let incumbent = greedy(&search, &hulls);
    let (e, s) = totals(errors, storage, &incumbent);
    if s <= budget {
        search.best_error = e;
        search.best = Some(incumbent);
    }
    search.dfs(0, 0.0, 0.0);

    match search.best.take() {
        Some(assignment) => Ok(solution(errors, storage, assignment, budget, !search.exhausted)),
        None => Err(infeasible(storage, budget)),
    }
}

pub fn solve_mckp(table: &SweepTable, budget_bits: f64) -> Result<AllocSolution> {
    solve_mckp_tables(&table.errors, &table.storage_bits, budget_bits, &MckpOptions::default())
}

/// Exhaustive enumeration of every assignment; a testing oracle.
pub fn brute_force_tables(errors: &[Vec<f64>], storage: &[Vec<f64>], budget: f64) -> Result<AllocSolution> {
    check_instance(errors, storage, budget)?;
    let count: f64 = errors.iter().map(|r| r.len() as f64).product();
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(count));
    }
    let n = errors.len();
    let mut current = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let (e, s) = totals(errors, storage, &current);
        if s <= budget && best.as_ref().is_none_or(|(be, _)| e < *be) {
            best = Some((e, current.clone()));
        }
        let mut i = 0;
        loop {
            if i == n {
                return match best {
                    Some((_, a)) => Ok(solution(errors, storage, a, budget, true)),
                    None => Err(infeasible(storage, budget)),
                };
            }
            current[i] += 1;
            if current[i] < errors[i].len() {
                break;
            }
            current[i] = 0;
            i += 1;
        }
    }
}

pub fn brute_force_mckp(table: &SweepTable, budget_bits: f64) -> Result<AllocSolution> {
    brute_force_tables(&table.errors, &table.storage_bits, budget_bits)
}
