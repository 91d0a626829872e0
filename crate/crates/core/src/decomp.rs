//! Column-based driver for the structured programs.
//!
//! Every optimal-scheme program in this crate has the same shape: per-signal
//! variable blocks whose constraints are homogeneous, coupled only by the
//! per-state mass balance `sum of block masses = prior`. Such a program is
//! solved exactly by working over normalized block columns: a column is a
//! posterior inside one block's polytope together with its objective value
//! per unit mass. A small master program allocates mass across discovered
//! columns; block pricing against the master duals either proves optimality
//! over *all* blocks or produces an improving column.
//!
//! The driver is mathematically equivalent to solving the monolithic
//! program (the final pricing sweep certifies optimality block by block)
//! but never materializes it, which is what makes the exponential signal
//! spaces tractable.

use crate::lp::{self, LinearProgram, LpStatus, Relation};
use rayon::prelude::*;
use thiserror::Error;

/// One normalized column: a posterior in a block's polytope and its
/// objective contribution per unit of mass.
#[derive(Debug, Clone)]
pub(crate) struct Column {
    pub block: usize,
    pub posterior: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct PricedColumn {
    pub column: Column,
    pub reduced_cost: f64,
}

/// Outcome of pricing one block.
#[derive(Debug, Clone)]
pub(crate) enum Priced {
    /// The block polytope is empty; the driver never asks again.
    Empty,
    /// No column this round (numerical hiccup); the block stays live.
    Unavailable,
    Column(PricedColumn),
}

/// Per-block pricing interface.
pub(crate) trait BlockOracle: Sync {
    fn num_blocks(&self) -> usize;

    /// Maximize `value(mu) - lambda . mu` over the block's polytope
    /// intersected with the simplex.
    fn price(&self, block: usize, lambda: &[f64]) -> Priced;

    /// Initial columns; the first must reproduce the prior exactly so the
    /// master starts feasible. Extra warm-start columns cut early sweeps.
    fn seeds(&self) -> Vec<Column>;

    /// Cheap upper bound on the block's best reduced cost under `lambda`;
    /// full sweeps skip blocks whose bound is at or below the tolerance.
    /// Must be sound (never below the true pricing optimum).
    fn quick_bound(&self, _block: usize, _lambda: &[f64]) -> f64 {
        f64::INFINITY
    }
}

#[derive(Debug, Error)]
pub(crate) enum DecompError {
    #[error("master program failed with status {0:?}")]
    Master(LpStatus),
    #[error("column generation did not converge within {0} rounds")]
    RoundLimit(usize),
}

#[derive(Debug)]
pub(crate) struct DecompResult {
    pub value: f64,
    /// Aggregated optimal mass vector per block (blocks with zero mass are
    /// dropped); masses sum to the prior.
    pub block_masses: Vec<(usize, Vec<f64>)>,
}

const MAX_ROUNDS: usize = 10_000;
const COLUMNS_PER_ROUND: usize = 64;

fn aggregate(columns: &[Column], theta: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let mut block_masses: Vec<(usize, Vec<f64>)> = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        if theta[j] <= 1e-12 {
            continue;
        }
        match block_masses.iter_mut().find(|(b, _)| *b == c.block) {
            Some((_, y)) => {
                for (yi, pi) in y.iter_mut().zip(&c.posterior) {
                    *yi += theta[j] * pi;
                }
            }
            None => {
                block_masses.push((c.block, c.posterior.iter().map(|p| p * theta[j]).collect()));
            }
        }
    }
    block_masses.sort_by_key(|(b, _)| *b);
    block_masses
}

pub(crate) fn solve_decomposed(
    prior: &[f64],
    oracle: &(impl BlockOracle + ?Sized),
    tol: f64,
) -> Result<DecompResult, DecompError> {
    let m = prior.len();
    let price_tol = tol.max(1e-9);
    let mut columns: Vec<Column> = oracle.seeds();
    let mut dead = vec![false; oracle.num_blocks()];
    // partial pricing: between full certification sweeps, only the blocks
    // that violated last time are re-priced
    let mut hot: Vec<usize> = Vec::new();

    for _round in 0..MAX_ROUNDS {
        // master: allocate mass over the known columns
        let mut master = LinearProgram::new(columns.len());
        master.set_objective(
            columns
                .iter()
                .enumerate()
                .map(|(j, c)| (j, c.value))
                .collect(),
        );
        for state in 0..m {
            let coeffs: Vec<(usize, f64)> = columns
                .iter()
                .enumerate()
                .map(|(j, c)| (j, c.posterior[state]))
                .collect();
            master.add_constraint(coeffs, Relation::Eq, prior[state]);
        }
        let out = lp::solve_detailed(&master, tol)
            .map_err(|_| DecompError::Master(LpStatus::NumericalFailure))?;
        if out.status != LpStatus::Optimal {
            return Err(DecompError::Master(out.status));
        }
        let lambda = &out.row_duals;

        let full_sweep = hot.is_empty();
        let targets: Vec<usize> = if full_sweep {
            (0..oracle.num_blocks())
                .into_par_iter()
                .filter(|&b| !dead[b] && oracle.quick_bound(b, lambda) > price_tol)
                .collect()
        } else {
            std::mem::take(&mut hot)
        };
        let priced: Vec<(usize, Priced)> = targets
            .into_par_iter()
            .map(|b| (b, oracle.price(b, lambda)))
            .collect();
        let mut found: Vec<PricedColumn> = Vec::new();
        for (b, pc) in priced {
            match pc {
                Priced::Empty => dead[b] = true,
                Priced::Unavailable => {}
                Priced::Column(pc) => {
                    if pc.reduced_cost > price_tol {
                        found.push(pc);
                    }
                }
            }
        }
        found.sort_by(|a, b| {
            b.reduced_cost
                .total_cmp(&a.reduced_cost)
                .then(a.column.block.cmp(&b.column.block))
        });

        if found.is_empty() {
            if full_sweep {
                // certified: no block anywhere can improve the master
                return Ok(DecompResult {
                    value: out.objective,
                    block_masses: aggregate(&columns, &out.primal),
                });
            }
            // hot set exhausted; next round certifies with a full sweep
            continue;
        }
        hot = found.iter().map(|pc| pc.column.block).collect();

        let mut added = 0;
        for pc in found {
            if added >= COLUMNS_PER_ROUND {
                break;
            }
            // a regenerated duplicate means the tolerances disagree; skip it
            let duplicate = columns.iter().any(|c| {
                c.block == pc.column.block
                    && c.posterior
                        .iter()
                        .zip(&pc.column.posterior)
                        .all(|(a, b)| (a - b).abs() <= 1e-12)
            });
            if !duplicate {
                columns.push(pc.column);
                added += 1;
            }
        }
        if added == 0 {
            // every violator duplicates a column the master already prices
            // at zero or below: the residual violation is tolerance noise
            return Ok(DecompResult {
                value: out.objective,
                block_masses: aggregate(&columns, &out.primal),
            });
        }
    }
    Err(DecompError::RoundLimit(MAX_ROUNDS))
}
