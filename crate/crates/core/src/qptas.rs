//! Grid-based approximation scheme.
//!
//! Instead of enumerating BR sets, the simplex is covered by cells around
//! k-uniform beliefs: within a cell every action's *sender* utility stays
//! within `eps'` of its value at the center, so the center's utility profile
//! stands in for the whole cell. Signals are triples `(center, best, worst)`
//! and the program constrains (a) cell membership, (b) `best` dominating
//! every action, and (c) exclusion of every action whose center utility is
//! more than `2 eps'` below the designated worst action. The optimum is
//! within `eps' = eps/5` of the true robust optimum, and evaluating the
//! returned scheme loses at most another `4 eps'`.

use crate::decomp::{self, BlockOracle, Column, Priced, PricedColumn};
use crate::exact::{self, SignalProvenance, SolverResult};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{best_response, br_delta_set, PersuasionInstance};
use std::sync::atomic::{AtomicU8, Ordering};
use thiserror::Error;

/// Cap on explicit-program variables (`grid points * n^2 * m`).
pub const DEFAULT_VAR_CAP: usize = 5_000_000;
/// Cap on generated grid points.
pub const DEFAULT_GRID_CAP: usize = 5_000_000;
/// Explicit solves above this row-count estimate route to the column driver.
const EXPLICIT_ROW_LIMIT: usize = 400;

#[derive(Debug, Error)]
pub enum QptasError {
    #[error("{what} = {size} exceeds the size guard ({cap})")]
    SizeGuard {
        what: &'static str,
        size: usize,
        cap: usize,
    },
    #[error("eps must lie in (0, 1], got {0}")]
    BadEps(f64),
    #[error("the program reported {0:?}, which indicates a bug for a valid instance")]
    Solver(LpStatus),
    #[error("column driver failed: {0}")]
    Decomposition(String),
    #[error(transparent)]
    Exact(#[from] exact::ExactError),
}

/// All distributions with entries `j/k`, i.e. compositions of `k` into
/// `m` nonnegative parts, in ascending lexicographic order.
#[derive(Debug, Clone)]
pub struct KUniformGrid {
    k: usize,
    num_states: usize,
    points: Vec<Vec<f64>>,
}

impl KUniformGrid {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
}

/// Number of k-uniform grid points: `C(k+m-1, m-1)`.
pub fn grid_size(m: usize, k: usize) -> Option<usize> {
    let mut acc: u128 = 1;
    for i in 0..m - 1 {
        acc = acc.checked_mul((k + 1 + i) as u128)? / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

pub fn k_uniform_grid(m: usize, k: usize) -> Result<KUniformGrid, QptasError> {
    k_uniform_grid_with_cap(m, k, DEFAULT_GRID_CAP)
}

pub fn k_uniform_grid_with_cap(m: usize, k: usize, cap: usize) -> Result<KUniformGrid, QptasError> {
    assert!(m >= 1 && k >= 1, "grid needs m >= 1 and k >= 1");
    let count = grid_size(m, k)
        .filter(|&c| c <= cap)
        .ok_or(QptasError::SizeGuard {
            what: "grid points",
            size: grid_size(m, k).unwrap_or(usize::MAX),
            cap,
        })?;
    let mut points = Vec::with_capacity(count);
    let mut composition = vec![0usize; m];
    fill_compositions(&mut points, &mut composition, 0, k, k);
    debug_assert_eq!(points.len(), count);
    Ok(KUniformGrid {
        k,
        num_states: m,
        points,
    })
}

fn fill_compositions(
    points: &mut Vec<Vec<f64>>,
    composition: &mut Vec<usize>,
    pos: usize,
    remaining: usize,
    k: usize,
) {
    if pos + 1 == composition.len() {
        composition[pos] = remaining;
        points.push(composition.iter().map(|&c| c as f64 / k as f64).collect());
        return;
    }
    for c in 0..=remaining {
        composition[pos] = c;
        fill_compositions(points, composition, pos + 1, remaining - c, k);
    }
}

/// Base of the logarithm in the grid-size formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    /// Natural log, matching the sparsification bound the formula comes from.
    #[default]
    Natural,
    /// Base 2, a conservative (larger) grid.
    Two,
}

/// Grid parameters for accuracy `eps`: `eps' = eps/5` and
/// `k = ceil(log(2n) / (2 eps'^2))`.
pub fn epsilon_for_grid(n: usize, eps: f64) -> Result<(f64, usize), QptasError> {
    epsilon_for_grid_with_base(n, eps, LogBase::default())
}

pub fn epsilon_for_grid_with_base(
    n: usize,
    eps: f64,
    base: LogBase,
) -> Result<(f64, usize), QptasError> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(QptasError::BadEps(eps));
    }
    let eps_prime = eps / 5.0;
    let log = match base {
        LogBase::Natural => (2.0 * n as f64).ln(),
        LogBase::Two => (2.0 * n as f64).log2(),
    };
    let k = (log / (2.0 * eps_prime * eps_prime)).ceil() as usize;
    Ok((eps_prime, k.max(1)))
}

/// A signal of the approximation scheme: a cell center plus the designated
/// best response and worst-case action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QptasSignal {
    pub center: usize,
    pub best: usize,
    pub worst: usize,
}

#[derive(Debug, Clone)]
pub struct QptasOptions {
    pub log_base: LogBase,
    pub strategy: exact::SolveStrategy,
    pub var_cap: usize,
    pub grid_cap: usize,
    pub tolerance: f64,
}

impl Default for QptasOptions {
    fn default() -> Self {
        QptasOptions {
            log_base: LogBase::default(),
            strategy: exact::SolveStrategy::default(),
            var_cap: DEFAULT_VAR_CAP,
            grid_cap: DEFAULT_GRID_CAP,
            tolerance: lp::DEFAULT_TOLERANCE,
        }
    }
}

/// The explicit approximation program plus its signal map.
#[derive(Debug)]
pub struct QptasLp {
    pub lp: LinearProgram,
    pub signals: Vec<QptasSignal>,
    pub grid: KUniformGrid,
    pub eps_prime: f64,
}

/// Signal index layout: grid-major, then best response, then worst action.
fn signal_id(g: usize, best: usize, worst: usize, n: usize) -> usize {
    (g * n + best) * n + worst
}

/// Per-center sender utility profile `sbar[g*n + a] = s(center_g, a)`.
fn center_profiles(instance: &PersuasionInstance, grid: &KUniformGrid) -> Vec<f64> {
    let n = instance.num_actions();
    let mut sbar = vec![0.0; grid.len() * n];
    for (g, mu) in grid.points().iter().enumerate() {
        for a in 0..n {
            sbar[g * n + a] = instance.sender_value(mu, a);
        }
    }
    sbar
}

/// Build the explicit approximation program.
pub fn build_qptas_lp(instance: &PersuasionInstance, eps: f64) -> Result<QptasLp, QptasError> {
    build_qptas_lp_with(instance, eps, &QptasOptions::default())
}

pub fn build_qptas_lp_with(
    instance: &PersuasionInstance,
    eps: f64,
    options: &QptasOptions,
) -> Result<QptasLp, QptasError> {
    let m = instance.num_states();
    let n = instance.num_actions();
    let (eps_prime, k) = epsilon_for_grid_with_base(n, eps, options.log_base)?;
    let grid = k_uniform_grid_with_cap(m, k, options.grid_cap)?;
    let num_signals = grid.len() * n * n;
    let num_vars = num_signals * m;
    if num_vars > options.var_cap {
        return Err(QptasError::SizeGuard {
            what: "program variables",
            size: num_vars,
            cap: options.var_cap,
        });
    }

    let sbar = center_profiles(instance, &grid);
    let prior = instance.prior();
    let s = instance.sender_matrix();
    let r = instance.receiver_matrix();
    let delta = instance.delta();

    let mut signals = Vec::with_capacity(num_signals);
    let mut lp = LinearProgram::new(num_vars);
    let phi = |sig: usize, w: usize| sig * m + w;

    let mut objective = Vec::with_capacity(num_vars);
    for g in 0..grid.len() {
        for best in 0..n {
            for worst in 0..n {
                let sig = signal_id(g, best, worst, n);
                signals.push(QptasSignal {
                    center: g,
                    best,
                    worst,
                });
                for w in 0..m {
                    objective.push((phi(sig, w), prior[w] * s.at(w, worst)));
                }
            }
        }
    }
    lp.set_objective(objective);

    for (sig, signal) in signals.iter().enumerate() {
        let g = signal.center;
        // (i)+(ii) cell membership for every action
        for a in 0..n {
            let center = sbar[g * n + a];
            let lo: Vec<(usize, f64)> = (0..m)
                .map(|w| (phi(sig, w), prior[w] * (s.at(w, a) - center + eps_prime)))
                .collect();
            lp.add_constraint(lo, Relation::Ge, 0.0);
            let hi: Vec<(usize, f64)> = (0..m)
                .map(|w| (phi(sig, w), prior[w] * (s.at(w, a) - center - eps_prime)))
                .collect();
            lp.add_constraint(hi, Relation::Le, 0.0);
        }
        // (iii) the designated best response dominates every action
        for a in 0..n {
            let coeffs: Vec<(usize, f64)> = (0..m)
                .map(|w| (phi(sig, w), prior[w] * (r.at(w, signal.best) - r.at(w, a))))
                .collect();
            lp.add_constraint(coeffs, Relation::Ge, 0.0);
        }
        // (iv) exclusion of actions with center utility well below `worst`
        for a in 0..n {
            if sbar[g * n + a] < sbar[g * n + signal.worst] - 2.0 * eps_prime {
                let coeffs: Vec<(usize, f64)> = (0..m)
                    .map(|w| {
                        (
                            phi(sig, w),
                            prior[w] * (r.at(w, signal.best) - r.at(w, a) - delta),
                        )
                    })
                    .collect();
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
        }
    }
    // (v) per-state signal distributions
    for w in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..num_signals).map(|sig| (phi(sig, w), 1.0)).collect();
        lp.add_constraint(coeffs, Relation::Eq, 1.0);
    }
    Ok(QptasLp {
        lp,
        signals,
        grid,
        eps_prime,
    })
}

/// Pricing oracle over `(center, best, worst)` cells. A per-(center, best)
/// emptiness cache collapses the whole row of `worst` choices once the cell
/// admits no belief with that best response.
struct CellOracle<'a> {
    instance: &'a PersuasionInstance,
    grid: &'a KUniformGrid,
    sbar: &'a [f64],
    eps_prime: f64,
    seed_column: Column,
    tolerance: f64,
    /// 0 = unknown, 1 = nonempty, 2 = empty; indexed by `g*n + best`.
    pair_state: Vec<AtomicU8>,
}

impl CellOracle<'_> {
    fn cell_rows(&self, g: usize, lp: &mut LinearProgram) {
        let inst = self.instance;
        let (m, n) = (inst.num_states(), inst.num_actions());
        let s = inst.sender_matrix();
        for a in 0..n {
            let center = self.sbar[g * n + a];
            let lo: Vec<(usize, f64)> = (0..m)
                .map(|w| (w, s.at(w, a) - center + self.eps_prime))
                .collect();
            lp.add_constraint(lo, Relation::Ge, 0.0);
            let hi: Vec<(usize, f64)> = (0..m)
                .map(|w| (w, s.at(w, a) - center - self.eps_prime))
                .collect();
            lp.add_constraint(hi, Relation::Le, 0.0);
        }
    }

    fn br_rows(&self, best: usize, lp: &mut LinearProgram) {
        let inst = self.instance;
        let (m, n) = (inst.num_states(), inst.num_actions());
        let r = inst.receiver_matrix();
        for a in 0..n {
            if a == best {
                continue;
            }
            let coeffs: Vec<(usize, f64)> =
                (0..m).map(|w| (w, r.at(w, best) - r.at(w, a))).collect();
            lp.add_constraint(coeffs, Relation::Ge, 0.0);
        }
    }

    /// Cheap emptiness test of `cell(g) with best response `best``.
    fn pair_nonempty(&self, g: usize, best: usize) -> bool {
        let n = self.instance.num_actions();
        let idx = g * n + best;
        match self.pair_state[idx].load(Ordering::Relaxed) {
            1 => return true,
            2 => return false,
            _ => {}
        }
        let m = self.instance.num_states();
        let mut lp = LinearProgram::new(m);
        self.cell_rows(g, &mut lp);
        self.br_rows(best, &mut lp);
        lp.add_constraint((0..m).map(|w| (w, 1.0)).collect(), Relation::Eq, 1.0);
        let sol = lp::solve(&lp, self.tolerance);
        let nonempty = sol.status == LpStatus::Optimal;
        self.pair_state[idx].store(if nonempty { 1 } else { 2 }, Ordering::Relaxed);
        nonempty
    }
}

impl BlockOracle for CellOracle<'_> {
    fn num_blocks(&self) -> usize {
        let n = self.instance.num_actions();
        self.grid.len() * n * n
    }

    fn price(&self, block: usize, lambda: &[f64]) -> Priced {
        let inst = self.instance;
        let (m, n) = (inst.num_states(), inst.num_actions());
        let worst = block % n;
        let best = (block / n) % n;
        let g = block / (n * n);
        if !self.pair_nonempty(g, best) {
            return Priced::Empty;
        }
        let s = inst.sender_matrix();
        let r = inst.receiver_matrix();

        let mut lp = LinearProgram::new(m);
        lp.set_objective((0..m).map(|w| (w, s.at(w, worst) - lambda[w])).collect());
        self.cell_rows(g, &mut lp);
        self.br_rows(best, &mut lp);
        for a in 0..n {
            if self.sbar[g * n + a] < self.sbar[g * n + worst] - 2.0 * self.eps_prime {
                let coeffs: Vec<(usize, f64)> = (0..m)
                    .map(|w| (w, r.at(w, best) - r.at(w, a) - inst.delta()))
                    .collect();
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
        }
        lp.add_constraint((0..m).map(|w| (w, 1.0)).collect(), Relation::Eq, 1.0);

        let Ok(out) = lp::solve_detailed(&lp, self.tolerance) else {
            return Priced::Unavailable;
        };
        match out.status {
            LpStatus::Optimal => {
                let mu = out.primal[..m].to_vec();
                let value = inst.sender_value(&mu, worst);
                Priced::Column(PricedColumn {
                    reduced_cost: out.objective,
                    column: Column {
                        block,
                        posterior: mu,
                        value,
                    },
                })
            }
            LpStatus::Infeasible => Priced::Empty,
            _ => Priced::Unavailable,
        }
    }

    fn seeds(&self) -> Vec<Column> {
        let inst = self.instance;
        let (m, n) = (inst.num_states(), inst.num_actions());
        let mut seeds = vec![self.seed_column.clone()];
        // warm start: each state's degenerate belief sits in its nearest
        // cell (the grid is fine enough to cover every belief)
        for w in 0..m {
            if inst.prior()[w] <= 0.0 {
                continue;
            }
            let mut mu = vec![0.0; m];
            mu[w] = 1.0;
            let g = nearest_center(inst, self.grid, &mu);
            if covering_gap_at(inst, self.grid.point(g), &mu) > self.eps_prime {
                continue;
            }
            let best = best_response(inst, &mu);
            let br = br_delta_set(inst, &mu, 0.0);
            let worst = br
                .iter()
                .copied()
                .min_by(|&a, &b| self.sbar[g * n + a].total_cmp(&self.sbar[g * n + b]))
                .expect("BR set nonempty");
            seeds.push(Column {
                block: signal_id(g, best, worst, n),
                posterior: mu.clone(),
                value: inst.sender_value(&mu, worst),
            });
        }
        seeds
    }

    /// Cell membership pins `s(mu, worst)` near its center value, so the
    /// reduced cost is at most `sbar(worst) + eps' - min over states of
    /// lambda`.
    fn quick_bound(&self, block: usize, lambda: &[f64]) -> f64 {
        let n = self.instance.num_actions();
        let worst = block % n;
        let g = block / (n * n);
        let min_lambda = lambda.iter().fold(f64::INFINITY, |acc, &l| acc.min(l));
        self.sbar[g * n + worst] + self.eps_prime - min_lambda
    }
}

fn covering_gap_at(instance: &PersuasionInstance, center: &[f64], mu: &[f64]) -> f64 {
    (0..instance.num_actions())
        .map(|a| (instance.sender_value(mu, a) - instance.sender_value(center, a)).abs())
        .fold(0.0, f64::max)
}

/// Re-solve the approximation program over the used cells only, requiring
/// interior slack on every exclusion row (see the same device in
/// [`crate::exact`]); `None` keeps the raw extraction.
fn recenter_cell_masses(
    instance: &PersuasionInstance,
    kept: &[(String, SignalProvenance, Vec<f64>)],
    grid: &KUniformGrid,
    eps_prime: f64,
    value: f64,
    tolerance: f64,
) -> Option<Vec<Vec<f64>>> {
    let m = instance.num_states();
    let n = instance.num_actions();
    let k = kept.len();
    let cells: Vec<(usize, usize, usize)> = kept
        .iter()
        .map(|(_, prov, _)| match prov {
            SignalProvenance::GridCell {
                center,
                best,
                worst,
            } => (*center, *best, *worst),
            _ => unreachable!("cell solver emits cell signals"),
        })
        .collect();
    let s = instance.sender_matrix();
    let r = instance.receiver_matrix();
    let delta = instance.delta();
    let sbar = |g: usize, a: usize| instance.sender_value(grid.point(g), a);

    let mut any_exclusion = false;
    let y = |sig: usize, w: usize| sig * m + w;
    let mut lp = LinearProgram::new(k * m);
    let mut objective = Vec::with_capacity(k * m);
    for (sig, &(g, best, worst)) in cells.iter().enumerate() {
        for w in 0..m {
            objective.push((y(sig, w), s.at(w, worst)));
        }
        for a in 0..n {
            let center = sbar(g, a);
            let lo: Vec<(usize, f64)> = (0..m)
                .map(|w| (y(sig, w), s.at(w, a) - center + eps_prime))
                .collect();
            lp.add_constraint(lo, Relation::Ge, 0.0);
            let hi: Vec<(usize, f64)> = (0..m)
                .map(|w| (y(sig, w), s.at(w, a) - center - eps_prime))
                .collect();
            lp.add_constraint(hi, Relation::Le, 0.0);
            if a != best {
                let coeffs: Vec<(usize, f64)> = (0..m)
                    .map(|w| (y(sig, w), r.at(w, best) - r.at(w, a)))
                    .collect();
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
            if sbar(g, a) < sbar(g, worst) - 2.0 * eps_prime {
                any_exclusion = true;
                let coeffs: Vec<(usize, f64)> = (0..m)
                    .map(|w| (y(sig, w), r.at(w, best) - r.at(w, a) - delta))
                    .collect();
                lp.add_constraint(coeffs, Relation::Ge, exact::INTERIOR_SLACK);
            }
        }
    }
    if !any_exclusion {
        return None;
    }
    lp.set_objective(objective);
    for w in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..k).map(|sig| (y(sig, w), 1.0)).collect();
        lp.add_constraint(coeffs, Relation::Eq, instance.prior()[w]);
    }
    let sol = lp::solve(&lp, tolerance);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    if sol.objective_value? < value - exact::RECENTER_VALUE_BUDGET {
        return None;
    }
    let primal = sol.primal?;
    let mut masses: Vec<Vec<f64>> = (0..k)
        .map(|sig| (0..m).map(|w| primal[y(sig, w)].max(0.0)).collect())
        .collect();
    exact::renormalize_masses(&mut masses, instance.prior());
    Some(masses)
}

fn finish_cell_solve(
    instance: &PersuasionInstance,
    masses: Vec<(String, SignalProvenance, Vec<f64>)>,
    grid: &KUniformGrid,
    eps_prime: f64,
    value: f64,
    tolerance: f64,
    lp_num_vars: usize,
    lp_num_rows: usize,
) -> Result<SolverResult, QptasError> {
    let mut kept = exact::keep_positive(masses);
    if let Some(new_masses) =
        recenter_cell_masses(instance, &kept, grid, eps_prime, value, tolerance)
    {
        for ((_, _, mass), new_mass) in kept.iter_mut().zip(new_masses) {
            *mass = new_mass;
        }
    }
    Ok(exact::assemble_result(
        instance,
        kept,
        value,
        lp_num_vars,
        lp_num_rows,
    )?)
}

/// The cell center whose sender-utility profile is closest (in max norm)
/// to the profile at `mu`.
pub fn nearest_center(instance: &PersuasionInstance, grid: &KUniformGrid, mu: &[f64]) -> usize {
    let n = instance.num_actions();
    let mut best_g = 0;
    let mut best_gap = f64::INFINITY;
    for (g, center) in grid.points().iter().enumerate() {
        let mut gap: f64 = 0.0;
        for a in 0..n {
            gap = gap.max((instance.sender_value(mu, a) - instance.sender_value(center, a)).abs());
            if gap >= best_gap {
                break;
            }
        }
        if gap < best_gap {
            best_gap = gap;
            best_g = g;
        }
    }
    best_g
}

/// Worst-case covering gap of the grid at `mu`: the smallest over centers
/// of the largest per-action sender-utility deviation.
pub fn covering_gap(instance: &PersuasionInstance, grid: &KUniformGrid, mu: &[f64]) -> f64 {
    let g = nearest_center(instance, grid, mu);
    let center = grid.point(g);
    (0..instance.num_actions())
        .map(|a| (instance.sender_value(mu, a) - instance.sender_value(center, a)).abs())
        .fold(0.0, f64::max)
}

/// Solve the approximation program; the result's `value` is the program
/// optimum, which is within `eps/5` of the exact robust optimum, and the
/// returned scheme's own robust utility is within a further `4 eps/5`.
pub fn solve_qptas(instance: &PersuasionInstance, eps: f64) -> Result<SolverResult, QptasError> {
    solve_qptas_with(instance, eps, &QptasOptions::default())
}

pub fn solve_qptas_with(
    instance: &PersuasionInstance,
    eps: f64,
    options: &QptasOptions,
) -> Result<SolverResult, QptasError> {
    let m = instance.num_states();
    let n = instance.num_actions();
    let (eps_prime, k) = epsilon_for_grid_with_base(n, eps, options.log_base)?;
    let grid = k_uniform_grid_with_cap(m, k, options.grid_cap)?;
    let num_signals = grid.len() * n * n;
    let explicit = match options.strategy {
        exact::SolveStrategy::Explicit => true,
        exact::SolveStrategy::Decomposed => false,
        exact::SolveStrategy::Auto => num_signals * 3 * n + m <= EXPLICIT_ROW_LIMIT,
    };
    if explicit {
        return solve_qptas_explicit(instance, eps, options);
    }

    let sbar = center_profiles(instance, &grid);
    let prior = instance.prior();
    // seed: the prior sits in its nearest center's cell; pick that cell with
    // the prior's own best response and the sender-worst BR action at the
    // center, which satisfies every block constraint at the prior itself
    let g0 = nearest_center(instance, &grid, prior);
    let best0 = best_response(instance, prior);
    let br0 = br_delta_set(instance, prior, 0.0);
    let worst0 = br0
        .iter()
        .copied()
        .min_by(|&a, &b| sbar[g0 * n + a].total_cmp(&sbar[g0 * n + b]))
        .expect("BR set nonempty");
    let seed_column = Column {
        block: signal_id(g0, best0, worst0, n),
        posterior: prior.to_vec(),
        value: instance.sender_value(prior, worst0),
    };
    let oracle = CellOracle {
        instance,
        grid: &grid,
        sbar: &sbar,
        eps_prime,
        seed_column,
        tolerance: options.tolerance,
        pair_state: (0..grid.len() * n).map(|_| AtomicU8::new(0)).collect(),
    };
    let result = decomp::solve_decomposed(prior, &oracle, options.tolerance)
        .map_err(|e| QptasError::Decomposition(e.to_string()))?;

    let masses: Vec<(String, SignalProvenance, Vec<f64>)> = result
        .block_masses
        .into_iter()
        .map(|(block, mass)| {
            let worst = block % n;
            let best = (block / n) % n;
            let g = block / (n * n);
            (
                format!(
                    "cell{g}|br={}|worst={}",
                    instance.actions()[best],
                    instance.actions()[worst]
                ),
                SignalProvenance::GridCell {
                    center: g,
                    best,
                    worst,
                },
                mass,
            )
        })
        .collect();
    let implied_rows = num_signals * (3 * n) + m;
    finish_cell_solve(
        instance,
        masses,
        &grid,
        eps_prime,
        result.value,
        options.tolerance,
        num_signals * m,
        implied_rows,
    )
}

fn solve_qptas_explicit(
    instance: &PersuasionInstance,
    eps: f64,
    options: &QptasOptions,
) -> Result<SolverResult, QptasError> {
    let built = build_qptas_lp_with(instance, eps, options)?;
    let sol = lp::solve(&built.lp, options.tolerance);
    if sol.status != LpStatus::Optimal {
        return Err(QptasError::Solver(sol.status));
    }
    let primal = sol.primal.expect("optimal");
    let value = sol.objective_value.expect("optimal");
    let m = instance.num_states();
    let prior = instance.prior();
    let masses: Vec<(String, SignalProvenance, Vec<f64>)> = built
        .signals
        .iter()
        .enumerate()
        .map(|(sig, signal)| {
            let mass: Vec<f64> = (0..m)
                .map(|w| (prior[w] * primal[sig * m + w]).max(0.0))
                .collect();
            (
                format!(
                    "cell{}|br={}|worst={}",
                    signal.center,
                    instance.actions()[signal.best],
                    instance.actions()[signal.worst]
                ),
                SignalProvenance::GridCell {
                    center: signal.center,
                    best: signal.best,
                    worst: signal.worst,
                },
                mass,
            )
        })
        .collect();
    finish_cell_solve(
        instance,
        masses,
        &built.grid,
        built.eps_prime,
        value,
        options.tolerance,
        built.lp.num_vars,
        built.lp.num_rows(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact;
    use crate::instances;
    use crate::model::robust_utility;

    #[test]
    fn grid_enumeration_examples() {
        let g = k_uniform_grid(2, 2).unwrap();
        assert_eq!(
            g.points(),
            &[vec![0.0, 1.0], vec![0.5, 0.5], vec![1.0, 0.0]]
        );
        let g = k_uniform_grid(3, 1).unwrap();
        assert_eq!(g.len(), 3);
        for p in g.points() {
            assert_eq!(p.iter().filter(|&&x| x == 1.0).count(), 1);
        }
        assert_eq!(k_uniform_grid(2, 4).unwrap().len(), 5);
        assert_eq!(grid_size(3, 249), Some(251 * 250 / 2));
    }

    #[test]
    fn grid_guard_trips() {
        assert!(matches!(
            k_uniform_grid_with_cap(3, 10_000, 1000),
            Err(QptasError::SizeGuard { .. })
        ));
    }

    #[test]
    fn epsilon_formula_examples() {
        let (ep, k) = epsilon_for_grid(2, 0.5).unwrap();
        assert!((ep - 0.1).abs() < 1e-15);
        assert_eq!(k, 70);
        let (ep, k) = epsilon_for_grid(1, 1.0).unwrap();
        assert!((ep - 0.2).abs() < 1e-15);
        assert_eq!(k, 9);
        assert!(matches!(
            epsilon_for_grid(2, 0.0),
            Err(QptasError::BadEps(_))
        ));
        // base-2 grids are at least as fine
        let (_, k2) = epsilon_for_grid_with_base(2, 0.5, LogBase::Two).unwrap();
        assert!(k2 >= k);
    }

    #[test]
    fn signal_count_matches_formula() {
        let instance = instances::apples_instance(0.1).unwrap();
        let eps = 0.9;
        let built = build_qptas_lp(&instance, eps).unwrap();
        let (_, k) = epsilon_for_grid(2, eps).unwrap();
        let expected = grid_size(2, k).unwrap() * 2 * 2;
        assert_eq!(built.signals.len(), expected);
        assert_eq!(built.lp.num_vars, expected * 2);
    }

    #[test]
    fn single_state_collapses_to_the_prior_cell() {
        // with one state the grid is a single point and the program just
        // picks the worst BR action at the (degenerate) prior
        let instance = crate::model::PersuasionInstance::new(
            vec!["s0".into()],
            vec!["a0".into(), "a1".into(), "a2".into()],
            vec![1.0],
            vec![vec![0.9, 0.4, 0.7]],
            vec![vec![0.8, 0.75, 0.1]],
            0.1,
        )
        .unwrap();
        let grid = k_uniform_grid(1, 5).unwrap();
        assert_eq!(grid.len(), 1);
        let result = solve_qptas(&instance, 0.5).unwrap();
        // BR at the single state is {a0, a1}; the sender-worst of those is a1
        let expected = crate::model::worst_case_sender_value(&instance, &[1.0], 0.0).0;
        assert!((result.value - expected).abs() < 1e-9);
        assert!((expected - 0.4).abs() < 1e-12);
    }

    #[test]
    fn guarantee_on_the_direct_revelation_family() {
        // optimal robust value 0.99; an eps = 0.25 run must land within it
        let instance = instances::direct_revelation_example(0.01).unwrap();
        let result = solve_qptas(&instance, 0.25).unwrap();
        let eval = robust_utility(&instance, &result.scheme).unwrap();
        assert!(eval.value >= 0.74, "scheme value {}", eval.value);
    }

    #[test]
    fn single_action_collapses_to_prior_payoff() {
        let instance = crate::model::PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["only".into()],
            vec![0.5, 0.5],
            vec![vec![0.3], vec![0.9]],
            vec![vec![0.5], vec![0.5]],
            0.2,
        )
        .unwrap();
        let result = solve_qptas(&instance, 0.5).unwrap();
        assert!((result.value - 0.6).abs() < 1e-9);
        let eval = robust_utility(&instance, &result.scheme).unwrap();
        assert!(eval.value >= result.value - 4.0 * 0.1 - 1e-9);
    }

    #[test]
    fn sandwich_holds_on_apples() {
        let instance = instances::apples_instance(0.1).unwrap();
        let eps = 0.3;
        let exact_value = solve_exact(&instance).unwrap().value;
        let result = solve_qptas(&instance, eps).unwrap();
        let eps_prime = eps / 5.0;
        assert!(
            result.value >= exact_value - eps_prime - 1e-6,
            "program value {} vs exact {exact_value}",
            result.value
        );
        let eval = robust_utility(&instance, &result.scheme).unwrap();
        assert!(
            eval.value >= result.value - 4.0 * eps_prime - 1e-6,
            "scheme value {} vs program {}",
            eval.value,
            result.value
        );
        assert!(eval.value >= exact_value - eps - 1e-9);
    }

    #[test]
    fn cell_membership_of_used_signals() {
        let instance = instances::apples_instance(0.1).unwrap();
        let result = solve_qptas(&instance, 0.4).unwrap();
        let (eps_prime, k) = epsilon_for_grid(2, 0.4).unwrap();
        let grid = k_uniform_grid(2, k).unwrap();
        for sig in &result.per_signal {
            let SignalProvenance::GridCell { center, .. } = sig.provenance else {
                panic!("qptas signals come from grid cells");
            };
            for a in 0..instance.num_actions() {
                let gap = (instance.sender_value(&sig.posterior, a)
                    - instance.sender_value(grid.point(center), a))
                .abs();
                assert!(gap <= eps_prime + 1e-8, "gap {gap} vs {eps_prime}");
            }
        }
    }

    #[test]
    fn explicit_and_decomposed_routes_agree() {
        let instance = instances::apples_instance(0.15).unwrap();
        let eps = 1.0;
        let explicit = solve_qptas_with(
            &instance,
            eps,
            &QptasOptions {
                strategy: exact::SolveStrategy::Explicit,
                ..QptasOptions::default()
            },
        )
        .unwrap();
        let decomposed = solve_qptas_with(
            &instance,
            eps,
            &QptasOptions {
                strategy: exact::SolveStrategy::Decomposed,
                ..QptasOptions::default()
            },
        )
        .unwrap();
        assert!(
            (explicit.value - decomposed.value).abs() < 1e-7,
            "{} vs {}",
            explicit.value,
            decomposed.value
        );
    }

    #[test]
    fn covering_gap_within_eps_prime_for_sampled_beliefs() {
        use rand::{Rng, SeedableRng};
        let instance = instances::random_instance(3, 4, 0.2, 21);
        let (eps_prime, k) = epsilon_for_grid(4, 0.4).unwrap();
        let grid = k_uniform_grid(3, k).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut mu: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = mu.iter().sum();
            mu.iter_mut().for_each(|p| *p /= s);
            let gap = covering_gap(&instance, &grid, &mu);
            assert!(gap <= eps_prime + 1e-12, "gap {gap} vs {eps_prime}");
        }
    }
}
