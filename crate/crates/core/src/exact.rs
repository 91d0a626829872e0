//! Exact optimal robust signaling over the full subset-action signal space.
//!
//! Any optimal scheme can be merged down to at most `n * 2^(n-1)` signals,
//! one per pair `(A, best)` of a candidate BR set and its best response.
//! The relaxed program over that space maximizes the sum of per-signal
//! worst-case sender payoffs subject to (i) the payoff bound for every
//! action in `A`, (ii) `best` beating every member of `A`, (iii) every
//! excluded action being at least `delta` suboptimal, and (iv) per-state
//! signal distributions. The relaxation is tight: the optimal objective is
//! the optimal robust utility and the optimal variables are an optimal
//! scheme.
//!
//! Small spaces are solved monolithically; large ones go through the
//! column driver in [`crate::decomp`], which certifies optimality against
//! every tuple of the space without materializing the program.

use crate::decomp::{self, BlockOracle, Column, Priced, PricedColumn};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{
    best_response, br_delta_set, worst_case_sender_value, PersuasionInstance, SignalingScheme,
    SubsetActionTuple,
};
use thiserror::Error;

/// Default cap on the action count for full-space enumeration.
pub const DEFAULT_ACTION_CAP: usize = 16;
/// Explicit solves above this row-count estimate route to the column
/// driver instead (the bundled simplex keeps a dense basis).
const EXPLICIT_ROW_LIMIT: usize = 400;
/// Optimal bases sit on exclusion hyperplanes, where the strict BR
/// evaluation of the emitted scheme would flip on rounding noise. Scheme
/// extraction therefore re-centers the optimal masses to put at least this
/// much slack on every exclusion row, provided that costs at most
/// [`RECENTER_VALUE_BUDGET`] of objective (the reported value is the true
/// optimum either way). The slack must stay well above the coupling
/// residual of the re-centered basis or the renormalization below eats it.
pub(crate) const INTERIOR_SLACK: f64 = 1e-7;
pub(crate) const RECENTER_VALUE_BUDGET: f64 = 5e-7;

/// Scale per-state mass totals to the prior exactly (the re-centered basis
/// can carry a coupling residual above the scheme validator's tolerance).
pub(crate) fn renormalize_masses(masses: &mut [Vec<f64>], prior: &[f64]) {
    for (w, &target) in prior.iter().enumerate() {
        let total: f64 = masses.iter().map(|mass| mass[w]).sum();
        if total > 0.0 && target > 0.0 {
            let factor = target / total;
            for mass in masses.iter_mut() {
                mass[w] *= factor;
            }
        } else {
            for mass in masses.iter_mut() {
                mass[w] = 0.0;
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("signal space for {actions} actions exceeds the cap of {cap}")]
    SizeGuard { actions: usize, cap: usize },
    #[error("duplicate tuple {0} in signal space")]
    DuplicateTuple(SubsetActionTuple),
    #[error("the program reported {0:?}, which indicates a bug for a valid instance")]
    Solver(LpStatus),
    #[error("column driver failed: {0}")]
    Decomposition(String),
    #[error("scheme assembly failed: {0}")]
    Assembly(String),
    #[error("seed tuple missing from the signal space")]
    MissingSeed,
}

/// Direction of the exclusion constraint family (iii).
///
/// `GapAtLeastDelta` (the default) requires every excluded action to be at
/// least `delta` suboptimal against `best`, matching the exclusion
/// semantics the tightness proof relies on. `AsWritten` flips the aggregate
/// inequality for empirical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExclusionDirection {
    #[default]
    GapAtLeastDelta,
    AsWritten,
}

/// An ordered, duplicate-free collection of subset-action tuples.
#[derive(Debug, Clone)]
pub struct SignalSpace {
    tuples: Vec<SubsetActionTuple>,
}

impl SignalSpace {
    pub fn from_tuples(tuples: Vec<SubsetActionTuple>) -> Result<Self, ExactError> {
        let mut seen = std::collections::HashSet::new();
        for t in &tuples {
            if !seen.insert(*t) {
                return Err(ExactError::DuplicateTuple(*t));
            }
        }
        Ok(SignalSpace { tuples })
    }

    pub fn tuples(&self) -> &[SubsetActionTuple] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn position(&self, tuple: &SubsetActionTuple) -> Option<usize> {
        self.tuples.iter().position(|t| t == tuple)
    }
}

/// All pairs of a nonempty action subset and a member action, in
/// deterministic order: subsets by increasing bitmask, members by index.
/// The count is `n * 2^(n-1)`.
pub fn enumerate_signal_space(n: usize) -> Result<SignalSpace, ExactError> {
    enumerate_signal_space_with_cap(n, DEFAULT_ACTION_CAP)
}

pub fn enumerate_signal_space_with_cap(n: usize, cap: usize) -> Result<SignalSpace, ExactError> {
    if n > cap {
        return Err(ExactError::SizeGuard { actions: n, cap });
    }
    let mut tuples = Vec::with_capacity(n * (1usize << (n.saturating_sub(1))));
    for mask in 1u32..(1u32 << n) {
        for best in 0..n {
            if mask & (1 << best) != 0 {
                tuples.push(SubsetActionTuple::new(mask, best).expect("member by construction"));
            }
        }
    }
    Ok(SignalSpace { tuples })
}

/// Variable layout of the explicit program.
#[derive(Debug, Clone)]
pub struct RobustVarMap {
    pub num_states: usize,
    pub num_tuples: usize,
}

impl RobustVarMap {
    /// Index of the conditional probability variable for `(state, tuple)`.
    pub fn phi(&self, tuple: usize, state: usize) -> usize {
        tuple * self.num_states + state
    }

    /// Index of the per-tuple payoff variable.
    pub fn x(&self, tuple: usize) -> usize {
        self.num_states * self.num_tuples + tuple
    }

    pub fn num_vars(&self) -> usize {
        (self.num_states + 1) * self.num_tuples
    }
}

/// The explicit program plus its variable map.
#[derive(Debug, Clone)]
pub struct RobustLp {
    pub lp: LinearProgram,
    pub map: RobustVarMap,
}

/// Build the relaxed optimal-scheme program over `space`.
pub fn build_robust_lp(
    instance: &PersuasionInstance,
    space: &SignalSpace,
    exclusion: ExclusionDirection,
) -> RobustLp {
    let m = instance.num_states();
    let n = instance.num_actions();
    let nt = space.len();
    let map = RobustVarMap {
        num_states: m,
        num_tuples: nt,
    };
    let mut lp = LinearProgram::new(map.num_vars());
    let mut names = Vec::with_capacity(map.num_vars());
    for t in space.tuples() {
        for state in 0..m {
            names.push(format!("phi[{}][{t}]", instance.states()[state]));
        }
    }
    for t in space.tuples() {
        names.push(format!("x[{t}]"));
    }
    lp.var_names = Some(names);

    // payoff variables are free; conditionals keep the default [0, inf)
    for t in 0..nt {
        lp.set_bounds(map.x(t), f64::NEG_INFINITY, f64::INFINITY);
    }
    lp.set_objective((0..nt).map(|t| (map.x(t), 1.0)).collect());

    let prior = instance.prior();
    let s = instance.sender_matrix();
    let r = instance.receiver_matrix();
    let delta = instance.delta();

    for (t, tuple) in space.tuples().iter().enumerate() {
        let best = tuple.best();
        // (i) sender payoff bound for every member action
        for a in tuple.actions() {
            let mut coeffs: Vec<(usize, f64)> = (0..m)
                .map(|w| (map.phi(t, w), prior[w] * s.at(w, a)))
                .collect();
            coeffs.push((map.x(t), -1.0));
            lp.add_constraint(coeffs, Relation::Ge, 0.0);
        }
        // (ii) best response dominates every member action
        for a in tuple.actions() {
            let coeffs: Vec<(usize, f64)> = (0..m)
                .map(|w| (map.phi(t, w), prior[w] * (r.at(w, best) - r.at(w, a))))
                .collect();
            lp.add_constraint(coeffs, Relation::Ge, 0.0);
        }
        // (iii) every excluded action is at least delta suboptimal
        for a in 0..n {
            if tuple.contains(a) {
                continue;
            }
            let coeffs: Vec<(usize, f64)> = (0..m)
                .map(|w| {
                    (
                        map.phi(t, w),
                        prior[w] * (r.at(w, best) - r.at(w, a) - delta),
                    )
                })
                .collect();
            let rel = match exclusion {
                ExclusionDirection::GapAtLeastDelta => Relation::Ge,
                ExclusionDirection::AsWritten => Relation::Le,
            };
            lp.add_constraint(coeffs, rel, 0.0);
        }
    }
    // (iv) per-state signal distributions
    for w in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..nt).map(|t| (map.phi(t, w), 1.0)).collect();
        lp.add_constraint(coeffs, Relation::Eq, 1.0);
    }
    RobustLp { lp, map }
}

/// Why a signal exists: which tuple, grid cell, or raw grid point it
/// encodes.
#[derive(Debug, Clone)]
pub enum SignalProvenance {
    Tuple(SubsetActionTuple),
    GridCell {
        center: usize,
        best: usize,
        worst: usize,
    },
    GridPoint(usize),
}

/// Per-signal diagnostics of a solver result.
#[derive(Debug, Clone)]
pub struct PerSignalReport {
    pub label: String,
    pub provenance: SignalProvenance,
    pub marginal: f64,
    pub posterior: Vec<f64>,
    pub realized_br: Vec<usize>,
    pub worst_action: usize,
    pub worst_value: f64,
}

/// Solution of one of the optimal-scheme programs.
#[derive(Debug, Clone)]
pub struct SolverResult {
    pub scheme: SignalingScheme,
    pub value: f64,
    pub per_signal: Vec<PerSignalReport>,
    pub lp_num_vars: usize,
    pub lp_num_rows: usize,
}

/// How the optimal-scheme program is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveStrategy {
    /// Explicit program for small spaces, column driver otherwise.
    #[default]
    Auto,
    Explicit,
    Decomposed,
}

#[derive(Debug, Clone)]
pub struct ExactOptions {
    pub action_cap: usize,
    pub exclusion: ExclusionDirection,
    pub strategy: SolveStrategy,
    pub tolerance: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            action_cap: DEFAULT_ACTION_CAP,
            exclusion: ExclusionDirection::default(),
            strategy: SolveStrategy::default(),
            tolerance: lp::DEFAULT_TOLERANCE,
        }
    }
}

/// Compute the optimal robust signaling scheme over the full signal space.
pub fn solve_exact(instance: &PersuasionInstance) -> Result<SolverResult, ExactError> {
    solve_exact_with(instance, &ExactOptions::default())
}

pub fn solve_exact_with(
    instance: &PersuasionInstance,
    options: &ExactOptions,
) -> Result<SolverResult, ExactError> {
    let space = enumerate_signal_space_with_cap(instance.num_actions(), options.action_cap)?;
    solve_over_space(instance, &space, options)
}

/// Solve the optimal-scheme program restricted to `space`.
pub(crate) fn solve_over_space(
    instance: &PersuasionInstance,
    space: &SignalSpace,
    options: &ExactOptions,
) -> Result<SolverResult, ExactError> {
    let m = instance.num_states();
    let n = instance.num_actions();
    let est_rows: usize = space.tuples().iter().map(|t| n + t.len()).sum::<usize>() + m;
    let explicit = match options.strategy {
        SolveStrategy::Explicit => true,
        SolveStrategy::Decomposed => false,
        SolveStrategy::Auto => est_rows <= EXPLICIT_ROW_LIMIT,
    };
    if explicit {
        solve_explicit(instance, space, options)
    } else {
        solve_via_columns(instance, space, options)
    }
}

fn solve_explicit(
    instance: &PersuasionInstance,
    space: &SignalSpace,
    options: &ExactOptions,
) -> Result<SolverResult, ExactError> {
    let built = build_robust_lp(instance, space, options.exclusion);
    let sol = lp::solve(&built.lp, options.tolerance);
    if sol.status != LpStatus::Optimal {
        return Err(ExactError::Solver(sol.status));
    }
    let primal = sol.primal.expect("optimal");
    let value = sol.objective_value.expect("optimal");
    let prior = instance.prior();
    let masses: Vec<(String, SignalProvenance, Vec<f64>)> = space
        .tuples()
        .iter()
        .enumerate()
        .map(|(t, tuple)| {
            let mass: Vec<f64> = (0..instance.num_states())
                .map(|w| (prior[w] * primal[built.map.phi(t, w)]).max(0.0))
                .collect();
            (
                tuple.label(instance.actions()),
                SignalProvenance::Tuple(*tuple),
                mass,
            )
        })
        .collect();
    finish_tuple_solve(
        instance,
        masses,
        value,
        options.exclusion,
        options.tolerance,
        built.lp.num_vars,
        built.lp.num_rows(),
    )
}

/// Pricing oracle over subset-action tuples.
pub(crate) struct TupleOracle<'a> {
    pub instance: &'a PersuasionInstance,
    pub tuples: &'a [SubsetActionTuple],
    pub exclusion: ExclusionDirection,
    pub seed_block: usize,
    pub tolerance: f64,
}

impl BlockOracle for TupleOracle<'_> {
    fn num_blocks(&self) -> usize {
        self.tuples.len()
    }

    fn price(&self, block: usize, lambda: &[f64]) -> Priced {
        let tuple = &self.tuples[block];
        let inst = self.instance;
        let m = inst.num_states();
        let n = inst.num_actions();
        let r = inst.receiver_matrix();
        let s = inst.sender_matrix();
        let best = tuple.best();

        // variables: mu (m, >= 0), w (free)
        let mut lp = LinearProgram::new(m + 1);
        let w_var = m;
        lp.set_bounds(w_var, f64::NEG_INFINITY, f64::INFINITY);
        let mut obj: Vec<(usize, f64)> = lambda.iter().enumerate().map(|(i, &l)| (i, -l)).collect();
        obj.push((w_var, 1.0));
        lp.set_objective(obj);

        for a in tuple.actions() {
            let mut coeffs: Vec<(usize, f64)> = (0..m).map(|i| (i, s.at(i, a))).collect();
            coeffs.push((w_var, -1.0));
            lp.add_constraint(coeffs, Relation::Ge, 0.0);
            if a != best {
                let coeffs: Vec<(usize, f64)> =
                    (0..m).map(|i| (i, r.at(i, best) - r.at(i, a))).collect();
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
        }
        for a in 0..n {
            if tuple.contains(a) {
                continue;
            }
            let coeffs: Vec<(usize, f64)> =
                (0..m).map(|i| (i, r.at(i, best) - r.at(i, a))).collect();
            let rel = match self.exclusion {
                ExclusionDirection::GapAtLeastDelta => Relation::Ge,
                ExclusionDirection::AsWritten => Relation::Le,
            };
            lp.add_constraint(coeffs, rel, inst.delta());
        }
        lp.add_constraint((0..m).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);

        let Ok(out) = lp::solve_detailed(&lp, self.tolerance) else {
            return Priced::Unavailable;
        };
        match out.status {
            LpStatus::Optimal => {
                let mu = out.primal[..m].to_vec();
                let value = out.primal[w_var];
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
        let mu = inst.prior().to_vec();
        let (value, _) = worst_case_sender_value(inst, &mu, 0.0);
        let mut seeds = vec![Column {
            block: self.seed_block,
            posterior: mu,
            value,
        }];
        if self.exclusion == ExclusionDirection::GapAtLeastDelta {
            // warm start: each state's degenerate belief realizes its own
            // tuple, when that tuple belongs to the space
            for w in 0..inst.num_states() {
                if inst.prior()[w] <= 0.0 {
                    continue;
                }
                let mut mu = vec![0.0; inst.num_states()];
                mu[w] = 1.0;
                let tuple = SubsetActionTuple::from_actions(
                    br_delta_set(inst, &mu, 0.0),
                    best_response(inst, &mu),
                )
                .expect("nonempty");
                if let Some(block) = self.tuples.iter().position(|t| *t == tuple) {
                    let (value, _) = worst_case_sender_value(inst, &mu, 0.0);
                    seeds.push(Column {
                        block,
                        posterior: mu,
                        value,
                    });
                }
            }
        }
        seeds
    }

    /// Dropping the receiver rows and relaxing the payoff bound to any one
    /// member action bounds the pricing optimum by
    /// `min over a in A of max over states of (s(state,a) - lambda(state))`.
    fn quick_bound(&self, block: usize, lambda: &[f64]) -> f64 {
        let tuple = &self.tuples[block];
        let s = self.instance.sender_matrix();
        let m = self.instance.num_states();
        let mut bound = f64::INFINITY;
        for a in tuple.actions() {
            let mut best = f64::NEG_INFINITY;
            for w in 0..m {
                best = best.max(s.at(w, a) - lambda[w]);
            }
            bound = bound.min(best);
            if bound <= f64::NEG_INFINITY {
                break;
            }
        }
        bound
    }
}

fn solve_via_columns(
    instance: &PersuasionInstance,
    space: &SignalSpace,
    options: &ExactOptions,
) -> Result<SolverResult, ExactError> {
    let prior = instance.prior();
    let seed_tuple = match options.exclusion {
        ExclusionDirection::GapAtLeastDelta => SubsetActionTuple::from_actions(
            br_delta_set(instance, prior, 0.0),
            best_response(instance, prior),
        )
        .expect("BR set contains the best response"),
        // with the flipped family only the all-actions tuple is guaranteed
        // to admit the prior
        ExclusionDirection::AsWritten => SubsetActionTuple::from_actions(
            0..instance.num_actions(),
            best_response(instance, prior),
        )
        .expect("nonempty"),
    };
    let seed_block = space.position(&seed_tuple).ok_or(ExactError::MissingSeed)?;
    let oracle = TupleOracle {
        instance,
        tuples: space.tuples(),
        exclusion: options.exclusion,
        seed_block,
        tolerance: options.tolerance,
    };
    let result = decomp::solve_decomposed(prior, &oracle, options.tolerance)
        .map_err(|e| ExactError::Decomposition(e.to_string()))?;
    let masses: Vec<(String, SignalProvenance, Vec<f64>)> = result
        .block_masses
        .into_iter()
        .map(|(b, mass)| {
            let tuple = space.tuples()[b];
            (
                tuple.label(instance.actions()),
                SignalProvenance::Tuple(tuple),
                mass,
            )
        })
        .collect();
    // report the size of the program the driver implicitly certified
    let m = instance.num_states();
    let implied_rows: usize = space
        .tuples()
        .iter()
        .map(|t| 2 * t.len() + (instance.num_actions() - t.len()))
        .sum::<usize>()
        + m;
    finish_tuple_solve(
        instance,
        masses,
        result.value,
        options.exclusion,
        options.tolerance,
        (m + 1) * space.len(),
        implied_rows,
    )
}

/// Re-solve the optimal-scheme program over the used tuples only, with an
/// interior slack on every exclusion row. Returns the adjusted masses, or
/// `None` when the slack is unattainable within the value budget (the
/// caller keeps the raw extraction).
fn recenter_tuple_masses(
    instance: &PersuasionInstance,
    kept: &[(String, SignalProvenance, Vec<f64>)],
    value: f64,
    tolerance: f64,
) -> Option<Vec<Vec<f64>>> {
    let m = instance.num_states();
    let n = instance.num_actions();
    let k = kept.len();
    let tuples: Vec<SubsetActionTuple> = kept
        .iter()
        .map(|(_, prov, _)| match prov {
            SignalProvenance::Tuple(t) => *t,
            _ => unreachable!("tuple solver emits tuple signals"),
        })
        .collect();
    if tuples.iter().all(|t| t.len() == n) {
        return None; // no exclusion rows anywhere
    }
    let s = instance.sender_matrix();
    let r = instance.receiver_matrix();
    let delta = instance.delta();

    // variables: y[sig][state] then x[sig]
    let y = |sig: usize, w: usize| sig * m + w;
    let mut lp = LinearProgram::new(k * m + k);
    for sig in 0..k {
        lp.set_bounds(k * m + sig, f64::NEG_INFINITY, f64::INFINITY);
    }
    lp.set_objective((0..k).map(|sig| (k * m + sig, 1.0)).collect());
    for (sig, tuple) in tuples.iter().enumerate() {
        let best = tuple.best();
        for a in tuple.actions() {
            let mut coeffs: Vec<(usize, f64)> = (0..m).map(|w| (y(sig, w), s.at(w, a))).collect();
            coeffs.push((k * m + sig, -1.0));
            lp.add_constraint(coeffs, Relation::Ge, 0.0);
            if a != best {
                let coeffs: Vec<(usize, f64)> = (0..m)
                    .map(|w| (y(sig, w), r.at(w, best) - r.at(w, a)))
                    .collect();
                lp.add_constraint(coeffs, Relation::Ge, 0.0);
            }
        }
        for a in 0..n {
            if tuple.contains(a) {
                continue;
            }
            let coeffs: Vec<(usize, f64)> = (0..m)
                .map(|w| (y(sig, w), r.at(w, best) - r.at(w, a) - delta))
                .collect();
            lp.add_constraint(coeffs, Relation::Ge, INTERIOR_SLACK);
        }
    }
    for w in 0..m {
        let coeffs: Vec<(usize, f64)> = (0..k).map(|sig| (y(sig, w), 1.0)).collect();
        lp.add_constraint(coeffs, Relation::Eq, instance.prior()[w]);
    }
    let sol = lp::solve(&lp, tolerance);
    if sol.status != LpStatus::Optimal {
        return None;
    }
    if sol.objective_value? < value - RECENTER_VALUE_BUDGET {
        return None;
    }
    let primal = sol.primal?;
    let mut masses: Vec<Vec<f64>> = (0..k)
        .map(|sig| (0..m).map(|w| primal[y(sig, w)].max(0.0)).collect())
        .collect();
    renormalize_masses(&mut masses, instance.prior());
    Some(masses)
}

/// Drop zero-mass signals and optionally swap in re-centered masses.
pub(crate) fn keep_positive(
    masses: Vec<(String, SignalProvenance, Vec<f64>)>,
) -> Vec<(String, SignalProvenance, Vec<f64>)> {
    masses
        .into_iter()
        .filter(|(_, _, mass)| mass.iter().sum::<f64>() > 1e-12)
        .collect()
}

fn finish_tuple_solve(
    instance: &PersuasionInstance,
    masses: Vec<(String, SignalProvenance, Vec<f64>)>,
    value: f64,
    exclusion: ExclusionDirection,
    tolerance: f64,
    lp_num_vars: usize,
    lp_num_rows: usize,
) -> Result<SolverResult, ExactError> {
    let mut kept = keep_positive(masses);
    if exclusion == ExclusionDirection::GapAtLeastDelta {
        if let Some(new_masses) = recenter_tuple_masses(instance, &kept, value, tolerance) {
            for ((_, _, mass), new_mass) in kept.iter_mut().zip(new_masses) {
                *mass = new_mass;
            }
        }
    }
    assemble_result(instance, kept, value, lp_num_vars, lp_num_rows)
}

/// Convert per-signal mass vectors into a scheme plus diagnostics.
///
/// Signals with (numerically) zero marginal are dropped; states with zero
/// prior mass put their whole conditional row on the first kept signal.
/// Rows whose sums drift from 1 by at most 1e-8 are renormalized.
pub(crate) fn assemble_result(
    instance: &PersuasionInstance,
    masses: Vec<(String, SignalProvenance, Vec<f64>)>,
    value: f64,
    lp_num_vars: usize,
    lp_num_rows: usize,
) -> Result<SolverResult, ExactError> {
    let m = instance.num_states();
    let prior = instance.prior();
    // solver output carries feasibility-tolerance noise; snap it away but
    // refuse anything materially negative
    for (_, _, mass) in masses.iter() {
        if mass.iter().any(|&y| y < -1e-8) {
            return Err(ExactError::Assembly(format!(
                "negative signal mass {:?}",
                mass
            )));
        }
    }
    let masses: Vec<(String, SignalProvenance, Vec<f64>)> = masses
        .into_iter()
        .map(|(l, p, mass)| (l, p, mass.into_iter().map(|y| y.max(0.0)).collect()))
        .collect();
    let kept: Vec<&(String, SignalProvenance, Vec<f64>)> = masses
        .iter()
        .filter(|(_, _, mass)| mass.iter().sum::<f64>() > 1e-12)
        .collect();
    if kept.is_empty() {
        return Err(ExactError::Assembly(
            "no signal carries positive mass".into(),
        ));
    }
    let k = kept.len();
    let mut conditionals = vec![vec![0.0; k]; m];
    for w in 0..m {
        if prior[w] > 0.0 {
            for (j, (_, _, mass)) in kept.iter().enumerate() {
                conditionals[w][j] = mass[w] / prior[w];
            }
            let sum: f64 = conditionals[w].iter().sum();
            if (sum - 1.0).abs() > 1e-8 {
                return Err(ExactError::Assembly(format!(
                    "conditional row {w} sums to {sum}"
                )));
            }
            for v in conditionals[w].iter_mut() {
                *v /= sum;
            }
        } else {
            conditionals[w][0] = 1.0;
        }
    }
    let labels: Vec<String> = kept.iter().map(|(l, _, _)| l.clone()).collect();
    let scheme = SignalingScheme::new(labels, conditionals)
        .map_err(|e| ExactError::Assembly(e.to_string()))?;

    // diagnostics go through the same Bayes reconstruction an evaluator of
    // the emitted scheme performs, so the two views agree bitwise
    let mut per_signal = Vec::with_capacity(k);
    for (j, (label, provenance, _)) in kept.iter().enumerate() {
        let post = crate::model::posterior(instance, &scheme, j)
            .map_err(|e| ExactError::Assembly(e.to_string()))?;
        let Some(posterior) = post.distribution else {
            continue;
        };
        let realized_br = br_delta_set(instance, &posterior, 0.0);
        let (worst_value, worst_action) = worst_case_sender_value(instance, &posterior, 0.0);
        per_signal.push(PerSignalReport {
            label: label.clone(),
            provenance: provenance.clone(),
            marginal: post.marginal,
            posterior,
            realized_br,
            worst_action,
            worst_value,
        });
    }
    Ok(SolverResult {
        scheme,
        value,
        per_signal,
        lp_num_vars,
        lp_num_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::model::robust_utility;

    #[test]
    fn signal_space_enumeration_counts_and_order() {
        let s1 = enumerate_signal_space(1).unwrap();
        assert_eq!(s1.len(), 1);
        let s2 = enumerate_signal_space(2).unwrap();
        assert_eq!(s2.len(), 4);
        let expected: Vec<SubsetActionTuple> = vec![
            SubsetActionTuple::new(0b01, 0).unwrap(),
            SubsetActionTuple::new(0b10, 1).unwrap(),
            SubsetActionTuple::new(0b11, 0).unwrap(),
            SubsetActionTuple::new(0b11, 1).unwrap(),
        ];
        assert_eq!(s2.tuples(), &expected[..]);
        assert_eq!(enumerate_signal_space(3).unwrap().len(), 12);
        assert!(matches!(
            enumerate_signal_space(17),
            Err(ExactError::SizeGuard { .. })
        ));
    }

    #[test]
    fn duplicate_tuples_are_rejected() {
        let t = SubsetActionTuple::new(0b11, 0).unwrap();
        assert!(matches!(
            SignalSpace::from_tuples(vec![t, t]),
            Err(ExactError::DuplicateTuple(_))
        ));
    }

    #[test]
    fn robust_lp_structure_on_worked_example() {
        let instance = instances::direct_revelation_example(0.01).unwrap();
        let space = enumerate_signal_space(2).unwrap();
        let built = build_robust_lp(&instance, &space, ExclusionDirection::default());
        // 3 states x 4 tuples conditionals plus 4 payoff variables
        assert_eq!(built.lp.num_vars, 16);
        // per tuple: |A| + |A| + (n - |A|) semantic rows; plus 3 simplex rows
        let semantic: usize = space
            .tuples()
            .iter()
            .map(|t| 2 * t.len() + (2 - t.len()))
            .sum();
        assert_eq!(built.lp.num_rows(), semantic + 3);
        // payoff variables appear only in family (i)
        for c in &built.lp.constraints {
            let x_terms = c
                .coeffs
                .iter()
                .filter(|&&(j, _)| j >= built.map.num_states * built.map.num_tuples)
                .count();
            assert!(x_terms <= 1);
            if x_terms == 1 {
                // family (i): mixes phi terms of one tuple with its own x
                assert_eq!(c.relation, Relation::Ge);
                assert_eq!(c.rhs, 0.0);
            }
        }
        // simplex rows reference exactly the phi variables of one state
        let simplex = &built.lp.constraints[built.lp.num_rows() - 3..];
        for row in simplex {
            assert_eq!(row.relation, Relation::Eq);
            assert_eq!(row.rhs, 1.0);
            assert_eq!(row.coeffs.len(), 4);
        }
        // the program's optimal point re-checks as feasible
        let sol = crate::lp::solve(&built.lp, crate::lp::DEFAULT_TOLERANCE);
        let check = crate::lp::check_feasible(
            &built.lp,
            &sol.primal.unwrap(),
            crate::lp::DEFAULT_TOLERANCE,
        )
        .unwrap();
        assert!(check.feasible);
    }

    #[test]
    fn exact_value_on_direct_revelation_example() {
        let instance = instances::direct_revelation_example(0.01).unwrap();
        let result = solve_exact(&instance).unwrap();
        assert!((result.value - 0.99).abs() < 1e-9, "value {}", result.value);
        // tightness: evaluating the scheme reproduces the program value
        let eval = robust_utility(&instance, &result.scheme).unwrap();
        assert!((eval.value - result.value).abs() < 1e-6);
    }

    #[test]
    fn exact_value_on_apples() {
        let instance = instances::apples_instance(0.1).unwrap();
        let result = solve_exact(&instance).unwrap();
        assert!(
            (result.value - 2.0 / (3.0 * 1.2)).abs() < 1e-9,
            "value {}",
            result.value
        );
        let eval = robust_utility(&instance, &result.scheme).unwrap();
        assert!((eval.value - result.value).abs() < 1e-6);
    }

    #[test]
    fn single_action_instance_value_is_prior_payoff() {
        let instance = crate::model::PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["only".into()],
            vec![0.3, 0.7],
            vec![vec![0.9], vec![0.1]],
            vec![vec![0.5], vec![0.5]],
            0.2,
        )
        .unwrap();
        let result = solve_exact(&instance).unwrap();
        let expected = 0.3 * 0.9 + 0.7 * 0.1;
        assert!((result.value - expected).abs() < 1e-9);
    }

    #[test]
    fn identical_sender_columns_make_every_scheme_optimal() {
        let instance = crate::model::PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["a0".into(), "a1".into()],
            vec![0.5, 0.5],
            vec![vec![0.4, 0.4], vec![0.6, 0.6]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            0.3,
        )
        .unwrap();
        let result = solve_exact(&instance).unwrap();
        assert!((result.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn explicit_and_decomposed_routes_agree() {
        for seed in [1, 2, 3] {
            let instance = instances::random_instance(3, 4, 0.15, seed);
            let explicit = solve_exact_with(
                &instance,
                &ExactOptions {
                    strategy: SolveStrategy::Explicit,
                    ..ExactOptions::default()
                },
            )
            .unwrap();
            let decomposed = solve_exact_with(
                &instance,
                &ExactOptions {
                    strategy: SolveStrategy::Decomposed,
                    ..ExactOptions::default()
                },
            )
            .unwrap();
            assert!(
                (explicit.value - decomposed.value).abs() < 1e-7,
                "seed {seed}: {} vs {}",
                explicit.value,
                decomposed.value
            );
        }
    }

    #[test]
    fn realized_br_never_hurts_the_sender() {
        for seed in [5, 6] {
            let instance = instances::random_instance(3, 4, 0.2, seed);
            let result = solve_exact(&instance).unwrap();
            for sig in &result.per_signal {
                let SignalProvenance::Tuple(tuple) = &sig.provenance else {
                    panic!("exact signals are tuples");
                };
                let min_over_a: f64 = tuple
                    .actions()
                    .map(|a| instance.sender_value(&sig.posterior, a))
                    .fold(f64::INFINITY, f64::min);
                assert!(sig.worst_value >= min_over_a - 1e-6);
            }
        }
    }

    #[test]
    fn flipped_exclusion_changes_the_apples_value() {
        // with the flipped family the exclusion rows no longer pin down the
        // buy-only cell, so the program overshoots the true robust optimum
        let instance = instances::apples_instance(0.1).unwrap();
        let flipped = solve_exact_with(
            &instance,
            &ExactOptions {
                exclusion: ExclusionDirection::AsWritten,
                ..ExactOptions::default()
            },
        )
        .unwrap();
        let correct = solve_exact(&instance).unwrap();
        assert!(flipped.value > correct.value + 0.2);
        // and the flipped "optimum" is not achievable by its own scheme
        let eval = robust_utility(&instance, &flipped.scheme).unwrap();
        assert!(eval.value < flipped.value - 0.2);
    }

    #[test]
    fn monotone_in_delta() {
        let mut last = f64::INFINITY;
        for delta in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let instance = instances::apples_instance(delta).unwrap();
            let v = solve_exact(&instance).unwrap().value;
            assert!(v <= last + 1e-9);
            last = v;
        }
    }
}
