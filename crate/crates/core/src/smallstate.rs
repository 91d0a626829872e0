//! Feasible-tuple discovery and the restricted optimal-scheme program.
//!
//! A tuple `(A, best)` is feasible when some belief realizes exactly that
//! BR set and best response. Feasibility reduces to a margin-maximization
//! program: maximize the slack `eps` by which every member of `A` stays
//! strictly inside the delta window; the tuple is feasible iff the optimal
//! margin is positive. Feasible tuples form a connected subgraph of the
//! symmetric-difference graph (swap the best response, or add/remove one
//! action), so a depth-first search seeded at the prior's own tuple
//! discovers all of them while checking each candidate once. The restricted
//! program over the discovered set has the same optimum as the full-space
//! program.

use crate::exact::{self, ExactOptions, SignalSpace, SolverResult};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{best_response, br_delta_set, PersuasionInstance, SubsetActionTuple};
use std::collections::HashSet;
use thiserror::Error;

/// Tuples with margins at or below this are treated as infeasible; the
/// strict inequality of the BR definition has no tolerance of its own, and
/// boundary tuples only carry measure-zero posteriors.
pub const DEFAULT_MARGIN_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SmallStateError {
    #[error("the prior's own tuple {0} is infeasible, which indicates a bug")]
    SeedInfeasible(SubsetActionTuple),
    #[error("margin program failed with status {0:?} on tuple {1}")]
    Solver(LpStatus, SubsetActionTuple),
    #[error(
        "paranoid cross-check failed: explored {explored} tuples, brute force found {brute} \
         (first difference: {difference})"
    )]
    ParanoidMismatch {
        explored: usize,
        brute: usize,
        difference: SubsetActionTuple,
    },
    #[error(transparent)]
    Exact(#[from] exact::ExactError),
}

/// Outcome of one feasibility check.
#[derive(Debug, Clone)]
pub struct FeasibilityVerdict {
    pub tuple: SubsetActionTuple,
    /// Optimal margin; `None` when the program is infeasible outright.
    pub margin: Option<f64>,
    /// Belief achieving the margin (present when `margin` is).
    pub witness: Option<Vec<f64>>,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self, threshold: f64) -> bool {
        self.margin.map_or(false, |eps| eps > threshold)
    }
}

/// Margin program for one tuple: maximize `eps` over beliefs `mu` subject
/// to `best` dominating every member of `A`, every member staying within
/// `delta - eps` of `best`, and every excluded action being at least
/// `delta` behind.
pub fn feasibility_margin(
    instance: &PersuasionInstance,
    tuple: &SubsetActionTuple,
) -> Result<FeasibilityVerdict, SmallStateError> {
    let m = instance.num_states();
    let n = instance.num_actions();
    let r = instance.receiver_matrix();
    let delta = instance.delta();
    let best = tuple.best();

    let mut program = LinearProgram::new(m + 1);
    let eps = m;
    // the member row for `best` itself reduces to eps <= delta
    program.set_bounds(eps, f64::NEG_INFINITY, delta);
    program.set_objective(vec![(eps, 1.0)]);
    for a in tuple.actions() {
        if a == best {
            continue;
        }
        let gap: Vec<(usize, f64)> = (0..m).map(|i| (i, r.at(i, best) - r.at(i, a))).collect();
        program.add_constraint(gap.clone(), Relation::Ge, 0.0);
        let mut with_eps = gap;
        with_eps.push((eps, 1.0));
        program.add_constraint(with_eps, Relation::Le, delta);
    }
    for a in 0..n {
        if tuple.contains(a) {
            continue;
        }
        let gap: Vec<(usize, f64)> = (0..m).map(|i| (i, r.at(i, best) - r.at(i, a))).collect();
        program.add_constraint(gap, Relation::Ge, delta);
    }
    program.add_constraint((0..m).map(|i| (i, 1.0)).collect(), Relation::Eq, 1.0);

    let sol = lp::solve(&program, lp::DEFAULT_TOLERANCE);
    match sol.status {
        LpStatus::Optimal => {
            let primal = sol.primal.expect("optimal");
            Ok(FeasibilityVerdict {
                tuple: *tuple,
                margin: Some(sol.objective_value.expect("optimal")),
                witness: Some(primal[..m].to_vec()),
            })
        }
        LpStatus::Infeasible => Ok(FeasibilityVerdict {
            tuple: *tuple,
            margin: None,
            witness: None,
        }),
        status => Err(SmallStateError::Solver(status, *tuple)),
    }
}

/// Neighbors in the symmetric-difference graph, in search order: for each
/// non-best member (ascending) the removal then the best-response swap,
/// then each outside action (ascending) as an insertion.
pub fn neighbors(tuple: &SubsetActionTuple, n: usize) -> Vec<SubsetActionTuple> {
    let mut out = Vec::new();
    let best = tuple.best();
    for a in tuple.actions() {
        if a == best {
            continue;
        }
        let removed = tuple.mask() & !(1u32 << a);
        out.push(SubsetActionTuple::new(removed, best).expect("best retained"));
        out.push(SubsetActionTuple::new(tuple.mask(), a).expect("member"));
    }
    for a in 0..n {
        if !tuple.contains(a) {
            out.push(SubsetActionTuple::new(tuple.mask() | (1u32 << a), best).expect("superset"));
        }
    }
    out
}

/// Result of the feasible-tuple search.
#[derive(Debug, Clone)]
pub struct ExplorationReport {
    /// All feasible tuples, in discovery order.
    pub feasible: Vec<SubsetActionTuple>,
    /// Number of margin programs solved.
    pub checked: usize,
    /// Check order, when tracing was requested.
    pub frontier_trace: Option<Vec<SubsetActionTuple>>,
}

#[derive(Debug, Clone)]
pub struct ExploreOptions {
    pub margin_threshold: f64,
    /// Cross-check the search against brute-force enumeration (small action
    /// counts only) and fail loudly on a mismatch.
    pub paranoid: bool,
    pub trace: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            margin_threshold: DEFAULT_MARGIN_THRESHOLD,
            paranoid: false,
            trace: false,
        }
    }
}

/// Depth-first search over the symmetric-difference graph from the prior's
/// tuple; every candidate is margin-checked exactly once and feasible
/// candidates expand to their neighbors.
pub fn explore(instance: &PersuasionInstance) -> Result<ExplorationReport, SmallStateError> {
    explore_with(instance, &ExploreOptions::default())
}

pub fn explore_with(
    instance: &PersuasionInstance,
    options: &ExploreOptions,
) -> Result<ExplorationReport, SmallStateError> {
    let n = instance.num_actions();
    let prior = instance.prior();
    let seed = SubsetActionTuple::from_actions(
        br_delta_set(instance, prior, 0.0),
        best_response(instance, prior),
    )
    .expect("BR set contains the best response");

    let mut visited: HashSet<SubsetActionTuple> = HashSet::new();
    let mut stack = vec![seed];
    visited.insert(seed);
    let mut feasible = Vec::new();
    let mut checked = 0usize;
    let mut trace = options.trace.then(Vec::new);

    while let Some(tuple) = stack.pop() {
        checked += 1;
        if let Some(t) = trace.as_mut() {
            t.push(tuple);
        }
        let verdict = feasibility_margin(instance, &tuple)?;
        if !verdict.is_feasible(options.margin_threshold) {
            if tuple == seed {
                return Err(SmallStateError::SeedInfeasible(seed));
            }
            continue;
        }
        feasible.push(tuple);
        // reversed push so the stack pops neighbors in definition order
        for nb in neighbors(&tuple, n).into_iter().rev() {
            if visited.insert(nb) {
                stack.push(nb);
            }
        }
    }

    if options.paranoid && n <= crate::oracle::BRUTE_FORCE_ACTION_CAP {
        let brute =
            crate::oracle::brute_force_feasible_tuples_with(instance, options.margin_threshold)?;
        let explored_set: HashSet<_> = feasible.iter().copied().collect();
        let brute_set: HashSet<_> = brute.iter().copied().collect();
        if explored_set != brute_set {
            let difference = brute_set
                .symmetric_difference(&explored_set)
                .min()
                .copied()
                .expect("sets differ");
            return Err(SmallStateError::ParanoidMismatch {
                explored: explored_set.len(),
                brute: brute_set.len(),
                difference,
            });
        }
    }

    Ok(ExplorationReport {
        feasible,
        checked,
        frontier_trace: trace,
    })
}

#[derive(Debug, Clone, Default)]
pub struct SmallStateOptions {
    pub explore: ExploreOptions,
    pub solve: ExactOptions,
}

/// Discover the feasible tuples, then solve the optimal-scheme program
/// restricted to them. The value matches the full-space optimum.
pub fn solve_small_states(instance: &PersuasionInstance) -> Result<SolverResult, SmallStateError> {
    solve_small_states_with(instance, &SmallStateOptions::default())
}

pub fn solve_small_states_with(
    instance: &PersuasionInstance,
    options: &SmallStateOptions,
) -> Result<SolverResult, SmallStateError> {
    let report = explore_with(instance, &options.explore)?;
    let mut tuples = report.feasible;
    tuples.sort();
    let space = SignalSpace::from_tuples(tuples)?;
    Ok(exact::solve_over_space(instance, &space, &options.solve)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_exact;
    use crate::instances;
    use crate::model::PersuasionInstance;

    fn tuple(actions: &[usize], best: usize) -> SubsetActionTuple {
        SubsetActionTuple::from_actions(actions.iter().copied(), best).unwrap()
    }

    fn identical_receiver_columns(delta: f64) -> PersuasionInstance {
        PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["a0".into(), "a1".into()],
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![0.7, 0.7], vec![0.2, 0.2]],
            delta,
        )
        .unwrap()
    }

    #[test]
    fn margin_examples_on_direct_revelation() {
        let instance = instances::direct_revelation_example(0.01).unwrap();
        // singleton {a0}: only the degenerate belief on w0 excludes a1 by a
        // full delta, and there the window slack is the whole delta
        let v = feasibility_margin(&instance, &tuple(&[0], 0)).unwrap();
        assert!((v.margin.unwrap() - 1.0).abs() < 1e-9);
        let w = v.witness.unwrap();
        assert!((w[1] - 1.0).abs() < 1e-9);

        // the pair with either best response is realized at the zero state
        let v = feasibility_margin(&instance, &tuple(&[0, 1], 0)).unwrap();
        assert!((v.margin.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn margin_infeasible_for_identical_columns_singleton() {
        let instance = identical_receiver_columns(0.5);
        let v = feasibility_margin(&instance, &tuple(&[0], 0)).unwrap();
        assert!(v.margin.is_none());
        assert!(!v.is_feasible(DEFAULT_MARGIN_THRESHOLD));
    }

    #[test]
    fn neighbor_enumeration_matches_definition() {
        assert_eq!(
            neighbors(&tuple(&[0, 1], 0), 2),
            vec![tuple(&[0], 0), tuple(&[0, 1], 1)]
        );
        assert_eq!(
            neighbors(&tuple(&[0], 0), 3),
            vec![tuple(&[0, 1], 0), tuple(&[0, 2], 0)]
        );
        assert_eq!(neighbors(&tuple(&[0], 0), 1), vec![]);
        // degree bound: (|A|-1) swaps + (|A|-1) removals + (n-|A|) insertions
        let t = tuple(&[0, 2, 3], 2);
        assert_eq!(neighbors(&t, 5).len(), 2 * (3 - 1) + (5 - 3));
    }

    #[test]
    fn explore_finds_all_four_tuples_on_direct_revelation() {
        let instance = instances::direct_revelation_example(0.01).unwrap();
        let report = explore(&instance).unwrap();
        let mut found = report.feasible.clone();
        found.sort();
        assert_eq!(
            found,
            vec![
                tuple(&[0], 0),
                tuple(&[1], 1),
                tuple(&[0, 1], 0),
                tuple(&[0, 1], 1),
            ]
        );
        assert!(report.checked <= 2 * 2 * 4 + 1);
    }

    #[test]
    fn explore_single_action() {
        let instance = PersuasionInstance::new(
            vec!["s0".into()],
            vec!["a0".into()],
            vec![1.0],
            vec![vec![0.4]],
            vec![vec![0.6]],
            0.1,
        )
        .unwrap();
        let report = explore(&instance).unwrap();
        assert_eq!(report.feasible, vec![tuple(&[0], 0)]);
        assert_eq!(report.checked, 1);
    }

    #[test]
    fn explore_identical_columns_keeps_only_the_pair() {
        let instance = identical_receiver_columns(0.5);
        let report = explore(&instance).unwrap();
        let mut found = report.feasible.clone();
        found.sort();
        assert_eq!(found, vec![tuple(&[0, 1], 0), tuple(&[0, 1], 1)]);
    }

    #[test]
    fn paranoid_mode_passes_on_small_instances() {
        let instance = instances::random_instance(3, 5, 0.2, 11);
        let report = explore_with(
            &instance,
            &ExploreOptions {
                paranoid: true,
                trace: true,
                ..ExploreOptions::default()
            },
        )
        .unwrap();
        assert_eq!(
            report.frontier_trace.as_ref().unwrap().len(),
            report.checked
        );
    }

    #[test]
    fn witness_realizes_the_tuple() {
        // the witness may sit exactly on an exclusion hyperplane (the margin
        // only has slack on the window family), so the realized BR set is
        // pinned down between a shrunk and a widened tolerance reading
        let instance = instances::random_instance(3, 5, 0.2, 3);
        let report = explore(&instance).unwrap();
        for t in &report.feasible {
            let v = feasibility_margin(&instance, t).unwrap();
            let witness = v.witness.unwrap();
            let widened = crate::model::br_delta_set(&instance, &witness, 1e-9);
            let shrunk = crate::model::br_delta_set(&instance, &witness, -1e-9);
            for a in shrunk {
                assert!(t.contains(a), "tuple {t} missing shrunk-BR action {a}");
            }
            for a in t.actions() {
                assert!(
                    widened.contains(&a),
                    "tuple {t} action {a} not in widened BR"
                );
            }
            let r_best =
                instance.receiver_value(&witness, crate::model::best_response(&instance, &witness));
            let r_tuple = instance.receiver_value(&witness, t.best());
            assert!((r_best - r_tuple).abs() < 1e-9);
        }
    }

    #[test]
    fn small_state_value_matches_exact() {
        let direct = instances::direct_revelation_example(0.01).unwrap();
        let a = solve_small_states(&direct).unwrap();
        assert!((a.value - 0.99).abs() < 1e-9);

        let random = instances::random_instance(3, 5, 0.1, 7);
        let small = solve_small_states(&random).unwrap();
        let full = solve_exact(&random).unwrap();
        assert!(
            (small.value - full.value).abs() < 1e-6,
            "{} vs {}",
            small.value,
            full.value
        );

        let single = PersuasionInstance::new(
            vec!["s0".into(), "s1".into()],
            vec!["a0".into()],
            vec![0.6, 0.4],
            vec![vec![0.1], vec![0.9]],
            vec![vec![0.5], vec![0.5]],
            0.25,
        )
        .unwrap();
        let v = solve_small_states(&single).unwrap();
        assert!((v.value - (0.6 * 0.1 + 0.4 * 0.9)).abs() < 1e-9);
    }
}
