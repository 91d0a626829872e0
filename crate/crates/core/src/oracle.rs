//! Independent verification tools.
//!
//! Everything here bounds or cross-checks the main solvers through a
//! different route: feasibility by exhaustive enumeration instead of graph
//! search, optimal values from below by explicit Bayes-plausible mixtures
//! over grid posteriors, and the signal-merging argument that canonicalizes
//! arbitrary schemes without losing robust utility.

use crate::exact::{self, SignalProvenance, SolverResult};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{
    best_response, br_delta_set, posterior, worst_case_sender_value, ModelError,
    PersuasionInstance, SignalingScheme, SubsetActionTuple,
};
use crate::qptas::{k_uniform_grid_with_cap, KUniformGrid, QptasError};
use crate::smallstate::{self, SmallStateError};
use rayon::prelude::*;
use thiserror::Error;

/// Brute-force enumeration is quadratic-exponential; cap the action count.
pub const BRUTE_FORCE_ACTION_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{what} = {size} exceeds the size guard ({cap})")]
    SizeGuard {
        what: &'static str,
        size: usize,
        cap: usize,
    },
    #[error("supporting program failed with status {0:?}")]
    Solver(LpStatus),
    #[error(transparent)]
    Qptas(#[from] QptasError),
    #[error(transparent)]
    Exact(#[from] exact::ExactError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Check every tuple of the full signal space with the margin program.
pub fn brute_force_feasible_tuples(
    instance: &PersuasionInstance,
) -> Result<Vec<SubsetActionTuple>, SmallStateError> {
    brute_force_feasible_tuples_with(instance, smallstate::DEFAULT_MARGIN_THRESHOLD)
}

pub fn brute_force_feasible_tuples_with(
    instance: &PersuasionInstance,
    margin_threshold: f64,
) -> Result<Vec<SubsetActionTuple>, SmallStateError> {
    let n = instance.num_actions();
    let space = exact::enumerate_signal_space_with_cap(n, BRUTE_FORCE_ACTION_CAP)?;
    let verdicts: Vec<Result<bool, SmallStateError>> = space
        .tuples()
        .par_iter()
        .map(|t| Ok(smallstate::feasibility_margin(instance, t)?.is_feasible(margin_threshold)))
        .collect();
    let mut feasible = Vec::new();
    for (t, v) in space.tuples().iter().zip(verdicts) {
        if v? {
            feasible.push(*t);
        }
    }
    Ok(feasible)
}

#[derive(Debug, Clone, Default)]
pub struct GridOracleOptions {
    /// Nudge every grid point toward the prior by 1e-9 to probe
    /// BR-boundary sensitivity.
    pub jitter: bool,
    pub tie_tolerance: f64,
}

/// Lower-bound the optimal robust value by the best Bayes-plausible mixture
/// of grid posteriors: maximize the mixture of worst-case payoffs subject
/// to the weighted posteriors averaging back to the prior. Any feasible
/// mixture is itself a scheme, so the bound is sound; the witness scheme is
/// returned alongside the value.
pub fn grid_search_optimum(
    instance: &PersuasionInstance,
    k: usize,
) -> Result<SolverResult, OracleError> {
    grid_search_optimum_with(instance, k, &GridOracleOptions::default())
}

pub fn grid_search_optimum_with(
    instance: &PersuasionInstance,
    k: usize,
    options: &GridOracleOptions,
) -> Result<SolverResult, OracleError> {
    let m = instance.num_states();
    let grid = k_uniform_grid_with_cap(m, k, crate::qptas::DEFAULT_GRID_CAP)?;
    let points: Vec<Vec<f64>> = if options.jitter {
        grid.points()
            .iter()
            .map(|p| {
                let mut q: Vec<f64> = p
                    .iter()
                    .zip(instance.prior())
                    .map(|(&x, &pr)| x + 1e-9 * (pr - x))
                    .collect();
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|x| *x /= s);
                q
            })
            .collect()
    } else {
        grid.points().to_vec()
    };

    // worst-case payoff per grid point, shared evaluation semantics
    let f: Vec<f64> = points
        .par_iter()
        .map(|mu| worst_case_sender_value(instance, mu, options.tie_tolerance).0)
        .collect();

    let mut program = LinearProgram::new(points.len());
    program.set_objective(f.iter().enumerate().map(|(i, &v)| (i, v)).collect());
    for w in 0..m {
        let coeffs: Vec<(usize, f64)> = points.iter().enumerate().map(|(i, p)| (i, p[w])).collect();
        program.add_constraint(coeffs, Relation::Eq, instance.prior()[w]);
    }
    program.add_constraint(
        (0..points.len()).map(|i| (i, 1.0)).collect(),
        Relation::Eq,
        1.0,
    );
    let sol = lp::solve(&program, lp::DEFAULT_TOLERANCE);
    if sol.status != LpStatus::Optimal {
        return Err(OracleError::Solver(sol.status));
    }
    let weights = sol.primal.expect("optimal");
    let value = sol.objective_value.expect("optimal");

    let masses: Vec<(String, SignalProvenance, Vec<f64>)> = weights
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 1e-12)
        .map(|(i, &p)| {
            (
                format!("grid{i}"),
                SignalProvenance::GridPoint(i),
                points[i].iter().map(|x| x * p).collect(),
            )
        })
        .collect();
    Ok(exact::assemble_result(
        instance,
        masses,
        value,
        program.num_vars,
        program.num_rows(),
    )?)
}

/// Merge signals that realize the same `(BR set, best response)` pair.
/// The merged scheme never loses robust utility and is supported on at
/// most `n * 2^(n-1)` signals.
pub fn canonicalize_scheme(
    instance: &PersuasionInstance,
    scheme: &SignalingScheme,
) -> Result<SignalingScheme, ModelError> {
    assert!(
        instance.num_actions() <= 32,
        "canonicalization labels BR sets with a 32-bit mask"
    );
    let m = instance.num_states();
    let mut group_of: Vec<Option<usize>> = vec![None; scheme.num_signals()];
    let mut groups: Vec<SubsetActionTuple> = Vec::new();
    let mut zero_marginal = Vec::new();
    for sig in 0..scheme.num_signals() {
        let post = posterior(instance, scheme, sig)?;
        match post.distribution {
            None => zero_marginal.push(sig),
            Some(dist) => {
                let tuple = SubsetActionTuple::from_actions(
                    br_delta_set(instance, &dist, 0.0),
                    best_response(instance, &dist),
                )
                .expect("BR set contains the best response");
                let g = match groups.iter().position(|t| *t == tuple) {
                    Some(g) => g,
                    None => {
                        groups.push(tuple);
                        groups.len() - 1
                    }
                };
                group_of[sig] = Some(g);
            }
        }
    }
    // zero-marginal signals carry no evaluation weight; their conditionals
    // (nonzero only on zero-prior states) fold into the first group
    for sig in zero_marginal {
        group_of[sig] = Some(0);
    }
    let mut conditionals = vec![vec![0.0; groups.len()]; m];
    for w in 0..m {
        for sig in 0..scheme.num_signals() {
            conditionals[w][group_of[sig].expect("assigned")] += scheme.conditional(w, sig);
        }
    }
    let labels = groups.iter().map(|t| t.label(instance.actions())).collect();
    Ok(SignalingScheme::new(labels, conditionals).expect("merged rows still sum to one"))
}

/// Result of the bounded-support search.
#[derive(Debug, Clone)]
pub struct BestKResult {
    pub value: f64,
    /// Posterior/weight support of the best mixture found.
    pub support: Vec<(Vec<f64>, f64)>,
}

/// Exhaustive lower bound on the best robust utility achievable with at
/// most `k` signals: over all subsets of up to `k` grid posteriors, find
/// Bayes-plausible weights maximizing the mixed worst-case payoff. The
/// uninformative scheme (posterior = prior) is always included, so the
/// bound is valid even when the prior is off-grid.
pub fn best_k_signal_search(
    instance: &PersuasionInstance,
    k: usize,
    resolution: usize,
) -> Result<BestKResult, OracleError> {
    if k == 0 || k > 3 {
        return Err(OracleError::SizeGuard {
            what: "signal count",
            size: k,
            cap: 3,
        });
    }
    let m = instance.num_states();
    let grid = k_uniform_grid_with_cap(m, resolution, 2_000_000)?;
    let f: Vec<f64> = grid
        .points()
        .par_iter()
        .map(|mu| worst_case_sender_value(instance, mu, 0.0).0)
        .collect();
    let prior = instance.prior();

    // the one-signal fallback keeps this a true lower bound off-grid
    let mut best = BestKResult {
        value: worst_case_sender_value(instance, prior, 0.0).0,
        support: vec![(prior.to_vec(), 1.0)],
    };
    let mut consider = |value: f64, support: Vec<(Vec<f64>, f64)>| {
        if value > best.value + 1e-12 {
            best = BestKResult { value, support };
        }
    };

    let pts = grid.points();
    // size 1: the grid point must equal the prior
    for (i, p) in pts.iter().enumerate() {
        if p.iter().zip(prior).all(|(a, b)| (a - b).abs() <= 1e-9) {
            consider(f[i], vec![(p.clone(), 1.0)]);
        }
    }
    if k >= 2 {
        search_pairs(pts, &f, prior, &mut consider);
    }
    if k >= 3 {
        if m == 3 {
            search_triples_cramer(pts, &f, prior, &mut consider);
        } else {
            search_triples_lp(pts, &f, prior, &mut consider)?;
        }
    }
    Ok(best)
}

fn box_admits(points: &[&[f64]], prior: &[f64]) -> bool {
    for (w, &target) in prior.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in points {
            lo = lo.min(p[w]);
            hi = hi.max(p[w]);
        }
        if target < lo - 1e-9 || target > hi + 1e-9 {
            return false;
        }
    }
    true
}

fn search_pairs(
    pts: &[Vec<f64>],
    f: &[f64],
    prior: &[f64],
    consider: &mut impl FnMut(f64, Vec<(Vec<f64>, f64)>),
) {
    let m = prior.len();
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let (a, b) = (&pts[i], &pts[j]);
            if !box_admits(&[a, b], prior) {
                continue;
            }
            // weight from the most-separated coordinate, verified everywhere
            let mut c = 0;
            let mut gap = 0.0;
            for w in 0..m {
                let g = (a[w] - b[w]).abs();
                if g > gap {
                    gap = g;
                    c = w;
                }
            }
            if gap < 1e-12 {
                continue;
            }
            let p = (prior[c] - b[c]) / (a[c] - b[c]);
            if !(-1e-9..=1.0 + 1e-9).contains(&p) {
                continue;
            }
            let consistent = (0..m).all(|w| (p * a[w] + (1.0 - p) * b[w] - prior[w]).abs() <= 1e-8);
            if !consistent {
                continue;
            }
            let p = p.clamp(0.0, 1.0);
            consider(
                p * f[i] + (1.0 - p) * f[j],
                vec![(a.clone(), p), (b.clone(), 1.0 - p)],
            );
        }
    }
}

fn search_triples_cramer(
    pts: &[Vec<f64>],
    f: &[f64],
    prior: &[f64],
    consider: &mut impl FnMut(f64, Vec<(Vec<f64>, f64)>),
) {
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                let (a, b, c) = (&pts[i], &pts[j], &pts[l]);
                if !box_admits(&[a, b, c], prior) {
                    continue;
                }
                // solve [a b c] p = prior by Cramer's rule; degenerate
                // triples are covered by the pair search
                let det = det3(a, b, c);
                if det.abs() < 1e-12 {
                    continue;
                }
                let p0 = det3(prior, b, c) / det;
                let p1 = det3(a, prior, c) / det;
                let p2 = det3(a, b, prior) / det;
                if p0 < -1e-9 || p1 < -1e-9 || p2 < -1e-9 {
                    continue;
                }
                let value = p0 * f[i] + p1 * f[j] + p2 * f[l];
                consider(
                    value,
                    vec![
                        (a.clone(), p0.max(0.0)),
                        (b.clone(), p1.max(0.0)),
                        (c.clone(), p2.max(0.0)),
                    ],
                );
            }
        }
    }
}

fn det3(c0: &[f64], c1: &[f64], c2: &[f64]) -> f64 {
    c0[0] * (c1[1] * c2[2] - c1[2] * c2[1]) - c1[0] * (c0[1] * c2[2] - c0[2] * c2[1])
        + c2[0] * (c0[1] * c1[2] - c0[2] * c1[1])
}

fn search_triples_lp(
    pts: &[Vec<f64>],
    f: &[f64],
    prior: &[f64],
    consider: &mut impl FnMut(f64, Vec<(Vec<f64>, f64)>),
) -> Result<(), OracleError> {
    let m = prior.len();
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for l in j + 1..n {
                let idx = [i, j, l];
                let cols = [&pts[i], &pts[j], &pts[l]];
                if !box_admits(&[cols[0], cols[1], cols[2]], prior) {
                    continue;
                }
                let mut program = LinearProgram::new(3);
                program.set_objective((0..3).map(|t| (t, f[idx[t]])).collect());
                for w in 0..m {
                    program.add_constraint(
                        (0..3).map(|t| (t, cols[t][w])).collect(),
                        Relation::Eq,
                        prior[w],
                    );
                }
                program.add_constraint((0..3).map(|t| (t, 1.0)).collect(), Relation::Eq, 1.0);
                let sol = lp::solve(&program, lp::DEFAULT_TOLERANCE);
                if sol.status == LpStatus::Optimal {
                    let p = sol.primal.expect("optimal");
                    consider(
                        sol.objective_value.expect("optimal"),
                        (0..3).map(|t| (cols[t].clone(), p[t])).collect(),
                    );
                }
            }
        }
    }
    Ok(())
}

/// Reconstruct the grid used by [`grid_search_optimum`] (test helper).
pub fn oracle_grid(instance: &PersuasionInstance, k: usize) -> Result<KUniformGrid, OracleError> {
    Ok(k_uniform_grid_with_cap(
        instance.num_states(),
        k,
        crate::qptas::DEFAULT_GRID_CAP,
    )?)
}
