//! Backend-agnostic linear programs and the solve contract shared by every
//! solver in this crate.
//!
//! A [`LinearProgram`] is a plain description: maximize a sparse linear
//! objective subject to sparse rows with `<=`, `=`, `>=` relations and
//! per-variable bounds (default `[0, +inf)`). [`solve`] runs the bundled
//! simplex backend and returns an [`LpSolution`] whose `Optimal` answers are
//! re-checked against the feasibility tolerance before being handed back.

mod simplex;

pub(crate) use simplex::SimplexOutput;
use thiserror::Error;

/// Default feasibility/optimality tolerance used across the crate.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Constraint relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl Relation {
    fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        }
    }
}

/// A single sparse constraint row `coeffs . x  (rel)  rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// A linear program in maximization form.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub num_vars: usize,
    /// Sparse objective coefficients; the sense is always maximize.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
    /// Per-variable `(lower, upper)`; infinities allowed on either side.
    pub bounds: Vec<(f64, f64)>,
    /// Optional labels for debugging and text export.
    pub var_names: Option<Vec<String>>,
}

impl LinearProgram {
    /// New program with `num_vars` variables bounded to `[0, +inf)`.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: Vec::new(),
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
            var_names: None,
        }
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, f64)>) {
        self.objective = coeffs;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.bounds[var] = (lower, upper);
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    /// Check the structural invariants: indices in range, no NaN/infinite
    /// coefficients, bound pairs ordered.
    pub fn validate(&self) -> Result<(), LpError> {
        if self.bounds.len() != self.num_vars {
            return Err(LpError::DimensionMismatch {
                expected: self.num_vars,
                got: self.bounds.len(),
            });
        }
        for (j, &(_, v)) in self.objective.iter().enumerate() {
            if !v.is_finite() {
                return Err(LpError::BadCoefficient { row: None, term: j });
            }
        }
        for &(j, _) in &self.objective {
            if j >= self.num_vars {
                return Err(LpError::IndexOutOfRange {
                    index: j,
                    num_vars: self.num_vars,
                });
            }
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if !c.rhs.is_finite() {
                return Err(LpError::BadCoefficient {
                    row: Some(i),
                    term: usize::MAX,
                });
            }
            for (t, &(j, v)) in c.coeffs.iter().enumerate() {
                if j >= self.num_vars {
                    return Err(LpError::IndexOutOfRange {
                        index: j,
                        num_vars: self.num_vars,
                    });
                }
                if !v.is_finite() {
                    return Err(LpError::BadCoefficient {
                        row: Some(i),
                        term: t,
                    });
                }
            }
        }
        for &(l, u) in &self.bounds {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(LpError::BadBounds);
            }
        }
        Ok(())
    }

    /// Render in the CPLEX LP text format (see README for the exact layout).
    pub fn to_lp_format(&self) -> String {
        let name = |j: usize| -> String {
            match &self.var_names {
                Some(names) => names[j].clone(),
                None => format!("x{j}"),
            }
        };
        let term_list = |coeffs: &[(usize, f64)]| -> String {
            if coeffs.is_empty() {
                return "0 x0".to_string();
            }
            let mut s = String::new();
            for (k, &(j, v)) in coeffs.iter().enumerate() {
                if k == 0 {
                    s.push_str(&format!("{v} {}", name(j)));
                } else if v < 0.0 {
                    s.push_str(&format!(" - {} {}", -v, name(j)));
                } else {
                    s.push_str(&format!(" + {v} {}", name(j)));
                }
            }
            s
        };
        let mut out = String::new();
        out.push_str("Maximize\n obj: ");
        out.push_str(&term_list(&self.objective));
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            out.push_str(&format!(
                " c{i}: {} {} {}\n",
                term_list(&c.coeffs),
                c.relation.symbol(),
                c.rhs
            ));
        }
        out.push_str("Bounds\n");
        for j in 0..self.num_vars {
            let (l, u) = self.bounds[j];
            match (l.is_finite(), u.is_finite()) {
                (true, true) => out.push_str(&format!(" {l} <= {} <= {u}\n", name(j))),
                (true, false) => out.push_str(&format!(" {} >= {l}\n", name(j))),
                (false, true) => out.push_str(&format!(" {} <= {u}\n", name(j))),
                (false, false) => out.push_str(&format!(" {} free\n", name(j))),
            }
        }
        out.push_str("End\n");
        out
    }
}

/// Solve status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Result of [`solve`].
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: Option<f64>,
    pub primal: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("variable index {index} out of range (num_vars = {num_vars})")]
    IndexOutOfRange { index: usize, num_vars: usize },
    #[error("non-finite coefficient (row {row:?}, term {term})")]
    BadCoefficient { row: Option<usize>, term: usize },
    #[error("invalid bounds (NaN or lower > upper)")]
    BadBounds,
}

/// Where a feasibility check found its worst violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationSite {
    Constraint(usize),
    LowerBound(usize),
    UpperBound(usize),
}

/// Outcome of [`check_feasible`].
#[derive(Debug, Clone)]
pub struct FeasibilityCheck {
    pub feasible: bool,
    pub max_violation: f64,
    pub worst: Option<ViolationSite>,
}

/// Solve `lp` with the bundled simplex backend.
///
/// `Optimal` answers are re-verified: every constraint and bound must hold
/// within `tolerance` and the reported objective must match the recomputed
/// dot product, otherwise the status degrades to `NumericalFailure` rather
/// than handing back a bogus certificate.
pub fn solve(lp: &LinearProgram, tolerance: f64) -> LpSolution {
    match solve_detailed(lp, tolerance) {
        Ok(out) => LpSolution {
            status: out.status,
            objective_value: (out.status == LpStatus::Optimal).then_some(out.objective),
            primal: (out.status == LpStatus::Optimal).then_some(out.primal),
        },
        Err(_) => LpSolution {
            status: LpStatus::NumericalFailure,
            objective_value: None,
            primal: None,
        },
    }
}

/// Internal entry point that keeps row duals (used by the decomposition
/// driver). Duals follow the maximization convention: at optimality every
/// column satisfies `c_j - duals . A_j <= tol` when at its lower bound.
pub(crate) fn solve_detailed(lp: &LinearProgram, tolerance: f64) -> Result<SimplexOutput, LpError> {
    lp.validate()?;
    let mut out = simplex::solve_simplex(lp, tolerance.max(1e-12));
    if out.status == LpStatus::Optimal {
        let check = check_feasible(lp, &out.primal, tolerance.max(1e-12) * 10.0)
            .expect("dimensions verified above");
        let recomputed: f64 = lp.objective.iter().map(|&(j, v)| v * out.primal[j]).sum();
        if !check.feasible || (recomputed - out.objective).abs() > tolerance.max(1e-12) * 100.0 {
            out.status = LpStatus::NumericalFailure;
        } else {
            out.objective = recomputed;
        }
    }
    Ok(out)
}

/// Evaluate whether `point` satisfies all constraints and bounds of `lp`
/// within `tolerance`; reports the worst violation and where it happened.
pub fn check_feasible(
    lp: &LinearProgram,
    point: &[f64],
    tolerance: f64,
) -> Result<FeasibilityCheck, LpError> {
    if point.len() != lp.num_vars {
        return Err(LpError::DimensionMismatch {
            expected: lp.num_vars,
            got: point.len(),
        });
    }
    let mut max_violation = 0.0_f64;
    let mut worst = None;
    let mut consider = |v: f64, site: ViolationSite| {
        if v > max_violation {
            max_violation = v;
            worst = Some(site);
        }
    };
    for (i, c) in lp.constraints.iter().enumerate() {
        let lhs: f64 = c.coeffs.iter().map(|&(j, v)| v * point[j]).sum();
        let viol = match c.relation {
            Relation::Le => lhs - c.rhs,
            Relation::Ge => c.rhs - lhs,
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        consider(viol, ViolationSite::Constraint(i));
    }
    for (j, &(l, u)) in lp.bounds.iter().enumerate() {
        if l.is_finite() {
            consider(l - point[j], ViolationSite::LowerBound(j));
        }
        if u.is_finite() {
            consider(point[j] - u, ViolationSite::UpperBound(j));
        }
    }
    Ok(FeasibilityCheck {
        feasible: max_violation <= tolerance,
        max_violation: max_violation.max(0.0),
        worst,
    })
}
