//! Bundled dense-basis bounded-variable primal simplex.
//!
//! Two phases: a composite phase 1 drives bound violations of the basic
//! variables to zero, phase 2 optimizes the real objective. Dantzig pricing
//! with a switch to Bland's rule after a degenerate stall, so the solver
//! cannot cycle. The basis inverse is kept densely and refactorized on a
//! fixed cadence, which is plenty for the problem sizes this crate feeds it
//! (the large structured programs go through the decomposition driver
//! instead of a monolithic solve).

use super::{LinearProgram, LpStatus, Relation};

const PIVOT_TOL: f64 = 1e-10;
const RATIO_TIE_TOL: f64 = 1e-10;
const STALL_LIMIT: usize = 200;
const REFACTOR_EVERY: usize = 64;

/// Raw solver output, including row duals for internal consumers.
#[derive(Debug, Clone)]
pub(crate) struct SimplexOutput {
    pub status: LpStatus,
    /// Maximization objective value (meaningful when `status` is Optimal).
    pub objective: f64,
    /// Values of the structural variables (meaningful when Optimal).
    pub primal: Vec<f64>,
    /// Row duals in maximization convention: at optimality every variable j
    /// satisfies c_j - duals . column_j <= tol (for j at lower bound).
    pub row_duals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Free variable held at zero while nonbasic.
    FreeAtZero,
}

pub(crate) fn solve_simplex(lp: &LinearProgram, tol: f64) -> SimplexOutput {
    let mut t = Tableau::new(lp, tol);
    t.run()
}

struct Tableau {
    m: usize,
    ns: usize,
    n: usize,
    // structural columns, compressed sparse column
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_vals: Vec<f64>,
    rhs: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Minimization costs (negated maximization objective), structurals then slacks.
    cost: Vec<f64>,
    tol: f64,

    basis: Vec<usize>,
    state: Vec<VarState>,
    binv: Vec<f64>,
    xb: Vec<f64>,

    // scratch
    y: Vec<f64>,
    w: Vec<f64>,

    iterations: usize,
    pivots_since_refactor: usize,
    stall: usize,
    bland: bool,
}

enum Step {
    Optimal,
    Unbounded,
    Moved,
    Stuck,
}

impl Tableau {
    fn new(lp: &LinearProgram, tol: f64) -> Self {
        let m = lp.constraints.len();
        let ns = lp.num_vars;
        let n = ns + m;

        // column-major structural matrix
        let mut entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ns];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, v) in &c.coeffs {
                if v != 0.0 {
                    entries[j].push((i, v));
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(ns + 1);
        let mut col_rows = Vec::new();
        let mut col_vals = Vec::new();
        col_ptr.push(0);
        for col in &entries {
            for &(i, v) in col {
                col_rows.push(i);
                col_vals.push(v);
            }
            col_ptr.push(col_rows.len());
        }

        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for &(l, u) in &lp.bounds {
            lo.push(l);
            hi.push(u);
        }
        let mut rhs = Vec::with_capacity(m);
        for c in &lp.constraints {
            rhs.push(c.rhs);
            match c.relation {
                Relation::Le => {
                    lo.push(0.0);
                    hi.push(f64::INFINITY);
                }
                Relation::Eq => {
                    lo.push(0.0);
                    hi.push(0.0);
                }
                Relation::Ge => {
                    lo.push(f64::NEG_INFINITY);
                    hi.push(0.0);
                }
            }
        }

        let mut cost = vec![0.0; n];
        for &(j, v) in &lp.objective {
            cost[j] -= v; // maximize -> minimize
        }

        let mut state = Vec::with_capacity(n);
        for j in 0..ns {
            state.push(initial_state(lo[j], hi[j]));
        }
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            state.push(VarState::Basic(i));
            basis.push(ns + i);
        }

        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }

        let mut t = Tableau {
            m,
            ns,
            n,
            col_ptr,
            col_rows,
            col_vals,
            rhs,
            lo,
            hi,
            cost,
            tol,
            basis,
            state,
            binv,
            xb: vec![0.0; m],
            y: vec![0.0; m],
            w: vec![0.0; m],
            iterations: 0,
            pivots_since_refactor: 0,
            stall: 0,
            bland: false,
        };
        t.compute_xb();
        t
    }

    /// Sparse column of variable j (slack columns are unit vectors).
    fn for_column<F: FnMut(usize, f64)>(&self, j: usize, mut f: F) {
        if j < self.ns {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                f(self.col_rows[k], self.col_vals[k]);
            }
        } else {
            f(j - self.ns, 1.0);
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.state[j] {
            VarState::AtLower => self.lo[j],
            VarState::AtUpper => self.hi[j],
            VarState::FreeAtZero => 0.0,
            VarState::Basic(_) => unreachable!("basic variable has no bound value"),
        }
    }

    fn compute_xb(&mut self) {
        let m = self.m;
        let mut eff = self.rhs.clone();
        for j in 0..self.n {
            if let VarState::Basic(_) = self.state[j] {
                continue;
            }
            let v = self.nonbasic_value(j);
            if v != 0.0 {
                self.for_column(j, |i, a| eff[i] -= a * v);
            }
        }
        for i in 0..m {
            let mut s = 0.0;
            for k in 0..m {
                s += self.binv[i * m + k] * eff[k];
            }
            self.xb[i] = s;
        }
    }

    /// Rebuild the dense basis inverse from scratch, repairing a singular
    /// basis by swapping uncovered rows' slacks in.
    fn refactor(&mut self) -> Result<(), ()> {
        let m = self.m;
        for _attempt in 0..=m {
            // dense basis matrix, column p = column of basis[p]
            let mut mat = vec![0.0; m * m];
            for (p, &j) in self.basis.iter().enumerate() {
                self.for_column(j, |i, a| mat[i * m + p] = a);
            }
            let mut inv = vec![0.0; m * m];
            for i in 0..m {
                inv[i * m + i] = 1.0;
            }
            let mut row_of_col: Vec<Option<usize>> = vec![None; m];
            let mut row_used = vec![false; m];
            let mut failed_col = None;
            for p in 0..m {
                // partial pivoting over unused rows
                let mut best = PIVOT_TOL;
                let mut pr = None;
                for i in 0..m {
                    if !row_used[i] && mat[i * m + p].abs() > best {
                        best = mat[i * m + p].abs();
                        pr = Some(i);
                    }
                }
                let Some(pr) = pr else {
                    failed_col = Some(p);
                    break;
                };
                row_used[pr] = true;
                row_of_col[p] = Some(pr);
                let piv = mat[pr * m + p];
                for k in 0..m {
                    mat[pr * m + k] /= piv;
                    inv[pr * m + k] /= piv;
                }
                for i in 0..m {
                    if i != pr {
                        let f = mat[i * m + p];
                        if f != 0.0 {
                            for k in 0..m {
                                mat[i * m + k] -= f * mat[pr * m + k];
                                inv[i * m + k] -= f * inv[pr * m + k];
                            }
                        }
                    }
                }
            }
            match failed_col {
                None => {
                    // Reorder so that basis position p corresponds to row p:
                    // after Gauss-Jordan, pivot of column p sits in row_of_col[p].
                    // B^{-1} rows must be permuted accordingly: the variable at
                    // basis position p is associated with pivot row row_of_col[p].
                    let mut binv = vec![0.0; m * m];
                    let mut basis_new = vec![0usize; m];
                    for p in 0..m {
                        let r = row_of_col[p].unwrap();
                        basis_new[r] = self.basis[p];
                        binv[r * m..(r + 1) * m].copy_from_slice(&inv[r * m..(r + 1) * m]);
                    }
                    // inv rows are already "basis-variable per pivot row":
                    // row r of inv solves e_p systems; keep mapping consistent.
                    self.basis = basis_new;
                    for (r, &j) in self.basis.iter().enumerate() {
                        self.state[j] = VarState::Basic(r);
                    }
                    self.binv = binv;
                    self.pivots_since_refactor = 0;
                    self.compute_xb();
                    return Ok(());
                }
                Some(p) => {
                    // Replace the dependent basic variable with the slack of an
                    // uncovered row; that slack cannot currently be basic.
                    let Some(r) = (0..m).find(|&i| !row_used[i]) else {
                        return Err(());
                    };
                    let out = self.basis[p];
                    self.state[out] = leaving_state_snap(self.lo[out], self.hi[out]);
                    self.basis[p] = self.ns + r;
                    self.state[self.ns + r] = VarState::Basic(p);
                }
            }
        }
        Err(())
    }

    /// y := g^T B^{-1} for a dense row vector g indexed by basis position.
    fn btran(&mut self, g: &[f64]) {
        let m = self.m;
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                let gi = g[i];
                if gi != 0.0 {
                    s += gi * self.binv[i * m + j];
                }
            }
            self.y[j] = s;
        }
    }

    /// w := B^{-1} A_j.
    fn ftran(&mut self, j: usize) {
        let m = self.m;
        for v in self.w.iter_mut() {
            *v = 0.0;
        }
        // gather sparse column, then multiply
        let mut acc = vec![];
        self.for_column(j, |i, a| acc.push((i, a)));
        for i in 0..m {
            let mut s = 0.0;
            for &(k, a) in &acc {
                s += self.binv[i * m + k] * a;
            }
            self.w[i] = s;
        }
    }

    fn reduced_cost(&self, j: usize, costs_on_vars: bool) -> f64 {
        let base = if costs_on_vars { self.cost[j] } else { 0.0 };
        let mut dot = 0.0;
        self.for_column(j, |i, a| dot += self.y[i] * a);
        base - dot
    }

    fn entering_direction(&self, j: usize, rc: f64) -> Option<f64> {
        let tol = self.tol;
        match self.state[j] {
            VarState::Basic(_) => None,
            VarState::AtLower => {
                // fixed variables never enter
                if self.hi[j] - self.lo[j] <= 0.0 {
                    None
                } else if rc < -tol {
                    Some(1.0)
                } else {
                    None
                }
            }
            VarState::AtUpper => {
                if self.hi[j] - self.lo[j] <= 0.0 {
                    None
                } else if rc > tol {
                    Some(-1.0)
                } else {
                    None
                }
            }
            VarState::FreeAtZero => {
                if rc < -tol {
                    Some(1.0)
                } else if rc > tol {
                    Some(-1.0)
                } else {
                    None
                }
            }
        }
    }

    fn run(&mut self) -> SimplexOutput {
        let max_iters = 100 * (self.m + self.n) + 20_000;

        // Phase 1: drive basic bound violations to zero.
        loop {
            if self.iterations > max_iters {
                return self.fail();
            }
            if self.max_violation() <= self.tol {
                break;
            }
            match self.iterate(false) {
                Step::Moved => {}
                Step::Optimal => {
                    // no improving direction but still infeasible
                    return SimplexOutput {
                        status: LpStatus::Infeasible,
                        objective: f64::NAN,
                        primal: Vec::new(),
                        row_duals: Vec::new(),
                    };
                }
                Step::Unbounded | Step::Stuck => return self.fail(),
            }
        }

        // Phase 2: optimize the real objective.
        self.stall = 0;
        self.bland = false;
        loop {
            if self.iterations > max_iters {
                return self.fail();
            }
            match self.iterate(true) {
                Step::Moved => {
                    // numerical drift can reintroduce infeasibility; repair
                    if self.pivots_since_refactor == 0 && self.max_violation() > 10.0 * self.tol {
                        if self.refactor().is_err() {
                            return self.fail();
                        }
                        if self.max_violation() > 10.0 * self.tol {
                            // re-run phase 1 on the repaired basis
                            loop {
                                if self.iterations > max_iters {
                                    return self.fail();
                                }
                                if self.max_violation() <= self.tol {
                                    break;
                                }
                                match self.iterate(false) {
                                    Step::Moved => {}
                                    _ => return self.fail(),
                                }
                            }
                        }
                    }
                }
                Step::Optimal => return self.finish(),
                Step::Unbounded => {
                    return SimplexOutput {
                        status: LpStatus::Unbounded,
                        objective: f64::NAN,
                        primal: Vec::new(),
                        row_duals: Vec::new(),
                    }
                }
                Step::Stuck => return self.fail(),
            }
        }
    }

    fn max_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, &v) in self.xb.iter().enumerate() {
            let j = self.basis[i];
            if v > self.hi[j] {
                worst = worst.max(v - self.hi[j]);
            }
            if v < self.lo[j] {
                worst = worst.max(self.lo[j] - v);
            }
        }
        worst
    }

    /// One simplex iteration. `phase2` selects the objective.
    fn iterate(&mut self, phase2: bool) -> Step {
        self.iterations += 1;
        let m = self.m;

        // dual vector for the active objective
        let mut g = vec![0.0; m];
        if phase2 {
            for i in 0..m {
                g[i] = self.cost[self.basis[i]];
            }
        } else {
            for i in 0..m {
                let j = self.basis[i];
                if self.xb[i] > self.hi[j] + self.tol {
                    g[i] = 1.0;
                } else if self.xb[i] < self.lo[j] - self.tol {
                    g[i] = -1.0;
                }
            }
        }
        self.btran(&g);

        // entering variable
        let mut enter: Option<(usize, f64, f64)> = None; // (var, dir, |rc|)
        for j in 0..self.n {
            if matches!(self.state[j], VarState::Basic(_)) {
                continue;
            }
            let rc = self.reduced_cost(j, phase2);
            if let Some(dir) = self.entering_direction(j, rc) {
                if self.bland {
                    enter = Some((j, dir, rc.abs()));
                    break;
                }
                match enter {
                    Some((_, _, best)) if rc.abs() <= best => {}
                    _ => enter = Some((j, dir, rc.abs())),
                }
            }
        }
        let Some((j_in, dir, _)) = enter else {
            return Step::Optimal;
        };

        self.ftran(j_in);

        // ratio test; the entering variable's own travel is one candidate
        let mut t_max = if matches!(self.state[j_in], VarState::FreeAtZero) {
            f64::INFINITY
        } else {
            self.hi[j_in] - self.lo[j_in]
        };
        let mut blocking: Option<(usize, bool)> = None; // (basis pos, leaves_at_upper)
        let mut best_piv = 0.0;
        for i in 0..m {
            let delta = -dir * self.w[i];
            if delta.abs() <= PIVOT_TOL {
                continue;
            }
            let jb = self.basis[i];
            let v = self.xb[i];
            let (l, u) = (self.lo[jb], self.hi[jb]);
            // target bound in the movement direction; during phase 1 an
            // infeasible basic blocks at the bound it is violating
            let (t_i, at_upper) = if v > u + self.tol {
                if delta < 0.0 {
                    ((v - u) / -delta, true)
                } else {
                    continue;
                }
            } else if v < l - self.tol {
                if delta > 0.0 {
                    ((l - v) / delta, false)
                } else {
                    continue;
                }
            } else if delta > 0.0 {
                if u.is_finite() {
                    (((u - v).max(0.0)) / delta, true)
                } else {
                    continue;
                }
            } else {
                if l.is_finite() {
                    (((v - l).max(0.0)) / -delta, false)
                } else {
                    continue;
                }
            };
            let better = match blocking {
                None => t_i < t_max,
                Some((r, _)) => {
                    t_i < t_max - RATIO_TIE_TOL
                        || (t_i < t_max + RATIO_TIE_TOL
                            && if self.bland {
                                // strict Bland tie-break: lowest leaving
                                // variable index, the anti-cycling guarantee
                                self.basis[i] < self.basis[r]
                            } else {
                                delta.abs() > best_piv
                            })
                }
            };
            if better {
                t_max = t_i.max(0.0);
                blocking = Some((i, at_upper));
                best_piv = delta.abs();
            }
        }

        if !t_max.is_finite() {
            return if phase2 { Step::Unbounded } else { Step::Stuck };
        }

        // degeneracy bookkeeping: fall back to Bland's rule during stalls
        if t_max <= RATIO_TIE_TOL {
            self.stall += 1;
            if self.stall > STALL_LIMIT {
                self.bland = true;
            }
        } else {
            self.stall = 0;
            self.bland = false;
        }

        // apply the step
        match blocking {
            None => {
                // entering variable flips to its opposite bound
                for i in 0..m {
                    let delta = -dir * self.w[i];
                    self.xb[i] += delta * t_max;
                }
                self.state[j_in] = match self.state[j_in] {
                    VarState::AtLower => VarState::AtUpper,
                    VarState::AtUpper => VarState::AtLower,
                    s => s,
                };
            }
            Some((r, at_upper)) => {
                let enter_val = match self.state[j_in] {
                    VarState::AtLower => self.lo[j_in] + dir * t_max,
                    VarState::AtUpper => self.hi[j_in] + dir * t_max,
                    VarState::FreeAtZero => dir * t_max,
                    VarState::Basic(_) => unreachable!(),
                };
                for i in 0..m {
                    let delta = -dir * self.w[i];
                    self.xb[i] += delta * t_max;
                }
                let j_out = self.basis[r];
                self.state[j_out] = if at_upper {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.basis[r] = j_in;
                self.state[j_in] = VarState::Basic(r);
                self.xb[r] = enter_val;

                // eta update of the inverse
                let piv = self.w[r];
                if piv.abs() <= PIVOT_TOL {
                    if self.refactor().is_err() {
                        return Step::Stuck;
                    }
                } else {
                    let m = self.m;
                    let wr: Vec<f64> = self.w.clone();
                    let inv_piv = 1.0 / piv;
                    // scale pivot row
                    for k in 0..m {
                        self.binv[r * m + k] *= inv_piv;
                    }
                    for i in 0..m {
                        if i != r {
                            let f = wr[i];
                            if f != 0.0 {
                                for k in 0..m {
                                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                                }
                            }
                        }
                    }
                    self.pivots_since_refactor += 1;
                    if self.pivots_since_refactor >= REFACTOR_EVERY {
                        if self.refactor().is_err() {
                            return Step::Stuck;
                        }
                    }
                }
            }
        }
        Step::Moved
    }

    fn finish(&mut self) -> SimplexOutput {
        // crisp final values: fresh factorization, fresh basic solution
        if self.refactor().is_err() {
            return self.fail();
        }
        if self.max_violation() > 100.0 * self.tol {
            return self.fail();
        }
        let m = self.m;
        let mut x = vec![0.0; self.ns];
        for j in 0..self.ns {
            x[j] = match self.state[j] {
                VarState::Basic(i) => self.xb[i],
                _ => self.nonbasic_value(j),
            };
        }
        let mut g = vec![0.0; m];
        for i in 0..m {
            g[i] = self.cost[self.basis[i]];
        }
        self.btran(&g);
        let duals: Vec<f64> = self.y.iter().map(|v| -v).collect();
        let mut obj = 0.0;
        for j in 0..self.ns {
            obj -= self.cost[j] * x[j]; // back to maximization sign
        }
        SimplexOutput {
            status: LpStatus::Optimal,
            objective: obj,
            primal: x,
            row_duals: duals,
        }
    }

    fn fail(&self) -> SimplexOutput {
        SimplexOutput {
            status: LpStatus::NumericalFailure,
            objective: f64::NAN,
            primal: Vec::new(),
            row_duals: Vec::new(),
        }
    }
}

fn initial_state(lo: f64, hi: f64) -> VarState {
    if lo.is_finite() {
        VarState::AtLower
    } else if hi.is_finite() {
        VarState::AtUpper
    } else {
        VarState::FreeAtZero
    }
}

fn leaving_state_snap(lo: f64, hi: f64) -> VarState {
    if lo.is_finite() {
        VarState::AtLower
    } else if hi.is_finite() {
        VarState::AtUpper
    } else {
        VarState::FreeAtZero
    }
}
