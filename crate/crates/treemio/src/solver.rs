//! Bundled solver: a bounded-variable two-phase primal simplex for LPs and a
//! best-bound branch-and-bound for MIPs, plus the vertex test used by the
//! polyhedral probes.
//!
//! Scale target is desk-size models (hundreds of rows). The simplex keeps a
//! dense basis inverse, prices with Dantzig's rule and falls back to Bland's
//! rule when the objective stalls, which protects against cycling. Resource
//! limits surface as [`Status`] variants, never as errors, so callers always
//! get the incumbent and bound that were reached.

use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use crate::model::{Integrality, MipModel, ObjSense, Sense, SolveResult, Status};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    /// Feasibility tolerance on constraint rows and bounds.
    pub feas_tol: T,
    /// Integrality tolerance for accepting binary values.
    pub int_tol: T,
    /// Simplex iteration budget per LP solve.
    pub max_lp_iters: usize,
    /// Branch-and-bound node budget.
    pub max_bnb_nodes: usize,
    /// Wall-clock budget for a MIP solve, checked between nodes.
    pub time_limit: Option<Duration>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            feas_tol: T::real(1e-7),
            int_tol: T::real(1e-6),
            max_lp_iters: 50_000,
            max_bnb_nodes: 200_000,
            time_limit: None,
        }
    }
}

// Pivot and reduced-cost thresholds, scaled for f64; f32 runs inherit them
// through `T::real` and simply work at reduced precision.
fn pivot_eps<T: Scalar>() -> T {
    T::real(1e-9)
}

// ---------------------------------------------------------------------------
// LP standard form
// ---------------------------------------------------------------------------

/// Dense LP in equality standard form over the model's free (non-defined)
/// variables plus slacks: `A x = b`, `l <= x <= u`, minimize `c x`.
struct StandardLp<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    c: Vec<T>,
    l: Vec<T>,
    u: Vec<T>,
    /// model var id per structural column.
    cols: Vec<usize>,
    /// Constant offset of the (minimized) objective.
    c0: T,
    /// Flip sign of the reported objective (true when the model maximizes).
    negate: bool,
}

fn standard_form<T: Scalar>(
    model: &MipModel<T>,
    bounds_override: &[(usize, T, T)],
) -> StandardLp<T> {
    let nv = model.variables.len();
    let mut col_of = vec![usize::MAX; nv];
    let mut cols = Vec::new();
    for v in 0..nv {
        if !model.is_defined(v) {
            col_of[v] = cols.len();
            cols.push(v);
        }
    }
    let n = cols.len();
    let m = model.constraints.len();

    let mut l: Vec<T> = cols
        .iter()
        .map(|&v| model.variables[v].lower.unwrap_or_else(T::neg_infinity))
        .collect();
    let mut u: Vec<T> = cols
        .iter()
        .map(|&v| model.variables[v].upper.unwrap_or_else(T::infinity))
        .collect();
    for &(v, lo, hi) in bounds_override {
        let j = col_of[v];
        debug_assert_ne!(j, usize::MAX, "bound override on defined variable");
        l[j] = l[j].max(lo);
        u[j] = u[j].min(hi);
    }

    let mut a = vec![vec![T::zero(); n]; m];
    let mut b = vec![T::zero(); m];
    for (i, cst) in model.constraints.iter().enumerate() {
        for &(v, coef) in &cst.row {
            debug_assert_ne!(col_of[v], usize::MAX, "constraint references defined variable");
            a[i][col_of[v]] += coef;
        }
        b[i] = cst.rhs;
    }

    // Objective with definitions substituted out; minimize internally.
    let (obj_row, obj_const) = model.substitute(&model.objective);
    let negate = model.obj_sense == ObjSense::Maximize;
    let sgn = if negate { -T::one() } else { T::one() };
    let mut c = vec![T::zero(); n];
    for &(v, coef) in &obj_row {
        c[col_of[v]] += sgn * coef;
    }
    let c0 = sgn * obj_const;

    // Slacks for inequality rows.
    let mut lp = StandardLp { a, b, c, l, u, cols, c0, negate };
    for (i, cst) in model.constraints.iter().enumerate() {
        match cst.sense {
            Sense::Eq => continue,
            Sense::Le => {
                lp.push_col(i, T::one(), T::zero(), T::infinity());
            }
            Sense::Ge => {
                lp.push_col(i, T::one(), T::neg_infinity(), T::zero());
            }
        }
    }
    lp
}

impl<T: Scalar> StandardLp<T> {
    fn push_col(&mut self, row: usize, coef: T, lo: T, hi: T) {
        for (i, r) in self.a.iter_mut().enumerate() {
            r.push(if i == row { coef } else { T::zero() });
        }
        self.c.push(T::zero());
        self.l.push(lo);
        self.u.push(hi);
    }
}

// ---------------------------------------------------------------------------
// Bounded-variable primal simplex
// ---------------------------------------------------------------------------

enum SimplexOutcome {
    Optimal,
    Unbounded,
    IterLimit,
}

struct Simplex<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    l: Vec<T>,
    u: Vec<T>,
    x: Vec<T>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<Vec<T>>,
    iters: usize,
    max_iters: usize,
}

impl<T: Scalar> Simplex<T> {
    fn new(lp: &StandardLp<T>, max_iters: usize) -> Self {
        let m = lp.b.len();
        let mut a = lp.a.clone();
        let b = lp.b.clone();
        let mut l = lp.l.clone();
        let mut u = lp.u.clone();

        // Nonbasic start: every variable at its nearest finite bound.
        let start = |lo: T, hi: T| {
            if lo.is_finite() {
                lo
            } else if hi.is_finite() {
                hi
            } else {
                T::zero()
            }
        };
        let mut x: Vec<T> = l.iter().zip(&u).map(|(&lo, &hi)| start(lo, hi)).collect();

        // One artificial per row absorbs the residual; they form the basis.
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let resid = b[i]
                - a[i]
                    .iter()
                    .zip(&x)
                    .map(|(&aij, &xj)| aij * xj)
                    .sum::<T>();
            let sgn = if resid < T::zero() { -T::one() } else { T::one() };
            for (k, row) in a.iter_mut().enumerate() {
                row.push(if k == i { sgn } else { T::zero() });
            }
            l.push(T::zero());
            u.push(T::infinity());
            x.push(resid.abs());
            basis.push(lp.c.len() + i);
        }
        let n = a.first().map(|r| r.len()).unwrap_or(0);
        let mut in_basis = vec![false; n];
        let mut binv = vec![vec![T::zero(); m]; m];
        for i in 0..m {
            in_basis[basis[i]] = true;
            // B = diag(sgn_i), so Binv is the same diagonal.
            binv[i][i] = a[i][basis[i]];
        }
        Simplex { a, b, l, u, x, basis, in_basis, binv, iters: 0, max_iters }
    }

    fn num_artificials(&self) -> usize {
        self.b.len()
    }

    fn objective(&self, c: &[T]) -> T {
        c.iter().zip(&self.x).map(|(&cj, &xj)| cj * xj).sum()
    }

    /// Run the simplex to optimality for cost vector `c` (artificials carry
    /// cost `c_art` each; phase 1 passes one, phase 2 zero).
    fn run(&mut self, c: &[T]) -> SimplexOutcome {
        let m = self.basis.len();
        let n = self.a.first().map(|r| r.len()).unwrap_or(0);
        let eps = pivot_eps::<T>();
        let mut stall = 0usize;
        let mut last_obj = self.objective(c);
        loop {
            self.iters += 1;
            if self.iters > self.max_iters {
                return SimplexOutcome::IterLimit;
            }
            let bland = stall > 64;

            // Dual prices y = c_B Binv.
            let mut y = vec![T::zero(); m];
            for k in 0..m {
                let cb = c[self.basis[k]];
                if !cb.is_zero() {
                    for i in 0..m {
                        y[i] += cb * self.binv[k][i];
                    }
                }
            }

            // Pricing.
            let mut enter: Option<(usize, T, T)> = None; // (col, direction, |d|)
            for j in 0..n {
                if self.in_basis[j] || self.l[j] == self.u[j] {
                    continue;
                }
                let mut d = c[j];
                for i in 0..m {
                    let aij = self.a[i][j];
                    if !aij.is_zero() {
                        d -= y[i] * aij;
                    }
                }
                // At the lower bound the variable may only increase, at the
                // upper bound only decrease; strictly inside (free) either.
                let at_lower = self.x[j] <= self.l[j] + eps;
                let at_upper = self.x[j] >= self.u[j] - eps;
                let dir = if d < -eps && !at_upper {
                    T::one()
                } else if d > eps && !at_lower {
                    -T::one()
                } else {
                    continue;
                };
                let score = d.abs();
                let better = match enter {
                    None => true,
                    Some((bj, _, bs)) => {
                        if bland {
                            j < bj
                        } else {
                            score > bs
                        }
                    }
                };
                if better {
                    enter = Some((j, dir, score));
                    if bland {
                        break;
                    }
                }
            }
            let Some((j, dir, _)) = enter else {
                return SimplexOutcome::Optimal;
            };

            // Column in the basis frame.
            let mut alpha = vec![T::zero(); m];
            for i in 0..m {
                let mut s = T::zero();
                for k in 0..m {
                    let akj = self.a[k][j];
                    if !akj.is_zero() {
                        s += self.binv[i][k] * akj;
                    }
                }
                alpha[i] = s;
            }

            // Ratio test: own opposite bound vs basic variables hitting theirs.
            let own = if dir > T::zero() {
                self.u[j] - self.x[j]
            } else {
                self.x[j] - self.l[j]
            };
            let mut t = own;
            let mut leave: Option<usize> = None;
            for i in 0..m {
                let delta = -dir * alpha[i]; // change of x_B[i] per unit step
                let limit = if delta < -eps {
                    (self.x[self.basis[i]] - self.l[self.basis[i]]) / -delta
                } else if delta > eps {
                    (self.u[self.basis[i]] - self.x[self.basis[i]]) / delta
                } else {
                    continue;
                };
                let limit = limit.max(T::zero());
                if limit < t - eps || (limit < t + eps && leave.is_some_and(|r| self.basis[i] < self.basis[r]))
                {
                    t = limit;
                    leave = Some(i);
                }
            }
            if !t.is_finite() {
                return SimplexOutcome::Unbounded;
            }

            // Take the step.
            self.x[j] += dir * t;
            for i in 0..m {
                self.x[self.basis[i]] -= dir * t * alpha[i];
            }
            match leave {
                None => {
                    // Bound flip: snap exactly to the bound reached.
                    self.x[j] = if dir > T::zero() { self.u[j] } else { self.l[j] };
                }
                Some(r) => {
                    let out = self.basis[r];
                    let delta = -dir * alpha[r];
                    self.x[out] = if delta < T::zero() { self.l[out] } else { self.u[out] };
                    // Eta update of the basis inverse.
                    let piv = alpha[r];
                    for k in 0..m {
                        self.binv[r][k] /= piv;
                    }
                    for i in 0..m {
                        if i != r && !alpha[i].is_zero() {
                            let f = alpha[i];
                            for k in 0..m {
                                let br = self.binv[r][k];
                                self.binv[i][k] -= f * br;
                            }
                        }
                    }
                    self.in_basis[out] = false;
                    self.in_basis[j] = true;
                    self.basis[r] = j;
                }
            }
            let obj = self.objective(c);
            if obj < last_obj - pivot_eps::<T>() {
                last_obj = obj;
                stall = 0;
            } else {
                stall += 1;
            }
        }
    }
}

fn solve_standard<T: Scalar>(lp: &StandardLp<T>, config: &SolverConfig<T>) -> (Status, Vec<T>, T, usize) {
    let m = lp.b.len();
    let n = lp.c.len();
    let mut spx = Simplex::new(lp, config.max_lp_iters);

    // Phase 1: minimize the artificial total.
    let mut c1 = vec![T::zero(); n + spx.num_artificials()];
    for cj in c1.iter_mut().skip(n) {
        *cj = T::one();
    }
    // Phase 1 is bounded below by zero; an "unbounded" outcome can only be
    // numerical trouble, reported as an iteration limit.
    match spx.run(&c1) {
        SimplexOutcome::IterLimit | SimplexOutcome::Unbounded => {
            return (Status::IterationLimit, vec![T::zero(); n], T::nan(), spx.iters)
        }
        _ => {}
    }
    if spx.objective(&c1) > config.feas_tol {
        return (Status::Infeasible, vec![T::zero(); n], T::nan(), spx.iters);
    }
    // Artificials are pinned at zero for phase 2.
    for j in n..n + m {
        spx.u[j] = T::zero();
        spx.x[j] = T::zero();
    }

    let mut c2 = vec![T::zero(); n + m];
    c2[..n].copy_from_slice(&lp.c);
    let outcome = spx.run(&c2);
    let obj = spx.objective(&c2) + lp.c0;
    let status = match outcome {
        SimplexOutcome::Optimal => Status::Optimal,
        SimplexOutcome::Unbounded => Status::Unbounded,
        SimplexOutcome::IterLimit => Status::IterationLimit,
    };
    (status, spx.x[..n].to_vec(), obj, spx.iters)
}

/// Solve the LP relaxation of `model` (integrality is ignored).
pub fn solve_lp<T: Scalar>(model: &MipModel<T>, config: &SolverConfig<T>) -> SolveResult<T> {
    solve_lp_with_bounds(model, config, &[])
}

fn solve_lp_with_bounds<T: Scalar>(
    model: &MipModel<T>,
    config: &SolverConfig<T>,
    bounds_override: &[(usize, T, T)],
) -> SolveResult<T> {
    let lp = standard_form(model, bounds_override);
    let (status, xs, obj, iters) = solve_standard(&lp, config);
    let mut values = vec![T::zero(); model.variables.len()];
    for (j, &v) in lp.cols.iter().enumerate() {
        values[v] = xs[j];
    }
    model.apply_definitions(&mut values);
    let objective = if lp.negate { -obj } else { obj };
    let best_bound = match status {
        Status::Optimal => objective,
        Status::Unbounded => {
            if lp.negate {
                T::infinity()
            } else {
                T::neg_infinity()
            }
        }
        _ => T::nan(),
    };
    SolveResult {
        status,
        objective,
        values,
        best_bound,
        node_count: 0,
        lp_iterations: iters,
    }
}

// ---------------------------------------------------------------------------
// Branch and bound
// ---------------------------------------------------------------------------

struct BnbNode<T> {
    /// LP bound in maximize space.
    bound: f64,
    seq: usize,
    fixes: Vec<(usize, T, T)>,
}

impl<T> PartialEq for BnbNode<T> {
    fn eq(&self, other: &Self) -> bool {
        self.bound == other.bound && self.seq == other.seq
    }
}
impl<T> Eq for BnbNode<T> {}
impl<T> PartialOrd for BnbNode<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for BnbNode<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Best bound first; FIFO on ties.
        self.bound
            .total_cmp(&other.bound)
            .then(other.seq.cmp(&self.seq))
    }
}

/// Solve the MIP by best-bound branch and bound over the declared binaries.
///
/// Branching picks the most fractional binary (ties: lowest variable id);
/// node selection is best bound with FIFO tie-breaking. Limit statuses still
/// report the incumbent and the remaining best bound.
pub fn solve_mip<T: Scalar>(model: &MipModel<T>, config: &SolverConfig<T>) -> SolveResult<T> {
    let start = Instant::now();
    let maximize = model.obj_sense == ObjSense::Maximize;
    let to_max = |v: T| if maximize { v } else { -v };
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.integrality == Integrality::Binary)
        .map(|(i, _)| i)
        .collect();

    let mut heap: BinaryHeap<BnbNode<T>> = BinaryHeap::new();
    heap.push(BnbNode { bound: f64::INFINITY, seq: 0, fixes: Vec::new() });
    let mut seq = 0usize;
    let mut incumbent: Option<(T, Vec<T>)> = None;
    let mut nodes = 0usize;
    let mut lp_iters = 0usize;
    let mut limit: Option<Status> = None;

    while let Some(node) = heap.pop() {
        if let Some((inc, _)) = &incumbent {
            if node.bound <= to_max(*inc).to_f64_lossy() + 1e-9 {
                continue; // bound-dominated; best-bound order prunes the rest too
            }
        }
        if nodes >= config.max_bnb_nodes {
            limit = Some(Status::NodeLimit);
            heap.push(node);
            break;
        }
        if let Some(tl) = config.time_limit {
            if start.elapsed() >= tl {
                limit = Some(Status::TimeLimit);
                heap.push(node);
                break;
            }
        }
        nodes += 1;

        let res = solve_lp_with_bounds(model, config, &node.fixes);
        lp_iters += res.lp_iterations;
        match res.status {
            Status::Infeasible => continue,
            Status::Unbounded => {
                // Binaries are bounded, so an unbounded relaxation means the
                // MIP itself is unbounded in the continuous directions.
                return SolveResult {
                    status: Status::Unbounded,
                    objective: res.objective,
                    values: res.values,
                    best_bound: res.best_bound,
                    node_count: nodes,
                    lp_iterations: lp_iters,
                };
            }
            Status::IterationLimit => {
                limit = Some(Status::IterationLimit);
                heap.push(node);
                break;
            }
            Status::Optimal => {}
            _ => unreachable!(),
        }
        let bound = to_max(res.objective);
        if let Some((inc, _)) = &incumbent {
            if bound <= *inc + T::real(1e-9) {
                continue;
            }
        }

        // Most fractional binary.
        let frac = |v: T| {
            let f = v - v.floor();
            f.min(T::one() - f)
        };
        let branch = binaries
            .iter()
            .copied()
            .map(|v| (v, frac(res.values[v])))
            .filter(|&(_, f)| f > config.int_tol)
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(b.0.cmp(&a.0)));

        match branch {
            None => {
                let better = incumbent
                    .as_ref()
                    .map(|(inc, _)| bound > *inc)
                    .unwrap_or(true);
                if better {
                    incumbent = Some((bound, res.values));
                }
            }
            Some((v, _)) => {
                for fix in [T::zero(), T::one()] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((v, fix, fix));
                    seq += 1;
                    heap.push(BnbNode { bound: bound.to_f64_lossy(), seq, fixes });
                }
            }
        }
    }

    // Remaining bound over open nodes (maximize space).
    let open_bound = heap.iter().map(|n| n.bound).fold(f64::NEG_INFINITY, f64::max);
    let from_max = |v: T| if maximize { v } else { -v };
    match incumbent {
        Some((inc, values)) => {
            let status = limit.unwrap_or(Status::Optimal);
            let best = match status {
                Status::Optimal => inc,
                _ => T::real(open_bound.max(inc.to_f64_lossy())),
            };
            SolveResult {
                status,
                objective: from_max(inc),
                values,
                best_bound: from_max(best),
                node_count: nodes,
                lp_iterations: lp_iters,
            }
        }
        None => SolveResult {
            status: limit.unwrap_or(Status::Infeasible),
            objective: T::nan(),
            values: vec![T::zero(); model.variables.len()],
            best_bound: from_max(T::real(open_bound)),
            node_count: nodes,
            lp_iterations: lp_iters,
        },
    }
}

// ---------------------------------------------------------------------------
// Vertex test
// ---------------------------------------------------------------------------

/// Whether `values` is an extreme point of the model's feasible region
/// (integrality ignored): the point must be feasible and the active
/// constraints and bounds must have full column rank over the free variables.
pub fn is_vertex<T: Scalar>(model: &MipModel<T>, values: &[T], tol: T) -> bool {
    if model.max_violation(values) > tol {
        return false;
    }
    let nv = model.variables.len();
    let mut col_of = vec![usize::MAX; nv];
    let mut n = 0usize;
    for v in 0..nv {
        if !model.is_defined(v) {
            col_of[v] = n;
            n += 1;
        }
    }
    let mut rows: Vec<Vec<T>> = Vec::new();
    for cst in &model.constraints {
        let lhs = MipModel::row_value(&cst.row, values);
        let active = match cst.sense {
            Sense::Eq => true,
            _ => (lhs - cst.rhs).abs() <= tol,
        };
        if active {
            let mut r = vec![T::zero(); n];
            for &(v, c) in &cst.row {
                r[col_of[v]] += c;
            }
            rows.push(r);
        }
    }
    for (v, var) in model.variables.iter().enumerate() {
        if col_of[v] == usize::MAX {
            continue;
        }
        let lower_active = var.lower.is_some_and(|lb| (values[v] - lb).abs() <= tol);
        let upper_active = var.upper.is_some_and(|ub| (values[v] - ub).abs() <= tol);
        if lower_active || upper_active {
            let mut r = vec![T::zero(); n];
            r[col_of[v]] = T::one();
            rows.push(r);
        }
    }
    rank(rows) == n
}

/// Row rank by Gaussian elimination with partial pivoting.
fn rank<T: Scalar>(mut rows: Vec<Vec<T>>) -> usize {
    let eps = pivot_eps::<T>();
    let n = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut rk = 0usize;
    for col in 0..n {
        let Some(p) = (rk..rows.len()).max_by(|&a, &b| {
            rows[a][col].abs().partial_cmp(&rows[b][col].abs()).unwrap()
        }) else {
            break;
        };
        if rows[p][col].abs() <= eps {
            continue;
        }
        rows.swap(rk, p);
        for i in rk + 1..rows.len() {
            let f = rows[i][col] / rows[rk][col];
            if !f.is_zero() {
                for k in col..n {
                    let x = rows[rk][k];
                    rows[i][k] -= f * x;
                }
            }
        }
        rk += 1;
    }
    rk
}
