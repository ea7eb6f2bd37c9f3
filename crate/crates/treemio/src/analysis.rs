//! Oracles and verifiers: independent cell-enumeration ground truth,
//! relaxation gaps, containment and integrality probes, total unimodularity,
//! the nested-split implication check, and 1-D sharpness.
//!
//! Reports carry `f64` summaries and serialize to JSON.

use rand::Rng;
use rand_pcg::Pcg64Mcg;
use serde::Serialize;
use thiserror::Error;

use crate::formulations::{
    build, set_objective, BuildOptions, FormulationKind, Objective,
};
use crate::model::{
    Integrality, MipModel, ObjSense, Sense, Status, VarRole,
};
use crate::scalar::Scalar;
use crate::solver::{solve_lp, solve_mip, SolverConfig};
use crate::tree::{Node, SplitIndex, TreeEnsemble};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("cell limit exceeded: {0} cells")]
    CellLimit(usize),
    #[error("matrix entry out of range at ({0},{1}): TU requires entries in {{-1,0,1}}")]
    EntryRange(usize, usize),
    #[error("submatrix count {0} exceeds the limit")]
    SizeLimit(u128),
    #[error("splits are not nested: {0}")]
    NotNested(String),
    #[error("variable role missing in counterpart model: {0}")]
    RoleMismatch(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

// ---------------------------------------------------------------------------
// Cell-enumeration oracle
// ---------------------------------------------------------------------------

pub const CELL_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub value: f64,
    pub w: Vec<f64>,
    pub cells_total: usize,
    pub cells_feasible: usize,
}

/// Ground-truth optimum of the ensemble prediction over its domain (optionally
/// intersected with linear constraints over `w`), by enumerating the closed
/// cells of the grid induced by the pooled thresholds. The prediction is
/// constant on each cell, so a per-cell feasibility LP suffices in the
/// constrained case.
pub fn oracle_optimum<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
    extra_constraints: &[(Vec<(usize, T)>, Sense, T)],
    sense: ObjSense,
    config: &SolverConfig<T>,
) -> Result<OracleResult, AnalysisError> {
    let d = ensemble.num_features;
    let mut boundaries: Vec<Vec<T>> = Vec::with_capacity(d);
    for i in 0..d {
        let (lb, ub) = ensemble.domain[i];
        let mut bs = vec![lb];
        bs.extend(index.thresholds[i].iter().copied());
        bs.push(ub);
        boundaries.push(bs);
    }
    let cells_total: usize = boundaries
        .iter()
        .try_fold(1usize, |acc, bs| acc.checked_mul(bs.len() - 1))
        .filter(|&n| n <= CELL_LIMIT)
        .ok_or(AnalysisError::CellLimit(usize::MAX))?;

    let mut idx = vec![0usize; d];
    let mut best: Option<(T, Vec<T>)> = None;
    let mut feasible = 0usize;
    for _ in 0..cells_total {
        let lo: Vec<T> = (0..d).map(|i| boundaries[i][idx[i]]).collect();
        let hi: Vec<T> = (0..d).map(|i| boundaries[i][idx[i] + 1]).collect();
        if let Some(w) = cell_point(&lo, &hi, extra_constraints, config) {
            feasible += 1;
            let value = cell_value(ensemble, &hi);
            let better = match &best {
                None => true,
                Some((bv, _)) => match sense {
                    ObjSense::Maximize => value > *bv,
                    ObjSense::Minimize => value < *bv,
                },
            };
            if better {
                best = Some((value, w));
            }
        }
        // Advance the multi-index.
        for i in 0..d {
            idx[i] += 1;
            if idx[i] < boundaries[i].len() - 1 {
                break;
            }
            idx[i] = 0;
        }
    }
    let (value, w) = best.ok_or_else(|| {
        AnalysisError::Solver("no cell intersects the constraints".to_string())
    })?;
    Ok(OracleResult {
        value: value.to_f64_lossy(),
        w: w.iter().map(|v| v.to_f64_lossy()).collect(),
        cells_total,
        cells_feasible: feasible,
    })
}

/// A feasible point of the closed cell intersected with the constraints, or
/// `None`. Without constraints the midpoint is returned directly.
fn cell_point<T: Scalar>(
    lo: &[T],
    hi: &[T],
    extra: &[(Vec<(usize, T)>, Sense, T)],
    config: &SolverConfig<T>,
) -> Option<Vec<T>> {
    let half = T::real(0.5);
    if extra.is_empty() {
        return Some(lo.iter().zip(hi).map(|(&a, &b)| (a + b) * half).collect());
    }
    let mut m = MipModel::<T>::new();
    for i in 0..lo.len() {
        m.add_var(
            format!("w{}", i + 1),
            Some(lo[i]),
            Some(hi[i]),
            Integrality::Continuous,
            None,
        );
    }
    for (k, (row, sense, rhs)) in extra.iter().enumerate() {
        m.add_constraint(format!("c{}", k), row.clone(), *sense, *rhs);
    }
    let r = solve_lp(&m, config);
    (r.status == Status::Optimal).then(|| r.values)
}

/// Ensemble value on the closed cell with the given upper corner: descend
/// each tree going left iff the cell lies (weakly) below the threshold.
fn cell_value<T: Scalar>(ensemble: &TreeEnsemble<T>, cell_hi: &[T]) -> T {
    ensemble
        .trees
        .iter()
        .zip(&ensemble.weights)
        .map(|(tree, &wt)| {
            let mut node = tree.root;
            loop {
                match &tree.nodes[node] {
                    Node::Leaf { score } => return wt * *score,
                    Node::Split { feature, threshold, left, right } => {
                        node = if cell_hi[*feature] <= *threshold { *left } else { *right };
                    }
                }
            }
        })
        .sum()
}

// ---------------------------------------------------------------------------
// Relaxation gap
// ---------------------------------------------------------------------------

/// Denominator guard for near-zero optima.
pub const GAP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub formulation: String,
    pub lp_bound: f64,
    pub mip_opt: f64,
    pub gap_percent: f64,
    pub mip_status: String,
    pub lp_status: String,
    pub nodes: usize,
    pub lp_iterations: usize,
}

pub fn gap_percent(lp_bound: f64, mip_opt: f64) -> f64 {
    100.0 * (lp_bound - mip_opt) / mip_opt.abs().max(GAP_EPS)
}

/// Build the formulation, solve MIP and LP relaxation for `max y`, report.
pub fn relaxation_gap<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
    kind: FormulationKind,
    opts: &BuildOptions<T>,
    config: &SolverConfig<T>,
) -> Result<GapReport, AnalysisError> {
    let mut m = build(kind, ensemble, index, opts).map_err(|e| AnalysisError::Solver(e.to_string()))?;
    set_objective(&mut m, Objective::MaxY).map_err(|e| AnalysisError::Solver(e.to_string()))?;
    let mip = solve_mip(&m, config);
    let lp = solve_lp(&crate::model::relax(&m), config);
    Ok(GapReport {
        formulation: kind.name().to_string(),
        lp_bound: lp.objective.to_f64_lossy(),
        mip_opt: mip.objective.to_f64_lossy(),
        gap_percent: gap_percent(lp.objective.to_f64_lossy(), mip.objective.to_f64_lossy()),
        mip_status: mip.status.to_string(),
        lp_status: lp.status.to_string(),
        nodes: mip.node_count,
        lp_iterations: mip.lp_iterations + lp.lp_iterations,
    })
}

// ---------------------------------------------------------------------------
// Containment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ContainmentReport {
    /// `(constraint name, max violation over the inner polytope)`.
    pub rows: Vec<(String, f64)>,
    pub max_violation: f64,
}

impl ContainmentReport {
    pub fn contained(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// For each constraint of `outer`, optimize its left-hand side over the LP
/// relaxation of `inner` (variables matched by role) and report how far the
/// constraint can be violated. All violations ≤ tol certifies
/// `inner ⊆ outer` row-wise.
pub fn check_containment<T: Scalar>(
    inner: &MipModel<T>,
    outer: &MipModel<T>,
    config: &SolverConfig<T>,
) -> Result<ContainmentReport, AnalysisError> {
    let relaxed = crate::model::relax(inner);
    let map_row = |row: &[(usize, T)]| -> Result<Vec<(usize, T)>, AnalysisError> {
        row.iter()
            .map(|&(v, c)| {
                let role = outer.variables[v].role.ok_or_else(|| {
                    AnalysisError::RoleMismatch(format!(
                        "outer variable {} has no role",
                        outer.variables[v].name
                    ))
                })?;
                let iv = inner.find_role(role).ok_or_else(|| {
                    AnalysisError::RoleMismatch(format!("inner model lacks role {:?}", role))
                })?;
                Ok((iv, c))
            })
            .collect()
    };
    let optimize = |row: Vec<(usize, T)>, sense: ObjSense| -> Result<f64, AnalysisError> {
        let mut m = relaxed.clone();
        m.set_objective(sense, row);
        let r = solve_lp(&m, config);
        match r.status {
            Status::Optimal => Ok(r.objective.to_f64_lossy()),
            s => Err(AnalysisError::Solver(format!("containment LP ended {}", s))),
        }
    };
    let mut rows = Vec::with_capacity(outer.constraints.len());
    let mut worst = f64::NEG_INFINITY;
    for cst in &outer.constraints {
        let row = map_row(&cst.row)?;
        let rhs = cst.rhs.to_f64_lossy();
        let viol = match cst.sense {
            Sense::Le => optimize(row, ObjSense::Maximize)? - rhs,
            Sense::Ge => rhs - optimize(row, ObjSense::Minimize)?,
            Sense::Eq => {
                let hi = optimize(row.clone(), ObjSense::Maximize)? - rhs;
                let lo = rhs - optimize(row, ObjSense::Minimize)?;
                hi.max(lo)
            }
        };
        worst = worst.max(viol);
        rows.push((cst.name.clone(), viol));
    }
    Ok(ContainmentReport { rows, max_violation: worst })
}

// ---------------------------------------------------------------------------
// Integrality probe
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub objectives: usize,
    /// Objectives whose LP optimum put a checked variable off {0,1}.
    pub fractional: usize,
    pub max_deviation: f64,
}

/// Solve the LP relaxation for `n` random objectives (coefficients uniform in
/// [-1,1] over all free variables) and count optima where any of the checked
/// variables sits farther than `int_tol` from {0,1}. A nonzero count
/// disproves idealness; zero is supporting evidence only.
pub fn probe_integrality<T: Scalar>(
    model: &MipModel<T>,
    check_vars: &[usize],
    n: usize,
    seed: u64,
    config: &SolverConfig<T>,
) -> Result<ProbeReport, AnalysisError> {
    let relaxed = crate::model::relax(model);
    let mut rng = Pcg64Mcg::new(seed as u128);
    let mut fractional = 0usize;
    let mut max_dev = 0.0f64;
    for _ in 0..n {
        let row: Vec<(usize, T)> = (0..relaxed.variables.len())
            .filter(|&v| !relaxed.is_defined(v))
            .map(|v| (v, T::real(rng.gen_range(-1.0..1.0))))
            .collect();
        let mut m = relaxed.clone();
        m.set_objective(ObjSense::Maximize, row);
        let r = solve_lp(&m, config);
        match r.status {
            Status::Optimal => {
                let dev = check_vars
                    .iter()
                    .map(|&v| {
                        let x = r.values[v].to_f64_lossy();
                        x.abs().min((x - 1.0).abs())
                    })
                    .fold(0.0f64, f64::max);
                max_dev = max_dev.max(dev);
                if dev > config.int_tol.to_f64_lossy() {
                    fractional += 1;
                }
            }
            s => return Err(AnalysisError::Solver(format!("probe LP ended {}", s))),
        }
    }
    Ok(ProbeReport { objectives: n, fractional, max_deviation: max_dev })
}

// ---------------------------------------------------------------------------
// Total unimodularity
// ---------------------------------------------------------------------------

pub const TU_SUBMATRIX_LIMIT: u128 = 10_000_000;

/// Exact check that every square submatrix of order ≤ `max_order` has
/// determinant in {-1, 0, 1}.
pub fn check_tu(matrix: &[Vec<i64>], max_order: usize) -> Result<bool, AnalysisError> {
    let m = matrix.len();
    let n = matrix.first().map(|r| r.len()).unwrap_or(0);
    for (i, row) in matrix.iter().enumerate() {
        for (j, &e) in row.iter().enumerate() {
            if e.abs() > 1 {
                return Err(AnalysisError::EntryRange(i, j));
            }
        }
    }
    let kmax = max_order.min(m).min(n);
    let mut total: u128 = 0;
    for k in 1..=kmax {
        total += binomial(m, k) * binomial(n, k);
        if total > TU_SUBMATRIX_LIMIT {
            return Err(AnalysisError::SizeLimit(total));
        }
    }
    for k in 1..=kmax {
        let mut ok = true;
        for_each_combination(m, k, &mut |rows| {
            if !ok {
                return;
            }
            for_each_combination(n, k, &mut |cols| {
                if !ok {
                    return;
                }
                let det = int_det(matrix, rows, cols);
                if det.abs() > 1 {
                    ok = false;
                }
            });
        });
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn for_each_combination(n: usize, k: usize, f: &mut dyn FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // Next lexicographic combination.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact determinant of the selected submatrix by fraction-free (Bareiss)
/// elimination in `i128`.
fn int_det(matrix: &[Vec<i64>], rows: &[usize], cols: &[usize]) -> i128 {
    let k = rows.len();
    let mut a: Vec<Vec<i128>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| matrix[r][c] as i128).collect())
        .collect();
    let mut sign: i128 = 1;
    let mut prev: i128 = 1;
    for p in 0..k {
        if a[p][p] == 0 {
            match (p + 1..k).find(|&r| a[r][p] != 0) {
                Some(r) => {
                    a.swap(p, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for r in p + 1..k {
            for c in p + 1..k {
                a[r][c] = (a[r][c] * a[p][p] - a[r][p] * a[p][c]) / prev;
            }
            a[r][p] = 0;
        }
        prev = a[p][p];
    }
    sign * a[k - 1][k - 1]
}

/// The ordered equality system of the expanded-set formulation for a 1-D
/// ensemble: one `sum_{below(s)} z - x_s = 0` row per pooled threshold
/// (ascending), then the `x_j <= x_{j+1}` ordering rows. Columns are the
/// leaves of each tree (ascending) followed by the `x` ranks.
pub fn expset_equality_matrix_1d<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
) -> Result<Vec<Vec<i64>>, AnalysisError> {
    if ensemble.num_features != 1 {
        return Err(AnalysisError::Dimension(format!(
            "expected a single feature, got {}",
            ensemble.num_features
        )));
    }
    let k = index.thresholds[0].len();
    let mut z_offset = Vec::with_capacity(ensemble.trees.len());
    let mut ncols = 0usize;
    for leaves in &index.leaves {
        z_offset.push(ncols);
        ncols += leaves.len();
    }
    let x_offset = ncols;
    ncols += k;

    let mut rows = Vec::new();
    for rank in 1..=k {
        for (t, splits) in index.splits.iter().enumerate() {
            for s in splits.iter().filter(|s| s.rank == rank) {
                let mut row = vec![0i64; ncols];
                for &l in &s.below {
                    row[z_offset[t] + l] = 1;
                }
                row[x_offset + rank - 1] = -1;
                rows.push(row);
            }
        }
    }
    for j in 1..k {
        let mut row = vec![0i64; ncols];
        row[x_offset + j - 1] = -1;
        row[x_offset + j] = 1;
        rows.push(row);
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Nested-split implication
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Lemma2Report {
    pub covering_holds: bool,
    /// Max violation of the nested-split row over the weaker polytope plus
    /// the two expanded-set hypothesis rows.
    pub max_violation: f64,
    pub implied: bool,
}

/// Check whether the two expanded-set rows of a nested same-feature split
/// pair imply the corresponding nested-split (elbow) row over the weaker
/// relaxation. `s` and `s_parent` index into `index.splits[tree]`;
/// `s_parent` must be in `right_parent(s)` or `left_parent(s)`.
pub fn check_implication_lemma2<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
    tree: usize,
    s: usize,
    s_parent: usize,
    config: &SolverConfig<T>,
) -> Result<Lemma2Report, AnalysisError> {
    let splits = &index.splits[tree];
    let si = &splits[s];
    let pi = &splits[s_parent];
    let in_right = si.right_parent.contains(&s_parent);
    let in_left = si.left_parent.contains(&s_parent);
    if !in_right && !in_left {
        return Err(AnalysisError::NotNested(format!(
            "split {} is not a same-feature ancestor of split {}",
            s_parent, s
        )));
    }

    let num_leaves = index.leaves[tree].len();
    let covered = |a: &[usize], b: &[usize]| {
        let mut seen = vec![false; num_leaves];
        for &l in a.iter().chain(b) {
            seen[l] = true;
        }
        seen.into_iter().all(|x| x)
    };
    // Hypothesis rows, covering sets, and the implied row depend on the side.
    let (below_split, above_split, covering, implied_set) = if in_right {
        (pi, si, covered(&pi.below, &si.above), &si.right)
    } else {
        (si, pi, covered(&si.below, &pi.above), &si.left)
    };

    let mut m = crate::model::relax(&crate::formulations::build_misic(ensemble, index));
    let xvar = |m: &MipModel<T>, info: &crate::tree::SplitInfo<T>| {
        m.find_role(VarRole::Threshold { feature: info.feature, rank: info.rank })
            .expect("threshold role present")
    };
    let zvar = |m: &MipModel<T>, l: usize| {
        m.find_role(VarRole::Leaf { tree, leaf: l }).expect("leaf role present")
    };
    let mut row: Vec<(usize, T)> = below_split
        .below
        .iter()
        .map(|&l| (zvar(&m, l), T::one()))
        .collect();
    row.push((xvar(&m, below_split), -T::one()));
    m.add_constraint("hyp_below", row, Sense::Le, T::zero());
    let mut row: Vec<(usize, T)> = above_split
        .above
        .iter()
        .map(|&l| (zvar(&m, l), T::one()))
        .collect();
    row.push((xvar(&m, above_split), T::one()));
    m.add_constraint("hyp_above", row, Sense::Le, T::one());

    // Maximize the violation of the nested-split row. For s' in
    // right_parent(s): sum_{right(s)} z - x_{s'} + x_s; mirrored otherwise.
    let mut obj: Vec<(usize, T)> = implied_set
        .iter()
        .map(|&l| (zvar(&m, l), T::one()))
        .collect();
    if in_right {
        obj.push((xvar(&m, si), T::one()));
        obj.push((xvar(&m, pi), -T::one()));
    } else {
        obj.push((xvar(&m, si), -T::one()));
        obj.push((xvar(&m, pi), T::one()));
    }
    m.set_objective(ObjSense::Maximize, obj);
    let r = solve_lp(&m, config);
    if r.status != Status::Optimal {
        return Err(AnalysisError::Solver(format!("implication LP ended {}", r.status)));
    }
    let max_violation = r.objective.to_f64_lossy();
    Ok(Lemma2Report {
        covering_holds: covering,
        max_violation,
        implied: max_violation <= config.feas_tol.to_f64_lossy(),
    })
}

/// All nested same-feature pairs `(s, s_parent)` of one tree.
pub fn nested_pairs<T: Scalar>(index: &SplitIndex<T>, tree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (s, info) in index.splits[tree].iter().enumerate() {
        for &p in info.right_parent.iter().chain(&info.left_parent) {
            out.push((s, p));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Sharpness (1-D)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct SharpnessReport {
    pub in_projection: bool,
    pub in_hull: bool,
}

/// For a single-feature ensemble: whether `(w0, y0)` lies in the projection
/// of the relaxed formulation, and whether it lies in the exact convex hull
/// of the prediction graph's breakpoints.
pub fn check_sharpness_1d<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
    kind: FormulationKind,
    point: (T, T),
    config: &SolverConfig<T>,
) -> Result<SharpnessReport, AnalysisError> {
    if ensemble.num_features != 1 {
        return Err(AnalysisError::Dimension(format!(
            "sharpness check requires d = 1, got {}",
            ensemble.num_features
        )));
    }
    let (w0, y0) = point;

    // Membership in the projection: fix w = w0 and y = y0 in the relaxation.
    let m = build(kind, ensemble, index, &BuildOptions::default())
        .map_err(|e| AnalysisError::Solver(e.to_string()))?;
    let mut m = crate::model::relax(&m);
    let wv = m
        .find_role(VarRole::Feature(0))
        .ok_or_else(|| AnalysisError::RoleMismatch("formulation has no w variable".into()))?;
    m.variables[wv].lower = Some(w0);
    m.variables[wv].upper = Some(w0);
    let y = m.find_role(VarRole::Output).expect("output role");
    // y is definitional: pin it via its substituted expression.
    let (yrow, yconst) = m.substitute(&[(y, T::one())]);
    m.add_constraint("fix_y", yrow, Sense::Eq, y0 - yconst);
    let r = solve_lp(&m, config);
    let in_projection = match r.status {
        Status::Optimal => true,
        Status::Infeasible => false,
        s => return Err(AnalysisError::Solver(format!("projection LP ended {}", s))),
    };

    // Exact hull of the graph breakpoints.
    let (lb, ub) = ensemble.domain[0];
    let mut bounds = vec![lb];
    bounds.extend(index.thresholds[0].iter().copied());
    bounds.push(ub);
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for cell in bounds.windows(2) {
        let v = cell_value(ensemble, &[cell[1]]).to_f64_lossy();
        pts.push((cell[0].to_f64_lossy(), v));
        pts.push((cell[1].to_f64_lossy(), v));
    }
    let hull = convex_hull(pts);
    let in_hull = point_in_hull(&hull, (w0.to_f64_lossy(), y0.to_f64_lossy()), 1e-9);
    Ok(SharpnessReport { in_projection, in_hull })
}

/// Andrew's monotone chain; returns the hull in counter-clockwise order.
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Point-in-convex-polygon with boundary inclusive up to `tol`.
fn point_in_hull(hull: &[(f64, f64)], p: (f64, f64), tol: f64) -> bool {
    match hull.len() {
        0 => false,
        1 => (p.0 - hull[0].0).abs() <= tol && (p.1 - hull[0].1).abs() <= tol,
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            cross.abs() <= tol * len.max(1.0)
                && p.0 >= a.0.min(b.0) - tol
                && p.0 <= a.0.max(b.0) + tol
                && p.1 >= a.1.min(b.1) - tol
                && p.1 <= a.1.max(b.1) + tol
        }
        _ => (0..hull.len()).all(|i| {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= -tol
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{gen_triangle_data, example_fixture, train_cart, train_forest};
    use crate::formulations::{attach_constraints, build_expset, build_misic};
    use crate::tree::{build_split_index, DecisionTree};

    fn cfg() -> SolverConfig<f64> {
        SolverConfig::default()
    }

    #[test]
    fn oracle_ex3_peak() {
        let fx = example_fixture::<f64>("ex3").unwrap();
        let index = build_split_index(&fx.ensemble);
        let r = oracle_optimum(&fx.ensemble, &index, &[], ObjSense::Maximize, &cfg()).unwrap();
        assert!((r.value - 3.5).abs() < 1e-12);
        assert!(r.w[0] > 2.0 && r.w[0] <= 3.0);
        assert_eq!(r.cells_total, 3);
    }

    #[test]
    fn oracle_single_leaf() {
        let e = crate::tree::TreeEnsemble::new(
            vec![DecisionTree::leaf(7.0)],
            1,
            vec![(0.0, 1.0)],
        )
        .unwrap();
        let index = build_split_index(&e);
        let r = oracle_optimum(&e, &index, &[], ObjSense::Maximize, &cfg()).unwrap();
        assert_eq!(r.value, 7.0);
    }

    #[test]
    fn oracle_ex4_constrained() {
        let fx = example_fixture::<f64>("ex4").unwrap();
        let index = build_split_index(&fx.ensemble);
        let r = oracle_optimum(
            &fx.ensemble,
            &index,
            &fx.extra_constraints,
            ObjSense::Maximize,
            &cfg(),
        )
        .unwrap();
        assert_eq!(r.cells_total, 4);
        assert_eq!(r.cells_feasible, 3);
        assert!((r.value - 3.0).abs() < 1e-12);
        assert!(r.w[0] + r.w[1] <= 3.0 + 1e-9);
    }

    #[test]
    fn gap_zero_for_ideal_cases() {
        let fx = example_fixture::<f64>("ex1").unwrap();
        let index = build_split_index(&fx.ensemble);
        let g = relaxation_gap(
            &fx.ensemble,
            &index,
            FormulationKind::Projected,
            &BuildOptions::default(),
            &cfg(),
        )
        .unwrap();
        assert!(g.gap_percent.abs() < 1e-6);

        // 1-D ensemble: the expanded-set relaxation is integral.
        let data = gen_triangle_data::<f64>(1, 25, true, 3);
        let forest = train_forest(&data, 4, 3, 5).unwrap();
        let index = build_split_index(&forest);
        let g = relaxation_gap(
            &forest,
            &index,
            FormulationKind::Expset,
            &BuildOptions::default(),
            &cfg(),
        )
        .unwrap();
        assert!(g.gap_percent.abs() < 1e-6, "expset 1-D gap {}", g.gap_percent);
    }

    #[test]
    fn containment_fig3a() {
        let fx = example_fixture::<f64>("fig3a").unwrap();
        let index = build_split_index(&fx.ensemble);
        let misic = build_misic(&fx.ensemble, &index);
        let expset = build_expset(&fx.ensemble, &index);
        let fwd = check_containment(&expset, &misic, &cfg()).unwrap();
        assert!(fwd.contained(1e-7), "expset should sit inside misic: {:?}", fwd.max_violation);
        let rev = check_containment(&misic, &expset, &cfg()).unwrap();
        assert!(rev.max_violation > 1e-4, "strict containment expected, got {}", rev.max_violation);
        let refl = check_containment(&misic, &misic, &cfg()).unwrap();
        assert!(refl.contained(1e-7));
    }

    #[test]
    fn probe_projected_single_tree_integral() {
        let data = gen_triangle_data::<f64>(2, 30, true, 9);
        let tree = train_cart(&data, 3, 2).unwrap();
        let e = crate::tree::TreeEnsemble::new(vec![tree], 2, vec![(-1.0, 1.0); 2]).unwrap();
        let index = build_split_index(&e);
        let m = crate::formulations::build_projected(&e, &index);
        let zs: Vec<usize> = m.binaries().collect();
        let r = probe_integrality(&m, &zs, 50, 11, &cfg()).unwrap();
        assert_eq!(r.fractional, 0, "max deviation {}", r.max_deviation);
    }

    #[test]
    fn tu_small_matrices() {
        assert!(check_tu(&[vec![1, -1], vec![0, 1]], 2).unwrap());
        assert!(!check_tu(&[vec![1, 1], vec![-1, 1]], 2).unwrap());
        assert!(matches!(
            check_tu(&[vec![2]], 1),
            Err(AnalysisError::EntryRange(0, 0))
        ));
    }

    #[test]
    fn tu_expset_matrix_1d() {
        let data = gen_triangle_data::<f64>(1, 20, true, 21);
        let forest = train_forest(&data, 2, 2, 3).unwrap();
        let index = build_split_index(&forest);
        let a = expset_equality_matrix_1d(&forest, &index).unwrap();
        assert!(check_tu(&a, 9).unwrap());
    }

    #[test]
    fn tu_matrix_requires_1d() {
        let fx = example_fixture::<f64>("ex4").unwrap();
        let index = build_split_index(&fx.ensemble);
        assert!(matches!(
            expset_equality_matrix_1d(&fx.ensemble, &index),
            Err(AnalysisError::Dimension(_))
        ));
    }

    #[test]
    fn lemma2_implied_on_nested_1d() {
        let fx = example_fixture::<f64>("elbow_segment").unwrap();
        let index = build_split_index(&fx.ensemble);
        let pairs = nested_pairs(&index, 0);
        assert_eq!(pairs.len(), 1);
        let (s, p) = pairs[0];
        let r = check_implication_lemma2(&fx.ensemble, &index, 0, s, p, &cfg()).unwrap();
        assert!(r.covering_holds);
        assert!(r.implied, "violation {}", r.max_violation);
    }

    #[test]
    fn lemma2_fails_on_fig3b() {
        let fx = example_fixture::<f64>("fig3b").unwrap();
        let index = build_split_index(&fx.ensemble);
        let pairs = nested_pairs(&index, 0);
        assert_eq!(pairs.len(), 1);
        let (s, p) = pairs[0];
        let r = check_implication_lemma2(&fx.ensemble, &index, 0, s, p, &cfg()).unwrap();
        assert!(!r.covering_holds);
        assert!(r.max_violation > 1e-4, "violation {}", r.max_violation);
    }

    #[test]
    fn lemma2_not_nested() {
        let fx = example_fixture::<f64>("fig3a").unwrap();
        let index = build_split_index(&fx.ensemble);
        // The two w2 splits sit in different subtrees: not nested.
        let splits = &index.splits[0];
        let a = splits.iter().position(|s| s.feature == 1 && s.threshold == 2.0).unwrap();
        let b = splits.iter().position(|s| s.feature == 1 && s.threshold == 5.0).unwrap();
        assert!(matches!(
            check_implication_lemma2(&fx.ensemble, &index, 0, a, b, &cfg()),
            Err(AnalysisError::NotNested(_))
        ));
    }

    #[test]
    fn sharpness_ex3_points() {
        let fx = example_fixture::<f64>("ex3").unwrap();
        let index = build_split_index(&fx.ensemble);
        let r = check_sharpness_1d(&fx.ensemble, &index, FormulationKind::Projected, (1.0, 3.25), &cfg())
            .unwrap();
        assert!(r.in_projection && !r.in_hull);
        let r = check_sharpness_1d(&fx.ensemble, &index, FormulationKind::Projected, (2.5, 3.5), &cfg())
            .unwrap();
        assert!(r.in_projection && r.in_hull);
        let r = check_sharpness_1d(&fx.ensemble, &index, FormulationKind::Projected, (1.0, 99.0), &cfg())
            .unwrap();
        assert!(!r.in_projection && !r.in_hull);
    }

    #[test]
    fn mip_matches_oracle_with_constraint() {
        let fx = example_fixture::<f64>("ex4").unwrap();
        let index = build_split_index(&fx.ensemble);
        let mut m = crate::formulations::build_projected(&fx.ensemble, &index);
        attach_constraints(&mut m, &fx.extra_constraints).unwrap();
        set_objective(&mut m, Objective::MaxY).unwrap();
        let r = solve_mip(&m, &cfg());
        let oracle = oracle_optimum(
            &fx.ensemble,
            &index,
            &fx.extra_constraints,
            ObjSense::Maximize,
            &cfg(),
        )
        .unwrap();
        assert!((r.objective - oracle.value).abs() < 1e-6);
    }
}
