//! Builders turning a `TreeEnsemble` + `SplitIndex` into each of the MIP
//! formulations.
//!
//! Two families exist. The binary-x family (`misic`, `expset`, `elbow`,
//! `expset_elbow`) works in threshold-indicator space and shares the `x`
//! variable layout; it carries no `w` variables, so user constraints over `w`
//! cannot be attached to it. The w-family (`union_ext`, `projected`, `facet`,
//! `bigm`) keeps the features as decision variables.
//!
//! Output accessors `y` (and `y_t` for ensembles) are definitional
//! substitutions, not constraint rows: see [`MipModel::add_definition`].

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{Dir, Integrality, MipModel, ObjSense, Sense, VarRole};
use crate::scalar::Scalar;
use crate::tree::{Node, SplitIndex, TreeEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormulationKind {
    Misic,
    Bigm,
    UnionExt,
    Projected,
    Facet,
    Expset,
    Elbow,
    ExpsetElbow,
}

impl FormulationKind {
    pub const ALL: [FormulationKind; 8] = [
        FormulationKind::Misic,
        FormulationKind::Bigm,
        FormulationKind::UnionExt,
        FormulationKind::Projected,
        FormulationKind::Facet,
        FormulationKind::Expset,
        FormulationKind::Elbow,
        FormulationKind::ExpsetElbow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormulationKind::Misic => "misic",
            FormulationKind::Bigm => "bigm",
            FormulationKind::UnionExt => "union_ext",
            FormulationKind::Projected => "projected",
            FormulationKind::Facet => "facet",
            FormulationKind::Expset => "expset",
            FormulationKind::Elbow => "elbow",
            FormulationKind::ExpsetElbow => "expset_elbow",
        }
    }

    /// Whether the formulation exposes `w` as decision variables.
    pub fn has_w(self) -> bool {
        matches!(
            self,
            FormulationKind::Bigm
                | FormulationKind::UnionExt
                | FormulationKind::Projected
                | FormulationKind::Facet
        )
    }
}

impl fmt::Display for FormulationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormulationKind {
    type Err = FormulationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FormulationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| FormulationError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("unknown formulation kind {0:?}")]
    UnknownKind(String),
    #[error("operation unsupported for this formulation: {0}")]
    UnsupportedFormulation(String),
    #[error("domain must be bounded: {0}")]
    UnboundedDomain(String),
    #[error("model does not match ensemble: {0}")]
    Mismatch(String),
}

/// Knobs for [`build`]. `bigm` replaces the per-constraint tightest M with a
/// fixed value (only meaningful for the big-M formulation).
#[derive(Debug, Clone)]
pub struct BuildOptions<T> {
    pub bigm: Option<T>,
}

impl<T> Default for BuildOptions<T> {
    fn default() -> Self {
        BuildOptions { bigm: None }
    }
}

/// Build any formulation of the ensemble.
pub fn build<T: Scalar>(
    kind: FormulationKind,
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
    opts: &BuildOptions<T>,
) -> Result<MipModel<T>, FormulationError> {
    Ok(match kind {
        FormulationKind::Misic => build_misic(ensemble, index),
        FormulationKind::Expset => build_expset(ensemble, index),
        FormulationKind::Elbow => add_elbow(build_misic(ensemble, index), index)?,
        FormulationKind::ExpsetElbow => add_elbow(build_expset(ensemble, index), index)?,
        FormulationKind::UnionExt => build_union_ext(ensemble, index),
        FormulationKind::Projected => build_projected(ensemble, index),
        FormulationKind::Facet => build_facet(ensemble, index),
        FormulationKind::Bigm => build_bigm(ensemble, opts.bigm)?,
    })
}

// ---------------------------------------------------------------------------
// Shared pieces
// ---------------------------------------------------------------------------

/// Add per-tree leaf indicators `z` with the choose-one row.
fn add_leaf_vars<T: Scalar>(
    m: &mut MipModel<T>,
    index: &SplitIndex<T>,
    integrality: Integrality,
) -> Vec<Vec<usize>> {
    let mut z = Vec::with_capacity(index.leaves.len());
    for (t, leaves) in index.leaves.iter().enumerate() {
        let mut zt = Vec::with_capacity(leaves.len());
        for l in 0..leaves.len() {
            zt.push(m.add_var(
                format!("z{}_{}", t + 1, l + 1),
                Some(T::zero()),
                Some(T::one()),
                integrality,
                Some(VarRole::Leaf { tree: t, leaf: l }),
            ));
        }
        m.add_constraint(
            format!("one{}", t + 1),
            zt.iter().map(|&v| (v, T::one())).collect(),
            Sense::Eq,
            T::one(),
        );
        z.push(zt);
    }
    z
}

/// Add `w` variables bounded by the domain.
fn add_w_vars<T: Scalar>(m: &mut MipModel<T>, ensemble: &TreeEnsemble<T>) -> Vec<usize> {
    ensemble
        .domain
        .iter()
        .enumerate()
        .map(|(i, &(lb, ub))| {
            m.add_var(
                format!("w{}", i + 1),
                Some(lb),
                Some(ub),
                Integrality::Continuous,
                Some(VarRole::Feature(i)),
            )
        })
        .collect()
}

/// Define the outputs: per-tree `y_t` (skipped for a single tree unless
/// `always_tree_outputs`) and the weighted ensemble output `y`.
fn add_outputs<T: Scalar>(
    m: &mut MipModel<T>,
    ensemble: &TreeEnsemble<T>,
    per_tree: Vec<(Vec<(usize, T)>, T)>,
    always_tree_outputs: bool,
) {
    let nt = ensemble.trees.len();
    if nt == 1 && !always_tree_outputs {
        let (row, constant) = per_tree.into_iter().next().unwrap();
        let y = m.add_var("y", None, None, Integrality::Continuous, Some(VarRole::Output));
        let w0 = ensemble.weights[0];
        m.add_definition(y, row.into_iter().map(|(v, c)| (v, w0 * c)).collect(), w0 * constant);
        return;
    }
    let mut yrow = Vec::with_capacity(nt);
    for (t, (row, constant)) in per_tree.into_iter().enumerate() {
        let yt = m.add_var(
            format!("yt{}", t + 1),
            None,
            None,
            Integrality::Continuous,
            Some(VarRole::TreeOutput(t)),
        );
        m.add_definition(yt, row, constant);
        yrow.push((yt, ensemble.weights[t]));
    }
    let y = m.add_var("y", None, None, Integrality::Continuous, Some(VarRole::Output));
    m.add_definition(y, yrow, T::zero());
}

fn leaf_score_row<T: Scalar>(index: &SplitIndex<T>, t: usize, z: &[usize]) -> (Vec<(usize, T)>, T) {
    (
        index.leaves[t]
            .iter()
            .zip(z)
            .map(|(lb, &v)| (v, lb.score))
            .collect(),
        T::zero(),
    )
}

// ---------------------------------------------------------------------------
// Binary-x family
// ---------------------------------------------------------------------------

fn build_x_family<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
    expanded: bool,
) -> MipModel<T> {
    let mut m = MipModel::new();
    let z = add_leaf_vars(&mut m, index, Integrality::Continuous);

    // Shared threshold indicators, one per pooled (feature, rank).
    let mut x: Vec<Vec<usize>> = Vec::with_capacity(index.thresholds.len());
    for (i, ts) in index.thresholds.iter().enumerate() {
        x.push(
            (1..=ts.len())
                .map(|j| {
                    m.add_binary(
                        format!("x{}_{}", i + 1, j),
                        Some(VarRole::Threshold { feature: i, rank: j }),
                    )
                })
                .collect(),
        );
    }

    for (t, splits) in index.splits.iter().enumerate() {
        for (si, s) in splits.iter().enumerate() {
            let xs = x[s.feature][s.rank - 1];
            let (lo_set, hi_set, lo_name, hi_name) = if expanded {
                (&s.below, &s.above, "below", "above")
            } else {
                (&s.left, &s.right, "left", "right")
            };
            let mut row: Vec<(usize, T)> =
                lo_set.iter().map(|&l| (z[t][l], T::one())).collect();
            row.push((xs, -T::one()));
            m.add_constraint(format!("{}{}_{}", lo_name, t + 1, si + 1), row, Sense::Le, T::zero());
            let mut row: Vec<(usize, T)> =
                hi_set.iter().map(|&l| (z[t][l], T::one())).collect();
            row.push((xs, T::one()));
            m.add_constraint(format!("{}{}_{}", hi_name, t + 1, si + 1), row, Sense::Le, T::one());
        }
    }

    // Threshold ordering within each feature.
    for (i, xi) in x.iter().enumerate() {
        for j in 1..xi.len() {
            m.add_constraint(
                format!("ord{}_{}", i + 1, j),
                vec![(xi[j - 1], T::one()), (xi[j], -T::one())],
                Sense::Le,
                T::zero(),
            );
        }
    }

    let per_tree = (0..ensemble.trees.len())
        .map(|t| leaf_score_row(index, t, &z[t]))
        .collect();
    add_outputs(&mut m, ensemble, per_tree, false);
    m
}

pub fn build_misic<T: Scalar>(ensemble: &TreeEnsemble<T>, index: &SplitIndex<T>) -> MipModel<T> {
    build_x_family(ensemble, index, false)
}

pub fn build_expset<T: Scalar>(ensemble: &TreeEnsemble<T>, index: &SplitIndex<T>) -> MipModel<T> {
    build_x_family(ensemble, index, true)
}

/// Strengthen a binary-x model with the nested-split rows: for every split
/// `s` and same-feature ancestor `s'` holding `s` in its left subtree,
/// `sum_{right(s)} z <= x_{s'} - x_s`, and the mirror image for ancestors
/// holding `s` in their right subtree.
pub fn add_elbow<T: Scalar>(
    mut base: MipModel<T>,
    index: &SplitIndex<T>,
) -> Result<MipModel<T>, FormulationError> {
    let xvar = |s: &crate::tree::SplitInfo<T>| {
        base.find_role(VarRole::Threshold {
            feature: s.feature,
            rank: s.rank,
        })
        .ok_or_else(|| {
            FormulationError::Mismatch(format!(
                "missing threshold variable for feature {} rank {}",
                s.feature + 1,
                s.rank
            ))
        })
    };
    let zvar = |t: usize, l: usize| {
        base.find_role(VarRole::Leaf { tree: t, leaf: l })
            .ok_or_else(|| {
                FormulationError::Mismatch(format!("missing leaf variable {} of tree {}", l + 1, t + 1))
            })
    };
    let mut rows = Vec::new();
    for (t, splits) in index.splits.iter().enumerate() {
        for (si, s) in splits.iter().enumerate() {
            let xs = xvar(s)?;
            for (k, &anc) in s.right_parent.iter().enumerate() {
                let xa = xvar(&splits[anc])?;
                let mut row: Vec<(usize, T)> = s
                    .right
                    .iter()
                    .map(|&l| zvar(t, l).map(|v| (v, T::one())))
                    .collect::<Result<_, _>>()?;
                row.push((xs, T::one()));
                row.push((xa, -T::one()));
                rows.push((format!("elbr{}_{}_{}", t + 1, si + 1, k + 1), row));
            }
            for (k, &anc) in s.left_parent.iter().enumerate() {
                let xa = xvar(&splits[anc])?;
                let mut row: Vec<(usize, T)> = s
                    .left
                    .iter()
                    .map(|&l| zvar(t, l).map(|v| (v, T::one())))
                    .collect::<Result<_, _>>()?;
                row.push((xs, -T::one()));
                row.push((xa, T::one()));
                rows.push((format!("elbl{}_{}_{}", t + 1, si + 1, k + 1), row));
            }
        }
    }
    for (name, row) in rows {
        base.add_constraint(name, row, Sense::Le, T::zero());
    }
    Ok(base)
}

// ---------------------------------------------------------------------------
// w-family
// ---------------------------------------------------------------------------

/// Multiple-choice union of the leaf boxes, with per-leaf copies of `w`.
pub fn build_union_ext<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
) -> MipModel<T> {
    let mut m = MipModel::new();
    let w = add_w_vars(&mut m, ensemble);
    let d = ensemble.num_features;
    let z = add_leaf_vars(&mut m, index, Integrality::Binary);

    let mut per_tree = Vec::with_capacity(ensemble.trees.len());
    for (t, leaves) in index.leaves.iter().enumerate() {
        let mut copies: Vec<Vec<usize>> = Vec::with_capacity(leaves.len());
        let mut youts = Vec::with_capacity(leaves.len());
        for (l, lb) in leaves.iter().enumerate() {
            let row: Vec<usize> = (0..d)
                .map(|i| {
                    m.add_var(
                        format!("wl{}_{}_{}", t + 1, l + 1, i + 1),
                        Some(lb.lower[i].min(T::zero())),
                        Some(lb.upper[i].max(T::zero())),
                        Integrality::Continuous,
                        Some(VarRole::LeafCopy { tree: t, leaf: l, feature: i }),
                    )
                })
                .collect();
            youts.push(m.add_var(
                format!("yl{}_{}", t + 1, l + 1),
                None,
                None,
                Integrality::Continuous,
                Some(VarRole::LeafOutput { tree: t, leaf: l }),
            ));
            copies.push(row);
        }
        for (l, lb) in leaves.iter().enumerate() {
            for i in 0..d {
                m.add_constraint(
                    format!("uu{}_{}_{}", t + 1, l + 1, i + 1),
                    vec![(copies[l][i], T::one()), (z[t][l], -lb.upper[i])],
                    Sense::Le,
                    T::zero(),
                );
                m.add_constraint(
                    format!("ul{}_{}_{}", t + 1, l + 1, i + 1),
                    vec![(z[t][l], lb.lower[i]), (copies[l][i], -T::one())],
                    Sense::Le,
                    T::zero(),
                );
            }
            m.add_constraint(
                format!("score{}_{}", t + 1, l + 1),
                vec![(youts[l], T::one()), (z[t][l], -lb.score)],
                Sense::Eq,
                T::zero(),
            );
        }
        for (i, &wi) in w.iter().enumerate() {
            let mut row: Vec<(usize, T)> = copies.iter().map(|c| (c[i], T::one())).collect();
            row.push((wi, -T::one()));
            m.add_constraint(format!("agg{}_{}", t + 1, i + 1), row, Sense::Eq, T::zero());
        }
        per_tree.push((youts.into_iter().map(|v| (v, T::one())).collect(), T::zero()));
    }
    add_outputs(&mut m, ensemble, per_tree, true);
    m
}

/// The union formulation projected onto `w`: per feature, the leaf boxes'
/// corners weighted by `z` bound `w` from both sides.
pub fn build_projected<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    index: &SplitIndex<T>,
) -> MipModel<T> {
    let mut m = MipModel::new();
    let w = add_w_vars(&mut m, ensemble);
    let z = add_leaf_vars(&mut m, index, Integrality::Binary);
    for (t, leaves) in index.leaves.iter().enumerate() {
        for (i, &wi) in w.iter().enumerate() {
            let mut row: Vec<(usize, T)> = leaves
                .iter()
                .zip(&z[t])
                .map(|(lb, &v)| (v, -lb.upper[i]))
                .collect();
            row.push((wi, T::one()));
            m.add_constraint(format!("up{}_{}", t + 1, i + 1), row, Sense::Le, T::zero());
            let mut row: Vec<(usize, T)> = leaves
                .iter()
                .zip(&z[t])
                .map(|(lb, &v)| (v, lb.lower[i]))
                .collect();
            row.push((wi, -T::one()));
            m.add_constraint(format!("lo{}_{}", t + 1, i + 1), row, Sense::Le, T::zero());
        }
    }
    let per_tree = (0..ensemble.trees.len())
        .map(|t| leaf_score_row(index, t, &z[t]))
        .collect();
    add_outputs(&mut m, ensemble, per_tree, false);
    m
}

/// The projected formulation with the last leaf indicator substituted out
/// (`z_p = 1 - sum z_l`), leaving `p - 1` binaries per tree.
pub fn build_facet<T: Scalar>(ensemble: &TreeEnsemble<T>, index: &SplitIndex<T>) -> MipModel<T> {
    let mut m = MipModel::new();
    let w = add_w_vars(&mut m, ensemble);
    let mut per_tree = Vec::with_capacity(ensemble.trees.len());
    for (t, leaves) in index.leaves.iter().enumerate() {
        let p = leaves.len();
        let z: Vec<usize> = (0..p - 1)
            .map(|l| {
                m.add_var(
                    format!("z{}_{}", t + 1, l + 1),
                    Some(T::zero()),
                    Some(T::one()),
                    Integrality::Binary,
                    Some(VarRole::Leaf { tree: t, leaf: l }),
                )
            })
            .collect();
        let last = &leaves[p - 1];
        for (i, &wi) in w.iter().enumerate() {
            let mut row: Vec<(usize, T)> = z
                .iter()
                .zip(leaves)
                .map(|(&v, lb)| (v, -(lb.upper[i] - last.upper[i])))
                .collect();
            row.push((wi, T::one()));
            m.add_constraint(format!("up{}_{}", t + 1, i + 1), row, Sense::Le, last.upper[i]);
            let mut row: Vec<(usize, T)> = z
                .iter()
                .zip(leaves)
                .map(|(&v, lb)| (v, lb.lower[i] - last.lower[i]))
                .collect();
            row.push((wi, -T::one()));
            m.add_constraint(format!("lo{}_{}", t + 1, i + 1), row, Sense::Le, -last.lower[i]);
        }
        // The substitution z_p = 1 - sum z_l keeps z_p >= 0 as a row; without
        // it, integer points with several active leaves would be feasible.
        if !z.is_empty() {
            m.add_constraint(
                format!("pick{}", t + 1),
                z.iter().map(|&v| (v, T::one())).collect(),
                Sense::Le,
                T::one(),
            );
        }
        per_tree.push((
            z.iter()
                .zip(leaves)
                .map(|(&v, lb)| (v, lb.score - last.score))
                .collect(),
            last.score,
        ));
    }
    add_outputs(&mut m, ensemble, per_tree, false);
    m
}

/// Arc-based big-M formulation. Every split node gets two binary child-arc
/// variables; arc flow is conserved down the tree, and an active arc forces
/// `w` to the matching side of the threshold via a big-M row. The default M
/// is the tightest valid one per row; `bigm` overrides it with a fixed value.
pub fn build_bigm<T: Scalar>(
    ensemble: &TreeEnsemble<T>,
    bigm: Option<T>,
) -> Result<MipModel<T>, FormulationError> {
    for (i, &(lb, ub)) in ensemble.domain.iter().enumerate() {
        if !lb.is_finite() || !ub.is_finite() {
            return Err(FormulationError::UnboundedDomain(format!(
                "feature {} has bounds [{}, {}]",
                i + 1,
                lb,
                ub
            )));
        }
    }
    let mut m = MipModel::new();
    let w = add_w_vars(&mut m, ensemble);
    let mut per_tree = Vec::with_capacity(ensemble.trees.len());
    for (t, tree) in ensemble.trees.iter().enumerate() {
        // Arc variables, preorder for determinism.
        let mut arcs: std::collections::HashMap<(usize, Dir), usize> =
            std::collections::HashMap::new();
        let mut order = Vec::new();
        let mut stack = vec![tree.root];
        while let Some(v) = stack.pop() {
            if let Node::Split { left, right, .. } = &tree.nodes[v] {
                order.push(v);
                stack.push(*right);
                stack.push(*left);
            }
        }
        for &v in &order {
            for dir in [Dir::Left, Dir::Right] {
                let suffix = if dir == Dir::Left { "l" } else { "r" };
                let id = m.add_binary(
                    format!("a{}_{}{}", t + 1, v, suffix),
                    Some(VarRole::Arc { tree: t, node: v, dir }),
                );
                arcs.insert((v, dir), id);
            }
        }
        // Flow conservation plus the big-M side constraints.
        let mut entering: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
        let mut score_row = Vec::new();
        for &v in &order {
            let Node::Split { feature, threshold, left, right } = tree.nodes[v] else {
                unreachable!()
            };
            let al = arcs[&(v, Dir::Left)];
            let ar = arcs[&(v, Dir::Right)];
            let flow_row = vec![(al, T::one()), (ar, T::one())];
            match entering.get(&v) {
                None => m.add_constraint(format!("flow{}_{}", t + 1, v), flow_row, Sense::Eq, T::one()),
                Some(&e) => {
                    let mut row = flow_row;
                    row.push((e, -T::one()));
                    m.add_constraint(format!("flow{}_{}", t + 1, v), row, Sense::Eq, T::zero());
                }
            }
            entering.insert(left, al);
            entering.insert(right, ar);
            let (lb, ub) = ensemble.domain[feature];
            // Left arc active => w_i <= theta: w_i + M a <= theta + M.
            let ml = bigm.unwrap_or(ub - threshold);
            m.add_constraint(
                format!("goleft{}_{}", t + 1, v),
                vec![(w[feature], T::one()), (al, ml)],
                Sense::Le,
                threshold + ml,
            );
            // Right arc active => w_i >= theta: w_i - M a >= theta - M.
            let mr = bigm.unwrap_or(threshold - lb);
            m.add_constraint(
                format!("goright{}_{}", t + 1, v),
                vec![(w[feature], T::one()), (ar, -mr)],
                Sense::Ge,
                threshold - mr,
            );
            for child in [left, right] {
                if let Node::Leaf { score } = tree.nodes[child] {
                    score_row.push((entering[&child], score));
                }
            }
        }
        let constant = match tree.nodes[tree.root] {
            Node::Leaf { score } => score,
            _ => T::zero(),
        };
        per_tree.push((score_row, constant));
    }
    add_outputs(&mut m, ensemble, per_tree, false);
    Ok(m)
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

/// Append user constraints over the feature variables. Only the w-family
/// carries feature variables; the binary-x family rejects this.
pub fn attach_constraints<T: Scalar>(
    model: &mut MipModel<T>,
    rows: &[(Vec<(usize, T)>, Sense, T)],
) -> Result<(), FormulationError> {
    if rows.is_empty() {
        return Ok(());
    }
    if model.find_role(VarRole::Feature(0)).is_none() {
        return Err(FormulationError::UnsupportedFormulation(
            "this formulation has no feature variables; constraints over w cannot be attached"
                .to_string(),
        ));
    }
    let start = model.constraints.len();
    for (k, (coeffs, sense, rhs)) in rows.iter().enumerate() {
        let row: Vec<(usize, T)> = coeffs
            .iter()
            .map(|&(i, c)| {
                model
                    .find_role(VarRole::Feature(i))
                    .map(|v| (v, c))
                    .ok_or_else(|| {
                        FormulationError::Mismatch(format!("no feature variable w{}", i + 1))
                    })
            })
            .collect::<Result<_, _>>()?;
        model.add_constraint(format!("user{}", start + k + 1), row, *sense, *rhs);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub enum Objective<T> {
    MaxY,
    MinY,
    Custom(ObjSense, Vec<(usize, T)>),
}

pub fn set_objective<T: Scalar>(
    model: &mut MipModel<T>,
    objective: Objective<T>,
) -> Result<(), FormulationError> {
    match objective {
        Objective::MaxY | Objective::MinY => {
            let y = model
                .find_role(VarRole::Output)
                .ok_or_else(|| FormulationError::Mismatch("model has no output variable".into()))?;
            let sense = if matches!(objective, Objective::MaxY) {
                ObjSense::Maximize
            } else {
                ObjSense::Minimize
            };
            model.set_objective(sense, vec![(y, T::one())]);
        }
        Objective::Custom(sense, row) => model.set_objective(sense, row),
    }
    Ok(())
}
