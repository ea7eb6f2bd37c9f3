//! Decision trees, ensembles, leaf hyperrectangles and split index sets.
//!
//! Trees follow the `w_i <= theta` split convention: evaluation sends a
//! feature value equal to the threshold to the left child. Each leaf maps to
//! an axis-aligned box accumulated along its root-to-leaf path, and every
//! split carries the index sets (`left`, `right`, `below`, `above`,
//! `right_parent`, `left_parent`) that the formulation builders consume.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("point outside feature domain: {0}")]
    OutOfDomain(String),
}

/// A node of a decision tree, stored in an arena indexed by `usize`.
#[derive(Debug, Clone, PartialEq)]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        score: T,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree<T> {
    pub nodes: Vec<Node<T>>,
    pub root: usize,
}

impl<T: Scalar> DecisionTree<T> {
    pub fn leaf(score: T) -> Self {
        DecisionTree {
            nodes: vec![Node::Leaf { score }],
            root: 0,
        }
    }

    /// Number of leaves `p`.
    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Leaf score reached by traversing with ties going left.
    pub fn predict(&self, w: &[T]) -> T {
        let mut node = self.root;
        loop {
            match &self.nodes[node] {
                Node::Leaf { score } => return *score,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if w[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// An ensemble of trees over a bounded box domain, with per-tree weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble<T> {
    pub trees: Vec<DecisionTree<T>>,
    pub num_features: usize,
    pub domain: Vec<(T, T)>,
    pub weights: Vec<T>,
}

impl<T: Scalar> TreeEnsemble<T> {
    /// Build an ensemble with uniform weights `1/T`, validating all invariants.
    pub fn new(
        trees: Vec<DecisionTree<T>>,
        num_features: usize,
        domain: Vec<(T, T)>,
    ) -> Result<Self, ModelError> {
        let t = trees.len();
        let w = T::one() / T::real(t as f64);
        Self::with_weights(trees, num_features, domain, vec![w; t])
    }

    pub fn with_weights(
        trees: Vec<DecisionTree<T>>,
        num_features: usize,
        domain: Vec<(T, T)>,
        weights: Vec<T>,
    ) -> Result<Self, ModelError> {
        let ensemble = TreeEnsemble {
            trees,
            num_features,
            domain,
            weights,
        };
        let diags = ensemble.validate();
        match diags.into_iter().next() {
            None => Ok(ensemble),
            Some(d) => Err(d.into_error()),
        }
    }

    /// Weighted ensemble prediction at `w` (ties at thresholds go left).
    pub fn evaluate(&self, w: &[T]) -> Result<T, ModelError> {
        if w.len() != self.num_features {
            return Err(ModelError::OutOfDomain(format!(
                "point has {} coordinates, ensemble has {} features",
                w.len(),
                self.num_features
            )));
        }
        for (i, (&wi, &(lb, ub))) in w.iter().zip(&self.domain).enumerate() {
            if wi < lb || wi > ub {
                return Err(ModelError::OutOfDomain(format!(
                    "w{} = {} outside [{}, {}]",
                    i + 1,
                    wi,
                    lb,
                    ub
                )));
            }
        }
        Ok(self
            .trees
            .iter()
            .zip(&self.weights)
            .map(|(t, &wt)| wt * t.predict(w))
            .sum())
    }

    /// Diagnostics report: all invariant violations, empty when valid.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        if self.num_features == 0 {
            diags.push(Diagnostic::schema("num_features must be positive"));
        }
        if self.domain.len() != self.num_features {
            diags.push(Diagnostic::schema(format!(
                "domain has {} entries for {} features",
                self.domain.len(),
                self.num_features
            )));
        }
        if self.weights.len() != self.trees.len() {
            diags.push(Diagnostic::schema(format!(
                "{} weights for {} trees",
                self.weights.len(),
                self.trees.len()
            )));
        }
        for (i, &(lb, ub)) in self.domain.iter().enumerate() {
            if !(lb < ub) || !lb.is_finite() || !ub.is_finite() {
                diags.push(Diagnostic::domain(format!(
                    "feature {}: bounds [{}, {}] not a finite interval",
                    i + 1,
                    lb,
                    ub
                )));
            }
        }
        for (t, tree) in self.trees.iter().enumerate() {
            self.validate_tree(t, tree, &mut diags);
        }
        diags
    }

    fn validate_tree(&self, t: usize, tree: &DecisionTree<T>, diags: &mut Vec<Diagnostic>) {
        if tree.root >= tree.nodes.len() {
            diags.push(Diagnostic::structure(format!(
                "tree {}: root {} out of range",
                t, tree.root
            )));
            return;
        }
        // Reachability walk, also detects cycles via a visit mark.
        let mut visited = vec![false; tree.nodes.len()];
        let mut stack = vec![tree.root];
        let mut ok = true;
        while let Some(id) = stack.pop() {
            if id >= tree.nodes.len() {
                diags.push(Diagnostic::structure(format!(
                    "tree {}: child id {} out of range",
                    t, id
                )));
                ok = false;
                continue;
            }
            if visited[id] {
                diags.push(Diagnostic::structure(format!(
                    "tree {}: node {} reached twice (cycle or shared child)",
                    t, id
                )));
                ok = false;
                continue;
            }
            visited[id] = true;
            match &tree.nodes[id] {
                Node::Leaf { score } => {
                    if !score.is_finite() {
                        diags.push(Diagnostic::structure(format!(
                            "tree {}: leaf {} has non-finite score",
                            t, id
                        )));
                    }
                }
                Node::Split {
                    feature, threshold, left, right, ..
                } => {
                    if *feature >= self.num_features {
                        diags.push(Diagnostic::schema(format!(
                            "tree {}: split on feature index {} but ensemble has {} features",
                            t, feature, self.num_features
                        )));
                    } else {
                        let (lb, ub) = self.domain[*feature];
                        if !(*threshold > lb && *threshold < ub) {
                            diags.push(Diagnostic::domain(format!(
                                "tree {}: threshold {} on feature {} not strictly inside ({}, {})",
                                t,
                                threshold,
                                feature + 1,
                                lb,
                                ub
                            )));
                        }
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        if ok {
            for (id, seen) in visited.iter().enumerate() {
                if !seen {
                    diags.push(Diagnostic::structure(format!(
                        "tree {}: node {} unreachable from root",
                        t, id
                    )));
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Schema,
    Domain,
    Structure,
}

#[derive(Debug, Clone)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    fn schema(msg: impl Into<String>) -> Self {
        Diagnostic {
            kind: DiagnosticKind::Schema,
            message: msg.into(),
        }
    }
    fn domain(msg: impl Into<String>) -> Self {
        Diagnostic {
            kind: DiagnosticKind::Domain,
            message: msg.into(),
        }
    }
    fn structure(msg: impl Into<String>) -> Self {
        Diagnostic {
            kind: DiagnosticKind::Structure,
            message: msg.into(),
        }
    }

    fn into_error(self) -> ModelError {
        match self.kind {
            DiagnosticKind::Schema => ModelError::Schema(self.message),
            DiagnosticKind::Domain => ModelError::Domain(self.message),
            DiagnosticKind::Structure => ModelError::Structure(self.message),
        }
    }
}

/// Per-leaf hyperrectangle with bounds accumulated along the split path.
///
/// `lower_open[i]` marks bounds coming from a right branch: geometrically the
/// cell is open below there, which only matters for point-membership checks.
/// The optimization formulations use the closed inequalities on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafBox<T> {
    /// Arena index of the leaf node.
    pub node: usize,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub lower_open: Vec<bool>,
    pub score: T,
}

impl<T: Scalar> LeafBox<T> {
    /// Half-open membership test matching the tie-left evaluation convention.
    pub fn contains(&self, w: &[T]) -> bool {
        w.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .zip(&self.lower_open)
            .all(|(((&wi, &lo), &hi), &open)| {
                wi <= hi && if open { wi > lo } else { wi >= lo }
            })
    }
}

/// One `LeafBox` per leaf, in left-to-right tree order. The boxes tile the
/// domain: closures cover it and interiors are disjoint.
pub fn extract_leaves<T: Scalar>(tree: &DecisionTree<T>, domain: &[(T, T)]) -> Vec<LeafBox<T>> {
    let d = domain.len();
    let lower: Vec<T> = domain.iter().map(|&(lb, _)| lb).collect();
    let upper: Vec<T> = domain.iter().map(|&(_, ub)| ub).collect();
    let mut out = Vec::new();
    let mut stack = vec![(tree.root, lower, upper, vec![false; d])];
    while let Some((id, lo, hi, open)) = stack.pop() {
        match &tree.nodes[id] {
            Node::Leaf { score } => out.push(LeafBox {
                node: id,
                lower: lo,
                upper: hi,
                lower_open: open,
                score: *score,
            }),
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let mut left_hi = hi.clone();
                left_hi[*feature] = left_hi[*feature].min(*threshold);
                let mut right_lo = lo.clone();
                let mut right_open = open.clone();
                if *threshold >= right_lo[*feature] {
                    right_lo[*feature] = *threshold;
                    right_open[*feature] = true;
                }
                // Push right first so the left subtree is emitted first.
                stack.push((*right, right_lo, hi, right_open));
                stack.push((*left, lo, left_hi, open));
            }
        }
    }
    out
}

/// One split of one tree, with all index sets attached.
///
/// Leaf sets hold positions into the tree's left-to-right leaf order; parent
/// sets hold positions into the tree's split list.
#[derive(Debug, Clone)]
pub struct SplitInfo<T> {
    /// Arena index of the split node.
    pub node: usize,
    /// `V(s)`: feature the split branches on.
    pub feature: usize,
    pub threshold: T,
    /// `C(s)`: 1-based rank of the threshold among the feature's pooled
    /// thresholds, ascending.
    pub rank: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub below: Vec<usize>,
    pub above: Vec<usize>,
    pub right_parent: Vec<usize>,
    pub left_parent: Vec<usize>,
}

/// Split index for a whole ensemble: pooled thresholds (shared across trees,
/// deduplicated by exact equality) plus per-tree leaf boxes and splits.
#[derive(Debug, Clone)]
pub struct SplitIndex<T> {
    /// Per feature, ascending. `K_i = thresholds[i].len()`.
    pub thresholds: Vec<Vec<T>>,
    /// Per tree, left-to-right leaf order.
    pub leaves: Vec<Vec<LeafBox<T>>>,
    /// Per tree, in DFS order.
    pub splits: Vec<Vec<SplitInfo<T>>>,
}

impl<T: Scalar> SplitIndex<T> {
    pub fn num_thresholds(&self, feature: usize) -> usize {
        self.thresholds[feature].len()
    }
}

/// Build the full split index for an ensemble.
///
/// Both the recursive and the union definition of `below`/`above` are
/// computed; they must agree, which is asserted here.
pub fn build_split_index<T: Scalar>(ensemble: &TreeEnsemble<T>) -> SplitIndex<T> {
    let d = ensemble.num_features;
    let mut thresholds: Vec<Vec<T>> = vec![Vec::new(); d];
    for tree in &ensemble.trees {
        for node in &tree.nodes {
            if let Node::Split {
                feature, threshold, ..
            } = node
            {
                thresholds[*feature].push(*threshold);
            }
        }
    }
    for ts in &mut thresholds {
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ts.dedup_by(|a, b| a == b);
    }

    let mut all_leaves = Vec::new();
    let mut all_splits = Vec::new();
    for tree in &ensemble.trees {
        let leaves = extract_leaves(tree, &ensemble.domain);
        let splits = index_tree(tree, &leaves, &thresholds);
        all_leaves.push(leaves);
        all_splits.push(splits);
    }
    SplitIndex {
        thresholds,
        leaves: all_leaves,
        splits: all_splits,
    }
}

fn index_tree<T: Scalar>(
    tree: &DecisionTree<T>,
    leaves: &[LeafBox<T>],
    pooled: &[Vec<T>],
) -> Vec<SplitInfo<T>> {
    let leaf_pos: std::collections::HashMap<usize, usize> = leaves
        .iter()
        .enumerate()
        .map(|(pos, lb)| (lb.node, pos))
        .collect();

    // Leaf positions under each node, and parent links.
    let n = tree.nodes.len();
    let mut parent: Vec<Option<(usize, bool)>> = vec![None; n]; // (parent, is_left_child)
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Split { left, right, .. } = node {
            parent[*left] = Some((id, true));
            parent[*right] = Some((id, false));
        }
    }
    let mut under: Vec<Vec<usize>> = vec![Vec::new(); n];
    fn collect(tree_nodes: &[Node<impl Scalar>], id: usize, leaf_pos: &std::collections::HashMap<usize, usize>, under: &mut Vec<Vec<usize>>) {
        match &tree_nodes[id] {
            Node::Leaf { .. } => under[id] = vec![leaf_pos[&id]],
            Node::Split { left, right, .. } => {
                collect(tree_nodes, *left, leaf_pos, under);
                collect(tree_nodes, *right, leaf_pos, under);
                let mut v = under[*left].clone();
                v.extend(&under[*right]);
                v.sort_unstable();
                under[id] = v;
            }
        }
    }
    collect(&tree.nodes, tree.root, &leaf_pos, &mut under);

    let mut splits: Vec<SplitInfo<T>> = Vec::new();
    let mut node_to_split: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            let rank = pooled[*feature]
                .iter()
                .position(|t| t == threshold)
                .expect("split threshold present in pooled list")
                + 1;
            node_to_split.insert(id, splits.len());
            splits.push(SplitInfo {
                node: id,
                feature: *feature,
                threshold: *threshold,
                rank,
                left: under[*left].clone(),
                right: under[*right].clone(),
                below: Vec::new(),
                above: Vec::new(),
                right_parent: Vec::new(),
                left_parent: Vec::new(),
            });
        }
    }

    // below/above per feature, via the recursion over threshold-sorted splits.
    for feature in 0..pooled.len() {
        let mut order: Vec<usize> = (0..splits.len())
            .filter(|&s| splits[s].feature == feature)
            .collect();
        order.sort_by(|&a, &b| {
            splits[a]
                .threshold
                .partial_cmp(&splits[b].threshold)
                .unwrap()
        });
        // Ascending pass: below(s_{ij+1}) = below(s_{ij}) | left(s_{ij+1}),
        // with splits sharing a threshold handled as one group.
        let mut acc: Vec<usize> = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j < order.len() && splits[order[j]].threshold == splits[order[i]].threshold {
                acc.extend(splits[order[j]].left.iter().copied());
                j += 1;
            }
            acc.sort_unstable();
            acc.dedup();
            for &s in &order[i..j] {
                splits[s].below = acc.clone();
            }
            i = j;
        }
        // Descending pass for above(s).
        let mut acc: Vec<usize> = Vec::new();
        let mut i = order.len();
        while i > 0 {
            let mut j = i;
            while j > 0 && splits[order[j - 1]].threshold == splits[order[i - 1]].threshold {
                acc.extend(splits[order[j - 1]].right.iter().copied());
                j -= 1;
            }
            acc.sort_unstable();
            acc.dedup();
            for &s in &order[j..i] {
                splits[s].above = acc.clone();
            }
            i = j;
        }
        // Cross-check against the union definitions.
        for &s in &order {
            let mut below_union: Vec<usize> = order
                .iter()
                .filter(|&&o| splits[o].threshold <= splits[s].threshold)
                .flat_map(|&o| splits[o].left.iter().copied())
                .collect();
            below_union.sort_unstable();
            below_union.dedup();
            assert_eq!(
                splits[s].below, below_union,
                "below(s) recursion disagrees with union definition"
            );
            let mut above_union: Vec<usize> = order
                .iter()
                .filter(|&&o| splits[o].threshold >= splits[s].threshold)
                .flat_map(|&o| splits[o].right.iter().copied())
                .collect();
            above_union.sort_unstable();
            above_union.dedup();
            assert_eq!(
                splits[s].above, above_union,
                "above(s) recursion disagrees with union definition"
            );
        }
    }

    // Parent sets: same-feature ancestors, split by which subtree s sits in.
    for si in 0..splits.len() {
        let feature = splits[si].feature;
        let mut cur = splits[si].node;
        while let Some((anc, is_left)) = parent[cur] {
            if let Node::Split { feature: af, .. } = &tree.nodes[anc] {
                if *af == feature {
                    let anc_split = node_to_split[&anc];
                    if is_left {
                        splits[si].right_parent.push(anc_split);
                    } else {
                        splits[si].left_parent.push(anc_split);
                    }
                }
            }
            cur = anc;
        }
    }
    splits
}

// ---------------------------------------------------------------------------
// JSON schema
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct RawEnsemble {
    num_features: usize,
    domain: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    trees: Vec<RawTree>,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    nodes: Vec<RawNode>,
    root: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum RawNode {
    Split {
        id: u64,
        feature: usize,
        threshold: f64,
        left: u64,
        right: u64,
    },
    Leaf {
        id: u64,
        value: f64,
    },
}

/// Parse an ensemble from the JSON schema, validating all invariants.
pub fn parse_ensemble<T: Scalar>(json_text: &str) -> Result<TreeEnsemble<T>, ModelError> {
    let raw: RawEnsemble =
        serde_json::from_str(json_text).map_err(|e| ModelError::Schema(e.to_string()))?;
    let mut trees = Vec::with_capacity(raw.trees.len());
    for (t, rt) in raw.trees.iter().enumerate() {
        let mut id_to_idx = std::collections::HashMap::new();
        for (idx, node) in rt.nodes.iter().enumerate() {
            let id = match node {
                RawNode::Split { id, .. } | RawNode::Leaf { id, .. } => *id,
            };
            if id_to_idx.insert(id, idx).is_some() {
                return Err(ModelError::Schema(format!(
                    "tree {}: duplicate node id {}",
                    t, id
                )));
            }
        }
        let lookup = |id: u64| {
            id_to_idx.get(&id).copied().ok_or_else(|| {
                ModelError::Schema(format!("tree {}: reference to unknown node id {}", t, id))
            })
        };
        let mut nodes = Vec::with_capacity(rt.nodes.len());
        for node in &rt.nodes {
            nodes.push(match node {
                RawNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => Node::Split {
                    feature: *feature,
                    threshold: T::real(*threshold),
                    left: lookup(*left)?,
                    right: lookup(*right)?,
                },
                RawNode::Leaf { value, .. } => Node::Leaf {
                    score: T::real(*value),
                },
            });
        }
        trees.push(DecisionTree {
            nodes,
            root: lookup(rt.root)?,
        });
    }
    let domain = raw
        .domain
        .iter()
        .map(|&[lb, ub]| (T::real(lb), T::real(ub)))
        .collect();
    match raw.weights {
        Some(ws) => TreeEnsemble::with_weights(
            trees,
            raw.num_features,
            domain,
            ws.into_iter().map(T::real).collect(),
        ),
        None => TreeEnsemble::new(trees, raw.num_features, domain),
    }
}

/// Serialize an ensemble to the JSON schema (ids are arena indices).
pub fn ensemble_to_json<T: Scalar>(ensemble: &TreeEnsemble<T>) -> String {
    let raw = RawEnsemble {
        num_features: ensemble.num_features,
        domain: ensemble
            .domain
            .iter()
            .map(|&(lb, ub)| [lb.to_f64_lossy(), ub.to_f64_lossy()])
            .collect(),
        weights: Some(
            ensemble
                .weights
                .iter()
                .map(|w| w.to_f64_lossy())
                .collect(),
        ),
        trees: ensemble
            .trees
            .iter()
            .map(|tree| RawTree {
                root: tree.root as u64,
                nodes: tree
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(id, node)| match node {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => RawNode::Split {
                            id: id as u64,
                            feature: *feature,
                            threshold: threshold.to_f64_lossy(),
                            left: *left as u64,
                            right: *right as u64,
                        },
                        Node::Leaf { score } => RawNode::Leaf {
                            id: id as u64,
                            value: score.to_f64_lossy(),
                        },
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("ensemble serializes")
}
