//! Synthetic training data, small CART/forest training, and the worked
//! golden fixtures used throughout the verification suites.
//!
//! Randomness is driven by `Pcg64Mcg` seeded from a `u64`, so every dataset,
//! tree and forest is reproducible across builds from the seed alone.

use rand::Rng;
use rand_pcg::Pcg64Mcg;
use thiserror::Error;

use crate::formulations::FormulationKind;
use crate::model::{Sense, VarRole};
use crate::scalar::Scalar;
use crate::tree::{DecisionTree, Node, TreeEnsemble};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("unknown fixture {0:?}")]
    UnknownFixture(String),
    #[error("bad input: {0}")]
    BadInput(String),
}

/// A regression dataset: `n` rows of `d` features with targets `r`.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub x: Vec<Vec<T>>,
    pub r: Vec<T>,
    pub seed: u64,
}

impl<T> Dataset<T> {
    pub fn len(&self) -> usize {
        self.r.len()
    }
    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }
}

/// Triangle-shaped reward data: rows `w ~ U(-1,1)^d` and
/// `r = sum_j (1 - |w_j|) + d * eps` with `eps ~ U(0,1)` when `noise` is on.
pub fn gen_triangle_data<T: Scalar>(d: usize, n: usize, noise: bool, seed: u64) -> Dataset<T> {
    assert!(d >= 1 && n >= 2);
    let mut rng = Pcg64Mcg::new(seed as u128);
    let mut x = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps: f64 = if noise { rng.gen_range(0.0..1.0) } else { 0.0 };
        let reward: f64 = row.iter().map(|w| 1.0 - w.abs()).sum::<f64>() + d as f64 * eps;
        x.push(row.into_iter().map(T::real).collect());
        r.push(T::real(reward));
    }
    Dataset { x, r, seed }
}

fn mean<T: Scalar>(values: impl Iterator<Item = T>, count: usize) -> T {
    values.sum::<T>() / T::real(count as f64)
}

fn sse<T: Scalar>(rows: &[usize], r: &[T]) -> T {
    let m = mean(rows.iter().map(|&i| r[i]), rows.len());
    rows.iter().map(|&i| (r[i] - m) * (r[i] - m)).sum()
}

/// Greedy variance-reduction CART regression tree.
///
/// Split candidates are midpoints between consecutive distinct sorted feature
/// values; ties in reduction break toward the lowest feature index, then the
/// lowest threshold, so training is deterministic. Constant targets yield a
/// single leaf.
pub fn train_cart<T: Scalar>(
    data: &Dataset<T>,
    max_depth: usize,
    min_leaf: usize,
) -> Result<DecisionTree<T>, FixtureError> {
    if data.len() < 2 * min_leaf.max(1) {
        return Err(FixtureError::BadInput(format!(
            "{} rows cannot satisfy min_leaf {}",
            data.len(),
            min_leaf
        )));
    }
    let mut nodes = Vec::new();
    let rows: Vec<usize> = (0..data.len()).collect();
    let root = grow(&mut nodes, data, &rows, max_depth, min_leaf.max(1));
    Ok(DecisionTree { nodes, root })
}

fn grow<T: Scalar>(
    nodes: &mut Vec<Node<T>>,
    data: &Dataset<T>,
    rows: &[usize],
    depth_left: usize,
    min_leaf: usize,
) -> usize {
    let score = mean(rows.iter().map(|&i| data.r[i]), rows.len());
    let split = if depth_left == 0 {
        None
    } else {
        best_split(data, rows, min_leaf)
    };
    match split {
        None => {
            nodes.push(Node::Leaf { score });
            nodes.len() - 1
        }
        Some((feature, threshold)) => {
            let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| data.x[i][feature] <= threshold);
            let left = grow(nodes, data, &lrows, depth_left - 1, min_leaf);
            let right = grow(nodes, data, &rrows, depth_left - 1, min_leaf);
            nodes.push(Node::Split {
                feature,
                threshold,
                left,
                right,
            });
            nodes.len() - 1
        }
    }
}

fn best_split<T: Scalar>(data: &Dataset<T>, rows: &[usize], min_leaf: usize) -> Option<(usize, T)> {
    let d = data.x[0].len();
    let parent_sse = sse(rows, &data.r);
    if parent_sse <= T::real(1e-12) {
        return None; // pure / constant-target node
    }
    let mut best: Option<(T, usize, T)> = None; // (reduction, feature, threshold)
    for feature in 0..d {
        let mut sorted: Vec<usize> = rows.to_vec();
        sorted.sort_by(|&a, &b| data.x[a][feature].partial_cmp(&data.x[b][feature]).unwrap());
        for w in sorted.windows(2).map(|w| (data.x[w[0]][feature], data.x[w[1]][feature])) {
            let (lo, hi) = w;
            if lo == hi {
                continue;
            }
            let threshold = (lo + hi) / T::real(2.0);
            let (lrows, rrows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| data.x[i][feature] <= threshold);
            if lrows.len() < min_leaf || rrows.len() < min_leaf {
                continue;
            }
            let reduction = parent_sse - sse(&lrows, &data.r) - sse(&rrows, &data.r);
            let better = match best {
                None => true,
                Some((r, f, t)) => {
                    reduction > r
                        || (reduction == r && (feature, threshold.partial_cmp(&t).unwrap())
                            < (f, std::cmp::Ordering::Equal))
                }
            };
            if better && reduction > T::real(1e-12) {
                best = Some((reduction, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Smallest box containing all data rows; thresholds from midpoint splits are
/// strictly interior to it.
fn data_domain<T: Scalar>(data: &Dataset<T>) -> Vec<(T, T)> {
    let d = data.x[0].len();
    (0..d)
        .map(|j| {
            let lo = data
                .x
                .iter()
                .map(|row| row[j])
                .fold(T::infinity(), T::min);
            let hi = data
                .x
                .iter()
                .map(|row| row[j])
                .fold(T::neg_infinity(), T::max);
            if lo < hi {
                (lo, hi)
            } else {
                (lo - T::one(), hi + T::one())
            }
        })
        .collect()
}

/// Random forest: `t` CART trees on bootstrap resamples (with replacement,
/// size `n`), uniform weights `1/t`. Deterministic given the seed.
pub fn train_forest<T: Scalar>(
    data: &Dataset<T>,
    t: usize,
    max_depth: usize,
    seed: u64,
) -> Result<TreeEnsemble<T>, FixtureError> {
    assert!(t >= 1);
    let mut rng = Pcg64Mcg::new(seed as u128 ^ 0x9e37_79b9_7f4a_7c15);
    let n = data.len();
    let mut trees = Vec::with_capacity(t);
    for _ in 0..t {
        let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        let sample = Dataset {
            x: rows.iter().map(|&i| data.x[i].clone()).collect(),
            r: rows.iter().map(|&i| data.r[i]).collect(),
            seed: data.seed,
        };
        trees.push(train_cart(&sample, max_depth, 1)?);
    }
    let domain = data_domain(data);
    TreeEnsemble::new(trees, data.x[0].len(), domain)
        .map_err(|e| FixtureError::BadInput(e.to_string()))
}

/// A reference point with a known vertex/non-vertex status, expressed as role
/// assignments on the relaxation of one formulation.
#[derive(Debug, Clone)]
pub struct VertexCase<T> {
    pub kind: FormulationKind,
    pub assignment: Vec<(VarRole, T)>,
    /// Whether the fixture's extra `w`-constraints must be attached first.
    pub with_extra_constraints: bool,
    pub expect_vertex: bool,
    pub label: &'static str,
}

/// A golden worked example: the exact trees plus reference metadata.
#[derive(Debug, Clone)]
pub struct Fixture<T> {
    pub name: &'static str,
    pub ensemble: TreeEnsemble<T>,
    /// Extra linear rows over `w` (coefficients per feature id).
    pub extra_constraints: Vec<(Vec<(usize, T)>, Sense, T)>,
    /// Fixed big-M value some fixtures pin for reproducibility, when one is set.
    pub bigm_override: Option<T>,
    pub vertices: Vec<VertexCase<T>>,
    /// `(w0, y0, expect_in_projection, expect_in_hull)` for 1-D sharpness.
    pub sharp_points: Vec<(T, T, bool, bool)>,
}

fn leaf<T: Scalar>(score: f64) -> Node<T> {
    Node::Leaf {
        score: T::real(score),
    }
}

fn split<T: Scalar>(feature: usize, threshold: f64, left: usize, right: usize) -> Node<T> {
    Node::Split {
        feature,
        threshold: T::real(threshold),
        left,
        right,
    }
}

/// The depth-2 single-feature tree branching on `w <= 5` then `w <= 2`,
/// domain `[0, 10]`. Leaf scores are labels only.
fn nested_1d_tree<T: Scalar>() -> TreeEnsemble<T> {
    let tree = DecisionTree {
        nodes: vec![
            split(0, 5.0, 1, 4),
            split(0, 2.0, 2, 3),
            leaf(1.0),
            leaf(2.0),
            leaf(3.0),
        ],
        root: 0,
    };
    TreeEnsemble::new(vec![tree], 1, vec![(T::real(0.0), T::real(10.0))]).unwrap()
}

fn x<T: Scalar>(feature: usize, rank: usize, v: f64) -> (VarRole, T) {
    (VarRole::Threshold { feature, rank }, T::real(v))
}
fn z<T: Scalar>(leaf: usize, v: f64) -> (VarRole, T) {
    (VarRole::Leaf { tree: 0, leaf }, T::real(v))
}
fn w<T: Scalar>(feature: usize, v: f64) -> (VarRole, T) {
    (VarRole::Feature(feature), T::real(v))
}

/// Return one of the named golden fixtures:
/// `ex1`, `ex2`, `ex3`, `ex4`, `fig3a`, `fig3b`, `elbow_segment`.
pub fn example_fixture<T: Scalar>(name: &str) -> Result<Fixture<T>, FixtureError> {
    let mut fx = Fixture {
        name: "",
        ensemble: nested_1d_tree(),
        extra_constraints: Vec::new(),
        bigm_override: None,
        vertices: Vec::new(),
        sharp_points: Vec::new(),
    };
    match name {
        "ex1" | "elbow_segment" => {
            fx.name = if name == "ex1" { "ex1" } else { "elbow_segment" };
            fx.vertices.push(VertexCase {
                kind: FormulationKind::Misic,
                assignment: vec![x(0, 1, 0.5), x(0, 2, 0.5), z(0, 0.0), z(1, 0.5), z(2, 0.5)],
                with_extra_constraints: false,
                expect_vertex: true,
                label: "fractional extreme point of the nested 1-D tree",
            });
            fx.vertices.push(VertexCase {
                kind: FormulationKind::Misic,
                assignment: vec![
                    x(0, 1, 0.375),
                    x(0, 2, 0.625),
                    z(0, 0.25),
                    z(1, 0.375),
                    z(2, 0.375),
                ],
                with_extra_constraints: false,
                expect_vertex: false,
                label: "interior convex combination",
            });
        }
        "ex2" => {
            fx.name = "ex2";
            fx.bigm_override = Some(T::real(15.0));
            fx.vertices.push(VertexCase {
                kind: FormulationKind::Bigm,
                assignment: vec![
                    (arc_role(0, Dir2::Left), T::real(1.0 / 3.0)),
                    (arc_role(0, Dir2::Right), T::real(2.0 / 3.0)),
                    (arc_role(1, Dir2::Left), T::real(1.0 / 3.0)),
                    (arc_role(1, Dir2::Right), T::real(0.0)),
                    w(0, 0.0),
                ],
                with_extra_constraints: false,
                expect_vertex: true,
                label: "fractional extreme point with M = 15",
            });
        }
        "ex3" => {
            fx.name = "ex3";
            let t1 = DecisionTree {
                nodes: vec![split(0, 1.0, 1, 2), leaf(1.0), leaf(4.0)],
                root: 0,
            };
            let t2 = DecisionTree {
                nodes: vec![split(0, 2.0, 1, 2), leaf(2.0), leaf(3.0)],
                root: 0,
            };
            fx.ensemble = TreeEnsemble::with_weights(
                vec![t1, t2],
                1,
                vec![(T::real(0.0), T::real(3.0))],
                vec![T::real(0.5), T::real(0.5)],
            )
            .unwrap();
            fx.sharp_points.push((T::real(1.0), T::real(3.25), true, false));
            fx.sharp_points.push((T::real(2.5), T::real(3.5), true, true));
        }
        "ex4" => {
            fx.name = "ex4";
            let tree = DecisionTree {
                nodes: vec![
                    split(0, 2.0, 1, 4),
                    split(1, 2.0, 2, 3),
                    leaf(1.0),
                    leaf(2.0),
                    leaf(3.0),
                ],
                root: 0,
            };
            fx.ensemble = TreeEnsemble::new(
                vec![tree],
                2,
                vec![(T::real(0.0), T::real(3.0)), (T::real(0.0), T::real(3.0))],
            )
            .unwrap();
            fx.extra_constraints.push((
                vec![(0, T::one()), (1, T::one())],
                Sense::Le,
                T::real(3.0),
            ));
            fx.vertices.push(VertexCase {
                kind: FormulationKind::Projected,
                assignment: vec![
                    w(0, 2.0 / 3.0),
                    w(1, 7.0 / 3.0),
                    z(0, 2.0 / 3.0),
                    z(1, 0.0),
                    z(2, 1.0 / 3.0),
                ],
                with_extra_constraints: true,
                expect_vertex: true,
                label: "fractional extreme point under w1 + w2 <= 3",
            });
        }
        "fig3a" => {
            fx.name = "fig3a";
            let tree = DecisionTree {
                nodes: vec![
                    split(0, 2.0, 1, 4),
                    split(1, 2.0, 2, 3),
                    leaf(1.0),
                    leaf(2.0),
                    split(1, 5.0, 5, 6),
                    leaf(3.0),
                    leaf(4.0),
                ],
                root: 0,
            };
            fx.ensemble = TreeEnsemble::new(
                vec![tree],
                2,
                vec![(T::real(0.0), T::real(10.0)), (T::real(0.0), T::real(10.0))],
            )
            .unwrap();
            for (zs, label) in [
                ([0.0, 0.5, 0.0, 0.5], "first fractional point"),
                ([0.5, 0.0, 0.5, 0.0], "second fractional point"),
            ] {
                fx.vertices.push(VertexCase {
                    kind: FormulationKind::Misic,
                    assignment: vec![
                        x(0, 1, 0.5),
                        x(1, 1, 0.5),
                        x(1, 2, 0.5),
                        z(0, zs[0]),
                        z(1, zs[1]),
                        z(2, zs[2]),
                        z(3, zs[3]),
                    ],
                    with_extra_constraints: false,
                    expect_vertex: true,
                    label,
                });
            }
        }
        "fig3b" => {
            fx.name = "fig3b";
            let tree = DecisionTree {
                nodes: vec![
                    split(0, 2.0, 1, 2),
                    leaf(1.0),
                    split(1, 2.0, 3, 4),
                    leaf(2.0),
                    split(1, 4.0, 5, 6),
                    leaf(3.0),
                    leaf(4.0),
                ],
                root: 0,
            };
            fx.ensemble = TreeEnsemble::new(
                vec![tree],
                2,
                vec![(T::real(0.0), T::real(10.0)), (T::real(0.0), T::real(10.0))],
            )
            .unwrap();
            fx.vertices.push(VertexCase {
                kind: FormulationKind::Expset,
                assignment: vec![
                    x(0, 1, 0.5),
                    x(1, 1, 0.5),
                    x(1, 2, 0.5),
                    z(0, 0.5),
                    z(1, 0.0),
                    z(2, 0.5),
                    z(3, 0.0),
                ],
                with_extra_constraints: false,
                expect_vertex: true,
                label: "fractional point surviving the expanded-set rows",
            });
        }
        other => return Err(FixtureError::UnknownFixture(other.to_string())),
    }
    Ok(fx)
}

// Arc roles for the nested 1-D tree: node 0 is the outer split (w <= 5),
// node 1 the inner split (w <= 2).
enum Dir2 {
    Left,
    Right,
}
fn arc_role(node: usize, dir: Dir2) -> VarRole {
    VarRole::Arc {
        tree: 0,
        node,
        dir: match dir {
            Dir2::Left => crate::model::Dir::Left,
            Dir2::Right => crate::model::Dir::Right,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{ensemble_to_json, parse_ensemble};

    #[test]
    fn triangle_values_noiseless() {
        // By the formula: r = sum_j (1 - |w_j|) with no noise term.
        let data: Dataset<f64> = gen_triangle_data(3, 10, false, 7);
        for (row, &r) in data.x.iter().zip(&data.r) {
            let expect: f64 = row.iter().map(|w| 1.0 - w.abs()).sum();
            assert!((r - expect).abs() < 1e-12);
            assert!(row.iter().all(|w| (-1.0..1.0).contains(w)));
        }
    }

    #[test]
    fn triangle_noise_range() {
        let data: Dataset<f64> = gen_triangle_data(2, 50, true, 3);
        for &r in &data.r {
            assert!((0.0..=4.0).contains(&r));
        }
    }

    #[test]
    fn triangle_deterministic() {
        let a: Dataset<f64> = gen_triangle_data(2, 20, true, 11);
        let b: Dataset<f64> = gen_triangle_data(2, 20, true, 11);
        assert_eq!(a.x, b.x);
        assert_eq!(a.r, b.r);
    }

    #[test]
    fn cart_two_points() {
        let data = Dataset {
            x: vec![vec![0.0], vec![1.0]],
            r: vec![0.0, 1.0],
            seed: 0,
        };
        let tree = train_cart(&data, 1, 1).unwrap();
        assert_eq!(tree.num_leaves(), 2);
        match &tree.nodes[tree.root] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.5),
            _ => panic!("expected a split at the root"),
        }
        assert_eq!(tree.predict(&[0.2]), 0.0);
        assert_eq!(tree.predict(&[0.8]), 1.0);
    }

    #[test]
    fn cart_constant_target_single_leaf() {
        let data = Dataset {
            x: vec![vec![0.0], vec![1.0], vec![2.0]],
            r: vec![5.0, 5.0, 5.0],
            seed: 0,
        };
        let tree = train_cart(&data, 3, 1).unwrap();
        assert_eq!(tree.num_leaves(), 1);
        assert_eq!(tree.predict(&[1.0]), 5.0);
    }

    #[test]
    fn cart_predictions_are_leaf_means() {
        let data: Dataset<f64> = gen_triangle_data(2, 30, true, 5);
        let tree = train_cart(&data, 3, 2).unwrap();
        let (lo, hi) = data
            .r
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            });
        for node in &tree.nodes {
            if let Node::Leaf { score } = node {
                assert!((lo..=hi).contains(score));
            }
        }
    }

    #[test]
    fn forest_weights_uniform() {
        let data: Dataset<f64> = gen_triangle_data(1, 12, false, 2);
        let forest = train_forest(&data, 4, 2, 9).unwrap();
        assert_eq!(forest.trees.len(), 4);
        assert!(forest.weights.iter().all(|&w| w == 0.25));
        assert!(forest.validate().is_empty());
    }

    #[test]
    fn forest_deterministic() {
        let data: Dataset<f64> = gen_triangle_data(2, 15, true, 4);
        let a = train_forest(&data, 3, 3, 1).unwrap();
        let b = train_forest(&data, 3, 3, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixtures_round_trip_json() {
        for name in ["ex1", "ex2", "ex3", "ex4", "fig3a", "fig3b", "elbow_segment"] {
            let fx: Fixture<f64> = example_fixture(name).unwrap();
            let json = ensemble_to_json(&fx.ensemble);
            let back = parse_ensemble::<f64>(&json).unwrap();
            assert_eq!(back, fx.ensemble, "round trip failed for {}", name);
        }
    }

    #[test]
    fn unknown_fixture_rejected() {
        assert!(matches!(
            example_fixture::<f64>("nope"),
            Err(FixtureError::UnknownFixture(_))
        ));
    }

    #[test]
    fn ex3_shape() {
        let fx: Fixture<f64> = example_fixture("ex3").unwrap();
        assert_eq!(fx.ensemble.trees.len(), 2);
        assert_eq!(fx.ensemble.weights, vec![0.5, 0.5]);
        assert_eq!(fx.sharp_points.len(), 2);
    }
}
