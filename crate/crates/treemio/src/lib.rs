//! treemio: mixed-integer optimization over trained decision-tree ensembles.
//!
//! The crate parses or trains small tree ensembles, compiles them into a
//! family of MIP formulations of varying tightness, solves them with a
//! bundled simplex + branch-and-bound solver, and ships polyhedral probes
//! (integrality, containment, total unimodularity, sharpness) for comparing
//! the formulations at desk scale.
//!
//! The numeric core is generic over [`scalar::Scalar`] (`f32`/`f64`); the
//! aliases below fix `f64`, which is what the CLI uses.

pub mod analysis;
pub mod cli;
pub mod fixtures;
pub mod formulations;
pub mod model;
pub mod scalar;
pub mod solver;
pub mod tree;

pub use formulations::FormulationKind;
pub use model::{ObjSense, Sense, Status, VarRole};

/// `f64` aliases for the generic core.
pub type DecisionTree = tree::DecisionTree<f64>;
pub type TreeEnsemble = tree::TreeEnsemble<f64>;
pub type SplitIndex = tree::SplitIndex<f64>;
pub type LeafBox = tree::LeafBox<f64>;
pub type MipModel = model::MipModel<f64>;
pub type SolveResult = model::SolveResult<f64>;
pub type Dataset = fixtures::Dataset<f64>;
pub type Fixture = fixtures::Fixture<f64>;
