//! Formulation-agnostic MIP model container with an LP-relaxation view and
//! CPLEX-style LP text export.
//!
//! Rows are sparse `(var, coeff)` pairs kept sorted by variable id, with
//! duplicate entries merged at insertion. Infinite bounds are represented as
//! `None`, never as sentinel floats.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ModelBuildError {
    #[error("illegal variable name for LP export: {0:?}")]
    Name(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrality {
    Continuous,
    Binary,
}

/// Direction of travel out of a split node, used by the big-M arc variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dir {
    Left,
    Right,
}

/// Semantic role of a variable, shared across formulations so that probes and
/// fixtures can address variables independently of build order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarRole {
    /// `w_i` (0-based feature index).
    Feature(usize),
    /// Ensemble output `y`.
    Output,
    /// Per-tree output `y_t`.
    TreeOutput(usize),
    /// Leaf indicator `z_{lt}` (leaf position in left-to-right order).
    Leaf { tree: usize, leaf: usize },
    /// Threshold indicator `x_{ij}` (1-based ascending rank).
    Threshold { feature: usize, rank: usize },
    /// Disaggregated copy `w^l_i` in the extended union formulation.
    LeafCopy { tree: usize, leaf: usize, feature: usize },
    /// Per-leaf output copy `y^l` in the extended union formulation.
    LeafOutput { tree: usize, leaf: usize },
    /// Arc indicator of the big-M formulation (child arc of a split node).
    Arc { tree: usize, node: usize, dir: Dir },
}

#[derive(Debug, Clone)]
pub struct Variable<T> {
    pub name: String,
    pub lower: Option<T>,
    pub upper: Option<T>,
    pub integrality: Integrality,
    pub role: Option<VarRole>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint<T> {
    pub name: String,
    pub row: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjSense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    NodeLimit,
    TimeLimit,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::Unbounded => "unbounded",
            Status::IterationLimit => "iteration_limit",
            Status::NodeLimit => "node_limit",
            Status::TimeLimit => "time_limit",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// LP or MIP solution.
#[derive(Debug, Clone)]
pub struct SolveResult<T> {
    pub status: Status,
    pub objective: T,
    pub values: Vec<T>,
    /// Dual bound for MIP solves; equals `objective` for LP optima.
    pub best_bound: T,
    pub node_count: usize,
    pub lp_iterations: usize,
}

impl<T: Scalar> SolveResult<T> {
    pub fn value_of(&self, model: &MipModel<T>, role: VarRole) -> Option<T> {
        model.find_role(role).map(|v| self.values[v])
    }
}

/// A variable defined as an affine function of other variables.
///
/// Definitions are substituted out before solving and back-filled into the
/// solution afterwards; they are not constraint rows and do not appear in
/// [`ModelStats`]. Output accessors (`y`, `y_t`) use this, mirroring how the
/// formulations substitute the score equation rather than carrying it as a
/// row.
#[derive(Debug, Clone)]
pub struct Definition<T> {
    pub var: usize,
    pub row: Vec<(usize, T)>,
    pub constant: T,
}

#[derive(Debug, Clone)]
pub struct MipModel<T> {
    pub variables: Vec<Variable<T>>,
    pub constraints: Vec<Constraint<T>>,
    /// In dependency order: a definition may reference earlier-defined vars.
    pub definitions: Vec<Definition<T>>,
    pub obj_sense: ObjSense,
    pub objective: Vec<(usize, T)>,
    roles: HashMap<VarRole, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelStats {
    pub num_variables: usize,
    pub num_constraints: usize,
    pub num_binaries: usize,
    pub num_nonzeros: usize,
}

impl<T: Scalar> Default for MipModel<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> MipModel<T> {
    pub fn new() -> Self {
        MipModel {
            variables: Vec::new(),
            constraints: Vec::new(),
            definitions: Vec::new(),
            obj_sense: ObjSense::Maximize,
            objective: Vec::new(),
            roles: HashMap::new(),
        }
    }

    /// Mark `var` as the affine expression `row + constant`.
    pub fn add_definition(&mut self, var: usize, row: Vec<(usize, T)>, constant: T) {
        debug_assert!(
            !self.definitions.iter().any(|d| d.var == var),
            "variable {} defined twice",
            var
        );
        self.definitions.push(Definition {
            var,
            row: merge_row(row),
            constant,
        });
    }

    pub fn is_defined(&self, var: usize) -> bool {
        self.definitions.iter().any(|d| d.var == var)
    }

    /// Fill the values of defined variables from the free ones, in order.
    pub fn apply_definitions(&self, values: &mut [T]) {
        for def in &self.definitions {
            values[def.var] = Self::row_value(&def.row, values) + def.constant;
        }
    }

    /// Substitute defined variables out of a sparse expression, returning an
    /// equivalent `(row, constant)` over free variables only.
    pub fn substitute(&self, row: &[(usize, T)]) -> (Vec<(usize, T)>, T) {
        let mut cur = row.to_vec();
        let mut constant = T::zero();
        // Walk definitions last-to-first: later definitions may reference
        // earlier ones, so one reverse pass fully expands the expression.
        for def in self.definitions.iter().rev() {
            let mut next = Vec::with_capacity(cur.len());
            for &(v, c) in &cur {
                if v == def.var {
                    constant += c * def.constant;
                    next.extend(def.row.iter().map(|&(dv, dc)| (dv, c * dc)));
                } else {
                    next.push((v, c));
                }
            }
            cur = next;
        }
        (merge_row(cur), constant)
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: Option<T>,
        upper: Option<T>,
        integrality: Integrality,
        role: Option<VarRole>,
    ) -> usize {
        let id = self.variables.len();
        if let Some(r) = role {
            let prev = self.roles.insert(r, id);
            debug_assert!(prev.is_none(), "duplicate variable role {:?}", r);
        }
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            integrality,
            role,
        });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>, role: Option<VarRole>) -> usize {
        self.add_var(
            name,
            Some(T::zero()),
            Some(T::one()),
            Integrality::Binary,
            role,
        )
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        row: Vec<(usize, T)>,
        sense: Sense,
        rhs: T,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            row: merge_row(row),
            sense,
            rhs,
        });
    }

    pub fn set_objective(&mut self, sense: ObjSense, row: Vec<(usize, T)>) {
        self.obj_sense = sense;
        self.objective = merge_row(row);
    }

    pub fn find_role(&self, role: VarRole) -> Option<usize> {
        self.roles.get(&role).copied()
    }

    /// Build a full point from role assignments: unassigned free variables
    /// stay at zero, defined variables are back-filled. `None` if a role is
    /// absent from this model.
    pub fn point_from_roles(&self, assignment: &[(VarRole, T)]) -> Option<Vec<T>> {
        let mut values = vec![T::zero(); self.variables.len()];
        for &(role, v) in assignment {
            values[self.find_role(role)?] = v;
        }
        self.apply_definitions(&mut values);
        Some(values)
    }

    pub fn binaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integrality == Integrality::Binary)
            .map(|(i, _)| i)
    }

    /// Evaluate a sparse row at a point.
    pub fn row_value(row: &[(usize, T)], values: &[T]) -> T {
        row.iter().map(|&(v, c)| c * values[v]).sum()
    }

    /// Signed violation of one constraint at a point (positive = violated).
    pub fn constraint_violation(c: &Constraint<T>, values: &[T]) -> T {
        let lhs = Self::row_value(&c.row, values);
        match c.sense {
            Sense::Le => lhs - c.rhs,
            Sense::Ge => c.rhs - lhs,
            Sense::Eq => (lhs - c.rhs).abs(),
        }
    }

    /// Largest violation of any constraint, definition or bound at a point.
    pub fn max_violation(&self, values: &[T]) -> T {
        let mut worst = T::zero();
        for c in &self.constraints {
            worst = worst.max(Self::constraint_violation(c, values));
        }
        for def in &self.definitions {
            let expr = Self::row_value(&def.row, values) + def.constant;
            worst = worst.max((expr - values[def.var]).abs());
        }
        for (v, var) in self.variables.iter().enumerate() {
            if let Some(lb) = var.lower {
                worst = worst.max(lb - values[v]);
            }
            if let Some(ub) = var.upper {
                worst = worst.max(values[v] - ub);
            }
        }
        worst
    }

    pub fn stats(&self) -> ModelStats {
        ModelStats {
            num_variables: self.variables.len(),
            num_constraints: self.constraints.len(),
            num_binaries: self
                .variables
                .iter()
                .filter(|v| v.integrality == Integrality::Binary)
                .count(),
            num_nonzeros: self
                .constraints
                .iter()
                .map(|c| c.row.iter().filter(|(_, v)| !v.is_zero()).count())
                .sum(),
        }
    }
}

fn merge_row<T: Scalar>(mut row: Vec<(usize, T)>) -> Vec<(usize, T)> {
    row.sort_by_key(|&(v, _)| v);
    let mut out: Vec<(usize, T)> = Vec::with_capacity(row.len());
    for (v, c) in row {
        match out.last_mut() {
            Some((pv, pc)) if *pv == v => *pc += c,
            _ => out.push((v, c)),
        }
    }
    // Canonical form: exact zeros are dropped.
    out.retain(|(_, c)| !c.is_zero());
    out
}

/// The LP relaxation: the same model with all integrality dropped.
pub fn relax<T: Scalar>(model: &MipModel<T>) -> MipModel<T> {
    let mut out = model.clone();
    for v in &mut out.variables {
        v.integrality = Integrality::Continuous;
    }
    out
}

fn check_name(name: &str) -> Result<(), ModelBuildError> {
    let mut chars = name.chars();
    let head_ok = chars
        .next()
        .map(|c| c.is_ascii_alphabetic() || c == '_')
        .unwrap_or(false);
    if head_ok && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(())
    } else {
        Err(ModelBuildError::Name(name.to_string()))
    }
}

fn coeff<T: Scalar>(c: T) -> String {
    // 17 significant digits round-trips f64 exactly.
    format!("{:.16e}", c)
}

/// Write the model as CPLEX-style LP text: objective, `Subject To`, `Bounds`,
/// `Binaries`, `End`. Output is deterministic in declaration order.
pub fn write_lp<T: Scalar>(model: &MipModel<T>) -> Result<String, ModelBuildError> {
    for v in &model.variables {
        check_name(&v.name)?;
    }
    for c in &model.constraints {
        check_name(&c.name)?;
    }
    let mut out = String::new();
    let sense = match model.obj_sense {
        ObjSense::Maximize => "Maximize",
        ObjSense::Minimize => "Minimize",
    };
    writeln!(out, "{}", sense).unwrap();
    write!(out, " obj:").unwrap();
    write_row(&mut out, model, &model.objective);
    writeln!(out).unwrap();

    writeln!(out, "Subject To").unwrap();
    for c in &model.constraints {
        write!(out, " {}:", c.name).unwrap();
        write_row(&mut out, model, &c.row);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        writeln!(out, " {} {}", op, coeff(c.rhs)).unwrap();
    }
    // Definitions are emitted as explicit equality rows so external readers
    // see a complete model.
    for def in &model.definitions {
        let name = &model.variables[def.var].name;
        write!(out, " def_{}:", name).unwrap();
        let mut row = def.row.clone();
        row.push((def.var, -T::one()));
        write_row(&mut out, model, &merge_row(row));
        writeln!(out, " = {}", coeff(-def.constant)).unwrap();
    }

    writeln!(out, "Bounds").unwrap();
    for v in &model.variables {
        match (v.lower, v.upper) {
            (Some(lb), Some(ub)) => {
                writeln!(out, " {} <= {} <= {}", coeff(lb), v.name, coeff(ub)).unwrap()
            }
            (Some(lb), None) => writeln!(out, " {} >= {}", v.name, coeff(lb)).unwrap(),
            (None, Some(ub)) => {
                writeln!(out, " -infinity <= {} <= {}", v.name, coeff(ub)).unwrap()
            }
            (None, None) => writeln!(out, " {} free", v.name).unwrap(),
        }
    }

    let binaries: Vec<&str> = model
        .variables
        .iter()
        .filter(|v| v.integrality == Integrality::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        writeln!(out, "Binaries").unwrap();
        for name in binaries {
            writeln!(out, " {}", name).unwrap();
        }
    }
    writeln!(out, "End").unwrap();
    Ok(out)
}

fn write_row<T: Scalar>(out: &mut String, model: &MipModel<T>, row: &[(usize, T)]) {
    if row.is_empty() {
        write!(out, " 0 {}", model.variables.first().map(|v| v.name.as_str()).unwrap_or("x")).unwrap();
        return;
    }
    for &(v, c) in row {
        let (sign, mag) = if c < T::zero() { ("-", -c) } else { ("+", c) };
        write!(out, " {} {} {}", sign, coeff(mag), model.variables[v].name).unwrap();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MipModel<f64> {
        let mut m = MipModel::new();
        let x = m.add_var("x", Some(0.0), None, Integrality::Continuous, None);
        m.add_constraint("c1", vec![(x, 1.0)], Sense::Le, 1.0);
        m.set_objective(ObjSense::Maximize, vec![(x, 1.0)]);
        m
    }

    #[test]
    fn lp_text_sections() {
        let text = write_lp(&toy()).unwrap();
        assert!(text.starts_with("Maximize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("Bounds"));
        assert!(text.contains("<= 1.0000000000000000e0"));
        assert!(text.ends_with("End\n"));
        assert!(!text.contains("Binaries"));
    }

    #[test]
    fn relax_drops_binaries_and_is_idempotent() {
        let mut m = MipModel::<f64>::new();
        for i in 0..3 {
            m.add_binary(format!("b{}", i), None);
        }
        m.add_constraint("c", vec![(0, 1.0), (1, 1.0), (2, 1.0)], Sense::Le, 2.0);
        let r = relax(&m);
        assert_eq!(r.stats().num_binaries, 0);
        assert_eq!(r.stats().num_constraints, m.stats().num_constraints);
        assert_eq!(r.variables[0].upper, Some(1.0));
        let rr = relax(&r);
        assert_eq!(rr.stats(), r.stats());
    }

    #[test]
    fn duplicate_entries_merge() {
        let mut m = MipModel::<f64>::new();
        let x = m.add_var("x", Some(0.0), Some(1.0), Integrality::Continuous, None);
        m.add_constraint("c", vec![(x, 1.0), (x, 2.0)], Sense::Le, 1.0);
        assert_eq!(m.constraints[0].row, vec![(x, 3.0)]);
    }

    #[test]
    fn bad_name_rejected() {
        let mut m = MipModel::<f64>::new();
        m.add_var("2x", Some(0.0), None, Integrality::Continuous, None);
        assert!(matches!(write_lp(&m), Err(ModelBuildError::Name(_))));
    }

    #[test]
    fn export_is_deterministic() {
        let a = write_lp(&toy()).unwrap();
        let b = write_lp(&toy()).unwrap();
        assert_eq!(a, b);
    }
}
