//! Symbolic mixed-integer linear programs.
//!
//! Every emitter in this crate appends variables and rows to a [`MipModel`];
//! solvers consume the finished model and return an [`Assignment`].

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-6;
/// Tolerance used when reporting or checking solver output.
pub const REPORT_TOL: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable {0} has no value in the assignment")]
    MissingVariable(VarId),
    #[error("variable {0} is not declared in the model")]
    UndeclaredVariable(VarId),
    #[error("invalid bounds [{lower}, {upper}] for variable {name}")]
    InvalidBounds { name: String, lower: f64, upper: f64 },
    #[error("row {0} has a non-finite right-hand side")]
    NonFiniteRhs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Binary,
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub id: VarId,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub name: String,
}

impl VarSpec {
    pub fn is_integral(&self) -> bool {
        self.kind != VarKind::Continuous
    }
}

/// Affine expression `Σ coeff·var + constant`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        Self { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(v: VarId, coeff: f64) -> Self {
        Self { terms: vec![(v, coeff)], constant: 0.0 }
    }

    pub fn add_term(&mut self, v: VarId, coeff: f64) -> &mut Self {
        self.terms.push((v, coeff));
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// Adds `scale · other` in place.
    pub fn add_scaled(&mut self, other: &LinearExpr, scale: f64) -> &mut Self {
        self.terms.extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, scale: f64) -> LinearExpr {
        let mut out = LinearExpr::new();
        out.add_scaled(self, scale);
        out
    }

    pub fn plus(&self, other: &LinearExpr) -> LinearExpr {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn minus(&self, other: &LinearExpr) -> LinearExpr {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// Merges duplicate ids, drops zero coefficients and sorts by id.
    pub fn normalize(&mut self) {
        let mut merged: BTreeMap<VarId, f64> = BTreeMap::new();
        for &(v, c) in &self.terms {
            *merged.entry(v).or_insert(0.0) += c;
        }
        self.terms = merged.into_iter().filter(|&(_, c)| c != 0.0).collect();
    }

    pub fn normalized(&self) -> LinearExpr {
        let mut out = self.clone();
        out.normalize();
        out
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|&(_, c)| c == 0.0)
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> + '_ {
        self.terms.iter().map(|&(v, _)| v)
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<f64, ModelError> {
        evaluate_expr(self, a)
    }
}

pub fn evaluate_expr(expr: &LinearExpr, a: &Assignment) -> Result<f64, ModelError> {
    let mut total = expr.constant;
    for &(v, c) in &expr.terms {
        let value = a.get(v).ok_or(ModelError::MissingVariable(v))?;
        total += c * value;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

/// `expr sense rhs`. Any constant inside `expr` is moved to the right when solving.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub expr: LinearExpr,
    pub sense: Sense,
    pub rhs: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
}

impl ConstraintRow {
    pub fn new(expr: LinearExpr, sense: Sense, rhs: f64) -> Self {
        Self { expr, sense, rhs, name: String::new() }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Signed violation amount (0 when satisfied).
    pub fn violation(&self, a: &Assignment) -> Result<f64, ModelError> {
        let lhs = evaluate_expr(&self.expr, a)?;
        Ok(match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        })
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MipModel {
    pub vars: Vec<VarSpec>,
    pub rows: Vec<ConstraintRow>,
    pub objective: LinearExpr,
}

impl MipModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind, lower: f64, upper: f64, name: impl Into<String>) -> VarId {
        let id = VarId(self.vars.len());
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        self.vars.push(VarSpec { id, kind, lower, upper, name: name.into() });
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(VarKind::Binary, 0.0, 1.0, name)
    }

    pub fn add_continuous(&mut self, lower: f64, upper: f64, name: impl Into<String>) -> VarId {
        self.add_var(VarKind::Continuous, lower, upper, name)
    }

    pub fn add_row(&mut self, row: ConstraintRow) -> usize {
        self.rows.push(row);
        self.rows.len() - 1
    }

    pub fn add_constraint(&mut self, expr: LinearExpr, sense: Sense, rhs: f64) -> usize {
        self.add_row(ConstraintRow::new(expr, sense, rhs))
    }

    pub fn var(&self, id: VarId) -> &VarSpec {
        &self.vars[id.0]
    }

    /// Fixes a variable by collapsing its bounds.
    pub fn fix(&mut self, id: VarId, value: f64) {
        let v = &mut self.vars[id.0];
        v.lower = value;
        v.upper = value;
    }

    pub fn num_integral(&self) -> usize {
        self.vars.iter().filter(|v| v.is_integral()).count()
    }

    /// Checks the structural invariants: declared ids, sane bounds, finite rhs.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, v) in self.vars.iter().enumerate() {
            debug_assert_eq!(v.id.0, i);
            let bad_binary = v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0);
            if v.lower > v.upper || v.lower.is_nan() || v.upper.is_nan() || bad_binary {
                return Err(ModelError::InvalidBounds { name: v.name.clone(), lower: v.lower, upper: v.upper });
            }
        }
        let n = self.vars.len();
        let check = |e: &LinearExpr| e.vars().find(|v| v.0 >= n).map_or(Ok(()), |v| Err(ModelError::UndeclaredVariable(v)));
        check(&self.objective)?;
        for (i, row) in self.rows.iter().enumerate() {
            check(&row.expr)?;
            if !row.rhs.is_finite() {
                return Err(ModelError::NonFiniteRhs(i));
            }
        }
        Ok(())
    }

    /// Plain-text dump in CPLEX LP syntax.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let name = |v: VarId| sanitize(&self.vars[v.0].name, v);
        let fmt_expr = |e: &LinearExpr| {
            let e = e.normalized();
            if e.terms.is_empty() {
                return "0 dummy_zero".to_string();
            }
            let mut s = String::new();
            for (k, &(v, c)) in e.terms.iter().enumerate() {
                let sign = if c < 0.0 { "-" } else if k > 0 { "+" } else { "" };
                let _ = write!(s, "{}{} {} ", if k > 0 { " " } else { "" }, sign, c.abs());
                s.push_str(&name(v));
            }
            s
        };
        let _ = writeln!(out, "\\ constant term: {}", self.objective.constant);
        let _ = writeln!(out, "Minimize\n obj: {}", fmt_expr(&self.objective));
        out.push_str("Subject To\n");
        for (i, row) in self.rows.iter().enumerate() {
            let label = if row.name.is_empty() { format!("r{i}") } else { sanitize(&row.name, VarId(i)) };
            let _ = writeln!(out, " {label}: {} {} {}", fmt_expr(&row.expr), row.sense, row.rhs - row.expr.constant);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            let lo = if v.lower == f64::NEG_INFINITY { "-inf".to_string() } else { v.lower.to_string() };
            let hi = if v.upper == f64::INFINITY { "+inf".to_string() } else { v.upper.to_string() };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", name(v.id));
        }
        let ints: Vec<String> = self.vars.iter().filter(|v| v.kind == VarKind::Integer).map(|v| name(v.id)).collect();
        let bins: Vec<String> = self.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| name(v.id)).collect();
        if !ints.is_empty() {
            let _ = writeln!(out, "General\n {}", ints.join(" "));
        }
        if !bins.is_empty() {
            let _ = writeln!(out, "Binary\n {}", bins.join(" "));
        }
        out.push_str("End\n");
        out
    }
}

fn sanitize(name: &str, id: VarId) -> String {
    if name.is_empty() {
        return format!("{id}");
    }
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' }).collect()
}

/// Values for a subset of the model's variables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    values: BTreeMap<VarId, f64>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dense assignment where `values[i]` belongs to `VarId(i)`.
    pub fn from_dense(values: &[f64]) -> Self {
        Self { values: values.iter().enumerate().map(|(i, &v)| (VarId(i), v)).collect() }
    }

    pub fn set(&mut self, v: VarId, value: f64) {
        self.values.insert(v, value);
    }

    pub fn with(mut self, v: VarId, value: f64) -> Self {
        self.set(v, value);
        self
    }

    pub fn get(&self, v: VarId) -> Option<f64> {
        self.values.get(&v).copied()
    }

    pub fn value(&self, v: VarId) -> Result<f64, ModelError> {
        self.get(v).ok_or(ModelError::MissingVariable(v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (VarId, f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }

    /// Restriction to the given ids, binary-rounded where `round` is set.
    pub fn restrict(&self, ids: &[VarId], round: bool) -> Assignment {
        let mut out = Assignment::new();
        for &v in ids {
            if let Some(x) = self.get(v) {
                out.set(v, if round { x.round() } else { x });
            }
        }
        out
    }
}

impl FromIterator<(VarId, f64)> for Assignment {
    fn from_iter<T: IntoIterator<Item = (VarId, f64)>>(iter: T) -> Self {
        Self { values: iter.into_iter().collect() }
    }
}

/// Indices of rows whose sense is violated by more than `tol`. A row that
/// references a variable missing from `a` counts as violated.
pub fn check_feasible(model: &MipModel, a: &Assignment, tol: f64) -> Vec<usize> {
    model
        .rows
        .iter()
        .enumerate()
        .filter(|(_, row)| !matches!(row.violation(a), Ok(v) if v <= tol))
        .map(|(i, _)| i)
        .collect()
}

/// Variables that are missing, out of bounds, or fractional despite an integral kind.
pub fn bound_violations(model: &MipModel, a: &Assignment, tol: f64) -> Vec<VarId> {
    model
        .vars
        .iter()
        .filter(|v| match a.get(v.id) {
            None => true,
            Some(x) => x < v.lower - tol || x > v.upper + tol || (v.is_integral() && (x - x.round()).abs() > tol),
        })
        .map(|v| v.id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn evaluate_examples() {
        let a = Assignment::new().with(VarId(0), 1.0);
        assert_eq!(evaluate_expr(&LinearExpr::new(), &a).unwrap(), 0.0);
        let mut e = LinearExpr::term(VarId(0), 2.0);
        e.add_constant(3.0);
        assert_eq!(evaluate_expr(&e, &a).unwrap(), 5.0);

        let mut cancel = LinearExpr::var(VarId(0));
        cancel.add_term(VarId(0), -1.0);
        cancel.normalize();
        assert!(cancel.terms.is_empty());
        assert_eq!(evaluate_expr(&cancel, &Assignment::new().with(VarId(0), 7.0)).unwrap(), 0.0);
    }

    #[test]
    fn missing_variable_is_named() {
        let err = evaluate_expr(&LinearExpr::var(VarId(4)), &Assignment::new()).unwrap_err();
        assert_eq!(err, ModelError::MissingVariable(VarId(4)));
        assert!(err.to_string().contains("v4"));
    }

    #[test]
    fn check_feasible_examples() {
        let mut m = MipModel::new();
        let x = m.add_continuous(0.0, 10.0, "x");
        m.add_constraint(LinearExpr::var(x), Sense::Ge, 0.0);
        let a = Assignment::new().with(x, 1.0);
        assert!(check_feasible(&m, &a, 1e-6).is_empty());

        let mut m2 = MipModel::new();
        let x = m2.add_continuous(0.0, 10.0, "x");
        m2.add_constraint(LinearExpr::var(x), Sense::Le, 0.5);
        assert_eq!(check_feasible(&m2, &a, 1e-6), vec![0]);

        assert!(check_feasible(&MipModel::new(), &Assignment::new(), 1e-6).is_empty());
    }

    #[test]
    fn validate_rejects_undeclared_and_bad_bounds() {
        let mut m = MipModel::new();
        m.add_constraint(LinearExpr::var(VarId(3)), Sense::Le, 1.0);
        assert_eq!(m.validate(), Err(ModelError::UndeclaredVariable(VarId(3))));

        let mut m = MipModel::new();
        m.add_continuous(2.0, 1.0, "x");
        assert!(matches!(m.validate(), Err(ModelError::InvalidBounds { .. })));
    }

    #[test]
    fn lp_dump_mentions_everything() {
        let mut m = MipModel::new();
        let x = m.add_binary("x[0][1]");
        let y = m.add_continuous(0.0, f64::INFINITY, "y");
        m.objective = LinearExpr::var(x).plus(&LinearExpr::term(y, -2.0));
        m.add_constraint(LinearExpr::var(x).plus(&LinearExpr::var(y)), Sense::Le, 3.0);
        let lp = m.to_lp_string();
        assert!(lp.contains("Minimize"));
        assert!(lp.contains("x_0__1_"));
        assert!(lp.contains("- 2 y"));
        assert!(lp.contains("Binary"));
        assert!(lp.contains("+inf"));
    }

    fn arb_expr() -> impl Strategy<Value = LinearExpr> {
        (prop::collection::vec((0usize..6, -5.0f64..5.0), 0..12), -3.0f64..3.0)
            .prop_map(|(t, c)| LinearExpr { terms: t.into_iter().map(|(v, k)| (VarId(v), k)).collect(), constant: c })
    }

    proptest! {
        #[test]
        fn normalize_idempotent_and_value_preserving(e in arb_expr(), vals in prop::collection::vec(-4.0f64..4.0, 6)) {
            let a = Assignment::from_dense(&vals);
            let once = e.normalized();
            let twice = once.normalized();
            prop_assert_eq!(&once, &twice);
            let ids: Vec<_> = once.vars().collect();
            let mut sorted = ids.clone();
            sorted.dedup();
            prop_assert_eq!(ids.len(), sorted.len());
            let before = evaluate_expr(&e, &a).unwrap();
            let after = evaluate_expr(&once, &a).unwrap();
            prop_assert!((before - after).abs() <= 1e-9 * (1.0 + before.abs()));
        }
    }
}
