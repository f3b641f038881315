//! Linear matrix inequalities as affine matrix expressions in scalar and
//! symmetric-matrix decision variables, plus the solver that decides them.
//!
//! A decision variable contributes one scalar unknown (`Scalar`) or the
//! `n(n+1)/2` upper-triangle entries of a symmetric matrix. Every expression
//! is stored as `constant + Σ x_k · coef_k` over those flat unknowns, with
//! each `coef_k` symmetric.

mod bisect;
mod solver;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::matlib::{svec_len, SymMatrix};
use crate::{Error, Matrix, Result, Vector};

pub use bisect::{bisect_sup, BisectOutcome};
pub use solver::{solve_feasibility, solve_min, SolverSettings};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Scalar,
    Symmetric(usize),
}

impl VarKind {
    pub fn unknowns(self) -> usize {
        match self {
            VarKind::Scalar => 1,
            VarKind::Symmetric(n) => svec_len(n),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVariable {
    pub id: VarId,
    pub kind: VarKind,
    pub name: String,
    offset: usize,
}

impl DecisionVariable {
    /// Index of this variable's first unknown in the flat vector.
    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Flat index of entry `(p, q)` of a symmetric variable.
    fn entry_index(&self, p: usize, q: usize) -> usize {
        let VarKind::Symmetric(n) = self.kind else {
            return self.offset;
        };
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        // Row-major upper triangle: rows before p hold n + (n-1) + ... entries.
        self.offset + p * n - p * p.saturating_sub(1) / 2 + (q - p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// Block must be ≻ 0.
    PositiveDefinite,
    /// Block must be ≺ 0.
    NegativeDefinite,
}

impl Sense {
    /// Multiplier that maps the block onto the "≺ 0" convention.
    pub fn sign(self) -> f64 {
        match self {
            Sense::PositiveDefinite => -1.0,
            Sense::NegativeDefinite => 1.0,
        }
    }
}

/// `constant + Σ x_k · coef_k`, symmetric for every assignment.
#[derive(Clone, Debug)]
pub struct AffineMatrixExpression {
    dim: usize,
    constant: Matrix,
    terms: BTreeMap<usize, Matrix>,
}

impl AffineMatrixExpression {
    pub fn new(dim: usize) -> Self {
        AffineMatrixExpression {
            dim,
            constant: Matrix::zeros(dim, dim),
            terms: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constant(&self) -> SymMatrix {
        SymMatrix::from_upper(self.constant.clone()).expect("square")
    }

    /// Flat unknown indices and their coefficient matrices, ascending.
    pub fn terms(&self) -> impl Iterator<Item = (usize, &Matrix)> {
        self.terms.iter().map(|(k, m)| (*k, m))
    }

    /// Adds `block` at block position `(row, col)` and its transpose at
    /// `(col, row)`. A block on the diagonal is replaced by its symmetric part.
    pub fn add_constant(&mut self, row: usize, col: usize, block: &Matrix) -> Result<()> {
        self.check_placement(row, col, block)?;
        place(&mut self.constant, row, col, block, 1.0);
        Ok(())
    }

    /// Adds `x · coef` at `(row, col)` (mirrored) for a scalar variable.
    pub fn add_scalar_term(
        &mut self,
        var: &DecisionVariable,
        row: usize,
        col: usize,
        coef: &Matrix,
    ) -> Result<()> {
        if var.kind != VarKind::Scalar {
            return Err(Error::input(format!("variable {} is not scalar", var.name)));
        }
        self.check_placement(row, col, coef)?;
        let dim = self.dim;
        let entry = self
            .terms
            .entry(var.offset)
            .or_insert_with(|| Matrix::zeros(dim, dim));
        place(entry, row, col, coef, 1.0);
        Ok(())
    }

    /// Adds `scale · L·X·R` at `(row, col)` (mirrored) for a symmetric
    /// variable `X`. On the diagonal the symmetric part is used, so
    /// `scale = 2, L = I, R = A` yields `XA + AᵀX`.
    pub fn add_matrix_term(
        &mut self,
        var: &DecisionVariable,
        row: usize,
        col: usize,
        left: &Matrix,
        right: &Matrix,
        scale: f64,
    ) -> Result<()> {
        let VarKind::Symmetric(n) = var.kind else {
            return Err(Error::input(format!("variable {} is not a matrix", var.name)));
        };
        if left.ncols() != n || right.nrows() != n {
            return Err(Error::Dimension {
                what: "congruence factor",
                expected: n,
                got: if left.ncols() != n { left.ncols() } else { right.nrows() },
            });
        }
        let probe = Matrix::zeros(left.nrows(), right.ncols());
        self.check_placement(row, col, &probe)?;
        let dim = self.dim;
        for p in 0..n {
            for q in p..n {
                // L·E_pq·R with E_pq the symmetric unit basis element.
                let mut block = left.column(p) * right.row(q);
                if p != q {
                    block += left.column(q) * right.row(p);
                }
                let entry = self
                    .terms
                    .entry(var.entry_index(p, q))
                    .or_insert_with(|| Matrix::zeros(dim, dim));
                place(entry, row, col, &block, scale);
            }
        }
        Ok(())
    }

    /// Evaluates at a flat unknown vector.
    pub fn evaluate_flat(&self, x: &[f64]) -> SymMatrix {
        let mut m = self.constant.clone();
        for (k, coef) in &self.terms {
            m += coef * x[*k];
        }
        SymMatrix::from_upper(m).expect("square")
    }

    fn check_placement(&self, row: usize, col: usize, block: &Matrix) -> Result<()> {
        let fits = row + block.nrows() <= self.dim && col + block.ncols() <= self.dim;
        if !fits {
            return Err(Error::input(format!(
                "{}x{} block at ({row}, {col}) exceeds expression dimension {}",
                block.nrows(),
                block.ncols(),
                self.dim
            )));
        }
        if row == col && block.nrows() != block.ncols() {
            return Err(Error::input("diagonal block must be square"));
        }
        let (r0, r1, c0, c1) = (row, row + block.nrows(), col, col + block.ncols());
        if row != col && r0 < c1 && c0 < r1 {
            return Err(Error::input("off-diagonal block overlaps the diagonal"));
        }
        Ok(())
    }
}

fn place(target: &mut Matrix, row: usize, col: usize, block: &Matrix, scale: f64) {
    let (h, w) = block.shape();
    if row == col {
        for i in 0..h {
            for j in 0..w {
                target[(row + i, col + j)] += scale * 0.5 * (block[(i, j)] + block[(j, i)]);
            }
        }
    } else {
        for i in 0..h {
            for j in 0..w {
                let v = scale * block[(i, j)];
                target[(row + i, col + j)] += v;
                target[(col + j, row + i)] += v;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmiBlock {
    pub label: String,
    pub sense: Sense,
    pub expr: AffineMatrixExpression,
}

/// A conjunction of definiteness constraints over declared variables.
#[derive(Clone, Debug, Default)]
pub struct LmiSystem {
    variables: Vec<DecisionVariable>,
    blocks: Vec<LmiBlock>,
    unknowns: usize,
}

impl LmiSystem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> DecisionVariable {
        self.add_variable(name.into(), VarKind::Scalar)
    }

    pub fn add_symmetric(&mut self, name: impl Into<String>, n: usize) -> DecisionVariable {
        assert!(n >= 1, "symmetric variable needs n >= 1");
        self.add_variable(name.into(), VarKind::Symmetric(n))
    }

    fn add_variable(&mut self, name: String, kind: VarKind) -> DecisionVariable {
        let var = DecisionVariable {
            id: VarId(self.variables.len()),
            kind,
            name,
            offset: self.unknowns,
        };
        self.unknowns += kind.unknowns();
        self.variables.push(var.clone());
        var
    }

    pub fn add_block(&mut self, label: impl Into<String>, sense: Sense, expr: AffineMatrixExpression) {
        self.blocks.push(LmiBlock {
            label: label.into(),
            sense,
            expr,
        });
    }

    pub fn variables(&self) -> &[DecisionVariable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> Option<&DecisionVariable> {
        self.variables.get(id.0)
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    /// Total number of scalar unknowns.
    pub fn unknowns(&self) -> usize {
        self.unknowns
    }

    /// Checks that every variable is referenced by some block and every block
    /// references only declared unknowns.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::input("LMI system has no blocks"));
        }
        let mut used = vec![false; self.unknowns];
        for b in &self.blocks {
            for (k, _) in b.expr.terms() {
                if k >= self.unknowns {
                    return Err(Error::input(format!(
                        "block {} references undeclared unknown {k}",
                        b.label
                    )));
                }
                used[k] = true;
            }
        }
        for v in &self.variables {
            let range = v.offset..v.offset + v.kind.unknowns();
            if !used[range].iter().any(|&u| u) {
                return Err(Error::input(format!(
                    "variable {} is not referenced by any block",
                    v.name
                )));
            }
        }
        Ok(())
    }
}

/// Value of a single decision variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VarValue {
    Scalar(f64),
    Matrix(SymMatrix),
}

/// Values keyed by variable.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    values: BTreeMap<VarId, VarValue>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_scalar(&mut self, var: &DecisionVariable, v: f64) {
        self.values.insert(var.id, VarValue::Scalar(v));
    }

    pub fn set_matrix(&mut self, var: &DecisionVariable, m: SymMatrix) {
        self.values.insert(var.id, VarValue::Matrix(m));
    }

    pub fn get(&self, id: VarId) -> Option<&VarValue> {
        self.values.get(&id)
    }

    pub fn scalar(&self, var: &DecisionVariable) -> Option<f64> {
        match self.values.get(&var.id)? {
            VarValue::Scalar(v) => Some(*v),
            VarValue::Matrix(_) => None,
        }
    }

    pub fn matrix(&self, var: &DecisionVariable) -> Option<&SymMatrix> {
        match self.values.get(&var.id)? {
            VarValue::Matrix(m) => Some(m),
            VarValue::Scalar(_) => None,
        }
    }

    /// Packs into the flat unknown vector of `system`.
    pub fn to_flat(&self, system: &LmiSystem) -> Result<Vector> {
        let mut x = Vector::zeros(system.unknowns());
        for var in system.variables() {
            match (var.kind, self.values.get(&var.id)) {
                (VarKind::Scalar, Some(VarValue::Scalar(v))) => x[var.offset] = *v,
                (VarKind::Symmetric(n), Some(VarValue::Matrix(m))) if m.dim() == n => {
                    for p in 0..n {
                        for q in p..n {
                            x[var.entry_index(p, q)] = m.get(p, q);
                        }
                    }
                }
                (_, Some(_)) => {
                    return Err(Error::input(format!(
                        "value for variable {} has the wrong shape",
                        var.name
                    )))
                }
                (_, None) => {
                    return Err(Error::input(format!("variable {} is unassigned", var.name)))
                }
            }
        }
        Ok(x)
    }

    pub fn from_flat(system: &LmiSystem, x: &[f64]) -> Self {
        let mut a = Assignment::new();
        for var in system.variables() {
            match var.kind {
                VarKind::Scalar => a.set_scalar(var, x[var.offset]),
                VarKind::Symmetric(n) => {
                    let m = Matrix::from_fn(n, n, |p, q| x[var.entry_index(p, q)]);
                    a.set_matrix(var, SymMatrix::from_upper(m).expect("square"));
                }
            }
        }
        a
    }
}

/// Evaluates every block of `system` at `assignment`.
pub fn evaluate(system: &LmiSystem, assignment: &Assignment) -> Result<Vec<SymMatrix>> {
    let x = assignment.to_flat(system)?;
    Ok(system
        .blocks()
        .iter()
        .map(|b| b.expr.evaluate_flat(x.as_slice()))
        .collect())
}

/// Signed definiteness margin of each block: the largest eigenvalue of the
/// block mapped onto the "≺ 0" convention. Negative means satisfied.
pub fn block_margins(system: &LmiSystem, assignment: &Assignment) -> Result<Vec<f64>> {
    let values = evaluate(system, assignment)?;
    system
        .blocks()
        .iter()
        .zip(values)
        .map(|(b, v)| v.scale(b.sense.sign()).max_eigenvalue())
        .collect()
}

/// Linear functional `Σ c_k x_k` over decision variables.
#[derive(Clone, Debug, Default)]
pub struct LinearObjective {
    coefs: BTreeMap<usize, f64>,
}

impl LinearObjective {
    pub fn new() -> Self {
        Self::default()
    }

    /// `+ coef · x` for a scalar variable.
    pub fn scalar(mut self, var: &DecisionVariable, coef: f64) -> Self {
        *self.coefs.entry(var.offset).or_default() += coef;
        self
    }

    /// `+ coef · tr(X)` for a symmetric variable.
    pub fn trace(mut self, var: &DecisionVariable, coef: f64) -> Self {
        if let VarKind::Symmetric(n) = var.kind {
            for p in 0..n {
                *self.coefs.entry(var.entry_index(p, p)).or_default() += coef;
            }
        }
        self
    }

    pub(crate) fn to_vector(&self, unknowns: usize) -> Result<Vector> {
        let mut c = Vector::zeros(unknowns);
        for (&k, &v) in &self.coefs {
            if k >= unknowns {
                return Err(Error::input("objective references an undeclared unknown"));
            }
            c[k] = v;
        }
        Ok(c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SdpStatus {
    StrictlyFeasible,
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub assignment: Assignment,
    /// Worst signed block margin (largest eigenvalue in the "≺ 0"
    /// convention). Negative means every block holds.
    pub margin: f64,
    /// Index of the block attaining `margin`.
    pub worst_block: usize,
    pub status: SdpStatus,
    /// Newton steps taken.
    pub iterations: usize,
    pub objective: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_index_is_row_major_upper() {
        let mut sys = LmiSystem::new();
        let _s = sys.add_scalar("s");
        let x = sys.add_symmetric("X", 3);
        let idx: Vec<usize> = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
            .iter()
            .map(|&(p, q)| x.entry_index(p, q))
            .collect();
        assert_eq!(idx, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(x.entry_index(2, 1), 5);
        assert_eq!(sys.unknowns(), 7);
    }

    #[test]
    fn scalar_block_evaluation() {
        // x·I₂ − I₂ at x = 0 is −I₂.
        let mut sys = LmiSystem::new();
        let x = sys.add_scalar("x");
        let mut e = AffineMatrixExpression::new(2);
        e.add_constant(0, 0, &(-Matrix::identity(2, 2))).unwrap();
        e.add_scalar_term(&x, 0, 0, &Matrix::identity(2, 2)).unwrap();
        sys.add_block("b", Sense::NegativeDefinite, e);
        let mut a = Assignment::new();
        a.set_scalar(&x, 0.0);
        let v = evaluate(&sys, &a).unwrap();
        assert_eq!(v[0], SymMatrix::identity(2).scale(-1.0));
        assert_eq!(block_margins(&sys, &a).unwrap(), vec![-1.0]);
    }

    #[test]
    fn missing_variable_is_input_error() {
        let mut sys = LmiSystem::new();
        let x = sys.add_scalar("x");
        let mut e = AffineMatrixExpression::new(1);
        e.add_scalar_term(&x, 0, 0, &Matrix::identity(1, 1)).unwrap();
        sys.add_block("b", Sense::PositiveDefinite, e);
        assert!(matches!(evaluate(&sys, &Assignment::new()), Err(Error::Input(_))));
    }

    #[test]
    fn congruence_term_matches_dense_product() {
        let mut sys = LmiSystem::new();
        let p = sys.add_symmetric("P", 2);
        let a = Matrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.5, -3.0]);
        let e_mat = Matrix::from_row_slice(2, 1, &[0.3, -0.7]);
        let mut e = AffineMatrixExpression::new(4);
        e.add_matrix_term(&p, 0, 0, &Matrix::identity(2, 2), &a, 2.0).unwrap();
        e.add_matrix_term(&p, 0, 2, &Matrix::identity(2, 2), &e_mat, 1.0).unwrap();
        e.add_matrix_term(&p, 3, 3, &e_mat.transpose(), &e_mat, 1.0).unwrap();
        let pv = Matrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.5]);
        let mut asg = Assignment::new();
        asg.set_matrix(&p, SymMatrix::from_upper(pv.clone()).unwrap());
        let got = evaluate(&{
            let mut s = sys.clone();
            s.add_block("b", Sense::NegativeDefinite, e);
            s
        }, &asg)
        .unwrap()
        .remove(0);

        let mut want = Matrix::zeros(4, 4);
        let he = &pv * &a + a.transpose() * &pv;
        want.view_mut((0, 0), (2, 2)).copy_from(&he);
        let pe = &pv * &e_mat;
        want.view_mut((0, 2), (2, 1)).copy_from(&pe);
        want.view_mut((2, 0), (1, 2)).copy_from(&pe.transpose());
        want[(3, 3)] = (e_mat.transpose() * &pv * &e_mat)[(0, 0)];
        assert!((got.as_matrix() - want).amax() < 1e-14);
    }

    #[test]
    fn placement_checks() {
        let mut e = AffineMatrixExpression::new(3);
        assert!(e.add_constant(2, 2, &Matrix::identity(2, 2)).is_err());
        assert!(e.add_constant(0, 1, &Matrix::identity(2, 2)).is_err());
        assert!(e.add_constant(0, 2, &Matrix::zeros(2, 1)).is_ok());
    }

    #[test]
    fn validate_catches_unused_variable() {
        let mut sys = LmiSystem::new();
        let x = sys.add_scalar("x");
        let _unused = sys.add_scalar("y");
        let mut e = AffineMatrixExpression::new(1);
        e.add_scalar_term(&x, 0, 0, &Matrix::identity(1, 1)).unwrap();
        sys.add_block("b", Sense::PositiveDefinite, e);
        assert!(sys.validate().is_err());
    }

    #[test]
    fn flat_round_trip() {
        let mut sys = LmiSystem::new();
        let k = sys.add_scalar("k");
        let p = sys.add_symmetric("P", 3);
        let x: Vec<f64> = (0..sys.unknowns()).map(|i| i as f64 * 0.5 - 1.0).collect();
        let a = Assignment::from_flat(&sys, &x);
        assert_eq!(a.scalar(&k), Some(-1.0));
        assert_eq!(a.matrix(&p).unwrap().get(2, 1), a.matrix(&p).unwrap().get(1, 2));
        assert_eq!(a.to_flat(&sys).unwrap().as_slice(), x.as_slice());
    }
}
