//! Fuzzy-Lyapunov H∞ synthesis for the PDC output-feedback law.
//!
//! With `V = Σ h_e xᵀP_e x` and a symmetric slack `M`, the closed loop is
//! certified when, for every `ρ, e, i, j, l ∈ {1..r}`,
//!
//! ```text
//! P_ρ + M/r − Σ_k P_k/r ≻ 0,        P_e ≻ 0,
//!
//! ┌ He(P_e A_i) + ε N_iᵀN_i + C1_iᵀC1_i + ΦM   C1_iᵀD_i + P_e E_i   (B_i k_j C2_l)ᵀ   P_e        ┐
//! │ *                                         D_iᵀD_i − γ²I        0                 0          │ ≺ 0
//! │ *                                         *                    −ε⁻¹I             0          │
//! └ *                                         *                    *                 −εβ⁻²I     ┘
//! ```
//!
//! with `ε = ε_ijl`. Everything is affine in `P`, `M` and the gains `k`, so
//! one SDP feasibility solve yields a controller.

use serde::{Deserialize, Serialize};

use crate::fbs::{FuzzyBilinearModel, PdcController};
use crate::matlib::{cholesky, schur_reduce, PartitionedMatrix, SymMatrix};
use crate::sdp::{
    bisect_sup, solve_feasibility, solve_min, AffineMatrixExpression, Assignment, DecisionVariable,
    LinearObjective, LmiSystem, SdpStatus, Sense, SolverSettings,
};
use crate::{Error, Matrix, Result};

/// Default upper end of the Φ search.
pub const DEFAULT_PHI_CEILING: f64 = 1e3;

/// `ε_ijl`: one value for every triple, or a full row-major `r³` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Epsilon {
    Uniform(f64),
    Table(Vec<f64>),
}

impl Epsilon {
    pub fn get(&self, r: usize, i: usize, j: usize, l: usize) -> f64 {
        match self {
            Epsilon::Uniform(e) => *e,
            Epsilon::Table(t) => t[(i * r + j) * r + l],
        }
    }

    fn check(&self, r: usize) -> Result<()> {
        let values: &[f64] = match self {
            Epsilon::Uniform(e) => std::slice::from_ref(e),
            Epsilon::Table(t) => {
                if t.len() != r * r * r {
                    return Err(Error::Dimension {
                        what: "epsilon table",
                        expected: r * r * r,
                        got: t.len(),
                    });
                }
                t
            }
        };
        if values.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return Err(Error::input("every epsilon must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub gamma: f64,
    pub beta: f64,
    pub epsilon: Epsilon,
    pub phi: f64,
    #[serde(default = "default_strictness")]
    pub strictness: f64,
    /// Share one `P` and one gain across all rules.
    #[serde(default)]
    pub common_lyapunov: bool,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn default_strictness() -> f64 {
    1e-7
}

impl SynthesisConfig {
    pub fn new(gamma: f64, beta: f64, epsilon: f64, phi: f64) -> Self {
        SynthesisConfig {
            gamma,
            beta,
            epsilon: Epsilon::Uniform(epsilon),
            phi,
            strictness: default_strictness(),
            common_lyapunov: false,
            solver: SolverSettings::default(),
        }
    }

    pub fn with_common_lyapunov(mut self, common: bool) -> Self {
        self.common_lyapunov = common;
        self
    }

    pub fn validate(&self, model: &FuzzyBilinearModel) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::input(format!("gamma must be finite and > 0, got {}", self.gamma)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::input(format!("beta must be finite and > 0, got {}", self.beta)));
        }
        if !(self.phi >= 0.0) || !self.phi.is_finite() {
            return Err(Error::input(format!("phi must be finite and >= 0, got {}", self.phi)));
        }
        if !(self.strictness > 0.0) {
            return Err(Error::input("strictness must be > 0"));
        }
        self.epsilon.check(model.rule_count())
    }

    fn settings(&self) -> SolverSettings {
        SolverSettings {
            strictness: self.strictness,
            ..self.solver.clone()
        }
    }
}

/// Decision variables of the synthesis LMIs. In common mode the per-rule
/// entries are clones of one variable.
#[derive(Clone, Debug)]
pub struct SynthesisVariables {
    pub p: Vec<DecisionVariable>,
    pub m: DecisionVariable,
    pub k: Vec<DecisionVariable>,
}

impl SynthesisVariables {
    pub fn declare(system: &mut LmiSystem, r: usize, n: usize, common: bool) -> Self {
        let (p, k) = if common {
            let p = system.add_symmetric("P", n);
            let k = system.add_scalar("k");
            (vec![p; r], vec![k; r])
        } else {
            let p = (1..=r).map(|e| system.add_symmetric(format!("P{e}"), n)).collect();
            let k = (1..=r).map(|j| system.add_scalar(format!("k{j}"))).collect();
            (p, k)
        };
        let m = system.add_symmetric("M", n);
        SynthesisVariables { p, m, k }
    }
}

/// A Lyapunov matrix that is either a decision variable or fixed data.
#[derive(Clone, Debug)]
enum PTerm {
    Var(DecisionVariable),
    Fixed(SymMatrix),
}

#[derive(Clone, Debug)]
enum KTerm {
    Var(DecisionVariable),
    Fixed(f64),
}

#[derive(Clone, Debug)]
enum GammaSq {
    Fixed(f64),
    Var(DecisionVariable),
}

fn add_p(
    expr: &mut AffineMatrixExpression,
    p: &PTerm,
    row: usize,
    col: usize,
    left: &Matrix,
    right: &Matrix,
    scale: f64,
) -> Result<()> {
    match p {
        PTerm::Var(v) => expr.add_matrix_term(v, row, col, left, right, scale),
        PTerm::Fixed(pm) => expr.add_constant(row, col, &(left * pm.as_matrix() * right * scale)),
    }
}

fn add_k(expr: &mut AffineMatrixExpression, k: &KTerm, row: usize, col: usize, coef: &Matrix) -> Result<()> {
    match k {
        KTerm::Var(v) => expr.add_scalar_term(v, row, col, coef),
        KTerm::Fixed(kv) => expr.add_constant(row, col, &(coef * *kv)),
    }
}

fn lmi13_blocks(p: &[PTerm], m: &DecisionVariable, n: usize) -> Result<Vec<(String, AffineMatrixExpression)>> {
    let r = p.len();
    let eye = Matrix::identity(n, n);
    let inv_r = 1.0 / r as f64;
    let mut out = Vec::with_capacity(r);
    for rho in 0..r {
        let mut e = AffineMatrixExpression::new(n);
        add_p(&mut e, &p[rho], 0, 0, &eye, &eye, 1.0)?;
        e.add_matrix_term(m, 0, 0, &eye, &eye, inv_r)?;
        for pk in p {
            add_p(&mut e, pk, 0, 0, &eye, &eye, -inv_r)?;
        }
        out.push((format!("lmi13[rho={}]", rho + 1), e));
    }
    Ok(out)
}

fn lmi14_blocks(p: &[PTerm], n: usize) -> Result<Vec<(String, AffineMatrixExpression)>> {
    let eye = Matrix::identity(n, n);
    p.iter()
        .enumerate()
        .map(|(e, pe)| {
            let mut x = AffineMatrixExpression::new(n);
            add_p(&mut x, pe, 0, 0, &eye, &eye, 1.0)?;
            Ok((format!("lmi14[e={}]", e + 1), x))
        })
        .collect()
}

struct Lmi15Inputs<'a> {
    model: &'a FuzzyBilinearModel,
    config: &'a SynthesisConfig,
    p: &'a [PTerm],
    m: Option<&'a DecisionVariable>,
    k: &'a [KTerm],
    gamma_sq: GammaSq,
}

fn lmi15_blocks(inp: &Lmi15Inputs) -> Result<Vec<(String, AffineMatrixExpression)>> {
    let model = inp.model;
    let cfg = inp.config;
    let (n, m, r) = (model.state_dim(), model.disturbance_dim(), model.rule_count());
    let (o2, o3, o4) = (n, n + m, 2 * n + m);
    let dim = 3 * n + m;
    let eye_n = Matrix::identity(n, n);
    let eye_m = Matrix::identity(m, m);
    let rules = model.rules();
    let mut out = Vec::with_capacity(r.pow(4));
    for (i, ri) in rules.iter().enumerate() {
        for j in 0..r {
            for (l, rl) in rules.iter().enumerate() {
                let eps = cfg.epsilon.get(r, i, j, l);
                let gain_coef = rl.c2.transpose() * ri.b.transpose();
                for e in 0..r {
                    let pe = &inp.p[e];
                    let mut x = AffineMatrixExpression::new(dim);
                    add_p(&mut x, pe, 0, 0, &eye_n, &ri.a, 2.0)?;
                    let fixed11 = ri.n.transpose() * &ri.n * eps + ri.c1.transpose() * &ri.c1;
                    x.add_constant(0, 0, &fixed11)?;
                    if let Some(mv) = inp.m {
                        if cfg.phi != 0.0 {
                            x.add_matrix_term(mv, 0, 0, &eye_n, &eye_n, cfg.phi)?;
                        }
                    }
                    x.add_constant(0, o2, &(ri.c1.transpose() * &ri.d))?;
                    add_p(&mut x, pe, 0, o2, &eye_n, &ri.e, 1.0)?;
                    add_k(&mut x, &inp.k[j], 0, o3, &gain_coef)?;
                    add_p(&mut x, pe, 0, o4, &eye_n, &eye_n, 1.0)?;
                    x.add_constant(o2, o2, &(ri.d.transpose() * &ri.d))?;
                    match &inp.gamma_sq {
                        GammaSq::Fixed(g2) => x.add_constant(o2, o2, &(&eye_m * -g2))?,
                        GammaSq::Var(v) => x.add_scalar_term(v, o2, o2, &(-&eye_m))?,
                    }
                    x.add_constant(o3, o3, &(&eye_n * (-1.0 / eps)))?;
                    x.add_constant(o4, o4, &(&eye_n * (-eps / (cfg.beta * cfg.beta))))?;
                    out.push((block15_label(i, j, l, e), x));
                }
            }
        }
    }
    Ok(out)
}

fn block15_label(i: usize, j: usize, l: usize, e: usize) -> String {
    format!("lmi15[i={},j={},l={},e={}]", i + 1, j + 1, l + 1, e + 1)
}

fn var_terms(vars: &SynthesisVariables) -> (Vec<PTerm>, Vec<KTerm>) {
    (
        vars.p.iter().cloned().map(PTerm::Var).collect(),
        vars.k.iter().cloned().map(KTerm::Var).collect(),
    )
}

/// `P_ρ + M/r − Σ_k P_k/r`, one block per `ρ`, sense ≻ 0.
pub fn assemble_lmi13(vars: &SynthesisVariables, n: usize) -> Result<Vec<(String, AffineMatrixExpression)>> {
    let (p, _) = var_terms(vars);
    lmi13_blocks(&p, &vars.m, n)
}

/// `P_e ≻ 0`, one block per `e`.
pub fn assemble_lmi14(vars: &SynthesisVariables, n: usize) -> Result<Vec<(String, AffineMatrixExpression)>> {
    let (p, _) = var_terms(vars);
    lmi14_blocks(&p, n)
}

/// The `r⁴` blocks of size `3n + m`, sense ≺ 0, ordered by `(i, j, l, e)`.
pub fn assemble_lmi15(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    vars: &SynthesisVariables,
) -> Result<Vec<(String, AffineMatrixExpression)>> {
    let (p, k) = var_terms(vars);
    lmi15_blocks(&Lmi15Inputs {
        model,
        config,
        p: &p,
        m: Some(&vars.m),
        k: &k,
        gamma_sq: GammaSq::Fixed(config.gamma * config.gamma),
    })
}

/// The complete system: `r` blocks of each of the first two kinds followed by
/// the `r⁴` large blocks.
pub fn build_system(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
) -> Result<(LmiSystem, SynthesisVariables)> {
    build_system_with(model, config, false).map(|(s, v, _)| (s, v))
}

fn build_system_with(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    gamma_var: bool,
) -> Result<(LmiSystem, SynthesisVariables, Option<DecisionVariable>)> {
    config.validate(model)?;
    let n = model.state_dim();
    let mut system = LmiSystem::new();
    let vars = SynthesisVariables::declare(&mut system, model.rule_count(), n, config.common_lyapunov);
    let g = gamma_var.then(|| system.add_scalar("gamma2"));
    let (p, k) = var_terms(&vars);
    let gamma_sq = match &g {
        Some(v) => GammaSq::Var(v.clone()),
        None => GammaSq::Fixed(config.gamma * config.gamma),
    };
    for (label, e) in lmi13_blocks(&p, &vars.m, n)? {
        system.add_block(label, Sense::PositiveDefinite, e);
    }
    for (label, e) in lmi14_blocks(&p, n)? {
        system.add_block(label, Sense::PositiveDefinite, e);
    }
    let blocks = lmi15_blocks(&Lmi15Inputs {
        model,
        config,
        p: &p,
        m: Some(&vars.m),
        k: &k,
        gamma_sq,
    })?;
    for (label, e) in blocks {
        system.add_block(label, Sense::NegativeDefinite, e);
    }
    Ok((system, vars, g))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    #[serde(rename = "P")]
    pub p: Vec<SymMatrix>,
    #[serde(rename = "M")]
    pub m: SymMatrix,
    pub gains: Vec<f64>,
    pub config: SynthesisConfig,
    pub status: SdpStatus,
    /// Worst signed block margin ("≺ 0" convention); below `-strictness`
    /// when strictly feasible.
    pub margin: f64,
    pub worst_block: String,
    pub iterations: usize,
    /// Human-readable cause when the LMIs are infeasible and a structural
    /// obstruction is recognised.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
}

impl SynthesisResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SdpStatus::StrictlyFeasible
    }

    pub fn controller(&self) -> Result<PdcController> {
        PdcController::new(self.config.beta, self.gains.clone())
    }
}

fn extract(vars: &SynthesisVariables, a: &Assignment) -> Result<(Vec<SymMatrix>, SymMatrix, Vec<f64>)> {
    let missing = |name: &str| Error::input(format!("assignment lacks variable {name}"));
    let p = vars
        .p
        .iter()
        .map(|v| a.matrix(v).cloned().ok_or_else(|| missing(&v.name)))
        .collect::<Result<Vec<_>>>()?;
    let m = a.matrix(&vars.m).cloned().ok_or_else(|| missing(&vars.m.name))?;
    let k = vars
        .k
        .iter()
        .map(|v| a.scalar(v).ok_or_else(|| missing(&v.name)))
        .collect::<Result<Vec<_>>>()?;
    Ok((p, m, k))
}

/// Recognises `D_iᵀD_i − γ²I ⊀ 0`, which no choice of variables can repair.
pub fn feedthrough_obstruction(model: &FuzzyBilinearModel, gamma: f64) -> Result<Option<String>> {
    for (i, rule) in model.rules().iter().enumerate() {
        let dtd = SymMatrix::symmetrize(&(rule.d.transpose() * &rule.d))?;
        let top = dtd.max_eigenvalue()?;
        if top >= gamma * gamma {
            return Ok(Some(format!(
                "DᵀD − γ²I is not negative definite for rule {}: λmax(DᵀD) = {top:.6e} >= γ² = {:.6e}",
                i + 1,
                gamma * gamma
            )));
        }
    }
    Ok(None)
}

/// Solves the synthesis LMIs at the configured scalars.
pub fn synthesize(model: &FuzzyBilinearModel, config: &SynthesisConfig) -> Result<SynthesisResult> {
    let (system, vars) = build_system(model, config)?;
    let sol = solve_feasibility(&system, &config.settings())?;
    let (p, m, gains) = extract(&vars, &sol.assignment)?;
    let mut status = sol.status;
    if status == SdpStatus::StrictlyFeasible && p.iter().any(|pe| cholesky(pe).is_none()) {
        status = SdpStatus::Infeasible;
    }
    let diagnosis = if status == SdpStatus::StrictlyFeasible {
        None
    } else {
        feedthrough_obstruction(model, config.gamma)?
    };
    Ok(SynthesisResult {
        p,
        m,
        gains,
        config: config.clone(),
        status,
        margin: sol.margin,
        worst_block: system.blocks()[sol.worst_block].label.clone(),
        iterations: sol.iterations,
        diagnosis,
    })
}

/// Model plus synthesis result, the on-disk report format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub model: FuzzyBilinearModel,
    pub result: SynthesisResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationReport>,
}

impl SynthesisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Dense evaluation of every synthesis block at fixed values, built directly
/// from the block layout rather than through affine expressions.
pub fn theorem_blocks(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    p: &[SymMatrix],
    m: &SymMatrix,
    gains: &[f64],
) -> Result<Vec<(String, Sense, SymMatrix)>> {
    check_values(model, p, m, gains)?;
    let (n, nw, r) = (model.state_dim(), model.disturbance_dim(), model.rule_count());
    let mut out = Vec::with_capacity(2 * r + r.pow(4));
    let mean = p.iter().fold(Matrix::zeros(n, n), |acc, pk| acc + pk.as_matrix()) / r as f64;
    for (rho, prho) in p.iter().enumerate() {
        let b = prho.as_matrix() + m.as_matrix() / r as f64 - &mean;
        out.push((format!("lmi13[rho={}]", rho + 1), Sense::PositiveDefinite, SymMatrix::symmetrize(&b)?));
    }
    for (e, pe) in p.iter().enumerate() {
        out.push((format!("lmi14[e={}]", e + 1), Sense::PositiveDefinite, pe.clone()));
    }
    let dim = 3 * n + nw;
    let rules = model.rules();
    for (i, ri) in rules.iter().enumerate() {
        for (j, &kj) in gains.iter().enumerate() {
            for (l, rl) in rules.iter().enumerate() {
                let eps = config.epsilon.get(r, i, j, l);
                let bkc = &ri.b * &rl.c2 * kj;
                for (e, pe) in p.iter().enumerate() {
                    let pm = pe.as_matrix();
                    let mut f = Matrix::zeros(dim, dim);
                    let pa = pm * &ri.a;
                    let b11 = &pa + pa.transpose()
                        + ri.n.transpose() * &ri.n * eps
                        + ri.c1.transpose() * &ri.c1
                        + m.as_matrix() * config.phi;
                    let b12 = ri.c1.transpose() * &ri.d + pm * &ri.e;
                    let b22 = ri.d.transpose() * &ri.d - Matrix::identity(nw, nw) * config.gamma.powi(2);
                    f.view_mut((0, 0), (n, n)).copy_from(&b11);
                    f.view_mut((0, n), (n, nw)).copy_from(&b12);
                    f.view_mut((n, 0), (nw, n)).copy_from(&b12.transpose());
                    f.view_mut((0, n + nw), (n, n)).copy_from(&bkc.transpose());
                    f.view_mut((n + nw, 0), (n, n)).copy_from(&bkc);
                    f.view_mut((0, 2 * n + nw), (n, n)).copy_from(pm);
                    f.view_mut((2 * n + nw, 0), (n, n)).copy_from(pm);
                    f.view_mut((n, n), (nw, nw)).copy_from(&b22);
                    for d in 0..n {
                        f[(n + nw + d, n + nw + d)] = -1.0 / eps;
                        f[(2 * n + nw + d, 2 * n + nw + d)] = -eps / config.beta.powi(2);
                    }
                    out.push((block15_label(i, j, l, e), Sense::NegativeDefinite, SymMatrix::symmetrize(&f)?));
                }
            }
        }
    }
    Ok(out)
}

/// The reduced quadratic matrix inequality for each `(i, j, l, e)`:
///
/// ```text
/// ┌ He(P_e A_i) + ε(B_i k_j C2_l)ᵀ(B_i k_j C2_l) + ε N_iᵀN_i + ε⁻¹β²P_e² + C1_iᵀC1_i + ΦM   C1_iᵀD_i + P_e E_i ┐
/// └ *                                                                                     D_iᵀD_i − γ²I      ┘
/// ```
pub fn qmi_blocks(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    p: &[SymMatrix],
    m: &SymMatrix,
    gains: &[f64],
) -> Result<Vec<(String, SymMatrix)>> {
    check_values(model, p, m, gains)?;
    let (n, nw, r) = (model.state_dim(), model.disturbance_dim(), model.rule_count());
    let rules = model.rules();
    let mut out = Vec::with_capacity(r.pow(4));
    for (i, ri) in rules.iter().enumerate() {
        for (j, &kj) in gains.iter().enumerate() {
            for (l, rl) in rules.iter().enumerate() {
                let eps = config.epsilon.get(r, i, j, l);
                let bkc = &ri.b * &rl.c2 * kj;
                for (e, pe) in p.iter().enumerate() {
                    let pm = pe.as_matrix();
                    let mut q = Matrix::zeros(n + nw, n + nw);
                    let b11 = ri.a.transpose() * pm
                        + pm * &ri.a
                        + bkc.transpose() * &bkc * eps
                        + ri.n.transpose() * &ri.n * eps
                        + pm * pm * (config.beta.powi(2) / eps)
                        + ri.c1.transpose() * &ri.c1
                        + m.as_matrix() * config.phi;
                    let b12 = ri.c1.transpose() * &ri.d + pm * &ri.e;
                    let b22 = ri.d.transpose() * &ri.d - Matrix::identity(nw, nw) * config.gamma.powi(2);
                    q.view_mut((0, 0), (n, n)).copy_from(&b11);
                    q.view_mut((0, n), (n, nw)).copy_from(&b12);
                    q.view_mut((n, 0), (nw, n)).copy_from(&b12.transpose());
                    q.view_mut((n, n), (nw, nw)).copy_from(&b22);
                    out.push((block15_label(i, j, l, e), SymMatrix::symmetrize(&q)?));
                }
            }
        }
    }
    Ok(out)
}

fn check_values(model: &FuzzyBilinearModel, p: &[SymMatrix], m: &SymMatrix, gains: &[f64]) -> Result<()> {
    let (n, r) = (model.state_dim(), model.rule_count());
    if p.len() != r {
        return Err(Error::Dimension {
            what: "Lyapunov matrix count",
            expected: r,
            got: p.len(),
        });
    }
    if gains.len() != r {
        return Err(Error::Dimension {
            what: "gain count",
            expected: r,
            got: gains.len(),
        });
    }
    for s in p.iter().chain(std::iter::once(m)) {
        if s.dim() != n {
            return Err(Error::Dimension {
                what: "Lyapunov/slack matrix size",
                expected: n,
                got: s.dim(),
            });
        }
        if !s.is_finite() {
            return Err(Error::input("Lyapunov/slack matrix has non-finite entries"));
        }
    }
    if gains.iter().any(|k| !k.is_finite()) {
        return Err(Error::input("gains must be finite"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckFamily {
    /// Definiteness of every synthesis block.
    TheoremBlock,
    /// Negative definiteness of the reduced quadratic form.
    Qmi,
    /// Schur complement of the large block equals the reduced form.
    SchurEquivalence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub family: CheckFamily,
    pub label: String,
    /// Signed eigenvalue margin ("≺ 0" convention) for definiteness checks;
    /// relative Frobenius discrepancy for Schur checks.
    pub value: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn family(&self, family: CheckFamily) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(move |c| c.family == family)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Largest value within a family.
    pub fn worst(&self, family: CheckFamily) -> Option<f64> {
        self.family(family).map(|c| c.value).reduce(f64::max)
    }
}

/// Relative tolerance for the Schur equivalence check.
pub const SCHUR_TOLERANCE: f64 = 1e-9;

/// Re-checks a synthesis result from its matrices alone.
pub fn verify_solution(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    result: &SynthesisResult,
) -> Result<VerificationReport> {
    verify_point(model, config, &result.p, &result.m, &result.gains)
}

/// As [`verify_solution`] for explicit `(P, M, k)`.
pub fn verify_point(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    p: &[SymMatrix],
    m: &SymMatrix,
    gains: &[f64],
) -> Result<VerificationReport> {
    config.validate(model)?;
    let n = model.state_dim();
    let nw = model.disturbance_dim();
    let mut checks = Vec::new();
    let blocks = theorem_blocks(model, config, p, m, gains)?;
    for (label, sense, b) in &blocks {
        let margin = b.scale(sense.sign()).max_eigenvalue()?;
        checks.push(CheckResult {
            family: CheckFamily::TheoremBlock,
            label: label.clone(),
            value: margin,
            passed: margin < -config.strictness,
        });
    }
    let qmis = qmi_blocks(model, config, p, m, gains)?;
    for (label, q) in &qmis {
        let margin = q.max_eigenvalue()?;
        checks.push(CheckResult {
            family: CheckFamily::Qmi,
            label: label.clone(),
            value: margin,
            passed: margin < 0.0,
        });
    }
    let large = blocks.iter().filter(|(_, sense, _)| *sense == Sense::NegativeDefinite);
    for ((label, _, b), (_, q)) in large.zip(&qmis) {
        let split = PartitionedMatrix::split(b, n + nw)?;
        let reduced = schur_reduce(&split)?;
        let diff = (reduced.as_matrix() - q.as_matrix()).norm();
        let rel = diff / (1.0 + q.as_matrix().norm());
        let tail_nd = split.c.max_eigenvalue()? < 0.0;
        checks.push(CheckResult {
            family: CheckFamily::SchurEquivalence,
            label: label.clone(),
            value: rel,
            passed: rel <= SCHUR_TOLERANCE && tail_nd,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerificationReport { passed, checks })
}

/// Outcome of searching for a slack `M` at fixed `(P, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointCertificate {
    pub status: SdpStatus,
    pub margin: f64,
    pub worst_block: String,
    #[serde(rename = "M")]
    pub m: SymMatrix,
}

/// Decides whether some `M` certifies the synthesis LMIs at the given
/// Lyapunov matrices and gains.
pub fn certify_fixed_point(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    p: &[SymMatrix],
    gains: &[f64],
) -> Result<FixedPointCertificate> {
    config.validate(model)?;
    let n = model.state_dim();
    check_values(model, p, &SymMatrix::zeros(n), gains)?;
    let mut system = LmiSystem::new();
    let m = system.add_symmetric("M", n);
    let pt: Vec<PTerm> = p.iter().cloned().map(PTerm::Fixed).collect();
    let kt: Vec<KTerm> = gains.iter().copied().map(KTerm::Fixed).collect();
    for (label, e) in lmi13_blocks(&pt, &m, n)? {
        system.add_block(label, Sense::PositiveDefinite, e);
    }
    for (label, e) in lmi14_blocks(&pt, n)? {
        system.add_block(label, Sense::PositiveDefinite, e);
    }
    let blocks = lmi15_blocks(&Lmi15Inputs {
        model,
        config,
        p: &pt,
        m: Some(&m),
        k: &kt,
        gamma_sq: GammaSq::Fixed(config.gamma * config.gamma),
    })?;
    for (label, e) in blocks {
        system.add_block(label, Sense::NegativeDefinite, e);
    }
    let sol = solve_feasibility(&system, &config.settings())?;
    Ok(FixedPointCertificate {
        status: sol.status,
        margin: sol.margin,
        worst_block: system.blocks()[sol.worst_block].label.clone(),
        m: sol.assignment.matrix(&m).cloned().expect("M assigned"),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhiSearch {
    pub phi_max: f64,
    /// True when the ceiling itself was feasible, so `phi_max` is only a
    /// lower bound.
    pub capped: bool,
    pub ceiling: f64,
    pub evaluations: usize,
    pub result: SynthesisResult,
}

/// Largest Φ (within `tol`, up to `ceiling`) for which synthesis succeeds.
pub fn maximize_phi(
    model: &FuzzyBilinearModel,
    config: &SynthesisConfig,
    ceiling: f64,
    tol: f64,
) -> Result<PhiSearch> {
    if !(ceiling > 0.0) || !ceiling.is_finite() {
        return Err(Error::input(format!("phi ceiling must be finite and > 0, got {ceiling}")));
    }
    let outcome = bisect_sup(0.0, ceiling, tol, |phi| {
        let cfg = SynthesisConfig { phi, ..config.clone() };
        let res = synthesize(model, &cfg)?;
        Ok(res.is_feasible().then_some(res))
    })?;
    Ok(PhiSearch {
        phi_max: outcome.sup,
        capped: outcome.capped,
        ceiling,
        evaluations: outcome.evaluations,
        result: outcome.witness,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaSearch {
    pub gamma_min: f64,
    pub result: SynthesisResult,
}

/// Minimizes γ² directly as an SDP objective. The witness holds every block
/// with slack `2·strictness`, so it re-verifies at `gamma_min`.
pub fn minimize_gamma(model: &FuzzyBilinearModel, config: &SynthesisConfig) -> Result<GammaSearch> {
    let probe = SynthesisConfig {
        gamma: 1.0,
        ..config.clone()
    };
    let (system, vars, g) = build_system_with(model, &probe, true)?;
    let g = g.expect("gamma variable declared");
    let settings = SolverSettings {
        objective_margin: 2.0 * config.strictness,
        ..config.settings()
    };
    let sol = solve_min(&LinearObjective::new().scalar(&g, 1.0), &system, &settings)?;
    if sol.status != SdpStatus::Optimal {
        return Err(Error::NoFeasiblePoint(format!(
            "γ minimization ended with status {:?} (worst block {})",
            sol.status,
            system.blocks()[sol.worst_block].label
        )));
    }
    let g2 = sol.assignment.scalar(&g).expect("gamma assigned");
    let gamma_min = g2.max(0.0).sqrt();
    let (p, m, gains) = extract(&vars, &sol.assignment)?;
    let cfg = SynthesisConfig {
        gamma: gamma_min,
        ..config.clone()
    };
    let result = SynthesisResult {
        p,
        m,
        gains,
        config: cfg,
        status: SdpStatus::StrictlyFeasible,
        margin: sol.margin,
        worst_block: system.blocks()[sol.worst_block].label.clone(),
        iterations: sol.iterations,
        diagnosis: None,
    };
    Ok(GammaSearch { gamma_min, result })
}

/// `εXᵀX + ε⁻¹YᵀY − XᵀY − YᵀX`, positive semidefinite for every `ε > 0`.
pub fn lemma1_residual(x: &Matrix, y: &Matrix, eps: f64) -> Result<SymMatrix> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::input(format!("epsilon must be finite and > 0, got {eps}")));
    }
    if x.shape() != y.shape() {
        return Err(Error::input(format!(
            "X is {}x{} but Y is {}x{}",
            x.nrows(),
            x.ncols(),
            y.nrows(),
            y.ncols()
        )));
    }
    let xt = x.transpose();
    let yt = y.transpose();
    let r = &xt * x * eps + &yt * y / eps - &xt * y - &yt * x;
    SymMatrix::symmetrize(&r)
}

/// `Σ_ρ (P_ρ + M/r − Σ_k P_k/r)`, which telescopes to `M`.
pub fn telescoping_identity(p: &[SymMatrix], m: &SymMatrix) -> Result<SymMatrix> {
    if p.is_empty() {
        return Err(Error::input("need at least one Lyapunov matrix"));
    }
    let n = m.dim();
    if let Some(bad) = p.iter().find(|pk| pk.dim() != n) {
        return Err(Error::Dimension {
            what: "Lyapunov matrix size",
            expected: n,
            got: bad.dim(),
        });
    }
    let r = p.len() as f64;
    let mut total = Matrix::zeros(n, n);
    for prho in p {
        let mut term = prho.as_matrix() + m.as_matrix() / r;
        for pk in p {
            term -= pk.as_matrix() / r;
        }
        total += term;
    }
    SymMatrix::symmetrize(&total)
}
