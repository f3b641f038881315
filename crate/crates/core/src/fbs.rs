//! Takagi–Sugeno fuzzy bilinear plant and the PDC output-feedback law.
//!
//! Rule `i` carries a bilinear consequent
//!
//! ```text
//! ẋ = A_i x + B_i u + N_i x u + E_i w,   z = C1_i x + D_i w,   y = C2_i x
//! ```
//!
//! and the overall model blends the rules with normalized membership grades
//! `h_i(s) = α_i(s) / Σ α_k(s)`. The controller blends saturated gains:
//! `u = Σ h_i β sin θ_i` with `sin θ_i = k_i y / √(1 + (k_i y)²)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Matrix, Result, Vector};

/// Serde adapter storing a matrix as row-major nested arrays.
pub(crate) mod nested {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::matlib::{matrix_from_rows, matrix_to_rows};
    use crate::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        matrix_from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// One bilinear consequent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    /// n×n state matrix.
    #[serde(with = "nested")]
    pub a: Matrix,
    /// n×1 input matrix.
    #[serde(with = "nested")]
    pub b: Matrix,
    /// n×n bilinear matrix.
    #[serde(with = "nested")]
    pub n: Matrix,
    /// n×m disturbance matrix.
    #[serde(with = "nested")]
    pub e: Matrix,
    /// 1×n controlled-output row.
    #[serde(with = "nested")]
    pub c1: Matrix,
    /// 1×m feedthrough row.
    #[serde(with = "nested")]
    pub d: Matrix,
    /// 1×n measured-output row.
    #[serde(with = "nested")]
    pub c2: Matrix,
}

impl FuzzyRule {
    fn check(&self, n: usize, m: usize) -> Result<()> {
        let shapes = [
            ("A", &self.a, (n, n)),
            ("B", &self.b, (n, 1)),
            ("N", &self.n, (n, n)),
            ("E", &self.e, (n, m)),
            ("C1", &self.c1, (1, n)),
            ("D", &self.d, (1, m)),
            ("C2", &self.c2, (1, n)),
        ];
        for (name, mat, want) in shapes {
            if mat.shape() != want {
                return Err(Error::input(format!(
                    "rule matrix {name} is {}x{}, expected {}x{}",
                    mat.nrows(),
                    mat.ncols(),
                    want.0,
                    want.1
                )));
            }
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("rule matrix {name} has non-finite entries")));
            }
        }
        Ok(())
    }
}

/// Membership grade of one rule over a single premise variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MembershipFunction {
    /// `exp(−((s − center)/width)²)`.
    Gaussian {
        center: f64,
        width: f64,
        premise_index: usize,
    },
    /// Piecewise-linear through `(s, grade)` points, held constant outside.
    Tabulated {
        points: Vec<[f64; 2]>,
        premise_index: usize,
    },
}

impl MembershipFunction {
    pub fn premise_index(&self) -> usize {
        match self {
            MembershipFunction::Gaussian { premise_index, .. }
            | MembershipFunction::Tabulated { premise_index, .. } => *premise_index,
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.premise_index() >= n {
            return Err(Error::input(format!(
                "membership premise index {} out of range for n = {n}",
                self.premise_index()
            )));
        }
        match self {
            MembershipFunction::Gaussian { center, width, .. } => {
                if !(*width > 0.0) || !center.is_finite() || !width.is_finite() {
                    return Err(Error::input("gaussian membership needs finite center and width > 0"));
                }
            }
            MembershipFunction::Tabulated { points, .. } => {
                if points.is_empty() {
                    return Err(Error::input("tabulated membership needs at least one point"));
                }
                if points.windows(2).any(|w| !(w[0][0] < w[1][0])) {
                    return Err(Error::input("tabulated membership abscissae must increase"));
                }
                if points.iter().any(|p| !(0.0..=1.0).contains(&p[1])) {
                    return Err(Error::input("tabulated membership grades must lie in [0, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Grade in `[0, 1]` at the premise vector `s`.
    pub fn grade(&self, s: &[f64]) -> f64 {
        self.log_grade(s).exp()
    }

    /// Natural log of the grade; `-inf` where the grade is zero.
    pub fn log_grade(&self, s: &[f64]) -> f64 {
        let v = s[self.premise_index()];
        match self {
            MembershipFunction::Gaussian { center, width, .. } => {
                let d = (v - center) / width;
                -d * d
            }
            MembershipFunction::Tabulated { points, .. } => {
                let first = points[0];
                let last = points[points.len() - 1];
                let g = if v <= first[0] {
                    first[1]
                } else if v >= last[0] {
                    last[1]
                } else {
                    let i = points.partition_point(|p| p[0] <= v);
                    let (p0, p1) = (points[i - 1], points[i]);
                    p0[1] + (p1[1] - p0[1]) * (v - p0[0]) / (p1[0] - p0[0])
                };
                g.ln()
            }
        }
    }
}

/// Overall fuzzy bilinear model with `r` rules.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct FuzzyBilinearModel {
    n: usize,
    m: usize,
    rules: Vec<FuzzyRule>,
    memberships: Vec<MembershipFunction>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    m: usize,
    r: usize,
    rules: Vec<FuzzyRule>,
    memberships: Vec<MembershipFunction>,
}

impl TryFrom<ModelFile> for FuzzyBilinearModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.rules.len() != f.r {
            return Err(Error::Dimension {
                what: "rule count",
                expected: f.r,
                got: f.rules.len(),
            });
        }
        FuzzyBilinearModel::new(f.n, f.m, f.rules, f.memberships)
    }
}

impl From<FuzzyBilinearModel> for ModelFile {
    fn from(m: FuzzyBilinearModel) -> Self {
        ModelFile {
            n: m.n,
            m: m.m,
            r: m.rules.len(),
            rules: m.rules,
            memberships: m.memberships,
        }
    }
}

impl FuzzyBilinearModel {
    pub fn new(
        n: usize,
        m: usize,
        rules: Vec<FuzzyRule>,
        memberships: Vec<MembershipFunction>,
    ) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::input("state and disturbance dimensions must be >= 1"));
        }
        if rules.is_empty() {
            return Err(Error::input("a fuzzy model needs at least one rule"));
        }
        if memberships.len() != rules.len() {
            return Err(Error::Dimension {
                what: "membership count",
                expected: rules.len(),
                got: memberships.len(),
            });
        }
        for rule in &rules {
            rule.check(n, m)?;
        }
        for mf in &memberships {
            mf.check(n)?;
        }
        Ok(FuzzyBilinearModel {
            n,
            m,
            rules,
            memberships,
        })
    }

    /// Single-rule model with a constant membership grade.
    pub fn single(rule: FuzzyRule) -> Result<Self> {
        let n = rule.a.nrows();
        let m = rule.e.ncols();
        let mf = MembershipFunction::Tabulated {
            points: vec![[0.0, 1.0]],
            premise_index: 0,
        };
        Self::new(n, m, vec![rule], vec![mf])
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn disturbance_dim(&self) -> usize {
        self.m
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn rules(&self) -> &[FuzzyRule] {
        &self.rules
    }

    pub fn membership_functions(&self) -> &[MembershipFunction] {
        &self.memberships
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    fn check_state(&self, what: &'static str, v: &[f64], len: usize) -> Result<()> {
        if v.len() != len {
            return Err(Error::Dimension {
                what,
                expected: len,
                got: v.len(),
            });
        }
        Ok(())
    }
}

/// Normalized membership grades `h(s)`; non-negative and summing to one.
///
/// Normalization runs in the log domain, so Gaussian grades far from every
/// center still blend instead of underflowing to zero.
pub fn memberships(model: &FuzzyBilinearModel, s: &[f64]) -> Result<Vec<f64>> {
    model.check_state("premise vector", s, model.n)?;
    let log_alpha: Vec<f64> = model.memberships.iter().map(|mf| mf.log_grade(s)).collect();
    let top = log_alpha.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegeneratePremise { premise: s.to_vec() });
    }
    let alpha: Vec<f64> = log_alpha.iter().map(|la| (la - top).exp()).collect();
    let total: f64 = alpha.iter().sum();
    Ok(alpha.into_iter().map(|a| a / total).collect())
}

/// `(sin θ, cos θ)` with `tan θ = k·y`, θ ∈ [−π/2, π/2].
pub fn sin_cos_theta(k: f64, y: f64) -> (f64, f64) {
    let ky = k * y;
    if ky.is_infinite() {
        return (ky.signum(), 0.0);
    }
    let r = 1f64.hypot(ky);
    (ky / r, 1.0 / r)
}

/// PDC output-feedback controller `u = Σ h_i β sin θ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdcController {
    pub beta: f64,
    pub gains: Vec<f64>,
}

impl PdcController {
    pub fn new(beta: f64, gains: Vec<f64>) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::input(format!("controller amplitude beta must be > 0, got {beta}")));
        }
        if gains.iter().any(|k| !k.is_finite()) {
            return Err(Error::input("controller gains must be finite"));
        }
        Ok(PdcController { beta, gains })
    }

    fn check(&self, model: &FuzzyBilinearModel) -> Result<()> {
        if self.gains.len() != model.rule_count() {
            return Err(Error::Dimension {
                what: "controller gain count",
                expected: model.rule_count(),
                got: self.gains.len(),
            });
        }
        Ok(())
    }
}

/// Controller output for measured output `y` at premise `s`.
pub fn control(model: &FuzzyBilinearModel, controller: &PdcController, s: &[f64], y: f64) -> Result<f64> {
    controller.check(model)?;
    let h = memberships(model, s)?;
    Ok(h.iter()
        .zip(&controller.gains)
        .map(|(hi, &k)| hi * controller.beta * sin_cos_theta(k, y).0)
        .sum())
}

/// Blended measured and controlled outputs `(y, z)`.
pub fn outputs(model: &FuzzyBilinearModel, s: &[f64], x: &[f64], w: &[f64]) -> Result<(f64, f64)> {
    model.check_state("state", x, model.n)?;
    model.check_state("disturbance", w, model.m)?;
    let h = memberships(model, s)?;
    let xv = Vector::from_column_slice(x);
    let wv = Vector::from_column_slice(w);
    let mut y = 0.0;
    let mut z = 0.0;
    for (hi, rule) in h.iter().zip(&model.rules) {
        y += hi * (&rule.c2 * &xv)[0];
        z += hi * ((&rule.c1 * &xv)[0] + (&rule.d * &wv)[0]);
    }
    Ok((y, z))
}

/// Blended open-loop field `Σ h_i (A_i x + B_i u + N_i x u + E_i w)`.
pub fn open_loop_field(model: &FuzzyBilinearModel, s: &[f64], x: &[f64], u: f64, w: &[f64]) -> Result<Vector> {
    open_loop_field_split(model, s, x, u, u, w)
}

/// As [`open_loop_field`], with a separate input `u_bilinear` multiplying
/// the `N_i x` term.
pub fn open_loop_field_split(
    model: &FuzzyBilinearModel,
    s: &[f64],
    x: &[f64],
    u: f64,
    u_bilinear: f64,
    w: &[f64],
) -> Result<Vector> {
    model.check_state("state", x, model.n)?;
    model.check_state("disturbance", w, model.m)?;
    let h = memberships(model, s)?;
    let xv = Vector::from_column_slice(x);
    let wv = Vector::from_column_slice(w);
    let mut dx = Vector::zeros(model.n);
    for (hi, rule) in h.iter().zip(&model.rules) {
        let local = &rule.a * &xv + &rule.b * u + &rule.n * &xv * u_bilinear + &rule.e * &wv;
        dx += local * *hi;
    }
    Ok(dx)
}

/// Closed-loop field written as the triple membership sum
/// `Σ_ijl h_i h_j h_l ((A_i + β B_i k_j C2_l cos θ_j + β N_i sin θ_j) x + E_i w)`.
pub fn closed_loop_field(
    model: &FuzzyBilinearModel,
    controller: &PdcController,
    s: &[f64],
    x: &[f64],
    w: &[f64],
) -> Result<Vector> {
    controller.check(model)?;
    model.check_state("state", x, model.n)?;
    model.check_state("disturbance", w, model.m)?;
    let h = memberships(model, s)?;
    let (y, _) = outputs(model, s, x, w)?;
    let xv = Vector::from_column_slice(x);
    let wv = Vector::from_column_slice(w);
    let beta = controller.beta;
    let trig: Vec<(f64, f64)> = controller.gains.iter().map(|&k| sin_cos_theta(k, y)).collect();

    let mut dx = Vector::zeros(model.n);
    for (i, ri) in model.rules.iter().enumerate() {
        for (j, &kj) in controller.gains.iter().enumerate() {
            let (sin_j, cos_j) = trig[j];
            for (l, rl) in model.rules.iter().enumerate() {
                let weight = h[i] * h[j] * h[l];
                if weight == 0.0 {
                    continue;
                }
                let a_cl = &ri.a + &ri.b * &rl.c2 * (beta * kj * cos_j) + &ri.n * (beta * sin_j);
                dx += (a_cl * &xv + &ri.e * &wv) * weight;
            }
        }
    }
    Ok(dx)
}

/// Per-rule `max_t |ḣ_ρ(t)|` from samples of the premise vector, using
/// central differences inside the record and one-sided ones at its ends.
pub fn estimate_mf_derivative_bound(
    model: &FuzzyBilinearModel,
    times: &[f64],
    premises: &[Vec<f64>],
) -> Result<Vec<f64>> {
    if times.len() < 2 || premises.len() != times.len() {
        return Err(Error::input(format!(
            "membership-derivative estimate needs >= 2 matching samples (got {} times, {} premises)",
            times.len(),
            premises.len()
        )));
    }
    let h: Vec<Vec<f64>> = premises
        .iter()
        .map(|s| memberships(model, s))
        .collect::<Result<_>>()?;
    let last = times.len() - 1;
    let mut bound = vec![0.0_f64; model.rule_count()];
    for k in 0..=last {
        let (a, b) = match k {
            0 => (0, 1),
            k if k == last => (last - 1, last),
            k => (k - 1, k + 1),
        };
        let dt = times[b] - times[a];
        for (rho, slot) in bound.iter_mut().enumerate() {
            let rate = ((h[b][rho] - h[a][rho]) / dt).abs();
            *slot = slot.max(rate);
        }
    }
    Ok(bound)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::matlib::testutil::rng;
    use proptest::prelude::*;
    use rand::Rng;

    pub fn random_rule(r: &mut impl Rng, n: usize, m: usize) -> FuzzyRule {
        let mut mk = |rows, cols| Matrix::from_fn(rows, cols, |_, _| r.random_range(-2.0..2.0));
        FuzzyRule {
            a: mk(n, n),
            b: mk(n, 1),
            n: mk(n, n),
            e: mk(n, m),
            c1: mk(1, n),
            d: mk(1, m),
            c2: mk(1, n),
        }
    }

    pub fn random_model(seed: u64, n: usize, m: usize, r: usize) -> (FuzzyBilinearModel, PdcController) {
        let mut g = rng(seed);
        let rules = (0..r).map(|_| random_rule(&mut g, n, m)).collect();
        let mfs = (0..r)
            .map(|i| MembershipFunction::Gaussian {
                center: i as f64 - 1.0,
                width: g.random_range(0.5..2.0),
                premise_index: i % n,
            })
            .collect();
        let gains = (0..r).map(|_| g.random_range(-3.0..3.0)).collect();
        (
            FuzzyBilinearModel::new(n, m, rules, mfs).unwrap(),
            PdcController::new(g.random_range(0.05..2.0), gains).unwrap(),
        )
    }

    pub fn cstr_like() -> FuzzyBilinearModel {
        let rule = |a: [f64; 4]| FuzzyRule {
            a: Matrix::from_row_slice(2, 2, &a),
            b: Matrix::from_row_slice(2, 1, &[10.0, 0.0]),
            n: -Matrix::identity(2, 2),
            e: Matrix::from_row_slice(2, 2, &[0.45, 0.0, 0.1, 0.5]),
            c1: Matrix::from_row_slice(1, 2, &[0.0, 5.0]),
            d: Matrix::from_row_slice(1, 2, &[0.0, 0.08]),
            c2: Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
        };
        let g = |c| MembershipFunction::Gaussian { center: c, width: 1.0, premise_index: 0 };
        FuzzyBilinearModel::new(
            2,
            2,
            vec![
                rule([-75.2383, 7.7946, 50.0, -100.0]),
                rule([-98.3005, 11.7315, 50.0, -100.0]),
                rule([-122.1228, 8.8577, 50.0, -100.0]),
            ],
            vec![g(2.2), g(4.5), g(7.1)],
        )
        .unwrap()
    }

    #[test]
    fn memberships_at_rule_center_and_midpoint() {
        let model = cstr_like();
        let h = memberships(&model, &[2.2, 0.0]).unwrap();
        let alpha = [1.0, (-5.29f64).exp(), (-24.01f64).exp()];
        let total: f64 = alpha.iter().sum();
        assert!((h[0] - alpha[0] / total).abs() < 1e-15);
        assert!((h[0] - 0.99499).abs() < 1e-5);
        let mid = memberships(&model, &[3.35, 0.0]).unwrap();
        assert!((mid[0] - mid[1]).abs() < 1e-15);
        let far = memberships(&model, &[7.1, 0.0]).unwrap();
        assert!(far[2] > far[0] && far[2] > far[1]);
    }

    #[test]
    fn degenerate_premise_is_an_error() {
        let mut model = cstr_like();
        model.memberships = (0..3)
            .map(|_| MembershipFunction::Tabulated { points: vec![[0.0, 0.0], [1.0, 1.0]], premise_index: 0 })
            .collect();
        assert!(matches!(memberships(&model, &[-1.0, 0.0]), Err(Error::DegeneratePremise { .. })));
        assert!((memberships(&model, &[0.5, 0.0]).unwrap()[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn trig_examples() {
        assert_eq!(sin_cos_theta(3.0, 0.0), (0.0, 1.0));
        let (s, c) = sin_cos_theta(1e300, 1e300);
        assert_eq!((s, c), (1.0, 0.0));
        let (s, c) = sin_cos_theta(1e200, 1.0);
        assert!((s - 1.0).abs() < 1e-15 && c < 1e-199);
        let (s, _) = sin_cos_theta(-2.2288, 1.0);
        assert!((s - (-2.2288 / (1.0f64 + 2.2288 * 2.2288).sqrt())).abs() < 1e-15);
        assert!((s + 0.9124).abs() < 1e-4);
    }

    #[test]
    fn control_examples() {
        let model = cstr_like();
        let ctrl = PdcController::new(0.1, vec![-2.2288; 3]).unwrap();
        assert_eq!(control(&model, &ctrl, &[3.1, 1.5], 0.0).unwrap(), 0.0);
        let u = control(&model, &ctrl, &[3.1, 1.5], 1.0).unwrap();
        assert!((u + 0.09124).abs() < 1e-5, "{u}");

        let single = FuzzyBilinearModel::single(model.rules[0].clone()).unwrap();
        let one = PdcController::new(0.1, vec![5.0]).unwrap();
        let u = control(&single, &one, &[0.0, 0.0], -1e12).unwrap();
        assert!((u + 0.1).abs() < 1e-12);
        assert!(PdcController::new(0.0, vec![1.0]).is_err());
        assert!(control(&model, &one, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn field_examples() {
        let model = cstr_like();
        let s = [3.0, 0.0];
        assert_eq!(open_loop_field(&model, &s, &[0.0, 0.0], 0.0, &[0.0, 0.0]).unwrap(), Vector::zeros(2));

        let x = [0.7, -0.2];
        let h = memberships(&model, &s).unwrap();
        let blended_a = model.rules.iter().zip(&h).fold(Matrix::zeros(2, 2), |acc, (r, hi)| acc + &r.a * *hi);
        let dx = open_loop_field(&model, &s, &x, 0.0, &[0.0, 0.0]).unwrap();
        assert!((dx - blended_a * Vector::from_row_slice(&x)).amax() < 1e-12);

        let ctrl = PdcController::new(0.1, vec![-2.2288; 3]).unwrap();
        assert_eq!(closed_loop_field(&model, &ctrl, &s, &[0.0, 0.0], &[0.0, 0.0]).unwrap(), Vector::zeros(2));
        let w = [0.3, -1.1];
        let blended_e = model.rules.iter().zip(&h).fold(Matrix::zeros(2, 2), |acc, (r, hi)| acc + &r.e * *hi);
        let dx = closed_loop_field(&model, &ctrl, &s, &[0.0, 0.0], &w).unwrap();
        assert!((dx - blended_e * Vector::from_row_slice(&w)).amax() < 1e-12);

        assert!(open_loop_field(&model, &s, &[0.0], 0.0, &[0.0, 0.0]).is_err());
        assert!(outputs(&model, &s, &[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn single_rule_is_plain_bilinear_system() {
        let mut g = rng(5);
        let rule = random_rule(&mut g, 3, 2);
        let model = FuzzyBilinearModel::single(rule.clone()).unwrap();
        let x = Vector::from_row_slice(&[0.4, -1.0, 2.0]);
        let w = Vector::from_row_slice(&[0.1, 0.9]);
        let u = -0.7;
        let want = &rule.a * &x + &rule.b * u + &rule.n * &x * u + &rule.e * &w;
        let got = open_loop_field(&model, &[9.0, 9.0, 9.0], x.as_slice(), u, w.as_slice()).unwrap();
        assert!((got - want).amax() < 1e-13);
    }

    #[test]
    fn outputs_of_cstr_like_model() {
        let model = cstr_like();
        assert_eq!(outputs(&model, &[4.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap(), (0.0, 0.0));
        let (y, z) = outputs(&model, &[4.0, 0.0], &[1.3, -0.4], &[2.0, 0.5]).unwrap();
        assert!((y + 0.4).abs() < 1e-15);
        assert!((z - (5.0 * -0.4 + 0.08 * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn mf_derivative_bound_examples() {
        let model = cstr_like();
        let t = [0.0, 0.1, 0.2];
        let still = vec![vec![3.0, 1.0]; 3];
        assert_eq!(estimate_mf_derivative_bound(&model, &t, &still).unwrap(), vec![0.0; 3]);
        let moving: Vec<Vec<f64>> = t.iter().map(|ti| vec![2.0 + 10.0 * ti, 0.0]).collect();
        assert!(estimate_mf_derivative_bound(&model, &t, &moving).unwrap().iter().all(|b| *b > 0.0));
        let single = FuzzyBilinearModel::single(model.rules[0].clone()).unwrap();
        assert_eq!(estimate_mf_derivative_bound(&single, &t, &moving).unwrap(), vec![0.0]);
        assert!(estimate_mf_derivative_bound(&model, &t[..1], &still[..1]).is_err());
    }

    #[test]
    fn model_json_round_trip() {
        let model = cstr_like();
        let text = model.to_json();
        assert!(text.contains("\"kind\": \"gaussian\""));
        assert!(text.contains("\"r\": 3"));
        let back = FuzzyBilinearModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        let bad = text.replace("\"r\": 3", "\"r\": 2");
        assert!(FuzzyBilinearModel::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn memberships_normalize(seed in any::<u64>(), s0 in -20.0f64..20.0, s1 in -20.0f64..20.0, r in 1usize..=5) {
            let (model, _) = random_model(seed, 2, 1, r);
            let h = memberships(&model, &[s0, s1]).unwrap();
            prop_assert!(h.iter().all(|v| *v >= 0.0));
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn trig_identity(k in -1e3f64..1e3, y in -1e3f64..1e3) {
            let (s, c) = sin_cos_theta(k, y);
            prop_assert!((s * s + c * c - 1.0).abs() <= 1e-14);
            prop_assert!(c > 0.0);
            prop_assert!(s == 0.0 || s.signum() == (k * y).signum());
        }

        #[test]
        fn control_is_bounded_by_beta(seed in any::<u64>(), y in -1e6f64..1e6, s in -5.0f64..5.0) {
            let (model, ctrl) = random_model(seed, 2, 2, 3);
            let u = control(&model, &ctrl, &[s, -s], y).unwrap();
            prop_assert!(u.abs() <= ctrl.beta);
        }

        #[test]
        fn closed_loop_matches_substituted_control(seed in any::<u64>(), n in 1usize..=4, r in 1usize..=4) {
            let (model, ctrl) = random_model(seed, n, 2, r);
            let mut g = rng(seed ^ 0x5eed);
            let x: Vec<f64> = (0..n).map(|_| g.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..2).map(|_| g.random_range(-3.0..3.0)).collect();
            let s = x.clone();
            let (y, _) = outputs(&model, &s, &x, &w).unwrap();
            let u = control(&model, &ctrl, &s, y).unwrap();
            let direct = open_loop_field(&model, &s, &x, u, &w).unwrap();
            let triple = closed_loop_field(&model, &ctrl, &s, &x, &w).unwrap();
            let scale = direct.amax().max(1.0);
            prop_assert!((direct - triple).amax() <= 1e-10 * scale);
        }
    }
}
