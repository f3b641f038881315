//! Isothermal Van de Vusse reactor.
//!
//! ```text
//! ẋ1 = −k1 x1 − k3 x1² + u (C_A0 − x1) + 0.45 w1
//! ẋ2 =  k1 x1 − k2 x2 − u x2 + 0.5 w2
//! z  = 5 x2 + 0.08 w2,   y = x2
//! ```
//!
//! `x1`, `x2` are concentrations (mol/L) and `u` is the dilution rate (1/h).

use serde::{Deserialize, Serialize};

use crate::fbs::{FuzzyBilinearModel, FuzzyRule, MembershipFunction};
use crate::matlib::SymMatrix;
use crate::sim::{DampedSine, DisturbanceSpec};
use crate::{Error, Matrix, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CstrParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub ca0: f64,
    pub volume: f64,
}

impl Default for CstrParams {
    fn default() -> Self {
        CstrParams {
            k1: 50.0,
            k2: 100.0,
            k3: 10.0,
            ca0: 10.0,
            volume: 1.0,
        }
    }
}

impl CstrParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.k3, self.ca0, self.volume];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::input("reactor parameters must be finite and > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CstrOutput {
    pub dx: [f64; 2],
    pub z: f64,
    pub y: f64,
}

pub fn dynamics(params: &CstrParams, x: &[f64], u: f64, w: &[f64]) -> Result<CstrOutput> {
    if x.len() != 2 || w.len() != 2 {
        return Err(Error::input(format!(
            "reactor state and disturbance are 2-vectors (got {} and {})",
            x.len(),
            w.len()
        )));
    }
    if x.iter().chain(w).any(|v| !v.is_finite()) || !u.is_finite() {
        return Err(Error::input("reactor inputs must be finite"));
    }
    let CstrParams { k1, k2, k3, ca0, .. } = *params;
    let dx1 = -k1 * x[0] - k3 * x[0] * x[0] + u * (ca0 - x[0]) + 0.45 * w[0];
    let dx2 = k1 * x[0] - k2 * x[1] - u * x[1] + 0.5 * w[1];
    Ok(CstrOutput {
        dx: [dx1, dx2],
        z: 5.0 * x[1] + 0.08 * w[1],
        y: x[1],
    })
}

/// Desired state and input; deviations are measured from here.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub x: Vec<f64>,
    pub u: f64,
}

/// Deviation coordinates `(x − x_d, u − u_d, y − y_d, z − z_d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Shifted {
    pub x: Vec<f64>,
    pub u: f64,
    pub y: f64,
    pub z: f64,
}

impl OperatingPoint {
    pub fn new(x: Vec<f64>, u: f64) -> Self {
        OperatingPoint { x, u }
    }

    pub fn origin(n: usize) -> Self {
        OperatingPoint { x: vec![0.0; n], u: 0.0 }
    }

    /// Reactor outputs at this point with zero disturbance, `(y_d, z_d)`.
    pub fn outputs(&self) -> (f64, f64) {
        (self.x[1], 5.0 * self.x[1])
    }

    /// `ẋ` at `(x_d, u_d, w = 0)`.
    pub fn residual(&self, params: &CstrParams) -> Result<[f64; 2]> {
        Ok(dynamics(params, &self.x, self.u, &[0.0, 0.0])?.dx)
    }

    pub fn shift_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x).map(|(a, b)| a - b).collect()
    }

    pub fn unshift_state(&self, xd: &[f64]) -> Vec<f64> {
        xd.iter().zip(&self.x).map(|(a, b)| a + b).collect()
    }

    pub fn shift(&self, x: &[f64], u: f64, y: f64, z: f64) -> Shifted {
        let (yd, zd) = self.outputs();
        Shifted {
            x: self.shift_state(x),
            u: u - self.u,
            y: y - yd,
            z: z - zd,
        }
    }

    pub fn unshift(&self, s: &Shifted) -> (Vec<f64>, f64, f64, f64) {
        let (yd, zd) = self.outputs();
        (self.unshift_state(&s.x), s.u + self.u, s.y + yd, s.z + zd)
    }
}

/// Tolerance on `|ẋ|` per component for a tabulated equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 0.05;

/// Tabulated operating point together with its residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabulatedEquilibrium {
    pub point: OperatingPoint,
    pub residual: [f64; 2],
}

impl TabulatedEquilibrium {
    pub fn within(&self, tol: f64) -> bool {
        self.residual.iter().all(|r| r.abs() <= tol)
    }
}

/// The three tabulated operating points, each with its `ẋ` residual.
pub fn equilibria() -> Vec<TabulatedEquilibrium> {
    let params = CstrParams::default();
    [([2.2, 0.914], 20.3077), ([4.5, 1.266], 77.7272), ([7.1, 0.900], 296.2414)]
        .into_iter()
        .map(|(x, u)| {
            let point = OperatingPoint::new(x.to_vec(), u);
            let residual = point.residual(&params).expect("finite table");
            TabulatedEquilibrium { point, residual }
        })
        .collect()
}

/// Operating point used by the tracking scenarios.
pub fn design_point() -> OperatingPoint {
    OperatingPoint::new(vec![4.5, 1.266], 77.7272)
}

pub const MEMBERSHIP_CENTERS: [f64; 3] = [2.2, 4.5, 7.1];
pub const MEMBERSHIP_WIDTH: f64 = 1.0;

fn rule(a: [f64; 4]) -> FuzzyRule {
    FuzzyRule {
        a: Matrix::from_row_slice(2, 2, &a),
        b: Matrix::from_row_slice(2, 1, &[10.0, 0.0]),
        n: -Matrix::identity(2, 2),
        e: Matrix::from_row_slice(2, 2, &[0.45, 0.0, 0.1, 0.5]),
        c1: Matrix::from_row_slice(1, 2, &[0.0, 5.0]),
        d: Matrix::from_row_slice(1, 2, &[0.0, 0.08]),
        c2: Matrix::from_row_slice(1, 2, &[0.0, 1.0]),
    }
}

/// Three-rule fuzzy bilinear model with Gaussian memberships on `x1`.
pub fn build_model() -> FuzzyBilinearModel {
    let rules = vec![
        rule([-75.2383, 7.7946, 50.0, -100.0]),
        rule([-98.3005, 11.7315, 50.0, -100.0]),
        rule([-122.1228, 8.8577, 50.0, -100.0]),
    ];
    let mfs = MEMBERSHIP_CENTERS
        .iter()
        .map(|&center| MembershipFunction::Gaussian {
            center,
            width: MEMBERSHIP_WIDTH,
            premise_index: 0,
        })
        .collect();
    FuzzyBilinearModel::new(2, 2, rules, mfs).expect("benchmark model is well formed")
}

/// `w = [2e^{−0.001t} sin 3t, 3e^{−0.001t} sin 0.1t]`.
pub fn disturbance() -> DisturbanceSpec {
    DisturbanceSpec::Damped {
        channels: vec![
            DampedSine {
                amplitude: 2.0,
                decay: 0.001,
                frequency: 3.0,
            },
            DampedSine {
                amplitude: 3.0,
                decay: 0.001,
                frequency: 0.1,
            },
        ],
    }
}

pub const GAMMA: f64 = 0.3;
pub const BETA: f64 = 0.1;
pub const EPSILON: f64 = 1.0;

/// Published Lyapunov matrix, shared by all three rules.
pub fn reported_lyapunov() -> SymMatrix {
    SymMatrix::from_upper(Matrix::from_row_slice(2, 2, &[27.9685, -7.0275, -7.0275, 18.5635]))
        .expect("2x2")
}

/// Published gain, shared by all three rules.
pub const REPORTED_GAIN: f64 = -2.2288;

pub const INITIAL_CONDITIONS: [[f64; 2]; 3] = [[3.1, 1.5], [0.5, 0.6], [-1.2, -3.1]];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbs::{memberships, open_loop_field};
    use crate::matlib::testutil::rng;
    use rand::Rng;

    #[test]
    fn table_rows_and_residuals() {
        let eq = equilibria();
        assert_eq!(eq.len(), 3);
        assert!(eq[0].within(EQUILIBRIUM_TOLERANCE), "{:?}", eq[0].residual);
        assert!((eq[0].residual[1] - 0.0389).abs() < 1e-3);
        assert!(eq[1].within(EQUILIBRIUM_TOLERANCE), "{:?}", eq[1].residual);
        // The third row's x2 is rounded from 0.8959; ∂ẋ2/∂x2 ≈ −396 turns
        // that into a residual of about −1.62.
        assert!(eq[2].residual[0].abs() < EQUILIBRIUM_TOLERANCE);
        assert!((eq[2].residual[1] + 1.617).abs() < 2e-3, "{:?}", eq[2].residual);
        assert!(eq.windows(2).all(|w| w[0].point.u < w[1].point.u));
    }

    #[test]
    fn dynamics_examples() {
        let p = CstrParams::default();
        let o = dynamics(&p, &[0.0, 0.0], 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(o.dx, [0.0, 0.0]);
        let o = dynamics(&p, &[0.0, 0.0], 0.0, &[1.0, 0.0]).unwrap();
        assert_eq!(o.dx, [0.45, 0.0]);
        let o = dynamics(&p, &[1.0, 2.0], 3.0, &[0.0, 1.0]).unwrap();
        assert_eq!(o.dx, [-50.0 - 10.0 + 27.0, 50.0 - 200.0 - 6.0 + 0.5]);
        assert_eq!(o.z, 10.08);
        assert_eq!(o.y, 2.0);
        assert!(dynamics(&p, &[f64::NAN, 0.0], 0.0, &[0.0, 0.0]).is_err());
        assert!(dynamics(&p, &[0.0, 0.0], f64::INFINITY, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn model_matrices() {
        let m = build_model();
        assert_eq!(m.rule_count(), 3);
        assert_eq!(m.rules()[1].a, Matrix::from_row_slice(2, 2, &[-98.3005, 11.7315, 50.0, -100.0]));
        for r in m.rules() {
            assert_eq!(r.b.shape(), (2, 1));
            assert_eq!(r.e.shape(), (2, 2));
            assert_eq!(r.d.shape(), (1, 2));
        }
        let h = memberships(&m, &[7.1, 0.0]).unwrap();
        assert!(h[2] > 0.99);
    }

    #[test]
    fn blend_at_center_reduces_to_rule() {
        let m = build_model();
        let mut r = rng(4);
        for (i, &c) in MEMBERSHIP_CENTERS.iter().enumerate() {
            let h = memberships(&m, &[c, 0.0]).unwrap();
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let w = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let u = r.random_range(-1.0..1.0);
            let got = open_loop_field(&m, &[c, 0.0], &x, u, &w).unwrap();
            let rule = &m.rules()[i];
            let xv = crate::Vector::from_column_slice(&x);
            let wv = crate::Vector::from_column_slice(&w);
            let want = &rule.a * &xv + &rule.b * u + &rule.n * &xv * u + &rule.e * &wv;
            // Remaining weight on other rules bounds the mismatch.
            let leak = 1.0 - h[i];
            assert!((got - want).amax() <= 1e3 * leak + 1e-12);
            assert!(h[i] > 0.99);
        }
    }

    #[test]
    fn shift_examples() {
        let d = design_point();
        let s = d.shift(&[3.1, 1.5], 80.0, 1.5, 7.5);
        assert!((s.x[0] + 1.4).abs() < 1e-12 && (s.x[1] - 0.234).abs() < 1e-12);
        assert_eq!(d.shift_state(&d.x), vec![0.0, 0.0]);
        let mut r = rng(5);
        for _ in 0..100 {
            let x = [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)];
            let (u, y, z) = (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
            let (x2, u2, y2, z2) = d.unshift(&d.shift(&x, u, y, z));
            assert!((x2[0] - x[0]).abs() < 1e-12 && (x2[1] - x[1]).abs() < 1e-12);
            assert!((u2 - u).abs() < 1e-12 && (y2 - y).abs() < 1e-12 && (z2 - z).abs() < 1e-12);
        }
    }

    #[test]
    fn model_serializes_through_schema() {
        let m = build_model();
        let back = FuzzyBilinearModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
