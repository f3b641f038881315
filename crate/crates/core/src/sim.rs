//! Fixed-step RK4 simulation of closed loops, Lyapunov tracing and H∞
//! performance metrics.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::fbs::{estimate_mf_derivative_bound, memberships, FuzzyBilinearModel};
use crate::matlib::SymMatrix;
use crate::{Error, Result, Vector};

/// `a·e^{−λt}·sin(ωt)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DampedSine {
    pub amplitude: f64,
    pub decay: f64,
    pub frequency: f64,
}

impl DampedSine {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (-self.decay * t).exp() * (self.frequency * t).sin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceSpec {
    Zero {
        m: usize,
    },
    Damped {
        channels: Vec<DampedSine>,
    },
    /// Linear interpolation between samples, held constant outside.
    Tabulated {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl DisturbanceSpec {
    pub fn dim(&self) -> usize {
        match self {
            DisturbanceSpec::Zero { m } => *m,
            DisturbanceSpec::Damped { channels } => channels.len(),
            DisturbanceSpec::Tabulated { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DisturbanceSpec::Zero { m } if *m == 0 => Err(Error::input("disturbance needs m >= 1")),
            DisturbanceSpec::Zero { .. } => Ok(()),
            DisturbanceSpec::Damped { channels } => {
                if channels.is_empty() {
                    return Err(Error::input("disturbance needs at least one channel"));
                }
                for c in channels {
                    if !(c.decay >= 0.0) {
                        return Err(Error::input(format!("decay rate must be >= 0, got {}", c.decay)));
                    }
                    if !(c.amplitude.is_finite() && c.decay.is_finite() && c.frequency.is_finite()) {
                        return Err(Error::input("disturbance parameters must be finite"));
                    }
                }
                Ok(())
            }
            DisturbanceSpec::Tabulated { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    return Err(Error::input("tabulated disturbance needs matching, non-empty times and values"));
                }
                if times.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::input("tabulated disturbance times must increase"));
                }
                let m = values[0].len();
                if m == 0 || values.iter().any(|v| v.len() != m || v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::input("tabulated disturbance rows must be finite and equally long"));
                }
                Ok(())
            }
        }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            DisturbanceSpec::Zero { m } => vec![0.0; *m],
            DisturbanceSpec::Damped { channels } => channels.iter().map(|c| c.at(t)).collect(),
            DisturbanceSpec::Tabulated { times, values } => {
                let last = times.len() - 1;
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= times[last] {
                    return values[last].clone();
                }
                let i = times.partition_point(|s| *s <= t);
                let f = (t - times[i - 1]) / (times[i] - times[i - 1]);
                values[i - 1]
                    .iter()
                    .zip(&values[i])
                    .map(|(a, b)| a + f * (b - a))
                    .collect()
            }
        }
    }
}

/// One evaluation of a closed loop: the field and the probe channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub dx: Vector,
    pub u: f64,
    pub y: f64,
    pub z: f64,
    pub w: Vec<f64>,
}

/// A plant with its controller and disturbance folded in.
pub trait ClosedLoop: Sync {
    fn state_dim(&self) -> usize;
    fn disturbance_dim(&self) -> usize;
    fn sample(&self, t: f64, x: &[f64]) -> Result<Sample>;
    /// Desired state at time `t`; deviations are measured from it.
    fn reference(&self, _t: f64) -> Vec<f64> {
        vec![0.0; self.state_dim()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub step: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// Desired state at each sample.
    pub reference: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<f64>>,
}

impl SimulationTrace {
    fn empty(step: f64) -> Self {
        SimulationTrace {
            step,
            t: Vec::new(),
            x: Vec::new(),
            reference: Vec::new(),
            u: Vec::new(),
            y: Vec::new(),
            z: Vec::new(),
            w: Vec::new(),
            v: None,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    pub fn state_dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// `x − x_d` at sample `k`.
    pub fn deviation(&self, k: usize) -> Vec<f64> {
        self.x[k].iter().zip(&self.reference[k]).map(|(a, b)| a - b).collect()
    }

    pub fn final_state(&self) -> &[f64] {
        self.x.last().map_or(&[], Vec::as_slice)
    }

    pub fn max_abs_u(&self) -> f64 {
        self.u.iter().fold(0.0, |m, u| m.max(u.abs()))
    }

    /// Header `t,x1,..,xn,u,y,z,w1,..,wm,V`; `V` is empty when untraced.
    pub fn to_csv(&self) -> String {
        let n = self.state_dim();
        let m = self.w.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            write!(out, ",x{i}").unwrap();
        }
        out.push_str(",u,y,z");
        for i in 1..=m {
            write!(out, ",w{i}").unwrap();
        }
        out.push_str(",V\n");
        for k in 0..self.len() {
            write!(out, "{}", self.t[k]).unwrap();
            for v in &self.x[k] {
                write!(out, ",{v}").unwrap();
            }
            write!(out, ",{},{},{}", self.u[k], self.y[k], self.z[k]).unwrap();
            for v in &self.w[k] {
                write!(out, ",{v}").unwrap();
            }
            match &self.v {
                Some(v) => writeln!(out, ",{}", v[k]).unwrap(),
                None => out.push_str(",\n"),
            }
        }
        out
    }

    fn push(&mut self, t: f64, x: &[f64], reference: Vec<f64>, s: &Sample) {
        self.t.push(t);
        self.x.push(x.to_vec());
        self.reference.push(reference);
        self.u.push(s.u);
        self.y.push(s.y);
        self.z.push(s.z);
        self.w.push(s.w.clone());
    }
}

fn finite_or_diverged(v: &Vector, t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { t })
    }
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step(
    field: impl Fn(f64, &[f64]) -> Result<Vector>,
    x: &[f64],
    t: f64,
    h: f64,
) -> Result<Vector> {
    if !(h > 0.0) {
        return Err(Error::input(format!("step must be > 0, got {h}")));
    }
    let x0 = Vector::from_column_slice(x);
    let k1 = field(t, x0.as_slice())?;
    finite_or_diverged(&k1, t)?;
    let x1 = &x0 + &k1 * (0.5 * h);
    let k2 = field(t + 0.5 * h, x1.as_slice())?;
    finite_or_diverged(&k2, t)?;
    let x2 = &x0 + &k2 * (0.5 * h);
    let k3 = field(t + 0.5 * h, x2.as_slice())?;
    finite_or_diverged(&k3, t)?;
    let x3 = &x0 + &k3 * h;
    let k4 = field(t + h, x3.as_slice())?;
    finite_or_diverged(&k4, t)?;
    let next = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    finite_or_diverged(&next, t)?;
    Ok(next)
}

/// Number of grid intervals, requiring `horizon / step` to be whole.
pub fn grid_steps(horizon: f64, step: f64) -> Result<usize> {
    if !(horizon > 0.0) || !(step > 0.0) || !horizon.is_finite() || !step.is_finite() {
        return Err(Error::input(format!(
            "horizon and step must be finite and > 0 (horizon={horizon}, step={step})"
        )));
    }
    let n = (horizon / step).round();
    if n < 1.0 || (n * step - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::input(format!(
            "horizon {horizon} is not a whole number of steps of {step}"
        )));
    }
    Ok(n as usize)
}

/// Integrates on the grid `t_k = k·h`, recording probes at every point. On
/// divergence the samples recorded so far travel with the error.
pub fn simulate(plant: &dyn ClosedLoop, x0: &[f64], horizon: f64, step: f64) -> Result<SimulationTrace> {
    let steps = grid_steps(horizon, step)?;
    if x0.len() != plant.state_dim() {
        return Err(Error::Dimension {
            what: "initial state",
            expected: plant.state_dim(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("initial state must be finite"));
    }
    let mut trace = SimulationTrace::empty(step);
    let mut x = x0.to_vec();
    let field = |t: f64, x: &[f64]| plant.sample(t, x).map(|s| s.dx);
    for k in 0..=steps {
        let t = k as f64 * step;
        let s = match plant.sample(t, &x) {
            Ok(s) => s,
            Err(Error::Divergence { t }) => return Err(diverged(t, trace)),
            Err(e) => return Err(e),
        };
        trace.push(t, &x, plant.reference(t), &s);
        if k == steps {
            break;
        }
        x = match rk4_step(field, &x, t, step) {
            Ok(v) => v.as_slice().to_vec(),
            Err(Error::Divergence { t }) => return Err(diverged(t, trace)),
            Err(e) => return Err(e),
        };
    }
    Ok(trace)
}

fn diverged(t: f64, partial: SimulationTrace) -> Error {
    Error::Diverged {
        t,
        partial: Box::new(partial),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub v: Vec<f64>,
    /// Finite-difference `V̇`: central inside, one-sided at the ends.
    pub v_dot: Vec<f64>,
}

impl LyapunovTrace {
    /// Largest one-step increase `V_{k+1} − V_k`.
    pub fn max_increase(&self) -> f64 {
        self.v.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_value(&self) -> f64 {
        self.v.iter().copied().fold(0.0, f64::max)
    }
}

/// `V = Σ h_i(x) δᵀP_i δ` with `δ = x − x_d`, premise taken from `x`.
pub fn lyapunov_trace(
    trace: &SimulationTrace,
    model: &FuzzyBilinearModel,
    p: &[SymMatrix],
) -> Result<LyapunovTrace> {
    if p.len() != model.rule_count() {
        return Err(Error::Dimension {
            what: "Lyapunov matrix count",
            expected: model.rule_count(),
            got: p.len(),
        });
    }
    let mut v = Vec::with_capacity(trace.len());
    for k in 0..trace.len() {
        let h = memberships(model, &trace.x[k])?;
        let d = Vector::from_vec(trace.deviation(k));
        let val: f64 = h
            .iter()
            .zip(p)
            .map(|(hi, pi)| hi * d.dot(&(pi.as_matrix() * &d)))
            .sum();
        v.push(val);
    }
    let n = v.len();
    let v_dot = (0..n)
        .map(|k| match (k, n) {
            (_, 1) => 0.0,
            (0, _) => (v[1] - v[0]) / (trace.t[1] - trace.t[0]),
            (k, n) if k == n - 1 => (v[k] - v[k - 1]) / (trace.t[k] - trace.t[k - 1]),
            (k, _) => (v[k + 1] - v[k - 1]) / (trace.t[k + 1] - trace.t[k - 1]),
        })
        .collect();
    Ok(LyapunovTrace { v, v_dot })
}

/// Window and band for a settling-time measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettleSpec {
    pub from: f64,
    /// End of the window (exclusive); `None` runs to the end of the trace.
    pub until: Option<f64>,
    /// Band radius as a fraction of the deviation norm at `from`.
    pub band_fraction: f64,
}

impl Default for SettleSpec {
    fn default() -> Self {
        SettleSpec {
            from: 0.0,
            until: None,
            band_fraction: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub z_l2: f64,
    pub w_l2: f64,
    pub ratio: Option<f64>,
    /// `∫ zᵀz − γ² wᵀw dt` over the trace.
    pub cost_j: f64,
    /// Time after `from` until the deviation stays in the band.
    pub settling_time: Option<f64>,
    pub max_abs_u: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mf_derivative_bound: Option<Vec<f64>>,
}

fn trapezoid(t: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    t.windows(2)
        .enumerate()
        .map(|(k, w)| 0.5 * (w[1] - w[0]) * (f(k) + f(k + 1)))
        .sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn settling_time(trace: &SimulationTrace, spec: &SettleSpec) -> Option<f64> {
    let until = spec.until.unwrap_or(f64::INFINITY);
    let window: Vec<usize> = (0..trace.len())
        .filter(|&k| trace.t[k] >= spec.from - 1e-12 && trace.t[k] < until - 1e-12)
        .collect();
    let first = *window.first()?;
    let band = spec.band_fraction * norm(&trace.deviation(first));
    let mut entered = None;
    for &k in &window {
        if norm(&trace.deviation(k)) <= band {
            entered.get_or_insert(k);
        } else {
            entered = None;
        }
    }
    entered.map(|k| trace.t[k] - trace.t[first])
}

pub fn performance(trace: &SimulationTrace, gamma: f64, settle: Option<&SettleSpec>) -> PerformanceReport {
    let zz = trapezoid(&trace.t, |k| trace.z[k] * trace.z[k]);
    let ww = trapezoid(&trace.t, |k| trace.w[k].iter().map(|v| v * v).sum());
    let (z_l2, w_l2) = (zz.sqrt(), ww.sqrt());
    PerformanceReport {
        z_l2,
        w_l2,
        ratio: (w_l2 > 0.0).then(|| z_l2 / w_l2),
        cost_j: zz - gamma * gamma * ww,
        settling_time: settle.and_then(|s| settling_time(trace, s)),
        max_abs_u: trace.max_abs_u(),
        mf_derivative_bound: None,
    }
}

/// Per-rule `max |ḣ|` along a trace.
pub fn mf_derivative_bound(trace: &SimulationTrace, model: &FuzzyBilinearModel) -> Result<Vec<f64>> {
    estimate_mf_derivative_bound(model, &trace.t, &trace.x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceDeviation {
    /// Per state channel.
    pub max: Vec<f64>,
    pub rms: Vec<f64>,
}

pub fn compare_traces(a: &SimulationTrace, b: &SimulationTrace) -> Result<TraceDeviation> {
    let same_grid = a.len() == b.len()
        && a.step == b.step
        && a.t.iter().zip(&b.t).all(|(x, y)| x == y)
        && a.state_dim() == b.state_dim();
    if !same_grid {
        return Err(Error::input("traces are on different grids"));
    }
    let n = a.state_dim();
    let mut max = vec![0.0_f64; n];
    let mut sq = vec![0.0; n];
    for (xa, xb) in a.x.iter().zip(&b.x) {
        for i in 0..n {
            let d = (xa[i] - xb[i]).abs();
            max[i] = max[i].max(d);
            sq[i] += d * d;
        }
    }
    let len = a.len().max(1) as f64;
    Ok(TraceDeviation {
        max,
        rms: sq.into_iter().map(|s| (s / len).sqrt()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Linear {
        rate: f64,
        w: DisturbanceSpec,
    }

    impl ClosedLoop for Linear {
        fn state_dim(&self) -> usize {
            1
        }
        fn disturbance_dim(&self) -> usize {
            1
        }
        fn sample(&self, t: f64, x: &[f64]) -> Result<Sample> {
            let w = self.w.at(t);
            Ok(Sample {
                dx: Vector::from_element(1, self.rate * x[0] + w[0]),
                u: 0.0,
                y: x[0],
                z: x[0],
                w,
            })
        }
    }

    fn decay() -> Linear {
        Linear {
            rate: -1.0,
            w: DisturbanceSpec::Zero { m: 1 },
        }
    }

    #[test]
    fn rk4_examples() {
        let zero = |_: f64, _: &[f64]| Ok(Vector::zeros(2));
        assert_eq!(rk4_step(zero, &[1.5, -2.0], 0.0, 0.1).unwrap().as_slice(), &[1.5, -2.0]);
        let neg = |_: f64, x: &[f64]| Ok(Vector::from_element(1, -x[0]));
        let x = rk4_step(neg, &[1.0], 0.0, 0.01).unwrap()[0];
        assert!((x - (-0.01f64).exp()).abs() < 1e-11);
        let bad = |_: f64, _: &[f64]| Ok(Vector::from_element(1, f64::NAN));
        assert!(matches!(rk4_step(bad, &[1.0], 0.3, 0.1), Err(Error::Divergence { t }) if t == 0.3));
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let tr = simulate(&decay(), &[1.0], 1.0, h).unwrap();
            (tr.final_state()[0] - (-1f64).exp()).abs()
        };
        let order = (err(0.1) / err(0.05)).log2();
        assert!((order - 4.0).abs() < 0.2, "{order}");
    }

    #[test]
    fn grid_and_errors() {
        let tr = simulate(&decay(), &[1.0], 1.0, 0.25).unwrap();
        assert_eq!(tr.t, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(simulate(&decay(), &[1.0], 1.0, 0.3).is_err());
        assert!(simulate(&decay(), &[1.0, 2.0], 1.0, 0.25).is_err());
        assert!(simulate(&decay(), &[1.0], -1.0, 0.25).is_err());
    }

    #[test]
    fn divergence_keeps_partial_trace() {
        let blow = Linear {
            rate: 800.0,
            w: DisturbanceSpec::Zero { m: 1 },
        };
        match simulate(&blow, &[1.0], 10.0, 0.1) {
            Err(Error::Diverged { t, partial }) => {
                assert!(t > 0.0);
                assert!(!partial.is_empty());
                assert!(partial.x.iter().all(|x| x[0].is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn equilibrium_is_invariant() {
        let tr = simulate(&decay(), &[0.0], 2.0, 0.01).unwrap();
        assert!(tr.x.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn performance_examples() {
        let tr = simulate(&decay(), &[0.0], 1.0, 0.01).unwrap();
        let p = performance(&tr, 0.3, None);
        assert_eq!((p.cost_j, p.z_l2, p.w_l2), (0.0, 0.0, 0.0));
        assert_eq!(p.ratio, None);

        // z = γ·w channel by channel gives J = 0.
        let gamma = 0.5;
        let mut tr = tr;
        for k in 0..tr.len() {
            let w = (3.0 * tr.t[k]).sin();
            tr.w[k] = vec![w];
            tr.z[k] = gamma * w;
        }
        let p = performance(&tr, gamma, None);
        assert!(p.cost_j.abs() < 1e-15);
        assert!((p.ratio.unwrap() - gamma).abs() < 1e-12);
        // Trapezoid of sin² over [0, 1].
        let exact = 0.5 - (6.0f64).sin() / 12.0;
        assert!((p.w_l2 * p.w_l2 - exact).abs() < 1e-4);
    }

    #[test]
    fn settling_examples() {
        let tr = simulate(&decay(), &[1.0], 6.0, 0.01).unwrap();
        // e^{−t} ≤ 0.02 at t = ln 50 ≈ 3.912.
        let ts = settling_time(&tr, &SettleSpec::default()).unwrap();
        assert!((ts - 50f64.ln()).abs() < 0.011, "{ts}");
        let late = SettleSpec {
            from: 1.0,
            until: Some(3.0),
            band_fraction: 0.5,
        };
        assert!((settling_time(&tr, &late).unwrap() - 2f64.ln()).abs() < 0.011);
        let short = SettleSpec {
            from: 0.0,
            until: Some(1.0),
            band_fraction: 0.02,
        };
        assert_eq!(settling_time(&tr, &short), None);
    }

    #[test]
    fn compare_examples() {
        let a = simulate(&decay(), &[1.0], 1.0, 0.1).unwrap();
        let d = compare_traces(&a, &a).unwrap();
        assert_eq!((d.max[0], d.rms[0]), (0.0, 0.0));
        let mut b = a.clone();
        for x in &mut b.x {
            x[0] += 0.3;
        }
        let d = compare_traces(&a, &b).unwrap();
        assert!((d.max[0] - 0.3).abs() < 1e-12 && (d.rms[0] - 0.3).abs() < 1e-12);
        let c = simulate(&decay(), &[1.0], 1.0, 0.05).unwrap();
        assert!(compare_traces(&a, &c).is_err());
    }

    #[test]
    fn csv_layout() {
        let sys = Linear {
            rate: -1.0,
            w: DisturbanceSpec::Damped {
                channels: vec![DampedSine {
                    amplitude: 1.0,
                    decay: 0.0,
                    frequency: 1.0,
                }],
            },
        };
        let mut tr = simulate(&sys, &[1.0], 0.5, 0.25).unwrap();
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,u,y,z,w1,V");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,1,0,1,1,0,"));
        tr.v = Some(vec![1.0, 0.5, 0.25]);
        assert!(tr.to_csv().lines().nth(3).unwrap().ends_with(",0.25"));
    }

    #[test]
    fn disturbance_specs() {
        let d = DisturbanceSpec::Damped {
            channels: vec![DampedSine {
                amplitude: 2.0,
                decay: 0.001,
                frequency: 3.0,
            }],
        };
        assert!((d.at(0.5)[0] - 2.0 * (-0.0005f64).exp() * 1.5f64.sin()).abs() < 1e-15);
        let bad = DisturbanceSpec::Damped {
            channels: vec![DampedSine {
                amplitude: 1.0,
                decay: -1.0,
                frequency: 1.0,
            }],
        };
        assert!(bad.validate().is_err());
        let tab = DisturbanceSpec::Tabulated {
            times: vec![0.0, 1.0],
            values: vec![vec![0.0, 2.0], vec![1.0, 4.0]],
        };
        tab.validate().unwrap();
        assert_eq!(tab.at(0.25), vec![0.25, 2.5]);
        assert_eq!(tab.at(5.0), vec![1.0, 4.0]);
        let json = serde_json::to_string(&tab).unwrap();
        assert!(json.contains("\"kind\":\"tabulated\""));
        assert_eq!(serde_json::from_str::<DisturbanceSpec>(&json).unwrap(), tab);
    }
}
