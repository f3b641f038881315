//! Closed-loop plants for simulation and the reactor benchmark scenarios.
//!
//! States are integrated in physical units. The controller and the fuzzy
//! model act on deviations `x − x_d` from the current desired point while
//! memberships are evaluated at the physical state; a setpoint switch
//! changes `x_d` and the deviations follow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cstr::{self, CstrParams, OperatingPoint};
use crate::fbs::{control, open_loop_field_split, outputs, FuzzyBilinearModel, PdcController};
use crate::matlib::SymMatrix;
use crate::sdp::SdpStatus;
use crate::sim::{
    lyapunov_trace, mf_derivative_bound, performance, settling_time, simulate, ClosedLoop,
    DisturbanceSpec, PerformanceReport, Sample, SettleSpec, SimulationTrace,
};
use crate::synth::{
    certify_fixed_point, maximize_phi, minimize_gamma, synthesize, verify_solution, CheckFamily,
    SynthesisConfig, SynthesisResult, VerificationReport, DEFAULT_PHI_CEILING,
};
use crate::{Error, Result};

/// Which input multiplies the bilinear term `N x` of the fuzzy model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BilinearInput {
    /// The controller output `u_δ`.
    #[default]
    Deviation,
    /// The total input `u_d + u_δ`.
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub time: f64,
    pub point: OperatingPoint,
}

/// Desired operating point over time: `initial` until the first switch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSchedule {
    pub initial: OperatingPoint,
    #[serde(default)]
    pub switches: Vec<Setpoint>,
}

impl ScenarioSchedule {
    pub fn constant(point: OperatingPoint) -> Self {
        ScenarioSchedule {
            initial: point,
            switches: Vec::new(),
        }
    }

    pub fn at(&self, t: f64) -> &OperatingPoint {
        self.switches
            .iter()
            .rev()
            .find(|s| t >= s.time)
            .map_or(&self.initial, |s| &s.point)
    }

    /// Start times of the constant segments, beginning with 0.
    pub fn segment_starts(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.switches.iter().map(|s| s.time)).collect()
    }

    pub fn validate(&self, n: usize, horizon: f64) -> Result<()> {
        let points = std::iter::once(&self.initial).chain(self.switches.iter().map(|s| &s.point));
        for p in points {
            if p.x.len() != n {
                return Err(Error::Dimension {
                    what: "operating point",
                    expected: n,
                    got: p.x.len(),
                });
            }
            if p.x.iter().any(|v| !v.is_finite()) || !p.u.is_finite() {
                return Err(Error::input("operating points must be finite"));
            }
        }
        let mut last = 0.0;
        for s in &self.switches {
            if !(s.time > last) || !(s.time < horizon) {
                return Err(Error::input(format!(
                    "switch times must increase strictly within (0, {horizon}), got {}",
                    s.time
                )));
            }
            last = s.time;
        }
        Ok(())
    }
}

/// Fuzzy bilinear model under the PDC law.
pub struct FbsLoop<'a> {
    pub model: &'a FuzzyBilinearModel,
    pub controller: &'a PdcController,
    pub disturbance: &'a DisturbanceSpec,
    pub schedule: &'a ScenarioSchedule,
    pub bilinear: BilinearInput,
}

impl ClosedLoop for FbsLoop<'_> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn disturbance_dim(&self) -> usize {
        self.model.disturbance_dim()
    }

    fn sample(&self, t: f64, x: &[f64]) -> Result<Sample> {
        let op = self.schedule.at(t);
        let xd = op.shift_state(x);
        let w = self.disturbance.at(t);
        let (y, z) = outputs(self.model, x, &xd, &w)?;
        let u = control(self.model, self.controller, x, y)?;
        let ub = match self.bilinear {
            BilinearInput::Deviation => u,
            BilinearInput::Total => u + op.u,
        };
        let dx = open_loop_field_split(self.model, x, &xd, u, ub, &w)?;
        Ok(Sample { dx, u, y, z, w })
    }

    fn reference(&self, t: f64) -> Vec<f64> {
        self.schedule.at(t).x.clone()
    }
}

/// The reactor itself driven by `u = u_d + u_δ`.
pub struct NonlinearLoop<'a> {
    pub params: &'a CstrParams,
    pub model: &'a FuzzyBilinearModel,
    pub controller: &'a PdcController,
    pub disturbance: &'a DisturbanceSpec,
    pub schedule: &'a ScenarioSchedule,
}

impl ClosedLoop for NonlinearLoop<'_> {
    fn state_dim(&self) -> usize {
        2
    }

    fn disturbance_dim(&self) -> usize {
        2
    }

    fn sample(&self, t: f64, x: &[f64]) -> Result<Sample> {
        let op = self.schedule.at(t);
        let w = self.disturbance.at(t);
        let (yd, zd) = op.outputs();
        let y = x[1] - yd;
        let u = control(self.model, self.controller, x, y)?;
        let out = cstr::dynamics(self.params, x, op.u + u, &w)?;
        Ok(Sample {
            dx: crate::Vector::from_column_slice(&out.dx),
            u,
            y: out.y - yd,
            z: out.z - zd,
            w,
        })
    }

    fn reference(&self, t: f64) -> Vec<f64> {
        self.schedule.at(t).x.clone()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlantKind {
    #[default]
    Fbs,
    Nonlinear,
}

pub const DEFAULT_STEP: f64 = 1e-4;
pub const DEFAULT_BAND: f64 = 0.02;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub plant: PlantKind,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub disturbance: DisturbanceSpec,
    pub schedule: ScenarioSchedule,
    #[serde(default)]
    pub bilinear: BilinearInput,
    #[serde(default = "default_band")]
    pub band_fraction: f64,
}

fn default_band() -> f64 {
    DEFAULT_BAND
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSettling {
    pub from: f64,
    pub until: f64,
    pub settling_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSummary {
    pub max_value: f64,
    /// Largest one-step increase of `V` along the grid.
    pub max_increase: f64,
}

impl LyapunovSummary {
    /// `V` non-increasing within `rel_tol · max V`.
    pub fn non_increasing(&self, rel_tol: f64) -> bool {
        self.max_increase <= rel_tol * self.max_value
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub spec: ScenarioSpec,
    pub trace: SimulationTrace,
    pub performance: PerformanceReport,
    pub segments: Vec<SegmentSettling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSummary>,
}

/// Simulates one scenario. With Lyapunov matrices the trace carries `V`.
pub fn run_scenario(
    model: &FuzzyBilinearModel,
    controller: &PdcController,
    spec: &ScenarioSpec,
    lyapunov: Option<&[SymMatrix]>,
    gamma: f64,
) -> Result<ScenarioOutcome> {
    let n = model.state_dim();
    spec.disturbance.validate()?;
    if spec.disturbance.dim() != model.disturbance_dim() {
        return Err(Error::Dimension {
            what: "disturbance channels",
            expected: model.disturbance_dim(),
            got: spec.disturbance.dim(),
        });
    }
    spec.schedule.validate(n, spec.horizon)?;
    if !(spec.band_fraction > 0.0) {
        return Err(Error::input("settling band fraction must be > 0"));
    }
    let mut trace = match spec.plant {
        PlantKind::Fbs => {
            let plant = FbsLoop {
                model,
                controller,
                disturbance: &spec.disturbance,
                schedule: &spec.schedule,
                bilinear: spec.bilinear,
            };
            simulate(&plant, &spec.x0, spec.horizon, spec.step)?
        }
        PlantKind::Nonlinear => {
            if n != 2 || model.disturbance_dim() != 2 {
                return Err(Error::input("the nonlinear plant is the two-state reactor"));
            }
            let params = CstrParams::default();
            let plant = NonlinearLoop {
                params: &params,
                model,
                controller,
                disturbance: &spec.disturbance,
                schedule: &spec.schedule,
            };
            simulate(&plant, &spec.x0, spec.horizon, spec.step)?
        }
    };
    let starts = spec.schedule.segment_starts();
    let segments: Vec<SegmentSettling> = starts
        .iter()
        .enumerate()
        .map(|(i, &from)| {
            let until = starts.get(i + 1).copied().unwrap_or(spec.horizon);
            let window = SettleSpec {
                from,
                until: starts.get(i + 1).copied(),
                band_fraction: spec.band_fraction,
            };
            SegmentSettling {
                from,
                until,
                settling_time: settling_time(&trace, &window),
            }
        })
        .collect();
    let first = SettleSpec {
        from: 0.0,
        until: starts.get(1).copied(),
        band_fraction: spec.band_fraction,
    };
    let mut perf = performance(&trace, gamma, Some(&first));
    perf.mf_derivative_bound = Some(mf_derivative_bound(&trace, model)?);
    let lyapunov = match lyapunov {
        Some(p) => {
            let lt = lyapunov_trace(&trace, model, p)?;
            let summary = LyapunovSummary {
                max_value: lt.max_value(),
                max_increase: lt.max_increase(),
            };
            trace.v = Some(lt.v);
            Some(summary)
        }
        None => None,
    };
    Ok(ScenarioOutcome {
        spec: spec.clone(),
        trace,
        performance: perf,
        segments,
        lyapunov,
    })
}

fn fbs_spec(name: &str, x0: [f64; 2], horizon: f64, step: f64, schedule: ScenarioSchedule) -> ScenarioSpec {
    ScenarioSpec {
        name: name.to_string(),
        plant: PlantKind::Fbs,
        x0: x0.to_vec(),
        horizon,
        step,
        disturbance: cstr::disturbance(),
        schedule,
        bilinear: BilinearInput::Deviation,
        band_fraction: DEFAULT_BAND,
    }
}

/// Regulation to the origin from `[3.1, 1.5]` under the reference disturbance.
pub fn regulation(step: f64) -> ScenarioSpec {
    fbs_spec(
        "fig2-regulation",
        cstr::INITIAL_CONDITIONS[0],
        1.0,
        step,
        ScenarioSchedule::constant(OperatingPoint::origin(2)),
    )
}

/// Zero initial state, reference disturbance: the attenuation experiment.
pub fn attenuation(step: f64, disturbance: DisturbanceSpec) -> ScenarioSpec {
    ScenarioSpec {
        name: "attenuation".to_string(),
        x0: vec![0.0, 0.0],
        disturbance,
        ..regulation(step)
    }
}

/// Regulation from `[3.1, 1.5]` with `w ≡ 0`.
pub fn undisturbed(step: f64) -> ScenarioSpec {
    ScenarioSpec {
        name: "undisturbed".to_string(),
        disturbance: DisturbanceSpec::Zero { m: 2 },
        ..regulation(step)
    }
}

/// All figure scenarios in a fixed order.
pub fn figure_scenarios(step: f64) -> Vec<ScenarioSpec> {
    let origin = || ScenarioSchedule::constant(OperatingPoint::origin(2));
    let design = || ScenarioSchedule::constant(cstr::design_point());
    let switch = || ScenarioSchedule {
        initial: OperatingPoint::origin(2),
        switches: vec![Setpoint {
            time: 0.4,
            point: cstr::design_point(),
        }],
    };
    let ics = cstr::INITIAL_CONDITIONS;
    let mut out = vec![
        regulation(step),
        fbs_spec("fig3-tracking", ics[0], 1.0, step, design()),
    ];
    for (i, x0) in ics.iter().enumerate() {
        out.push(fbs_spec(&format!("fig4-ic{}", i + 1), *x0, 1.0, step, origin()));
    }
    for (i, x0) in ics.iter().enumerate() {
        out.push(fbs_spec(&format!("fig5-setpoint-ic{}", i + 1), *x0, 0.8, step, switch()));
    }
    out.push(fbs_spec("fig6-fbs", ics[0], 1.0, step, design()));
    out.push(ScenarioSpec {
        name: "fig6-nonlinear".to_string(),
        plant: PlantKind::Nonlinear,
        ..fbs_spec("", ics[0], 1.0, step, design())
    });
    out
}

/// Runs scenarios concurrently on the current rayon pool, preserving order.
pub fn run_batch(
    model: &FuzzyBilinearModel,
    controller: &PdcController,
    specs: &[ScenarioSpec],
    lyapunov: Option<&[SymMatrix]>,
    gamma: f64,
) -> Result<Vec<ScenarioOutcome>> {
    specs
        .par_iter()
        .map(|s| run_scenario(model, controller, s, lyapunov, gamma))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub name: String,
    pub claim: String,
    pub measured: String,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub synthesis: SynthesisResult,
    pub verification: VerificationReport,
    pub phi_max: f64,
    pub phi_capped: bool,
    pub gamma_min: f64,
    pub reported_point_status: SdpStatus,
    pub reported_point_margin: f64,
    pub claims: Vec<Claim>,
    pub scenarios: Vec<ScenarioOutcome>,
    pub reported_scenarios: Vec<ScenarioOutcome>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }

    /// Fixed-width table of claims and measurements.
    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<28} {:<8} {:<38} {}\n", "check", "result", "claim", "measured");
        for c in &self.claims {
            out.push_str(&format!(
                "{:<28} {:<8} {:<38} {}\n",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.claim,
                c.measured
            ));
        }
        out
    }
}

fn claim(name: &str, claim: &str, measured: String, passed: bool) -> Claim {
    Claim {
        name: name.to_string(),
        claim: claim.to_string(),
        measured,
        passed,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "never".to_string(), |x| format!("{x:.4}"))
}

/// Synthesis, verification, the figure scenarios and the searches, with each
/// published claim compared against its measurement.
pub fn run_benchmark(config: &SynthesisConfig, step: f64) -> Result<BenchReport> {
    let model = cstr::build_model();
    let synthesis = synthesize(&model, config)?;
    if !synthesis.is_feasible() {
        return Err(Error::NoFeasiblePoint(format!(
            "benchmark synthesis is {:?} (worst block {}, margin {:e})",
            synthesis.status, synthesis.worst_block, synthesis.margin
        )));
    }
    let verification = verify_solution(&model, config, &synthesis)?;
    let controller = synthesis.controller()?;
    let phi = maximize_phi(&model, config, DEFAULT_PHI_CEILING, 1.0)?;
    let gamma = minimize_gamma(&model, config)?;
    let reported = cstr::reported_lyapunov();
    let reported_p = vec![reported; model.rule_count()];
    let reported_k = vec![cstr::REPORTED_GAIN; model.rule_count()];
    let cert = certify_fixed_point(&model, config, &reported_p, &reported_k)?;
    let reported_ctrl = PdcController::new(config.beta, reported_k)?;

    let mut specs = figure_scenarios(step);
    specs.push(attenuation(step, cstr::disturbance()));
    specs.push(undisturbed(step));
    let scenarios = run_batch(&model, &controller, &specs, Some(&synthesis.p), config.gamma)?;
    let reported_specs = vec![regulation(step), attenuation(step, cstr::disturbance())];
    let reported_scenarios = run_batch(&model, &reported_ctrl, &reported_specs, Some(&reported_p), config.gamma)?;

    let by_name = |name: &str| scenarios.iter().find(|s| s.spec.name == name).expect("scenario present");
    let mut claims = Vec::new();
    claims.push(claim(
        "synthesis",
        "strictly feasible",
        format!("margin {:.3e} ({})", synthesis.margin, synthesis.worst_block),
        synthesis.is_feasible() && synthesis.margin <= -1e-7,
    ));
    let fam = |f| verification.worst(f).unwrap_or(f64::NAN);
    claims.push(claim(
        "verification",
        "all certificate checks pass",
        format!(
            "blocks {:.3e}, qmi {:.3e}, schur {:.1e}",
            fam(CheckFamily::TheoremBlock),
            fam(CheckFamily::Qmi),
            fam(CheckFamily::SchurEquivalence)
        ),
        verification.passed,
    ));
    let reg = by_name("fig2-regulation");
    let ts = reg.performance.settling_time;
    claims.push(claim(
        "convergence",
        "settles in < 0.1 (2% band, <= 0.12)",
        fmt_opt(ts),
        ts.is_some_and(|t| t <= 0.12),
    ));
    let max_u = scenarios
        .iter()
        .chain(&reported_scenarios)
        .map(|s| s.performance.max_abs_u)
        .fold(0.0, f64::max);
    claims.push(claim(
        "control bound",
        "max |u| <= 0.1",
        format!("{max_u:.6}"),
        max_u <= config.beta,
    ));
    let att = by_name("attenuation");
    claims.push(claim(
        "attenuation",
        "J <= 0 from x(0) = 0",
        format!("J = {:.4e}, ratio {:.4}", att.performance.cost_j, att.performance.ratio.unwrap_or(0.0)),
        att.performance.cost_j <= 1e-6,
    ));
    let lyap = by_name("undisturbed").lyapunov.clone().expect("traced");
    claims.push(claim(
        "lyapunov",
        "V non-increasing with w = 0",
        format!("max step increase {:.3e} of max V {:.3e}", lyap.max_increase, lyap.max_value),
        lyap.non_increasing(1e-4),
    ));
    let rep_reg = &reported_scenarios[0];
    let rep_att = &reported_scenarios[1];
    claims.push(claim(
        "reported point",
        "published P, K certify and perform",
        format!(
            "{:?} margin {:.3e}; settle {}; J {:.3e}",
            cert.status,
            cert.margin,
            fmt_opt(rep_reg.performance.settling_time),
            rep_att.performance.cost_j
        ),
        cholesky_ok(&reported_p[0])
            && rep_reg.performance.settling_time.is_some_and(|t| t <= 0.12)
            && rep_att.performance.cost_j <= 1e-6,
    ));
    let tracking = ["fig3-tracking", "fig5-setpoint-ic1", "fig5-setpoint-ic2", "fig5-setpoint-ic3"];
    let tracked = tracking
        .iter()
        .all(|n| by_name(n).segments.iter().all(|s| s.settling_time.is_some()));
    claims.push(claim(
        "tracking",
        "every setpoint segment settles",
        tracking
            .iter()
            .map(|n| {
                let segs: Vec<String> = by_name(n).segments.iter().map(|s| fmt_opt(s.settling_time)).collect();
                format!("{}:{}", n, segs.join("/"))
            })
            .collect::<Vec<_>>()
            .join(" "),
        tracked,
    ));
    let fbs = by_name("fig6-fbs");
    let nl = by_name("fig6-nonlinear");
    let dev = crate::sim::compare_traces(&fbs.trace, &nl.trace)?;
    claims.push(claim(
        "model fidelity",
        "FBS and plant settle alike",
        format!(
            "settle {} / {}; max dev [{:.4}, {:.4}]",
            fmt_opt(fbs.performance.settling_time),
            fmt_opt(nl.performance.settling_time),
            dev.max[0],
            dev.max[1]
        ),
        fbs.performance.settling_time.is_some() && nl.performance.settling_time.is_some(),
    ));
    claims.push(claim(
        "phi search",
        "phi_max > 0",
        format!("{}{}", phi.phi_max, if phi.capped { " (ceiling)" } else { "" }),
        phi.phi_max > 0.0,
    ));
    claims.push(claim(
        "gamma search",
        "gamma_min <= 0.3",
        format!("{:.6}", gamma.gamma_min),
        gamma.gamma_min <= config.gamma,
    ));

    Ok(BenchReport {
        synthesis,
        verification,
        phi_max: phi.phi_max,
        phi_capped: phi.capped,
        gamma_min: gamma.gamma_min,
        reported_point_status: cert.status,
        reported_point_margin: cert.margin,
        claims,
        scenarios,
        reported_scenarios,
    })
}

fn cholesky_ok(p: &SymMatrix) -> bool {
    crate::matlib::cholesky(p).is_some()
}

/// Reference configuration: γ = 0.3, β = 0.1, ε = 1, Φ = 0, shared `P`.
pub fn benchmark_config() -> SynthesisConfig {
    SynthesisConfig::new(cstr::GAMMA, cstr::BETA, cstr::EPSILON, 0.0).with_common_lyapunov(true)
}
