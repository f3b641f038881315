//! Python module `fbs_hinf`. Structured values cross the boundary as JSON
//! text in the same schemas the command-line tool writes.

use fbs_hinf::cstr::{self, OperatingPoint};
use fbs_hinf::fbs::{self as plant, FuzzyBilinearModel};
use fbs_hinf::scenario::{self, PlantKind, ScenarioSchedule, ScenarioSpec};
use fbs_hinf::sim::DisturbanceSpec;
use fbs_hinf::synth::{self, SynthesisConfig, SynthesisReport};
use fbs_hinf::Error;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    PyValueError::new_err(format!("reason={} {e}", e.code()))
}

fn model_from(json: Option<&str>) -> Result<FuzzyBilinearModel, Error> {
    match json {
        Some(text) => FuzzyBilinearModel::from_json(text),
        None => Ok(cstr::build_model()),
    }
}

pub fn synthesize_json(
    model: Option<&str>,
    gamma: f64,
    beta: f64,
    epsilon: f64,
    phi: f64,
    common: bool,
) -> Result<String, Error> {
    let model = model_from(model)?;
    let config = SynthesisConfig::new(gamma, beta, epsilon, phi).with_common_lyapunov(common);
    config.validate(&model)?;
    let result = synth::synthesize(&model, &config)?;
    let verification = if result.is_feasible() {
        Some(synth::verify_solution(&model, &config, &result)?)
    } else {
        None
    };
    Ok(SynthesisReport {
        model,
        result,
        verification,
    }
    .to_json())
}

pub fn verify_json(report: &str) -> Result<String, Error> {
    let r = SynthesisReport::from_json(report)?;
    let v = synth::verify_solution(&r.model, &r.result.config, &r.result)?;
    Ok(serde_json::to_string_pretty(&v)?)
}

pub fn simulate_json(
    report: &str,
    x0: Vec<f64>,
    horizon: f64,
    step: f64,
    setpoint: Option<(Vec<f64>, f64)>,
    nonlinear: bool,
    disturbance: Option<&str>,
) -> Result<String, Error> {
    let r = SynthesisReport::from_json(report)?;
    if !r.result.is_feasible() {
        return Err(Error::NoFeasiblePoint(format!("report status is {:?}", r.result.status)));
    }
    let disturbance = match disturbance {
        Some(text) => serde_json::from_str::<DisturbanceSpec>(text)?,
        None if r.model == cstr::build_model() => cstr::disturbance(),
        None => DisturbanceSpec::Zero {
            m: r.model.disturbance_dim(),
        },
    };
    let initial = match setpoint {
        Some((x, u)) => OperatingPoint::new(x, u),
        None => OperatingPoint::origin(r.model.state_dim()),
    };
    let spec = ScenarioSpec {
        name: "python".into(),
        plant: if nonlinear { PlantKind::Nonlinear } else { PlantKind::Fbs },
        x0,
        horizon,
        step,
        disturbance,
        schedule: ScenarioSchedule::constant(initial),
        bilinear: Default::default(),
        band_fraction: scenario::DEFAULT_BAND,
    };
    let controller = r.result.controller()?;
    let out = scenario::run_scenario(&r.model, &controller, &spec, Some(&r.result.p), r.result.config.gamma)?;
    Ok(serde_json::to_string(&out)?)
}

/// JSON of the reactor benchmark model.
#[pyfunction]
fn cstr_model() -> String {
    cstr::build_model().to_json()
}

/// Solve the synthesis LMIs. Returns the report as JSON; an infeasible
/// status is reported in the JSON, not raised.
#[pyfunction]
#[pyo3(signature = (model=None, gamma=0.3, beta=0.1, epsilon=1.0, phi=0.0, common=false))]
fn synthesize(model: Option<&str>, gamma: f64, beta: f64, epsilon: f64, phi: f64, common: bool) -> PyResult<String> {
    synthesize_json(model, gamma, beta, epsilon, phi, common).map_err(to_py)
}

#[pyfunction]
fn verify(report: &str) -> PyResult<String> {
    verify_json(report).map_err(to_py)
}

/// Simulate a synthesized closed loop; returns the scenario outcome as JSON.
#[pyfunction]
#[pyo3(signature = (report, x0, horizon=1.0, step=1e-4, setpoint=None, nonlinear=false, disturbance=None))]
fn simulate(
    report: &str,
    x0: Vec<f64>,
    horizon: f64,
    step: f64,
    setpoint: Option<(Vec<f64>, f64)>,
    nonlinear: bool,
    disturbance: Option<&str>,
) -> PyResult<String> {
    simulate_json(report, x0, horizon, step, setpoint, nonlinear, disturbance).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (s, model=None))]
fn memberships(s: Vec<f64>, model: Option<&str>) -> PyResult<Vec<f64>> {
    let m = model_from(model).map_err(to_py)?;
    plant::memberships(&m, &s).map_err(to_py)
}

#[pyfunction]
fn sin_cos_theta(k: f64, y: f64) -> (f64, f64) {
    plant::sin_cos_theta(k, y)
}

/// Claims-versus-measurements table of the reactor benchmark.
#[pyfunction]
#[pyo3(name = "bench", signature = (step=1e-4))]
fn run_bench(step: f64) -> PyResult<(bool, String)> {
    let r = scenario::run_benchmark(&scenario::benchmark_config(), step).map_err(to_py)?;
    Ok((r.passed(), r.summary_table()))
}

#[pymodule]
#[pyo3(name = "fbs_hinf")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cstr_model, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(memberships, m)?)?;
    m.add_function(wrap_pyfunction!(sin_cos_theta, m)?)?;
    m.add_function(wrap_pyfunction!(run_bench, m)?)?;
    Ok(())
}
