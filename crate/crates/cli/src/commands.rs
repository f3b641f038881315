use std::path::{Path, PathBuf};

use fbs_hinf::cstr;
use fbs_hinf::fbs::FuzzyBilinearModel;
use fbs_hinf::scenario::{
    benchmark_config, figure_scenarios, run_batch, run_benchmark, PlantKind, ScenarioOutcome, ScenarioSpec,
};
use fbs_hinf::sdp::SdpStatus;
use fbs_hinf::sim::{compare_traces, TraceDeviation};
use fbs_hinf::synth::{
    maximize_phi, synthesize as solve, verify_solution, CheckFamily, Epsilon, SynthesisConfig, SynthesisReport,
    SynthesisResult, VerificationReport, DEFAULT_PHI_CEILING,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{PhiSetting, PlantChoice, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{read_text, sha256_hex, OutputDir};

const PHI_TOLERANCE: f64 = 1e-2;

fn out_dir(cfg: &RunConfig) -> OutputDir {
    OutputDir::new(cfg.out.clone().unwrap_or_else(|| PathBuf::from(".")))
}

fn pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(CliError::usage("usage", "--jobs must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage("usage", format!("cannot start worker pool: {e}")))
}

fn status_name(s: SdpStatus) -> String {
    serde_json::to_value(s).unwrap().as_str().unwrap().to_string()
}

fn fmt_settle(t: Option<f64>) -> String {
    t.map_or_else(|| "none".to_string(), |t| format!("{t:.4}"))
}

fn load_report(path: &Path) -> CliResult<SynthesisReport> {
    let text = read_text(path, "report")?;
    SynthesisReport::from_json(&text)
        .map_err(|e| CliError::usage("invalid-report", format!("{}: {e}", path.display())))
}

pub fn synthesize(cfg: &RunConfig) -> CliResult<()> {
    let (_, model) = cfg.load_model()?;
    let config = cfg.synthesis(&model)?;
    let out = out_dir(cfg);
    let result = match cfg.phi() {
        PhiSetting::Value(_) => solve(&model, &config)?,
        PhiSetting::Auto => match maximize_phi(&model, &config, DEFAULT_PHI_CEILING, PHI_TOLERANCE) {
            Ok(search) => {
                println!(
                    "phi_max={}{} evaluations={}",
                    search.phi_max,
                    if search.capped { " (ceiling)" } else { "" },
                    search.evaluations
                );
                search.result
            }
            Err(fbs_hinf::Error::NoFeasiblePoint(_)) => solve(&model, &config)?,
            Err(e) => return Err(e.into()),
        },
    };
    let verification = if result.is_feasible() {
        Some(verify_solution(&model, &result.config, &result)?)
    } else {
        None
    };
    let feasible = result.is_feasible();
    let summary = format!(
        "status={} margin={:.6e} worst_block={} gains={:?}",
        status_name(result.status),
        result.margin,
        result.worst_block,
        result.gains
    );
    let diagnosis = result.diagnosis.clone();
    let report = SynthesisReport {
        model,
        result,
        verification,
    };
    let path = out.write("synthesis.json", format!("{}\n", report.to_json()).as_bytes())?;
    println!("{summary}");
    println!("report={}", path.display());
    if !feasible {
        let mut msg = format!("synthesis LMIs are not strictly feasible ({summary})");
        if let Some(d) = diagnosis {
            msg.push_str(": ");
            msg.push_str(&d);
        }
        return Err(CliError::failed("no-feasible-point", msg));
    }
    Ok(())
}

fn mismatch(report: &SynthesisConfig, expected: &RunConfig) -> Option<String> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let mut bad = Vec::new();
    if let Some(g) = expected.gamma.filter(|g| !close(*g, report.gamma)) {
        bad.push(format!("gamma {g} vs report {}", report.gamma));
    }
    if let Some(b) = expected.beta.filter(|b| !close(*b, report.beta)) {
        bad.push(format!("beta {b} vs report {}", report.beta));
    }
    if let Some(Epsilon::Uniform(e)) = &expected.epsilon {
        if report.epsilon != Epsilon::Uniform(*e) {
            bad.push(format!("epsilon {e} vs report {:?}", report.epsilon));
        }
    }
    if let Some(PhiSetting::Value(p)) = expected.phi {
        if !close(p, report.phi) {
            bad.push(format!("phi {p} vs report {}", report.phi));
        }
    }
    if expected.common_lyapunov == Some(true) && !report.common_lyapunov {
        bad.push("common Lyapunov requested but report is rule-wise".into());
    }
    (!bad.is_empty()).then(|| bad.join(", "))
}

pub fn verify(path: &Path, expected: &RunConfig, out: Option<PathBuf>) -> CliResult<()> {
    let report = load_report(path)?;
    if let Some(m) = mismatch(&report.result.config, expected) {
        return Err(CliError::failed("config-mismatch", m));
    }
    let check = verify_solution(&report.model, &report.result.config, &report.result)?;
    for family in [CheckFamily::TheoremBlock, CheckFamily::Qmi, CheckFamily::SchurEquivalence] {
        let all: Vec<_> = check.family(family).collect();
        println!(
            "{:?}: {}/{} pass, worst {:.6e}",
            family,
            all.iter().filter(|c| c.passed).count(),
            all.len(),
            check.worst(family).unwrap_or(f64::NAN)
        );
    }
    if let Some(dir) = out {
        OutputDir::new(dir).write_json("verification.json", &check)?;
    }
    fail_on(&check)
}

fn fail_on(check: &VerificationReport) -> CliResult<()> {
    if check.passed {
        println!("verification=pass");
        return Ok(());
    }
    let failures: Vec<_> = check.failures().collect();
    Err(CliError::failed(
        "verification-failed",
        format!(
            "{} of {} checks fail, first {} ({:.6e})",
            failures.len(),
            check.checks.len(),
            failures[0].label,
            failures[0].value
        ),
    ))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    scenario: &'a ScenarioSpec,
    synthesis: &'a SynthesisConfig,
    gains: &'a [f64],
    model_sha256: String,
    performance: &'a fbs_hinf::sim::PerformanceReport,
    segments: &'a [fbs_hinf::scenario::SegmentSettling],
    #[serde(skip_serializing_if = "Option::is_none")]
    lyapunov: Option<&'a fbs_hinf::scenario::LyapunovSummary>,
}

fn write_outcome(
    out: &OutputDir,
    name: &str,
    o: &ScenarioOutcome,
    result: &SynthesisResult,
    model_hash: &str,
    json: bool,
) -> CliResult<()> {
    if json {
        out.write_json(&format!("{name}.json"), o)?;
    } else {
        out.write(&format!("{name}.csv"), o.trace.to_csv().as_bytes())?;
    }
    out.write_json(
        &format!("{name}.meta.json"),
        &Sidecar {
            scenario: &o.spec,
            synthesis: &result.config,
            gains: &result.gains,
            model_sha256: model_hash.to_string(),
            performance: &o.performance,
            segments: &o.segments,
            lyapunov: o.lyapunov.as_ref(),
        },
    )?;
    Ok(())
}

fn print_outcome(name: &str, o: &ScenarioOutcome) {
    let segs: Vec<String> = o.segments.iter().map(|s| fmt_settle(s.settling_time)).collect();
    println!(
        "{name}: settle={} max|u|={:.6} J={:.6e} ratio={}",
        segs.join("/"),
        o.performance.max_abs_u,
        o.performance.cost_j,
        o.performance.ratio.map_or("n/a".to_string(), |r| format!("{r:.6}"))
    );
}

fn model_hash(model: &FuzzyBilinearModel) -> String {
    sha256_hex(model.to_json().as_bytes())
}

fn custom_specs(cfg: &RunConfig, model: &FuzzyBilinearModel, bench: bool) -> CliResult<Vec<ScenarioSpec>> {
    let horizon = cfg.horizon();
    let disturbance = cfg.disturbance(model, bench)?;
    let schedule = cfg.schedule(model, horizon)?;
    let states = cfg.initial_states(model, bench)?;
    let plants: &[(PlantKind, &str)] = match cfg.plant.unwrap_or(PlantChoice::Fbs) {
        PlantChoice::Fbs => &[(PlantKind::Fbs, "")],
        PlantChoice::Nonlinear => &[(PlantKind::Nonlinear, "")],
        PlantChoice::Both => &[(PlantKind::Fbs, "-fbs"), (PlantKind::Nonlinear, "-nonlinear")],
    };
    let mut specs = Vec::new();
    for (k, x0) in states.iter().enumerate() {
        let base = if states.len() > 1 { format!("sim-ic{}", k + 1) } else { "sim".to_string() };
        for (plant, suffix) in plants {
            specs.push(ScenarioSpec {
                name: format!("{base}{suffix}"),
                plant: *plant,
                x0: x0.clone(),
                horizon,
                step: cfg.step(),
                disturbance: disturbance.clone(),
                schedule: schedule.clone(),
                bilinear: cfg.bilinear.unwrap_or_default(),
                band_fraction: cfg.band(),
            });
        }
    }
    Ok(specs)
}

fn figure_specs(cfg: &RunConfig, figure: &str) -> CliResult<Vec<ScenarioSpec>> {
    let all = figure_scenarios(cfg.step());
    let picked: Vec<ScenarioSpec> = all
        .into_iter()
        .filter(|s| figure == "all" || s.name.split('-').next() == Some(figure))
        .map(|s| ScenarioSpec {
            band_fraction: cfg.band(),
            ..s
        })
        .collect();
    if picked.is_empty() {
        return Err(CliError::usage(
            "usage",
            format!("unknown figure {figure:?} (fig2, fig3, fig4, fig5, fig6 or all)"),
        ));
    }
    Ok(picked)
}

pub fn simulate(path: &Path, figure: Option<&str>, cfg: &RunConfig, json: bool) -> CliResult<()> {
    let report = load_report(path)?;
    let model = &report.model;
    let bench = *model == cstr::build_model();
    let specs = match figure {
        Some(f) if bench => figure_specs(cfg, f)?,
        Some(_) => return Err(CliError::usage("usage", "--figure needs a report for the reactor benchmark")),
        None => custom_specs(cfg, model, bench)?,
    };
    if !report.result.is_feasible() {
        return Err(CliError::failed(
            "infeasible-report",
            format!("report status is {}", status_name(report.result.status)),
        ));
    }
    let controller = report.result.controller()?;
    let outcomes = pool(cfg.jobs)?.install(|| {
        run_batch(model, &controller, &specs, Some(&report.result.p), report.result.config.gamma)
    })?;
    let out = out_dir(cfg);
    let hash = model_hash(model);
    for o in &outcomes {
        write_outcome(&out, &o.spec.name, o, &report.result, &hash, json)?;
        print_outcome(&o.spec.name, o);
    }
    for (name, dev) in pair_deviations(&outcomes)? {
        out.write_json(&format!("{name}.deviation.json"), &dev)?;
        println!(
            "{name}: max deviation {:?} rms {:?}",
            dev.max.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>(),
            dev.rms.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()
        );
    }
    Ok(())
}

/// Deviation between each `<base>-fbs` trace and its `<base>-nonlinear` twin.
fn pair_deviations(outcomes: &[ScenarioOutcome]) -> CliResult<Vec<(String, TraceDeviation)>> {
    let mut out = Vec::new();
    for a in outcomes {
        let Some(base) = a.spec.name.strip_suffix("-fbs") else { continue };
        let twin = format!("{base}-nonlinear");
        if let Some(b) = outcomes.iter().find(|o| o.spec.name == twin) {
            out.push((base.to_string(), compare_traces(&a.trace, &b.trace)?));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct ScenarioSummary<'a> {
    name: String,
    performance: &'a fbs_hinf::sim::PerformanceReport,
    segments: &'a [fbs_hinf::scenario::SegmentSettling],
    #[serde(skip_serializing_if = "Option::is_none")]
    lyapunov: Option<&'a fbs_hinf::scenario::LyapunovSummary>,
}

#[derive(Serialize)]
struct BenchSummary<'a> {
    passed: bool,
    claims: &'a [fbs_hinf::scenario::Claim],
    synthesis: &'a SynthesisResult,
    verification: &'a VerificationReport,
    phi_max: f64,
    phi_capped: bool,
    gamma_min: f64,
    reported_point_status: SdpStatus,
    reported_point_margin: f64,
    model_sha256: String,
    scenarios: Vec<ScenarioSummary<'a>>,
}

pub fn bench(cfg: &RunConfig, json: bool) -> CliResult<()> {
    let config = benchmark_config();
    let step = cfg.step();
    let report = pool(cfg.jobs)?.install(|| run_benchmark(&config, step))?;
    let out = out_dir(cfg);
    let model = cstr::build_model();
    let hash = model_hash(&model);
    let named: Vec<(String, &ScenarioOutcome, &SynthesisResult)> = report
        .scenarios
        .iter()
        .map(|o| (o.spec.name.clone(), o, &report.synthesis))
        .chain(report.reported_scenarios.iter().map(|o| (format!("published-{}", o.spec.name), o, &report.synthesis)))
        .collect();
    let published = SynthesisResult {
        p: vec![cstr::reported_lyapunov(); model.rule_count()],
        gains: vec![cstr::REPORTED_GAIN; model.rule_count()],
        ..report.synthesis.clone()
    };
    for (name, o, result) in &named {
        let result = if name.starts_with("published-") { &published } else { *result };
        write_outcome(&out, name, o, result, &hash, json)?;
    }
    let summary = BenchSummary {
        passed: report.passed(),
        claims: &report.claims,
        synthesis: &report.synthesis,
        verification: &report.verification,
        phi_max: report.phi_max,
        phi_capped: report.phi_capped,
        gamma_min: report.gamma_min,
        reported_point_status: report.reported_point_status,
        reported_point_margin: report.reported_point_margin,
        model_sha256: hash,
        scenarios: named
            .iter()
            .map(|(name, o, _)| ScenarioSummary {
                name: name.clone(),
                performance: &o.performance,
                segments: &o.segments,
                lyapunov: o.lyapunov.as_ref(),
            })
            .collect(),
    };
    out.write_json("bench.json", &summary)?;
    let table = report.summary_table();
    out.write("bench-summary.txt", table.as_bytes())?;
    print!("{table}");
    if !report.passed() {
        let failed: Vec<_> = report.claims.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        return Err(CliError::failed("acceptance-failed", format!("failing checks: {}", failed.join(", "))));
    }
    Ok(())
}

pub struct SweepGrid {
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Serialize)]
struct SweepRow {
    gamma: f64,
    epsilon: f64,
    phi: f64,
    status: String,
    margin: f64,
    worst_block: String,
    gains: Vec<f64>,
}

pub fn sweep(cfg: &RunConfig, grid: &SweepGrid, json: bool) -> CliResult<()> {
    let (_, model) = cfg.load_model()?;
    let mut points = Vec::new();
    for &gamma in &grid.gamma {
        for &epsilon in &grid.epsilon {
            for &phi in &grid.phi {
                let point = RunConfig {
                    gamma: Some(gamma),
                    epsilon: Some(Epsilon::Uniform(epsilon)),
                    phi: Some(PhiSetting::Value(phi)),
                    ..cfg.clone()
                };
                points.push((gamma, epsilon, phi, point.synthesis(&model)?));
            }
        }
    }
    let rows: Vec<SweepRow> = pool(cfg.jobs)?.install(|| {
        points
            .par_iter()
            .map(|(gamma, epsilon, phi, config)| {
                let r = solve(&model, config)?;
                Ok(SweepRow {
                    gamma: *gamma,
                    epsilon: *epsilon,
                    phi: *phi,
                    status: status_name(r.status),
                    margin: r.margin,
                    worst_block: r.worst_block,
                    gains: r.gains,
                })
            })
            .collect::<CliResult<_>>()
    })?;
    let out = out_dir(cfg);
    if json {
        out.write_json("sweep.json", &rows)?;
    } else {
        let mut csv = String::from("gamma,epsilon,phi,status,margin,worst_block\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{:e},\"{}\"\n",
                r.gamma, r.epsilon, r.phi, r.status, r.margin, r.worst_block
            ));
        }
        out.write("sweep.csv", csv.as_bytes())?;
    }
    for r in &rows {
        println!(
            "gamma={} epsilon={} phi={} status={} margin={:.6e}",
            r.gamma, r.epsilon, r.phi, r.status, r.margin
        );
    }
    Ok(())
}
