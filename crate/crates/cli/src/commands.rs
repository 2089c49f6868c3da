use std::fs;
use std::path::{Path, PathBuf};

use renewal_core::batch;
use renewal_core::equilibria::{equilibrium_set, infection_free, EquilibriumSet};
use renewal_core::lyapunov::{monotonicity_monitor, LyapunovRecorder, LyapunovSample, MonitorReport};
use renewal_core::simulator::{classify_initial, simulate, Classification, TrajectoryRecord};
use renewal_core::verification::{
    closed_form_equilibrium_check, homogeneous_reduction_check, refinement_study, RefinementScenario,
};

use crate::config::{set_path, Built, Scenario};
use crate::error::{CliError, Status};
use crate::report::{
    CertificationBlock, ConvergenceBlock, EquilibriaBlock, GridBlock, MonitorBlock, SummaryReport, Verdict,
};

/// 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn analyze(scenario: &Scenario) -> Result<(Built, EquilibriumSet), CliError> {
    let built = scenario.build()?;
    let m = &built.model;
    let eq = equilibrium_set(&m.grid, &m.params, &m.kernel, built.solver)?;
    Ok((built, eq))
}

fn base_report(command: &'static str, built: &Built, eq: &EquilibriumSet) -> SummaryReport {
    let m = &built.model;
    SummaryReport {
        command,
        r0: eq.r0,
        equilibria: EquilibriaBlock::from(eq),
        grid: GridBlock {
            dt: m.delta(),
            k_max: m.k_max(),
            tau_bar: m.kernel.tau_bar(),
            kernel_mass: eq.kernel_mass,
            corrector: m.corrector,
        },
        classification: None,
        convergence: None,
        monitor: None,
        oracles: Vec::new(),
        certification: None,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::output(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_summary(dir: &Path, report: &SummaryReport) -> Result<(), CliError> {
    create_dir(dir)?;
    let text = serde_json::to_string_pretty(report).map_err(CliError::output)?;
    let path = dir.join("summary.json");
    fs::write(&path, text + "\n").map_err(|e| CliError::output(format!("cannot write {}: {e}", path.display())))
}

pub fn equilibrium(scenario: &Scenario, out: Option<&Path>) -> Result<SummaryReport, CliError> {
    let (built, eq) = analyze(scenario)?;
    let report = base_report("equilibrium", &built, &eq);
    if let Some(dir) = out {
        write_summary(dir, &report)?;
    }
    Ok(report)
}

struct Simulation {
    classification: Classification,
    trajectory: TrajectoryRecord,
    samples: Option<Vec<LyapunovSample>>,
    monitor: Option<MonitorReport>,
    with_w: bool,
}

fn run_simulation(scenario: &Scenario, built: &Built, eq: &EquilibriumSet) -> Result<Simulation, CliError> {
    let model = &built.model;
    let free = infection_free(&model.grid, &model.params);
    let ic = scenario
        .initial
        .realize(model, &free)
        .map_err(|e| CliError::input(format!("initial: {e}")))?;
    let classification = classify_initial(&ic, model);
    let run = &scenario.run;
    let with_w = run.record_w && eq.endemic.is_some();
    let observe = run.record_u || with_w || run.monitor;
    let (trajectory, samples) = if observe {
        let mut recorder = LyapunovRecorder::new(eq.clone(), model)?;
        recorder.record_w = with_w;
        let t = simulate(&ic, model, run.t_end, &mut [&mut recorder])?;
        (t, Some(recorder.samples))
    } else {
        (simulate(&ic, model, run.t_end, &mut [])?, None)
    };
    let monitor = match (&samples, run.monitor) {
        (Some(s), true) => Some(monotonicity_monitor(s, model.delta(), built.tolerance)),
        _ => None,
    };
    Ok(Simulation {
        classification,
        trajectory,
        samples,
        monitor,
        with_w,
    })
}

fn convergence(sim: &Simulation, eq: &EquilibriumSet, tolerance: f64) -> ConvergenceBlock {
    let tr = &sim.trajectory;
    let n = tr.len() - 1;
    let (f, s) = (tr.force[n], &tr.susceptibles[n]);
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let d0 = s.iter().zip(&eq.s0).map(|(a, b)| rel(*a, *b)).fold(f.abs(), f64::max);
    let dbar = eq
        .endemic
        .as_ref()
        .map(|e| s.iter().zip(&e.sbar).map(|(a, b)| rel(*a, *b)).fold(rel(f, e.fbar), f64::max));
    let converged_to = if d0 <= tolerance {
        Verdict::P0
    } else if dbar.is_some_and(|d| d <= tolerance) {
        Verdict::Pbar
    } else {
        Verdict::Undecided
    };
    ConvergenceBlock {
        t_end: tr.times[n],
        f_end: f,
        s_end: s.clone(),
        distance_to_p0: d0,
        distance_to_pbar: dbar,
        tolerance,
        converged_to,
    }
}

fn write_trajectory(dir: &Path, sim: &Simulation, record_u: bool) -> Result<(), CliError> {
    let tr = &sim.trajectory;
    let m = tr.susceptibles.first().map_or(0, Vec::len);
    let with_u = record_u && sim.samples.is_some();
    let with_w = sim.with_w && sim.samples.is_some();
    let path = dir.join("trajectory.csv");
    let mut w = csv::Writer::from_path(&path).map_err(CliError::output)?;
    let mut header = vec!["t".to_string(), "F".to_string()];
    header.extend((1..=m).map(|j| format!("S_{j}")));
    if with_u {
        header.extend(["U".to_string(), "dU_analytic".to_string()]);
    }
    if with_w {
        header.extend(["W".to_string(), "dW_bound".to_string()]);
    }
    w.write_record(&header).map_err(CliError::output)?;

    let mut by_step: Vec<Option<&LyapunovSample>> = vec![None; tr.len()];
    for s in sim.samples.iter().flatten() {
        if let Some(slot) = by_step.get_mut(s.step) {
            *slot = Some(s);
        }
    }
    let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
    for n in 0..tr.len() {
        let mut row = Vec::with_capacity(header.len());
        row.push(fmt_float(tr.times[n]));
        row.push(fmt_float(tr.force[n]));
        row.extend(tr.susceptibles[n].iter().map(|v| fmt_float(*v)));
        let sample = by_step[n];
        if with_u {
            row.push(opt(sample.map(|s| s.u)));
            row.push(opt(sample.map(|s| s.du_analytic)));
        }
        if with_w {
            row.push(opt(sample.and_then(|s| s.w)));
            row.push(opt(sample.and_then(|s| s.dw_bound)));
        }
        w.write_record(&row).map_err(CliError::output)?;
    }
    w.flush().map_err(CliError::output)
}

/// Class table and sampled kernel, enough to recompute `R0` offline.
fn write_inputs(dir: &Path, built: &Built, eq: &EquilibriumSet) -> Result<(), CliError> {
    let model = &built.model;
    let mut w = csv::Writer::from_path(dir.join("classes.csv")).map_err(CliError::output)?;
    w.write_record(["class", "weight", "eta", "lambda", "S0"]).map_err(CliError::output)?;
    for (j, c) in model.grid.classes().iter().enumerate() {
        w.write_record([
            (j + 1).to_string(),
            fmt_float(c.weight),
            fmt_float(c.eta),
            fmt_float(c.lambda),
            fmt_float(eq.s0[j]),
        ])
        .map_err(CliError::output)?;
    }
    w.flush().map_err(CliError::output)?;

    let mut w = csv::Writer::from_path(dir.join("kernel.csv")).map_err(CliError::output)?;
    w.write_record(["k", "tau", "A"]).map_err(CliError::output)?;
    for (k, a) in model.kernel.samples().iter().enumerate() {
        w.write_record([k.to_string(), fmt_float(k as f64 * model.delta()), fmt_float(*a)])
            .map_err(CliError::output)?;
    }
    w.flush().map_err(CliError::output)
}

fn simulate_and_report(
    command: &'static str,
    scenario: &Scenario,
    out: Option<&Path>,
) -> Result<(SummaryReport, Built, EquilibriumSet), CliError> {
    let (built, eq) = analyze(scenario)?;
    let sim = run_simulation(scenario, &built, &eq)?;
    let mut report = base_report(command, &built, &eq);
    report.classification = Some(sim.classification);
    report.convergence = Some(convergence(&sim, &eq, scenario.tolerances.convergence));
    report.monitor = sim.monitor.clone().map(|r| MonitorBlock {
        u_certified: r.intervals > 0 && r.u_certified(),
        w_certified: r.w_certified(),
        report: r,
    });
    if let Some(dir) = out {
        create_dir(dir)?;
        write_trajectory(dir, &sim, scenario.run.record_u)?;
        write_inputs(dir, &built, &eq)?;
    }
    Ok((report, built, eq))
}

pub fn run(scenario: &Scenario, out: &Path) -> Result<SummaryReport, CliError> {
    let (report, _, _) = simulate_and_report("run", scenario, Some(out))?;
    write_summary(out, &report)?;
    Ok(report)
}

fn expected_verdict(eq: &EquilibriumSet, class: Option<Classification>) -> Verdict {
    if eq.r0 <= 1.0 || class == Some(Classification::Boundary) {
        Verdict::P0
    } else {
        Verdict::Pbar
    }
}

pub fn certify(scenario: &Scenario, out: Option<&Path>) -> Result<(SummaryReport, Status), CliError> {
    let mut scenario = scenario.clone();
    scenario.run.record_u = true;
    scenario.run.record_w = true;
    scenario.run.monitor = true;
    let (mut report, built, eq) = simulate_and_report("certify", &scenario, out)?;
    let model = &built.model;

    if model.classes() <= 2 {
        report
            .oracles
            .push(closed_form_equilibrium_check(&model.grid, &model.params, &model.kernel)?);
    }
    if model.grid.classes().iter().all(|c| c.eta == 1.0) {
        let free = infection_free(&model.grid, &model.params);
        let ic = scenario
            .initial
            .realize(model, &free)
            .map_err(|e| CliError::input(format!("initial: {e}")))?;
        report
            .oracles
            .push(homogeneous_reduction_check(model, &ic, scenario.run.t_end)?);
    }
    if let Some(r) = &scenario.run.refinement {
        let study = RefinementScenario {
            grid: model.grid.clone(),
            params: model.params,
            family: scenario.kernel.clone(),
            profile: scenario.initial.clone(),
            t_end: r.t_end,
            corrector: model.corrector,
        };
        report.oracles.push(refinement_study(&study, model.delta(), r.levels)?);
    }

    let expected = expected_verdict(&eq, report.classification);
    let mut failures = Vec::new();
    match &report.monitor {
        Some(mb) if expected == Verdict::P0 && !mb.u_certified => failures.push(format!(
            "U monitor: {} violations over {} intervals (tol {:e})",
            mb.report.u_violations, mb.report.intervals, mb.report.tol
        )),
        Some(mb) if expected == Verdict::Pbar && !mb.w_certified => failures.push(format!(
            "W monitor: {} increases, {} bound excesses, {} positive bounds, {} Jensen violations over {} intervals",
            mb.report.w_violations,
            mb.report.w_bound_violations,
            mb.report.dw_bound_positive,
            mb.report.jensen_violations,
            mb.report.w_intervals
        )),
        None => failures.push("no monitor report".to_string()),
        _ => {}
    }
    for o in report.oracles.iter().filter(|o| !o.pass) {
        failures.push(format!("oracle {} failed: max error {:e} (tolerance {:e})", o.name, o.max_abs_err, o.tolerance));
    }
    let got = report.convergence.as_ref().map(|c| c.converged_to);
    if got != Some(expected) {
        failures.push(format!(
            "expected convergence to {}, got {}",
            expected.as_str(),
            got.map_or("none", Verdict::as_str)
        ));
    }
    let status = if failures.is_empty() {
        Status::Ok
    } else {
        Status::CertificationFailed
    };
    report.certification = Some(CertificationBlock {
        certified: failures.is_empty(),
        expected,
        failures,
    });
    if let Some(dir) = out {
        write_summary(dir, &report)?;
    }
    Ok((report, status))
}

/// One row of `sweep_index.csv`.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub values: Vec<f64>,
    pub r0: Option<f64>,
    pub fbar: Option<f64>,
    pub classification: Option<Classification>,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

fn sweep_point(
    base: &toml::Table,
    fields: &[String],
    index: usize,
    values: &[f64],
    overrides: (Option<f64>, Option<f64>),
    dir: &Path,
) -> SweepPoint {
    let mut point = SweepPoint {
        index,
        values: values.to_vec(),
        r0: None,
        fbar: None,
        classification: None,
        verdict: None,
        error: None,
    };
    let result = (|| {
        let mut doc = base.clone();
        for (field, v) in fields.iter().zip(values) {
            set_path(&mut doc, field, *v)?;
        }
        let scenario = Scenario::from_table(doc)?.with_overrides(overrides.0, overrides.1)?;
        run(&scenario, dir)
    })();
    match result {
        Ok(report) => {
            point.r0 = Some(report.r0);
            point.fbar = report.equilibria.endemic.as_ref().map(|e| e.fbar);
            point.classification = report.classification;
            point.verdict = report.convergence.as_ref().map(|c| c.converged_to);
        }
        Err(e) => point.error = Some(e.to_string()),
    }
    point
}

pub fn sweep(
    text: &str,
    out: &Path,
    overrides: (Option<f64>, Option<f64>),
) -> Result<Vec<SweepPoint>, CliError> {
    let scenario = Scenario::from_toml_str(text)?;
    let axes = scenario
        .sweep
        .as_ref()
        .map(|s| s.axes.clone())
        .ok_or_else(|| CliError::input("sweep: the config has no [sweep] table"))?;
    if axes.is_empty() {
        return Err(CliError::input("sweep.axes: no sweep axes given"));
    }
    let mut base: toml::Table = toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))?;
    base.remove("sweep");
    let fields: Vec<String> = axes.iter().map(|a| a.field.clone()).collect();
    let values = axes.iter().map(|a| a.points()).collect::<Result<Vec<_>, _>>()?;
    for (field, v) in fields.iter().zip(&values) {
        set_path(&mut base.clone(), field, v[0])?;
    }

    create_dir(out)?;
    let grid = cartesian(&values);
    let dirs: Vec<(usize, PathBuf)> = (0..grid.len())
        .map(|i| (i, out.join("points").join(format!("point_{i:04}"))))
        .collect();
    let points = batch::map(&dirs, |(i, dir)| sweep_point(&base, &fields, *i, &grid[*i], overrides, dir));
    write_index(out, &fields, &points)?;
    Ok(points)
}

fn write_index(out: &Path, fields: &[String], points: &[SweepPoint]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(out.join("sweep_index.csv")).map_err(CliError::output)?;
    let mut header = vec!["point".to_string()];
    header.extend(fields.iter().cloned());
    header.extend(["R0", "Fbar", "classification", "verdict", "status", "error"].map(String::from));
    w.write_record(&header).map_err(CliError::output)?;
    for p in points {
        let mut row = vec![format!("{:04}", p.index)];
        row.extend(p.values.iter().map(|v| fmt_float(*v)));
        row.push(p.r0.map(fmt_float).unwrap_or_default());
        row.push(p.fbar.map(fmt_float).unwrap_or_default());
        row.push(p.classification.map(|c| format!("{c:?}")).unwrap_or_default());
        row.push(p.verdict.map(|v| v.as_str().to_string()).unwrap_or_default());
        row.push(if p.error.is_some() { "error" } else { "ok" }.to_string());
        row.push(p.error.clone().unwrap_or_default());
        w.write_record(&row).map_err(CliError::output)?;
    }
    w.flush().map_err(CliError::output)
}
