//! Runs a validated scenario: integrates the flow, evaluates each requested
//! diagnostic and writes the artifacts.

use std::fs;
use std::path::Path;

use contact_core::dynamics::{
    integrate, measure_weight_with, predicted_hamiltonian, variational_flow, Trajectory, VariationalTrajectory,
};
use contact_core::hamilton_jacobi::{hj_residual, riccati_field};
use contact_core::model::{ExtendedState, ModelKind, ScalarFunction};
use contact_core::oscillator::{g_invariant, lewis_invariant, solve_ermakov, solve_riccati, uniform_grid, ErmakovSolution};
use contact_core::transforms::{sample_points, verify, ProbeBox};
use contact_core::{ContactError, Result as CoreResult};

use crate::error::CliError;
use crate::plot::render_svg;
use crate::report::{trajectory_csv, DiagnosticResult, PlotData, Report, Series};
use crate::scenario::{scenario_map, DiagnosticKind, DiagnosticSpec, MapName, ScenarioConfig};

/// `|H|` below this value is excluded from the invariant-measure check.
pub const MEASURE_FLOOR: f64 = 1e-3;
/// Dissipation rates below this fraction of the peak rate are excluded from the relative check.
pub const RATE_FLOOR: f64 = 1e-3;
pub const ERMAKOV_RESIDUAL_LIMIT: f64 = 1e-7;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub trajectory: Trajectory,
    pub report: Report,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.report.pass()
    }
}

/// Ermakov solution with `alpha(t0) = 1`, `alpha'(t0) = 0` on a fine uniform grid.
pub fn ermakov_for(frequency: &ScalarFunction, gamma: f64, t0: f64, t1: f64) -> CoreResult<ErmakovSolution> {
    solve_ermakov(frequency.clone(), gamma, 1.0, 0.0, &uniform_grid(t0, t1, grid_size(t0, t1)))
}

fn grid_size(t0: f64, t1: f64) -> usize {
    (((t1 - t0) * 400.0).ceil() as usize + 1).max(2001)
}

fn relative(value: f64, reference: f64) -> f64 {
    if reference != 0.0 {
        (value - reference).abs() / reference.abs()
    } else {
        value.abs()
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v) })
}

fn time_plot(title: &str, y_label: &str, log_y: bool, series: Vec<Series>) -> PlotData {
    PlotData { title: title.into(), x_label: "t".into(), y_label: y_label.into(), log_y, series }
}

fn series(label: &str, x: &[f64], y: Vec<f64>) -> Series {
    Series { label: label.into(), x: x.to_vec(), y }
}

struct Context<'a> {
    config: &'a ScenarioConfig,
    options: RunOptions,
    variational: Option<VariationalTrajectory>,
}

impl Context<'_> {
    fn variational(&mut self) -> CoreResult<&VariationalTrajectory> {
        if self.variational.is_none() {
            let c = self.config;
            self.variational = Some(variational_flow(&c.integrated, &c.initial, c.t_end(), &c.options)?);
        }
        Ok(self.variational.as_ref().expect("just computed"))
    }

    fn frequency(&self) -> CoreResult<(f64, f64, ScalarFunction)> {
        match self.config.model.kind() {
            ModelKind::DampedParametric { mass, gamma, frequency } => Ok((*mass, *gamma, frequency.clone())),
            _ => Err(ContactError::Unsupported("diagnostic needs a damped_parametric model".into())),
        }
    }
}

/// Integrates `config` and evaluates its diagnostics.
pub fn run_scenario(config: &ScenarioConfig, options: RunOptions) -> Result<Outcome, CliError> {
    let mut trajectory = integrate(&config.integrated, &config.initial, config.t_end(), &config.options)?;
    let mut ctx = Context { config, options, variational: None };
    let mut diagnostics = Vec::with_capacity(config.diagnostics().len());
    for spec in config.diagnostics() {
        diagnostics.push(run_diagnostic(&mut ctx, spec, &mut trajectory)?);
    }
    let report = Report {
        scenario: config.name().to_string(),
        model: config.integrated.name().to_string(),
        seed: options.seed,
        diagnostics,
    };
    Ok(Outcome { trajectory, report })
}

fn run_diagnostic(ctx: &mut Context<'_>, spec: &DiagnosticSpec, traj: &mut Trajectory) -> CoreResult<DiagnosticResult> {
    let threshold = spec.threshold();
    match spec.kind {
        DiagnosticKind::HamiltonianDecay => hamiltonian_decay(ctx, traj, threshold),
        DiagnosticKind::EnergyConservation => Ok(energy_conservation(traj, threshold)),
        DiagnosticKind::EnergyDissipation => energy_dissipation(ctx, traj, threshold),
        DiagnosticKind::Divergence => divergence_check(ctx, threshold),
        DiagnosticKind::Measure => measure_check(ctx, threshold),
        DiagnosticKind::Invariants => invariants_check(ctx, traj, threshold),
        DiagnosticKind::HjResidual => hj_check(ctx, spec, threshold),
        DiagnosticKind::TransformVerify => transform_check(ctx, spec, threshold),
    }
}

fn hamiltonian_decay(ctx: &Context<'_>, traj: &Trajectory, threshold: f64) -> CoreResult<DiagnosticResult> {
    let predicted = predicted_hamiltonian(&ctx.config.model, traj)?;
    let h = traj.hamiltonian();
    let deviation: Vec<f64> = h.iter().zip(&predicted).map(|(v, p)| relative(*v, *p)).collect();
    let t = traj.times();
    Ok(DiagnosticResult::new(DiagnosticKind::HamiltonianDecay, threshold, max_of(deviation.iter().copied()))
        .detail("initial_hamiltonian", h[0])
        .detail("final_hamiltonian", *h.last().expect("non-empty"))
        .plot(time_plot(
            "Hamiltonian decay",
            "H",
            false,
            vec![series("H(t)", t, h.clone()), series("predicted", t, predicted)],
        )))
}

fn energy_conservation(traj: &Trajectory, threshold: f64) -> DiagnosticResult {
    let h = traj.hamiltonian();
    let drift: Vec<f64> = h.iter().map(|v| relative(*v, h[0])).collect();
    let divergence = max_of(traj.divergence().iter().map(|d| d.abs()));
    DiagnosticResult::new(DiagnosticKind::EnergyConservation, threshold, max_of(drift.iter().copied()))
        .detail("initial_hamiltonian", h[0])
        .detail("max_abs_divergence", divergence)
        .plot(time_plot("Energy drift", "|H - H0| / |H0|", true, vec![series("drift", traj.times(), drift)]))
}

fn energy_dissipation(ctx: &Context<'_>, traj: &Trajectory, threshold: f64) -> CoreResult<DiagnosticResult> {
    let split = ctx
        .config
        .model
        .split()
        .ok_or_else(|| ContactError::Unsupported("model exposes no mechanical/dissipative split".into()))?;
    let points: Vec<ExtendedState> = traj.points().collect();
    if points.len() < 5 {
        return Err(ContactError::TooFewSamples { needed: 5, got: points.len() });
    }
    let mechanical = points.iter().map(|x| split.mechanical.eval(x)).collect::<CoreResult<Vec<_>>>()?;
    let exact = points
        .iter()
        .map(|x| {
            let d = split.mechanical.partials(x)?;
            let slope = split.dissipation.derivative(x.s());
            Ok(d.dh_dt - slope * x.p().iter().zip(&d.dh_dp).map(|(p, v)| p * v).sum::<f64>())
        })
        .collect::<CoreResult<Vec<_>>>()?;
    let t = traj.times();
    let peak = max_of(exact.iter().map(|r| r.abs()));
    let mut errors = Vec::new();
    let mut error_times = Vec::new();
    for i in 2..points.len() - 2 {
        let h = (t[i + 2] - t[i - 2]) / 4.0;
        let fd = (-mechanical[i + 2] + 8.0 * mechanical[i + 1] - 8.0 * mechanical[i - 1] + mechanical[i - 2]) / (12.0 * h);
        if exact[i].abs() >= RATE_FLOOR * peak && peak > 0.0 {
            errors.push(relative(fd, exact[i]));
            error_times.push(t[i]);
        }
    }
    let observed = if errors.is_empty() { f64::NAN } else { max_of(errors.iter().copied()) };
    Ok(DiagnosticResult::new(DiagnosticKind::EnergyDissipation, threshold, observed)
        .detail("checked_samples", errors.len() as f64)
        .detail("peak_rate", peak)
        .plot(time_plot("Mechanical energy dissipation", "relative rate error", true, vec![series("error", &error_times, errors)])))
}

fn predicted_determinants(times: &[f64], divergence: &[f64]) -> Vec<f64> {
    let mut integral = 0.0;
    let mut out = vec![1.0];
    for i in 1..times.len() {
        integral += 0.5 * (times[i] - times[i - 1]) * (divergence[i] + divergence[i - 1]);
        out.push(integral.exp());
    }
    out
}

fn divergence_check(ctx: &mut Context<'_>, threshold: f64) -> CoreResult<DiagnosticResult> {
    let vt = ctx.variational()?;
    let t = vt.trajectory.times();
    let div = vt.trajectory.divergence();
    let predicted = predicted_determinants(t, &div);
    let observed = max_of(vt.determinants.iter().zip(&predicted).map(|(d, p)| relative(*d, *p)));
    Ok(DiagnosticResult::new(DiagnosticKind::Divergence, threshold, observed)
        .detail("max_abs_divergence", max_of(div.iter().map(|d| d.abs())))
        .detail("final_determinant", *vt.determinants.last().expect("non-empty"))
        .detail("final_predicted", *predicted.last().expect("non-empty"))
        .plot(time_plot(
            "Phase-space volume",
            "det",
            false,
            vec![series("flow determinant", t, vt.determinants.clone()), series("exp(int div)", t, predicted)],
        )))
}

fn measure_check(ctx: &mut Context<'_>, threshold: f64) -> CoreResult<DiagnosticResult> {
    let model = ctx.config.integrated.clone();
    let vt = ctx.variational()?;
    let mut times = Vec::new();
    let mut products = Vec::new();
    for (x, det) in vt.trajectory.points().zip(&vt.determinants) {
        match measure_weight_with(&model, &x, MEASURE_FLOOR) {
            Ok(w) => {
                times.push(x.t());
                products.push(w * det);
            }
            Err(ContactError::SingularMeasure { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let skipped = vt.determinants.len() - products.len();
    let (observed, normalized) = match products.first() {
        Some(&reference) => {
            let normalized: Vec<f64> = products.iter().map(|v| v / reference).collect();
            (max_of(normalized.iter().map(|v| (v - 1.0).abs())), normalized)
        }
        None => (f64::NAN, Vec::new()),
    };
    Ok(DiagnosticResult::new(DiagnosticKind::Measure, threshold, observed)
        .detail("checked_samples", products.len() as f64)
        .detail("skipped_samples", skipped as f64)
        .plot(time_plot("Invariant measure", "|H|^-(n+1) det / initial", false, vec![series("weighted volume", &times, normalized)])))
}

fn drift(values: &[f64]) -> Vec<f64> {
    values.iter().map(|v| relative(*v, values[0])).collect()
}

fn invariants_check(ctx: &Context<'_>, traj: &mut Trajectory, threshold: f64) -> CoreResult<DiagnosticResult> {
    let (m, gamma, frequency) = ctx.frequency()?;
    let erm = ermakov_for(&frequency, gamma, ctx.config.initial.t(), ctx.config.t_end())?;
    if traj.invariant("lewis").is_none() {
        traj.attach_invariant("lewis", |x| lewis_invariant(m, gamma, &erm, x))?;
        traj.attach_invariant("g", |x| g_invariant(gamma, x))?;
    }
    let lewis = drift(&traj.invariant("lewis").expect("attached"));
    let g = drift(&traj.invariant("g").expect("attached"));
    let (lewis_max, g_max) = (max_of(lewis.iter().copied()), max_of(g.iter().copied()));
    let t = traj.times();
    Ok(DiagnosticResult::new(DiagnosticKind::Invariants, threshold, lewis_max.max(g_max))
        .detail("lewis_drift", lewis_max)
        .detail("g_drift", g_max)
        .require("ermakov_residual", erm.residual_max(), ERMAKOV_RESIDUAL_LIMIT)
        .plot(time_plot(
            "Invariant drift",
            "relative drift",
            true,
            vec![series("Lewis invariant", t, lewis), series("G invariant", t, g)],
        )))
}

fn hj_check(ctx: &Context<'_>, spec: &DiagnosticSpec, threshold: f64) -> CoreResult<DiagnosticResult> {
    let (m, gamma, frequency) = ctx.frequency()?;
    let (t0, t1) = (ctx.config.initial.t(), ctx.config.t_end());
    let c0 = spec.c0.unwrap_or(1.0);
    let n = spec.grid.unwrap_or(50);
    let [q_lo, q_hi] = spec.q_range.unwrap_or([-2.0, 2.0]);
    let ric = solve_riccati(frequency, gamma, c0, &uniform_grid(t0, t1, grid_size(t0, t1)))?;
    let field = riccati_field(m, &ric);
    let (qs, ts) = (uniform_grid(q_lo, q_hi, n), uniform_grid(t0, t1, n));
    let mut worst_per_t = Vec::with_capacity(n);
    for &t in &ts {
        let row = qs.iter().map(|&q| Ok(hj_residual(&ctx.config.model, &field, &[q], t)?.abs())).collect::<CoreResult<Vec<_>>>()?;
        worst_per_t.push(max_of(row));
    }
    Ok(DiagnosticResult::new(DiagnosticKind::HjResidual, threshold, max_of(worst_per_t.iter().copied()))
        .detail("c0", c0)
        .detail("grid_points", (n * n) as f64)
        .plot(time_plot("Contact Hamilton-Jacobi residual", "max over q", true, vec![series("residual", &ts, worst_per_t)])))
}

fn transform_check(ctx: &Context<'_>, spec: &DiagnosticSpec, threshold: f64) -> CoreResult<DiagnosticResult> {
    let config = ctx.config;
    let name = spec.map.expect("validated");
    let map = scenario_map(config, name).map_err(|e| ContactError::Unsupported(e.to_string()))?;
    let mut bounds = ProbeBox { t: (config.initial.t(), config.t_end()), ..ProbeBox::default() };
    if name == MapName::Invariants {
        bounds.q = (0.3, 2.0);
    }
    let points = sample_points(1, spec.points.unwrap_or(100), &bounds, ctx.options.seed);
    let report = verify(&map, &points, threshold)?;
    let gamma = config.gamma();
    let mut samples: Vec<(f64, f64)> = report.points.iter().map(|c| (c.point.t(), c.factor)).collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let expected = |t: f64| if name == MapName::Identity { 1.0 } else { (gamma * t).exp() };
    let factor_error = max_of(samples.iter().map(|&(t, f)| (f - expected(t)).abs()));
    let (times, factors): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
    let expected_curve: Vec<f64> = times.iter().map(|&t| expected(t)).collect();
    let mut result = DiagnosticResult::new(DiagnosticKind::TransformVerify, threshold, report.max_residual)
        .detail("min_abs_factor", report.min_abs_factor)
        .require("factor_error", factor_error, threshold)
        .samples("t", times.clone())
        .samples("factor", factors.clone())
        .plot(time_plot(
            &format!("Conformal factor of the {name} map"),
            "f",
            false,
            vec![series("recovered f", &times, factors), series("expected", &times, expected_curve)],
        ));
    result.pass &= report.pass;
    Ok(result)
}

fn phase_portrait(traj: &Trajectory) -> PlotData {
    let q: Vec<f64> = traj.states().iter().map(|s| s.q()[0]).collect();
    let p: Vec<f64> = traj.states().iter().map(|s| s.p()[0]).collect();
    PlotData {
        title: "Phase portrait".into(),
        x_label: "q".into(),
        y_label: "p".into(),
        log_y: false,
        series: vec![Series { label: "trajectory".into(), x: q, y: p }],
    }
}

/// File name and SVG text of every plot the outcome produces.
pub fn plot_files(outcome: &Outcome) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = outcome
        .report
        .diagnostics
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.plot.as_ref().map(|p| (format!("{:02}_{}.svg", i + 1, d.name()), render_svg(p))))
        .collect();
    files.push(("phase_portrait.svg".into(), render_svg(&phase_portrait(&outcome.trajectory))));
    files
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes the trajectory table, the report and the plots into `dir`.
pub fn write_outputs(config: &ScenarioConfig, outcome: &Outcome, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let output = &config.file.output;
    write(&dir.join(&output.trajectory), &trajectory_csv(&outcome.trajectory))?;
    write(&dir.join(&output.report), &outcome.report.to_toml())?;
    if output.plots {
        for (name, svg) in plot_files(outcome) {
            write(&dir.join(name), &svg)?;
        }
    }
    Ok(())
}
