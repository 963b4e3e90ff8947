//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Reference values are computed here from closed forms, independently of the
//! library code under test.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use contact_core::dynamics::{
    divergence, flow_jacobian_determinant, integrate, integrate_at, measure_weight_with, variational_flow,
    IntegratorOptions, Trajectory,
};
use contact_core::hamilton_jacobi::{hj_residual, oscillator_family_field, riccati_field, verify_b_condition};
use contact_core::model::{
    make_caldirola_kanai, make_damped_parametric, make_linear_dissipation, ExtendedState, HamiltonianModel,
    ScalarFunction,
};
use contact_core::oscillator::{
    analytic_state_with, g_invariant, invariant_data, lewis_invariant, quadratic_invariant_coefficients,
    solve_ermakov, solve_riccati, solve_riccati_with, uniform_grid, AmplitudeConvention, ErmakovSolution,
    HjTrajectory, NewtonBasis, RiccatiMode,
};
use contact_core::transforms::{
    identity, map_ck, map_expanding, map_invariants, pushforward_hamiltonian, sample_points, verify, ContactMap,
    ProbeBox,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, summary: String) -> Outcome {
    if ok {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn oscillator(gamma: f64) -> HamiltonianModel {
    make_linear_dissipation(1.0, gamma, ScalarFunction::quadratic(1.0)).unwrap()
}

fn modulated() -> ScalarFunction {
    ScalarFunction::new("1 + 0.1 sin(0.3 t)", |t| 1.0 + 0.1 * (0.3 * t).sin(), |t| 0.03 * (0.3 * t).cos())
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn relative_drift(values: &[f64]) -> f64 {
    values.iter().map(|v| ((v - values[0]) / values[0]).abs()).fold(0.0, f64::max)
}

fn decay_trajectory(sample_interval: f64) -> Result<Trajectory, String> {
    let opts = IntegratorOptions::adaptive(1e-10, 1e-12).with_sample_interval(sample_interval);
    integrate(&oscillator(0.1), &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 20.0, &opts).map_err(fail)
}

fn hamiltonian_decay() -> Outcome {
    let start = Instant::now();
    let traj = decay_trajectory(0.1)?;
    let elapsed = start.elapsed().as_secs_f64();
    let h0 = 0.5;
    let worst = traj
        .times()
        .iter()
        .zip(traj.hamiltonian())
        .map(|(t, h)| (h / (h0 * (-0.1 * t).exp()) - 1.0).abs())
        .fold(0.0, f64::max);
    check(worst < 1e-6 && elapsed < 1.0, format!("max relative deviation {worst:.3e}, runtime {elapsed:.3} s"))
}

fn energy_dissipation() -> Outcome {
    let traj = decay_trajectory(0.01)?;
    let (t, states) = (traj.times(), traj.states());
    let mechanical: Vec<f64> = states.iter().map(|s| 0.5 * s.p()[0].powi(2) + 0.5 * s.q()[0].powi(2)).collect();
    let expected: Vec<f64> = states.iter().map(|s| -0.1 * s.p()[0].powi(2)).collect();
    let peak = expected.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 2..t.len() - 2 {
        if expected[i].abs() < 1e-3 * peak {
            continue;
        }
        let h = (t[i + 2] - t[i - 2]) / 4.0;
        let fd = (-mechanical[i + 2] + 8.0 * mechanical[i + 1] - 8.0 * mechanical[i - 1] + mechanical[i - 2]) / (12.0 * h);
        worst = worst.max((fd / expected[i] - 1.0).abs());
        checked += 1;
    }
    check(worst < 1e-5, format!("max relative error {worst:.3e} over {checked} interior samples"))
}

fn divergence_and_volume() -> Outcome {
    let gamma = 0.1;
    let model = oscillator(gamma);
    let exact = sample_points(1, 50, &ProbeBox::default(), 1)
        .iter()
        .all(|x| divergence(&model, x).unwrap() == -2.0 * gamma);
    let opts = IntegratorOptions::adaptive(1e-10, 1e-12);
    let det = flow_jacobian_determinant(&model, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 5.0, &opts).map_err(fail)?;
    let err = (det - (-1.0f64).exp()).abs();
    check(exact && err < 1e-5, format!("divergence exactly -2 gamma: {exact}; |det - e^-1| = {err:.3e}"))
}

fn invariant_measure() -> Outcome {
    let model = oscillator(0.1);
    let opts = IntegratorOptions::adaptive(1e-10, 1e-12).with_sample_interval(0.1);
    let vt = variational_flow(&model, &ExtendedState::point1(1.0, 0.0, 0.0, 0.0), 20.0, &opts).map_err(fail)?;
    let products: Vec<f64> = vt
        .trajectory
        .points()
        .zip(&vt.determinants)
        .filter_map(|(x, det)| measure_weight_with(&model, &x, 1e-3).ok().map(|w| w * det))
        .collect();
    let worst = relative_drift(&products);
    check(!products.is_empty() && worst < 1e-4, format!("weighted volume drift {worst:.3e} over {} samples", products.len()))
}

fn invariants() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (label, frequency) in [("omega = 1", ScalarFunction::constant(1.0)), ("modulated omega", modulated())] {
        let model = make_damped_parametric(1.0, 0.1, frequency.clone()).unwrap();
        let erm = solve_ermakov(frequency, 0.1, 1.0, 0.0, &uniform_grid(0.0, 10.0, 4001)).map_err(fail)?;
        let traj = integrate_at(
            &model,
            &ExtendedState::point1(1.0, 0.0, 0.3, 0.0),
            &uniform_grid(0.0, 10.0, 401)[1..],
            &IntegratorOptions::adaptive(1e-12, 1e-14),
        )
        .map_err(fail)?;
        let lewis: Vec<f64> = traj.points().map(|x| lewis_invariant(1.0, 0.1, &erm, &x).unwrap()).collect();
        let g: Vec<f64> = traj.points().map(|x| g_invariant(0.1, &x).unwrap()).collect();
        let (dl, dg, res) = (relative_drift(&lewis), relative_drift(&g), erm.residual_max());
        ok &= dl < 1e-6 && dg < 1e-6 && res < 1e-7;
        lines.push(format!("{label}: I drift {dl:.2e}, G drift {dg:.2e}, Ermakov residual {res:.2e}"));
    }
    check(ok, lines.join("; "))
}

fn invariant_route(erm: &ErmakovSolution, init: &ExtendedState, times: &[f64], convention: AmplitudeConvention) -> Result<Vec<f64>, String> {
    let data = invariant_data(1.0, 0.1, erm, init).map_err(fail)?;
    times
        .iter()
        .map(|&t| Ok(analytic_state_with(1.0, 0.1, erm, data.lewis, data.g, data.phase0, t, convention).map_err(fail)?.q()[0]))
        .collect()
}

fn three_routes() -> Outcome {
    let (m, gamma, b0, c0): (f64, f64, f64, f64) = (1.0, 0.1, 0.5, 0.2);
    let mut lines = Vec::new();
    let mut ok = true;
    for omega in [0.0, 1.0] {
        let q0 = (2.0 * b0 / m).sqrt();
        let init = ExtendedState::point1(q0, m * q0 * c0, 0.5 * m * c0 * q0 * q0, 0.0);
        let times = uniform_grid(0.0, 10.0, 201);
        let frequency = ScalarFunction::constant(omega);
        let model = make_damped_parametric(m, gamma, frequency.clone()).unwrap();
        let tight = IntegratorOptions::adaptive(1e-12, 1e-14);

        let direct = integrate_at(&model, &init, &times[1..], &tight).map_err(fail)?;
        let direct: Vec<f64> = direct.points().map(|x| x.q1()).collect();

        let map = map_expanding(m, gamma).map_err(fail)?;
        let pushed = pushforward_hamiltonian(&map, &model).map_err(fail)?;
        let image = integrate_at(&pushed, &map.apply(&init).map_err(fail)?, &times[1..], &tight).map_err(fail)?;
        let expanding: Vec<f64> = image.points().map(|y| map.invert(&y).unwrap().q1()).collect();

        let erm = solve_ermakov(frequency.clone(), gamma, 1.0, 0.0, &uniform_grid(0.0, 10.0, 4001)).map_err(fail)?;
        let invariant = invariant_route(&erm, &init, &times, AmplitudeConvention::Consistent)?;
        let printed = invariant_route(&erm, &init, &times, AmplitudeConvention::PrintedExponent)?;

        let ric = solve_riccati_with(frequency, gamma, c0, &uniform_grid(0.0, 10.0, 4001), RiccatiMode::Linearized).map_err(fail)?;
        let hj_route = HjTrajectory::new(m, gamma, b0, c0, &ric).map_err(fail)?;
        let hj = times.iter().map(|&t| hj_route.q(t)).collect::<Result<Vec<_>, _>>().map_err(fail)?;

        let routes = [&direct, &expanding, &invariant, &hj];
        let mut worst = 0.0f64;
        for i in 0..routes.len() {
            for j in i + 1..routes.len() {
                worst = worst.max(max_gap(routes[i], routes[j]));
            }
        }
        let printed_gap = max_gap(&printed, &direct);
        ok &= worst < 1e-5 && printed_gap > 1e-2;
        lines.push(format!("omega0 = {omega}: max pairwise gap {worst:.2e}, e^(+gamma t) form off by {printed_gap:.2e}"));
    }
    check(ok, lines.join("; "))
}

fn riccati_closed_form() -> Outcome {
    let (gamma, c0) = (0.1, 1.0);
    let grid = uniform_grid(0.0, 10.0, 2001);
    let ric = solve_riccati(ScalarFunction::zero(), gamma, c0, &grid).map_err(fail)?;
    let oracle = |t: f64| gamma / ((gamma / c0 + 1.0) * (gamma * t).exp() - 1.0);
    let mut err = 0.0f64;
    let mut link = 0.0f64;
    for &t in &grid {
        let c = ric.c(t).map_err(fail)?;
        err = err.max((c - oracle(t)).abs());
        link = link.max((c - ric.lambda_dot(t).map_err(fail)? / ric.lambda(t).map_err(fail)?).abs());
    }
    check(err < 1e-8 && link < 1e-7, format!("max |C - closed form| {err:.3e}, max |C - lambda'/lambda| {link:.3e}"))
}

fn hamilton_jacobi() -> Outcome {
    let (m, gamma) = (1.0, 0.1);
    let model = make_damped_parametric(m, gamma, ScalarFunction::zero()).unwrap();
    let ric = solve_riccati(ScalarFunction::zero(), gamma, 1.0, &uniform_grid(0.0, 5.0, 2001)).map_err(fail)?;
    let field = riccati_field(m, &ric);
    let mut residual = 0.0f64;
    for &t in &uniform_grid(0.0, 5.0, 50) {
        for &q in &uniform_grid(-2.0, 2.0, 50) {
            residual = residual.max(hj_residual(&model, &field, &[q], t).map_err(fail)?.abs());
        }
    }

    let c0 = 0.2;
    let basis = NewtonBasis::solve(ScalarFunction::zero(), gamma, &uniform_grid(0.0, 5.0, 2001)).map_err(fail)?;
    let family = oscillator_family_field(m, &basis, c0);
    let q0 = 1.0;
    let init = ExtendedState::point1(
        q0,
        family.gradient(&[q0], 0.0).map_err(fail)?[0],
        family.value(&[q0], 0.0).map_err(fail)?,
        0.0,
    );
    let opts = IntegratorOptions::adaptive(1e-11, 1e-13).with_sample_interval(0.01);
    let traj = integrate(&model, &init, 5.0, &opts).map_err(fail)?;
    let b = verify_b_condition(&model, &family, &[c0], &traj).map_err(fail)?;
    let b0 = b.b[0][0];
    let ratio = b.times.iter().zip(&b.b).map(|(t, v)| (v[0] / b0 - (-gamma * t).exp()).abs()).fold(0.0, f64::max);
    check(
        residual < 1e-8 && b.max_abs < 1e-6 && ratio < 1e-6,
        format!("HJ residual {residual:.3e} on 50x50 grid; b' + gamma b {:.3e}; |b/b0 - e^-gamma t| {ratio:.3e}", b.max_abs),
    )
}

fn squaring_map() -> ContactMap {
    ContactMap::new("squaring", 1, |x| ExtendedState::from_parts(vec![x.q1()], vec![x.p1() * x.p1()], x.s(), x.t()))
}

fn transformations() -> Outcome {
    let (m, gamma) = (1.0, 0.1);
    let erm = solve_ermakov(modulated(), gamma, 1.0, 0.0, &uniform_grid(0.0, 5.0, 2001)).map_err(fail)?;
    let general = sample_points(1, 100, &ProbeBox::default(), 42);
    let positive = sample_points(1, 100, &ProbeBox { q: (0.3, 2.0), ..ProbeBox::default() }, 43);
    let maps = [
        (map_ck(m, gamma).map_err(fail)?, &general),
        (map_expanding(m, gamma).map_err(fail)?, &general),
        (map_invariants(m, gamma, &erm).map_err(fail)?, &positive),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (map, points) in &maps {
        let report = verify(map, points, 1e-8).map_err(fail)?;
        let ferr = report.points.iter().map(|c| (c.factor - (gamma * c.point.t()).exp()).abs()).fold(0.0, f64::max);
        ok &= report.pass && report.max_residual < 1e-8 && ferr < 1e-8;
        lines.push(format!("{}: residual {:.1e}, factor error {ferr:.1e}", map.name(), report.max_residual));
    }
    let id = verify(&identity(1), &general, 1e-8).map_err(fail)?;
    let unit = id.points.iter().all(|c| c.factor == 1.0);
    let planted = verify(&squaring_map(), &general, 1e-8).map_err(fail)?;
    ok &= id.pass && unit && !planted.pass;
    lines.push(format!("identity f = 1 exactly: {unit}; planted map rejected: {}", !planted.pass));
    check(ok, lines.join("; "))
}

fn conservative_limit() -> Outcome {
    let init = ExtendedState::point1(1.0, 0.5, 0.2, 0.0);
    let opts = IntegratorOptions::fixed(1e-3).with_sample_interval(0.1);
    let models = [
        oscillator(0.0),
        make_linear_dissipation(1.0, 0.0, ScalarFunction::new("q^4/4", |q| q.powi(4) / 4.0, |q| q.powi(3))).unwrap(),
        make_damped_parametric(1.0, 0.0, ScalarFunction::constant(1.3)).unwrap(),
        make_caldirola_kanai(1.0, 0.0, ScalarFunction::quadratic(1.0)).unwrap(),
    ];
    let mut ok = true;
    let mut worst_drift = 0.0f64;
    for model in &models {
        let traj = integrate(model, &init, 10.0, &opts).map_err(fail)?;
        let h = traj.hamiltonian();
        worst_drift = worst_drift.max(relative_drift(&h));
        ok &= traj.divergence().iter().all(|d| *d == 0.0);
    }

    let gamma = 0.1;
    let times = uniform_grid(0.0, 10.0, 201);
    let tight = IntegratorOptions::adaptive(1e-12, 1e-14);
    let start = ExtendedState::point1(1.0, 0.3, 0.0, 0.0);
    let contact = integrate_at(&oscillator(gamma), &start, &times[1..], &tight).map_err(fail)?;
    let ck = integrate_at(&make_caldirola_kanai(1.0, gamma, ScalarFunction::quadratic(1.0)).unwrap(), &start, &times[1..], &tight)
        .map_err(fail)?;
    let q_gap = max_gap(
        &contact.points().map(|x| x.q1()).collect::<Vec<_>>(),
        &ck.points().map(|x| x.q1()).collect::<Vec<_>>(),
    );
    ok &= worst_drift < 1e-8 && q_gap < 1e-6;
    check(ok, format!("max energy drift {worst_drift:.3e} over 10^4 RK4 steps, zero divergence: {ok}; CK vs contact q gap {q_gap:.3e}"))
}

fn coefficient_closure() -> Outcome {
    let m = 1.0;
    let mut worst = 0.0f64;
    for gamma in [0.0, 0.1, 0.5] {
        let erm = solve_ermakov(modulated(), gamma, 1.0, 0.0, &uniform_grid(0.0, 10.0, 10001)).map_err(fail)?;
        for zeta0 in [0.0, 1.0, 2.0] {
            let coefficients = |t: f64| quadratic_invariant_coefficients(m, gamma, zeta0, &erm, t);
            for i in 1..50 {
                let t = 0.2 * i as f64;
                let h = 1e-4;
                let (a, plus, minus) =
                    (coefficients(t).map_err(fail)?, coefficients(t + h).map_err(fail)?, coefficients(t - h).map_err(fail)?);
                let rate = |x: f64, y: f64| (x - y) / (2.0 * h);
                let om2 = modulated().eval(t).powi(2);
                let residuals = [
                    rate(plus.beta, minus.beta) - (2.0 * a.xi / m + 2.0 * gamma * a.beta - a.zeta / (2.0 * m)),
                    rate(plus.eta, minus.eta) - (-2.0 * m * om2 * a.xi + 0.5 * m * om2 * a.zeta),
                    rate(plus.xi, minus.xi) - (a.eta / m + gamma * a.xi - m * om2 * a.beta),
                    rate(plus.zeta, minus.zeta) - gamma * a.zeta,
                ];
                worst = residuals.iter().fold(worst, |acc, r| acc.max(r.abs()));
            }
        }
    }
    check(worst < 1e-6, format!("max coefficient ODE residual {worst:.3e}"))
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((path.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn cli_end_to_end() -> Outcome {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let mut files: Vec<PathBuf> = fs::read_dir(&scenarios).map_err(fail)?.map(|e| e.unwrap().path()).collect();
    files.sort();
    let tmp = tempfile::tempdir().map_err(fail)?;
    let start = Instant::now();
    let mut codes = Vec::new();
    for run in ["first", "second"] {
        let status = Command::new(env!("CARGO_BIN_EXE_contact"))
            .arg("run")
            .args(&files)
            .arg("--out")
            .arg(tmp.path().join(run))
            .output()
            .map_err(fail)?
            .status;
        codes.push(status.code().unwrap_or(-1));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let (a, b) = (snapshot(&tmp.path().join("first")), snapshot(&tmp.path().join("second")));
    let identical = !a.is_empty() && a == b;
    check(
        codes.iter().all(|c| *c == 0) && identical && elapsed < 30.0,
        format!("{} scenarios twice in {elapsed:.2} s, exit codes {codes:?}, {} files byte-identical: {identical}", files.len(), a.len()),
    )
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("hamiltonian decay", hamiltonian_decay),
        ("energy dissipation rate", energy_dissipation),
        ("divergence and volume", divergence_and_volume),
        ("invariant measure", invariant_measure),
        ("invariants", invariants),
        ("three-route agreement", three_routes),
        ("riccati closed form", riccati_closed_form),
        ("contact hamilton-jacobi", hamilton_jacobi),
        ("transformation verification", transformations),
        ("conservative limit", conservative_limit),
        ("quadratic invariant closure", coefficient_closure),
        ("cli end-to-end", cli_end_to_end),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(summary) => println!("PASS  {:>2}. {name}: {summary}", i + 1),
            Err(summary) => {
                failures += 1;
                println!("FAIL  {:>2}. {name}: {summary}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
